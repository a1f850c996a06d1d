//! Object-level train/test splits and the seeded validation hold-out.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::patches::{extract_patches, Patch, PatchOptions};
use crate::data::sample::SampleRecord;
use crate::error::{Error, Result};

pub const SPLIT_FILE: &str = "split.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Test,
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Test => "test",
        })
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "test" => Ok(Partition::Test),
            other => Err(Error::Data(format!("unknown partition {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train_objects: BTreeSet<String>,
    pub test_objects: BTreeSet<String>,
    pub val_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(
        train: impl IntoIterator<Item = impl Into<String>>,
        test: impl IntoIterator<Item = impl Into<String>>,
        val_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let spec = SplitSpec {
            train_objects: train.into_iter().map(Into::into).collect(),
            test_objects: test.into_iter().map(Into::into).collect(),
            val_fraction,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(o) = self.train_objects.intersection(&self.test_objects).next() {
            return Err(Error::OverlappingSets(o.clone()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidInput(format!(
                "validation fraction {} outside [0, 1)",
                self.val_fraction
            )));
        }
        Ok(())
    }

    pub fn partition_of(&self, object_id: &str) -> Result<Partition> {
        if self.train_objects.contains(object_id) {
            Ok(Partition::Train)
        } else if self.test_objects.contains(object_id) {
            Ok(Partition::Test)
        } else {
            Err(Error::UnassignedObject(object_id.to_string()))
        }
    }

    /// Builds a spec from `object<TAB>train|test` assignments.
    pub fn from_assignments(assignments: &[(String, Partition)], val_fraction: f64, seed: u64) -> Result<Self> {
        let mut seen: BTreeMap<&str, Partition> = BTreeMap::new();
        for (o, p) in assignments {
            if let Some(prev) = seen.insert(o, *p) {
                if prev != *p {
                    return Err(Error::OverlappingSets(o.clone()));
                }
            }
        }
        let pick = |want: Partition| {
            seen.iter()
                .filter(move |(_, p)| **p == want)
                .map(|(o, _)| o.to_string())
        };
        Self::new(pick(Partition::Train), pick(Partition::Test), val_fraction, seed)
    }
}

pub fn write_split_file(path: &Path, assignments: &[(String, Partition)]) -> Result<()> {
    let text: String = assignments.iter().map(|(o, p)| format!("{o}\t{p}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_split_file(path: &Path) -> Result<Vec<(String, Partition)>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let (object, part) = line
                .split_once('\t')
                .ok_or_else(|| Error::Data(format!("{}:{}: expected object<TAB>partition", path.display(), n + 1)))?;
            Ok((object.to_string(), part.trim_end().parse()?))
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct Splits {
    pub train: Vec<Patch>,
    pub val: Vec<Patch>,
    pub test: Vec<Patch>,
}

/// Splits samples by object, tiles them and holds out a seeded fraction of
/// the training patches for validation.
pub fn make_splits(samples: &[Arc<SampleRecord>], spec: &SplitSpec, patches: &PatchOptions) -> Result<Splits> {
    spec.validate()?;
    let mut train_all = Vec::new();
    let mut test = Vec::new();
    for s in samples {
        let tiles = extract_patches(s, patches)?;
        match spec.partition_of(&s.object_id)? {
            Partition::Train => train_all.extend(tiles),
            Partition::Test => test.extend(tiles),
        }
    }
    let (train, val) = hold_out(train_all, spec.val_fraction, spec.seed);

    let test_ids: BTreeSet<&str> = test.iter().map(|p| p.object_id()).collect();
    assert!(
        train.iter().chain(&val).all(|p| !test_ids.contains(p.object_id())),
        "object leaked across the train/test boundary"
    );
    Ok(Splits { train, val, test })
}

/// Moves `round(fraction * n)` items chosen by a seeded shuffle into the
/// second list. Both lists keep the input order.
pub fn hold_out<T>(items: Vec<T>, fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let n = items.len();
    let n_held = ((n as f64) * fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held = vec![false; n];
    for &i in &order[..n_held.min(n)] {
        held[i] = true;
    }
    let mut kept = Vec::with_capacity(n - n_held);
    let mut out = Vec::with_capacity(n_held);
    for (i, item) in items.into_iter().enumerate() {
        if held[i] {
            out.push(item);
        } else {
            kept.push(item);
        }
    }
    (kept, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample::{Condition, View};
    use crate::normals::NormalMap;
    use crate::polar::{Mask, PolarizedStack, PolarizerAngle};

    fn sample(object: &str, size: usize) -> Arc<SampleRecord> {
        Arc::new(SampleRecord {
            object_id: object.into(),
            condition: Condition::Indoor,
            view: View::Front,
            stack: PolarizedStack::new(size, size, PolarizerAngle::canonical(), vec![0.5; size * size * 4]).unwrap(),
            normals: NormalMap::constant(size, size, [0.0, 0.0, 1.0]),
            mask: Mask::full(size, size),
        })
    }

    #[test]
    fn no_validation_when_fraction_zero() {
        let spec = SplitSpec::new(["a"], Vec::<String>::new(), 0.0, 1).unwrap();
        let s = make_splits(&[sample("a", 128)], &spec, &PatchOptions::default()).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (4, 0, 0));
    }

    #[test]
    fn objects_stay_on_their_side() {
        let spec = SplitSpec::new(["a"], ["b"], 0.25, 1).unwrap();
        let s = make_splits(&[sample("a", 128), sample("b", 128)], &spec, &PatchOptions::default()).unwrap();
        assert!(s.train.iter().chain(&s.val).all(|p| p.object_id() == "a"));
        assert!(s.test.iter().all(|p| p.object_id() == "b"));
        assert_eq!(s.val.len(), 1);
    }

    #[test]
    fn hold_out_is_exact_and_stable() {
        let (kept, held) = hold_out((0..100).collect::<Vec<_>>(), 0.2, 42);
        assert_eq!(held.len(), 20);
        assert_eq!(kept.len(), 80);
        assert_eq!(hold_out((0..100).collect::<Vec<_>>(), 0.2, 42).1, held);
        assert_ne!(hold_out((0..100).collect::<Vec<_>>(), 0.2, 43).1, held);
    }

    #[test]
    fn unassigned_and_overlapping() {
        let spec = SplitSpec::new(["a"], ["b"], 0.0, 1).unwrap();
        assert!(matches!(
            make_splits(&[sample("c", 64)], &spec, &PatchOptions::default()),
            Err(Error::UnassignedObject(o)) if o == "c"
        ));
        assert!(matches!(
            SplitSpec::new(["a"], ["a"], 0.0, 1),
            Err(Error::OverlappingSets(_))
        ));
        assert!(SplitSpec::new(["a"], ["b"], 1.0, 1).is_err());
    }

    #[test]
    fn split_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(SPLIT_FILE);
        let a = vec![("x".to_string(), Partition::Train), ("y".to_string(), Partition::Test)];
        write_split_file(&path, &a).unwrap();
        assert_eq!(read_split_file(&path).unwrap(), a);
        let spec = SplitSpec::from_assignments(&a, 0.2, 0).unwrap();
        assert_eq!(spec.partition_of("y").unwrap(), Partition::Test);
    }
}
