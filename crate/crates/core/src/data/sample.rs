//! Sample directories: `<root>/<object_id>/<condition>/<view>/` holding
//! `stack.psfp` (H x W x 4), `normals.psfp` (H x W x 3) and `mask.png`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::png_io::{read_mask_png, write_mask_png};
use crate::data::raster::{read_raster, write_raster, Raster};
use crate::error::{Error, Result};
use crate::normals::NormalMap;
use crate::polar::{Mask, PolarizedStack, PolarizerAngle};

pub const STACK_FILE: &str = "stack.psfp";
pub const NORMALS_FILE: &str = "normals.psfp";
pub const MASK_FILE: &str = "mask.png";

/// Normals further than this from unit length are rejected on load.
pub const UNIT_TOLERANCE: f64 = 1e-3;
/// Normals within this of unit length are kept as stored.
const STORAGE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Indoor,
    Sunny,
    Cloudy,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Indoor, Condition::Sunny, Condition::Cloudy];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Indoor => "indoor",
            Condition::Sunny => "sunny",
            Condition::Cloudy => "cloudy",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown lighting condition {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum View {
    Front,
    Back,
    Left,
    Right,
}

impl View {
    pub const ALL: [View; 4] = [View::Front, View::Back, View::Left, View::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            View::Front => "front",
            View::Back => "back",
            View::Left => "left",
            View::Right => "right",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        View::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown view {s:?}")))
    }
}

/// One capture: polarized stack, ground-truth normals and foreground mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub object_id: String,
    pub condition: Condition,
    pub view: View,
    pub stack: PolarizedStack,
    pub normals: NormalMap,
    pub mask: Mask,
}

impl SampleRecord {
    pub fn height(&self) -> usize {
        self.stack.height()
    }

    pub fn width(&self) -> usize {
        self.stack.width()
    }

    /// Where this sample lives under a dataset root.
    pub fn dir_in(&self, root: &Path) -> PathBuf {
        root.join(&self.object_id)
            .join(self.condition.as_str())
            .join(self.view.as_str())
    }

    /// Identifies the sample as `object/condition/view`.
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.object_id, self.condition, self.view)
    }
}

pub fn write_sample(sample: &SampleRecord, dir: &Path) -> Result<()> {
    if sample.stack.channels() != 4 {
        return Err(Error::Data(format!(
            "sample stacks must have 4 channels, got {}",
            sample.stack.channels()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = (sample.height(), sample.width());
    let stack = Raster::from_f64_as_f32(h, w, 4, sample.stack.data())?;
    write_raster(&stack, &dir.join(STACK_FILE))?;
    write_normals_raster(&sample.normals, &dir.join(NORMALS_FILE))?;
    write_mask_png(&sample.mask, &dir.join(MASK_FILE))
}

/// Writes a normal field as an `H x W x 3` raster.
pub fn write_normals_raster(normals: &NormalMap, path: &Path) -> Result<()> {
    let flat: Vec<f64> = normals.data().iter().flatten().copied().collect();
    write_raster(
        &Raster::from_f64_as_f32(normals.height(), normals.width(), 3, &flat)?,
        path,
    )
}

/// Reads an `H x W x 3` raster as a normal field, without any unit-length check.
pub fn read_normals_raster(path: &Path) -> Result<NormalMap> {
    let r = read_raster(path)?;
    if r.channels() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "{}: expected 3 channels, got {r}",
            path.display()
        )));
    }
    let vectors = r.to_f64().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    NormalMap::new(r.height(), r.width(), vectors)
}

/// Loads the three arrays of a sample directory without interpreting its path.
pub fn read_sample_arrays(dir: &Path) -> Result<(PolarizedStack, NormalMap, Mask)> {
    for name in [STACK_FILE, NORMALS_FILE, MASK_FILE] {
        let p = dir.join(name);
        if !p.is_file() {
            return Err(Error::MissingFile(p));
        }
    }
    let stack_raster = read_raster(&dir.join(STACK_FILE))?;
    let normals_raster = read_raster(&dir.join(NORMALS_FILE))?;
    let mask = read_mask_png(&dir.join(MASK_FILE))?;
    if stack_raster.channels() != 4 || normals_raster.channels() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "{}: expected a 4-channel stack and 3-channel normals, got {stack_raster} and {normals_raster}",
            dir.display()
        )));
    }
    let (h, w) = (stack_raster.height(), stack_raster.width());
    if normals_raster.height() != h || normals_raster.width() != w {
        return Err(Error::DimensionMismatch(format!(
            "{}: stack is {h}x{w}, normals are {}x{}",
            dir.display(),
            normals_raster.height(),
            normals_raster.width()
        )));
    }
    mask.check_dims(h, w)?;
    let stack = PolarizedStack::new(h, w, PolarizerAngle::canonical(), stack_raster.to_f64())
        .map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?;
    let flat = normals_raster.to_f64();
    let mut vectors: Vec<[f64; 3]> = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    for (i, n) in vectors.iter_mut().enumerate() {
        if !mask.bits()[i] {
            continue;
        }
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if !((len - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(Error::NonUnitNormals {
                row: i / w,
                col: i % w,
                norm: len,
            });
        }
        if (len - 1.0).abs() > STORAGE_TOLERANCE {
            n.iter_mut().for_each(|c| *c /= len);
        }
    }
    Ok((stack, NormalMap::new(h, w, vectors)?, mask))
}

/// Loads a sample, taking its ids from the last three path components.
pub fn load_sample(dir: &Path) -> Result<SampleRecord> {
    let parts: Vec<String> = dir
        .components()
        .rev()
        .take(3)
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    if parts.len() < 3 {
        return Err(Error::Data(format!(
            "{} is not an <object>/<condition>/<view> directory",
            dir.display()
        )));
    }
    let view: View = parts[0].parse()?;
    let condition: Condition = parts[1].parse()?;
    let (stack, normals, mask) = read_sample_arrays(dir)?;
    Ok(SampleRecord {
        object_id: parts[2].clone(),
        condition,
        view,
        stack,
        normals,
        mask,
    })
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

/// All sample directories under a dataset root, in sorted order.
pub fn list_samples(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::MissingFile(root.to_path_buf()));
    }
    let mut out = Vec::new();
    for object in sorted_subdirs(root)? {
        for condition in sorted_subdirs(&object)? {
            for view in sorted_subdirs(&condition)? {
                if view.join(STACK_FILE).is_file() {
                    out.push(view);
                }
            }
        }
    }
    Ok(out)
}

/// Loads every sample under `root`.
pub fn load_dataset(root: &Path) -> Result<Vec<SampleRecord>> {
    list_samples(root)?.iter().map(|d| load_sample(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_sample() -> SampleRecord {
        let stack = PolarizedStack::new(
            1,
            2,
            PolarizerAngle::canonical(),
            vec![0.5, 0.25, 0.5, 0.75, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        SampleRecord {
            object_id: "cup".into(),
            condition: Condition::Sunny,
            view: View::Left,
            stack,
            normals: NormalMap::new(1, 2, vec![[0.0, 0.6, 0.8], [0.0; 3]]).unwrap(),
            mask: Mask::new(1, 2, vec![true, false]).unwrap(),
        }
    }

    #[test]
    fn sample_dir_round_trip() {
        let root = tempfile::tempdir().unwrap();
        let sample = tiny_sample();
        let dir = sample.dir_in(root.path());
        write_sample(&sample, &dir).unwrap();
        let loaded = load_sample(&dir).unwrap();
        assert_eq!(loaded.object_id, "cup");
        assert_eq!(loaded.condition, Condition::Sunny);
        assert_eq!(loaded.view, View::Left);
        assert_eq!(loaded.stack, sample.stack);
        assert_eq!(loaded.mask, sample.mask);
        for (a, b) in loaded.normals.data().iter().zip(sample.normals.data()) {
            for c in 0..3 {
                assert_eq!(a[c], b[c] as f32 as f64);
            }
        }
        assert_eq!(list_samples(root.path()).unwrap(), vec![dir]);
    }

    #[test]
    fn single_pixel_mask_is_valid() {
        let root = tempfile::tempdir().unwrap();
        let sample = tiny_sample();
        write_sample(&sample, root.path()).unwrap();
        let (_, _, mask) = read_sample_arrays(root.path()).unwrap();
        assert_eq!(mask.count(), 1);
    }

    #[test]
    fn non_unit_normals_rejected() {
        let root = tempfile::tempdir().unwrap();
        let mut sample = tiny_sample();
        sample.normals.set(0, 0, [2.0, 0.0, 0.0]);
        write_sample(&sample, root.path()).unwrap();
        assert!(matches!(
            read_sample_arrays(root.path()),
            Err(Error::NonUnitNormals { row: 0, col: 0, .. })
        ));
    }

    #[test]
    fn nearly_unit_normals_renormalized() {
        let root = tempfile::tempdir().unwrap();
        let mut sample = tiny_sample();
        sample.normals.set(0, 0, [0.0, 0.0, 1.0005]);
        write_sample(&sample, root.path()).unwrap();
        let (_, normals, _) = read_sample_arrays(root.path()).unwrap();
        assert_eq!(normals.get(0, 0), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn missing_file_named() {
        let root = tempfile::tempdir().unwrap();
        match read_sample_arrays(root.path()) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with(STACK_FILE)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ids_parse() {
        assert_eq!("cloudy".parse::<Condition>().unwrap(), Condition::Cloudy);
        assert!("foggy".parse::<Condition>().is_err());
        assert_eq!("back".parse::<View>().unwrap(), View::Back);
    }
}
