//! Mean angular error and per-object reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::sample::{read_normals_raster, Condition, SampleRecord, View, NORMALS_FILE};
use crate::error::{Error, Result};
use crate::fresnel::Material;
use crate::net::train::infer_normals;
use crate::net::unet::UNet;
use crate::normals::{dot, norm, NormalMap};
use crate::physics::{reconstruct_physics, DisambiguationPolicy};
use crate::polar::Mask;

/// Angular error sums over one mask.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MaeStats {
    /// Sum of per-pixel errors in degrees.
    pub sum_deg: f64,
    pub pixels: usize,
    /// Pixels whose prediction had zero length (each counted as 90 degrees).
    pub zero_length: usize,
}

impl MaeStats {
    pub fn mean(&self) -> f64 {
        self.sum_deg / self.pixels as f64
    }
}

/// Per-pixel sums behind [`mae`].
pub fn mae_stats(pred: &NormalMap, truth: &NormalMap, mask: &Mask) -> Result<MaeStats> {
    pred.same_dims(truth)?;
    mask.check_dims(truth.height(), truth.width())?;
    let mut stats = MaeStats::default();
    for (i, (p, t)) in pred.data().iter().zip(truth.data()).enumerate() {
        if !mask.bits()[i] {
            continue;
        }
        stats.pixels += 1;
        let lp = norm(p);
        if !(lp > 0.0 && lp.is_finite()) {
            stats.zero_length += 1;
            stats.sum_deg += 90.0;
            continue;
        }
        let lt = norm(t);
        let c = (dot(p, t) / (lp * lt)).clamp(-1.0, 1.0);
        stats.sum_deg += c.acos().to_degrees();
    }
    if stats.pixels == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(stats)
}

/// Mean angle in degrees between `pred` and `truth` over `mask`.
pub fn mae(pred: &NormalMap, truth: &NormalMap, mask: &Mask) -> Result<f64> {
    mae_stats(pred, truth, mask).map(|s| s.mean())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMae {
    pub object_id: String,
    pub condition: Condition,
    pub view: View,
    pub mae_deg: f64,
    pub stats: MaeStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMae {
    pub object_id: String,
    /// Pixel-weighted over the object's samples.
    pub mae_deg: f64,
    /// Unweighted mean of the object's sample values.
    pub sample_mean_deg: f64,
    /// Pixel-weighted per condition; `None` where the object has no sample.
    pub by_condition: [Option<f64>; 3],
    pub pixels: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaeReport {
    pub per_sample: Vec<SampleMae>,
    /// Sorted by object id.
    pub per_object: Vec<ObjectMae>,
    /// Pixel-weighted over every sample.
    pub whole_set: f64,
    pub whole_set_by_condition: [Option<f64>; 3],
    pub pixels: usize,
    pub zero_length: usize,
}

fn condition_index(c: Condition) -> usize {
    Condition::ALL.iter().position(|x| *x == c).expect("listed")
}

impl MaeReport {
    pub fn from_samples(per_sample: Vec<SampleMae>) -> Result<Self> {
        if per_sample.is_empty() {
            return Err(Error::Data("no samples to report".into()));
        }
        #[derive(Default)]
        struct Acc {
            total: MaeStats,
            by_condition: [MaeStats; 3],
            sample_sum: f64,
            samples: usize,
        }
        let add = |a: &mut MaeStats, s: &MaeStats| {
            a.sum_deg += s.sum_deg;
            a.pixels += s.pixels;
            a.zero_length += s.zero_length;
        };
        let mut objects: BTreeMap<&str, Acc> = BTreeMap::new();
        let mut total = Acc::default();
        for s in &per_sample {
            let ci = condition_index(s.condition);
            for acc in [objects.entry(&s.object_id).or_default(), &mut total] {
                add(&mut acc.total, &s.stats);
                add(&mut acc.by_condition[ci], &s.stats);
                acc.sample_sum += s.mae_deg;
                acc.samples += 1;
            }
        }
        let by_condition = |a: &Acc| a.by_condition.map(|c| (c.pixels > 0).then(|| c.mean()));
        let per_object = objects
            .iter()
            .map(|(id, a)| ObjectMae {
                object_id: id.to_string(),
                mae_deg: a.total.mean(),
                sample_mean_deg: a.sample_sum / a.samples as f64,
                by_condition: by_condition(a),
                pixels: a.total.pixels,
                samples: a.samples,
            })
            .collect();
        Ok(MaeReport {
            whole_set: total.total.mean(),
            whole_set_by_condition: by_condition(&total),
            pixels: total.total.pixels,
            zero_length: total.total.zero_length,
            per_object,
            per_sample,
        })
    }

    /// Plain-text table: one row per object and a closing Whole Set row.
    pub fn to_table(&self, title: &str) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let id_width = self
            .per_object
            .iter()
            .map(|o| o.object_id.chars().count())
            .max()
            .unwrap_or(0)
            .max("Whole Set".len());
        let mut out = String::new();
        let _ = writeln!(out, "# {title}");
        let _ = writeln!(
            out,
            "# MAE in degrees. Object, condition and Whole Set values are pixel-weighted means over foreground pixels; sample-mean averages per-sample MAE."
        );
        let _ = writeln!(
            out,
            "{:<id_width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>11}  {:>9}",
            "Object", "indoor", "sunny", "cloudy", "MAE", "sample-mean", "pixels"
        );
        for o in &self.per_object {
            let _ = writeln!(
                out,
                "{:<id_width$}  {:>8}  {:>8}  {:>8}  {:>8.2}  {:>11.2}  {:>9}",
                o.object_id,
                cell(o.by_condition[0]),
                cell(o.by_condition[1]),
                cell(o.by_condition[2]),
                o.mae_deg,
                o.sample_mean_deg,
                o.pixels
            );
        }
        let sample_mean = self.per_sample.iter().map(|s| s.mae_deg).sum::<f64>() / self.per_sample.len() as f64;
        let _ = writeln!(
            out,
            "{:<id_width$}  {:>8}  {:>8}  {:>8}  {:>8.2}  {:>11.2}  {:>9}",
            "Whole Set",
            cell(self.whole_set_by_condition[0]),
            cell(self.whole_set_by_condition[1]),
            cell(self.whole_set_by_condition[2]),
            self.whole_set,
            sample_mean,
            self.pixels
        );
        let _ = writeln!(
            out,
            "# {} samples, {} objects, {} zero-length predictions counted as 90 degrees",
            self.per_sample.len(),
            self.per_object.len(),
            self.zero_length
        );
        out
    }

    /// `object,condition,view,mae_deg,pixels` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("object,condition,view,mae_deg,pixels\n");
        for s in &self.per_sample {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.object_id, s.condition, s.view, s.mae_deg, s.stats.pixels
            );
        }
        out
    }
}

/// How `physics` picks among candidates, before any sample is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyChoice {
    Oracle,
    Convexity,
    Fixed(usize),
}

impl PolicyChoice {
    /// The concrete policy for one sample.
    pub fn for_sample(&self, sample: &SampleRecord) -> Result<DisambiguationPolicy> {
        Ok(match self {
            PolicyChoice::Oracle => DisambiguationPolicy::Oracle {
                reference: sample.normals.clone(),
            },
            PolicyChoice::Convexity => DisambiguationPolicy::convexity_from_mask(&sample.mask)?,
            PolicyChoice::Fixed(i) => DisambiguationPolicy::FixedBranch { index: *i },
        })
    }
}

impl std::fmt::Display for PolicyChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyChoice::Oracle => f.write_str("oracle"),
            PolicyChoice::Convexity => f.write_str("convexity"),
            PolicyChoice::Fixed(i) => write!(f, "fixed:{i}"),
        }
    }
}

impl FromStr for PolicyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(PolicyChoice::Oracle),
            "convexity" => Ok(PolicyChoice::Convexity),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|i| i.parse().ok())
                .map(PolicyChoice::Fixed)
                .ok_or_else(|| Error::Config(format!("unknown policy {s:?}; expected oracle, convexity or fixed:<i>"))),
        }
    }
}

/// Where predicted normals come from.
#[derive(Debug, Clone)]
pub enum Predictor {
    Physics {
        material: Material,
        policy: PolicyChoice,
    },
    Net(Box<UNet>),
    /// Precomputed `<dir>/<object>/<condition>/<view>/normals.psfp` files.
    Directory(PathBuf),
}

impl Predictor {
    pub fn predict(&self, sample: &SampleRecord) -> Result<NormalMap> {
        match self {
            Predictor::Physics { material, policy } => {
                let policy = policy.for_sample(sample)?;
                Ok(reconstruct_physics(&sample.stack, &sample.mask, material, &policy)?.normal_map)
            }
            Predictor::Net(net) => infer_normals(net, &sample.stack, Some(&sample.mask)),
            Predictor::Directory(dir) => read_normals_raster(&sample.dir_in(dir).join(NORMALS_FILE)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Predictor::Physics { material, policy } => format!(
                "method=physics policy={policy} eta={} mode={}",
                material.eta(),
                material.mode()
            ),
            Predictor::Net(net) => format!("method=net {}", net.config()),
            Predictor::Directory(dir) => format!("predictions={}", dir.display()),
        }
    }
}

/// Predicts and scores every sample, in order. Fails without a partial report.
pub fn evaluate(samples: &[SampleRecord], predictor: &Predictor) -> Result<MaeReport> {
    let per_sample = samples
        .iter()
        .map(|s| {
            let pred = predictor.predict(s)?;
            let stats = mae_stats(&pred, &s.normals, &s.mask).map_err(|e| match e {
                Error::EmptyMask => Error::Data(format!("{} has an empty mask", s.key())),
                other => other,
            })?;
            Ok(SampleMae {
                object_id: s.object_id.clone(),
                condition: s.condition,
                view: s.view,
                mae_deg: stats.mean(),
                stats,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MaeReport::from_samples(per_sample)
}

/// Writes `report.txt` and `report.csv` into `dir`.
pub fn write_report(report: &MaeReport, title: &str, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, text) in [("report.txt", report.to_table(title)), ("report.csv", report.to_csv())] {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(v: [f64; 3]) -> NormalMap {
        NormalMap::constant(2, 3, v)
    }

    #[test]
    fn exact_cases() {
        let mask = Mask::full(2, 3);
        let z = field([0.0, 0.0, 1.0]);
        assert_eq!(mae(&z, &z, &mask).unwrap(), 0.0);
        assert_eq!(mae(&field([1.0, 0.0, 0.0]), &z, &mask).unwrap(), 90.0);
        assert_eq!(mae(&field([0.0, 0.0, -1.0]), &z, &mask).unwrap(), 180.0);
    }

    #[test]
    fn zero_length_is_ninety_and_tallied() {
        let mut p = field([0.0, 0.0, 1.0]);
        p.set(0, 0, [0.0; 3]);
        let s = mae_stats(&p, &field([0.0, 0.0, 1.0]), &Mask::full(2, 3)).unwrap();
        assert_eq!(s.zero_length, 1);
        assert_eq!(s.sum_deg, 90.0);
    }

    #[test]
    fn unnormalized_prediction_is_scaled() {
        let mask = Mask::full(2, 3);
        assert_eq!(
            mae(&field([0.0, 0.0, 7.0]), &field([0.0, 0.0, 1.0]), &mask).unwrap(),
            0.0
        );
    }

    #[test]
    fn errors() {
        let z = field([0.0, 0.0, 1.0]);
        assert!(matches!(mae(&z, &z, &Mask::empty(2, 3)), Err(Error::EmptyMask)));
        assert!(matches!(
            mae(&z, &NormalMap::zeros(3, 2), &Mask::full(3, 2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn policy_parsing() {
        for s in ["oracle", "convexity", "fixed:3"] {
            assert_eq!(s.parse::<PolicyChoice>().unwrap().to_string(), s);
        }
        assert!("fixed:x".parse::<PolicyChoice>().is_err());
        assert!("best".parse::<PolicyChoice>().is_err());
    }

    #[test]
    fn report_aggregation() {
        let s = |o: &str, c, mae: f64, px: usize| SampleMae {
            object_id: o.into(),
            condition: c,
            view: View::Front,
            mae_deg: mae,
            stats: MaeStats {
                sum_deg: mae * px as f64,
                pixels: px,
                zero_length: 0,
            },
        };
        let r = MaeReport::from_samples(vec![
            s("b", Condition::Indoor, 10.0, 100),
            s("a", Condition::Sunny, 20.0, 300),
            s("b", Condition::Cloudy, 30.0, 100),
        ])
        .unwrap();
        assert_eq!(r.per_object[0].object_id, "a");
        assert_eq!(r.per_object[1].mae_deg, 20.0);
        assert_eq!(r.whole_set, (1000.0 + 6000.0 + 3000.0) / 500.0);
        assert_eq!(r.whole_set_by_condition[1], Some(20.0));
        assert_eq!(r.per_object[0].by_condition, [None, Some(20.0), None]);
        let table = r.to_table("t");
        assert!(table.lines().any(|l| l.starts_with("Whole Set")));
        assert_eq!(r.to_csv().lines().count(), 4);
        assert!(MaeReport::from_samples(Vec::new()).is_err());
    }
}
