//! Classical reconstruction: sinusoid fit, zenith inversion, azimuth
//! disambiguation.

use crate::error::{Error, Result};
use crate::fresnel::{pixel_candidates, CandidateSet, Material};
use crate::normals::{dot, NormalMap, Vec3};
use crate::polar::{fit_stack, wrap_pi, FitOptions, Mask, PolarizedStack};

/// How one candidate is chosen per pixel.
#[derive(Debug, Clone, PartialEq)]
pub enum DisambiguationPolicy {
    /// Candidate closest to a reference normal map. An upper bound, not a
    /// deployable method.
    Oracle { reference: NormalMap },
    /// Azimuth pointing away from `center` (column, row), as for a convex
    /// object. For two specular zenith roots, the lower one unless
    /// `prefer_high_zenith` is set.
    ConvexityPrior {
        center: (f64, f64),
        prefer_high_zenith: bool,
    },
    /// Always `candidates[index % count]`.
    FixedBranch { index: usize },
}

impl DisambiguationPolicy {
    pub fn convexity(center: (f64, f64)) -> Self {
        DisambiguationPolicy::ConvexityPrior {
            center,
            prefer_high_zenith: false,
        }
    }

    /// Convexity prior centered on the mask centroid.
    pub fn convexity_from_mask(mask: &Mask) -> Result<Self> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for row in 0..mask.height() {
            for col in 0..mask.width() {
                if mask.get(row, col) {
                    sx += col as f64;
                    sy += row as f64;
                    n += 1;
                }
            }
        }
        if n == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(Self::convexity((sx / n as f64, sy / n as f64)))
    }

    fn select(&self, set: &CandidateSet, row: usize, col: usize) -> usize {
        let items = set.as_slice();
        match self {
            DisambiguationPolicy::Oracle { reference } => {
                let r = reference.get(row, col);
                argmax(items.iter().map(|c| dot(&c.to_vector(), &r)))
            }
            DisambiguationPolicy::ConvexityPrior {
                center,
                prefer_high_zenith,
            } => {
                let (dx, dy) = (col as f64 - center.0, row as f64 - center.1);
                let branches = (0..items.len()).map(|i| set.zenith_branch(i));
                let wanted = if *prefer_high_zenith {
                    branches.max().unwrap_or(0)
                } else {
                    0
                };
                argmax(items.iter().enumerate().map(|(i, c)| {
                    if set.zenith_branch(i) != wanted {
                        f64::NEG_INFINITY
                    } else {
                        c.azimuth.cos() * dx + c.azimuth.sin() * dy
                    }
                }))
            }
            DisambiguationPolicy::FixedBranch { index } => index % items.len(),
        }
    }
}

/// Index of the first maximum.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub normal_map: NormalMap,
    /// Fraction of mask pixels whose degree of polarization was clamped.
    pub clamped_fraction: f64,
    /// Fraction of mask pixels that fell back to the frontal normal.
    pub invalid_fraction: f64,
    pub candidate_counts: Vec<u8>,
    pub invalid: Vec<bool>,
}

// Phase and degree of polarization are snapped to fixed grids before
// inversion so that the reconstruction does not depend on the last bits of
// the fit, which change when all intensities are rescaled.
const PHASE_GRID: f64 = (1u64 << 24) as f64;
const DOP_GRID: f64 = (1u64 << 32) as f64;

fn snap(value: f64, grid: f64) -> f64 {
    (value * grid).round() / grid
}

pub const FRONTAL: Vec3 = [0.0, 0.0, 1.0];

/// Reconstructs one normal per mask pixel.
pub fn reconstruct_physics(
    stack: &PolarizedStack,
    mask: &Mask,
    material: &Material,
    policy: &DisambiguationPolicy,
) -> Result<ReconstructionReport> {
    mask.check_dims(stack.height(), stack.width())?;
    if let DisambiguationPolicy::Oracle { reference } = policy {
        mask.check_dims(reference.height(), reference.width())?;
    }
    let fg = mask.count();
    if fg == 0 {
        return Err(Error::EmptyMask);
    }
    let pmap = fit_stack(stack, mask, &FitOptions::default())?;
    let (h, w) = (stack.height(), stack.width());
    let mut normals = NormalMap::zeros(h, w);
    let mut counts = vec![0u8; h * w];
    let mut invalid = vec![false; h * w];
    let (mut n_clamped, mut n_invalid) = (0usize, 0usize);
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if !mask.bits()[i] {
                continue;
            }
            let set = if pmap.valid[i] {
                let phase = wrap_pi(snap(pmap.phi[i], PHASE_GRID));
                let rho = snap(pmap.rho[i], DOP_GRID);
                pixel_candidates(phase, rho, material)
            } else {
                CandidateSet::default()
            };
            counts[i] = set.len() as u8;
            if set.clamped {
                n_clamped += 1;
            }
            if set.is_empty() {
                invalid[i] = true;
                n_invalid += 1;
                normals.set(row, col, FRONTAL);
                continue;
            }
            let pick = policy.select(&set, row, col);
            normals.set(row, col, set.as_slice()[pick].to_vector());
        }
    }
    Ok(ReconstructionReport {
        normal_map: normals,
        clamped_fraction: n_clamped as f64 / fg as f64,
        invalid_fraction: n_invalid as f64 / fg as f64,
        candidate_counts: counts,
        invalid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fresnel::ReflectionMode;
    use crate::synth::{ground_truth, render, Geometry, RenderConfig, Scene};

    #[test]
    fn frontal_plane_reconstructs_frontal() {
        let scene = Scene::new(
            Geometry::Plane {
                tilt: 0.0,
                tilt_azimuth: 0.0,
            },
            Material::default(),
        );
        let config = RenderConfig::new(6, 7);
        let stack = render(&scene, &config).unwrap();
        let mask = Mask::full(6, 7);
        let report = reconstruct_physics(
            &stack,
            &mask,
            &Material::default(),
            &DisambiguationPolicy::FixedBranch { index: 0 },
        )
        .unwrap();
        assert!(report.normal_map.data().iter().all(|n| *n == FRONTAL));
        assert_eq!(report.invalid_fraction, 1.0);
    }

    #[test]
    fn empty_mask_rejected() {
        let scene = Scene::new(
            Geometry::Plane {
                tilt: 0.2,
                tilt_azimuth: 0.0,
            },
            Material::default(),
        );
        let stack = render(&scene, &RenderConfig::new(3, 3)).unwrap();
        let err = reconstruct_physics(
            &stack,
            &Mask::empty(3, 3),
            &Material::default(),
            &DisambiguationPolicy::FixedBranch { index: 0 },
        );
        assert!(matches!(err, Err(Error::EmptyMask)));
    }

    #[test]
    fn oracle_reference_dims_checked() {
        let scene = Scene::new(
            Geometry::Plane {
                tilt: 0.2,
                tilt_azimuth: 0.0,
            },
            Material::default(),
        );
        let stack = render(&scene, &RenderConfig::new(3, 3)).unwrap();
        let policy = DisambiguationPolicy::Oracle {
            reference: NormalMap::zeros(2, 3),
        };
        assert!(matches!(
            reconstruct_physics(&stack, &Mask::full(3, 3), &Material::default(), &policy),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn tilted_plane_branches() {
        let tilt = 0.5;
        let scene = Scene::new(
            Geometry::Plane {
                tilt,
                tilt_azimuth: 0.3,
            },
            Material::default(),
        );
        let config = RenderConfig::new(2, 2);
        let stack = render(&scene, &config).unwrap();
        let mask = Mask::full(2, 2);
        let (truth, _) = ground_truth(&scene, &config).unwrap();
        let m = Material::default();
        let a = reconstruct_physics(&stack, &mask, &m, &DisambiguationPolicy::FixedBranch { index: 0 }).unwrap();
        let b = reconstruct_physics(&stack, &mask, &m, &DisambiguationPolicy::FixedBranch { index: 1 }).unwrap();
        let t = truth.get(0, 0);
        assert!(crate::normals::angle_deg(&a.normal_map.get(0, 0), &t) < 1e-4);
        let flipped = b.normal_map.get(0, 0);
        assert!((flipped[0] + t[0]).abs() < 1e-6 && (flipped[1] + t[1]).abs() < 1e-6);
    }

    #[test]
    fn specular_convexity_prefers_low_root() {
        let material = Material::new(1.5, ReflectionMode::Specular).unwrap();
        let mut scene = Scene::centered_sphere(41, 41, 19.0, material);
        scene.albedo = 0.8;
        let config = RenderConfig::new(41, 41);
        let stack = render(&scene, &config).unwrap();
        let (truth, mask) = ground_truth(&scene, &config).unwrap();
        let report =
            reconstruct_physics(&stack, &mask, &material, &DisambiguationPolicy::convexity((20.0, 20.0))).unwrap();
        // pixels below the Brewster zenith are recovered exactly
        let brewster = 1.5f64.atan();
        for row in 0..41 {
            for col in 0..41 {
                let t = truth.get(row, col);
                if mask.get(row, col) && t[2].acos() < brewster - 0.05 && t[2] < 1.0 {
                    assert!(crate::normals::angle_deg(&report.normal_map.get(row, col), &t) < 1e-3);
                }
            }
        }
    }
}
