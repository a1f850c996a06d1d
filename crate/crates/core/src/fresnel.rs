//! Fresnel degree-of-polarization relations and their inversion.
//!
//! The forward models map a zenith angle to the degree of linear
//! polarization for diffuse (body) and specular (surface) reflection off a
//! dielectric of refractive index `eta`. Inversion is done by bracketing:
//! bisection on the monotone diffuse curve, and golden-section search for
//! the specular peak followed by bisection on each flank.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::polar::{wrap_two_pi, PolarizationMap};

pub const DEFAULT_ETA: f64 = 1.5;
pub const DEFAULT_MAX_ETA: f64 = 3.0;

/// Bracket width at which root-finding stops, in radians.
pub const ZENITH_TOLERANCE: f64 = 1e-10;

/// Two degrees of polarization closer than this count as the specular peak.
const PEAK_TOLERANCE: f64 = 1e-12;

const ANGLE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ReflectionMode {
    #[default]
    Diffuse,
    Specular,
}

impl fmt::Display for ReflectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReflectionMode::Diffuse => "diffuse",
            ReflectionMode::Specular => "specular",
        })
    }
}

impl FromStr for ReflectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffuse" => Ok(ReflectionMode::Diffuse),
            "specular" => Ok(ReflectionMode::Specular),
            other => Err(Error::Config(format!("unknown reflection mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    eta: f64,
    mode: ReflectionMode,
}

impl Material {
    pub fn new(eta: f64, mode: ReflectionMode) -> Result<Self> {
        Self::with_max_eta(eta, mode, DEFAULT_MAX_ETA)
    }

    pub fn with_max_eta(eta: f64, mode: ReflectionMode, max_eta: f64) -> Result<Self> {
        if !(eta > 1.0 && eta <= max_eta) {
            return Err(Error::Domain(format!("refractive index {eta} outside (1, {max_eta}]")));
        }
        Ok(Material { eta, mode })
    }

    pub fn diffuse(eta: f64) -> Result<Self> {
        Self::new(eta, ReflectionMode::Diffuse)
    }

    pub fn specular(eta: f64) -> Result<Self> {
        Self::new(eta, ReflectionMode::Specular)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mode(&self) -> ReflectionMode {
        self.mode
    }

    /// Degree of polarization at `zenith` for this material's mode.
    pub fn dop(&self, zenith: f64) -> Result<f64> {
        match self.mode {
            ReflectionMode::Diffuse => dop_diffuse(self.eta, zenith),
            ReflectionMode::Specular => dop_specular(self.eta, zenith),
        }
    }
}

impl Default for Material {
    fn default() -> Self {
        Material {
            eta: DEFAULT_ETA,
            mode: ReflectionMode::Diffuse,
        }
    }
}

/// Surface orientation as (azimuth, zenith).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SphericalNormal {
    /// In `[0, 2 pi)`.
    pub azimuth: f64,
    /// In `[0, pi / 2]`.
    pub zenith: f64,
}

impl SphericalNormal {
    pub fn new(azimuth: f64, zenith: f64) -> Result<Self> {
        if !(0.0..=FRAC_PI_2).contains(&zenith) || !azimuth.is_finite() {
            return Err(Error::Domain(format!("zenith {zenith} outside [0, pi/2]")));
        }
        Ok(SphericalNormal {
            azimuth: wrap_two_pi(azimuth),
            zenith,
        })
    }

    /// Unit vector `(sin z cos a, sin z sin a, cos z)`, z toward the camera.
    pub fn to_vector(&self) -> [f64; 3] {
        let (sz, cz) = self.zenith.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        [sz * ca, sz * sa, cz]
    }

    /// Inverse of [`to_vector`](Self::to_vector) for a unit vector with `z >= 0`.
    pub fn from_vector(n: [f64; 3]) -> Self {
        let planar = n[0].hypot(n[1]);
        SphericalNormal {
            azimuth: wrap_two_pi(n[1].atan2(n[0])),
            zenith: planar.atan2(n[2].max(0.0)),
        }
    }
}

fn check_zenith(zenith: f64) -> Result<f64> {
    if !(-ANGLE_SLACK..=FRAC_PI_2 + ANGLE_SLACK).contains(&zenith) {
        return Err(Error::Domain(format!("zenith {zenith} outside [0, pi/2]")));
    }
    Ok(zenith.clamp(0.0, FRAC_PI_2))
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 1.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("refractive index {eta} must exceed 1")));
    }
    Ok(())
}

/// Degree of polarization of diffusely reflected light.
pub fn dop_diffuse(eta: f64, zenith: f64) -> Result<f64> {
    check_eta(eta)?;
    let theta = check_zenith(zenith)?;
    Ok(dop_diffuse_raw(eta, theta))
}

fn dop_diffuse_raw(eta: f64, theta: f64) -> f64 {
    let s2 = theta.sin().powi(2);
    let inv = 1.0 / eta;
    let num = (eta - inv).powi(2) * s2;
    let den = 2.0 + 2.0 * eta * eta - (eta + inv).powi(2) * s2 + 4.0 * theta.cos() * (eta * eta - s2).sqrt();
    num / den
}

/// Degree of polarization of specularly reflected light.
///
/// Returns [`Error::NotFinite`] where the denominator vanishes, which does
/// not happen for `1 < eta <= 1 + sqrt(2)`.
pub fn dop_specular(eta: f64, zenith: f64) -> Result<f64> {
    check_eta(eta)?;
    let theta = check_zenith(zenith)?;
    dop_specular_raw(eta, theta).ok_or_else(|| Error::NotFinite(format!("specular dop at eta {eta}, zenith {theta}")))
}

fn dop_specular_raw(eta: f64, theta: f64) -> Option<f64> {
    let (s, c) = theta.sin_cos();
    let s2 = s * s;
    let e2 = eta * eta;
    let num = 2.0 * s2 * c * (e2 - s2).sqrt();
    let den = e2 - s2 - e2 * s2 + 2.0 * s2 * s2;
    let v = num / den;
    (den != 0.0 && v.is_finite()).then_some(v)
}

/// Zenith of the specular peak and the peak degree of polarization,
/// located by golden-section search.
pub fn specular_peak(eta: f64) -> Result<(f64, f64)> {
    check_eta(eta)?;
    let f = |t: f64| dop_specular_raw(eta, t).unwrap_or(f64::NEG_INFINITY);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, FRAC_PI_2);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > ZENITH_TOLERANCE {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    let theta = 0.5 * (a + b);
    Ok((theta, f(theta)))
}

/// Zenith candidates for one degree of polarization.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZenithSolution {
    /// Ascending, each in `[0, pi / 2]`.
    pub candidates: Vec<f64>,
    /// Set when `rho` exceeded the attainable maximum.
    pub clamped: bool,
}

/// Finds `t` in `[lo, hi]` with `f(t) = target` for monotone `f`.
fn bisect(mut lo: f64, mut hi: f64, target: f64, increasing: bool, f: impl Fn(f64) -> f64) -> f64 {
    while hi - lo > ZENITH_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let below = f(mid) < target;
        if below == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Zenith angles that produce the degree of polarization `rho`.
pub fn invert_dop(material: &Material, rho: f64) -> Result<ZenithSolution> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("degree of polarization {rho} outside [0, 1]")));
    }
    let eta = material.eta;
    match material.mode {
        ReflectionMode::Diffuse => {
            if rho == 0.0 {
                return Ok(ZenithSolution {
                    candidates: vec![0.0],
                    clamped: false,
                });
            }
            let ceiling = dop_diffuse_raw(eta, FRAC_PI_2);
            if rho > ceiling {
                return Ok(ZenithSolution {
                    candidates: vec![FRAC_PI_2],
                    clamped: true,
                });
            }
            let theta = bisect(0.0, FRAC_PI_2, rho, true, |t| dop_diffuse_raw(eta, t));
            Ok(ZenithSolution {
                candidates: vec![theta],
                clamped: false,
            })
        }
        ReflectionMode::Specular => {
            let (peak_theta, peak) = specular_peak(eta)?;
            if (rho - peak).abs() <= PEAK_TOLERANCE {
                return Ok(ZenithSolution {
                    candidates: vec![peak_theta],
                    clamped: false,
                });
            }
            if rho > peak {
                return Ok(ZenithSolution {
                    candidates: vec![peak_theta],
                    clamped: true,
                });
            }
            let f = |t: f64| dop_specular_raw(eta, t).unwrap_or(f64::NAN);
            let low = if rho == 0.0 {
                0.0
            } else {
                bisect(0.0, peak_theta, rho, true, f)
            };
            let high = if rho == 0.0 {
                FRAC_PI_2
            } else {
                bisect(peak_theta, FRAC_PI_2, rho, false, f)
            };
            Ok(ZenithSolution {
                candidates: vec![low, high],
                clamped: false,
            })
        }
    }
}

/// The two azimuths consistent with a sinusoid phase, `pi` apart.
///
/// Diffuse: `{phase, phase + pi}`. Specular: `{phase + pi/2, phase + 3 pi/2}`.
pub fn azimuth_candidates(phase: f64, mode: ReflectionMode) -> [f64; 2] {
    let primary = match mode {
        ReflectionMode::Diffuse => phase,
        ReflectionMode::Specular => phase + FRAC_PI_2,
    };
    [wrap_two_pi(primary), wrap_two_pi(primary + PI)]
}

/// Candidate normals of one pixel, at most four.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CandidateSet {
    items: [SphericalNormal; 4],
    len: u8,
    /// The zenith index of each candidate (0 = lower zenith root).
    branch: [u8; 4],
    pub clamped: bool,
    pub not_finite: bool,
}

impl CandidateSet {
    pub fn as_slice(&self) -> &[SphericalNormal] {
        &self.items[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Which zenith root candidate `i` came from; 0 is the lowest zenith.
    pub fn zenith_branch(&self, i: usize) -> usize {
        self.branch[i] as usize
    }

    fn push(&mut self, n: SphericalNormal, branch: u8) {
        self.items[self.len as usize] = n;
        self.branch[self.len as usize] = branch;
        self.len += 1;
    }
}

/// Candidate normals for every pixel of a polarization map.
#[derive(Debug, Clone)]
pub struct NormalCandidates {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<CandidateSet>,
}

impl NormalCandidates {
    pub fn get(&self, row: usize, col: usize) -> &CandidateSet {
        &self.pixels[row * self.width + col]
    }

    pub fn clamped_count(&self) -> usize {
        self.pixels.iter().filter(|p| p.clamped).count()
    }

    pub fn not_finite_count(&self) -> usize {
        self.pixels.iter().filter(|p| p.not_finite).count()
    }
}

/// Candidates for one pixel from its phase and degree of polarization.
pub fn pixel_candidates(phase: f64, rho: f64, material: &Material) -> CandidateSet {
    let mut set = CandidateSet::default();
    let solution = match invert_dop(material, rho.clamp(0.0, 1.0)) {
        Ok(s) => s,
        Err(_) => {
            set.not_finite = true;
            return set;
        }
    };
    set.clamped = solution.clamped;
    let azimuths = azimuth_candidates(phase, material.mode);
    for (branch, &zenith) in solution.candidates.iter().enumerate() {
        if zenith == 0.0 {
            // azimuth is irrelevant at the pole
            set.push(SphericalNormal { azimuth: 0.0, zenith }, branch as u8);
            continue;
        }
        for &azimuth in &azimuths {
            set.push(SphericalNormal { azimuth, zenith }, branch as u8);
        }
    }
    set
}

/// Expands every valid pixel of `map` into its candidate normals; invalid
/// pixels get an empty set.
pub fn normals_from_polarization(map: &PolarizationMap, material: &Material) -> NormalCandidates {
    let pixels = (0..map.height * map.width)
        .map(|i| {
            if map.valid[i] {
                pixel_candidates(map.phi[i], map.rho[i], material)
            } else {
                CandidateSet::default()
            }
        })
        .collect();
    NormalCandidates {
        height: map.height,
        width: map.width,
        pixels,
    }
}
