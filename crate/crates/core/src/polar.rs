//! Polarized image stacks and per-pixel sinusoid fitting.
//!
//! Behind a linear polarizer at angle `a`, the intensity of a pixel follows
//! `I(a) = i_mean + amplitude * cos(2 (a - phase))`. Three or more samples
//! at distinct angles determine `(i_mean, amplitude, phase)`; the degree of
//! linear polarization is `amplitude / i_mean`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};

/// Transmission-axis angle of a linear polarizer, kept in `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PolarizerAngle(f64);

impl PolarizerAngle {
    pub fn from_radians(radians: f64) -> Result<Self> {
        if !radians.is_finite() {
            return Err(Error::Domain(format!("polarizer angle {radians} is not finite")));
        }
        Ok(PolarizerAngle(wrap_pi(radians)))
    }

    pub fn from_degrees(degrees: f64) -> Result<Self> {
        Self::from_radians(degrees.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    /// The four-angle capture set 0, 45, 90, 135 degrees.
    pub fn canonical() -> Vec<PolarizerAngle> {
        vec![
            PolarizerAngle(0.0),
            PolarizerAngle(FRAC_PI_4),
            PolarizerAngle(FRAC_PI_2),
            PolarizerAngle(3.0 * FRAC_PI_4),
        ]
    }
}

/// Wraps an angle into `[0, pi)`.
pub fn wrap_pi(angle: f64) -> f64 {
    let r = angle.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Wraps an angle into `[0, 2 pi)`.
pub fn wrap_two_pi(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

/// Smallest distance between two angles modulo pi.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = wrap_pi(a - b);
    d.min(PI - d)
}

/// Parameters of the transmitted-intensity sinusoid.
///
/// Fitted parameters from noisy samples may have `amplitude > i_mean`;
/// [`fit_stack`] flags such pixels as invalid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidParams {
    pub i_mean: f64,
    pub amplitude: f64,
    /// Phase in `[0, pi)`.
    pub phase: f64,
}

impl SinusoidParams {
    pub fn new(i_mean: f64, amplitude: f64, phase: f64) -> Result<Self> {
        if !(i_mean.is_finite() && amplitude.is_finite() && phase.is_finite()) {
            return Err(Error::Domain("sinusoid parameters must be finite".into()));
        }
        if amplitude < 0.0 || amplitude > i_mean {
            return Err(Error::Domain(format!(
                "need 0 <= amplitude <= i_mean, got amplitude {amplitude}, i_mean {i_mean}"
            )));
        }
        Ok(SinusoidParams {
            i_mean,
            amplitude,
            phase: wrap_pi(phase),
        })
    }

    /// Builds parameters from the extreme intensities.
    pub fn from_extremes(i_max: f64, i_min: f64, phase: f64) -> Result<Self> {
        Self::new(0.5 * (i_max + i_min), 0.5 * (i_max - i_min), phase)
    }

    pub fn i_max(&self) -> f64 {
        self.i_mean + self.amplitude
    }

    pub fn i_min(&self) -> f64 {
        self.i_mean - self.amplitude
    }

    /// `(I_max - I_min) / (I_max + I_min)`; zero for a dark pixel.
    pub fn degree_of_polarization(&self) -> f64 {
        if self.i_mean > 0.0 {
            self.amplitude / self.i_mean
        } else {
            0.0
        }
    }

    pub fn eval(&self, angle: PolarizerAngle) -> f64 {
        eval_sinusoid(self, angle)
    }
}

pub fn eval_sinusoid(params: &SinusoidParams, angle: PolarizerAngle) -> f64 {
    params.i_mean + params.amplitude * (2.0 * (angle.radians() - params.phase)).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMethod {
    /// Stokes combinations of the 0/45/90/135 degree samples.
    ClosedFormQuad,
    /// Linear least squares in `(i_mean, A cos 2phi, A sin 2phi)`.
    #[default]
    LeastSquares,
}

/// A fitter prepared for one fixed set of polarizer angles.
///
/// Both methods reduce to a fixed linear map from the samples to
/// `(i_mean, A cos 2phi, A sin 2phi)`, so the map is built once and reused
/// for every pixel of a stack.
#[derive(Debug, Clone)]
pub struct SinusoidFitter {
    method: FitMethod,
    /// 3 x K row-major.
    projection: Vec<f64>,
    channels: usize,
}

impl SinusoidFitter {
    pub fn new(angles: &[PolarizerAngle], method: FitMethod) -> Result<Self> {
        let k = angles.len();
        if k < 3 {
            return Err(Error::DegenerateFit(format!("need at least 3 angles, got {k}")));
        }
        for i in 0..k {
            for j in i + 1..k {
                if phase_distance(angles[i].radians(), angles[j].radians()) < 1e-9 {
                    return Err(Error::DegenerateFit(format!(
                        "angles {} and {} coincide modulo pi",
                        angles[i].degrees(),
                        angles[j].degrees()
                    )));
                }
            }
        }
        let projection = match method {
            FitMethod::ClosedFormQuad => closed_form_projection(angles)?,
            FitMethod::LeastSquares => least_squares_projection(angles)?,
        };
        Ok(SinusoidFitter {
            method,
            projection,
            channels: k,
        })
    }

    pub fn method(&self) -> FitMethod {
        self.method
    }

    pub fn fit(&self, intensities: &[f64]) -> SinusoidParams {
        debug_assert_eq!(intensities.len(), self.channels);
        let mut coef = [0.0f64; 3];
        for (r, c) in coef.iter_mut().enumerate() {
            let row = &self.projection[r * self.channels..(r + 1) * self.channels];
            *c = row.iter().zip(intensities).map(|(p, i)| p * i).sum();
        }
        let (a, b) = (coef[1], coef[2]);
        SinusoidParams {
            i_mean: coef[0],
            amplitude: a.hypot(b),
            phase: wrap_pi(0.5 * b.atan2(a)),
        }
    }
}

fn closed_form_projection(angles: &[PolarizerAngle]) -> Result<Vec<f64>> {
    if angles.len() != 4 {
        return Err(Error::InvalidInput(
            "closed-form fit needs exactly the angles 0, 45, 90, 135 degrees".into(),
        ));
    }
    // slot[q] = index of the sample at q * 45 degrees
    let mut slot = [usize::MAX; 4];
    for (i, a) in angles.iter().enumerate() {
        let q = (a.radians() / FRAC_PI_4).round();
        if (a.radians() - q * FRAC_PI_4).abs() > 1e-12 || !(0.0..4.0).contains(&q) {
            return Err(Error::InvalidInput(format!(
                "closed-form fit needs angles 0, 45, 90, 135 degrees; got {}",
                a.degrees()
            )));
        }
        slot[q as usize] = i;
    }
    if slot.contains(&usize::MAX) {
        return Err(Error::InvalidInput("closed-form fit: repeated canonical angle".into()));
    }
    // s0 = (I0 + I45 + I90 + I135) / 2, s1 = I0 - I90, s2 = I45 - I135
    // i_mean = s0 / 2, A cos 2phi = s1 / 2, A sin 2phi = s2 / 2
    let mut p = vec![0.0; 12];
    for q in 0..4 {
        p[slot[q]] = 0.25;
    }
    p[4 + slot[0]] = 0.5;
    p[4 + slot[2]] = -0.5;
    p[8 + slot[1]] = 0.5;
    p[8 + slot[3]] = -0.5;
    Ok(p)
}

fn least_squares_projection(angles: &[PolarizerAngle]) -> Result<Vec<f64>> {
    let k = angles.len();
    let rows: Vec<[f64; 3]> = angles
        .iter()
        .map(|a| {
            let t = 2.0 * a.radians();
            [1.0, snap_unit(t.cos()), snap_unit(t.sin())]
        })
        .collect();
    let mut normal = [[0.0f64; 3]; 3];
    for r in &rows {
        for i in 0..3 {
            for j in 0..3 {
                normal[i][j] += r[i] * r[j];
            }
        }
    }
    let inv = invert3(&normal).ok_or_else(|| Error::DegenerateFit("design matrix is rank deficient".into()))?;
    let mut p = vec![0.0; 3 * k];
    for i in 0..3 {
        for (c, r) in rows.iter().enumerate() {
            p[i * k + c] = (0..3).map(|j| inv[i][j] * r[j]).sum();
        }
    }
    Ok(p)
}

/// Rounds values within 1e-15 of -1, 0 or 1 onto them, so axis-aligned
/// angles give exact design rows.
fn snap_unit(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-15 {
        r
    } else {
        v
    }
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let c00 = cof(1, 2, 1, 2);
    let c01 = -cof(1, 2, 0, 2);
    let c02 = cof(1, 2, 0, 1);
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !(det.abs() > 1e-12 * scale * scale * scale) {
        return None;
    }
    let adj = [
        [c00, -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [c01, cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [c02, -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = adj[i][j] / det;
        }
    }
    Some(inv)
}

/// Fits the sinusoid to `(angle, intensity)` samples.
pub fn fit_sinusoid(samples: &[(PolarizerAngle, f64)], method: FitMethod) -> Result<SinusoidParams> {
    let angles: Vec<PolarizerAngle> = samples.iter().map(|s| s.0).collect();
    let values: Vec<f64> = samples.iter().map(|s| s.1).collect();
    Ok(SinusoidFitter::new(&angles, method)?.fit(&values))
}

/// Foreground mask; `true` marks a foreground pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "mask of {height}x{width} needs {} bits, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(Mask { height, width, bits })
    }

    pub fn full(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        if self.height != height || self.width != width {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, data is {height}x{width}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// `H x W x K` intensities behind `K` polarizer angles, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizedStack {
    height: usize,
    width: usize,
    angles: Vec<PolarizerAngle>,
    data: Vec<f64>,
}

impl PolarizedStack {
    pub fn new(height: usize, width: usize, angles: Vec<PolarizerAngle>, data: Vec<f64>) -> Result<Self> {
        let k = angles.len();
        if k < 3 {
            return Err(Error::InvalidInput(format!("a stack needs at least 3 angles, got {k}")));
        }
        for i in 0..k {
            for j in i + 1..k {
                if phase_distance(angles[i].radians(), angles[j].radians()) < 1e-9 {
                    return Err(Error::InvalidInput("stack angles must be distinct modulo pi".into()));
                }
            }
        }
        if data.len() != height * width * k {
            return Err(Error::DimensionMismatch(format!(
                "stack {height}x{width}x{k} needs {} values, got {}",
                height * width * k,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "stack intensity {bad} is not finite and nonnegative"
            )));
        }
        Ok(PolarizedStack {
            height,
            width,
            angles,
            data,
        })
    }

    /// Builds a stack from integer samples, scaling `[0, 2^bits - 1]` onto `[0, 1]`.
    pub fn from_integer_samples(
        height: usize,
        width: usize,
        angles: Vec<PolarizerAngle>,
        samples: &[u16],
        bit_depth: u32,
    ) -> Result<Self> {
        if !(1..=16).contains(&bit_depth) {
            return Err(Error::InvalidInput(format!("unsupported bit depth {bit_depth}")));
        }
        let max = ((1u32 << bit_depth) - 1) as f64;
        let data = samples.iter().map(|&s| s as f64 / max).collect();
        Self::new(height, width, angles, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.angles.len()
    }

    pub fn angles(&self) -> &[PolarizerAngle] {
        &self.angles
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let k = self.angles.len();
        let start = (row * self.width + col) * k;
        &self.data[start..start + k]
    }

    /// Multiplies every intensity by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Domain(format!("scale factor {factor} must be positive")));
        }
        Ok(PolarizedStack {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        })
    }
}

/// Per-pixel phase, degree of polarization and total intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationMap {
    pub height: usize,
    pub width: usize,
    /// Phase in `[0, pi)`.
    pub phi: Vec<f64>,
    /// Degree of linear polarization in `[0, 1]` where valid.
    pub rho: Vec<f64>,
    /// `I_max + I_min`.
    pub intensity: Vec<f64>,
    pub valid: Vec<bool>,
}

impl PolarizationMap {
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub method: FitMethod,
    /// Pixels with a mean intensity below this are not fitted.
    pub min_intensity: f64,
    /// Pixels whose degree of polarization is at or below this carry no
    /// phase information.
    pub min_dop: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            method: FitMethod::LeastSquares,
            min_intensity: 1e-6,
            min_dop: 1e-12,
        }
    }
}

impl FitOptions {
    pub fn with_method(method: FitMethod) -> Self {
        FitOptions {
            method,
            ..Default::default()
        }
    }
}

/// Fits every foreground pixel of `stack`.
pub fn fit_stack(stack: &PolarizedStack, mask: &Mask, options: &FitOptions) -> Result<PolarizationMap> {
    mask.check_dims(stack.height, stack.width)?;
    let fitter = SinusoidFitter::new(&stack.angles, options.method)?;
    let n = stack.height * stack.width;
    let mut map = PolarizationMap {
        height: stack.height,
        width: stack.width,
        phi: vec![0.0; n],
        rho: vec![0.0; n],
        intensity: vec![0.0; n],
        valid: vec![false; n],
    };
    let k = stack.channels();
    for (i, samples) in stack.data.chunks_exact(k).enumerate() {
        if !mask.bits[i] {
            continue;
        }
        let p = fitter.fit(samples);
        map.intensity[i] = 2.0 * p.i_mean;
        map.phi[i] = p.phase;
        if !(p.i_mean >= options.min_intensity) {
            continue;
        }
        let rho = p.amplitude / p.i_mean;
        map.rho[i] = rho;
        map.valid[i] = rho > options.min_dop && rho <= 1.0;
    }
    Ok(map)
}
