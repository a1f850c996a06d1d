//! Synthetic polarized captures with analytic ground truth.
//!
//! Scenes are rendered under an orthographic camera with frontal lighting.
//! Each foreground pixel gets its normal from the analytic geometry, its
//! degree of polarization from the Fresnel model of the scene material and
//! its phase from the normal azimuth.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::sample::{write_sample, Condition, SampleRecord, View};
use crate::data::split::{write_split_file, Partition};
use crate::error::{Error, Result};
use crate::fresnel::{Material, ReflectionMode};
use crate::normals::{NormalMap, Vec3};
use crate::polar::{wrap_pi, Mask, PolarizedStack, PolarizerAngle, SinusoidParams};

/// One Gaussian bump of a height field, in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub x: f64,
    pub y: f64,
    pub amplitude: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub bumps: Vec<Bump>,
}

impl HeightField {
    /// `count` bumps with centers inside a `height x width` image.
    pub fn random<R: Rng>(rng: &mut R, height: usize, width: usize, count: usize) -> Self {
        let size = height.min(width) as f64;
        let bumps = (0..count)
            .map(|_| {
                let sigma = size * rng.random_range(0.08..0.22);
                Bump {
                    x: rng.random_range(0.0..width as f64),
                    y: rng.random_range(0.0..height as f64),
                    amplitude: sigma * rng.random_range(0.4..1.4),
                    sigma,
                }
            })
            .collect();
        HeightField { bumps }
    }

    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.bumps
            .iter()
            .map(|b| {
                let d2 = (x - b.x).powi(2) + (y - b.y).powi(2);
                b.amplitude * (-d2 / (2.0 * b.sigma * b.sigma)).exp()
            })
            .sum()
    }

    /// Normal from central differences of the height.
    pub fn normal_at(&self, x: f64, y: f64) -> Vec3 {
        let dx = 0.5 * (self.height_at(x + 1.0, y) - self.height_at(x - 1.0, y));
        let dy = 0.5 * (self.height_at(x, y + 1.0) - self.height_at(x, y - 1.0));
        let len = (dx * dx + dy * dy + 1.0).sqrt();
        [-dx / len, -dy / len, 1.0 / len]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Sphere {
        cx: f64,
        cy: f64,
        radius: f64,
    },
    HeightField(HeightField),
    /// A full-frame plane tilted by `tilt` toward `tilt_azimuth`.
    Plane {
        tilt: f64,
        tilt_azimuth: f64,
    },
}

impl Geometry {
    /// Normal at pixel coordinates `(x, y)` (column, row), or `None`
    /// off the geometry.
    pub fn normal_at(&self, x: f64, y: f64) -> Option<Vec3> {
        match self {
            Geometry::Sphere { cx, cy, radius } => {
                let dx = (x - cx) / radius;
                let dy = (y - cy) / radius;
                let d2 = dx * dx + dy * dy;
                (d2 < 1.0).then(|| [dx, dy, (1.0 - d2).sqrt()])
            }
            Geometry::HeightField(h) => Some(h.normal_at(x, y)),
            Geometry::Plane { tilt, tilt_azimuth } => {
                let (st, ct) = tilt.sin_cos();
                let (sa, ca) = tilt_azimuth.sin_cos();
                Some([st * ca, st * sa, ct])
            }
        }
    }

    fn validate(&self, height: usize, width: usize) -> Result<()> {
        match self {
            Geometry::Sphere { cx, cy, radius } => {
                let fits = *radius > 0.0
                    && cx - radius >= -0.5
                    && cy - radius >= -0.5
                    && cx + radius <= width as f64 - 0.5
                    && cy + radius <= height as f64 - 0.5;
                if !fits {
                    return Err(Error::InvalidInput(format!(
                        "sphere at ({cx}, {cy}) radius {radius} does not fit {height}x{width}"
                    )));
                }
            }
            Geometry::HeightField(h) => {
                if h.bumps.iter().any(|b| !(b.sigma > 0.0)) {
                    return Err(Error::InvalidInput("height field bump with nonpositive sigma".into()));
                }
            }
            Geometry::Plane { tilt, .. } => {
                if !(0.0..FRAC_PI_2).contains(tilt) {
                    return Err(Error::InvalidInput(format!("plane tilt {tilt} outside [0, pi/2)")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::Sphere { cx, cy, radius } => write!(f, "sphere(cx={cx:.3},cy={cy:.3},r={radius:.3})"),
            Geometry::HeightField(h) => write!(f, "heightfield(bumps={})", h.bumps.len()),
            Geometry::Plane { tilt, tilt_azimuth } => {
                write!(f, "plane(tilt={tilt:.4},azimuth={tilt_azimuth:.4})")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Shading {
    #[default]
    Constant,
    /// Unpolarized intensity proportional to `max(n_z, 0)`.
    LambertFrontal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub geometry: Geometry,
    pub material: Material,
    pub albedo: f64,
    pub shading: Shading,
}

impl Scene {
    pub fn new(geometry: Geometry, material: Material) -> Self {
        Scene {
            geometry,
            material,
            albedo: 0.5,
            shading: Shading::Constant,
        }
    }

    /// Sphere centered in a `height x width` image.
    pub fn centered_sphere(height: usize, width: usize, radius: f64, material: Material) -> Self {
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        Scene::new(Geometry::Sphere { cx, cy, radius }, material)
    }

    fn validate(&self, config: &RenderConfig) -> Result<()> {
        if !(self.albedo > 0.0 && self.albedo <= 1.0) {
            return Err(Error::InvalidInput(format!("albedo {} outside (0, 1]", self.albedo)));
        }
        self.geometry.validate(config.height, config.width)
    }

    fn unpolarized_intensity(&self, n: &Vec3) -> f64 {
        match self.shading {
            Shading::Constant => self.albedo,
            Shading::LambertFrontal => self.albedo * n[2].max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub height: usize,
    pub width: usize,
    pub angles: Vec<PolarizerAngle>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl RenderConfig {
    pub fn new(height: usize, width: usize) -> Self {
        RenderConfig {
            height,
            width,
            angles: PolarizerAngle::canonical(),
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig::new(128, 128)
    }
}

/// Analytic normals and coverage mask; normals are zero off the mask.
pub fn ground_truth(scene: &Scene, config: &RenderConfig) -> Result<(NormalMap, Mask)> {
    scene.validate(config)?;
    let (h, w) = (config.height, config.width);
    let mut normals = NormalMap::zeros(h, w);
    let mut mask = Mask::empty(h, w);
    for row in 0..h {
        for col in 0..w {
            if let Some(n) = scene.geometry.normal_at(col as f64, row as f64) {
                normals.set(row, col, n);
                mask.set(row, col, true);
            }
        }
    }
    Ok((normals, mask))
}

/// Phase of the transmitted sinusoid for a normal azimuth.
pub fn phase_for_azimuth(azimuth: f64, mode: ReflectionMode) -> f64 {
    match mode {
        ReflectionMode::Diffuse => wrap_pi(azimuth),
        ReflectionMode::Specular => wrap_pi(azimuth - FRAC_PI_2),
    }
}

/// Sinusoid parameters a pixel with normal `n` produces.
pub fn pixel_sinusoid(scene: &Scene, n: &Vec3) -> Result<SinusoidParams> {
    let zenith = n[2].clamp(-1.0, 1.0).acos().min(FRAC_PI_2);
    let azimuth = n[1].atan2(n[0]);
    let rho = scene.material.dop(zenith)?;
    let i_u = scene.unpolarized_intensity(n);
    Ok(SinusoidParams {
        i_mean: i_u,
        amplitude: i_u * rho,
        phase: phase_for_azimuth(azimuth, scene.material.mode()),
    })
}

/// Renders the polarized stack of `scene`.
pub fn render(scene: &Scene, config: &RenderConfig) -> Result<PolarizedStack> {
    let (normals, mask) = ground_truth(scene, config)?;
    render_from_normals(scene, config, &normals, &mask)
}

fn render_from_normals(
    scene: &Scene,
    config: &RenderConfig,
    normals: &NormalMap,
    mask: &Mask,
) -> Result<PolarizedStack> {
    if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise sigma {} must be >= 0",
            config.noise_sigma
        )));
    }
    let k = config.angles.len();
    let mut data = vec![0.0; config.height * config.width * k];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    for (i, n) in normals.data().iter().enumerate() {
        if !mask.bits()[i] {
            continue;
        }
        let params = pixel_sinusoid(scene, n)?;
        for (c, angle) in config.angles.iter().enumerate() {
            let mut v = params.eval(*angle);
            if config.noise_sigma > 0.0 {
                v += noise.sample(&mut rng);
            }
            data[i * k + c] = v.max(0.0);
        }
    }
    PolarizedStack::new(config.height, config.width, config.angles.clone(), data)
}

/// Capture conditions, modeled as an intensity scale and a noise multiplier.
impl Condition {
    pub fn intensity_scale(self) -> f64 {
        match self {
            Condition::Indoor => 0.6,
            Condition::Sunny => 1.0,
            Condition::Cloudy => 0.4,
        }
    }

    pub fn noise_scale(self) -> f64 {
        match self {
            Condition::Indoor => 1.0,
            Condition::Sunny => 0.5,
            Condition::Cloudy => 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub material: Material,
    /// Probability that an object is a sphere rather than a height field.
    pub sphere_fraction: f64,
    pub shading: Shading,
    /// Fraction of objects assigned to the test split.
    pub test_fraction: f64,
    /// Apply per-condition noise multipliers.
    pub condition_noise: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            material: Material::default(),
            sphere_fraction: 0.5,
            shading: Shading::LambertFrontal,
            test_fraction: 0.25,
            condition_noise: true,
        }
    }
}

/// Decorrelated stream seed for item `index` of a run seeded with `seed`.
pub fn stream_seed(seed: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A random object geometry that fits a `height x width` image.
pub fn random_geometry<R: Rng>(rng: &mut R, height: usize, width: usize, sphere_fraction: f64) -> Geometry {
    if rng.random::<f64>() < sphere_fraction {
        let size = height.min(width) as f64;
        let radius = size * rng.random_range(0.25..0.45);
        let margin_x = width as f64 - 1.0 - 2.0 * radius;
        let margin_y = height as f64 - 1.0 - 2.0 * radius;
        Geometry::Sphere {
            cx: radius + rng.random_range(0.0..=margin_x.max(0.0)),
            cy: radius + rng.random_range(0.0..=margin_y.max(0.0)),
            radius,
        }
    } else {
        let count = rng.random_range(3..=7);
        Geometry::HeightField(HeightField::random(rng, height, width, count))
    }
}

/// One rendered scene of a synthetic dataset.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub index: usize,
    pub scene: Scene,
    pub config: RenderConfig,
    pub object_id: String,
    pub condition: Condition,
    pub view: View,
}

impl SyntheticScene {
    pub fn render(&self) -> Result<SampleRecord> {
        let (normals, mask) = ground_truth(&self.scene, &self.config)?;
        let stack = render_from_normals(&self.scene, &self.config, &normals, &mask)?;
        Ok(SampleRecord {
            object_id: self.object_id.clone(),
            condition: self.condition,
            view: self.view,
            stack,
            normals,
            mask,
        })
    }
}

/// The last `ceil(n_objects * test_fraction)` objects form the test split.
pub fn object_partition(object: usize, n_objects: usize, test_fraction: f64) -> Partition {
    let n_test = (n_objects as f64 * test_fraction).ceil() as usize;
    if object + n_test >= n_objects {
        Partition::Test
    } else {
        Partition::Train
    }
}

pub fn object_id(object: usize) -> String {
    format!("obj{object:04}")
}

/// The scenes `make_dataset` renders: object `i / 3` under condition `i % 3`.
pub fn dataset_scenes(
    n_scenes: usize,
    config: &RenderConfig,
    seed: u64,
    options: &DatasetOptions,
) -> Vec<SyntheticScene> {
    (0..n_scenes)
        .map(|index| {
            let object = index / Condition::ALL.len();
            let condition = Condition::ALL[index % Condition::ALL.len()];
            let mut geo_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 1, object as u64));
            let geometry = random_geometry(&mut geo_rng, config.height, config.width, options.sphere_fraction);
            let albedo = geo_rng.random_range(0.5..1.0) * condition.intensity_scale();
            let noise_scale = if options.condition_noise {
                condition.noise_scale()
            } else {
                1.0
            };
            let scene = Scene {
                geometry,
                material: options.material,
                albedo,
                shading: options.shading,
            };
            let config = RenderConfig {
                noise_sigma: config.noise_sigma * noise_scale,
                seed: stream_seed(seed, 2, index as u64),
                ..config.clone()
            };
            SyntheticScene {
                index,
                scene,
                config,
                object_id: object_id(object),
                condition,
                view: View::Front,
            }
        })
        .collect()
}

/// Renders `n_scenes` random scenes into `out_dir` using the dataset
/// directory layout, with `manifest.txt` and `split.txt`.
pub fn make_dataset(
    n_scenes: usize,
    config: &RenderConfig,
    out_dir: &Path,
    seed: u64,
    options: &DatasetOptions,
) -> Result<Vec<SyntheticScene>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let scenes = dataset_scenes(n_scenes, config, seed, options);
    let mut manifest = String::new();
    for s in &scenes {
        let sample = s.render()?;
        write_sample(&sample, &sample.dir_in(out_dir))?;
        manifest.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            s.index,
            s.scene.geometry,
            s.scene.material.eta(),
            s.scene.material.mode(),
            s.config.noise_sigma
        ));
    }
    let manifest_path = out_dir.join("manifest.txt");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;

    let n_objects = n_scenes.div_ceil(Condition::ALL.len());
    let assignments: Vec<(String, Partition)> = (0..n_objects)
        .map(|o| (object_id(o), object_partition(o, n_objects, options.test_fraction)))
        .collect();
    write_split_file(&out_dir.join("split.txt"), &assignments)?;
    Ok(scenes)
}
