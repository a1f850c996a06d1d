//! Dense surface-normal fields.

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// `a / |a|`, or `None` for a zero vector.
pub fn normalized(a: &Vec3) -> Option<Vec3> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

/// Angle between two unit vectors in degrees.
pub fn angle_deg(a: &Vec3, b: &Vec3) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos().to_degrees()
}

/// `H x W` field of camera-space normals: x along columns, y along rows,
/// z toward the camera.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    height: usize,
    width: usize,
    data: Vec<Vec3>,
}

impl NormalMap {
    pub fn new(height: usize, width: usize, data: Vec<Vec3>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "normal map {height}x{width} needs {} vectors, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(NormalMap { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        NormalMap {
            height,
            width,
            data: vec![[0.0; 3]; height * width],
        }
    }

    /// Every pixel set to `n`.
    pub fn constant(height: usize, width: usize, n: Vec3) -> Self {
        NormalMap {
            height,
            width,
            data: vec![n; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[Vec3] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Vec3] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Vec3 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, n: Vec3) {
        self.data[row * self.width + col] = n;
    }

    pub fn same_dims(&self, other: &NormalMap) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::DimensionMismatch(format!(
                "normal maps {}x{} and {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    /// Applies `f` to every vector.
    pub fn map(&self, f: impl Fn(Vec3) -> Vec3) -> NormalMap {
        NormalMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|n| f(*n)).collect(),
        }
    }
}
