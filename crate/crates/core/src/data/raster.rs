//! The PSFP raster container.
//!
//! ```text
//! PSFP1\n
//! dtype=f32 dims=<H> <W> <C>\n
//! <H*W*C little-endian values, row-major, channel-last>
//! ```
//!
//! `dtype=f64` is accepted as well; it is used for parameter checkpoints.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"PSFP1\n";

#[derive(Debug, Clone, PartialEq)]
pub enum RasterData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl RasterData {
    pub fn len(&self) -> usize {
        match self {
            RasterData::F32(v) => v.len(),
            RasterData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype(&self) -> &'static str {
        match self {
            RasterData::F32(_) => "f32",
            RasterData::F64(_) => "f64",
        }
    }

    fn elem_size(&self) -> usize {
        match self {
            RasterData::F32(_) => 4,
            RasterData::F64(_) => 8,
        }
    }
}

/// An `H x W x C` array of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    channels: usize,
    data: RasterData,
}

impl fmt::Display for Raster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{} {}",
            self.height,
            self.width,
            self.channels,
            self.data.dtype()
        )
    }
}

impl Raster {
    pub fn new(height: usize, width: usize, channels: usize, data: RasterData) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidInput(format!(
                "raster dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "raster {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Raster {
            height,
            width,
            channels,
            data,
        })
    }

    /// Stores `values` as 32-bit reals.
    pub fn from_f64_as_f32(height: usize, width: usize, channels: usize, values: &[f64]) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            RasterData::F32(values.iter().map(|v| *v as f32).collect()),
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &RasterData {
        &self.data
    }

    /// Values widened to 64 bits.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            RasterData::F32(v) => v.iter().map(|x| *x as f64).collect(),
            RasterData::F64(v) => v.clone(),
        }
    }

    pub fn header(&self) -> String {
        format!(
            "dtype={} dims={} {} {}\n",
            self.data.dtype(),
            self.height,
            self.width,
            self.channels
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header();
        let mut out = Vec::with_capacity(MAGIC.len() + header.len() + self.data.len() * self.data.elem_size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(header.as_bytes());
        match &self.data {
            RasterData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            RasterData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    /// Parses a raster; `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::BadMagic(path.to_path_buf()));
        }
        let rest = &bytes[MAGIC.len()..];
        let header_parse = |reason: &str| Error::HeaderParse {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let nl = rest
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| header_parse("no header line"))?;
        let line = std::str::from_utf8(&rest[..nl]).map_err(|_| header_parse("header is not UTF-8"))?;
        let payload = &rest[nl + 1..];

        let mut tokens = line.split(' ');
        let dtype = tokens
            .next()
            .and_then(|t| t.strip_prefix("dtype="))
            .ok_or_else(|| header_parse("expected dtype=<type>"))?;
        let first_dim = tokens
            .next()
            .and_then(|t| t.strip_prefix("dims="))
            .ok_or_else(|| header_parse("expected dims=<H> <W> <C>"))?;
        let dims_tokens: Vec<&str> = std::iter::once(first_dim).chain(tokens).collect();
        if dims_tokens.len() != 3 {
            return Err(header_parse("expected exactly three dims"));
        }
        let mut dims = [0usize; 3];
        for (d, t) in dims.iter_mut().zip(&dims_tokens) {
            *d = t.parse().map_err(|_| header_parse(&format!("bad dim {t:?}")))?;
            if *d == 0 {
                return Err(header_parse("dims must be positive"));
            }
        }
        let count = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| header_parse("dims overflow"))?;
        let elem = match dtype {
            "f32" => 4,
            "f64" => 8,
            other => return Err(header_parse(&format!("unsupported dtype {other:?}"))),
        };
        let expected = count * elem;
        if payload.len() != expected {
            return Err(Error::TruncatedPayload {
                path: path.to_path_buf(),
                expected,
                found: payload.len(),
            });
        }
        let data = if elem == 4 {
            RasterData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        } else {
            RasterData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        };
        Raster::new(dims[0], dims[1], dims[2], data)
    }
}

/// Writes `raster`; values must be finite.
pub fn write_raster(raster: &Raster, path: &Path) -> Result<()> {
    let finite = match &raster.data {
        RasterData::F32(v) => v.iter().all(|x| x.is_finite()),
        RasterData::F64(v) => v.iter().all(|x| x.is_finite()),
    };
    if !finite {
        return Err(Error::NotFinite(format!("raster for {}", path.display())));
    }
    std::fs::write(path, raster.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    Raster::from_bytes(&bytes, path)
}
