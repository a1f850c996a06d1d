//! Parameter checkpoints: an `f64` raster with every tensor flattened in
//! layout order, plus a `.cfg` text sidecar holding the configuration and the
//! tensor names and shapes.

use std::path::{Path, PathBuf};

use crate::data::raster::{read_raster, write_raster, Raster, RasterData};
use crate::error::{Error, Result};
use crate::net::tensor::Tensor;
use crate::net::unet::{UNet, UNetConfig};

/// The sidecar path belonging to a checkpoint raster.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("cfg")
}

pub fn config_to_text(config: &UNetConfig) -> String {
    format!(
        "depth={}\nbase_width={}\nin_channels={}\nout_channels={}\nl2_factor={}\nseed={}\nblocks_per_stage={}\n",
        config.depth,
        config.base_width,
        config.in_channels,
        config.out_channels,
        config.l2_factor,
        config.seed,
        config.blocks_per_stage
    )
}

pub fn save_checkpoint(net: &UNet, path: &Path) -> Result<()> {
    let mut text = config_to_text(net.config());
    let mut values = Vec::with_capacity(net.param_count());
    for (spec, t) in net.layout().iter().zip(net.params()) {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        text.push_str(&format!("param={} {}\n", spec.name, dims.join(" ")));
        values.extend_from_slice(t.data());
    }
    let raster = Raster::new(values.len(), 1, 1, RasterData::F64(values))?;
    write_raster(&raster, path)?;
    let side = sidecar_path(path);
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Tensor names with their shapes, in file order.
type TensorList = Vec<(String, Vec<usize>)>;

fn parse_sidecar(path: &Path, text: &str) -> Result<(UNetConfig, TensorList)> {
    let bad = |line: usize, why: String| Error::Data(format!("{}:{line}: {why}", path.display()));
    let mut config = UNetConfig::default();
    let mut seen = std::collections::BTreeSet::new();
    let mut params = Vec::new();
    for (n, line) in text.lines().enumerate().map(|(n, l)| (n + 1, l.trim())) {
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(n, "expected key=value".into()))?;
        if key == "param" {
            let mut parts = value.split(' ');
            let name = parts.next().unwrap_or_default().to_string();
            let dims = parts
                .map(|d| d.parse::<usize>().map_err(|_| bad(n, format!("bad dimension {d:?}"))))
                .collect::<Result<Vec<_>>>()?;
            params.push((name, dims));
            continue;
        }
        if !seen.insert(key.to_string()) {
            return Err(bad(n, format!("duplicate key {key}")));
        }
        let int = || {
            value
                .parse::<usize>()
                .map_err(|_| bad(n, format!("bad integer {value:?}")))
        };
        match key {
            "depth" => config.depth = int()?,
            "base_width" => config.base_width = int()?,
            "in_channels" => config.in_channels = int()?,
            "out_channels" => config.out_channels = int()?,
            "blocks_per_stage" => config.blocks_per_stage = int()?,
            "seed" => config.seed = value.parse().map_err(|_| bad(n, format!("bad seed {value:?}")))?,
            "l2_factor" => config.l2_factor = value.parse().map_err(|_| bad(n, format!("bad number {value:?}")))?,
            other => return Err(bad(n, format!("unknown key {other:?}"))),
        }
    }
    Ok((config, params))
}

pub fn load_checkpoint(path: &Path) -> Result<UNet> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(side.clone())
        } else {
            Error::io(&side, e)
        }
    })?;
    let (config, entries) = parse_sidecar(&side, &text)?;
    let raster = read_raster(path)?;
    let RasterData::F64(values) = raster.data() else {
        return Err(Error::Data(format!(
            "{}: checkpoint payload must be f64",
            path.display()
        )));
    };
    let layout = crate::net::unet::param_layout(&config);
    if entries.len() != layout.len() {
        return Err(Error::Data(format!(
            "{}: lists {} tensors, configuration needs {}",
            side.display(),
            entries.len(),
            layout.len()
        )));
    }
    let mut offset = 0;
    let mut params = Vec::with_capacity(layout.len());
    for ((name, dims), spec) in entries.iter().zip(&layout) {
        if *name != spec.name || *dims != spec.shape {
            return Err(Error::Data(format!(
                "{}: tensor {name} {dims:?} where {} {:?} was expected",
                side.display(),
                spec.name,
                spec.shape
            )));
        }
        let n: usize = dims.iter().product();
        let chunk = values
            .get(offset..offset + n)
            .ok_or_else(|| Error::Data(format!("{}: payload too short", path.display())))?;
        params.push(Tensor::new(dims.clone(), chunk.to_vec())?);
        offset += n;
    }
    if offset != values.len() {
        return Err(Error::Data(format!(
            "{}: {} trailing values",
            path.display(),
            values.len() - offset
        )));
    }
    UNet::from_params(config, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.psfp");
        let config = UNetConfig {
            l2_factor: 0.1 + 0.2,
            seed: u64::MAX,
            ..Default::default()
        };
        let net = UNet::new(config).unwrap();
        save_checkpoint(&net, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), net);
    }

    #[test]
    fn tampered_sidecar_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.psfp");
        let net = UNet::new(UNetConfig::default()).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let side = sidecar_path(&path);
        let text = std::fs::read_to_string(&side).unwrap();
        std::fs::write(&side, text.replace("base_width=8", "base_width=4")).unwrap();
        assert!(load_checkpoint(&path).is_err());
        std::fs::write(&side, format!("{text}colour=blue\n")).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Data(_))));
        std::fs::remove_file(&side).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::MissingFile(_))));
    }
}
