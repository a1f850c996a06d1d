//! A pinned desk-scale training run on rendered synthetic scenes, with a
//! held-out comparison against the constant frontal predictor.

use std::sync::Arc;

use crate::data::patches::{extract_patches, Patch, PatchOptions};
use crate::data::sample::SampleRecord;
use crate::data::split::Partition;
use crate::error::Result;
use crate::eval::mae_stats;
use crate::net::train::{infer_normals, train_with_progress, EpochStats, TrainOptions, TrainOutcome};
use crate::net::unet::{UNet, UNetConfig};
use crate::normals::NormalMap;
use crate::synth::{dataset_scenes, object_partition, DatasetOptions, RenderConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct DeskRecipe {
    pub scenes: usize,
    /// Side of the rendered square images.
    pub image_side: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub net: UNetConfig,
    pub train: TrainOptions,
}

impl Default for DeskRecipe {
    fn default() -> Self {
        DeskRecipe {
            scenes: 240,
            image_side: 256,
            noise_sigma: 0.01,
            seed: 7,
            net: UNetConfig::default(),
            train: TrainOptions {
                epochs: 10,
                batch_size: 8,
                learning_rate: 1e-3,
                seed: 7,
                ..Default::default()
            },
        }
    }
}

/// Training patches from train objects and whole samples from test objects.
#[derive(Debug, Clone)]
pub struct DeskData {
    pub train: Vec<Patch>,
    pub test: Vec<SampleRecord>,
}

/// Held-out mean angular errors in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldOut {
    pub network_deg: f64,
    pub frontal_deg: f64,
    pub pixels: usize,
}

impl DeskRecipe {
    pub fn data(&self) -> Result<DeskData> {
        let render = RenderConfig::new(self.image_side, self.image_side).with_noise(self.noise_sigma);
        let options = DatasetOptions::default();
        let scenes = dataset_scenes(self.scenes, &render, self.seed, &options);
        let n_objects = self.scenes.div_ceil(3);
        let mut data = DeskData {
            train: Vec::new(),
            test: Vec::new(),
        };
        for s in &scenes {
            let sample = s.render()?;
            match object_partition(s.index / 3, n_objects, options.test_fraction) {
                Partition::Train => data
                    .train
                    .extend(extract_patches(&Arc::new(sample), &PatchOptions::default())?),
                Partition::Test => data.test.push(sample),
            }
        }
        Ok(data)
    }

    pub fn run(&self, train: Vec<Patch>, on_epoch: impl FnMut(&EpochStats)) -> Result<TrainOutcome> {
        train_with_progress(self.net.clone(), train, &self.train, on_epoch)
    }
}

pub fn held_out_mae(net: &UNet, samples: &[SampleRecord]) -> Result<HeldOut> {
    let (mut network, mut frontal, mut pixels) = (0.0, 0.0, 0);
    for s in samples {
        let pred = infer_normals(net, &s.stack, Some(&s.mask))?;
        let flat = NormalMap::constant(s.height(), s.width(), [0.0, 0.0, 1.0]);
        let a = mae_stats(&pred, &s.normals, &s.mask)?;
        network += a.sum_deg;
        frontal += mae_stats(&flat, &s.normals, &s.mask)?.sum_deg;
        pixels += a.pixels;
    }
    let per = |sum: f64| if pixels == 0 { f64::NAN } else { sum / pixels as f64 };
    Ok(HeldOut {
        network_deg: per(network),
        frontal_deg: per(frontal),
        pixels,
    })
}
