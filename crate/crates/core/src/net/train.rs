//! Mini-batch training, validation and tiled inference.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::patches::Patch;
use crate::data::split::hold_out;
use crate::error::{Error, Result};
use crate::net::adam::{AdamState, DEFAULT_LEARNING_RATE};
use crate::net::graph::Graph;
use crate::net::tensor::Tensor;
use crate::net::unet::{UNet, UNetConfig};
use crate::normals::{NormalMap, Vec3};
use crate::polar::{Mask, PolarizedStack};
use crate::synth::stream_seed;

/// Pixels whose mean intensity is below this feed zeros to the network.
pub const MIN_MEAN_INTENSITY: f64 = 1e-6;

/// Writes one pixel's network input: each intensity over the pixel mean, minus one.
fn normalize_pixel(values: &[f64], out: &mut [f64]) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    for (o, v) in out.iter_mut().zip(values) {
        *o = if mean > MIN_MEAN_INTENSITY { v / mean - 1.0 } else { 0.0 };
    }
}

/// Planar `[K, H, W]` network input for a whole stack.
pub fn stack_to_input(stack: &PolarizedStack) -> Vec<f64> {
    let (h, w, k) = (stack.height(), stack.width(), stack.channels());
    let mut out = vec![0.0; k * h * w];
    let mut px = vec![0.0; k];
    for r in 0..h {
        for c in 0..w {
            normalize_pixel(stack.pixel(r, c), &mut px);
            for (ch, v) in px.iter().enumerate() {
                out[ch * h * w + r * w + c] = *v;
            }
        }
    }
    out
}

/// Network-ready arrays for a set of patches.
#[derive(Debug, Clone)]
pub struct Batch {
    pub input: Tensor,
    pub target: Vec<f64>,
    pub mask: Vec<bool>,
    pub pixels: usize,
}

/// Stacks `patches` into one batch; all must share side and channel count.
pub fn make_batch(patches: &[&Patch], in_channels: usize) -> Result<Batch> {
    let first = patches.first().ok_or_else(|| Error::Data("empty batch".into()))?;
    let side = first.side;
    let plane = side * side;
    let n = patches.len();
    let mut input = vec![0.0; n * in_channels * plane];
    let mut target = vec![0.0; n * 3 * plane];
    let mut mask = vec![false; n * plane];
    let mut px = vec![0.0; in_channels];
    for (b, p) in patches.iter().enumerate() {
        let s = &p.sample;
        if p.side != side {
            return Err(Error::Data(format!("patch side {} in a batch of side {side}", p.side)));
        }
        if s.stack.channels() != in_channels {
            return Err(Error::Data(format!(
                "patch of {} has {} channels, network expects {in_channels}",
                s.key(),
                s.stack.channels()
            )));
        }
        if p.row + side > s.height() || p.col + side > s.width() {
            return Err(Error::Data(format!(
                "patch at ({}, {}) exceeds {}",
                p.row,
                p.col,
                s.key()
            )));
        }
        for i in 0..side {
            for j in 0..side {
                let (r, c) = (p.row + i, p.col + j);
                let at = i * side + j;
                normalize_pixel(s.stack.pixel(r, c), &mut px);
                for (ch, v) in px.iter().enumerate() {
                    input[(b * in_channels + ch) * plane + at] = *v;
                }
                let nv = s.normals.get(r, c);
                for k in 0..3 {
                    target[(b * 3 + k) * plane + at] = nv[k];
                }
                mask[b * plane + at] = s.mask.get(r, c);
            }
        }
    }
    let pixels = mask.iter().filter(|&&m| m).count();
    Ok(Batch {
        input: Tensor::new(vec![n, in_channels, side, side], input)?,
        target,
        mask,
        pixels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub learning_rate: f64,
    /// Seeds the validation hold-out and the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 100,
            batch_size: 32,
            val_fraction: 0.2,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Pixel-weighted cosine loss over the epoch's batches.
    pub train_loss: f64,
    /// Pixel-weighted cosine loss on the validation patches after the epoch.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub initial_val_loss: Option<f64>,
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept; 0 means the initial ones.
    pub best_epoch: usize,
}

impl TrainHistory {
    /// `epoch,train_loss,val_loss` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, val));
        }
        out
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.val_loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: UNet,
    pub history: TrainHistory,
}

fn data_loss(
    net: &UNet,
    batch: &Batch,
    g: &mut Graph,
    trainable: bool,
) -> Result<(crate::net::graph::Var, Vec<crate::net::graph::Var>)> {
    let vars = if trainable {
        net.bind(g)
    } else {
        net.params().iter().map(|t| g.input(t.clone())).collect()
    };
    let x = g.input(batch.input.clone());
    let y = net.forward(g, &vars, x)?;
    let loss = g.cosine_loss(y, &batch.target, &batch.mask)?;
    Ok((loss, vars))
}

/// Pixel-weighted mean cosine loss of `net` on `patches`.
pub fn evaluate_loss(net: &UNet, patches: &[Patch], batch_size: usize) -> Result<f64> {
    let (mut total, mut pixels) = (0.0, 0usize);
    for chunk in patches.chunks(batch_size.max(1)) {
        let refs: Vec<&Patch> = chunk.iter().collect();
        let batch = make_batch(&refs, net.config().in_channels)?;
        if batch.pixels == 0 {
            continue;
        }
        let mut g = Graph::new();
        let (loss, _) = data_loss(net, &batch, &mut g, false)?;
        total += g.value(loss).item() * batch.pixels as f64;
        pixels += batch.pixels;
    }
    if pixels == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(total / pixels as f64)
}

/// One optimizer step on `batch`; returns the data loss before the update.
pub fn train_step(net: &mut UNet, adam: &mut AdamState, batch: &Batch) -> Result<f64> {
    let mut g = Graph::new();
    let (loss, vars) = data_loss(net, batch, &mut g, true)?;
    let total = match net.l2_penalty(&mut g, &vars)? {
        Some(p) => g.add(loss, p)?,
        None => loss,
    };
    let mut grads = g.backward(total)?;
    let grads: Vec<Tensor> = vars
        .iter()
        .zip(net.params())
        .map(|(v, p)| grads.take_or_zeros(*v, p.shape()))
        .collect();
    let value = g.value(loss).item();
    adam.step(net.params_mut(), &grads)?;
    Ok(value)
}

/// Holds out `val_fraction` of `patches` and trains on the rest.
pub fn train(config: UNetConfig, patches: Vec<Patch>, options: &TrainOptions) -> Result<TrainOutcome> {
    train_with_progress(config, patches, options, |_| {})
}

pub fn train_with_progress(
    config: UNetConfig,
    patches: Vec<Patch>,
    options: &TrainOptions,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    if !(0.0..1.0).contains(&options.val_fraction) {
        return Err(Error::InvalidInput(format!(
            "validation fraction {} outside [0, 1)",
            options.val_fraction
        )));
    }
    let (train, val) = hold_out(patches, options.val_fraction, stream_seed(options.seed, 10, 0));
    train_with_validation(config, &train, &val, options, on_epoch)
}

/// Trains on `train`, keeping the parameters with the lowest loss on `val`
/// (or on `train` when `val` is empty).
pub fn train_with_validation(
    config: UNetConfig,
    train: &[Patch],
    val: &[Patch],
    options: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    let mut net = UNet::new(config)?;
    if train.is_empty() {
        return Err(Error::Data("no training patches".into()));
    }
    if options.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    if !(options.learning_rate >= 0.0 && options.learning_rate.is_finite()) {
        return Err(Error::InvalidInput(format!("learning rate {}", options.learning_rate)));
    }
    for p in train.iter().chain(val) {
        net.config()
            .check_side(p.side, p.side)
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    let mut history = TrainHistory::default();
    if options.epochs == 0 {
        return Ok(TrainOutcome { net, history });
    }
    let score = |net: &UNet| -> Result<Option<f64>> {
        if val.is_empty() {
            Ok(None)
        } else {
            evaluate_loss(net, val, options.batch_size).map(Some)
        }
    };
    history.initial_val_loss = score(&net)?;
    let mut best = (history.initial_val_loss.unwrap_or(f64::INFINITY), net.clone());
    let mut adam = AdamState::new(net.params(), options.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(options.seed, 11, 0));
    for epoch in 1..=options.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut pixels) = (0.0, 0usize);
        for chunk in order.chunks(options.batch_size) {
            let refs: Vec<&Patch> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = make_batch(&refs, net.config().in_channels)?;
            if batch.pixels == 0 {
                continue;
            }
            let loss = train_step(&mut net, &mut adam, &batch)?;
            total += loss * batch.pixels as f64;
            pixels += batch.pixels;
        }
        if pixels == 0 {
            return Err(Error::EmptyMask);
        }
        let stats = EpochStats {
            epoch,
            train_loss: total / pixels as f64,
            val_loss: score(&net)?,
        };
        let key = stats.val_loss.unwrap_or(stats.train_loss);
        if key < best.0 || (val.is_empty() && epoch == 1) {
            best = (key, net.clone());
            history.best_epoch = epoch;
        }
        on_epoch(&stats);
        history.epochs.push(stats);
    }
    Ok(TrainOutcome { net: best.1, history })
}

/// Central tile size of [`infer_normals`].
pub const INFER_TILE: usize = 128;

/// Runs the network over a full image in overlapping tiles and returns unit
/// normals. Zero-length outputs and pixels outside `mask` become zero vectors.
pub fn infer_normals(net: &UNet, stack: &PolarizedStack, mask: Option<&Mask>) -> Result<NormalMap> {
    let (h, w) = (stack.height(), stack.width());
    if let Some(m) = mask {
        m.check_dims(h, w)?;
    }
    let k = net.config().in_channels;
    if stack.channels() != k {
        return Err(Error::ShapeMismatch(format!(
            "stack has {} channels, network expects {k}",
            stack.channels()
        )));
    }
    let unit = net.config().side_multiple();
    let halo = 16usize.div_ceil(unit) * unit;
    let tile = INFER_TILE.div_ceil(unit) * unit;
    let win = tile + 2 * halo;
    let input = stack_to_input(stack);
    let mut out = NormalMap::zeros(h, w);
    for r0 in (0..h).step_by(tile) {
        for c0 in (0..w).step_by(tile) {
            let mut x = vec![0.0; k * win * win];
            for ch in 0..k {
                for i in 0..win {
                    let r = (r0 + i) as isize - halo as isize;
                    if r < 0 || r >= h as isize {
                        continue;
                    }
                    for j in 0..win {
                        let c = (c0 + j) as isize - halo as isize;
                        if c < 0 || c >= w as isize {
                            continue;
                        }
                        x[(ch * win + i) * win + j] = input[ch * h * w + r as usize * w + c as usize];
                    }
                }
            }
            let y = net.predict(Tensor::new(vec![1, k, win, win], x)?)?;
            let yd = y.data();
            let plane = win * win;
            for i in 0..tile.min(h - r0) {
                for j in 0..tile.min(w - c0) {
                    let (r, c) = (r0 + i, c0 + j);
                    if mask.is_some_and(|m| !m.get(r, c)) {
                        continue;
                    }
                    let at = (i + halo) * win + j + halo;
                    let v: Vec3 = [yd[at], yd[plane + at], yd[2 * plane + at]];
                    out.set(r, c, crate::normals::normalized(&v).unwrap_or([0.0; 3]));
                }
            }
        }
    }
    Ok(out)
}
