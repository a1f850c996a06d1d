//! U-Net with a residual encoder.
//!
//! A 3x3 stem keeps full resolution and feeds the first skip. Each encoder
//! stage halves the resolution with a strided residual block. Stage widths
//! are `w, w, 2w, 4w, ...`. Each decoder level upsamples, concatenates the
//! matching skip and applies two 3x3 convolutions. A linear 3x3 head maps to
//! the output channels.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::graph::{Graph, Var};
use crate::net::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct UNetConfig {
    pub depth: usize,
    pub base_width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub l2_factor: f64,
    pub seed: u64,
    /// Residual blocks per encoder stage.
    pub blocks_per_stage: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            depth: 3,
            base_width: 8,
            in_channels: 4,
            out_channels: 3,
            l2_factor: 1e-4,
            seed: 0,
            blocks_per_stage: 1,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.depth < 2 {
            return bad(format!("depth must be at least 2, got {}", self.depth));
        }
        if self.depth > 12 {
            return bad(format!("depth {} is unreasonably large", self.depth));
        }
        if self.base_width == 0 || self.in_channels == 0 || self.out_channels == 0 || self.blocks_per_stage == 0 {
            return bad("widths, channel counts and blocks per stage must be positive".into());
        }
        if !(self.l2_factor >= 0.0 && self.l2_factor.is_finite()) {
            return bad(format!(
                "l2 factor must be finite and non-negative, got {}",
                self.l2_factor
            ));
        }
        Ok(())
    }

    /// Patch sides must be multiples of this.
    pub fn side_multiple(&self) -> usize {
        1 << self.depth
    }

    pub fn check_side(&self, height: usize, width: usize) -> Result<()> {
        let m = self.side_multiple();
        if height == 0 || width == 0 || !height.is_multiple_of(m) || !width.is_multiple_of(m) {
            return Err(Error::ShapeMismatch(format!(
                "input {height}x{width} is not a positive multiple of {m}"
            )));
        }
        Ok(())
    }

    /// Channels after encoder stage `s` (stage 0 is the stem).
    pub fn stage_width(&self, s: usize) -> usize {
        if s <= 2 {
            self.base_width
        } else {
            self.base_width << (s - 2)
        }
    }
}

impl fmt::Display for UNetConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "depth={} width={} in={} out={} l2={} blocks={} seed={}",
            self.depth,
            self.base_width,
            self.in_channels,
            self.out_channels,
            self.l2_factor,
            self.blocks_per_stage,
            self.seed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// Name, shape and role of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    pub fan_in: usize,
}

fn conv_specs(out: &mut Vec<ParamSpec>, name: &str, o: usize, c: usize, k: usize) {
    out.push(ParamSpec {
        name: format!("{name}.w"),
        shape: vec![o, c, k, k],
        kind: ParamKind::Weight,
        fan_in: c * k * k,
    });
    out.push(ParamSpec {
        name: format!("{name}.b"),
        shape: vec![o],
        kind: ParamKind::Bias,
        fan_in: c * k * k,
    });
}

/// Ordered parameter layout for `config`.
pub fn param_layout(config: &UNetConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let w = config.base_width;
    conv_specs(&mut out, "stem", w, config.in_channels, 3);
    for s in 1..=config.depth {
        let c = config.stage_width(s);
        for b in 0..config.blocks_per_stage {
            let cin = if b == 0 { config.stage_width(s - 1) } else { c };
            let name = format!("enc{s}.{b}");
            conv_specs(&mut out, &format!("{name}.conv1"), c, cin, 3);
            conv_specs(&mut out, &format!("{name}.conv2"), c, c, 3);
            if b == 0 {
                conv_specs(&mut out, &format!("{name}.proj"), c, cin, 1);
            }
        }
    }
    let mut cur = config.stage_width(config.depth);
    for l in (1..=config.depth).rev() {
        let half = cur.div_ceil(2);
        let skip = config.stage_width(l - 1);
        out.push(ParamSpec {
            name: format!("up{l}.w"),
            shape: vec![cur, half, 2, 2],
            kind: ParamKind::Weight,
            fan_in: cur,
        });
        out.push(ParamSpec {
            name: format!("up{l}.b"),
            shape: vec![half],
            kind: ParamKind::Bias,
            fan_in: cur,
        });
        conv_specs(&mut out, &format!("dec{l}.conv1"), skip, half + skip, 3);
        conv_specs(&mut out, &format!("dec{l}.conv2"), skip, skip, 3);
        cur = skip;
    }
    conv_specs(&mut out, "head", config.out_channels, cur, 3);
    out
}

/// Parameters of a residual block; `proj` is the optional 1x1 skip projection.
#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub conv1: (Var, Var),
    pub conv2: (Var, Var),
    pub proj: Option<(Var, Var)>,
}

/// `relu(skip(x) + conv2(relu(conv1(x))))`, with `conv1` carrying the stride.
pub fn residual_block(g: &mut Graph, x: Var, p: &BlockVars, stride: usize) -> Result<Var> {
    let h = g.conv2d(x, p.conv1.0, Some(p.conv1.1), stride, 1)?;
    let h = g.relu(h);
    let f = g.conv2d(h, p.conv2.0, Some(p.conv2.1), 1, 1)?;
    let skip = match p.proj {
        Some((w, b)) => g.conv2d(x, w, Some(b), stride, 0)?,
        None => x,
    };
    let sum = g.add(skip, f)?;
    Ok(g.relu(sum))
}

/// Network weights in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct UNet {
    config: UNetConfig,
    layout: Vec<ParamSpec>,
    params: Vec<Tensor>,
}

impl UNet {
    /// Fan-in scaled uniform weights from `config.seed`, zero biases.
    pub fn new(config: UNetConfig) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = layout
            .iter()
            .map(|s| match s.kind {
                ParamKind::Bias => Tensor::zeros(&s.shape),
                ParamKind::Weight => {
                    let bound = (6.0 / s.fan_in as f64).sqrt();
                    let n = s.shape.iter().product();
                    Tensor::new(
                        s.shape.clone(),
                        (0..n).map(|_| rng.random_range(-bound..bound)).collect(),
                    )
                    .expect("layout shape")
                }
            })
            .collect();
        Ok(UNet { config, layout, params })
    }

    pub fn zeros(config: UNetConfig) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(&config);
        let params = layout.iter().map(|s| Tensor::zeros(&s.shape)).collect();
        Ok(UNet { config, layout, params })
    }

    /// Rebuilds a network from stored tensors, checking them against the layout.
    pub fn from_params(config: UNetConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(&config);
        if layout.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        for (s, t) in layout.iter().zip(&params) {
            if s.shape != t.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    s.name,
                    t.shape(),
                    s.shape
                )));
            }
            if !t.is_finite() {
                return Err(Error::NotFinite(format!("parameter {}", s.name)));
            }
        }
        Ok(UNet { config, layout, params })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn layout(&self) -> &[ParamSpec] {
        &self.layout
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Places every parameter on the tape as a trainable leaf.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|t| g.param(t.clone())).collect()
    }

    /// Records the forward pass of `x` (`[N, in, H, W]`) using bound `vars`.
    pub fn forward(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        forward_with(&self.config, &self.layout, g, vars, x)
    }

    /// `l2_factor * sum of squared convolution weights`, or `None` when the factor is 0.
    pub fn l2_penalty(&self, g: &mut Graph, vars: &[Var]) -> Result<Option<Var>> {
        if self.config.l2_factor == 0.0 {
            return Ok(None);
        }
        let mut total: Option<Var> = None;
        for (s, v) in self.layout.iter().zip(vars) {
            if s.kind != ParamKind::Weight {
                continue;
            }
            let sq = g.sum_squares(*v);
            total = Some(match total {
                Some(t) => g.add(t, sq)?,
                None => sq,
            });
        }
        Ok(total.map(|t| g.scale(t, self.config.l2_factor)))
    }

    /// Forward pass without recording gradients.
    pub fn predict(&self, input: Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars: Vec<Var> = self.params.iter().map(|t| g.input(t.clone())).collect();
        let x = g.input(input);
        let y = self.forward(&mut g, &vars, x)?;
        Ok(g.value(y).clone())
    }
}

fn forward_with(config: &UNetConfig, layout: &[ParamSpec], g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
    if vars.len() != layout.len() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} parameter vars, got {}",
            layout.len(),
            vars.len()
        )));
    }
    let [_, c, h, w] = g.value(x).dims4("network input")?;
    if c != config.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "network expects {} input channels, got {c}",
            config.in_channels
        )));
    }
    config.check_side(h, w)?;
    let index: BTreeMap<&str, Var> = layout.iter().zip(vars).map(|(s, v)| (s.name.as_str(), *v)).collect();
    let p = |name: String| index[name.as_str()];
    let conv = |name: &str| (p(format!("{name}.w")), p(format!("{name}.b")));

    let (sw, sb) = conv("stem");
    let stem = g.conv2d(x, sw, Some(sb), 1, 1)?;
    let mut feat = g.relu(stem);
    let mut skips = vec![feat];
    for s in 1..=config.depth {
        for b in 0..config.blocks_per_stage {
            let name = format!("enc{s}.{b}");
            let block = BlockVars {
                conv1: conv(&format!("{name}.conv1")),
                conv2: conv(&format!("{name}.conv2")),
                proj: (b == 0).then(|| conv(&format!("{name}.proj"))),
            };
            feat = residual_block(g, feat, &block, if b == 0 { 2 } else { 1 })?;
        }
        skips.push(feat);
    }
    for l in (1..=config.depth).rev() {
        let (uw, ub) = conv(&format!("up{l}"));
        let up = g.upconv2x(feat, uw, Some(ub))?;
        let cat = g.concat_channels(up, skips[l - 1])?;
        let (w1, b1) = conv(&format!("dec{l}.conv1"));
        let y = g.conv2d(cat, w1, Some(b1), 1, 1)?;
        let y = g.relu(y);
        let (w2, b2) = conv(&format!("dec{l}.conv2"));
        let y = g.conv2d(y, w2, Some(b2), 1, 1)?;
        feat = g.relu(y);
    }
    let (hw, hb) = conv("head");
    g.conv2d(feat, hw, Some(hb), 1, 1)
}
