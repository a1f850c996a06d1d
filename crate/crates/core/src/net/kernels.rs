//! Convolution kernels on raw NCHW buffers.
//!
//! Convolutions go through im2col and a tiled matrix product. All
//! reductions run in a fixed order so results are reproducible.

/// Geometry of a 2-d cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeom {
    pub fn new(input: [usize; 4], out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Option<Self> {
        let [batch, in_channels, height, width] = input;
        if stride == 0 || kernel == 0 || height + 2 * padding < kernel || width + 2 * padding < kernel {
            return None;
        }
        Some(ConvGeom {
            batch,
            in_channels,
            height,
            width,
            out_channels,
            kernel,
            stride,
            padding,
            out_height: (height + 2 * padding - kernel) / stride + 1,
            out_width: (width + 2 * padding - kernel) / stride + 1,
        })
    }

    fn patch_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_pixels(&self) -> usize {
        self.out_height * self.out_width
    }

    fn in_pixels(&self) -> usize {
        self.height * self.width
    }

    /// Output columns `[lo, hi)` whose input column `ox * stride + kx - pad` is in range.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let (s, p, w) = (self.stride, self.padding, self.width);
        let lo = if kx >= p { 0 } else { (p - kx).div_ceil(s) };
        let hi = if w + p > kx {
            ((w + p - kx - 1) / s + 1).min(self.out_width)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let (ho, wo, k, s, p) = (self.out_height, self.out_width, self.kernel, self.stride, self.padding);
        let npix = ho * wo;
        for ci in 0..self.in_channels {
            let plane = &x[ci * self.in_pixels()..(ci + 1) * self.in_pixels()];
            for ky in 0..k {
                for kx in 0..k {
                    let r = (ci * k + ky) * k + kx;
                    let dst = &mut cols[r * npix..(r + 1) * npix];
                    let (lo, hi) = self.valid_cols(kx);
                    for oy in 0..ho {
                        let row = &mut dst[oy * wo..(oy + 1) * wo];
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= self.height as isize {
                            row.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        row[..lo].fill(0.0);
                        row[hi..].fill(0.0);
                        if s == 1 {
                            let start = lo + kx - p;
                            row[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                        } else {
                            for ox in lo..hi {
                                row[ox] = src[ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let (ho, wo, k, s, p) = (self.out_height, self.out_width, self.kernel, self.stride, self.padding);
        let npix = ho * wo;
        for ci in 0..self.in_channels {
            let plane = &mut dx[ci * self.in_pixels()..(ci + 1) * self.in_pixels()];
            for ky in 0..k {
                for kx in 0..k {
                    let r = (ci * k + ky) * k + kx;
                    let src = &cols[r * npix..(r + 1) * npix];
                    let (lo, hi) = self.valid_cols(kx);
                    for oy in 0..ho {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let row = &src[oy * wo..(oy + 1) * wo];
                        let dst = &mut plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        for ox in lo..hi {
                            dst[ox * s + kx - p] += row[ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c[m x n] += a[m x k] * b[k x n]`, all row-major.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime.
            unsafe { matmul_acc_avx512(a, b, c, m, k, n) };
            return;
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            unsafe { matmul_acc_avx2(a, b, c, m, k, n) };
            return;
        }
    }
    matmul_acc_body(a, b, c, m, k, n);
}

/// `c[m x k] += a[m x n] * b[k x n]^T`: dot products of rows.
pub(crate) fn matmul_nt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    assert!(a.len() >= m * n && b.len() >= k * n && c.len() >= m * k);
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime.
            unsafe { matmul_nt_acc_avx512(a, b, c, m, k, n) };
            return;
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            unsafe { matmul_nt_acc_avx2(a, b, c, m, k, n) };
            return;
        }
    }
    matmul_nt_acc_body(a, b, c, m, k, n);
}

// The wide variants compile the same element-wise arithmetic with wider
// vectors; no operation is fused or reordered, so results are identical.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn matmul_acc_avx2(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    matmul_acc_body(a, b, c, m, k, n);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn matmul_nt_acc_avx2(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    matmul_nt_acc_body(a, b, c, m, k, n);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn matmul_acc_avx512(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    matmul_acc_body(a, b, c, m, k, n);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn matmul_nt_acc_avx512(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    matmul_nt_acc_body(a, b, c, m, k, n);
}

/// Columns held in registers by the matrix kernels.
const LANES: usize = 8;
/// Rows handled together by the matrix kernels.
const ROWS: usize = 4;

#[inline(always)]
fn matmul_acc_body(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    let mut i = 0;
    while i + ROWS <= m {
        matmul_rows::<ROWS>(a, b, c, i, k, n);
        i += ROWS;
    }
    while i < m {
        matmul_rows::<1>(a, b, c, i, k, n);
        i += 1;
    }
}

/// Rows `i..i + R` of `c += a * b`.
#[inline(always)]
fn matmul_rows<const R: usize>(a: &[f64], b: &[f64], c: &mut [f64], i: usize, k: usize, n: usize) {
    let full = n - n % LANES;
    let a = &a[i * k..(i + R) * k];
    let c = &mut c[i * n..(i + R) * n];
    for j in (0..full).step_by(LANES) {
        let mut acc = [[0.0f64; LANES]; R];
        for q in 0..R {
            acc[q].copy_from_slice(&c[q * n + j..q * n + j + LANES]);
        }
        for p in 0..k {
            let bp: &[f64; LANES] = b[p * n + j..p * n + j + LANES].try_into().unwrap();
            for q in 0..R {
                let w = a[q * k + p];
                for l in 0..LANES {
                    acc[q][l] += w * bp[l];
                }
            }
        }
        for q in 0..R {
            c[q * n + j..q * n + j + LANES].copy_from_slice(&acc[q]);
        }
    }
    for q in 0..R {
        for j in full..n {
            let mut v = c[q * n + j];
            for p in 0..k {
                v += a[q * k + p] * b[p * n + j];
            }
            c[q * n + j] = v;
        }
    }
}

#[inline(always)]
fn reduce_lanes(acc: &[f64; LANES]) -> f64 {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Dot product with `LANES` interleaved partial sums.
#[inline(always)]
fn lane_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = reduce_lanes(&acc);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline(always)]
fn matmul_nt_acc_body(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    let full = n - n % LANES;
    for i in 0..m {
        let ar = &a[i * n..(i + 1) * n];
        let mut p = 0;
        while p + ROWS <= k {
            let mut acc = [[0.0f64; LANES]; ROWS];
            for j in (0..full).step_by(LANES) {
                let x: &[f64; LANES] = ar[j..j + LANES].try_into().unwrap();
                for (q, row) in acc.iter_mut().enumerate() {
                    let y: &[f64; LANES] = b[(p + q) * n + j..(p + q) * n + j + LANES].try_into().unwrap();
                    for l in 0..LANES {
                        row[l] += x[l] * y[l];
                    }
                }
            }
            for (q, row) in acc.iter().enumerate() {
                let mut s = reduce_lanes(row);
                for j in full..n {
                    s += ar[j] * b[(p + q) * n + j];
                }
                c[i * k + p + q] += s;
            }
            p += ROWS;
        }
        for p in p..k {
            c[i * k + p] += lane_dot(ar, &b[p * n..(p + 1) * n]);
        }
    }
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}

/// `out = conv(x, weight) + bias`; `weight` is `[O, C, k, k]`.
pub fn conv2d_forward(g: &ConvGeom, x: &[f64], weight: &[f64], bias: Option<&[f64]>, out: &mut [f64]) {
    let rows = g.patch_rows();
    let npix = g.out_pixels();
    let mut cols = vec![0.0; rows * npix];
    for n in 0..g.batch {
        let xn = &x[n * g.in_channels * g.in_pixels()..(n + 1) * g.in_channels * g.in_pixels()];
        g.im2col(xn, &mut cols);
        let on = &mut out[n * g.out_channels * npix..(n + 1) * g.out_channels * npix];
        for o in 0..g.out_channels {
            on[o * npix..(o + 1) * npix].fill(bias.map_or(0.0, |b| b[o]));
        }
        matmul_acc(weight, &cols, on, g.out_channels, rows, npix);
    }
}

/// Accumulates gradients of a convolution given the output gradient `dout`.
pub fn conv2d_backward(
    g: &ConvGeom,
    x: &[f64],
    weight: &[f64],
    dout: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dweight: Option<&mut [f64]>,
    mut dbias: Option<&mut [f64]>,
) {
    let rows = g.patch_rows();
    let npix = g.out_pixels();
    let mut cols = vec![0.0; if dweight.is_some() { rows * npix } else { 0 }];
    let mut dcols = vec![0.0; if dx.is_some() { rows * npix } else { 0 }];
    let weight_t = if dx.is_some() {
        transpose(weight, g.out_channels, rows)
    } else {
        Vec::new()
    };
    for n in 0..g.batch {
        let dn = &dout[n * g.out_channels * npix..(n + 1) * g.out_channels * npix];
        if let Some(db) = dbias.as_deref_mut() {
            for o in 0..g.out_channels {
                db[o] += dn[o * npix..(o + 1) * npix].iter().sum::<f64>();
            }
        }
        if let Some(dw) = dweight.as_deref_mut() {
            let xn = &x[n * g.in_channels * g.in_pixels()..(n + 1) * g.in_channels * g.in_pixels()];
            g.im2col(xn, &mut cols);
            matmul_nt_acc(dn, &cols, dw, g.out_channels, rows, npix);
        }
        if let Some(dxa) = dx.as_deref_mut() {
            dcols.fill(0.0);
            matmul_acc(&weight_t, dn, &mut dcols, rows, g.out_channels, npix);
            let dxn = &mut dxa[n * g.in_channels * g.in_pixels()..(n + 1) * g.in_channels * g.in_pixels()];
            g.col2im(&dcols, dxn);
        }
    }
}

/// Transposed 2x2 stride-2 convolution; `weight` is `[C, O, 2, 2]`.
/// `x` is `[N, C, H, W]`, `out` is `[N, O, 2H, 2W]`.
pub fn upconv2x_forward(
    dims: [usize; 4],
    out_channels: usize,
    x: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
    out: &mut [f64],
) {
    let [batch, c, h, w] = dims;
    let hw = h * w;
    let q = out_channels * 4;
    let mut tmp = vec![0.0; q * hw];
    let weight_t = transpose(weight, c, q);
    for n in 0..batch {
        let xn = &x[n * c * hw..(n + 1) * c * hw];
        tmp.fill(0.0);
        matmul_acc(&weight_t, xn, &mut tmp, q, c, hw);
        let on = &mut out[n * out_channels * 4 * hw..(n + 1) * out_channels * 4 * hw];
        let ow = 2 * w;
        for o in 0..out_channels {
            let b = bias.map_or(0.0, |b| b[o]);
            let plane = &mut on[o * 4 * hw..(o + 1) * 4 * hw];
            for a in 0..2 {
                for bb in 0..2 {
                    let src = &tmp[(o * 4 + a * 2 + bb) * hw..(o * 4 + a * 2 + bb + 1) * hw];
                    for i in 0..h {
                        let row = &mut plane[(2 * i + a) * ow..(2 * i + a + 1) * ow];
                        for j in 0..w {
                            row[2 * j + bb] = src[i * w + j] + b;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn upconv2x_backward(
    dims: [usize; 4],
    out_channels: usize,
    x: &[f64],
    weight: &[f64],
    dout: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dweight: Option<&mut [f64]>,
    mut dbias: Option<&mut [f64]>,
) {
    let [batch, c, h, w] = dims;
    let hw = h * w;
    let q = out_channels * 4;
    let ow = 2 * w;
    let mut dtmp = vec![0.0; q * hw];
    for n in 0..batch {
        let dn = &dout[n * q * hw..(n + 1) * q * hw];
        for o in 0..out_channels {
            let plane = &dn[o * 4 * hw..(o + 1) * 4 * hw];
            if let Some(db) = dbias.as_deref_mut() {
                db[o] += plane.iter().sum::<f64>();
            }
            for a in 0..2 {
                for bb in 0..2 {
                    let dst = &mut dtmp[(o * 4 + a * 2 + bb) * hw..(o * 4 + a * 2 + bb + 1) * hw];
                    for i in 0..h {
                        let row = &plane[(2 * i + a) * ow..(2 * i + a + 1) * ow];
                        for j in 0..w {
                            dst[i * w + j] = row[2 * j + bb];
                        }
                    }
                }
            }
        }
        let xn = &x[n * c * hw..(n + 1) * c * hw];
        if let Some(dw) = dweight.as_deref_mut() {
            matmul_nt_acc(xn, &dtmp, dw, c, q, hw);
        }
        if let Some(dxa) = dx.as_deref_mut() {
            matmul_acc(weight, &dtmp, &mut dxa[n * c * hw..(n + 1) * c * hw], c, q, hw);
        }
    }
}
