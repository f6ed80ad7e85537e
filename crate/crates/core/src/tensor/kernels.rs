//! Forward and backward numeric kernels on raw slices.
//!
//! Shapes are validated by the callers in `graph`/`eager`; the kernels
//! assume consistent extents.

use rayon::prelude::*;

/// Largest `f32` strictly below 1, so `tanh` stays inside the open interval.
const TANH_LIMIT: f32 = 1.0 - f32::EPSILON / 2.0;

/// Upper bound on the im2col scratch buffer, in `f64` elements (8 MiB).
const COL_BUDGET: usize = 1 << 20;

fn rows_per_tile(k: usize, h: usize, w: usize) -> usize {
    (COL_BUDGET / (k * w).max(1)).clamp(1, h)
}

/// Unrolls the 3×3 neighbourhoods of rows `y0..y1` into a `(c_in·9) × P`
/// column matrix, zero-filled outside the image.
fn im2col(input: &[f32], c_in: usize, h: usize, w: usize, y0: usize, y1: usize, cols: &mut [f64]) {
    let p = (y1 - y0) * w;
    for c in 0..c_in {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 9 + ky * 3 + kx) * p;
                for y in y0..y1 {
                    let dst = &mut cols[row + (y - y0) * w..row + (y - y0 + 1) * w];
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = 0.0;
                            for x in 1..w {
                                dst[x] = src[x - 1] as f64;
                            }
                        }
                        1 => {
                            for x in 0..w {
                                dst[x] = src[x] as f64;
                            }
                        }
                        _ => {
                            for x in 0..w - 1 {
                                dst[x] = src[x + 1] as f64;
                            }
                            dst[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds a column matrix back onto the image.
fn col2im(cols: &[f64], c_in: usize, h: usize, w: usize, y0: usize, y1: usize, dx: &mut [f64]) {
    let p = (y1 - y0) * w;
    for c in 0..c_in {
        let plane = &mut dx[c * h * w..(c + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 9 + ky * 3 + kx) * p;
                for y in y0..y1 {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &cols[row + (y - y0) * w..row + (y - y0 + 1) * w];
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    match kx {
                        0 => {
                            for x in 1..w {
                                dst[x - 1] += src[x];
                            }
                        }
                        1 => {
                            for x in 0..w {
                                dst[x] += src[x];
                            }
                        }
                        _ => {
                            for x in 0..w - 1 {
                                dst[x + 1] += src[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `C (m×n) = alpha·A·B + beta·C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// 3×3 cross-correlation, stride 1, zero padding 1.
pub fn conv2d_forward(
    input: &[f32],
    (c_in, h, w): (usize, usize, usize),
    weight: &[f32],
    bias: &[f32],
    c_out: usize,
) -> Vec<f32> {
    let k = c_in * 9;
    let w64: Vec<f64> = weight.iter().map(|&v| v as f64).collect();
    let mut out = vec![0.0f32; c_out * h * w];
    let rows = rows_per_tile(k, h, w);
    let mut cols = vec![0.0f64; k * rows * w];
    let mut acc = vec![0.0f64; c_out * rows * w];
    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + rows).min(h);
        let p = (y1 - y0) * w;
        im2col(input, c_in, h, w, y0, y1, &mut cols[..k * p]);
        gemm(c_out, k, p, &w64, (k, 1), &cols[..k * p], (p, 1), 0.0, &mut acc[..c_out * p]);
        for co in 0..c_out {
            let b = bias[co] as f64;
            let dst = &mut out[co * h * w + y0 * w..co * h * w + y1 * w];
            for (d, &a) in dst.iter_mut().zip(&acc[co * p..(co + 1) * p]) {
                *d = (a + b) as f32;
            }
        }
        y0 = y1;
    }
    out
}

pub struct Conv2dGrads {
    pub input: Option<Vec<f32>>,
    pub weight: Option<Vec<f32>>,
    pub bias: Option<Vec<f32>>,
}

pub fn conv2d_backward(
    input: &[f32],
    (c_in, h, w): (usize, usize, usize),
    weight: &[f32],
    c_out: usize,
    grad_out: &[f32],
    (need_input, need_weight, need_bias): (bool, bool, bool),
) -> Conv2dGrads {
    let k = c_in * 9;
    let bias = need_bias.then(|| {
        (0..c_out)
            .map(|co| {
                grad_out[co * h * w..(co + 1) * h * w]
                    .iter()
                    .map(|&g| g as f64)
                    .sum::<f64>() as f32
            })
            .collect()
    });
    if !need_input && !need_weight {
        return Conv2dGrads {
            input: None,
            weight: None,
            bias,
        };
    }

    let w64: Vec<f64> = weight.iter().map(|&v| v as f64).collect();
    let rows = rows_per_tile(k, h, w);
    let mut cols = vec![0.0f64; k * rows * w];
    let mut g_tile = vec![0.0f64; c_out * rows * w];
    let mut dw = vec![0.0f64; if need_weight { c_out * k } else { 0 }];
    let mut dx = vec![0.0f64; if need_input { c_in * h * w } else { 0 }];

    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + rows).min(h);
        let p = (y1 - y0) * w;
        for co in 0..c_out {
            let src = &grad_out[co * h * w + y0 * w..co * h * w + y1 * w];
            for (d, &g) in g_tile[co * p..(co + 1) * p].iter_mut().zip(src) {
                *d = g as f64;
            }
        }
        if need_weight {
            im2col(input, c_in, h, w, y0, y1, &mut cols[..k * p]);
            // dW (c_out×k) += G (c_out×p) · colsᵀ (p×k)
            gemm(c_out, p, k, &g_tile[..c_out * p], (p, 1), &cols[..k * p], (1, p), 1.0, &mut dw);
        }
        if need_input {
            // dcols (k×p) = Wᵀ (k×c_out) · G (c_out×p)
            gemm(k, c_out, p, &w64, (1, k), &g_tile[..c_out * p], (p, 1), 0.0, &mut cols[..k * p]);
            col2im(&cols[..k * p], c_in, h, w, y0, y1, &mut dx);
        }
        y0 = y1;
    }

    Conv2dGrads {
        input: need_input.then(|| dx.iter().map(|&v| v as f32).collect()),
        weight: need_weight.then(|| dw.iter().map(|&v| v as f32).collect()),
        bias,
    }
}

pub fn relu_inplace(x: &mut [f32]) {
    for v in x {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
}

pub fn tanh_inplace(x: &mut [f32]) {
    for v in x {
        *v = v.tanh().clamp(-TANH_LIMIT, TANH_LIMIT);
    }
}

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Returns the pooled values and, per output, the flat input index of the max.
pub fn maxpool2x2_forward(input: &[f32], (c, h, w): (usize, usize, usize)) -> (Vec<f32>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = ch * h * w + 2 * oy * w + 2 * ox;
                let mut best = base;
                for idx in [base + 1, base + w, base + w + 1] {
                    // Strict comparison keeps the first maximum in scan order.
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                argmax.push(best as u32);
            }
        }
    }
    (out, argmax)
}

pub fn global_avg_pool_forward(input: &[f32], (c, h, w): (usize, usize, usize)) -> Vec<f32> {
    let area = (h * w) as f64;
    (0..c)
        .map(|ch| {
            let sum: f64 = input[ch * h * w..(ch + 1) * h * w]
                .iter()
                .map(|&v| v as f64)
                .sum();
            (sum / area) as f32
        })
        .collect()
}

/// `y = W·x + b` with `W` stored row-major as `n × m`.
pub fn linear_forward(x: &[f32], weight: &[f32], bias: &[f32]) -> Vec<f32> {
    let m = x.len();
    bias.iter()
        .enumerate()
        .map(|(i, &b)| {
            let row = &weight[i * m..(i + 1) * m];
            let dot: f64 = row.iter().zip(x).map(|(&w, &v)| w as f64 * v as f64).sum();
            (dot + b as f64) as f32
        })
        .collect()
}

pub fn softmax_forward(x: &[f32]) -> Vec<f32> {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = x.iter().map(|&v| (v as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| (e / total) as f32).collect()
}

/// Per-pixel lookup cell: base lattice index per axis and fractional offset.
#[inline]
fn cell(p: f32, scale: f32, last_cell: usize) -> (usize, f32) {
    let s = p.clamp(0.0, 1.0) * scale;
    let i = (s.floor() as usize).min(last_cell);
    (i, s - i as f32)
}

const CHUNK: usize = 4096;

/// Trilinear lookup of a planar 3×H×W image through a D×D×D×3 lattice indexed
/// `(r, g, b, channel)`. Inputs are clamped to the unit cube first.
pub fn trilinear_forward(lut: &[f32], d: usize, image: &[f32], hw: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; 3 * hw];
    let (r_in, rest) = image.split_at(hw);
    let (g_in, b_in) = rest.split_at(hw);
    let (r_out, rest) = out.split_at_mut(hw);
    let (g_out, b_out) = rest.split_at_mut(hw);
    let scale = (d - 1) as f32;
    let last = d - 2;
    let (sr, sg) = (d * d * 3, d * 3);

    r_out
        .par_chunks_mut(CHUNK)
        .zip(g_out.par_chunks_mut(CHUNK))
        .zip(b_out.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(chunk, ((ro, go), bo))| {
            let start = chunk * CHUNK;
            for j in 0..ro.len() {
                let px = start + j;
                let (ir, fr) = cell(r_in[px], scale, last);
                let (ig, fg) = cell(g_in[px], scale, last);
                let (ib, fb) = cell(b_in[px], scale, last);
                let base = ir * sr + ig * sg + ib * 3;
                let mut acc = [0.0f32; 3];
                for corner in 0..8 {
                    let (dr, dg, db) = (corner >> 2 & 1, corner >> 1 & 1, corner & 1);
                    let wgt = if dr == 1 { fr } else { 1.0 - fr }
                        * if dg == 1 { fg } else { 1.0 - fg }
                        * if db == 1 { fb } else { 1.0 - fb };
                    let idx = base + dr * sr + dg * sg + db * 3;
                    acc[0] += wgt * lut[idx];
                    acc[1] += wgt * lut[idx + 1];
                    acc[2] += wgt * lut[idx + 2];
                }
                ro[j] = acc[0];
                go[j] = acc[1];
                bo[j] = acc[2];
            }
        });
    out
}

/// Gradients of the trilinear lookup w.r.t. the lattice and the image.
///
/// Image gradients are zero for components that were clamped into the cube.
pub fn trilinear_backward(
    lut: &[f32],
    d: usize,
    image: &[f32],
    hw: usize,
    grad_out: &[f32],
    (need_lut, need_image): (bool, bool),
) -> (Option<Vec<f32>>, Option<Vec<f32>>) {
    let scale = (d - 1) as f32;
    let last = d - 2;
    let (sr, sg) = (d * d * 3, d * 3);
    let mut dlut = vec![0.0f64; if need_lut { lut.len() } else { 0 }];
    let mut dimg = vec![0.0f32; if need_image { 3 * hw } else { 0 }];

    for px in 0..hw {
        let p = [image[px], image[hw + px], image[2 * hw + px]];
        let g = [grad_out[px], grad_out[hw + px], grad_out[2 * hw + px]];
        let (ir, fr) = cell(p[0], scale, last);
        let (ig, fg) = cell(p[1], scale, last);
        let (ib, fb) = cell(p[2], scale, last);
        let base = ir * sr + ig * sg + ib * 3;
        let f = [fr, fg, fb];
        let mut dp = [0.0f32; 3];
        for corner in 0..8 {
            let bits = [corner >> 2 & 1, corner >> 1 & 1, corner & 1];
            let lin = |axis: usize| if bits[axis] == 1 { f[axis] } else { 1.0 - f[axis] };
            let slope = |axis: usize| if bits[axis] == 1 { 1.0 } else { -1.0 };
            let (wr, wg, wb) = (lin(0), lin(1), lin(2));
            let idx = base + bits[0] * sr + bits[1] * sg + bits[2] * 3;
            if need_lut {
                let wgt = (wr * wg * wb) as f64;
                for c in 0..3 {
                    dlut[idx + c] += wgt * g[c] as f64;
                }
            }
            if need_image {
                let upstream: f32 = (0..3).map(|c| g[c] * lut[idx + c]).sum();
                dp[0] += slope(0) * wg * wb * upstream;
                dp[1] += slope(1) * wr * wb * upstream;
                dp[2] += slope(2) * wr * wg * upstream;
            }
        }
        if need_image {
            for axis in 0..3 {
                let inside = (0.0..=1.0).contains(&p[axis]);
                dimg[axis * hw + px] = if inside { dp[axis] * scale } else { 0.0 };
            }
        }
    }
    (
        need_lut.then(|| dlut.iter().map(|&v| v as f32).collect()),
        need_image.then_some(dimg),
    )
}

/// Source taps for one axis of a half-pixel-centred bilinear resize.
pub fn resize_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (pos - i0 as f64) as f32)
        })
        .collect()
}

pub fn resize_bilinear_forward(
    input: &[f32],
    (c, h, w): (usize, usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<f32> {
    if (h, w) == (oh, ow) {
        return input.to_vec();
    }
    let ty = resize_taps(h, oh);
    let tx = resize_taps(w, ow);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    out
}

pub fn resize_bilinear_backward(
    grad_out: &[f32],
    (c, h, w): (usize, usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<f32> {
    if (h, w) == (oh, ow) {
        return grad_out.to_vec();
    }
    let ty = resize_taps(h, oh);
    let tx = resize_taps(w, ow);
    let mut dx = vec![0.0f64; c * h * w];
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        let g = &grad_out[ch * oh * ow..(ch + 1) * oh * ow];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let v = g[oy * ow + ox] as f64;
                let (fx, fy) = (fx as f64, fy as f64);
                plane[y0 * w + x0] += v * (1.0 - fy) * (1.0 - fx);
                plane[y0 * w + x1] += v * (1.0 - fy) * fx;
                plane[y1 * w + x0] += v * fy * (1.0 - fx);
                plane[y1 * w + x1] += v * fy * fx;
            }
        }
    }
    dx.iter().map(|&v| v as f32).collect()
}

/// Sum of squared differences, accumulated in `f64`.
pub fn squared_error_sum(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}
