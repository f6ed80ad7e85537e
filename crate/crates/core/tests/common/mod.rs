//! Naive-loop oracles and random instance generators shared by the
//! integration tests. Deliberately written without any library kernels.

#![allow(dead_code)]

use flowlut::tensor::ops;
use flowlut::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn max_diff(a: &[f32], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).abs()).fold(0.0, f64::max)
}

/// 3×3 convolution, zero padding 1, stride 1.
pub fn conv_oracle(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (ci, h, wd) = x.chw().unwrap();
    let co = w.shape()[0];
    let xs = x.data();
    let ws = w.data();
    let mut out = vec![0.0; co * h * wd];
    for o in 0..co {
        for y in 0..h {
            for xx in 0..wd {
                let mut s = b.data()[o] as f64;
                for i in 0..ci {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let sy = y as isize + ky as isize - 1;
                            let sx = xx as isize + kx as isize - 1;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                continue;
                            }
                            let xv = xs[(i * h + sy as usize) * wd + sx as usize] as f64;
                            let wv = ws[((o * ci + i) * 3 + ky) * 3 + kx] as f64;
                            s += xv * wv;
                        }
                    }
                }
                out[(o * h + y) * wd + xx] = s;
            }
        }
    }
    out
}

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
pub fn maxpool_oracle(x: &Tensor) -> Vec<f64> {
    let (c, h, w) = x.chw().unwrap();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let at = |dy: usize, dx: usize| x.data()[(ch * h + 2 * y + dy) * w + 2 * xx + dx] as f64;
                out.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
            }
        }
    }
    out
}

pub fn gap_oracle(x: &Tensor) -> Vec<f64> {
    let (c, h, w) = x.chw().unwrap();
    (0..c)
        .map(|ch| x.data()[ch * h * w..(ch + 1) * h * w].iter().map(|&v| v as f64).sum::<f64>() / (h * w) as f64)
        .collect()
}

pub fn linear_oracle(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (o, i) = (w.shape()[0], w.shape()[1]);
    (0..o)
        .map(|r| b.data()[r] as f64 + (0..i).map(|k| w.data()[r * i + k] as f64 * x.data()[k] as f64).sum::<f64>())
        .collect()
}

pub fn softmax_oracle(x: &[f32]) -> Vec<f64> {
    let m = x.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let e: Vec<f64> = x.iter().map(|&v| (v as f64 - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Trilinear lookup in a D×D×D×3 lattice stored `[r][g][b][channel]`.
/// Inputs are clamped to `[0, 1]`; the lower cell corner is clamped to D−2
/// so that 1.0 interpolates inside the last cell.
pub fn trilinear_oracle(lut: &Tensor, img: &Tensor) -> Vec<f64> {
    let d = lut.shape()[0];
    let (_, h, w) = img.chw().unwrap();
    let hw = h * w;
    let node = |r: usize, g: usize, b: usize, c: usize| lut.data()[((r * d + g) * d + b) * 3 + c] as f64;
    let mut out = vec![0.0; 3 * hw];
    for p in 0..hw {
        let mut idx = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let v = (img.data()[a * hw + p] as f64).clamp(0.0, 1.0) * (d - 1) as f64;
            let i = (v.floor() as usize).min(d - 2);
            idx[a] = i;
            frac[a] = v - i as f64;
        }
        for c in 0..3 {
            let mut acc = 0.0;
            for dr in 0..2 {
                for dg in 0..2 {
                    for db in 0..2 {
                        let wr = if dr == 1 { frac[0] } else { 1.0 - frac[0] };
                        let wg = if dg == 1 { frac[1] } else { 1.0 - frac[1] };
                        let wb = if db == 1 { frac[2] } else { 1.0 - frac[2] };
                        acc += wr * wg * wb * node(idx[0] + dr, idx[1] + dg, idx[2] + db, c);
                    }
                }
            }
            out[c * hw + p] = acc;
        }
    }
    out
}

pub fn blend_oracle(luts: &[Tensor], weights: &[f32], img: &Tensor) -> Vec<f64> {
    let mut out = vec![0.0; img.len()];
    for (lut, &w) in luts.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(trilinear_oracle(lut, img)) {
            *o += w as f64 * v;
        }
    }
    out
}

/// Worst deviation of a library op from its oracle over `n` random
/// instances, per op.
pub struct OracleReport {
    pub op: &'static str,
    pub instances: usize,
    pub worst: f64,
}

pub fn oracle_conv(n: usize, seed: u64) -> OracleReport {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (ci, co) = (r.gen_range(1..6), r.gen_range(1..6));
        let (h, w) = (r.gen_range(1..9), r.gen_range(1..9));
        let x = rand_tensor(&mut r, &[ci, h, w], -1.0, 1.0);
        let wt = rand_tensor(&mut r, &[co, ci, 3, 3], -0.5, 0.5);
        let b = rand_tensor(&mut r, &[co], -0.5, 0.5);
        let got = ops::conv2d(&x, &wt, &b).unwrap();
        assert_eq!(got.shape(), [co, h, w]);
        worst = worst.max(max_diff(got.data(), &conv_oracle(&x, &wt, &b)));
    }
    OracleReport { op: "conv2d", instances: n, worst }
}

pub fn oracle_pool(n: usize, seed: u64) -> OracleReport {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (c, h, w) = (r.gen_range(1..5), r.gen_range(2..11), r.gen_range(2..11));
        let x = rand_tensor(&mut r, &[c, h, w], -2.0, 2.0);
        let got = ops::maxpool2x2(&x).unwrap();
        assert_eq!(got.shape(), [c, h / 2, w / 2]);
        worst = worst.max(max_diff(got.data(), &maxpool_oracle(&x)));
        let got = ops::global_avg_pool(&x).unwrap();
        worst = worst.max(max_diff(got.data(), &gap_oracle(&x)));
    }
    OracleReport { op: "pool", instances: n, worst }
}

pub fn oracle_linear(n: usize, seed: u64) -> OracleReport {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (i, o) = (r.gen_range(1..40), r.gen_range(1..20));
        let x = rand_tensor(&mut r, &[i], -1.0, 1.0);
        let w = rand_tensor(&mut r, &[o, i], -0.3, 0.3);
        let b = rand_tensor(&mut r, &[o], -0.5, 0.5);
        let got = ops::linear(&x, &w, &b).unwrap();
        worst = worst.max(max_diff(got.data(), &linear_oracle(&x, &w, &b)));
    }
    OracleReport { op: "linear", instances: n, worst }
}

pub fn oracle_trilinear(n: usize, seed: u64) -> OracleReport {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let d = r.gen_range(2..9);
        let (h, w) = (r.gen_range(1..7), r.gen_range(1..7));
        let lut = rand_tensor(&mut r, &[d, d, d, 3], 0.0, 1.0);
        // Slightly outside the unit cube to exercise input clamping.
        let mut img = rand_tensor(&mut r, &[3, h, w], -0.1, 1.1);
        // Exact lattice coordinates and the unit-cube corners.
        let data = img.data_mut();
        data[0] = 1.0;
        if data.len() > 4 {
            data[1] = 0.0;
            data[2] = (r.gen_range(0..d) as f32) / (d - 1) as f32;
        }
        let got = ops::trilinear(&lut, &img).unwrap();
        worst = worst.max(max_diff(got.data(), &trilinear_oracle(&lut, &img)));
    }
    OracleReport { op: "trilinear", instances: n, worst }
}

pub fn oracle_blend(n: usize, seed: u64) -> OracleReport {
    use flowlut::lut::{Lut3D, LutBank};
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (k, d) = (r.gen_range(1..6), r.gen_range(2..7));
        let (h, w) = (r.gen_range(1..6), r.gen_range(1..6));
        let luts: Vec<Tensor> = (0..k).map(|_| rand_tensor(&mut r, &[d, d, d, 3], 0.0, 1.0)).collect();
        let logits = rand_tensor(&mut r, &[k], -2.0, 2.0);
        let weights = ops::softmax(&logits).unwrap();
        let img = rand_tensor(&mut r, &[3, h, w], 0.0, 1.0);
        let bank = LutBank::from_luts(
            luts.iter().map(|t| Lut3D::from_table(d, t.data().to_vec()).unwrap()).collect(),
            (0..k).map(|i| format!("l{i}")).collect(),
        )
        .unwrap();
        let want = blend_oracle(&luts, weights.data(), &img);
        worst = worst.max(max_diff(bank.blend_apply(&weights, &img).unwrap().data(), &want));
        let refs: Vec<Tensor> = luts.iter().map(|l| ops::trilinear(l, &img).unwrap()).collect();
        let refs: Vec<&Tensor> = refs.iter().collect();
        worst = worst.max(max_diff(ops::weighted_sum(&refs, &weights).unwrap().data(), &want));
        worst = worst.max(max_diff(weights.data(), &softmax_oracle(logits.data())));
    }
    OracleReport { op: "blend", instances: n, worst }
}
