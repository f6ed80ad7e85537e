//! Straightforward `f64` implementations of every model operation.
//!
//! These are written as plain loops, independent of the optimized kernels,
//! and serve as the function under finite differences in
//! [`gradcheck`](crate::gradcheck). Each op that is only piecewise smooth
//! (ReLU, max-pool, trilinear cells, clamps) appends its discrete decisions
//! to a [`Kinks`] record so that a difference quotient straddling a kink can
//! be recognised and skipped.

use crate::pipeline::{FlowLut, PipelineConfig};

/// Discrete branch decisions taken during one evaluation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Kinks(Vec<u32>);

impl Kinks {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, v: u32) {
        self.0.push(v);
    }
}

/// A C×H×W array of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w, "field size");
        Self { c, h, w, data }
    }

    pub fn from_f32(c: usize, h: usize, w: usize, data: &[f32]) -> Self {
        Self::new(c, h, w, data.iter().map(|&v| v as f64).collect())
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }
}

pub fn conv2d(x: &Field, weight: &[f64], bias: &[f64]) -> Field {
    let c_out = bias.len();
    let (c_in, h, w) = (x.c, x.h, x.w);
    assert_eq!(weight.len(), c_out * c_in * 9, "conv weight size");
    let mut out = vec![0.0; c_out * h * w];
    for co in 0..c_out {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = bias[co];
                for ci in 0..c_in {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (iy, ix) = (y as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += weight[((co * c_in + ci) * 3 + ky) * 3 + kx] * x.at(ci, iy as usize, ix as usize);
                        }
                    }
                }
                out[(co * h + y) * w + xx] = acc;
            }
        }
    }
    Field::new(c_out, h, w, out)
}

pub fn relu(mut x: Field, k: &mut Kinks) -> Field {
    for v in &mut x.data {
        k.push((*v > 0.0) as u32);
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
    x
}

pub fn tanh(mut x: Field) -> Field {
    for v in &mut x.data {
        *v = v.tanh();
    }
    x
}

/// 2×2 max-pool, stride 2, odd trailing row/column dropped; the first
/// maximum in row-major window order wins ties.
pub fn maxpool2x2(x: &Field, k: &mut Kinks) -> Field {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut out = Vec::with_capacity(x.c * oh * ow);
    for c in 0..x.c {
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = (f64::NEG_INFINITY, 0);
                for (slot, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    let v = x.at(c, 2 * y + dy, 2 * xx + dx);
                    if v > best.0 {
                        best = (v, slot);
                    }
                }
                k.push(best.1 as u32);
                out.push(best.0);
            }
        }
    }
    Field::new(x.c, oh, ow, out)
}

pub fn global_avg_pool(x: &Field) -> Vec<f64> {
    (0..x.c)
        .map(|c| x.data[c * x.h * x.w..(c + 1) * x.h * x.w].iter().sum::<f64>() / (x.h * x.w) as f64)
        .collect()
}

pub fn linear(x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    bias.iter()
        .enumerate()
        .map(|(o, &b)| b + x.iter().enumerate().map(|(i, &xi)| weight[o * x.len() + i] * xi).sum::<f64>())
        .collect()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

pub fn concat(a: &Field, b: &Field) -> Field {
    assert_eq!((a.h, a.w), (b.h, b.w));
    let mut data = a.data.clone();
    data.extend_from_slice(&b.data);
    Field::new(a.c + b.c, a.h, a.w, data)
}

/// Trilinear lookup through a `d×d×d×3` lattice indexed `(r, g, b, ch)`.
pub fn trilinear(lut: &[f64], d: usize, img: &Field, k: &mut Kinks) -> Field {
    assert_eq!(img.c, 3);
    let hw = img.h * img.w;
    let mut out = vec![0.0; 3 * hw];
    for px in 0..hw {
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for axis in 0..3 {
            let p = img.data[axis * hw + px];
            let clamped = p.clamp(0.0, 1.0);
            let s = clamped * (d - 1) as f64;
            let i = (s.floor() as usize).min(d - 2);
            base[axis] = i;
            frac[axis] = s - i as f64;
            k.push(i as u32 * 4 + if p < 0.0 { 1 } else if p > 1.0 { 2 } else { 0 });
        }
        for dr in 0..2 {
            for dg in 0..2 {
                for db in 0..2 {
                    let wr = if dr == 1 { frac[0] } else { 1.0 - frac[0] };
                    let wg = if dg == 1 { frac[1] } else { 1.0 - frac[1] };
                    let wb = if db == 1 { frac[2] } else { 1.0 - frac[2] };
                    let idx = (((base[0] + dr) * d + base[1] + dg) * d + base[2] + db) * 3;
                    for ch in 0..3 {
                        out[ch * hw + px] += wr * wg * wb * lut[idx + ch];
                    }
                }
            }
        }
    }
    Field::new(3, img.h, img.w, out)
}

pub fn weighted_sum(items: &[Field], weights: &[f64]) -> Field {
    let mut out = Field::new(items[0].c, items[0].h, items[0].w, vec![0.0; items[0].data.len()]);
    for (item, &wt) in items.iter().zip(weights) {
        for (o, v) in out.data.iter_mut().zip(&item.data) {
            *o += wt * v;
        }
    }
    out
}

/// Half-pixel-centred bilinear resize with edge clamping.
pub fn resize(x: &Field, oh: usize, ow: usize) -> Field {
    if (x.h, x.w) == (oh, ow) {
        return x.clone();
    }
    let tap = |src: usize, dst: usize, i: usize| {
        let pos = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).max(0.0);
        let i0 = (pos.floor() as usize).min(src - 1);
        let i1 = (i0 + 1).min(src - 1);
        (i0, i1, pos - i0 as f64)
    };
    let mut out = Vec::with_capacity(x.c * oh * ow);
    for c in 0..x.c {
        for oy in 0..oh {
            let (y0, y1, fy) = tap(x.h, oh, oy);
            for ox in 0..ow {
                let (x0, x1, fx) = tap(x.w, ow, ox);
                let top = x.at(c, y0, x0) * (1.0 - fx) + x.at(c, y0, x1) * fx;
                let bot = x.at(c, y1, x0) * (1.0 - fx) + x.at(c, y1, x1) * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Field::new(x.c, oh, ow, out)
}

pub fn clamp01(mut x: Field, k: &mut Kinks) -> Field {
    for v in &mut x.data {
        k.push(if *v < 0.0 { 1 } else if *v > 1.0 { 2 } else { 0 });
        *v = v.clamp(0.0, 1.0);
    }
    x
}

pub fn mse(a: &Field, b: &Field) -> f64 {
    assert_eq!(a.data.len(), b.data.len());
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64
}

/// Weight generator on 16 flattened parameter tensors in binding order.
pub fn weightgen(params: &[Vec<f64>], image: &Field, k: &mut Kinks) -> Vec<f64> {
    let mut x = image.clone();
    for block in 0..3 {
        let p = &params[block * 4..block * 4 + 4];
        x = relu(conv2d(&x, &p[0], &p[1]), k);
        x = relu(conv2d(&x, &p[2], &p[3]), k);
        if block < 2 {
            x = maxpool2x2(&x, k);
        }
    }
    let pooled = global_avg_pool(&x);
    let hidden: Vec<f64> = linear(&pooled, &params[12], &params[13])
        .into_iter()
        .map(|v| {
            k.push((v > 0.0) as u32);
            v.max(0.0)
        })
        .collect();
    softmax(&linear(&hidden, &params[14], &params[15]))
}

/// Flow network on 6 flattened parameter tensors.
pub fn flownet(params: &[Vec<f64>], x: &Field, k: &mut Kinks) -> Field {
    let y = relu(conv2d(x, &params[0], &params[1]), k);
    let y = relu(conv2d(&y, &params[2], &params[3]), k);
    tanh(conv2d(&y, &params[4], &params[5]))
}

pub fn refine(params: &[Vec<f64>], i_lut: &Field, i_in: &Field, steps: usize, k: &mut Kinks) -> Field {
    let mut cur = i_lut.clone();
    for _ in 0..steps {
        let residual = Field::new(3, cur.h, cur.w, i_in.data.iter().zip(&cur.data).map(|(a, b)| a - b).collect());
        let flow = flownet(params, &concat(&cur, &residual), k);
        for (c, f) in cur.data.iter_mut().zip(&flow.data) {
            *c += f / steps as f64;
        }
    }
    cur
}

/// Full enhancement with parameters flattened in [`FlowLut::tensors`] order.
pub fn enhance(config: &PipelineConfig, params: &[Vec<f64>], image: &Field, k: &mut Kinks) -> Field {
    let n = config.num_luts;
    let d = config.lattice_size;
    let (luts, rest) = params.split_at(n);
    let (wgen, flow) = rest.split_at(16);
    let a = config.analysis_resolution;
    let weights = weightgen(wgen, &resize(image, a.height, a.width), k);
    let mapped: Vec<Field> = luts.iter().map(|l| trilinear(l, d, image, k)).collect();
    let i_lut = weighted_sum(&mapped, &weights);
    let refined = match config.processing_resolution {
        Some(r) if (r.height, r.width) != (image.h, image.w) => {
            let lut_s = resize(&i_lut, r.height, r.width);
            let in_s = resize(image, r.height, r.width);
            let out_s = refine(flow, &lut_s, &in_s, config.flow_steps, k);
            let corr = Field::new(3, r.height, r.width, out_s.data.iter().zip(&lut_s.data).map(|(a, b)| a - b).collect());
            let up = resize(&corr, image.h, image.w);
            Field::new(3, image.h, image.w, i_lut.data.iter().zip(&up.data).map(|(a, b)| a + b).collect())
        }
        _ => refine(flow, &i_lut, image, config.flow_steps, k),
    };
    clamp01(refined, k)
}

/// The model's parameters as `f64` vectors.
pub fn flatten(model: &FlowLut) -> Vec<Vec<f64>> {
    model
        .tensors()
        .iter()
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .collect()
}
