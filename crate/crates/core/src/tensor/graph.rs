use super::{kernels, ops, Activation, Backend, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Conv2d { x: Var, w: Var, b: Var },
    Activation { x: Var, kind: Activation },
    MaxPool { x: Var, argmax: Vec<u32> },
    GlobalAvgPool { x: Var },
    Linear { x: Var, w: Var, b: Var },
    Softmax { x: Var },
    Concat { a: Var, b: Var },
    AddScaled { a: Var, b: Var, scale: f32 },
    Trilinear { lut: Var, image: Var },
    WeightedSum { items: Vec<Var>, weights: Var },
    Resize { x: Var },
    Clamp01 { x: Var },
    Mse { out: Var, gt: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only computation record. Every input of node `i` has an index
/// below `i`, so reverse index order is a valid reverse topological order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`; `None` when no path connects them.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but materializes an all-zero gradient of the
    /// right shape for unreachable nodes.
    pub fn get_or_zeros(&self, graph: &Graph, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(graph.value(v).shape()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a leaf that receives gradients.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Reverse-mode sweep from a one-element `loss` node.
    ///
    /// Gradients are summed across fan-out. The sweep is single-threaded and
    /// deterministic.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::Constant => {}
                Op::Conv2d { x, w, b } => {
                    let xv = self.value(*x);
                    let dims = xv.chw().expect("conv input validated at record time");
                    let c_out = self.value(*w).shape()[0];
                    let r = kernels::conv2d_backward(
                        xv.data(),
                        dims,
                        self.value(*w).data(),
                        c_out,
                        &g,
                        (self.rg(*x), self.rg(*w), self.rg(*b)),
                    );
                    accumulate(&mut grads, *x, r.input);
                    accumulate(&mut grads, *w, r.weight);
                    accumulate(&mut grads, *b, r.bias);
                }
                Op::Activation { x, kind } => {
                    let dx = match kind {
                        Activation::Relu => self
                            .value(*x)
                            .data()
                            .iter()
                            .zip(&g)
                            .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                            .collect(),
                        Activation::Tanh => node
                            .value
                            .data()
                            .iter()
                            .zip(&g)
                            .map(|(&y, &gv)| gv * (1.0 - y * y))
                            .collect(),
                    };
                    accumulate(&mut grads, *x, Some(dx));
                }
                Op::MaxPool { x, argmax } => {
                    let mut dx = vec![0.0f32; self.value(*x).len()];
                    for (&idx, &gv) in argmax.iter().zip(&g) {
                        dx[idx as usize] += gv;
                    }
                    accumulate(&mut grads, *x, Some(dx));
                }
                Op::GlobalAvgPool { x } => {
                    let (c, h, w) = self.value(*x).chw().expect("validated");
                    let inv = 1.0 / (h * w) as f64;
                    let mut dx = Vec::with_capacity(c * h * w);
                    for &gv in g.iter().take(c) {
                        let share = (gv as f64 * inv) as f32;
                        dx.extend(std::iter::repeat(share).take(h * w));
                    }
                    accumulate(&mut grads, *x, Some(dx));
                }
                Op::Linear { x, w, b } => {
                    let xv = self.value(*x).data();
                    let wv = self.value(*w).data();
                    let m = xv.len();
                    if self.rg(*x) {
                        let dx = (0..m)
                            .map(|j| {
                                g.iter()
                                    .enumerate()
                                    .map(|(i, &gi)| gi as f64 * wv[i * m + j] as f64)
                                    .sum::<f64>() as f32
                            })
                            .collect();
                        accumulate(&mut grads, *x, Some(dx));
                    }
                    if self.rg(*w) {
                        let dw = g
                            .iter()
                            .flat_map(|&gi| xv.iter().map(move |&xj| gi * xj))
                            .collect();
                        accumulate(&mut grads, *w, Some(dw));
                    }
                    accumulate(&mut grads, *b, self.rg(*b).then(|| g.clone()));
                }
                Op::Softmax { x } => {
                    let y = node.value.data();
                    let dot: f64 = y.iter().zip(&g).map(|(&yi, &gi)| yi as f64 * gi as f64).sum();
                    let dx = y
                        .iter()
                        .zip(&g)
                        .map(|(&yi, &gi)| (yi as f64 * (gi as f64 - dot)) as f32)
                        .collect();
                    accumulate(&mut grads, *x, Some(dx));
                }
                Op::Concat { a, b } => {
                    let split = self.value(*a).len();
                    let (ga, gb) = g.split_at(split);
                    accumulate(&mut grads, *a, self.rg(*a).then(|| ga.to_vec()));
                    accumulate(&mut grads, *b, self.rg(*b).then(|| gb.to_vec()));
                }
                Op::AddScaled { a, b, scale } => {
                    if self.rg(*b) {
                        let gb = g.iter().map(|&v| v * scale).collect();
                        accumulate(&mut grads, *b, Some(gb));
                    }
                    accumulate(&mut grads, *a, self.rg(*a).then_some(g));
                }
                Op::Trilinear { lut, image } => {
                    let lv = self.value(*lut);
                    let iv = self.value(*image);
                    let d = lv.shape()[0];
                    let hw = iv.len() / 3;
                    let (dl, di) = kernels::trilinear_backward(
                        lv.data(),
                        d,
                        iv.data(),
                        hw,
                        &g,
                        (self.rg(*lut), self.rg(*image)),
                    );
                    accumulate(&mut grads, *lut, dl);
                    accumulate(&mut grads, *image, di);
                }
                Op::WeightedSum { items, weights } => {
                    let wv = self.value(*weights).data().to_vec();
                    if self.rg(*weights) {
                        let dw = items
                            .iter()
                            .map(|it| {
                                self.value(*it)
                                    .data()
                                    .iter()
                                    .zip(&g)
                                    .map(|(&v, &gv)| v as f64 * gv as f64)
                                    .sum::<f64>() as f32
                            })
                            .collect();
                        accumulate(&mut grads, *weights, Some(dw));
                    }
                    for (it, &wt) in items.iter().zip(&wv) {
                        if self.rg(*it) {
                            accumulate(&mut grads, *it, Some(g.iter().map(|&gv| gv * wt).collect()));
                        }
                    }
                }
                Op::Resize { x } => {
                    let dims = self.value(*x).chw().expect("validated");
                    let (_, oh, ow) = node.value.chw().expect("validated");
                    let dx = kernels::resize_bilinear_backward(&g, dims, (oh, ow));
                    accumulate(&mut grads, *x, Some(dx));
                }
                Op::Clamp01 { x } => {
                    let dx = self
                        .value(*x)
                        .data()
                        .iter()
                        .zip(&g)
                        .map(|(&v, &gv)| if (0.0..=1.0).contains(&v) { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, Some(dx));
                }
                Op::Mse { out, gt } => {
                    let ov = self.value(*out).data();
                    let tv = self.value(*gt).data();
                    let k = 2.0 * g[0] as f64 / ov.len() as f64;
                    if self.rg(*out) {
                        let d = ov.iter().zip(tv).map(|(&o, &t)| (k * (o as f64 - t as f64)) as f32).collect();
                        accumulate(&mut grads, *out, Some(d));
                    }
                    if self.rg(*gt) {
                        let d = ov.iter().zip(tv).map(|(&o, &t)| (k * (t as f64 - o as f64)) as f32).collect();
                        accumulate(&mut grads, *gt, Some(d));
                    }
                }
            }
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| {
                g.filter(|_| matches!(n.op, Op::Leaf)).map(|data| {
                    Tensor::new(n.value.shape(), data).expect("gradient shape mirrors value")
                })
            })
            .collect();
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Vec<f32>>], v: Var, g: Option<Vec<f32>>) {
    let Some(g) = g else { return };
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.iter_mut().zip(&g) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

impl Backend for Graph {
    type Value = Var;

    fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    fn param(&mut self, t: &Tensor) -> Var {
        self.leaf(t.clone())
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        Graph::value(self, *v)
    }

    fn conv2d(&mut self, x: &Var, w: &Var, b: &Var) -> Result<Var> {
        let out = ops::conv2d(self.value(*x), self.value(*w), self.value(*b))?;
        let rg = self.rg(*x) || self.rg(*w) || self.rg(*b);
        Ok(self.push(out, Op::Conv2d { x: *x, w: *w, b: *b }, rg))
    }

    fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let out = ops::activation(self.value(x).clone(), kind);
        let rg = self.rg(x);
        self.push(out, Op::Activation { x, kind }, rg)
    }

    fn maxpool2x2(&mut self, x: &Var) -> Result<Var> {
        let (out, argmax) = ops::maxpool2x2_with_argmax(self.value(*x))?;
        let rg = self.rg(*x);
        Ok(self.push(out, Op::MaxPool { x: *x, argmax }, rg))
    }

    fn global_avg_pool(&mut self, x: &Var) -> Result<Var> {
        let out = ops::global_avg_pool(self.value(*x))?;
        let rg = self.rg(*x);
        Ok(self.push(out, Op::GlobalAvgPool { x: *x }, rg))
    }

    fn linear(&mut self, x: &Var, w: &Var, b: &Var) -> Result<Var> {
        let out = ops::linear(self.value(*x), self.value(*w), self.value(*b))?;
        let rg = self.rg(*x) || self.rg(*w) || self.rg(*b);
        Ok(self.push(out, Op::Linear { x: *x, w: *w, b: *b }, rg))
    }

    fn softmax(&mut self, x: &Var) -> Result<Var> {
        let out = ops::softmax(self.value(*x))?;
        let rg = self.rg(*x);
        Ok(self.push(out, Op::Softmax { x: *x }, rg))
    }

    fn concat_channels(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = ops::concat_channels(self.value(*a), self.value(*b))?;
        let rg = self.rg(*a) || self.rg(*b);
        Ok(self.push(out, Op::Concat { a: *a, b: *b }, rg))
    }

    fn add_scaled(&mut self, a: &Var, b: &Var, scale: f32) -> Result<Var> {
        let out = ops::add_scaled(self.value(*a), self.value(*b), scale)?;
        let rg = self.rg(*a) || self.rg(*b);
        Ok(self.push(out, Op::AddScaled { a: *a, b: *b, scale }, rg))
    }

    fn trilinear(&mut self, lut: &Var, image: &Var) -> Result<Var> {
        let out = ops::trilinear(self.value(*lut), self.value(*image))?;
        let rg = self.rg(*lut) || self.rg(*image);
        Ok(self.push(out, Op::Trilinear { lut: *lut, image: *image }, rg))
    }

    fn weighted_sum(&mut self, items: &[Var], weights: &Var) -> Result<Var> {
        let refs: Vec<&Tensor> = items.iter().map(|v| self.value(*v)).collect();
        let out = ops::weighted_sum(&refs, self.value(*weights))?;
        let rg = self.rg(*weights) || items.iter().any(|v| self.rg(*v));
        Ok(self.push(
            out,
            Op::WeightedSum {
                items: items.to_vec(),
                weights: *weights,
            },
            rg,
        ))
    }

    fn resize_bilinear(&mut self, x: &Var, h: usize, w: usize) -> Result<Var> {
        let out = ops::resize_bilinear(self.value(*x), h, w)?;
        let rg = self.rg(*x);
        Ok(self.push(out, Op::Resize { x: *x }, rg))
    }

    fn clamp01(&mut self, x: Var) -> Var {
        let out = ops::clamp01(self.value(x).clone());
        let rg = self.rg(x);
        self.push(out, Op::Clamp01 { x }, rg)
    }

    fn mse(&mut self, out: &Var, gt: &Var) -> Result<Var> {
        let v = ops::mse(self.value(*out), self.value(*gt))?;
        let rg = self.rg(*out) || self.rg(*gt);
        Ok(self.push(v, Op::Mse { out: *out, gt: *gt }, rg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_gradient_closed_form() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new([1, 2, 2], vec![0.5, 0.25, 1.0, 0.0]).unwrap());
        let t = g.constant(Tensor::new([1, 2, 2], vec![0.0, 0.5, 0.5, 0.25]).unwrap());
        let loss = g.mse(&x, &t).unwrap();
        let grads = g.backward(loss).unwrap();
        let gx = grads.get(x).unwrap();
        let expected = [0.25f32, -0.125, 0.25, -0.125]; // 2(x - t)/4
        for (a, e) in gx.data().iter().zip(expected) {
            assert!((a - e).abs() < 1e-7);
        }
    }

    #[test]
    fn unrelated_leaf_gets_no_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full([1, 2, 2], 0.3));
        let y = g.leaf(Tensor::full([1, 2, 2], 0.7));
        let t = g.constant(Tensor::zeros([1, 2, 2]));
        let loss = g.mse(&x, &t).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(y).is_none());
        assert!(grads.get_or_zeros(&g, y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros([3]));
        assert!(matches!(g.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn fan_out_accumulates() {
        // loss = mse(x + 2x, 0) = 9·mean(x²), d/dx = 18x/N
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new([1, 1, 2], vec![1.0, -2.0]).unwrap());
        let y = g.add_scaled(&x, &x, 2.0).unwrap();
        let t = g.constant(Tensor::zeros([1, 1, 2]));
        let loss = g.mse(&y, &t).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[9.0, -18.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new([1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap());
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let t = g.constant(Tensor::full([1, 1, 3], -1.0));
        let loss = g.mse(&r, &t).unwrap();
        let grads = g.backward(loss).unwrap();
        let gx = grads.get(x).unwrap().data();
        assert_eq!(gx[0], 0.0);
        assert_eq!(gx[1], 0.0);
        assert!(gx[2] > 0.0);
    }
}
