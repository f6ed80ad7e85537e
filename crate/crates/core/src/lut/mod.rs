//! Bank of trainable 3D lookup tables.
//!
//! A [`Lut3D`] stores a `D×D×D×3` lattice indexed `(r, g, b, channel)`;
//! lattice point `(i, j, k)` sits at RGB coordinate `(i, j, k) / (D − 1)`.
//! Lookups clamp the input into the unit cube and interpolate the eight
//! corners of the enclosing cell; the cell index is clamped to `D − 2` so
//! that a coordinate of exactly 1 lands in the last cell with fraction 1.

mod cube;
mod prior;

pub use cube::{export_cube, import_cube, parse_cube, write_cube};
pub use prior::{hsv_to_rgb, rgb_to_hsv, Prior, PriorParams};

use crate::error::{Error, Result};
use crate::tensor::{kernels, ops, Backend, Tensor};

pub const DEFAULT_LATTICE_SIZE: usize = 33;
pub const DEFAULT_NUM_LUTS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Lut3D {
    table: Tensor,
    pub trainable: bool,
}

impl Lut3D {
    /// Samples `f` at every lattice point.
    pub fn from_fn(size: usize, f: impl Fn([f64; 3]) -> [f64; 3]) -> Result<Self> {
        check_size(size)?;
        let scale = (size - 1) as f64;
        let mut data = Vec::with_capacity(size * size * size * 3);
        for i in 0..size {
            for j in 0..size {
                for k in 0..size {
                    let rgb = f([i as f64 / scale, j as f64 / scale, k as f64 / scale]);
                    data.extend(rgb.iter().map(|&v| v as f32));
                }
            }
        }
        Self::from_table(size, data)
    }

    pub fn identity(size: usize) -> Result<Self> {
        Self::from_fn(size, |p| p)
    }

    /// Wraps raw lattice data laid out `(r, g, b, channel)`.
    pub fn from_table(size: usize, data: Vec<f32>) -> Result<Self> {
        check_size(size)?;
        Ok(Self {
            table: Tensor::new([size, size, size, 3], data)?,
            trainable: true,
        })
    }

    pub fn size(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut Tensor {
        &mut self.table
    }

    /// Stored color at lattice point `(r, g, b)`.
    pub fn get(&self, r: usize, g: usize, b: usize) -> [f32; 3] {
        let d = self.size();
        let idx = ((r * d + g) * d + b) * 3;
        let t = self.table.data();
        [t[idx], t[idx + 1], t[idx + 2]]
    }

    /// Applies the lattice to a 3×H×W image by trilinear interpolation.
    pub fn apply(&self, image: &Tensor) -> Result<Tensor> {
        ops::trilinear(&self.table, image)
    }
}

fn check_size(size: usize) -> Result<()> {
    if size < 2 {
        return Err(Error::size("lut", format!("lattice size must be >= 2, got {size}")));
    }
    Ok(())
}

/// Ordered ensemble of equally sized LUTs with display names.
#[derive(Clone, Debug, PartialEq)]
pub struct LutBank {
    luts: Vec<Lut3D>,
    names: Vec<String>,
}

impl LutBank {
    /// The first `min(n, 8)` LUTs follow [`Prior::ALL`]; any further ones
    /// start as identity.
    pub fn specialized(n: usize, size: usize) -> Result<Self> {
        Self::specialized_with(n, size, &PriorParams::default())
    }

    pub fn specialized_with(n: usize, size: usize, params: &PriorParams) -> Result<Self> {
        check_count(n)?;
        check_size(size)?;
        let mut luts = Vec::with_capacity(n);
        let mut names = Vec::with_capacity(n);
        for i in 0..n {
            match Prior::ALL.get(i) {
                Some(&prior) => {
                    luts.push(Lut3D::from_fn(size, |p| prior.eval(p, params))?);
                    names.push(prior.name().to_string());
                }
                None => {
                    luts.push(Lut3D::identity(size)?);
                    names.push(format!("identity-{i}"));
                }
            }
        }
        Ok(Self { luts, names })
    }

    /// All-identity bank, for training without analytic priors.
    pub fn identity(n: usize, size: usize) -> Result<Self> {
        check_count(n)?;
        let luts = (0..n).map(|_| Lut3D::identity(size)).collect::<Result<Vec<_>>>()?;
        let names = (0..n).map(|i| format!("identity-{i}")).collect();
        Ok(Self { luts, names })
    }

    pub fn from_luts(luts: Vec<Lut3D>, names: Vec<String>) -> Result<Self> {
        check_count(luts.len())?;
        if names.len() != luts.len() {
            return Err(Error::shape("lut_bank", "one name per LUT required"));
        }
        let d = luts[0].size();
        if luts.iter().any(|l| l.size() != d) {
            return Err(Error::shape("lut_bank", "all LUTs must share one lattice size"));
        }
        Ok(Self { luts, names })
    }

    pub fn len(&self) -> usize {
        self.luts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.luts.is_empty()
    }

    pub fn lattice_size(&self) -> usize {
        self.luts[0].size()
    }

    pub fn luts(&self) -> &[Lut3D] {
        &self.luts
    }

    pub fn luts_mut(&mut self) -> &mut [Lut3D] {
        &mut self.luts
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn param_count(&self) -> usize {
        self.luts.iter().map(|l| l.table.len()).sum()
    }

    /// `Σ_i weights[i] · L_i(image)`, accumulated one LUT at a time.
    pub fn blend_apply(&self, weights: &Tensor, image: &Tensor) -> Result<Tensor> {
        if weights.shape() != [self.len()] {
            return Err(Error::shape(
                "blend_apply",
                format!("{} LUTs but weight shape {:?}", self.len(), weights.shape()),
            ));
        }
        let (c, h, w) = image.chw()?;
        if c != 3 {
            return Err(Error::shape("blend_apply", format!("image must have 3 channels, got {c}")));
        }
        let mut acc = vec![0.0f32; 3 * h * w];
        for (lut, &wt) in self.luts.iter().zip(weights.data()) {
            let mapped = kernels::trilinear_forward(lut.table.data(), lut.size(), image.data(), h * w);
            for (a, v) in acc.iter_mut().zip(mapped) {
                *a += wt * v;
            }
        }
        Tensor::new([3, h, w], acc)
    }
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::size("lut_bank", "needs at least one LUT"));
    }
    Ok(())
}

/// Differentiable blend on any backend: trilinear lookup through every
/// lattice followed by the weighted sum.
pub fn blend<B: Backend>(
    b: &mut B,
    luts: &[B::Value],
    weights: &B::Value,
    image: &B::Value,
) -> Result<B::Value> {
    let mapped = luts
        .iter()
        .map(|lut| b.trilinear(lut, image))
        .collect::<Result<Vec<_>>>()?;
    b.weighted_sum(&mapped, weights)
}
