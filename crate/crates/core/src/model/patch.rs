use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::Params;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{Matrix, Mlp, MlpCache, Parameter};

/// A sequence of length `N·p` laid out as `N` patches (rows) of length `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    values: Matrix,
}

impl PatchGrid {
    pub fn num_patches(&self) -> usize {
        self.values.rows()
    }

    pub fn patch_size(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn from_matrix(values: Matrix) -> Self {
        PatchGrid { values }
    }
}

fn check_divides(len: usize, p: usize) -> Result<usize> {
    if p == 0 || !len.is_multiple_of(p) {
        return Err(Error::Config(format!("patch size {p} does not divide sequence length {len}")));
    }
    Ok(len / p)
}

pub fn patchify(sequence: &[f64], p: usize) -> Result<PatchGrid> {
    let n = check_divides(sequence.len(), p)?;
    Ok(PatchGrid {
        values: Matrix::from_vec(n, p, sequence.to_vec())?,
    })
}

pub fn unpatchify(grid: &PatchGrid) -> Vec<f64> {
    grid.values.as_slice().to_vec()
}

fn check_mlp(mlp: &Mlp, width: usize, what: &str) -> Result<()> {
    if mlp.d_in() != width || mlp.d_out() != width {
        return Err(Error::Config(format!(
            "{what} MLP maps {} → {}, expected {width} → {width}",
            mlp.d_in(),
            mlp.d_out()
        )));
    }
    Ok(())
}

/// Maps every patch independently through `mlp` (`p → … → p`).
pub fn intra_patch_forward(grid: &PatchGrid, mlp: &Mlp) -> Result<PatchGrid> {
    check_mlp(mlp, grid.patch_size(), "intra-patch")?;
    Ok(PatchGrid {
        values: mlp.forward(&grid.values)?,
    })
}

/// Maps every within-patch position across patches through `mlp` (`N → … → N`).
pub fn inter_patch_forward(grid: &PatchGrid, mlp: &Mlp) -> Result<PatchGrid> {
    check_mlp(mlp, grid.num_patches(), "inter-patch")?;
    let mixed = mlp.forward(&grid.values.transpose())?;
    Ok(PatchGrid {
        values: mixed.transpose(),
    })
}

/// Runs one patch block on a single window.
pub fn patch_block_forward(window: &[f64], block: &PatchBlock) -> Result<Vec<f64>> {
    let batch = Matrix::from_vec(1, window.len(), window.to_vec())?;
    Ok(block.forward(&batch)?.into_vec())
}

/// `B×L` → `(B·p)×N`, row `b·p + j` holding position `j` of every patch of sample `b`.
fn to_position_rows(x: &Matrix, p: usize) -> Matrix {
    let (b, l) = x.shape();
    let n = l / p;
    let mut out = Matrix::zeros(b * p, n);
    let dst = out.as_mut_slice();
    for s in 0..b {
        let row = x.row(s);
        for r in 0..n {
            for j in 0..p {
                dst[(s * p + j) * n + r] = row[r * p + j];
            }
        }
    }
    out
}

/// Inverse of [`to_position_rows`].
fn from_position_rows(m: &Matrix, batch: usize, p: usize) -> Matrix {
    let n = m.cols();
    let mut out = Matrix::zeros(batch, n * p);
    let src = m.as_slice();
    for s in 0..batch {
        let row = out.row_mut(s);
        for r in 0..n {
            for j in 0..p {
                row[r * p + j] = src[(s * p + j) * n + r];
            }
        }
    }
    out
}

/// Patch-based MLP block: intra-patch and inter-patch MLPs fused by addition.
/// A disabled path has no parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchBlock {
    pub patch_size: usize,
    pub intra: Option<Mlp>,
    pub inter: Option<Mlp>,
}

#[derive(Debug, Clone)]
pub struct PatchBlockCache {
    intra: Option<MlpCache>,
    inter: Option<MlpCache>,
}

impl PatchBlockCache {
    pub(crate) fn push_pattern(&self, out: &mut Vec<bool>) {
        for c in [&self.intra, &self.inter].into_iter().flatten() {
            c.push_pattern(out);
        }
    }
}

impl PatchBlock {
    pub fn new<R: Rng + ?Sized>(window: usize, patch_size: usize, config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let n = check_divides(window, patch_size)?;
        if !config.enable_intra && !config.enable_inter {
            return Err(Error::Config("patch block needs at least one enabled path".into()));
        }
        let intra = if config.enable_intra {
            Some(Mlp::square(patch_size, config.intra_width, config.intra_depth, rng)?)
        } else {
            None
        };
        let inter = if config.enable_inter {
            Some(Mlp::square(n, config.inter_width, config.inter_depth, rng)?)
        } else {
            None
        };
        Ok(PatchBlock { patch_size, intra, inter })
    }

    fn check_input(&self, x: &Matrix) -> Result<usize> {
        if self.intra.is_none() && self.inter.is_none() {
            return Err(Error::Config("patch block has both paths disabled".into()));
        }
        check_divides(x.cols(), self.patch_size)
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_impl(x, false)?.0)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, PatchBlockCache)> {
        self.forward_impl(x, true)
    }

    fn forward_impl(&self, x: &Matrix, keep: bool) -> Result<(Matrix, PatchBlockCache)> {
        let n = self.check_input(x)?;
        let (b, l) = x.shape();
        let p = self.patch_size;
        let mut out = Matrix::zeros(b, l);
        let mut cache = PatchBlockCache { intra: None, inter: None };

        if let Some(mlp) = &self.intra {
            check_mlp(mlp, p, "intra-patch")?;
            // row-major B×L is already (B·N)×p
            let patches = x.clone().reshape(b * n, p)?;
            let (y, c) = if keep {
                let (y, c) = mlp.forward_cached(&patches)?;
                (y, Some(c))
            } else {
                (mlp.forward(&patches)?, None)
            };
            out.add_assign(&y.reshape(b, l)?)?;
            cache.intra = c;
        }
        if let Some(mlp) = &self.inter {
            check_mlp(mlp, n, "inter-patch")?;
            let positions = to_position_rows(x, p);
            let (y, c) = if keep {
                let (y, c) = mlp.forward_cached(&positions)?;
                (y, Some(c))
            } else {
                (mlp.forward(&positions)?, None)
            };
            out.add_assign(&from_position_rows(&y, b, p))?;
            cache.inter = c;
        }
        Ok((out, cache))
    }

    pub fn backward(&mut self, cache: &PatchBlockCache, grad_out: &Matrix) -> Result<Matrix> {
        let (b, l) = grad_out.shape();
        let p = self.patch_size;
        let n = check_divides(l, p)?;
        let mut grad_in = Matrix::zeros(b, l);
        if let (Some(mlp), Some(c)) = (&mut self.intra, &cache.intra) {
            let g = grad_out.clone().reshape(b * n, p)?;
            grad_in.add_assign(&mlp.backward(c, &g)?.reshape(b, l)?)?;
        }
        if let (Some(mlp), Some(c)) = (&mut self.inter, &cache.inter) {
            let g = to_position_rows(grad_out, p);
            grad_in.add_assign(&from_position_rows(&mlp.backward(c, &g)?, b, p))?;
        }
        Ok(grad_in)
    }
}

impl Params for PatchBlock {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        if let Some(m) = &self.intra {
            m.collect(&format!("{prefix}.intra"), out);
        }
        if let Some(m) = &self.inter {
            m.collect(&format!("{prefix}.inter"), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Parameter)>) {
        if let Some(m) = &mut self.intra {
            m.collect_mut(&format!("{prefix}.intra"), out);
        }
        if let Some(m) = &mut self.inter {
            m.collect_mut(&format!("{prefix}.inter"), out);
        }
    }
}
