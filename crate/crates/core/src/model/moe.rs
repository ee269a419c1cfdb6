use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gate::{logit_gradient, select_top_k, GateDecision};
use super::params::Params;
use super::patch::{PatchBlock, PatchBlockCache};
use super::{Architecture, ModelConfig, BASELINE_WIDTH};
use crate::error::{Error, Result};
use crate::nn::{softmax_row, Linear, Matrix, Mlp, MlpCache, Parameter};

/// One expert of a multi-scale layer. Both variants map `B×L → B×L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expert {
    Patch(PatchBlock),
    Plain(Mlp),
}

#[derive(Debug, Clone)]
enum ExpertCache {
    Patch(PatchBlockCache),
    Plain(MlpCache),
}

impl ExpertCache {
    fn push_pattern(&self, out: &mut Vec<bool>) {
        match self {
            ExpertCache::Patch(c) => c.push_pattern(out),
            ExpertCache::Plain(c) => c.push_pattern(out),
        }
    }
}

impl Expert {
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Expert::Patch(b) => b.forward(x),
            Expert::Plain(m) => m.forward(x),
        }
    }

    fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, ExpertCache)> {
        Ok(match self {
            Expert::Patch(b) => {
                let (y, c) = b.forward_cached(x)?;
                (y, ExpertCache::Patch(c))
            }
            Expert::Plain(m) => {
                let (y, c) = m.forward_cached(x)?;
                (y, ExpertCache::Plain(c))
            }
        })
    }

    fn backward(&mut self, cache: &ExpertCache, grad_out: &Matrix) -> Result<Matrix> {
        match (self, cache) {
            (Expert::Patch(b), ExpertCache::Patch(c)) => b.backward(c, grad_out),
            (Expert::Plain(m), ExpertCache::Plain(c)) => m.backward(c, grad_out),
            _ => Err(Error::Internal("expert cache does not match expert kind".into())),
        }
    }
}

impl Params for Expert {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        match self {
            Expert::Patch(b) => b.collect(prefix, out),
            Expert::Plain(m) => m.collect(prefix, out),
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Parameter)>) {
        match self {
            Expert::Patch(b) => b.collect_mut(prefix, out),
            Expert::Plain(m) => m.collect_mut(prefix, out),
        }
    }
}

/// A batch row routed to an expert, with its combine weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Route {
    pub row: usize,
    pub weight: f64,
}

/// Per-expert sub-batches and the index map back to the original batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch {
    pub sub_batches: Vec<Matrix>,
    pub routes: Vec<Vec<Route>>,
}

/// Splits `batch` into one sub-batch per expert, rows in ascending original order.
pub fn dispatch(batch: &Matrix, decisions: &[GateDecision], n: usize) -> Result<Dispatch> {
    if decisions.len() != batch.rows() {
        return Err(Error::dims("dispatch", batch.shape(), (decisions.len(), n)));
    }
    let mut routes: Vec<Vec<Route>> = vec![Vec::new(); n];
    for (row, d) in decisions.iter().enumerate() {
        for (&e, &weight) in d.selected.iter().zip(&d.weights) {
            if e >= n {
                return Err(Error::Internal(format!("expert index {e} out of range for {n} experts")));
            }
            routes[e].push(Route { row, weight });
        }
    }
    let sub_batches = routes
        .iter()
        .map(|r| {
            let mut m = Matrix::zeros(r.len(), batch.cols());
            for (i, route) in r.iter().enumerate() {
                m.row_mut(i).copy_from_slice(batch.row(route.row));
            }
            m
        })
        .collect();
    Ok(Dispatch { sub_batches, routes })
}

/// Weighted scatter of expert outputs back into batch order.
///
/// `outputs` holds `(expert, output)` pairs in any order; experts with an empty
/// route list may be omitted. Accumulation always runs in ascending expert
/// index, so the result does not depend on the order experts were evaluated in.
pub fn combine(outputs: &[(usize, Matrix)], routes: &[Vec<Route>], batch_rows: usize, cols: usize) -> Result<Matrix> {
    let mut slots: Vec<Option<&Matrix>> = vec![None; routes.len()];
    for (e, m) in outputs {
        let slot = slots
            .get_mut(*e)
            .ok_or_else(|| Error::Internal(format!("output for unknown expert {e}")))?;
        if slot.is_some() {
            return Err(Error::Internal(format!("duplicate output for expert {e}")));
        }
        if m.rows() != routes[*e].len() || m.cols() != cols {
            return Err(Error::Internal(format!(
                "expert {e} returned {}x{} for {} routed rows of width {cols}",
                m.rows(),
                m.cols(),
                routes[*e].len()
            )));
        }
        *slot = Some(m);
    }
    let mut out = Matrix::zeros(batch_rows, cols);
    for (e, r) in routes.iter().enumerate() {
        if r.is_empty() {
            continue;
        }
        let m = slots[e].ok_or_else(|| Error::Internal(format!("missing output for expert {e}")))?;
        for (i, route) in r.iter().enumerate() {
            if route.row >= batch_rows {
                return Err(Error::Internal(format!("route to row {} of {batch_rows}", route.row)));
            }
            for (o, v) in out.row_mut(route.row).iter_mut().zip(m.row(i)) {
                *o += route.weight * v;
            }
        }
    }
    Ok(out)
}

/// A multi-scale layer: gate, dispatcher, `n` experts and combiner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoeLayer {
    pub gate: Linear,
    pub experts: Vec<Expert>,
}

#[derive(Debug, Clone)]
pub struct MoeLayerCache {
    input: Matrix,
    decisions: Vec<GateDecision>,
    routes: Vec<Vec<Route>>,
    outputs: Vec<Option<Matrix>>,
    caches: Vec<Option<ExpertCache>>,
}

impl MoeLayerCache {
    pub fn decisions(&self) -> &[GateDecision] {
        &self.decisions
    }

    pub(crate) fn push_pattern(&self, n: usize, out: &mut Vec<bool>) {
        for d in &self.decisions {
            out.extend((0..n).map(|e| d.selected.contains(&e)));
        }
        for c in self.caches.iter().flatten() {
            c.push_pattern(out);
        }
    }
}

impl MoeLayer {
    /// Layer `index` of `config`: patch experts for the patch-MLP model, plain
    /// `w → 64 → w` experts for the plain mixture baseline.
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, index: usize, rng: &mut R) -> Result<Self> {
        let w = config.window;
        let gate = Linear::new(w, config.experts_per_layer, rng);
        let experts = (0..config.experts_per_layer)
            .map(|e| match config.architecture {
                Architecture::Mspmlp => {
                    PatchBlock::new(w, config.patch_sizes[index][e], config, rng).map(Expert::Patch)
                }
                Architecture::PlainMoe => Mlp::new(&[w, BASELINE_WIDTH, w], rng).map(Expert::Plain),
                Architecture::Dnn => Err(Error::Config("the DNN baseline has no expert layers".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MoeLayer { gate, experts })
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    /// Gate decisions for every row of `x`.
    pub fn decide(&self, x: &Matrix, k: usize) -> Result<Vec<GateDecision>> {
        let logits = self.gate.forward(x)?;
        (0..x.rows())
            .map(|r| select_top_k(&softmax_row(logits.row(r))?, k))
            .collect()
    }

    pub fn forward(&self, x: &Matrix, k: usize) -> Result<Matrix> {
        let decisions = self.decide(x, k)?;
        let d = dispatch(x, &decisions, self.num_experts())?;
        let mut outputs = Vec::with_capacity(self.num_experts());
        for (e, (expert, sub)) in self.experts.iter().zip(&d.sub_batches).enumerate() {
            if sub.rows() > 0 {
                outputs.push((e, expert.forward(sub)?));
            }
        }
        combine(&outputs, &d.routes, x.rows(), x.cols())
    }

    pub fn forward_cached(&self, x: &Matrix, k: usize) -> Result<(Matrix, MoeLayerCache)> {
        let decisions = self.decide(x, k)?;
        let n = self.num_experts();
        let Dispatch { sub_batches, routes } = dispatch(x, &decisions, n)?;
        let mut outputs = Vec::with_capacity(n);
        let mut caches = Vec::with_capacity(n);
        for (expert, sub) in self.experts.iter().zip(&sub_batches) {
            if sub.rows() == 0 {
                outputs.push(None);
                caches.push(None);
                continue;
            }
            let (y, c) = expert.forward_cached(sub)?;
            outputs.push(Some(y));
            caches.push(Some(c));
        }
        let pairs: Vec<(usize, Matrix)> = outputs
            .iter()
            .enumerate()
            .filter_map(|(e, o)| o.clone().map(|m| (e, m)))
            .collect();
        let y = combine(&pairs, &routes, x.rows(), x.cols())?;
        let cache = MoeLayerCache {
            input: x.clone(),
            decisions,
            routes,
            outputs,
            caches,
        };
        Ok((y, cache))
    }

    pub fn backward(&mut self, cache: &MoeLayerCache, grad_out: &Matrix) -> Result<Matrix> {
        let (b, l) = cache.input.shape();
        if grad_out.shape() != (b, l) {
            return Err(Error::dims("moe backward", (b, l), grad_out.shape()));
        }
        let mut grad_in = Matrix::zeros(b, l);
        let mut weight_grads: Vec<Vec<f64>> = cache.decisions.iter().map(|d| vec![0.0; d.selected.len()]).collect();

        for (e, expert) in self.experts.iter_mut().enumerate() {
            let routes = &cache.routes[e];
            if routes.is_empty() {
                continue;
            }
            let (Some(out), Some(ec)) = (&cache.outputs[e], &cache.caches[e]) else {
                return Err(Error::Internal(format!("expert {e} routed but not evaluated")));
            };
            let mut d_out = Matrix::zeros(routes.len(), l);
            for (i, route) in routes.iter().enumerate() {
                let dy = grad_out.row(route.row);
                for (d, g) in d_out.row_mut(i).iter_mut().zip(dy) {
                    *d = route.weight * g;
                }
                let slot = cache.decisions[route.row]
                    .selected
                    .iter()
                    .position(|&s| s == e)
                    .ok_or_else(|| Error::Internal(format!("row {} not routed to expert {e}", route.row)))?;
                weight_grads[route.row][slot] = dy.iter().zip(out.row(i)).map(|(a, b)| a * b).sum();
            }
            let d_sub = expert.backward(ec, &d_out)?;
            for (i, route) in routes.iter().enumerate() {
                for (g, d) in grad_in.row_mut(route.row).iter_mut().zip(d_sub.row(i)) {
                    *g += d;
                }
            }
        }

        let n = self.num_experts();
        let mut d_logits = Matrix::zeros(b, n);
        for (r, (d, wg)) in cache.decisions.iter().zip(&weight_grads).enumerate() {
            logit_gradient(d, wg, d_logits.row_mut(r));
        }
        grad_in.add_assign(&self.gate.backward(&cache.input, &d_logits)?)?;
        Ok(grad_in)
    }
}

impl Params for MoeLayer {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        self.gate.collect(&format!("{prefix}.gate"), out);
        for (e, x) in self.experts.iter().enumerate() {
            x.collect(&format!("{prefix}.experts.{e}"), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Parameter)>) {
        self.gate.collect_mut(&format!("{prefix}.gate"), out);
        for (e, x) in self.experts.iter_mut().enumerate() {
            x.collect_mut(&format!("{prefix}.experts.{e}"), out);
        }
    }
}
