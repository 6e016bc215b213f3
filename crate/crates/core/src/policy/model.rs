//! Router parameters, action distributions and analytic gradients.
//!
//! The hierarchical router scores retrievers with `W_g x`, then scores
//! generators given the chosen retriever with `W_l x + U[g]`. The joint
//! variant scores every (retriever, generator) pair directly with `V x`.
//! All logits are divided by the sampling temperature.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::backends::BackendRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    #[default]
    Hierarchical,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub arch: Architecture,
    pub graphrag_ids: Vec<String>,
    pub llm_ids: Vec<String>,
    pub feature_dim: usize,
    pub params: Vec<f64>,
    /// Anchor for the KL term; replaced only by [`PolicySnapshot::reset_reference`].
    pub reference_params: Vec<f64>,
}

/// Retriever probabilities and, per retriever, generator probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub graphrag: Vec<f64>,
    pub llm_given: Vec<Vec<f64>>,
}

impl ActionDistribution {
    pub fn pair(&self, g: usize, l: usize) -> f64 {
        self.graphrag[g] * self.llm_given[g][l]
    }

    /// Marginal probability of each generator.
    pub fn llm_marginal(&self) -> Vec<f64> {
        let n = self.llm_given.first().map_or(0, Vec::len);
        (0..n).map(|l| (0..self.graphrag.len()).map(|g| self.pair(g, l)).sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub graphrag: usize,
    pub llm: usize,
    pub log_prob: f64,
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the first cumulative bucket exceeding `u`.
fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Log-probabilities in both layouts. For the joint variant `stage1` holds
/// the pair log-probs flattened row-major and `stage2` is empty.
struct LogDist {
    stage1: Vec<f64>,
    stage2: Vec<Vec<f64>>,
}

impl PolicySnapshot {
    pub fn param_count(arch: Architecture, g: usize, l: usize, d: usize) -> usize {
        match arch {
            Architecture::Hierarchical => g * d + l * d + g * l,
            Architecture::Joint => g * l * d,
        }
    }

    /// Zero parameters: every stage is uniform.
    pub fn new(arch: Architecture, registry: &BackendRegistry, feature_dim: usize) -> Self {
        let graphrag_ids = registry.graphrag_ids();
        let llm_ids = registry.llm_ids();
        let n = Self::param_count(arch, graphrag_ids.len(), llm_ids.len(), feature_dim);
        PolicySnapshot { arch, graphrag_ids, llm_ids, feature_dim, params: vec![0.0; n], reference_params: vec![0.0; n] }
    }

    pub fn n_graphrag(&self) -> usize {
        self.graphrag_ids.len()
    }

    pub fn n_llm(&self) -> usize {
        self.llm_ids.len()
    }

    pub fn reset_reference(&mut self) {
        self.reference_params = self.params.clone();
    }

    fn wg(&self, g: usize) -> usize {
        g * self.feature_dim
    }

    fn wl(&self, l: usize) -> usize {
        (self.n_graphrag() + l) * self.feature_dim
    }

    fn u(&self, g: usize, l: usize) -> usize {
        (self.n_graphrag() + self.n_llm()) * self.feature_dim + g * self.n_llm() + l
    }

    fn v(&self, g: usize, l: usize) -> usize {
        (g * self.n_llm() + l) * self.feature_dim
    }

    fn log_dist(&self, params: &[f64], x: &[f64], temperature: f64) -> LogDist {
        let d = self.feature_dim;
        let (ng, nl) = (self.n_graphrag(), self.n_llm());
        match self.arch {
            Architecture::Hierarchical => {
                let a: Vec<f64> = (0..ng).map(|g| dot(&params[self.wg(g)..self.wg(g) + d], x) / temperature).collect();
                let base: Vec<f64> = (0..nl).map(|l| dot(&params[self.wl(l)..self.wl(l) + d], x)).collect();
                let stage2 = (0..ng)
                    .map(|g| {
                        let b: Vec<f64> = (0..nl).map(|l| (base[l] + params[self.u(g, l)]) / temperature).collect();
                        log_softmax(&b)
                    })
                    .collect();
                LogDist { stage1: log_softmax(&a), stage2 }
            }
            Architecture::Joint => {
                let c: Vec<f64> = (0..ng)
                    .flat_map(|g| (0..nl).map(move |l| (g, l)))
                    .map(|(g, l)| dot(&params[self.v(g, l)..self.v(g, l) + d], x) / temperature)
                    .collect();
                LogDist { stage1: log_softmax(&c), stage2: Vec::new() }
            }
        }
    }

    fn distribution_of(&self, params: &[f64], x: &[f64], temperature: f64) -> ActionDistribution {
        let ld = self.log_dist(params, x, temperature);
        match self.arch {
            Architecture::Hierarchical => ActionDistribution {
                graphrag: ld.stage1.iter().map(|v| v.exp()).collect(),
                llm_given: ld.stage2.iter().map(|row| row.iter().map(|v| v.exp()).collect()).collect(),
            },
            Architecture::Joint => {
                let nl = self.n_llm();
                let pairs: Vec<f64> = ld.stage1.iter().map(|v| v.exp()).collect();
                let graphrag: Vec<f64> = pairs.chunks(nl).map(|row| row.iter().sum()).collect();
                let llm_given = pairs
                    .chunks(nl)
                    .zip(&graphrag)
                    .map(|(row, &pg)| {
                        if pg > 0.0 {
                            row.iter().map(|p| p / pg).collect()
                        } else {
                            vec![1.0 / nl as f64; nl]
                        }
                    })
                    .collect();
                ActionDistribution { graphrag, llm_given }
            }
        }
    }

    pub fn distribution(&self, x: &[f64], temperature: f64) -> ActionDistribution {
        self.distribution_of(&self.params, x, temperature)
    }

    pub fn reference_distribution(&self, x: &[f64], temperature: f64) -> ActionDistribution {
        self.distribution_of(&self.reference_params, x, temperature)
    }

    fn check_pools(&self) -> Result<(), PolicyError> {
        if self.n_graphrag() == 0 || self.n_llm() == 0 {
            return Err(PolicyError::EmptyPool);
        }
        Ok(())
    }

    /// Draws a retriever then a generator. The joint variant draws a pair
    /// directly. Always consumes exactly two uniforms.
    pub fn sample(&self, x: &[f64], temperature: f64, rng: &mut dyn RngCore) -> Result<SampledAction, PolicyError> {
        self.check_pools()?;
        let (u1, u2): (f64, f64) = (rng.gen(), rng.gen());
        let ld = self.log_dist(&self.params, x, temperature);
        let (g, l) = match self.arch {
            Architecture::Hierarchical => {
                let p: Vec<f64> = ld.stage1.iter().map(|v| v.exp()).collect();
                let g = pick(&p, u1);
                let r: Vec<f64> = ld.stage2[g].iter().map(|v| v.exp()).collect();
                (g, pick(&r, u2))
            }
            Architecture::Joint => {
                let p: Vec<f64> = ld.stage1.iter().map(|v| v.exp()).collect();
                let k = pick(&p, u1);
                (k / self.n_llm(), k % self.n_llm())
            }
        };
        Ok(SampledAction { graphrag: g, llm: l, log_prob: self.log_prob(x, g, l, temperature) })
    }

    pub fn log_prob(&self, x: &[f64], g: usize, l: usize, temperature: f64) -> f64 {
        self.log_prob_of(&self.params, x, g, l, temperature)
    }

    fn log_prob_of(&self, params: &[f64], x: &[f64], g: usize, l: usize, temperature: f64) -> f64 {
        let ld = self.log_dist(params, x, temperature);
        match self.arch {
            Architecture::Hierarchical => ld.stage1[g] + ld.stage2[g][l],
            Architecture::Joint => ld.stage1[g * self.n_llm() + l],
        }
    }

    /// Adds `scale * d log pi(g, l | x) / d params` into `out`.
    pub fn add_log_prob_grad(&self, x: &[f64], g: usize, l: usize, temperature: f64, scale: f64, out: &mut [f64]) {
        let d = self.feature_dim;
        let ld = self.log_dist(&self.params, x, temperature);
        let s = scale / temperature;
        match self.arch {
            Architecture::Hierarchical => {
                for (k, lp) in ld.stage1.iter().enumerate() {
                    let coef = s * (f64::from(u8::from(k == g)) - lp.exp());
                    let row = self.wg(k);
                    out[row..row + d].iter_mut().zip(x).for_each(|(o, xi)| *o += coef * xi);
                }
                for (j, lp) in ld.stage2[g].iter().enumerate() {
                    let coef = s * (f64::from(u8::from(j == l)) - lp.exp());
                    let row = self.wl(j);
                    out[row..row + d].iter_mut().zip(x).for_each(|(o, xi)| *o += coef * xi);
                    out[self.u(g, j)] += coef;
                }
            }
            Architecture::Joint => {
                let target = g * self.n_llm() + l;
                for (k, lp) in ld.stage1.iter().enumerate() {
                    let coef = s * (f64::from(u8::from(k == target)) - lp.exp());
                    let row = k * d;
                    out[row..row + d].iter_mut().zip(x).for_each(|(o, xi)| *o += coef * xi);
                }
            }
        }
    }

    /// Exact KL(current || reference) of the joint action distribution at `x`.
    pub fn kl(&self, x: &[f64], temperature: f64) -> f64 {
        self.kl_of(&self.params, x, temperature)
    }

    fn kl_of(&self, params: &[f64], x: &[f64], temperature: f64) -> f64 {
        let cur = self.log_dist(params, x, temperature);
        let refd = self.log_dist(&self.reference_params, x, temperature);
        let kl = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(lp, lq)| lp.exp() * (lp - lq)).sum::<f64>();
        match self.arch {
            Architecture::Hierarchical => {
                let top = kl(&cur.stage1, &refd.stage1);
                let cond: f64 =
                    (0..self.n_graphrag()).map(|g| cur.stage1[g].exp() * kl(&cur.stage2[g], &refd.stage2[g])).sum();
                top + cond
            }
            Architecture::Joint => kl(&cur.stage1, &refd.stage1),
        }
    }

    /// Adds `scale * d KL / d params` into `out`.
    pub fn add_kl_grad(&self, x: &[f64], temperature: f64, scale: f64, out: &mut [f64]) {
        let d = self.feature_dim;
        let cur = self.log_dist(&self.params, x, temperature);
        let refd = self.log_dist(&self.reference_params, x, temperature);
        let s = scale / temperature;
        let kl = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(lp, lq)| lp.exp() * (lp - lq)).sum::<f64>();
        match self.arch {
            Architecture::Hierarchical => {
                let ng = self.n_graphrag();
                let p: Vec<f64> = cur.stage1.iter().map(|v| v.exp()).collect();
                let top = kl(&cur.stage1, &refd.stage1);
                let cond_kl: Vec<f64> = (0..ng).map(|g| kl(&cur.stage2[g], &refd.stage2[g])).collect();
                let cond: f64 = p.iter().zip(&cond_kl).map(|(pg, k)| pg * k).sum();
                for i in 0..ng {
                    let da = p[i] * (cur.stage1[i] - refd.stage1[i] - top) + p[i] * (cond_kl[i] - cond);
                    let row = self.wg(i);
                    out[row..row + d].iter_mut().zip(x).for_each(|(o, xi)| *o += s * da * xi);
                }
                for g in 0..ng {
                    for (j, (lr, ls)) in cur.stage2[g].iter().zip(&refd.stage2[g]).enumerate() {
                        let db = p[g] * lr.exp() * (lr - ls - cond_kl[g]);
                        let row = self.wl(j);
                        out[row..row + d].iter_mut().zip(x).for_each(|(o, xi)| *o += s * db * xi);
                        out[self.u(g, j)] += s * db;
                    }
                }
            }
            Architecture::Joint => {
                let total = kl(&cur.stage1, &refd.stage1);
                for (k, (lp, lq)) in cur.stage1.iter().zip(&refd.stage1).enumerate() {
                    let dc = lp.exp() * (lp - lq - total);
                    let row = k * d;
                    out[row..row + d].iter_mut().zip(x).for_each(|(o, xi)| *o += s * dc * xi);
                }
            }
        }
    }

    /// Numeric helpers for gradient checks.
    pub fn log_prob_at(&self, params: &[f64], x: &[f64], g: usize, l: usize, temperature: f64) -> f64 {
        self.log_prob_of(params, x, g, l, temperature)
    }

    pub fn kl_at(&self, params: &[f64], x: &[f64], temperature: f64) -> f64 {
        self.kl_of(params, x, temperature)
    }

    pub fn graphrag_index(&self, id: &str) -> Option<usize> {
        self.graphrag_ids.iter().position(|g| g == id)
    }

    pub fn llm_index(&self, id: &str) -> Option<usize> {
        self.llm_ids.iter().position(|l| l == id)
    }

    /// Grows the candidate pools to match `registry`. Existing parameters
    /// are kept and new candidates start at zero.
    pub fn extend_for(&mut self, registry: &BackendRegistry) -> Result<(), PolicyError> {
        let new_g = registry.graphrag_ids();
        let new_l = registry.llm_ids();
        if !new_g.starts_with(&self.graphrag_ids) || !new_l.starts_with(&self.llm_ids) {
            return Err(PolicyError::PoolMismatch("registry does not extend the policy's candidate pools".into()));
        }
        let mut grown = PolicySnapshot {
            arch: self.arch,
            graphrag_ids: new_g,
            llm_ids: new_l,
            feature_dim: self.feature_dim,
            params: Vec::new(),
            reference_params: Vec::new(),
        };
        let n = Self::param_count(self.arch, grown.n_graphrag(), grown.n_llm(), self.feature_dim);
        grown.params = self.remap(&grown, &self.params, n);
        grown.reference_params = self.remap(&grown, &self.reference_params, n);
        *self = grown;
        Ok(())
    }

    fn remap(&self, into: &PolicySnapshot, src: &[f64], n: usize) -> Vec<f64> {
        let d = self.feature_dim;
        let mut out = vec![0.0; n];
        match self.arch {
            Architecture::Hierarchical => {
                for g in 0..self.n_graphrag() {
                    out[into.wg(g)..into.wg(g) + d].copy_from_slice(&src[self.wg(g)..self.wg(g) + d]);
                    for l in 0..self.n_llm() {
                        out[into.u(g, l)] = src[self.u(g, l)];
                    }
                }
                for l in 0..self.n_llm() {
                    out[into.wl(l)..into.wl(l) + d].copy_from_slice(&src[self.wl(l)..self.wl(l) + d]);
                }
            }
            Architecture::Joint => {
                for g in 0..self.n_graphrag() {
                    for l in 0..self.n_llm() {
                        out[into.v(g, l)..into.v(g, l) + d].copy_from_slice(&src[self.v(g, l)..self.v(g, l) + d]);
                    }
                }
            }
        }
        out
    }

    /// Checks the snapshot routes over exactly the registry's candidates.
    pub fn check_registry(&self, registry: &BackendRegistry) -> Result<(), PolicyError> {
        if self.graphrag_ids != registry.graphrag_ids() || self.llm_ids != registry.llm_ids() {
            return Err(PolicyError::PoolMismatch("policy candidates differ from the registry".into()));
        }
        Ok(())
    }
}
