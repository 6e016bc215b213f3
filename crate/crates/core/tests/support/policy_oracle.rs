//! Independent recomputation of the router's pair distribution from raw
//! parameters, plus central finite differences.

#![allow(dead_code)]

use rand::Rng;

use tierroute_core::backends::{BackendRegistry, GraphRagSpec, LlmSpec, Tier};
use tierroute_core::policy::{Architecture, PolicySnapshot};

pub fn registry(g: usize, l: usize) -> BackendRegistry {
    let tiers = [Tier::Small, Tier::Medium, Tier::Large];
    BackendRegistry {
        graphrags: (0..g).map(|i| GraphRagSpec::new(format!("G{i}"))).collect(),
        llms: (0..l).map(|i| LlmSpec::new(format!("L{i}"), tiers[i % 3])).collect(),
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `p[g][l]` recomputed from the documented parameter layout.
pub fn pair_probs(arch: Architecture, params: &[f64], g: usize, l: usize, d: usize, x: &[f64], t: f64) -> Vec<Vec<f64>> {
    let row = |offset: usize| -> f64 { (0..d).map(|k| params[offset + k] * x[k]).sum::<f64>() };
    match arch {
        Architecture::Hierarchical => {
            let pg = softmax(&(0..g).map(|i| row(i * d) / t).collect::<Vec<_>>());
            let u0 = (g + l) * d;
            (0..g)
                .map(|gi| {
                    let pl = softmax(&(0..l).map(|li| (row((g + li) * d) + params[u0 + gi * l + li]) / t).collect::<Vec<_>>());
                    pl.iter().map(|p| pg[gi] * p).collect()
                })
                .collect()
        }
        Architecture::Joint => {
            let flat = softmax(&(0..g * l).map(|k| row(k * d) / t).collect::<Vec<_>>());
            flat.chunks(l).map(|c| c.to_vec()).collect()
        }
    }
}

pub fn kl(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    p.iter().flatten().zip(q.iter().flatten()).map(|(a, b)| if *a > 0.0 { a * (a / b).ln() } else { 0.0 }).sum()
}

pub struct Instance {
    pub policy: PolicySnapshot,
    pub x: Vec<f64>,
    pub g: usize,
    pub l: usize,
    pub temperature: f64,
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let arch = if rng.gen_bool(0.5) { Architecture::Hierarchical } else { Architecture::Joint };
    let (ng, nl, d) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4));
    let mut policy = PolicySnapshot::new(arch, &registry(ng, nl), d);
    policy.params.iter_mut().for_each(|p| *p = rng.gen_range(-1.5..1.5));
    policy.reference_params.iter_mut().for_each(|p| *p = rng.gen_range(-1.5..1.5));
    let x = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Instance { policy, x, g: rng.gen_range(0..ng), l: rng.gen_range(0..nl), temperature: rng.gen_range(0.5..2.0) }
}

/// Central differences of `f` at `params` with step `h`.
pub fn central_diff(params: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        0.0
    } else {
        norm(&diff) / scale
    }
}
