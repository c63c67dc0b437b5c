#![allow(dead_code)]

pub mod naive;

use garec::attn::{forward_edge, Activation, EdgeTrace, ModelShape, ModelState};
use garec::data::{RatingRecord, SparseRatings};
use garec::graph::CoRatingGraph;
use garec::linalg::Matrix;
use garec::nmf::FactorPair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small random problem: ratings, graph, model and a batch of train edges.
pub struct Instance {
    pub ratings: SparseRatings,
    pub graph: CoRatingGraph,
    pub state: ModelState,
    pub batch: Vec<RatingRecord>,
    pub freeze_factors: bool,
}

pub fn random_ratings(n: usize, m: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::new();
    for u in 0..n {
        for i in 0..m {
            if rng.gen::<f64>() < density {
                t.push((u, i, f64::from(rng.gen_range(1u8..=5))));
            }
        }
    }
    if t.is_empty() {
        t.push((0, 0, 3.0));
    }
    t
}

pub fn random_factors(n: usize, m: usize, d: usize, rng: &mut ChaCha8Rng) -> FactorPair {
    let mut mat = |rows| {
        Matrix::from_vec(rows, d, (0..rows * d).map(|_| rng.gen_range(0.05..1.0)).collect()).unwrap()
    };
    let user = mat(n);
    let item = mat(m);
    FactorPair::new(user, item).unwrap()
}

/// Perturbs every parameter so nothing sits at the identity-like init.
pub fn jitter(state: &mut ModelState, scale: f64, rng: &mut ChaCha8Rng) {
    for t in state.tensors_mut(false) {
        for x in t.iter_mut() {
            *x += rng.gen_range(-scale..scale);
        }
    }
}

pub fn random_instance(seed: u64, max_nm: usize, max_d: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nm);
    let m = rng.gen_range(2..=max_nm);
    let d = rng.gen_range(1..=max_d);
    let d_out = rng.gen_range(1..=max_d);
    let triples = random_ratings(n, m, 0.6, &mut rng);
    let ratings = SparseRatings::from_triples(n, m, &triples).unwrap();
    let cap = rng.gen_range(1..=n.max(m) + 1);
    let graph = CoRatingGraph::build(&ratings, cap);
    let activation = [Activation::Tanh, Activation::Identity, Activation::Relu][rng.gen_range(0..3)];
    let shape = ModelShape {
        d_out,
        hidden: (rng.gen_range(1..=4), rng.gen_range(1..=3)),
        activation,
        separate_keys: rng.gen_bool(0.5),
    };
    let factors = random_factors(n, m, d, &mut rng);
    let mut state = ModelState::init(factors, &shape, 3.0, &mut rng);
    jitter(&mut state, 0.3, &mut rng);
    let batch = triples
        .iter()
        .map(|&(u, i, r)| RatingRecord::new(u, i, r as u8))
        .collect();
    Instance {
        ratings,
        graph,
        state,
        batch,
        freeze_factors: rng.gen_bool(0.25),
    }
}

/// Every discrete choice the forward pass makes: fallbacks, ReLU survivors,
/// mean-threshold keeps and the sign pattern of every rectifier input.
pub fn mask_signature(inst: &Instance, state: &ModelState) -> Vec<Vec<usize>> {
    let proj = state.project();
    let mut sig = Vec::new();
    for r in &inst.batch {
        let t: EdgeTrace = forward_edge(state, &proj, &inst.graph, &inst.ratings, r.user, r.item);
        for side in [&t.user, &t.item] {
            sig.push(vec![usize::from(side.fallback)]);
            sig.push(side.support.survivors.clone());
            sig.push(side.support.kept.clone());
            if state.activation == Activation::Relu {
                sig.push(side.z.iter().enumerate().filter(|(_, &z)| z > 0.0).map(|(k, _)| k).collect());
            }
        }
        let hidden = t.mlp.pre.len() - 1;
        for pre in &t.mlp.pre[..hidden] {
            sig.push(pre.iter().enumerate().filter(|(_, &z)| z > 0.0).map(|(k, _)| k).collect());
        }
    }
    sig
}

/// Smallest distance of any decision quantity to its threshold.
pub fn boundary_margin(inst: &Instance, state: &ModelState) -> f64 {
    let proj = state.project();
    let mut margin = f64::INFINITY;
    for r in &inst.batch {
        let t = forward_edge(state, &proj, &inst.graph, &inst.ratings, r.user, r.item);
        for side in [&t.user, &t.item] {
            for &x in &side.rels {
                margin = margin.min(x.abs());
            }
            let surv: Vec<f64> = side.support.survivors.iter().map(|&k| side.rels[k]).collect();
            if !surv.is_empty() {
                let mean = surv.iter().sum::<f64>() / surv.len() as f64;
                for x in surv {
                    if x != mean {
                        margin = margin.min((x - mean).abs());
                    }
                }
            }
            if state.activation == Activation::Relu {
                for &z in &side.z {
                    margin = margin.min(z.abs());
                }
            }
        }
        let hidden = t.mlp.pre.len() - 1;
        for pre in &t.mlp.pre[..hidden] {
            for &z in pre {
                margin = margin.min(z.abs());
            }
        }
    }
    margin
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

pub struct GradCheck {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

/// Central differences of `batch_loss` against the analytic gradient.
/// Parameters whose ±step perturbation changes the mask signature are
/// skipped, as are those within 1e-7 of a boundary.
pub fn grad_check(inst: &Instance, step: f64) -> GradCheck {
    use garec::train::{batch_loss, gradients};

    let grads = gradients(&inst.batch, &inst.state, &inst.graph, &inst.ratings, inst.freeze_factors).unwrap();
    let base_sig = mask_signature(inst, &inst.state);
    let include_factors = !inst.freeze_factors;
    let names: Vec<(String, usize)> = inst
        .state
        .tensors(include_factors)
        .iter()
        .map(|(n, t)| (n.clone(), t.len()))
        .collect();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|(_, t)| t.to_vec()).collect();
    assert_eq!(names.len(), analytic.len());

    let mut out = GradCheck {
        checked: 0,
        skipped: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    for (k, (name, len)) in names.iter().enumerate() {
        for j in 0..*len {
            let mut plus = inst.state.clone();
            plus.tensors_mut(include_factors)[k][j] += step;
            let mut minus = inst.state.clone();
            minus.tensors_mut(include_factors)[k][j] -= step;
            if mask_signature(inst, &plus) != base_sig
                || mask_signature(inst, &minus) != base_sig
                || boundary_margin(inst, &plus) < 1e-7
                || boundary_margin(inst, &minus) < 1e-7
            {
                out.skipped += 1;
                continue;
            }
            let lp = batch_loss(&inst.batch, &plus, &inst.graph, &inst.ratings);
            let lm = batch_loss(&inst.batch, &minus, &inst.graph, &inst.ratings);
            let numeric = (lp - lm) / (2.0 * step);
            let err = relative_error(analytic[k][j], numeric);
            out.checked += 1;
            if err > out.max_rel_err {
                out.max_rel_err = err;
                out.worst = format!("{name}[{j}]: analytic {} numeric {numeric}", analytic[k][j]);
            }
        }
    }
    out
}
