//! End-to-end training against mean squared rating error.
//!
//! Gradients are hand-derived adjoints of the forward pass in [`crate::attn`].
//! The attention pruning and mean-threshold sets are held at their forward
//! values during the backward pass, so derivatives flow only through the
//! softmax over the kept neighbors.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attn::{forward_edge, Activation, AttentionParams, MlpParams, ModelShape, ModelState, Projections, SideTrace};
use crate::data::{build_matrix, shuffled_indices, RatingDataset, RatingRecord, SparseRatings};
use crate::error::{GarecError, Result};
use crate::eval::evaluate_with;
use crate::graph::CoRatingGraph;
use crate::linalg::{axpy, dot, mat_vec_add, outer_add, Matrix};
use crate::nmf::{factorize, FactorPair, NmfConfig};

/// Every training knob in one place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub freeze_factors: bool,
    /// Neighbor cap `T`.
    pub cap: usize,
    pub d: usize,
    pub d_out: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub activation: Activation,
    pub separate_keys: bool,
    pub validation_fraction: f64,
    /// Decoupled weight decay applied in the optimizer step.
    pub weight_decay: f64,
    /// 1 runs the deterministic single-threaded reference; more enables
    /// data-parallel gradient accumulation over a fixed partition.
    pub threads: usize,
    pub nmf_iters: usize,
    pub nmf_rel_tol: f64,
    pub nmf_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            freeze_factors: false,
            cap: 50,
            d: 16,
            d_out: 16,
            hidden1: 16,
            hidden2: 8,
            activation: Activation::Tanh,
            separate_keys: false,
            validation_fraction: 0.1,
            weight_decay: 0.5,
            threads: 1,
            nmf_iters: 200,
            nmf_rel_tol: 1e-4,
            nmf_epsilon: 1e-9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("cap", self.cap),
            ("d", self.d),
            ("d_out", self.d_out),
            ("hidden1", self.hidden1),
            ("hidden2", self.hidden2),
            ("threads", self.threads),
            ("nmf_iters", self.nmf_iters),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(GarecError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(GarecError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..=0.5).contains(&self.validation_fraction) {
            return Err(GarecError::InvalidConfig(format!(
                "validation_fraction {} outside [0, 0.5]",
                self.validation_fraction
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(GarecError::InvalidConfig("weight_decay must be >= 0".into()));
        }
        self.nmf().validate()
    }

    pub fn nmf(&self) -> NmfConfig {
        NmfConfig {
            d: self.d,
            max_iters: self.nmf_iters,
            rel_tol: self.nmf_rel_tol,
            epsilon: self.nmf_epsilon,
            seed: self.seed,
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            d_out: self.d_out,
            hidden: (self.hidden1, self.hidden2),
            activation: self.activation,
            separate_keys: self.separate_keys,
        }
    }
}

/// Partial derivatives shaped like [`ModelState`]. `factors` is `None` when
/// the factors are frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub factors: Option<FactorPair>,
    pub user_attn: AttentionParams,
    pub item_attn: AttentionParams,
    pub mlp: MlpParams,
}

fn zeros_like_attn(p: &AttentionParams) -> AttentionParams {
    let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
    AttentionParams {
        transform: z(&p.transform),
        key: p.key.as_ref().map(z),
        w_self: z(&p.w_self),
        w_nei: z(&p.w_nei),
    }
}

fn attn_tensors<'a>(p: &'a AttentionParams, side: &str) -> Vec<(String, &'a [f64])> {
    let mut out = vec![(format!("{side}.transform"), p.transform.as_slice())];
    if let Some(k) = &p.key {
        out.push((format!("{side}.key"), k.as_slice()));
    }
    out.push((format!("{side}.w_self"), p.w_self.as_slice()));
    out.push((format!("{side}.w_nei"), p.w_nei.as_slice()));
    out
}

fn attn_tensors_mut(p: &mut AttentionParams) -> Vec<&mut [f64]> {
    let mut out = vec![p.transform.as_mut_slice()];
    if let Some(k) = &mut p.key {
        out.push(k.as_mut_slice());
    }
    out.push(p.w_self.as_mut_slice());
    out.push(p.w_nei.as_mut_slice());
    out
}

fn mlp_tensors(m: &MlpParams) -> Vec<(String, &[f64])> {
    let mut out = Vec::new();
    for (k, l) in m.layers.iter().enumerate() {
        out.push((format!("mlp.{k}.weight"), l.weight.as_slice()));
        out.push((format!("mlp.{k}.bias"), l.bias.as_slice()));
    }
    out
}

fn mlp_tensors_mut(m: &mut MlpParams) -> Vec<&mut [f64]> {
    let mut out = Vec::new();
    for l in &mut m.layers {
        out.push(l.weight.as_mut_slice());
        out.push(l.bias.as_mut_slice());
    }
    out
}

impl ModelState {
    /// Named parameter tensors in a fixed order: factors (if included), user
    /// attention, item attention, MLP.
    pub fn tensors(&self, include_factors: bool) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        if include_factors {
            out.push(("factors.user".to_string(), self.factors.user.as_slice()));
            out.push(("factors.item".to_string(), self.factors.item.as_slice()));
        }
        out.extend(attn_tensors(&self.user_attn, "user_attn"));
        out.extend(attn_tensors(&self.item_attn, "item_attn"));
        out.extend(mlp_tensors(&self.mlp));
        out
    }

    pub fn tensors_mut(&mut self, include_factors: bool) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if include_factors {
            out.push(self.factors.user.as_mut_slice());
            out.push(self.factors.item.as_mut_slice());
        }
        out.extend(attn_tensors_mut(&mut self.user_attn));
        out.extend(attn_tensors_mut(&mut self.item_attn));
        out.extend(mlp_tensors_mut(&mut self.mlp));
        out
    }
}

impl GradientSet {
    pub fn zeros_like(state: &ModelState, with_factors: bool) -> Self {
        let zf = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        GradientSet {
            factors: with_factors.then(|| FactorPair {
                user: zf(&state.factors.user),
                item: zf(&state.factors.item),
            }),
            user_attn: zeros_like_attn(&state.user_attn),
            item_attn: zeros_like_attn(&state.item_attn),
            mlp: MlpParams {
                layers: state
                    .mlp
                    .layers
                    .iter()
                    .map(|l| crate::attn::MlpLayer {
                        weight: zf(&l.weight),
                        bias: vec![0.0; l.bias.len()],
                    })
                    .collect(),
            },
        }
    }

    /// Same order as [`ModelState::tensors`] with factors included iff present.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        if let Some(f) = &self.factors {
            out.push(("factors.user".to_string(), f.user.as_slice()));
            out.push(("factors.item".to_string(), f.item.as_slice()));
        }
        out.extend(attn_tensors(&self.user_attn, "user_attn"));
        out.extend(attn_tensors(&self.item_attn, "item_attn"));
        out.extend(mlp_tensors(&self.mlp));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(f) = &mut self.factors {
            out.push(f.user.as_mut_slice());
            out.push(f.item.as_mut_slice());
        }
        out.extend(attn_tensors_mut(&mut self.user_attn));
        out.extend(attn_tensors_mut(&mut self.item_attn));
        out.extend(mlp_tensors_mut(&mut self.mlp));
        out
    }

    fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(1.0, b.1, a);
        }
    }

    fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.tensors() {
            if let Some(index) = t.iter().position(|x| !x.is_finite()) {
                return Err(GarecError::NonFiniteGradient { tensor: name, index });
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Mean squared error of raw predictions over `batch`.
pub fn batch_loss(
    batch: &[RatingRecord],
    state: &ModelState,
    graph: &CoRatingGraph,
    ratings: &SparseRatings,
) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let proj = state.project();
    let sq: Vec<f64> = batch
        .iter()
        .map(|r| {
            let e = f64::from(r.rating) - forward_edge(state, &proj, graph, ratings, r.user, r.item).raw();
            e * e
        })
        .collect();
    sq.iter().sum::<f64>() / batch.len() as f64
}

/// Gradient sums of one contiguous chunk of a batch.
struct ChunkAccum {
    loss: f64,
    grads: GradientSet,
    /// Adjoints of the query / key projections `F W`, per node.
    user_dq: Matrix,
    user_dk: Option<Matrix>,
    item_dq: Matrix,
    item_dk: Option<Matrix>,
}

impl ChunkAccum {
    fn new(state: &ModelState) -> Self {
        let d_out = state.d_out();
        let (n, m) = (state.factors.n_users(), state.factors.n_items());
        ChunkAccum {
            loss: 0.0,
            // dense factor adjoints are always gathered; dropped when frozen
            grads: GradientSet::zeros_like(state, true),
            user_dq: Matrix::zeros(n, d_out),
            user_dk: state.user_attn.key.as_ref().map(|_| Matrix::zeros(n, d_out)),
            item_dq: Matrix::zeros(m, d_out),
            item_dk: state.item_attn.key.as_ref().map(|_| Matrix::zeros(m, d_out)),
        }
    }

    fn add(&mut self, other: &ChunkAccum) {
        self.loss += other.loss;
        self.grads.add_assign(&other.grads);
        axpy(1.0, other.user_dq.as_slice(), self.user_dq.as_mut_slice());
        axpy(1.0, other.item_dq.as_slice(), self.item_dq.as_mut_slice());
        if let (Some(a), Some(b)) = (&mut self.user_dk, &other.user_dk) {
            axpy(1.0, b.as_slice(), a.as_mut_slice());
        }
        if let (Some(a), Some(b)) = (&mut self.item_dk, &other.item_dk) {
            axpy(1.0, b.as_slice(), a.as_mut_slice());
        }
    }
}

/// Backward pass through one side. Accumulates into the side's attention
/// gradients, its factor gradients (self path) and the projection adjoints.
#[allow(clippy::too_many_arguments)]
fn side_backward(
    trace: &SideTrace,
    dh: &[f64],
    factors: &Matrix,
    proj_q: &Matrix,
    proj_k: &Matrix,
    params: &AttentionParams,
    activation: Activation,
    g_params: &mut AttentionParams,
    g_factors: &mut Matrix,
    dq_acc: &mut Matrix,
    dk_acc: &mut Matrix,
    separate_keys: bool,
) {
    let node = trace.node;
    let f = factors.row(node);
    let dz: Vec<f64> = dh
        .iter()
        .zip(trace.z.iter().zip(&trace.h))
        .map(|(&g, (&z, &h))| g * activation.derivative(z, h))
        .collect();

    if trace.fallback {
        outer_add(&mut g_params.w_self, f, &dz);
        mat_vec_add(&params.w_self, &dz, g_factors.row_mut(node));
        return;
    }

    let q = proj_q.row(node);
    let (a_self, a_nei) = trace.alpha;
    let d_alpha_self = dot(&dz, &trace.s);
    let d_alpha_nei = dot(&dz, &trace.f_nei);
    let avg = a_self * d_alpha_self + a_nei * d_alpha_nei;
    let d_rel_self = a_self * (d_alpha_self - avg);
    let d_rel_nei = a_nei * (d_alpha_nei - avg);

    let d_out = dz.len();
    let mut ds = vec![0.0; d_out];
    axpy(a_self, &dz, &mut ds);
    axpy(d_rel_self, q, &mut ds);

    let mut dq = vec![0.0; d_out];
    axpy(d_rel_self, &trace.s, &mut dq);
    axpy(d_rel_nei, &trace.g, &mut dq);

    let dg: Vec<f64> = q.iter().map(|&x| d_rel_nei * x).collect();
    outer_add(&mut g_params.w_nei, &trace.f_nei, &dg);
    let mut df_nei = vec![0.0; d_out];
    axpy(a_nei, &dz, &mut df_nei);
    mat_vec_add(&params.w_nei, &dg, &mut df_nei);

    outer_add(&mut g_params.w_self, f, &ds);
    mat_vec_add(&params.w_self, &ds, g_factors.row_mut(node));

    // softmax over the kept neighbors; pruned and masked ones get nothing
    let entries = trace.neighbors.entries();
    let dc: Vec<f64> = trace
        .coefs
        .iter()
        .map(|&(k, _)| dot(&df_nei, proj_k.row(entries[k].0)))
        .collect();
    let mean_dc: f64 = trace.coefs.iter().zip(&dc).map(|(&(_, c), &g)| c * g).sum();
    for (&(k, c), &g) in trace.coefs.iter().zip(&dc) {
        let (y, a) = entries[k];
        let d_rel = c * (g - mean_dc);
        let key_adj = if separate_keys { &mut *dk_acc } else { &mut *dq_acc };
        let dk_row = key_adj.row_mut(y);
        axpy(c, &df_nei, dk_row);
        axpy(d_rel * a, q, dk_row);
        axpy(d_rel * a, proj_k.row(y), &mut dq);
    }
    axpy(1.0, &dq, dq_acc.row_mut(node));
}

fn accumulate_chunk(
    chunk: &[RatingRecord],
    state: &ModelState,
    proj: &Projections,
    graph: &CoRatingGraph,
    ratings: &SparseRatings,
) -> ChunkAccum {
    let mut acc = ChunkAccum::new(state);
    let d_out = state.d_out();
    let last = state.mlp.layers.len() - 1;
    for rec in chunk {
        let trace = forward_edge(state, proj, graph, ratings, rec.user, rec.item);
        let err = trace.raw() - f64::from(rec.rating);
        acc.loss += err * err;

        // MLP
        let mut delta = vec![2.0 * err];
        let mut d_input = Vec::new();
        for k in (0..=last).rev() {
            let layer = &state.mlp.layers[k];
            let g = &mut acc.grads.mlp.layers[k];
            outer_add(&mut g.weight, &trace.mlp.acts[k], &delta);
            axpy(1.0, &delta, &mut g.bias);
            let mut d_in = vec![0.0; layer.weight.rows()];
            mat_vec_add(&layer.weight, &delta, &mut d_in);
            if k > 0 {
                for (x, &z) in d_in.iter_mut().zip(&trace.mlp.pre[k - 1]) {
                    if z <= 0.0 {
                        *x = 0.0;
                    }
                }
                delta = d_in;
            } else {
                d_input = d_in;
            }
        }
        let (dh_user, dh_item) = d_input.split_at(d_out);

        let factor_grads = acc.grads.factors.as_mut().expect("dense factor adjoints");
        side_backward(
            &trace.user,
            dh_user,
            &state.factors.user,
            &proj.user.query,
            proj.user.keys(),
            &state.user_attn,
            state.activation,
            &mut acc.grads.user_attn,
            &mut factor_grads.user,
            &mut acc.user_dq,
            acc.user_dk.as_mut().unwrap_or(&mut Matrix::zeros(0, 0)),
            state.user_attn.key.is_some(),
        );
        side_backward(
            &trace.item,
            dh_item,
            &state.factors.item,
            &proj.item.query,
            proj.item.keys(),
            &state.item_attn,
            state.activation,
            &mut acc.grads.item_attn,
            &mut factor_grads.item,
            &mut acc.item_dq,
            acc.item_dk.as_mut().unwrap_or(&mut Matrix::zeros(0, 0)),
            state.item_attn.key.is_some(),
        );
    }
    acc
}

/// Pushes projection adjoints `dP` (for `P = F W`) into `dW` and `dF`.
fn project_back(factors: &Matrix, w: &Matrix, d_proj: &Matrix, g_w: &mut Matrix, g_f: &mut Matrix) {
    for r in 0..d_proj.rows() {
        let row = d_proj.row(r);
        if row.iter().all(|&x| x == 0.0) {
            continue;
        }
        outer_add(g_w, factors.row(r), row);
        mat_vec_add(w, row, g_f.row_mut(r));
    }
}

/// Edges per chunk of the fixed batch partition. Both execution modes reduce
/// chunk sums in this order, so they agree bit for bit.
pub const GRADIENT_CHUNK: usize = 32;

/// Mean batch loss and its exact gradient.
pub fn loss_and_gradients(
    batch: &[RatingRecord],
    state: &ModelState,
    graph: &CoRatingGraph,
    ratings: &SparseRatings,
    freeze_factors: bool,
    parallel: bool,
) -> Result<(f64, GradientSet)> {
    if batch.is_empty() {
        return Err(GarecError::Empty);
    }
    let proj = state.project();
    let chunks: Vec<&[RatingRecord]> = batch.chunks(GRADIENT_CHUNK).collect();
    let partials: Vec<ChunkAccum> = if parallel {
        chunks
            .par_iter()
            .map(|c| accumulate_chunk(c, state, &proj, graph, ratings))
            .collect()
    } else {
        chunks
            .iter()
            .map(|c| accumulate_chunk(c, state, &proj, graph, ratings))
            .collect()
    };
    let mut iter = partials.into_iter();
    let mut total = iter.next().expect("non-empty batch");
    for p in iter {
        total.add(&p);
    }

    let ChunkAccum {
        loss,
        mut grads,
        user_dq,
        user_dk,
        item_dq,
        item_dk,
    } = total;
    {
        let fg = grads.factors.as_mut().expect("dense factor adjoints");
        project_back(&state.factors.user, &state.user_attn.transform, &user_dq, &mut grads.user_attn.transform, &mut fg.user);
        project_back(&state.factors.item, &state.item_attn.transform, &item_dq, &mut grads.item_attn.transform, &mut fg.item);
        if let (Some(dk), Some(wk), Some(gk)) = (&user_dk, &state.user_attn.key, &mut grads.user_attn.key) {
            project_back(&state.factors.user, wk, dk, gk, &mut fg.user);
        }
        if let (Some(dk), Some(wk), Some(gk)) = (&item_dk, &state.item_attn.key, &mut grads.item_attn.key) {
            project_back(&state.factors.item, wk, dk, gk, &mut fg.item);
        }
    }
    if freeze_factors {
        grads.factors = None;
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    grads.check_finite()?;
    Ok((loss / n, grads))
}

pub fn gradients(
    batch: &[RatingRecord],
    state: &ModelState,
    graph: &CoRatingGraph,
    ratings: &SparseRatings,
    freeze_factors: bool,
) -> Result<GradientSet> {
    loss_and_gradients(batch, state, graph, ratings, freeze_factors, false).map(|(_, g)| g)
}

/// Adaptive-moment optimizer state, one moment pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Adam {
    pub fn new() -> Self {
        Adam::default()
    }
}

/// One Adam update of every tensor that has a gradient. Frozen factors
/// (`grads.factors == None`) are left untouched.
pub fn step(state: &mut ModelState, grads: &GradientSet, opt: &mut Adam, lr: f64, weight_decay: f64) -> Result<()> {
    let include_factors = grads.factors.is_some();
    let params = state.tensors_mut(include_factors);
    let gs = grads.tensors();
    if params.len() != gs.len() {
        return Err(GarecError::dim("gradient tensors", params.len(), gs.len()));
    }
    if opt.m.is_empty() {
        opt.m = gs.iter().map(|(_, g)| vec![0.0; g.len()]).collect();
        opt.v = opt.m.clone();
    }
    if opt.m.len() != gs.len() {
        return Err(GarecError::dim("optimizer moments", opt.m.len(), gs.len()));
    }
    opt.t += 1;
    let t = opt.t as i32;
    let bc1 = 1.0 - opt.beta1.powi(t);
    let bc2 = 1.0 - opt.beta2.powi(t);
    for (k, (p, (name, g))) in params.into_iter().zip(gs).enumerate() {
        if p.len() != g.len() {
            return Err(GarecError::dim(format!("gradient {name}"), p.len(), g.len()));
        }
        let (m, v) = (&mut opt.m[k], &mut opt.v[k]);
        for j in 0..p.len() {
            m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
            v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * (m_hat / (v_hat.sqrt() + opt.eps) + weight_decay * p[j]);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_rmse: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub test_rmse: Option<f64>,
}

impl TrainReport {
    /// One JSON object per epoch: `epoch`, `train_mse`, `val_rmse`, `seconds`.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain record") + "\n")
            .collect()
    }

    /// The report with wall times zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> TrainReport {
        let mut r = self.clone();
        r.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
        r
    }
}

/// A trained model together with the graph it was trained against.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub state: ModelState,
    pub report: TrainReport,
}

/// Trains on `train`, carving a seeded validation slice off first. Graphs and
/// (unless supplied) NMF factors come from the remaining portion only.
pub fn fit(train: &RatingDataset, cfg: &TrainConfig) -> Result<(ModelState, TrainReport)> {
    fit_with_factors(train, cfg, None).map(|o| (o.state, o.report))
}

pub fn fit_with_factors(
    train: &RatingDataset,
    cfg: &TrainConfig,
    factors: Option<FactorPair>,
) -> Result<FitOutput> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(GarecError::Empty);
    }
    let (fit_part, val_part) = carve_validation(train, cfg.validation_fraction, cfg.seed);
    if fit_part.is_empty() {
        return Err(GarecError::Empty);
    }
    let ratings = build_matrix(&fit_part)?;
    let graph = CoRatingGraph::build(&ratings, cfg.cap);
    let factors = match factors {
        Some(f) => {
            if f.n_users() != train.n_users || f.n_items() != train.n_items {
                return Err(GarecError::dim("factor rows (users)", train.n_users, f.n_users()));
            }
            if f.d() != cfg.d {
                return Err(GarecError::dim("factor dimension d", cfg.d, f.d()));
            }
            f
        }
        None => factorize(&ratings, &cfg.nmf())?,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9));
    let mut state = ModelState::init(factors, &cfg.shape(), fit_part.mean_rating(), &mut rng);
    let mut opt = Adam::new();
    let parallel = cfg.threads > 1;
    let pool = if parallel {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| GarecError::InvalidConfig(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut records = fit_part.records.clone();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, ModelState)> = None;
    let mut since_best = 0;
    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        records.shuffle(&mut rng);
        let mut sse = 0.0;
        for batch in records.chunks(cfg.batch_size) {
            let run = || loss_and_gradients(batch, &state, &graph, &ratings, cfg.freeze_factors, parallel);
            let (loss, grads) = match &pool {
                Some(p) => p.install(run)?,
                None => run()?,
            };
            sse += loss * batch.len() as f64;
            step(&mut state, &grads, &mut opt, cfg.learning_rate, cfg.weight_decay)?;
        }
        let train_mse = sse / records.len() as f64;
        if !train_mse.is_finite() {
            return Err(GarecError::NonFiniteGradient {
                tensor: "train loss".into(),
                index: epoch,
            });
        }
        let val_rmse = if val_part.is_empty() {
            None
        } else {
            let eval = || evaluate_with(&state, &val_part, &graph, &ratings, parallel);
            Some(match &pool {
                Some(p) => p.install(eval)?.rmse,
                None => eval()?.rmse,
            })
        };
        epochs.push(EpochRecord {
            epoch,
            train_mse,
            val_rmse,
            seconds: started.elapsed().as_secs_f64(),
        });

        let score = val_rmse.unwrap_or(train_mse);
        match &best {
            Some((b, _, _)) if score >= *b => since_best += 1,
            _ => {
                best = Some((score, epoch, state.clone()));
                since_best = 0;
            }
        }
        if since_best >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, best_state) = best.expect("at least one epoch");
    Ok(FitOutput {
        state: best_state,
        report: TrainReport {
            epochs,
            best_epoch,
            test_rmse: None,
        },
    })
}

/// Seeded split of `train` into (fit, validation).
pub fn carve_validation(train: &RatingDataset, fraction: f64, seed: u64) -> (RatingDataset, RatingDataset) {
    let n_val = (train.len() as f64 * fraction).round() as usize;
    let perm = shuffled_indices(train.len(), seed ^ 0x005e_ed0f_7a11);
    let mut is_val = vec![false; train.len()];
    for &p in &perm[..n_val] {
        is_val[p] = true;
    }
    let mut fit = Vec::with_capacity(train.len() - n_val);
    let mut val = Vec::with_capacity(n_val);
    for (r, &v) in train.records.iter().zip(&is_val) {
        if v {
            val.push(*r);
        } else {
            fit.push(*r);
        }
    }
    (train.with_records(fit), train.with_records(val))
}
