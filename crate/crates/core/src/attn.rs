//! The forward model: per-edge user and item embeddings from neighborhood
//! attention, then an MLP rating head.
//!
//! For the user side of edge `(u, i)` (the item side mirrors it):
//!
//! 1. `q = f_u W` is the query, `k_y = f_y W` the key of each merged neighbor `y`;
//! 2. `rel_y = a_uy (q . k_y)`;
//! 3. neighbors with `rel_y <= 0` are pruned, survivors strictly below the
//!    survivors' mean are masked, and a softmax over the rest gives `coef_y`;
//! 4. `f_nei = sum_y coef_y k_y`;
//! 5. `s = f_u w_self`, `rel_self = q . s`, `rel_nei = q . (f_nei w_nei)`, and
//!    `(a_self, a_nei) = softmax(rel_self, rel_nei)`;
//! 6. `f'_u = act(a_self s + a_nei f_nei)`.
//!
//! A node with no training ratings, or whose merged neighborhood is empty,
//! falls back to `act(s)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SparseRatings;
use crate::error::{GarecError, Result};
use crate::graph::{item_neighborhood, user_neighborhood, CoRatingGraph, NeighborList};
use crate::linalg::{dot, vec_mat, vec_mat_into, Matrix};
use crate::nmf::FactorPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative at pre-activation `x` given the output `y = apply(x)`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Relu),
            _ => None,
        }
    }
}

impl FromStr for Activation {
    type Err = GarecError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "relu" | "rectifier" => Ok(Activation::Relu),
            other => Err(GarecError::InvalidConfig(format!("unknown activation {other:?}"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

/// One side's attention transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `d x d'`, produces queries (and keys unless `key` is set).
    pub transform: Matrix,
    /// Optional separate `d x d'` key transform.
    pub key: Option<Matrix>,
    /// `d x d'`, projects the node's own vector.
    pub w_self: Matrix,
    /// `d' x d'`, applied to the aggregated neighbor vector when scoring it.
    pub w_nei: Matrix,
}

impl AttentionParams {
    pub fn d(&self) -> usize {
        self.transform.rows()
    }

    pub fn d_out(&self) -> usize {
        self.transform.cols()
    }

    pub fn key_transform(&self) -> &Matrix {
        self.key.as_ref().unwrap_or(&self.transform)
    }

    pub fn check(&self, d: usize, d_out: usize) -> Result<()> {
        let expect = |name: &str, m: &Matrix, r: usize, c: usize| -> Result<()> {
            if m.rows() != r {
                return Err(GarecError::dim(format!("{name} rows"), r, m.rows()));
            }
            if m.cols() != c {
                return Err(GarecError::dim(format!("{name} cols"), c, m.cols()));
            }
            Ok(())
        };
        expect("attention transform", &self.transform, d, d_out)?;
        if let Some(k) = &self.key {
            expect("attention key transform", k, d, d_out)?;
        }
        expect("w_self", &self.w_self, d, d_out)?;
        expect("w_nei", &self.w_nei, d_out, d_out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    /// `in x out`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Rectifier hidden layers and a linear scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<MlpLayer>,
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.rows())
    }

    pub fn check(&self, input: usize) -> Result<()> {
        let mut width = input;
        for (k, l) in self.layers.iter().enumerate() {
            if l.weight.rows() != width {
                return Err(GarecError::dim(format!("mlp layer {k} input"), width, l.weight.rows()));
            }
            if l.bias.len() != l.weight.cols() {
                return Err(GarecError::dim(format!("mlp layer {k} bias"), l.weight.cols(), l.bias.len()));
            }
            width = l.weight.cols();
        }
        if width != 1 {
            return Err(GarecError::dim("mlp output", 1, width));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> MlpTrace {
        let mut acts = vec![input.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = vec_mat(acts.last().expect("input"), &layer.weight);
            for (zj, b) in z.iter_mut().zip(&layer.bias) {
                *zj += b;
            }
            let a = if k == last {
                z.clone()
            } else {
                z.iter().map(|&x| x.max(0.0)).collect()
            };
            pre.push(z);
            acts.push(a);
        }
        MlpTrace { pre, acts }
    }
}

/// Pre-activations per layer and activations (`acts[0]` is the input).
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub pre: Vec<Vec<f64>>,
    pub acts: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> f64 {
        self.acts.last().expect("output")[0]
    }
}

/// Model hyperparameters that fix the parameter shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub d_out: usize,
    pub hidden: (usize, usize),
    pub activation: Activation,
    pub separate_keys: bool,
}

/// Every parameter of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub factors: FactorPair,
    pub user_attn: AttentionParams,
    pub item_attn: AttentionParams,
    pub mlp: MlpParams,
    pub activation: Activation,
    pub rating_bounds: (f64, f64),
}

fn uniform_matrix(rows: usize, cols: usize, limit: f64, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

/// Identity-like block plus a small uniform perturbation.
fn near_identity(rows: usize, cols: usize, noise: f64, rng: &mut impl Rng) -> Matrix {
    let mut m = uniform_matrix(rows, cols, noise, rng);
    for k in 0..rows.min(cols) {
        m.set(k, k, m.get(k, k) + 1.0);
    }
    m
}

impl ModelState {
    /// Fresh parameters around the given factors. Attention transforms start
    /// near the identity so the initial embeddings stay close to the factors;
    /// the MLP output bias starts at `mean_rating`.
    pub fn init(factors: FactorPair, shape: &ModelShape, mean_rating: f64, rng: &mut impl Rng) -> Self {
        let d = factors.d();
        let d_out = shape.d_out;
        let side = |rng: &mut _| AttentionParams {
            transform: near_identity(d, d_out, 0.1, rng),
            key: shape
                .separate_keys
                .then(|| near_identity(d, d_out, 0.1, rng)),
            w_self: near_identity(d, d_out, 0.1, rng),
            w_nei: near_identity(d_out, d_out, 0.1, rng),
        };
        let user_attn = side(rng);
        let item_attn = side(rng);

        let widths = [2 * d_out, shape.hidden.0, shape.hidden.1, 1];
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                // He-uniform for the rectifier layers, smaller for the output
                let limit = if k + 2 == widths.len() {
                    (3.0 / w[0] as f64).sqrt() * 0.1
                } else {
                    (6.0 / w[0] as f64).sqrt()
                };
                let mut bias = vec![0.0; w[1]];
                if k + 2 == widths.len() {
                    bias[0] = mean_rating;
                }
                MlpLayer {
                    weight: uniform_matrix(w[0], w[1], limit, rng),
                    bias,
                }
            })
            .collect();
        ModelState {
            factors,
            user_attn,
            item_attn,
            mlp: MlpParams { layers },
            activation: shape.activation,
            rating_bounds: (1.0, 5.0),
        }
    }

    pub fn d(&self) -> usize {
        self.factors.d()
    }

    pub fn d_out(&self) -> usize {
        self.user_attn.d_out()
    }

    pub fn shape(&self) -> ModelShape {
        let hidden = (
            self.mlp.layers.first().map_or(0, |l| l.weight.cols()),
            self.mlp.layers.get(1).map_or(0, |l| l.weight.cols()),
        );
        ModelShape {
            d_out: self.d_out(),
            hidden,
            activation: self.activation,
            separate_keys: self.user_attn.key.is_some(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d, d_out) = (self.d(), self.d_out());
        self.user_attn.check(d, d_out)?;
        self.item_attn.check(d, d_out)?;
        self.mlp.check(2 * d_out)
    }

    /// Query and key projections of every user and item.
    pub fn project(&self) -> Projections {
        let project = |f: &Matrix, p: &AttentionParams| SideProjection {
            query: f.matmul(&p.transform),
            key: p.key.as_ref().map(|k| f.matmul(k)),
        };
        Projections {
            user: project(&self.factors.user, &self.user_attn),
            item: project(&self.factors.item, &self.item_attn),
        }
    }

    pub fn clamp(&self, raw: f64) -> f64 {
        raw.clamp(self.rating_bounds.0, self.rating_bounds.1)
    }
}

/// Precomputed `F W` products for one node type.
#[derive(Debug, Clone)]
pub struct SideProjection {
    pub query: Matrix,
    pub key: Option<Matrix>,
}

impl SideProjection {
    #[inline]
    pub fn keys(&self) -> &Matrix {
        self.key.as_ref().unwrap_or(&self.query)
    }
}

#[derive(Debug, Clone)]
pub struct Projections {
    pub user: SideProjection,
    pub item: SideProjection,
}

pub fn transform(f: &[f64], w: &Matrix) -> Result<Vec<f64>> {
    if f.len() != w.rows() {
        return Err(GarecError::dim("transform input", w.rows(), f.len()));
    }
    Ok(vec_mat(f, w))
}

#[inline]
pub fn relevance(q: &[f64], k: &[f64], a: f64) -> f64 {
    a * dot(q, k)
}

/// Which relevance scores take part in the softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSupport {
    /// Positions with `rel > 0`.
    pub survivors: Vec<usize>,
    /// Survivors at or above the survivors' mean.
    pub kept: Vec<usize>,
}

/// Relative slack, against the largest survivor, below which a score counts
/// as equal to the survivors' mean.
pub const MEAN_TIE_TOLERANCE: f64 = 1e-12;

pub fn attention_support(rels: &[f64]) -> AttentionSupport {
    let survivors: Vec<usize> = (0..rels.len()).filter(|&k| rels[k] > 0.0).collect();
    if survivors.is_empty() {
        return AttentionSupport {
            survivors,
            kept: Vec::new(),
        };
    }
    let mean = survivors.iter().map(|&k| rels[k]).sum::<f64>() / survivors.len() as f64;
    // Entries equal to the mean must stay kept even when the summed mean
    // rounds a few ulps above them.
    let top = survivors.iter().map(|&k| rels[k]).fold(0.0, f64::max);
    let threshold = mean - MEAN_TIE_TOLERANCE * top;
    let kept = survivors.iter().copied().filter(|&k| rels[k] >= threshold).collect();
    AttentionSupport { survivors, kept }
}

/// ReLU pruning, below-mean masking and softmax. Returns `(position, coef)`
/// for the kept entries; the coefficients sum to one when non-empty.
pub fn attention_coefs(rels: &[f64]) -> Vec<(usize, f64)> {
    let support = attention_support(rels);
    softmax_over(rels, &support.kept)
}

fn softmax_over(rels: &[f64], idx: &[usize]) -> Vec<(usize, f64)> {
    if idx.is_empty() {
        return Vec::new();
    }
    let max = idx.iter().map(|&k| rels[k]).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = idx.iter().map(|&k| (rels[k] - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    idx.iter().zip(exps).map(|(&k, e)| (k, e / total)).collect()
}

/// `sum coef * keys[index]`; the zero vector of length `dim` when empty.
pub fn aggregate(coefs: &[(usize, f64)], keys: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for &(k, c) in coefs {
        for (o, &x) in out.iter_mut().zip(keys[k]) {
            *o += c * x;
        }
    }
    out
}

/// Weighs the node's own projection against the aggregated neighborhood.
pub fn update(f: &[f64], f_nei: &[f64], q: &[f64], p: &AttentionParams, activation: Activation) -> Vec<f64> {
    let s = vec_mat(f, &p.w_self);
    let g = vec_mat(f_nei, &p.w_nei);
    let (a_self, a_nei) = softmax2(dot(q, &s), dot(q, &g));
    s.iter()
        .zip(f_nei)
        .map(|(&si, &ni)| activation.apply(a_self * si + a_nei * ni))
        .collect()
}

#[inline]
pub fn softmax2(a: f64, b: f64) -> (f64, f64) {
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    (ea / (ea + eb), eb / (ea + eb))
}

/// Everything the backward pass needs from one side's forward computation.
#[derive(Debug, Clone)]
pub struct SideTrace {
    pub node: usize,
    pub neighbors: NeighborList,
    pub rels: Vec<f64>,
    pub support: AttentionSupport,
    pub coefs: Vec<(usize, f64)>,
    pub f_nei: Vec<f64>,
    /// `f w_self`
    pub s: Vec<f64>,
    /// `f_nei w_nei`
    pub g: Vec<f64>,
    pub alpha: (f64, f64),
    /// Pre-activation.
    pub z: Vec<f64>,
    pub h: Vec<f64>,
    pub fallback: bool,
}

/// One side of an edge. `factors`/`proj` are those of the node type being
/// embedded, and `neighbors` holds ids of that same type.
pub fn side_forward(
    node: usize,
    neighbors: NeighborList,
    factors: &Matrix,
    proj: &SideProjection,
    params: &AttentionParams,
    activation: Activation,
) -> SideTrace {
    let f = factors.row(node);
    let d_out = params.d_out();
    let mut s = vec![0.0; d_out];
    vec_mat_into(f, &params.w_self, &mut s);

    if neighbors.is_empty() {
        let h = s.iter().map(|&x| activation.apply(x)).collect();
        return SideTrace {
            node,
            neighbors,
            rels: Vec::new(),
            support: AttentionSupport {
                survivors: Vec::new(),
                kept: Vec::new(),
            },
            coefs: Vec::new(),
            f_nei: vec![0.0; d_out],
            g: vec![0.0; d_out],
            alpha: (1.0, 0.0),
            z: s.clone(),
            s,
            h,
            fallback: true,
        };
    }

    let q = proj.query.row(node);
    let keys = proj.keys();
    let rels: Vec<f64> = neighbors
        .entries()
        .iter()
        .map(|&(y, a)| relevance(q, keys.row(y), a))
        .collect();
    let support = attention_support(&rels);
    let coefs = softmax_over(&rels, &support.kept);
    let mut f_nei = vec![0.0; d_out];
    for &(k, c) in &coefs {
        let y = neighbors.entries()[k].0;
        for (o, &x) in f_nei.iter_mut().zip(keys.row(y)) {
            *o += c * x;
        }
    }
    let g = vec_mat(&f_nei, &params.w_nei);
    let alpha = softmax2(dot(q, &s), dot(q, &g));
    let z: Vec<f64> = s
        .iter()
        .zip(&f_nei)
        .map(|(&si, &ni)| alpha.0 * si + alpha.1 * ni)
        .collect();
    let h = z.iter().map(|&x| activation.apply(x)).collect();
    SideTrace {
        node,
        neighbors,
        rels,
        support,
        coefs,
        f_nei,
        s,
        g,
        alpha,
        z,
        h,
        fallback: false,
    }
}

#[derive(Debug, Clone)]
pub struct EdgeTrace {
    pub user: SideTrace,
    pub item: SideTrace,
    pub mlp: MlpTrace,
}

impl EdgeTrace {
    pub fn raw(&self) -> f64 {
        self.mlp.output()
    }

    pub fn used_fallback(&self) -> bool {
        self.user.fallback || self.item.fallback
    }
}

pub fn forward_user_side(
    state: &ModelState,
    proj: &Projections,
    graph: &CoRatingGraph,
    ratings: &SparseRatings,
    u: usize,
    i: usize,
) -> SideTrace {
    // a user without training ratings is cold and keeps only its own vector
    let nb = if ratings.user_row(u).0.is_empty() {
        NeighborList::empty()
    } else {
        user_neighborhood(ratings, graph, u, i)
    };
    side_forward(u, nb, &state.factors.user, &proj.user, &state.user_attn, state.activation)
}

pub fn forward_item_side(
    state: &ModelState,
    proj: &Projections,
    graph: &CoRatingGraph,
    ratings: &SparseRatings,
    u: usize,
    i: usize,
) -> SideTrace {
    let nb = if ratings.item_row(i).0.is_empty() {
        NeighborList::empty()
    } else {
        item_neighborhood(ratings, graph, u, i)
    };
    side_forward(i, nb, &state.factors.item, &proj.item, &state.item_attn, state.activation)
}

/// Full forward pass for edge `(u, i)` using precomputed projections.
pub fn forward_edge(
    state: &ModelState,
    proj: &Projections,
    graph: &CoRatingGraph,
    ratings: &SparseRatings,
    u: usize,
    i: usize,
) -> EdgeTrace {
    let user = forward_user_side(state, proj, graph, ratings, u, i);
    let item = forward_item_side(state, proj, graph, ratings, u, i);
    let mut input = user.h.clone();
    input.extend_from_slice(&item.h);
    let mlp = state.mlp.forward(&input);
    EdgeTrace { user, item, mlp }
}

pub fn embed_user_for_edge(
    u: usize,
    i: usize,
    state: &ModelState,
    graph: &CoRatingGraph,
    ratings: &SparseRatings,
) -> Vec<f64> {
    forward_user_side(state, &state.project(), graph, ratings, u, i).h
}

pub fn embed_item_for_edge(
    u: usize,
    i: usize,
    state: &ModelState,
    graph: &CoRatingGraph,
    ratings: &SparseRatings,
) -> Vec<f64> {
    forward_item_side(state, &state.project(), graph, ratings, u, i).h
}

/// Unclamped MLP output, the quantity the training loss sees.
pub fn predict_edge_raw(
    u: usize,
    i: usize,
    state: &ModelState,
    graph: &CoRatingGraph,
    ratings: &SparseRatings,
) -> f64 {
    forward_edge(state, &state.project(), graph, ratings, u, i).raw()
}

/// Evaluation-time prediction, clamped to the rating bounds.
pub fn predict_edge(
    u: usize,
    i: usize,
    state: &ModelState,
    graph: &CoRatingGraph,
    ratings: &SparseRatings,
) -> f64 {
    state.clamp(predict_edge_raw(u, i, state, graph, ratings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn transform_cases() {
        let id = Matrix::identity(2);
        assert_eq!(transform(&[3.0, -1.0], &id).unwrap(), vec![3.0, -1.0]);
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(transform(&[1.0, 2.0], &w).unwrap(), vec![1.0, 6.0]);
        assert_eq!(transform(&[0.0, 0.0], &w).unwrap(), vec![0.0, 0.0]);
        assert!(transform(&[1.0], &w).is_err());
    }

    #[test]
    fn relevance_cases() {
        assert_eq!(relevance(&[1.0, 1.0], &[1.0, 1.0], 2.0), 4.0);
        assert_eq!(relevance(&[1.0, 0.0], &[0.0, 5.0], 7.0), 0.0);
        assert_eq!(relevance(&[3.0, 4.0], &[3.0, 4.0], 1.0), 25.0);
    }

    #[test]
    fn coefs_equal_scores() {
        let c = attention_coefs(&[0.7, 0.7, 0.7]);
        assert_eq!(c.len(), 3);
        for (_, x) in c {
            assert!(close(x, 1.0 / 3.0));
        }
    }

    #[test]
    fn coefs_prune_and_mask() {
        assert_eq!(attention_coefs(&[2.0, 1.0, -3.0]), vec![(0, 1.0)]);
        assert!(attention_coefs(&[-1.0, -2.0]).is_empty());
        assert!(attention_coefs(&[]).is_empty());
        assert!(attention_coefs(&[0.0]).is_empty());
    }

    #[test]
    fn aggregate_cases() {
        let k0 = [1.0, 2.0];
        let k1 = [3.0, 0.0];
        let keys: [&[f64]; 2] = [&k0, &k1];
        assert_eq!(aggregate(&[(0, 0.5), (1, 0.5)], &keys, 2), vec![2.0, 1.0]);
        assert_eq!(aggregate(&[(1, 1.0)], &keys, 2), vec![3.0, 0.0]);
        assert_eq!(aggregate(&[], &keys, 2), vec![0.0, 0.0]);
    }

    fn params(d: usize) -> AttentionParams {
        AttentionParams {
            transform: Matrix::identity(d),
            key: None,
            w_self: Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            w_nei: Matrix::identity(d),
        }
    }

    #[test]
    fn update_with_zero_relevances_averages() {
        // q orthogonal to both s and g makes rel_self = rel_nei = 0
        let p = params(2);
        let f = [1.0, 0.0];
        let q = [0.0, 1.0];
        let out = update(&f, &[0.0, 0.0], &q, &p, Activation::Tanh);
        assert!(close(out[0], (0.5f64 * 2.0).tanh()));
        assert!(close(out[1], 0.0));
    }

    #[test]
    fn update_identity_is_convex_combination() {
        let p = params(2);
        let f = [1.0, 1.0];
        let q = [1.0, 0.5];
        let f_nei = [0.2, -0.4];
        let s = [2.0, 1.0];
        let (a, b) = softmax2(dot(&q, &s), dot(&q, &f_nei));
        let out = update(&f, &f_nei, &q, &p, Activation::Identity);
        for k in 0..2 {
            assert!(close(out[k], a * s[k] + b * f_nei[k]));
        }
        let (x, y) = softmax2(0.3, 0.3);
        assert!(close(x, 0.5) && close(y, 0.5));
    }

    #[test]
    fn zero_network_predicts_lower_bound() {
        let r = SparseRatings::from_triples(2, 2, &[(0, 0, 4.0), (1, 1, 2.0)]).unwrap();
        let fp = FactorPair::new(Matrix::identity(2), Matrix::identity(2)).unwrap();
        let shape = ModelShape {
            d_out: 2,
            hidden: (2, 1),
            activation: Activation::Tanh,
            separate_keys: false,
        };
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        let mut state = ModelState::init(fp, &shape, 3.0, &mut rng);
        for l in &mut state.mlp.layers {
            l.weight.fill(0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let g = CoRatingGraph::build(&r, 50);
        assert_eq!(predict_edge_raw(0, 1, &state, &g, &r), 0.0);
        assert_eq!(predict_edge(0, 1, &state, &g, &r), 1.0);
    }

    #[test]
    fn empty_neighborhood_falls_back() {
        let r = SparseRatings::from_triples(2, 2, &[(0, 0, 4.0)]).unwrap();
        let fp = FactorPair::new(
            Matrix::from_rows(&[vec![0.5, 0.1], vec![0.2, 0.3]]).unwrap(),
            Matrix::identity(2),
        )
        .unwrap();
        let p = params(2);
        let state = ModelState {
            factors: fp,
            user_attn: p.clone(),
            item_attn: p,
            mlp: MlpParams {
                layers: vec![MlpLayer {
                    weight: Matrix::zeros(4, 1),
                    bias: vec![3.0],
                }],
            },
            activation: Activation::Tanh,
            rating_bounds: (1.0, 5.0),
        };
        let g = CoRatingGraph::build(&r, 50);
        // user 1 has no co-raters and item 1 has no raters
        let h = embed_user_for_edge(1, 1, &state, &g, &r);
        assert!(close(h[0], (0.4f64).tanh()) && close(h[1], (0.3f64).tanh()));
    }
}
