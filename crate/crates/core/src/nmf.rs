//! Masked non-negative matrix factorization by multiplicative updates.
//!
//! Only observed entries take part in the objective: an unobserved rating is
//! missing, not zero. With `M` the observation mask the updates are
//!
//! ```text
//! F_U <- F_U * [(M*R) F_I] / [(M*(F_U F_I^T)) F_I + eps]
//! F_I <- F_I * [(M*R)^T F_U] / [(M*(F_U F_I^T))^T F_U + eps]
//! ```
//!
//! which keep every entry non-negative and never increase the masked
//! squared error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SparseRatings;
use crate::error::{GarecError, Result};
use crate::linalg::{dot, Matrix};

/// Non-negative user factors (`n x d`) and item factors (`m x d`).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub user: Matrix,
    pub item: Matrix,
}

impl FactorPair {
    pub fn new(user: Matrix, item: Matrix) -> Result<Self> {
        if user.cols() != item.cols() {
            return Err(GarecError::dim("factor dimension", user.cols(), item.cols()));
        }
        Ok(FactorPair { user, item })
    }

    pub fn d(&self) -> usize {
        self.user.cols()
    }

    pub fn n_users(&self) -> usize {
        self.user.rows()
    }

    pub fn n_items(&self) -> usize {
        self.item.rows()
    }

    #[inline]
    pub fn predict(&self, u: usize, i: usize) -> f64 {
        dot(self.user.row(u), self.item.row(i))
    }

    pub fn is_non_negative(&self) -> bool {
        self.user
            .as_slice()
            .iter()
            .chain(self.item.as_slice())
            .all(|&x| x >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    pub d: usize,
    pub max_iters: usize,
    /// Stop once the relative RMSE improvement of one iteration drops below this.
    pub rel_tol: f64,
    /// Denominator guard.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            d: 16,
            max_iters: 200,
            rel_tol: 1e-4,
            epsilon: 1e-9,
            seed: 0,
        }
    }
}

impl NmfConfig {
    /// Setting used for the stand-alone NMF rating predictor. A low rank keeps
    /// the unregularized factorization from overfitting held-out ratings.
    pub fn baseline(seed: u64) -> Self {
        NmfConfig {
            d: 4,
            seed,
            ..NmfConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(GarecError::InvalidConfig("nmf d must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(GarecError::InvalidConfig("nmf max_iters must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(GarecError::InvalidConfig("nmf epsilon must be > 0".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(GarecError::InvalidConfig("nmf rel_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// Outcome of a factorization run with its per-iteration error trace.
#[derive(Debug, Clone)]
pub struct NmfRun {
    pub factors: FactorPair,
    /// `rmse[0]` is the error of the initialization, `rmse[t]` after iteration `t`.
    pub rmse: Vec<f64>,
}

impl NmfRun {
    pub fn iterations(&self) -> usize {
        self.rmse.len() - 1
    }
}

pub fn factorize(ratings: &SparseRatings, cfg: &NmfConfig) -> Result<FactorPair> {
    factorize_traced(ratings, cfg).map(|run| run.factors)
}

pub fn factorize_traced(ratings: &SparseRatings, cfg: &NmfConfig) -> Result<NmfRun> {
    check_inputs(ratings, cfg)?;
    let init = random_init(ratings, cfg);
    factorize_from(ratings, init, cfg)
}

/// Seeded uniform draws from `(0, sqrt(mean / d)]`, users first then items.
pub fn random_init(ratings: &SparseRatings, cfg: &NmfConfig) -> FactorPair {
    let scale = (ratings.mean() / cfg.d as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |rows: usize| {
        let data = (0..rows * cfg.d)
            .map(|_| (1.0 - rng.gen::<f64>()) * scale)
            .collect();
        Matrix::from_vec(rows, cfg.d, data).expect("sized")
    };
    let user = draw(ratings.n_users());
    let item = draw(ratings.n_items());
    FactorPair { user, item }
}

/// Runs the multiplicative updates from a caller-supplied starting point.
pub fn factorize_from(
    ratings: &SparseRatings,
    init: FactorPair,
    cfg: &NmfConfig,
) -> Result<NmfRun> {
    check_inputs(ratings, cfg)?;
    if init.n_users() != ratings.n_users() {
        return Err(GarecError::dim("init user rows", ratings.n_users(), init.n_users()));
    }
    if init.n_items() != ratings.n_items() {
        return Err(GarecError::dim("init item rows", ratings.n_items(), init.n_items()));
    }
    if init.d() != cfg.d {
        return Err(GarecError::dim("init factor dimension", cfg.d, init.d()));
    }

    let FactorPair { mut user, mut item } = init;
    let mut trace = vec![rmse_of(ratings, &user, &item)];
    for _ in 0..cfg.max_iters {
        update_side(ratings.by_user(), &mut user, &item, cfg.epsilon);
        update_side(ratings.by_item(), &mut item, &user, cfg.epsilon);
        let cur = rmse_of(ratings, &user, &item);
        let prev = *trace.last().expect("non-empty");
        trace.push(cur);
        if prev == 0.0 || (prev - cur) / prev < cfg.rel_tol {
            break;
        }
    }
    Ok(NmfRun {
        factors: FactorPair { user, item },
        rmse: trace,
    })
}

fn check_inputs(ratings: &SparseRatings, cfg: &NmfConfig) -> Result<()> {
    cfg.validate()?;
    if ratings.nnz() == 0 {
        return Err(GarecError::Empty);
    }
    let limit = ratings.n_users().min(ratings.n_items()) / 2;
    if cfg.d > limit {
        return Err(GarecError::InvalidConfig(format!(
            "nmf d = {} exceeds min(n, m)/2 = {limit}",
            cfg.d
        )));
    }
    for (u, i, r) in ratings.triples() {
        if !(r > 0.0) {
            return Err(GarecError::NonPositiveRating { user: u, item: i, rating: r });
        }
    }
    Ok(())
}

/// One multiplicative half-step for the factors indexed by `rows` of `csr`.
fn update_side(csr: &crate::data::Csr, own: &mut Matrix, other: &Matrix, eps: f64) {
    let d = own.cols();
    let mut num = vec![0.0; d];
    let mut den = vec![0.0; d];
    for r in 0..own.rows() {
        num.iter_mut().for_each(|x| *x = 0.0);
        den.iter_mut().for_each(|x| *x = 0.0);
        let (cols, vals) = csr.row(r);
        let f = own.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            let g = other.row(c);
            let pred = dot(f, g);
            for k in 0..d {
                num[k] += v * g[k];
                den[k] += pred * g[k];
            }
        }
        for (k, x) in own.row_mut(r).iter_mut().enumerate() {
            *x *= num[k] / (den[k] + eps);
        }
    }
}

fn rmse_of(ratings: &SparseRatings, user: &Matrix, item: &Matrix) -> f64 {
    let mut sse = 0.0;
    for u in 0..ratings.n_users() {
        let (items, vals) = ratings.user_row(u);
        for (&i, &r) in items.iter().zip(vals) {
            let e = r - dot(user.row(u), item.row(i));
            sse += e * e;
        }
    }
    (sse / ratings.nnz() as f64).sqrt()
}

/// RMSE of the unclamped reconstruction `f_u . f_i` over observed entries.
pub fn masked_rmse(ratings: &SparseRatings, fp: &FactorPair) -> f64 {
    if ratings.nnz() == 0 {
        return 0.0;
    }
    rmse_of(ratings, &fp.user, &fp.item)
}
