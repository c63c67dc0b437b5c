//! Straight-line reference for the forward model: dense rating table, no CSR,
//! no capping, plain nested loops. Shares nothing with the library beyond
//! reading parameter values.

use garec::attn::{Activation, AttentionParams, ModelState};

pub type Dense = Vec<Vec<Option<f64>>>;

pub fn dense(n: usize, m: usize, triples: &[(usize, usize, f64)]) -> Dense {
    let mut r = vec![vec![None; m]; n];
    for &(u, i, v) in triples {
        r[u][i] = Some(v);
    }
    r
}

pub fn transpose(r: &Dense) -> Dense {
    let (n, m) = (r.len(), r[0].len());
    (0..m).map(|i| (0..n).map(|u| r[u][i]).collect()).collect()
}

/// `w[u][y] = sum_i r_ui r_yi` for `u != y`, by the literal triple loop.
pub fn corating(r: &Dense) -> Vec<Vec<f64>> {
    let n = r.len();
    let m = r[0].len();
    let mut w = vec![vec![0.0; n]; n];
    for u in 0..n {
        for y in 0..n {
            if u == y {
                continue;
            }
            for i in 0..m {
                if let (Some(a), Some(b)) = (r[u][i], r[y][i]) {
                    w[u][y] += a * b;
                }
            }
        }
    }
    w
}

fn row_times(x: &[f64], w: &garec::linalg::Matrix) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for c in 0..w.cols() {
        for k in 0..w.rows() {
            out[c] += x[k] * w.get(k, c);
        }
    }
    out
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Identity => x,
        Activation::Tanh => x.tanh(),
        Activation::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
    }
}

/// Embedding of `node` (row of `r`) for the edge whose other endpoint is
/// column `other`. `feats` are the node-type's factor rows.
pub fn embed(
    r: &Dense,
    node: usize,
    other: usize,
    feats: &[Vec<f64>],
    p: &AttentionParams,
    activation: Activation,
) -> (Vec<f64>, bool) {
    let n = r.len();
    let co = corating(r);
    // co-rating weights normalized by their maximum
    let co_max = (0..n).filter(|&y| co[node][y] > 0.0).map(|y| co[node][y]).fold(0.0, f64::max);
    let tg_max = (0..n)
        .filter(|&y| y != node)
        .filter_map(|y| r[y][other])
        .fold(0.0, f64::max);
    let mut weights = vec![0.0; n];
    for y in 0..n {
        if y == node {
            continue;
        }
        if co[node][y] > 0.0 {
            weights[y] += co[node][y] / co_max;
        }
        if let Some(v) = r[y][other] {
            weights[y] += v / tg_max;
        }
    }
    let cold = r[node].iter().all(Option::is_none);
    let neighbors: Vec<usize> = if cold {
        Vec::new()
    } else {
        (0..n).filter(|&y| weights[y] > 0.0).collect()
    };

    let f = &feats[node];
    let s = row_times(f, &p.w_self);
    if neighbors.is_empty() {
        return (s.iter().map(|&x| act(activation, x)).collect(), true);
    }
    let q = row_times(f, &p.transform);
    let key_w = p.key.as_ref().unwrap_or(&p.transform);
    let keys: Vec<Vec<f64>> = neighbors.iter().map(|&y| row_times(&feats[y], key_w)).collect();
    let rels: Vec<f64> = neighbors
        .iter()
        .zip(&keys)
        .map(|(&y, k)| weights[y] * dotp(&q, k))
        .collect();

    let positive: Vec<usize> = (0..rels.len()).filter(|&k| rels[k] > 0.0).collect();
    let mut f_nei = vec![0.0; q.len()];
    if !positive.is_empty() {
        let mean = positive.iter().map(|&k| rels[k]).sum::<f64>() / positive.len() as f64;
        let top = positive.iter().map(|&k| rels[k]).fold(0.0, f64::max);
        // ties with the mean are kept, allowing for rounding in the sum
        let kept: Vec<usize> = positive.into_iter().filter(|&k| rels[k] >= mean - 1e-12 * top).collect();
        let z: f64 = kept.iter().map(|&k| rels[k].exp()).sum();
        for &k in &kept {
            let c = rels[k].exp() / z;
            for j in 0..f_nei.len() {
                f_nei[j] += c * keys[k][j];
            }
        }
    }
    let g = row_times(&f_nei, &p.w_nei);
    let rs = dotp(&q, &s);
    let rn = dotp(&q, &g);
    let a_self = rs.exp() / (rs.exp() + rn.exp());
    let a_nei = 1.0 - a_self;
    let h = (0..s.len())
        .map(|j| act(activation, a_self * s[j] + a_nei * f_nei[j]))
        .collect();
    (h, false)
}

pub fn rows(m: &garec::linalg::Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn embed_user(r: &Dense, u: usize, i: usize, state: &ModelState) -> Vec<f64> {
    embed(r, u, i, &rows(&state.factors.user), &state.user_attn, state.activation).0
}

pub fn embed_item(r: &Dense, u: usize, i: usize, state: &ModelState) -> Vec<f64> {
    let rt = transpose(r);
    embed(&rt, i, u, &rows(&state.factors.item), &state.item_attn, state.activation).0
}

pub fn predict_raw(r: &Dense, u: usize, i: usize, state: &ModelState) -> f64 {
    let mut x = embed_user(r, u, i, state);
    x.extend(embed_item(r, u, i, state));
    let last = state.mlp.layers.len() - 1;
    for (k, layer) in state.mlp.layers.iter().enumerate() {
        let mut y = row_times(&x, &layer.weight);
        for j in 0..y.len() {
            y[j] += layer.bias[j];
            if k != last && y[j] < 0.0 {
                y[j] = 0.0;
            }
        }
        x = y;
    }
    x[0]
}
