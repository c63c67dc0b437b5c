//! Indirect (two-hop) neighborhoods of users and items.
//!
//! Two kinds of same-type neighbors feed the attention layer:
//!
//! * co-rating neighbors, precomputed once: the weight between users `u` and
//!   `y` is `sum_i r_ui * r_yi` over the items both rated (and symmetrically
//!   for items sharing raters);
//! * target neighbors, read per edge `(u, i)`: the other raters `y` of `i`
//!   weighted by `r_yi`, and the other items `j` rated by `u` weighted by `r_uj`.
//!
//! Every list is sorted by descending weight with ascending-id tie-break and
//! capped to the top `T` entries.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::{Csr, SparseRatings};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborList {
    entries: Vec<(usize, f64)>,
}

fn by_weight_then_id(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

impl NeighborList {
    /// Sorts, drops non-positive weights and keeps the top `cap` entries.
    /// Neighbor ids must be unique.
    pub fn from_entries(mut entries: Vec<(usize, f64)>, cap: usize) -> Self {
        entries.retain(|e| e.1 > 0.0);
        entries.sort_by(by_weight_then_id);
        entries.truncate(cap);
        NeighborList { entries }
    }

    pub fn empty() -> Self {
        NeighborList::default()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn weight_of(&self, id: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == id).map(|e| e.1)
    }

    pub fn max_weight(&self) -> Option<f64> {
        // sorted descending
        self.entries.first().map(|e| e.1)
    }
}

/// Precomputed co-rating neighbor lists for both node types.
#[derive(Debug, Clone, PartialEq)]
pub struct CoRatingGraph {
    pub user_lists: Vec<NeighborList>,
    pub item_lists: Vec<NeighborList>,
    pub cap: usize,
}

impl CoRatingGraph {
    pub fn build(ratings: &SparseRatings, cap: usize) -> Self {
        CoRatingGraph {
            user_lists: build_user_corating(ratings, cap),
            item_lists: build_item_corating(ratings, cap),
            cap,
        }
    }

    /// Debug dump, one line per node: `node_id: (neighbor,weight) ...`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (title, lists) in [("users", &self.user_lists), ("items", &self.item_lists)] {
            let _ = writeln!(out, "# {title}");
            for (node, list) in lists.iter().enumerate() {
                let _ = write!(out, "{node}:");
                for &(y, w) in list.entries() {
                    let _ = write!(out, " ({y},{})", format_sig6(w));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Formats like C's `%g`: six significant digits, trailing zeros trimmed.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    // the exponent is taken after rounding to six digits
    let sci = format!("{:.5e}", x);
    let (mantissa, e) = sci.split_once('e').expect("exponent");
    let e: i32 = e.parse().expect("int exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&e) {
        format!("{}e{}{:02}", trim(mantissa), if e < 0 { '-' } else { '+' }, e.abs())
    } else {
        let decimals = (5 - e).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    }
}

/// Co-rating lists for the rows of `rows`, reaching neighbors through `cols`.
/// Accumulates through the inverted index, so cost follows the number of
/// two-hop paths rather than the square of the node count.
fn corating_lists(rows: &Csr, cols: &Csr, cap: usize) -> Vec<NeighborList> {
    let n = rows.n_rows();
    (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; n], Vec::<usize>::new()),
            |(acc, touched), u| {
                let (mids, r_u) = rows.row(u);
                for (&mid, &ru) in mids.iter().zip(r_u) {
                    let (others, r_o) = cols.row(mid);
                    for (&y, &ry) in others.iter().zip(r_o) {
                        if y == u {
                            continue;
                        }
                        if acc[y] == 0.0 {
                            touched.push(y);
                        }
                        acc[y] += ru * ry;
                    }
                }
                let entries = touched.iter().map(|&y| (y, acc[y])).collect();
                for &y in touched.iter() {
                    acc[y] = 0.0;
                }
                touched.clear();
                NeighborList::from_entries(entries, cap)
            },
        )
        .collect()
}

pub fn build_user_corating(ratings: &SparseRatings, cap: usize) -> Vec<NeighborList> {
    corating_lists(ratings.by_user(), ratings.by_item(), cap)
}

pub fn build_item_corating(ratings: &SparseRatings, cap: usize) -> Vec<NeighborList> {
    corating_lists(ratings.by_item(), ratings.by_user(), cap)
}

/// Other raters `y` of item `i`, weighted by `r_yi`. `u` itself is excluded.
pub fn target_user_neighbors(ratings: &SparseRatings, u: usize, i: usize, cap: usize) -> NeighborList {
    if i >= ratings.n_items() {
        return NeighborList::empty();
    }
    let (users, vals) = ratings.item_row(i);
    let entries = users
        .iter()
        .zip(vals)
        .filter(|(&y, _)| y != u)
        .map(|(&y, &r)| (y, r))
        .collect();
    NeighborList::from_entries(entries, cap)
}

/// Other items `j` rated by `u`, weighted by `r_uj`. `i` itself is excluded.
pub fn target_item_neighbors(ratings: &SparseRatings, u: usize, i: usize, cap: usize) -> NeighborList {
    if u >= ratings.n_users() {
        return NeighborList::empty();
    }
    let (items, vals) = ratings.user_row(u);
    let entries = items
        .iter()
        .zip(vals)
        .filter(|(&j, _)| j != i)
        .map(|(&j, &r)| (j, r))
        .collect();
    NeighborList::from_entries(entries, cap)
}

/// Union of the two neighbor kinds. Each list is divided by its own maximum
/// weight so both lie in `(0, 1]`; shared ids sum their normalized weights.
pub fn merge_neighborhoods(corating: &NeighborList, target: &NeighborList, cap: usize) -> NeighborList {
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(corating.len() + target.len());
    for list in [corating, target] {
        let Some(max) = list.max_weight() else { continue };
        for &(y, w) in list.entries() {
            merged.push((y, w / max));
        }
    }
    merged.sort_by_key(|e| e.0);
    let mut dedup: Vec<(usize, f64)> = Vec::with_capacity(merged.len());
    for (y, w) in merged {
        match dedup.last_mut() {
            Some(last) if last.0 == y => last.1 += w,
            _ => dedup.push((y, w)),
        }
    }
    NeighborList::from_entries(dedup, cap)
}

/// Merged neighborhood of user `u` when scoring edge `(u, i)`.
pub fn user_neighborhood(ratings: &SparseRatings, graph: &CoRatingGraph, u: usize, i: usize) -> NeighborList {
    let co = graph.user_lists.get(u).cloned().unwrap_or_default();
    let target = target_user_neighbors(ratings, u, i, graph.cap);
    merge_neighborhoods(&co, &target, graph.cap)
}

/// Merged neighborhood of item `i` when scoring edge `(u, i)`.
pub fn item_neighborhood(ratings: &SparseRatings, graph: &CoRatingGraph, u: usize, i: usize) -> NeighborList {
    let co = graph.item_lists.get(i).cloned().unwrap_or_default();
    let target = target_item_neighbors(ratings, u, i, graph.cap);
    merge_neighborhoods(&co, &target, graph.cap)
}
