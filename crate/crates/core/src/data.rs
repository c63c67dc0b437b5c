//! Rating logs: parsing, dense re-indexing, splits and the dual CSR matrix.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GarecError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user: usize,
    pub item: usize,
    pub rating: u8,
    pub timestamp: u64,
}

impl RatingRecord {
    pub fn new(user: usize, item: usize, rating: u8) -> Self {
        RatingRecord {
            user,
            item,
            rating,
            timestamp: 0,
        }
    }
}

/// Bijection between raw ids found in a file and dense indices `0..len`.
/// Dense indices follow ascending raw-id order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<u64>,
    dense: HashMap<u64, usize>,
}

impl IdMap {
    pub fn from_raw_ids(mut ids: Vec<u64>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        let dense = ids.iter().enumerate().map(|(d, &r)| (r, d)).collect();
        IdMap { raw: ids, dense }
    }

    /// Identity map over `0..n`, used for data that is already densely indexed.
    pub fn identity(n: usize) -> Self {
        IdMap::from_raw_ids((0..n as u64).collect())
    }

    pub fn dense(&self, raw: u64) -> Option<usize> {
        self.dense.get(&raw).copied()
    }

    pub fn raw(&self, dense: usize) -> Option<u64> {
        self.raw.get(dense).copied()
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw_ids(&self) -> &[u64] {
        &self.raw
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingDataset {
    pub records: Vec<RatingRecord>,
    pub n_users: usize,
    pub n_items: usize,
    pub user_ids: IdMap,
    pub item_ids: IdMap,
}

impl RatingDataset {
    /// Builds a dataset over already-dense ids. Checks the id bounds, the
    /// rating range and pair uniqueness.
    pub fn from_records(
        records: Vec<RatingRecord>,
        n_users: usize,
        n_items: usize,
    ) -> Result<Self> {
        let ds = RatingDataset {
            records,
            n_users,
            n_items,
            user_ids: IdMap::identity(n_users),
            item_ids: IdMap::identity(n_items),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for (k, r) in self.records.iter().enumerate() {
            if r.user >= self.n_users {
                return Err(GarecError::dim("user id bound", self.n_users, r.user));
            }
            if r.item >= self.n_items {
                return Err(GarecError::dim("item id bound", self.n_items, r.item));
            }
            if !(1..=5).contains(&r.rating) {
                return Err(GarecError::RatingOutOfRange {
                    line: k + 1,
                    rating: i64::from(r.rating),
                });
            }
            if !seen.insert((r.user, r.item)) {
                return Err(GarecError::DuplicatePair {
                    line: k + 1,
                    user: r.user.to_string(),
                    item: r.item.to_string(),
                });
            }
        }
        Ok(())
    }

    /// A dataset over the same id space holding only `records`.
    pub fn with_records(&self, records: Vec<RatingRecord>) -> RatingDataset {
        RatingDataset {
            records,
            n_users: self.n_users,
            n_items: self.n_items,
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
        }
    }

    pub fn mean_rating(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| f64::from(r.rating)).sum::<f64>() / self.records.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatingFormat {
    /// MovieLens-100K `u.data`: `user\titem\trating\ttimestamp`.
    Tab100k,
    /// MovieLens-1M `ratings.dat`: `user::item::rating::timestamp`.
    Sep1m,
}

impl FromStr for RatingFormat {
    type Err = GarecError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tab100k" => Ok(RatingFormat::Tab100k),
            "sep1m" => Ok(RatingFormat::Sep1m),
            other => Err(GarecError::InvalidConfig(format!(
                "unknown rating format {other:?} (expected tab100k or sep1m)"
            ))),
        }
    }
}

impl fmt::Display for RatingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatingFormat::Tab100k => "tab100k",
            RatingFormat::Sep1m => "sep1m",
        })
    }
}

pub fn parse_ratings(path: impl AsRef<Path>, format: RatingFormat) -> Result<RatingDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| GarecError::io(path, e))?;
    parse_ratings_str(&text, format)
}

pub fn parse_ratings_str(text: &str, format: RatingFormat) -> Result<RatingDataset> {
    struct Raw {
        user: u64,
        item: u64,
        rating: u8,
        timestamp: u64,
    }

    let mut raws = Vec::new();
    let mut seen = HashSet::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = match format {
            RatingFormat::Tab100k => line.split('\t').collect(),
            RatingFormat::Sep1m => line.split("::").collect(),
        };
        if fields.len() != 4 {
            return Err(GarecError::Parse {
                line: line_no,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let int = |s: &str, what: &str| -> Result<i64> {
            s.trim().parse::<i64>().map_err(|_| GarecError::Parse {
                line: line_no,
                reason: format!("{what} {s:?} is not an integer"),
            })
        };
        let user = int(fields[0], "user")?;
        let item = int(fields[1], "item")?;
        let rating = int(fields[2], "rating")?;
        let timestamp = int(fields[3], "timestamp")?;
        if user < 0 || item < 0 || timestamp < 0 {
            return Err(GarecError::Parse {
                line: line_no,
                reason: "negative id or timestamp".into(),
            });
        }
        if !(1..=5).contains(&rating) {
            return Err(GarecError::RatingOutOfRange {
                line: line_no,
                rating,
            });
        }
        let (user, item) = (user as u64, item as u64);
        if !seen.insert((user, item)) {
            return Err(GarecError::DuplicatePair {
                line: line_no,
                user: user.to_string(),
                item: item.to_string(),
            });
        }
        raws.push(Raw {
            user,
            item,
            rating: rating as u8,
            timestamp: timestamp as u64,
        });
    }
    if raws.is_empty() {
        return Err(GarecError::Empty);
    }

    let user_ids = IdMap::from_raw_ids(raws.iter().map(|r| r.user).collect());
    let item_ids = IdMap::from_raw_ids(raws.iter().map(|r| r.item).collect());
    let records = raws
        .iter()
        .map(|r| RatingRecord {
            user: user_ids.dense(r.user).expect("user id mapped"),
            item: item_ids.dense(r.item).expect("item id mapped"),
            rating: r.rating,
            timestamp: r.timestamp,
        })
        .collect();
    Ok(RatingDataset {
        records,
        n_users: user_ids.len(),
        n_items: item_ids.len(),
        user_ids,
        item_ids,
    })
}

/// Holdout split when `n_folds == 1`, otherwise the `fold_index`-th of
/// `n_folds` equal slices of a seeded permutation is held out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub fold_index: usize,
    pub n_folds: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn holdout(train_fraction: f64, seed: u64) -> Self {
        SplitSpec {
            train_fraction,
            fold_index: 0,
            n_folds: 1,
            seed,
        }
    }

    pub fn fold(fold_index: usize, n_folds: usize, seed: u64) -> Self {
        SplitSpec {
            train_fraction: 1.0 - 1.0 / n_folds.max(1) as f64,
            fold_index,
            n_folds,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(GarecError::InvalidSplit(format!(
                "train fraction {} outside (0,1)",
                self.train_fraction
            )));
        }
        if self.n_folds == 0 || self.fold_index >= self.n_folds {
            return Err(GarecError::InvalidSplit(format!(
                "fold index {} not in 0..{}",
                self.fold_index, self.n_folds
            )));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        if self.n_folds == 1 {
            format!("holdout {}", self.train_fraction)
        } else {
            format!("fold {}/{}", self.fold_index, self.n_folds)
        }
    }
}

/// Seeded record-level permutation shared by every split kind.
pub fn shuffled_indices(len: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

pub fn split(dataset: &RatingDataset, spec: &SplitSpec) -> Result<(RatingDataset, RatingDataset)> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(GarecError::Empty);
    }
    let n = dataset.len();
    let perm = shuffled_indices(n, spec.seed);
    let (lo, hi) = if spec.n_folds == 1 {
        let n_test = (n as f64 * (1.0 - spec.train_fraction)).round() as usize;
        (0, n_test.min(n))
    } else {
        (
            spec.fold_index * n / spec.n_folds,
            (spec.fold_index + 1) * n / spec.n_folds,
        )
    };
    let mut is_test = vec![false; n];
    for &p in &perm[lo..hi] {
        is_test[p] = true;
    }
    // Keep the parent's record order inside each side.
    let (test, train): (Vec<_>, Vec<_>) = dataset
        .records
        .iter()
        .zip(&is_test)
        .partition(|(_, &t)| t);
    let unzip = |v: Vec<(&RatingRecord, &bool)>| v.into_iter().map(|(r, _)| *r).collect();
    Ok((dataset.with_records(unzip(train)), dataset.with_records(unzip(test))))
}

/// One compressed-row view: row `r` owns `indices[offsets[r]..offsets[r+1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triples. Rows come out with strictly
    /// ascending column ids; duplicate coordinates are rejected upstream.
    fn from_triples(n_rows: usize, triples: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, _, _) in triples {
            counts[r + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut indices = vec![0; triples.len()];
        let mut values = vec![0.0; triples.len()];
        for &(r, c, v) in triples {
            let at = cursor[r];
            indices[at] = c;
            values[at] = v;
            cursor[r] += 1;
        }
        for r in 0..n_rows {
            let (s, e) = (offsets[r], offsets[r + 1]);
            let mut pairs: Vec<(usize, f64)> = indices[s..e]
                .iter()
                .copied()
                .zip(values[s..e].iter().copied())
                .collect();
            pairs.sort_unstable_by_key(|p| p.0);
            for (k, (c, v)) in pairs.into_iter().enumerate() {
                indices[s + k] = c;
                values[s + k] = v;
            }
        }
        Csr {
            offsets,
            indices,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.offsets[r], self.offsets[r + 1]);
        (&self.indices[s..e], &self.values[s..e])
    }

    #[inline]
    pub fn row_len(&self, r: usize) -> usize {
        self.offsets[r + 1] - self.offsets[r]
    }

    /// Value at `(r, c)` if observed.
    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).ok().map(|k| vals[k])
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// The observed rating matrix kept in both orientations.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRatings {
    n_users: usize,
    n_items: usize,
    by_user: Csr,
    by_item: Csr,
}

impl SparseRatings {
    pub fn from_triples(
        n_users: usize,
        n_items: usize,
        triples: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(triples.len());
        for &(u, i, _) in triples {
            if u >= n_users {
                return Err(GarecError::dim("user id bound", n_users, u));
            }
            if i >= n_items {
                return Err(GarecError::dim("item id bound", n_items, i));
            }
            if !seen.insert((u, i)) {
                return Err(GarecError::DuplicatePair {
                    line: 0,
                    user: u.to_string(),
                    item: i.to_string(),
                });
            }
        }
        let by_user = Csr::from_triples(n_users, triples);
        let swapped: Vec<_> = triples.iter().map(|&(u, i, r)| (i, u, r)).collect();
        let by_item = Csr::from_triples(n_items, &swapped);
        Ok(SparseRatings {
            n_users,
            n_items,
            by_user,
            by_item,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.by_user.nnz()
    }

    /// Items rated by `u` with their ratings, ascending item id.
    #[inline]
    pub fn user_row(&self, u: usize) -> (&[usize], &[f64]) {
        self.by_user.row(u)
    }

    /// Users who rated `i` with their ratings, ascending user id.
    #[inline]
    pub fn item_row(&self, i: usize) -> (&[usize], &[f64]) {
        self.by_item.row(i)
    }

    pub fn by_user(&self) -> &Csr {
        &self.by_user
    }

    pub fn by_item(&self) -> &Csr {
        &self.by_item
    }

    pub fn get(&self, u: usize, i: usize) -> Option<f64> {
        self.by_user.get(u, i)
    }

    /// Row-major enumeration `(user, item, rating)`.
    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for u in 0..self.n_users {
            let (items, vals) = self.user_row(u);
            out.extend(items.iter().zip(vals).map(|(&i, &r)| (u, i, r)));
        }
        out
    }

    /// Same enumeration driven by the item-keyed view.
    pub fn triples_by_item(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.n_items {
            let (users, vals) = self.item_row(i);
            out.extend(users.iter().zip(vals).map(|(&u, &r)| (u, i, r)));
        }
        out
    }

    /// Swaps the roles of users and items.
    pub fn transpose(&self) -> SparseRatings {
        SparseRatings {
            n_users: self.n_items,
            n_items: self.n_users,
            by_user: self.by_item.clone(),
            by_item: self.by_user.clone(),
        }
    }

    pub fn mean(&self) -> f64 {
        let vals = &self.by_user.values;
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }
}

pub fn build_matrix(dataset: &RatingDataset) -> Result<SparseRatings> {
    let triples: Vec<_> = dataset
        .records
        .iter()
        .map(|r| (r.user, r.item, f64::from(r.rating)))
        .collect();
    SparseRatings::from_triples(dataset.n_users, dataset.n_items, &triples)
}

/// Headerless `user,item,rating` with dense ids.
pub fn write_csv(dataset: &RatingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| GarecError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in &dataset.records {
        writeln!(w, "{},{},{}", r.user, r.item, r.rating).map_err(|e| GarecError::io(path, e))?;
    }
    w.flush().map_err(|e| GarecError::io(path, e))
}

pub fn read_csv_str(text: &str, n_users: usize, n_items: usize) -> Result<RatingDataset> {
    let mut records = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |reason: String| GarecError::Parse { line: k + 1, reason };
        if f.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", f.len())));
        }
        let user = f[0].parse().map_err(|_| bad(format!("bad user {:?}", f[0])))?;
        let item = f[1].parse().map_err(|_| bad(format!("bad item {:?}", f[1])))?;
        let rating: i64 = f[2].parse().map_err(|_| bad(format!("bad rating {:?}", f[2])))?;
        if !(1..=5).contains(&rating) {
            return Err(GarecError::RatingOutOfRange { line: k + 1, rating });
        }
        records.push(RatingRecord::new(user, item, rating as u8));
    }
    RatingDataset::from_records(records, n_users, n_items)
}

pub fn read_csv(path: impl AsRef<Path>, n_users: usize, n_items: usize) -> Result<RatingDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| GarecError::io(path, e))?;
    read_csv_str(&text, n_users, n_items)
}

/// Metadata of a prepared split directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedMeta {
    pub n_users: usize,
    pub n_items: usize,
    pub split: String,
    pub seed: u64,
    pub source: String,
}

/// Writes `meta.json`, `users.txt`, `items.txt`, `train.csv` and `test.csv` into `dir`.
pub fn save_prepared(
    dir: impl AsRef<Path>,
    train: &RatingDataset,
    test: &RatingDataset,
    meta: &PreparedMeta,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| GarecError::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| GarecError::io(p, e))
    };
    write("meta.json", serde_json::to_string_pretty(meta)?)?;
    let ids = |m: &IdMap| m.raw_ids().iter().map(|r| format!("{r}\n")).collect::<String>();
    write("users.txt", ids(&train.user_ids))?;
    write("items.txt", ids(&train.item_ids))?;
    write_csv(train, dir.join("train.csv"))?;
    write_csv(test, dir.join("test.csv"))
}

pub fn load_prepared(dir: impl AsRef<Path>) -> Result<(RatingDataset, RatingDataset, PreparedMeta)> {
    let dir = dir.as_ref();
    let read = |name: &str| -> Result<String> {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| GarecError::io(p, e))
    };
    let meta: PreparedMeta = serde_json::from_str(&read("meta.json")?)?;
    let ids = |body: String| -> Result<IdMap> {
        body.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(k, l)| {
                l.trim().parse::<u64>().map_err(|_| GarecError::Parse {
                    line: k + 1,
                    reason: format!("bad raw id {l:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(IdMap::from_raw_ids)
    };
    let user_ids = ids(read("users.txt")?)?;
    let item_ids = ids(read("items.txt")?)?;
    if user_ids.len() != meta.n_users {
        return Err(GarecError::dim("users.txt entries", meta.n_users, user_ids.len()));
    }
    if item_ids.len() != meta.n_items {
        return Err(GarecError::dim("items.txt entries", meta.n_items, item_ids.len()));
    }
    let mut train = read_csv_str(&read("train.csv")?, meta.n_users, meta.n_items)?;
    let mut test = read_csv_str(&read("test.csv")?, meta.n_users, meta.n_items)?;
    for ds in [&mut train, &mut test] {
        ds.user_ids = user_ids.clone();
        ds.item_ids = item_ids.clone();
    }
    Ok((train, test, meta))
}
