//! Seeded synthetic rating data with low-rank structure, for examples and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{RatingDataset, RatingRecord};

/// Ratings from `3 + b_u + b_i + p_u . q_i + noise`, rounded into `1..=5`,
/// observed independently with probability `density`. Every user gets at
/// least one rating.
pub fn low_rank_ratings(n_users: usize, n_items: usize, rank: usize, density: f64, seed: u64) -> RatingDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vecs = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..rank).map(|_| rng.gen_range(-0.8..0.8)).collect())
            .collect()
    };
    let p = vecs(n_users, &mut rng);
    let q = vecs(n_items, &mut rng);
    let bu: Vec<f64> = (0..n_users).map(|_| rng.gen_range(-0.6..0.6)).collect();
    let bi: Vec<f64> = (0..n_items).map(|_| rng.gen_range(-0.6..0.6)).collect();
    let mut records = Vec::new();
    for u in 0..n_users {
        let forced = rng.gen_range(0..n_items);
        for i in 0..n_items {
            if i != forced && rng.gen::<f64>() >= density {
                continue;
            }
            let dot: f64 = p[u].iter().zip(&q[i]).map(|(a, b)| a * b).sum();
            let noise = rng.gen_range(-0.5..0.5);
            let r = (3.0 + bu[u] + bi[i] + dot + noise).round().clamp(1.0, 5.0) as u8;
            records.push(RatingRecord {
                user: u,
                item: i,
                rating: r,
                timestamp: (u * n_items + i) as u64,
            });
        }
    }
    RatingDataset::from_records(records, n_users, n_items).expect("generated records are valid")
}
