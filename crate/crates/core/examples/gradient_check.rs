// Compare analytic gradients with central differences on a small problem.
//
//     cargo run --example gradient_check

use garec::attn::{Activation, ModelShape, ModelState};
use garec::data::build_matrix;
use garec::graph::CoRatingGraph;
use garec::nmf::{factorize, NmfConfig};
use garec::synthetic::low_rank_ratings;
use garec::train::{batch_loss, gradients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let data = low_rank_ratings(8, 8, 2, 0.5, 3);
    let r = build_matrix(&data)?;
    let graph = CoRatingGraph::build(&r, 5);
    let factors = factorize(&r, &NmfConfig { d: 3, ..NmfConfig::default() })?;
    let shape = ModelShape {
        d_out: 3,
        hidden: (4, 2),
        activation: Activation::Tanh,
        separate_keys: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut state = ModelState::init(factors, &shape, data.mean_rating(), &mut rng);
    // Fresh init has zero biases, which puts hidden units exactly on the ReLU
    // kink. Nudge every parameter so differences are taken in a smooth region.
    for t in state.tensors_mut(true) {
        for x in t.iter_mut() {
            *x += rng.gen_range(-0.1..0.1);
        }
    }
    let batch = &data.records;

    let grads = gradients(batch, &state, &graph, &r, false)?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (k, (name, g)) in grads.tensors().iter().enumerate() {
        let mut tensor_worst = 0.0f64;
        for j in 0..g.len() {
            let mut plus = state.clone();
            plus.tensors_mut(true)[k][j] += h;
            let mut minus = state.clone();
            minus.tensors_mut(true)[k][j] -= h;
            let numeric = (batch_loss(batch, &plus, &graph, &r) - batch_loss(batch, &minus, &graph, &r)) / (2.0 * h);
            let err = (g[j] - numeric).abs() / (g[j].abs() + numeric.abs()).max(1e-8);
            tensor_worst = tensor_worst.max(err);
        }
        println!("{name:<24} {:>4} entries, max relative error {tensor_worst:.2e}", g.len());
        worst = worst.max(tensor_worst);
    }
    println!("overall {worst:.2e}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
