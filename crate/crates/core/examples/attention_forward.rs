// One forward pass through the attention layers and the MLP, printing the
// intermediate quantities for a single edge.
//
//     cargo run --example attention_forward

use garec::attn::{forward_edge, Activation, ModelShape, ModelState};
use garec::data::build_matrix;
use garec::graph::CoRatingGraph;
use garec::nmf::{factorize, NmfConfig};
use garec::synthetic::low_rank_ratings;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let data = low_rank_ratings(30, 20, 2, 0.3, 1);
    let r = build_matrix(&data)?;
    let graph = CoRatingGraph::build(&r, 8);
    let factors = factorize(&r, &NmfConfig { d: 4, ..NmfConfig::default() })?;
    let shape = ModelShape {
        d_out: 4,
        hidden: (4, 2),
        activation: Activation::Tanh,
        separate_keys: false,
    };
    let state = ModelState::init(factors, &shape, data.mean_rating(), &mut ChaCha8Rng::seed_from_u64(0));

    let rec = data.records[0];
    let trace = forward_edge(&state, &state.project(), &graph, &r, rec.user, rec.item);
    for (name, side) in [("user", &trace.user), ("item", &trace.item)] {
        println!("{name} {} with {} neighbors", side.node, side.neighbors.len());
        println!("  relevances {:.3?}", side.rels);
        println!("  survivors {:?} kept {:?}", side.support.survivors, side.support.kept);
        println!("  coefficients {:.3?}", side.coefs);
        println!("  self/neighbor weights ({:.3}, {:.3})", side.alpha.0, side.alpha.1);
        println!("  embedding {:.3?}", side.h);
    }
    println!("rating {} predicted {:.3}", rec.rating, state.clamp(trace.raw()));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
