// Train on synthetic ratings, save a checkpoint, reload it and score the
// held-out split with both copies.
//
//     cargo run --release --example train_and_checkpoint

use garec::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use garec::config::RunConfig;
use garec::data::{build_matrix, split, SplitSpec};
use garec::eval::evaluate;
use garec::graph::CoRatingGraph;
use garec::synthetic::low_rank_ratings;
use garec::train::fit;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let data = low_rank_ratings(120, 80, 3, 0.15, 5);
    let (train, test) = split(&data, &SplitSpec::holdout(0.8, 0))?;

    let mut cfg = RunConfig::default();
    cfg.apply_str("d = 4\nd_out = 4\nhidden1 = 8\nhidden2 = 4\nmax_epochs = 15\nbatch_size = 64\nlearning_rate = 0.005\n")?;
    let (state, report) = fit(&train, &cfg.train)?;
    for e in &report.epochs {
        println!("epoch {:2} train mse {:.4} val rmse {:.4}", e.epoch, e.train_mse, e.val_rmse.unwrap_or(f64::NAN));
    }

    let path = std::env::temp_dir().join(format!("garec-example-{}.ckpt", std::process::id()));
    let meta = CheckpointMeta {
        seed: cfg.train.seed,
        freeze_factors: cfg.train.freeze_factors,
        config_echo: cfg.echo(),
    };
    save_checkpoint(&state, &meta, &path)?;
    let (restored, _) = load_checkpoint(&path)?;
    std::fs::remove_file(&path)?;

    let r = build_matrix(&train)?;
    let graph = CoRatingGraph::build(&r, cfg.train.cap);
    let a = evaluate(&state, &test, &graph, &r)?;
    let b = evaluate(&restored, &test, &graph, &r)?;
    println!("test rmse {:.4} (restored {:.4}), {} cold edges", a.rmse, b.rmse, a.n_cold_fallback);
    assert_eq!(a.rmse.to_bits(), b.rmse.to_bits());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
