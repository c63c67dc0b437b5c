// Masked NMF on synthetic low-rank ratings, scored as a dot-product predictor.
//
//     cargo run --example nmf_baseline

use garec::data::{build_matrix, split, SplitSpec};
use garec::eval::evaluate_nmf_baseline;
use garec::nmf::{factorize_traced, NmfConfig};
use garec::synthetic::low_rank_ratings;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let data = low_rank_ratings(200, 150, 3, 0.1, 42);
    let (train, test) = split(&data, &SplitSpec::holdout(0.8, 0))?;
    let r = build_matrix(&train)?;

    for d in [2, 4, 8] {
        let cfg = NmfConfig { d, max_iters: 200, ..NmfConfig::default() };
        let run = factorize_traced(&r, &cfg)?;
        let test_rmse = evaluate_nmf_baseline(&run.factors, &test)?.rmse;
        println!(
            "d={d}: {} iterations, train rmse {:.4} -> {:.4}, test rmse {test_rmse:.4}",
            run.iterations(),
            run.rmse[0],
            run.rmse.last().unwrap()
        );
        assert!(run.factors.is_non_negative());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
