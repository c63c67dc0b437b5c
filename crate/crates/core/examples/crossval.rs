// Five-fold cross-validation of the full pipeline against the NMF baseline.
//
//     cargo run --release --example crossval

use garec::config::RunConfig;
use garec::eval::crossval;
use garec::synthetic::low_rank_ratings;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let data = low_rank_ratings(60, 50, 2, 0.2, 8);
    let mut cfg = RunConfig::default();
    cfg.apply_str("d = 4\nd_out = 4\nhidden1 = 8\nhidden2 = 4\nmax_epochs = 5\nbatch_size = 32\nbaseline_d = 2\n")?;
    let report = crossval(&data, 5, 0, &cfg.train, &cfg.baseline)?;
    for (k, f) in report.folds.iter().enumerate() {
        println!("fold {k}: garec {:.4} nmf {:.4}", f.garec.rmse, f.nmf.rmse);
    }
    println!(
        "mean {:.4} +/- {:.4}, nmf mean {:.4}",
        report.mean_rmse, report.std_rmse, report.nmf_mean_rmse
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
