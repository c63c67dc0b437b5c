// Trains GARec and the NMF baseline on MovieLens-100K and prints both test
// RMSEs. Config overrides can be passed as `key=value` arguments.
//
//     cargo run --release --example movielens -- data/ml-100k/u.data max_epochs=20

use garec::config::RunConfig;
use garec::data::{parse_ratings, RatingFormat, SplitSpec};
use garec::eval::run_split;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "data/ml-100k/u.data".into());
    let overrides: Vec<String> = args.collect();
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(&overrides)?;
    cfg.validate()?;

    let data = parse_ratings(&path, RatingFormat::Tab100k)?;
    println!("{} ratings, {} users, {} items", data.len(), data.n_users, data.n_items);
    let out = run_split(&data, &SplitSpec::holdout(0.8, cfg.train.seed), &cfg.train, &cfg.baseline)?;
    for e in &out.report.epochs {
        println!(
            "epoch {:3}  train mse {:.4}  val rmse {:.4}  {:.1}s",
            e.epoch,
            e.train_mse,
            e.val_rmse.unwrap_or(f64::NAN),
            e.seconds
        );
    }
    println!("best epoch {}", out.report.best_epoch);
    println!("garec test rmse {:.4} (mae {:.4})", out.garec.rmse, out.garec.mae);
    println!("nmf   test rmse {:.4}", out.nmf.rmse);
    Ok(())
}
