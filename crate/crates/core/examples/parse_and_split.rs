// Parse a MovieLens-style log, split it and look at the sparse matrix.
//
//     cargo run --example parse_and_split

use garec::data::{build_matrix, parse_ratings_str, split, RatingFormat, SplitSpec};

const SAMPLE: &str = "196\t242\t3\t881250949
186\t302\t3\t891717742
22\t377\t1\t878887116
244\t51\t2\t880606923
166\t346\t1\t886397596
298\t474\t4\t884182806
115\t265\t2\t881171488
253\t465\t5\t891628467
305\t451\t3\t886324817
6\t86\t3\t883603013
196\t302\t4\t881250950
22\t242\t5\t878887120
";

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let data = parse_ratings_str(SAMPLE, RatingFormat::Tab100k)?;
    println!("{} ratings, {} users, {} items", data.len(), data.n_users, data.n_items);
    let first = data.records[0];
    println!(
        "first record: raw user {} -> {}, raw item {} -> {}, rating {}",
        data.user_ids.raw(first.user).unwrap(),
        first.user,
        data.item_ids.raw(first.item).unwrap(),
        first.item,
        first.rating
    );

    let (train, test) = split(&data, &SplitSpec::holdout(0.8, 7))?;
    println!("80/20 holdout: {} train, {} test", train.len(), test.len());
    for k in 0..3 {
        let (_, fold) = split(&data, &SplitSpec::fold(k, 3, 7))?;
        println!("fold {k}: {} test records", fold.len());
    }

    let r = build_matrix(&train)?;
    for u in 0..r.n_users() {
        let (items, ratings) = r.user_row(u);
        if !items.is_empty() {
            println!("user {u}: items {items:?} ratings {ratings:?}");
        }
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
