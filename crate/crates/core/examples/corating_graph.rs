// Co-rating neighbors, target-item neighbors and their merge for one edge.
//
//     cargo run --example corating_graph

use garec::data::SparseRatings;
use garec::graph::{merge_neighborhoods, target_user_neighbors, CoRatingGraph};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // users 0..4, items 0..3
    let r = SparseRatings::from_triples(
        4,
        3,
        &[
            (0, 0, 5.0), (0, 1, 3.0),
            (1, 0, 4.0), (1, 1, 2.0), (1, 2, 1.0),
            (2, 2, 5.0),
            (3, 1, 4.0), (3, 2, 4.0),
        ],
    )?;
    let graph = CoRatingGraph::build(&r, 2);
    print!("{}", graph.dump());

    let (u, i) = (0, 2);
    let corated = &graph.user_lists[u];
    let target = target_user_neighbors(&r, u, i, graph.cap);
    let merged = merge_neighborhoods(corated, &target, graph.cap);
    println!("edge ({u},{i})");
    println!("  co-rated: {:?}", corated.entries());
    println!("  raters of item {i}: {:?}", target.entries());
    println!("  merged: {:?}", merged.entries());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
