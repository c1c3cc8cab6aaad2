//! Writes a MovieLens-shaped synthetic dataset plus a default config.
//!
//! cargo run --release -p cfprox --example synth_movielens -- <dir> [seed]

use std::path::PathBuf;

use cfprox::movielens::write_movielens;
use cfprox::synthetic::{generate, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().ok_or("usage: synth_movielens <dir> [seed]")?);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    std::fs::create_dir_all(&dir)?;
    let dataset = generate(&SyntheticSpec::movielens_small(seed))?;
    write_movielens(&dataset, &dir.join("ratings.csv"), &dir.join("movies.csv"))?;
    std::fs::write(
        dir.join("cfprox.toml"),
        "[data]\nratings = \"ratings.csv\"\nmovies = \"movies.csv\"\n",
    )?;
    println!(
        "{} users, {} items, {} ratings",
        dataset.users().len(),
        dataset.items().len(),
        dataset.len()
    );
    Ok(())
}
