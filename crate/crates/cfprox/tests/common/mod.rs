#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use cfprox::movielens::write_movielens;
use cfprox::synthetic::{generate, SyntheticSpec};

/// Writes a small synthetic dataset and a config with fast training settings;
/// returns the config path.
pub fn small_setup(dir: &Path, extra: &str) -> PathBuf {
    let data = generate(&SyntheticSpec::small(60, 150, 5)).unwrap();
    write_movielens(&data, &dir.join("ratings.csv"), &dir.join("movies.csv")).unwrap();
    let cfg = dir.join("cfprox.toml");
    fs::write(
        &cfg,
        format!(
            "[data]\nratings = \"ratings.csv\"\nmovies = \"movies.csv\"\n\n\
             [train]\nembedding_dim = 6\niterations = 8\n\n[runtime]\nworkers = 2\n{extra}"
        ),
    )
    .unwrap();
    cfg
}

pub fn only_subdir(dir: &Path, prefix: &str) -> PathBuf {
    let mut found: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    assert_eq!(found.len(), 1, "{found:?}");
    found.pop().unwrap()
}
