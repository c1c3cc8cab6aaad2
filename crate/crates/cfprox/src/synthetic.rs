//! Seeded MovieLens-shaped rating data: Zipf-like item popularity, heavy-tailed
//! user activity, low-rank ratings on the half-star scale, one to three genres
//! per movie.

use cfprox_core::dataset::{Interaction, InteractionDataset, RatingScale};
use cfprox_core::{ItemId, UserId};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::error::{CliError, Result};

pub const GENRES: [&str; 19] = [
    "Action",
    "Adventure",
    "Animation",
    "Children",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "IMAX",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    /// Target rating count; the result lands close to it.
    pub ratings: usize,
    pub min_per_user: usize,
    pub rank: usize,
    /// Exponent of the item popularity power law.
    pub popularity_exponent: f64,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Same shape as MovieLens `ml-latest-small`.
    pub fn movielens_small(seed: u64) -> Self {
        SyntheticSpec {
            users: 610,
            items: 9742,
            ratings: 100_836,
            min_per_user: 20,
            rank: 4,
            popularity_exponent: 0.9,
            noise: 0.6,
            seed,
        }
    }

    /// A small dataset for tests.
    pub fn small(users: usize, items: usize, seed: u64) -> Self {
        SyntheticSpec {
            users,
            items,
            ratings: users * items / 5,
            min_per_user: (items / 10).max(1),
            rank: 3,
            popularity_exponent: 0.8,
            noise: 0.5,
            seed,
        }
    }
}

fn half_star(x: f64, scale: RatingScale) -> f64 {
    ((x * 2.0).round() / 2.0).clamp(scale.min, scale.max)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).expect("finite sd");
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// Generates a dataset; user and item ids start at 1.
pub fn generate(spec: &SyntheticSpec) -> Result<InteractionDataset> {
    if spec.users == 0 || spec.items == 0 || spec.min_per_user > spec.items {
        return Err(CliError::Config(
            "synthetic dataset needs users, items and min_per_user <= items".into(),
        ));
    }
    let scale = RatingScale::default();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut builder = InteractionDataset::builder(scale);

    // Popularity ranks are shuffled over ids so popular movies are spread out.
    let mut ranks: Vec<usize> = (1..=spec.items).collect();
    rand::seq::SliceRandom::shuffle(ranks.as_mut_slice(), &mut rng);
    let weights: Vec<f64> = ranks
        .iter()
        .map(|&r| (r as f64).powf(-spec.popularity_exponent))
        .collect();

    let item_bias = gaussian_vec(&mut rng, spec.items, 0.4);
    let item_vecs: Vec<Vec<f64>> = (0..spec.items)
        .map(|_| gaussian_vec(&mut rng, spec.rank, 0.5))
        .collect();
    for i in 0..spec.items {
        let n_genres = rng.gen_range(1..=3);
        let genres: Vec<&str> = index::sample(&mut rng, GENRES.len(), n_genres)
            .into_iter()
            .map(|g| GENRES[g])
            .collect();
        let year = rng.gen_range(1920..=2018);
        builder.add_item(
            ItemId(i as u32 + 1),
            format!("Synthetic Movie {} ({year})", i + 1),
            genres,
        );
    }

    // Heavy-tailed activity, rescaled to hit the target total.
    let activity = LogNormal::new(0.0, 1.0).expect("valid lognormal");
    let raw: Vec<f64> = (0..spec.users).map(|_| activity.sample(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    let spare = spec.ratings.saturating_sub(spec.users * spec.min_per_user) as f64;
    let cap = spec.items.min(spec.items / 2 + spec.min_per_user);

    for (u, a) in raw.iter().enumerate() {
        let count = (spec.min_per_user + (spare * a / total).round() as usize).min(cap);
        let user_bias = rng.gen_range(-0.5..0.5);
        let user_vec = gaussian_vec(&mut rng, spec.rank, 0.5);
        let noise = Normal::new(0.0, spec.noise).expect("finite noise");
        let picked = index::sample_weighted(&mut rng, spec.items, |i| weights[i], count)
            .map_err(|e| CliError::Config(format!("synthetic sampling failed: {e}")))?;
        for i in picked {
            let affinity: f64 = user_vec.iter().zip(&item_vecs[i]).map(|(x, y)| x * y).sum();
            let raw_rating =
                3.5 + user_bias + item_bias[i] + 2.0 * affinity + noise.sample(&mut rng);
            builder.add_interaction(Interaction {
                user: UserId(u as u32 + 1),
                item: ItemId(i as u32 + 1),
                rating: half_star(raw_rating, scale),
                timestamp: 1_000_000_000 + rng.gen_range(0..500_000_000),
            })?;
        }
    }
    Ok(builder.build())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let spec = SyntheticSpec::small(40, 120, 9);
        let a = generate(&spec).unwrap();
        assert_eq!(a, generate(&spec).unwrap());
        assert_eq!(a.users().len(), 40);
        assert_eq!(a.items().len(), 120);
        for u in a.users() {
            assert!(a.user_history(*u).len() >= spec.min_per_user);
        }
        for r in a.interactions() {
            assert!(a.scale().contains(r.rating));
            assert_eq!((r.rating * 2.0).fract(), 0.0);
        }
        assert!(a.genres().values().all(|g| (1..=3).contains(&g.len())));
    }

    #[test]
    fn movielens_shape_hits_the_target_counts() {
        let d = generate(&SyntheticSpec::movielens_small(0)).unwrap();
        assert_eq!(d.users().len(), 610);
        assert_eq!(d.items().len(), 9742);
        let n = d.len() as f64;
        assert!((n - 100_836.0).abs() / 100_836.0 < 0.02, "{n}");
    }
}
