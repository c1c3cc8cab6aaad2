//! Rating data: users, items, explicit-feedback interactions and genre tags.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, ItemId, Result, UserId};

/// Closed interval of admissible rating values.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale { min: 0.5, max: 5.0 }
    }
}

impl RatingScale {
    pub fn contains(&self, rating: f64) -> bool {
        rating >= self.min && rating <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub rating: f64,
    /// Seconds since the epoch.
    pub timestamp: i64,
}

/// Immutable explicit-feedback dataset.
///
/// Interactions are stored sorted by `(user, item)` with at most one row per
/// pair, so per-user histories are contiguous slices.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InteractionDataset {
    users: BTreeSet<UserId>,
    items: BTreeSet<ItemId>,
    interactions: Vec<Interaction>,
    genres: BTreeMap<ItemId, BTreeSet<String>>,
    titles: BTreeMap<ItemId, String>,
    scale: RatingScale,
}

/// Incremental constructor for [`InteractionDataset`].
///
/// Interactions auto-register their user and item. Repeated `(user, item)`
/// rows keep the one with the latest timestamp; on equal timestamps the row
/// added last wins.
#[derive(Debug, Clone, Default)]
pub struct DatasetBuilder {
    scale: RatingScale,
    users: BTreeSet<UserId>,
    items: BTreeSet<ItemId>,
    rows: BTreeMap<(UserId, ItemId), Interaction>,
    genres: BTreeMap<ItemId, BTreeSet<String>>,
    titles: BTreeMap<ItemId, String>,
}

impl DatasetBuilder {
    pub fn new(scale: RatingScale) -> Self {
        DatasetBuilder {
            scale,
            ..Default::default()
        }
    }

    pub fn add_user(&mut self, user: UserId) -> &mut Self {
        self.users.insert(user);
        self
    }

    /// Declares an item together with its title and genre tags.
    pub fn add_item<I, S>(&mut self, item: ItemId, title: impl Into<String>, genres: I) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.items.insert(item);
        self.titles.insert(item, title.into());
        self.genres
            .insert(item, genres.into_iter().map(Into::into).collect());
        self
    }

    pub fn add_interaction(&mut self, row: Interaction) -> Result<&mut Self> {
        if !row.rating.is_finite() || !self.scale.contains(row.rating) {
            return Err(Error::RatingOutOfScale {
                user: row.user,
                item: row.item,
                rating: row.rating,
                min: self.scale.min,
                max: self.scale.max,
            });
        }
        self.users.insert(row.user);
        self.items.insert(row.item);
        match self.rows.get(&(row.user, row.item)) {
            Some(prev) if prev.timestamp > row.timestamp => {}
            _ => {
                self.rows.insert((row.user, row.item), row);
            }
        }
        Ok(self)
    }

    pub fn build(self) -> InteractionDataset {
        InteractionDataset {
            users: self.users,
            items: self.items,
            interactions: self.rows.into_values().collect(),
            genres: self.genres,
            titles: self.titles,
            scale: self.scale,
        }
    }
}

/// A hypothetical user whose history is drawn from popular items.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticHistory {
    pub user: UserId,
    /// Distinct items in ascending id order.
    pub items: Vec<ItemId>,
    pub imputed_rating: f64,
    pub seed: u64,
}

impl SyntheticHistory {
    /// `(item, rating)` pairs as they enter training.
    pub fn ratings(&self) -> Vec<(ItemId, f64)> {
        self.items
            .iter()
            .map(|&i| (i, self.imputed_rating))
            .collect()
    }
}

impl InteractionDataset {
    pub fn builder(scale: RatingScale) -> DatasetBuilder {
        DatasetBuilder::new(scale)
    }

    /// Builds a dataset from bare `(user, item, rating)` triples on the
    /// default scale, with timestamp 0 and no genre information.
    pub fn from_triples(triples: &[(u32, u32, f64)]) -> Result<Self> {
        let mut b = DatasetBuilder::new(RatingScale::default());
        for &(u, i, r) in triples {
            b.add_interaction(Interaction {
                user: UserId(u),
                item: ItemId(i),
                rating: r,
                timestamp: 0,
            })?;
        }
        Ok(b.build())
    }

    pub fn users(&self) -> &BTreeSet<UserId> {
        &self.users
    }

    pub fn items(&self) -> &BTreeSet<ItemId> {
        &self.items
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn genres(&self) -> &BTreeMap<ItemId, BTreeSet<String>> {
        &self.genres
    }

    pub fn titles(&self) -> &BTreeMap<ItemId, String> {
        &self.titles
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// The user's interactions, ordered by item id.
    pub fn user_history(&self, user: UserId) -> &[Interaction] {
        let start = self.interactions.partition_point(|r| r.user < user);
        let end = self.interactions.partition_point(|r| r.user <= user);
        &self.interactions[start..end]
    }

    /// Items the user has interacted with.
    pub fn user_items(&self, user: UserId) -> BTreeSet<ItemId> {
        self.user_history(user).iter().map(|r| r.item).collect()
    }

    pub fn contains(&self, user: UserId, item: ItemId) -> bool {
        self.find(user, item).is_ok()
    }

    fn find(&self, user: UserId, item: ItemId) -> core::result::Result<usize, usize> {
        self.interactions
            .binary_search_by(|r| (r.user, r.item).cmp(&(user, item)))
    }

    /// Number of users who rated each item; items without ratings map to 0.
    pub fn item_counts(&self) -> BTreeMap<ItemId, usize> {
        let mut counts: BTreeMap<ItemId, usize> = self.items.iter().map(|&i| (i, 0)).collect();
        for r in &self.interactions {
            *counts.entry(r.item).or_insert(0) += 1;
        }
        counts
    }

    /// Nearest-rank `quantile` of the per-item interaction counts.
    pub fn popularity_threshold(&self, quantile: f64) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !(0.0..=1.0).contains(&quantile) {
            return Err(Error::invalid("quantile must lie in [0, 1]"));
        }
        let mut counts: Vec<usize> = self.item_counts().into_values().collect();
        counts.sort_unstable();
        Ok(nearest_rank(&counts, quantile))
    }

    /// Items whose interaction count reaches the `quantile` threshold, by id.
    pub fn popular_items(&self, quantile: f64) -> Result<Vec<ItemId>> {
        let threshold = self.popularity_threshold(quantile)?;
        Ok(self
            .item_counts()
            .into_iter()
            .filter(|&(_, c)| c >= threshold)
            .map(|(i, _)| i)
            .collect())
    }

    /// Draws `size` distinct popular items uniformly without replacement and
    /// assigns them to a freshly allocated user id.
    pub fn sample_history(
        &self,
        size: usize,
        quantile: f64,
        imputed_rating: f64,
        seed: u64,
    ) -> Result<SyntheticHistory> {
        if size == 0 {
            return Err(Error::invalid("history size must be positive"));
        }
        if !self.scale.contains(imputed_rating) {
            return Err(Error::invalid(
                "imputed rating lies outside the rating scale",
            ));
        }
        let pool = self.popular_items(quantile)?;
        if pool.len() < size {
            return Err(Error::InsufficientItems {
                available: pool.len(),
                needed: size,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut items: Vec<ItemId> = rand::seq::index::sample(&mut rng, pool.len(), size)
            .into_iter()
            .map(|k| pool[k])
            .collect();
        items.sort_unstable();
        Ok(SyntheticHistory {
            user: self.fresh_user_id(),
            items,
            imputed_rating,
            seed,
        })
    }

    /// Smallest id above every existing user id.
    pub fn fresh_user_id(&self) -> UserId {
        UserId(self.users.last().map_or(1, |u| u.0 + 1))
    }

    /// Returns a copy with the synthetic user's history added as ordinary
    /// ratings (timestamp 0).
    pub fn materialize(&self, history: &SyntheticHistory) -> Result<Self> {
        if self.users.contains(&history.user) {
            return Err(Error::UserCollision(history.user));
        }
        if !self.scale.contains(history.imputed_rating) {
            return Err(Error::invalid(
                "imputed rating lies outside the rating scale",
            ));
        }
        let mut seen = BTreeSet::new();
        for &item in &history.items {
            if !self.items.contains(&item) {
                return Err(Error::UnknownItem(item));
            }
            if !seen.insert(item) {
                return Err(Error::invalid("history items must be distinct"));
            }
        }
        let mut out = self.clone();
        out.users.insert(history.user);
        let at = out.interactions.partition_point(|r| r.user < history.user);
        let rows = seen.into_iter().map(|item| Interaction {
            user: history.user,
            item,
            rating: history.imputed_rating,
            timestamp: 0,
        });
        out.interactions.splice(at..at, rows);
        Ok(out)
    }

    /// Returns a copy without the `(user, item)` pairs; users, items and
    /// genres are kept even when they lose all interactions.
    pub fn remove_interactions(&self, user: UserId, items: &[ItemId]) -> Result<Self> {
        let drop: BTreeSet<ItemId> = items.iter().copied().collect();
        for &item in &drop {
            if !self.contains(user, item) {
                return Err(Error::MissingInteraction { user, item });
            }
        }
        let mut out = self.clone();
        if !drop.is_empty() {
            out.interactions
                .retain(|r| r.user != user || !drop.contains(&r.item));
        }
        Ok(out)
    }
}

/// Nearest-rank quantile of an ascending slice: the element at 1-based rank
/// `ceil(q * n)`, clamped to `[1, n]`.
fn nearest_rank(sorted: &[usize], quantile: f64) -> usize {
    let n = sorted.len();
    // Guard against products such as 0.9 * 10 landing one ulp above an integer.
    let rank = libm::ceil(quantile * n as f64 - 1e-9) as usize;
    sorted[rank.clamp(1, n) - 1]
}
