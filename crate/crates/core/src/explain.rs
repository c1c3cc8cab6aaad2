//! Explanation candidates and the high / closest-to-mean / low selection.
//!
//! Counterfactual scores are computed per candidate subset, so their
//! selection picks whole subsets ([`select_triple`]). The baselines are
//! computed per history item and the selection groups the top, bottom or
//! nearest-to-mean items ([`select_baseline_items`]).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use crate::counterfactual::Explanation;
use crate::{Error, ItemId, Result, UserId};

/// The four evaluation scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ScoreKind {
    Cf,
    CfApprox,
    ItemSim,
    GenreJacc,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [
        ScoreKind::Cf,
        ScoreKind::CfApprox,
        ScoreKind::ItemSim,
        ScoreKind::GenreJacc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Cf => "cf",
            ScoreKind::CfApprox => "cf-approx",
            ScoreKind::ItemSim => "item-sim",
            ScoreKind::GenreJacc => "genre-jacc",
        }
    }

    /// Whether the score is defined on whole subsets rather than per item.
    pub fn is_counterfactual(self) -> bool {
        matches!(self, ScoreKind::Cf | ScoreKind::CfApprox)
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown score kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Level {
    High,
    Mean,
    Low,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::High, Level::Mean, Level::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::High => "high",
            Level::Mean => "mean",
            Level::Low => "low",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Level::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown level `{s}`")))
    }
}

/// All `k`-subsets of one user's history, lexicographic in item id.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub user: UserId,
    pub recommended_item: ItemId,
    pub k: usize,
    pub candidates: Vec<Explanation>,
}

/// `n choose k` (saturating).
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, j| {
        acc.saturating_mul((n - j) as u64) / (j as u64 + 1)
    })
}

/// Index combinations of `0..n` choose `k` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Combinations {
    Combinations {
        n,
        idx: if k <= n { Some((0..k).collect()) } else { None },
    }
}

pub struct Combinations {
    n: usize,
    idx: Option<Vec<usize>>,
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.idx.clone()?;
        let k = current.len();
        let idx = self.idx.as_mut().expect("checked above");
        // Rightmost position that can still advance.
        match (0..k).rev().find(|&p| idx[p] < self.n - k + p) {
            Some(p) => {
                idx[p] += 1;
                for q in p + 1..k {
                    idx[q] = idx[q - 1] + 1;
                }
            }
            None => self.idx = None,
        }
        Some(current)
    }
}

pub fn enumerate_candidates(
    user: UserId,
    history: &[ItemId],
    recommended_item: ItemId,
    k: usize,
) -> Result<CandidateSet> {
    let mut items = history.to_vec();
    items.sort_unstable();
    items.dedup();
    if items.len() != history.len() {
        return Err(Error::invalid("history lists an item twice"));
    }
    if k == 0 || k > items.len() {
        return Err(Error::invalid(format!(
            "explanation size {k} must lie in 1..={}",
            items.len()
        )));
    }
    let candidates = combinations(items.len(), k)
        .map(|c| Explanation::new(user, recommended_item, c.into_iter().map(|j| items[j])))
        .collect();
    Ok(CandidateSet {
        user,
        recommended_item,
        k,
        candidates,
    })
}

/// The explanations chosen at the three levels of one score.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTriple {
    pub score_kind: ScoreKind,
    pub high: Explanation,
    pub mean: Explanation,
    pub low: Explanation,
    /// Scores of `high`, `mean` and `low`, in that order.
    pub scores: [f64; 3],
}

impl SelectionTriple {
    pub fn get(&self, level: Level) -> (&Explanation, f64) {
        match level {
            Level::High => (&self.high, self.scores[0]),
            Level::Mean => (&self.mean, self.scores[1]),
            Level::Low => (&self.low, self.scores[2]),
        }
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Picks the highest, closest-to-mean and lowest scored candidates. Every tie
/// goes to the lexicographically smallest item tuple.
pub fn select_triple(
    score_kind: ScoreKind,
    scored: &[(Explanation, f64)],
) -> Result<SelectionTriple> {
    if scored.is_empty() {
        return Err(Error::invalid("cannot select from an empty candidate list"));
    }
    if !scored.iter().all(|(_, s)| s.is_finite()) {
        return Err(Error::Numerical("non-finite candidate score".into()));
    }
    // Canonical order makes the mean, and so the selection, permutation invariant.
    let mut sorted: Vec<&(Explanation, f64)> = scored.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mean = mean_of(sorted.iter().map(|e| e.1));

    let pick = |better: &dyn Fn(f64, f64) -> bool| -> &(Explanation, f64) {
        let mut best = sorted[0];
        for &e in &sorted[1..] {
            if better(e.1, best.1) {
                best = e;
            }
        }
        best
    };
    let high = pick(&|a, b| a > b);
    let low = pick(&|a, b| a < b);
    let near = pick(&|a, b| libm::fabs(a - mean) < libm::fabs(b - mean));
    Ok(SelectionTriple {
        score_kind,
        high: high.0.clone(),
        mean: near.0.clone(),
        low: low.0.clone(),
        scores: [high.1, near.1, low.1],
    })
}

/// Chooses `k` history items by per-item score: the top `k` (`High`), the
/// bottom `k` (`Low`) or the `k` nearest the per-item mean (`Mean`); ties by
/// ascending item id.
pub fn select_baseline_items(
    user: UserId,
    recommended_item: ItemId,
    history: &[ItemId],
    per_item_scores: &BTreeMap<ItemId, f64>,
    k: usize,
    level: Level,
) -> Result<Explanation> {
    if k == 0 || k > history.len() {
        return Err(Error::invalid(format!(
            "explanation size {k} must lie in 1..={}",
            history.len()
        )));
    }
    let mut scored: Vec<(ItemId, f64)> = Vec::with_capacity(history.len());
    for &item in history {
        let s = *per_item_scores
            .get(&item)
            .ok_or_else(|| Error::invalid(format!("no baseline score for {item}")))?;
        if !s.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite baseline score for {item}"
            )));
        }
        scored.push((item, s));
    }
    scored.sort_by_key(|e| e.0);
    let mean = mean_of(scored.iter().map(|e| e.1));
    let key = |e: &(ItemId, f64)| match level {
        Level::High => -e.1,
        Level::Low => e.1,
        Level::Mean => libm::fabs(e.1 - mean),
    };
    scored.sort_by(|a, b| {
        key(a)
            .partial_cmp(&key(b))
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    Ok(Explanation::new(
        user,
        recommended_item,
        scored[..k].iter().map(|e| e.0),
    ))
}

/// [`select_baseline_items`] at all three levels; each subset's score is the
/// mean of its items' scores.
pub fn select_baseline_triple(
    score_kind: ScoreKind,
    user: UserId,
    recommended_item: ItemId,
    history: &[ItemId],
    per_item_scores: &BTreeMap<ItemId, f64>,
    k: usize,
) -> Result<SelectionTriple> {
    let pick = |level| -> Result<(Explanation, f64)> {
        let e = select_baseline_items(user, recommended_item, history, per_item_scores, k, level)?;
        let s = mean_of(e.items().iter().map(|i| per_item_scores[i]));
        Ok((e, s))
    };
    let (high, sh) = pick(Level::High)?;
    let (mean, sm) = pick(Level::Mean)?;
    let (low, sl) = pick(Level::Low)?;
    Ok(SelectionTriple {
        score_kind,
        high,
        mean,
        low,
        scores: [sh, sm, sl],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn ids(xs: &[u32]) -> Vec<ItemId> {
        xs.iter().map(|&x| ItemId(x)).collect()
    }

    #[test]
    fn nine_choose_three_is_84() {
        let hist = ids(&[5, 1, 9, 2, 8, 3, 7, 4, 6]);
        let set = enumerate_candidates(UserId(1), &hist, ItemId(100), 3).unwrap();
        assert_eq!(set.candidates.len(), 84);
        assert_eq!(binomial(9, 3), 84);
        assert_eq!(set.candidates[0].items(), &ids(&[1, 2, 3])[..]);
        assert_eq!(set.candidates[83].items(), &ids(&[7, 8, 9])[..]);
        assert!(set.candidates.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn full_and_singleton_subsets() {
        let hist = ids(&[3, 1, 2]);
        let full = enumerate_candidates(UserId(1), &hist, ItemId(9), 3).unwrap();
        assert_eq!(full.candidates.len(), 1);
        assert_eq!(full.candidates[0].items(), &ids(&[1, 2, 3])[..]);
        let single = enumerate_candidates(UserId(1), &hist, ItemId(9), 1).unwrap();
        assert_eq!(single.candidates.len(), 3);
        assert!(enumerate_candidates(UserId(1), &hist, ItemId(9), 4).is_err());
    }

    fn ex(items: &[u32]) -> Explanation {
        Explanation::new(UserId(1), ItemId(99), ids(items))
    }

    #[test]
    fn triple_from_three_scores() {
        let scored = vec![(ex(&[1, 2]), 0.9), (ex(&[1, 3]), 0.1), (ex(&[2, 3]), 0.5)];
        let t = select_triple(ScoreKind::Cf, &scored).unwrap();
        assert_eq!(t.high, ex(&[1, 2]));
        assert_eq!(t.low, ex(&[1, 3]));
        assert_eq!(t.mean, ex(&[2, 3]));
        assert_eq!(t.scores, [0.9, 0.5, 0.1]);
    }

    #[test]
    fn triple_ties_collapse_to_smallest() {
        let scored = vec![(ex(&[2, 3]), 0.4), (ex(&[1, 3]), 0.4), (ex(&[1, 2]), 0.4)];
        let t = select_triple(ScoreKind::Cf, &scored).unwrap();
        assert_eq!(
            (&t.high, &t.mean, &t.low),
            (&ex(&[1, 2]), &ex(&[1, 2]), &ex(&[1, 2]))
        );
        // 0.0 and 1.0 are equidistant from the mean 0.5
        let scored = vec![(ex(&[2, 3]), 1.0), (ex(&[1, 3]), 0.0)];
        assert_eq!(
            select_triple(ScoreKind::Cf, &scored).unwrap().mean,
            ex(&[1, 3])
        );
        assert!(select_triple(ScoreKind::Cf, &[]).is_err());
    }

    #[test]
    fn baseline_levels_on_one_to_nine() {
        let hist = ids(&[1, 2, 3, 4, 5, 6, 7, 8, 9]);
        let scores: BTreeMap<ItemId, f64> = hist.iter().map(|i| (*i, i.0 as f64)).collect();
        let pick =
            |level| select_baseline_items(UserId(1), ItemId(50), &hist, &scores, 3, level).unwrap();
        assert_eq!(pick(Level::High).items(), &ids(&[7, 8, 9])[..]);
        assert_eq!(pick(Level::Low).items(), &ids(&[1, 2, 3])[..]);
        // mean 5: distances 0 (5), 1 (4, 6)
        assert_eq!(pick(Level::Mean).items(), &ids(&[4, 5, 6])[..]);
        let all =
            select_baseline_items(UserId(1), ItemId(50), &hist, &scores, 9, Level::Low).unwrap();
        assert_eq!(all.items(), &hist[..]);
        let mut missing = scores.clone();
        missing.remove(&ItemId(4));
        assert!(
            select_baseline_items(UserId(1), ItemId(50), &hist, &missing, 3, Level::High).is_err()
        );
    }

    #[test]
    fn baseline_triple_is_ordered() {
        let hist = ids(&[10, 20, 30, 40, 50]);
        let scores: BTreeMap<ItemId, f64> = hist
            .iter()
            .zip([0.2, -0.5, 0.9, 0.1, 0.4])
            .map(|(i, s)| (*i, s))
            .collect();
        let t = select_baseline_triple(ScoreKind::ItemSim, UserId(1), ItemId(7), &hist, &scores, 2)
            .unwrap();
        assert!(t.scores[0] >= t.scores[1] && t.scores[1] >= t.scores[2]);
    }

    proptest! {
        #[test]
        fn candidate_count_is_binomial(n in 1usize..10, k in 1usize..10) {
            prop_assume!(k <= n);
            let hist: Vec<ItemId> = (0..n as u32).map(ItemId).collect();
            let set = enumerate_candidates(UserId(1), &hist, ItemId(99), k).unwrap();
            prop_assert_eq!(set.candidates.len() as u64, binomial(n, k));
            let mut dedup = set.candidates.clone();
            dedup.dedup();
            prop_assert_eq!(dedup.len(), set.candidates.len());
        }

        #[test]
        fn triple_is_permutation_invariant(
            scores in proptest::collection::vec(-1.0f64..1.0, 1..20),
            seed in any::<u64>(),
        ) {
            let hist: Vec<ItemId> = (0..7).map(ItemId).collect();
            let cands = enumerate_candidates(UserId(1), &hist, ItemId(99), 3).unwrap().candidates;
            let scored: Vec<(Explanation, f64)> = cands.into_iter().zip(scores).collect();
            let mut shuffled = scored.clone();
            let n = shuffled.len();
            let mut s = seed;
            for j in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(j, (s >> 33) as usize % (j + 1));
            }
            let a = select_triple(ScoreKind::Cf, &scored).unwrap();
            let b = select_triple(ScoreKind::Cf, &shuffled).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.scores[0] >= a.scores[1] && a.scores[1] >= a.scores[2]);
        }
    }
}
