//! Baseline explanation scores: embedding cosine similarity (Item-Sim) and
//! genre Jaccard overlap (Genre-Jacc), each averaged over the explaining items.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;

use crate::counterfactual::Explanation;
use crate::linalg::{dot, norm};
use crate::mf::FactorModel;
use crate::{Error, ItemId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum BaselineKind {
    ItemSim,
    GenreJacc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaselineScore {
    pub kind: BaselineKind,
    pub value: f64,
}

impl BaselineScore {
    /// Checks the value against the kind's range (`[-1, 1]` or `[0, 1]`).
    pub fn new(kind: BaselineKind, value: f64) -> Result<Self> {
        let ok = match kind {
            BaselineKind::ItemSim => (-1.0..=1.0).contains(&value),
            BaselineKind::GenreJacc => (0.0..=1.0).contains(&value),
        };
        if !ok {
            return Err(Error::Numerical(format!(
                "{kind:?} value {value} out of range"
            )));
        }
        Ok(BaselineScore { kind, value })
    }
}

fn factor(model: &FactorModel, item: ItemId) -> Result<&[f64]> {
    let q = model.item_factor(item).ok_or(Error::UnknownItem(item))?;
    if norm(q) == 0.0 {
        return Err(Error::ZeroNormFactor { item });
    }
    Ok(q)
}

/// Cosine similarity of two items' factor vectors, clamped to `[-1, 1]`
/// against round-off.
pub fn item_cosine(model: &FactorModel, a: ItemId, b: ItemId) -> Result<f64> {
    let qa = factor(model, a)?;
    let qb = factor(model, b)?;
    Ok((dot(qa, qb) / (norm(qa) * norm(qb))).clamp(-1.0, 1.0))
}

/// Mean cosine between each explaining item and the recommended item.
pub fn item_sim(model: &FactorModel, explanation: &Explanation) -> Result<f64> {
    mean_over(explanation, |e| {
        item_cosine(model, e, explanation.recommended_item)
    })
    .and_then(|v| BaselineScore::new(BaselineKind::ItemSim, v))
    .map(|s| s.value)
}

/// Jaccard index of two items' genre sets; two empty sets score 0.
pub fn genre_jaccard(
    genres: &BTreeMap<ItemId, BTreeSet<String>>,
    a: ItemId,
    b: ItemId,
) -> Result<f64> {
    let ga = genres.get(&a).ok_or(Error::MissingGenres { item: a })?;
    let gb = genres.get(&b).ok_or(Error::MissingGenres { item: b })?;
    let union = ga.union(gb).count();
    if union == 0 {
        return Ok(0.0);
    }
    Ok(ga.intersection(gb).count() as f64 / union as f64)
}

/// Mean genre Jaccard between each explaining item and the recommended item.
pub fn genre_jacc(
    genres: &BTreeMap<ItemId, BTreeSet<String>>,
    explanation: &Explanation,
) -> Result<f64> {
    mean_over(explanation, |e| {
        genre_jaccard(genres, e, explanation.recommended_item)
    })
    .and_then(|v| BaselineScore::new(BaselineKind::GenreJacc, v))
    .map(|s| s.value)
}

fn mean_over(explanation: &Explanation, mut f: impl FnMut(ItemId) -> Result<f64>) -> Result<f64> {
    let items = explanation.items();
    if items.is_empty() {
        return Err(Error::InvalidExplanation(
            "baseline scores need a nonempty explanation".into(),
        ));
    }
    let mut sum = 0.0;
    for &e in items {
        sum += f(e)?;
    }
    Ok(sum / items.len() as f64)
}
