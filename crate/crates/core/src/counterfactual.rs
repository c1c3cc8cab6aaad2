//! Counterfactual Proximity: how close removing an explanation's items from
//! the training data comes to displacing the recommended item from top-1.
//!
//! A counterfactual model is obtained either by retraining from scratch on the
//! reduced data ([`FullRetrain`]) or by warm-starting from the base model and
//! re-solving only the target user's factor ([`WarmStartFinetune`]). Scoring is
//! the same for both: min-max normalize the counterfactual scores over the
//! items still recommendable to the user plus the removed items, then subtract
//! the recommended item's normalized score from the best other item's.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::dataset::InteractionDataset;
use crate::mf::{
    fold_in_user, normalize_scores, train_with_trace, FactorModel, TrainConfig, TrainTrace,
};
use crate::{Error, ItemId, Result, UserId};

/// An item-based explanation: the subset of `user`'s history offered as the
/// reason for recommending `recommended_item`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Explanation {
    // Field order matters: the derived ordering compares item tuples first.
    items: Vec<ItemId>,
    pub user: UserId,
    pub recommended_item: ItemId,
}

impl Explanation {
    pub fn new(
        user: UserId,
        recommended_item: ItemId,
        items: impl IntoIterator<Item = ItemId>,
    ) -> Self {
        let mut items: Vec<ItemId> = items.into_iter().collect();
        items.sort_unstable();
        items.dedup();
        Explanation {
            items,
            user,
            recommended_item,
        }
    }

    /// Explaining items in ascending id order.
    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    /// Checks `items ⊆ I_u^+` and `recommended_item ∉ I_u^+`.
    pub fn validate(&self, dataset: &InteractionDataset) -> Result<()> {
        if !dataset.users().contains(&self.user) {
            return Err(Error::UnknownUser(self.user));
        }
        if !dataset.items().contains(&self.recommended_item) {
            return Err(Error::UnknownItem(self.recommended_item));
        }
        let history = dataset.user_items(self.user);
        if history.contains(&self.recommended_item) {
            return Err(Error::InvalidExplanation(format!(
                "recommended {} is already in the history of {}",
                self.recommended_item, self.user
            )));
        }
        if let Some(item) = self.items.iter().find(|i| !history.contains(i)) {
            return Err(Error::InvalidExplanation(format!(
                "{item} is not in the history of {}",
                self.user
            )));
        }
        Ok(())
    }
}

/// How the counterfactual model is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Strategy {
    FullRetrain,
    WarmStartFinetune,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::FullRetrain => "full-retrain",
            Strategy::WarmStartFinetune => "warm-start-finetune",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full-retrain" => Ok(Strategy::FullRetrain),
            "warm-start-finetune" => Ok(Strategy::WarmStartFinetune),
            other => Err(Error::invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

/// A counterfactual model plus, for retrains, its objective trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualModel {
    pub model: FactorModel,
    pub trace: Option<TrainTrace>,
}

/// Source of counterfactual models. Alternative approximations (influence
/// functions, unlearning methods) plug in here.
pub trait CounterfactualProvider {
    fn strategy(&self) -> Strategy;

    fn counterfactual_model(
        &self,
        dataset: &InteractionDataset,
        base: &FactorModel,
        explanation: &Explanation,
    ) -> Result<CounterfactualModel>;
}

/// Retrains from scratch with the base model's configuration and seed.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullRetrain;

/// Keeps item factors frozen and re-solves only the target user's factor.
#[derive(Debug, Clone, Copy)]
pub struct WarmStartFinetune {
    pub iterations: usize,
}

impl Default for WarmStartFinetune {
    fn default() -> Self {
        WarmStartFinetune { iterations: 5 }
    }
}

impl CounterfactualProvider for FullRetrain {
    fn strategy(&self) -> Strategy {
        Strategy::FullRetrain
    }

    fn counterfactual_model(
        &self,
        dataset: &InteractionDataset,
        base: &FactorModel,
        explanation: &Explanation,
    ) -> Result<CounterfactualModel> {
        let (model, trace) = cf_retrain_with_trace(dataset, base.config(), explanation)?;
        Ok(CounterfactualModel {
            model,
            trace: Some(trace),
        })
    }
}

impl CounterfactualProvider for WarmStartFinetune {
    fn strategy(&self) -> Strategy {
        Strategy::WarmStartFinetune
    }

    fn counterfactual_model(
        &self,
        dataset: &InteractionDataset,
        base: &FactorModel,
        explanation: &Explanation,
    ) -> Result<CounterfactualModel> {
        Ok(CounterfactualModel {
            model: cf_finetune(base, dataset, explanation, self.iterations)?,
            trace: None,
        })
    }
}

/// Trains on the dataset with `user x items` removed, using `config` unchanged.
pub fn cf_retrain(
    dataset: &InteractionDataset,
    config: &TrainConfig,
    explanation: &Explanation,
) -> Result<FactorModel> {
    cf_retrain_with_trace(dataset, config, explanation).map(|(m, _)| m)
}

pub fn cf_retrain_with_trace(
    dataset: &InteractionDataset,
    config: &TrainConfig,
    explanation: &Explanation,
) -> Result<(FactorModel, TrainTrace)> {
    explanation.validate(dataset)?;
    let reduced = dataset.remove_interactions(explanation.user, explanation.items())?;
    train_with_trace(&reduced, config)
}

/// Warm-start finetune: the first half of ALS (user side only) on the reduced
/// data, run `iterations` times. Since item factors stay frozen and other
/// users lose no data, only the target user's factor can change; with no
/// remaining interactions it becomes the zero vector.
pub fn cf_finetune(
    base: &FactorModel,
    dataset: &InteractionDataset,
    explanation: &Explanation,
    iterations: usize,
) -> Result<FactorModel> {
    if iterations == 0 {
        return Err(Error::invalid("finetune needs at least one iteration"));
    }
    let user = explanation.user;
    if base.user_factor(user).is_none() {
        return Err(Error::UnknownUser(user));
    }
    explanation.validate(dataset)?;
    let remaining: Vec<(ItemId, f64)> = dataset
        .user_history(user)
        .iter()
        .filter(|r| explanation.items().binary_search(&r.item).is_err())
        .map(|r| (r.item, r.rating))
        .collect();
    let lambda = base.config().regularization;
    let mut model = base.clone();
    if remaining.is_empty() {
        return model.with_user_factor(user, &vec![0.0; base.dim()]);
    }
    for _ in 0..iterations {
        let factor = fold_in_user(&model, &remaining, lambda)?;
        model = model.with_user_factor(user, &factor)?;
    }
    Ok(model)
}

/// Items the user has not interacted with (`I_u^-`), ascending.
pub fn recommendable_items(dataset: &InteractionDataset, user: UserId) -> Vec<ItemId> {
    let history = dataset.user_items(user);
    dataset
        .items()
        .iter()
        .filter(|i| !history.contains(i))
        .copied()
        .collect()
}

/// Top-1 item for `user` over `I_u^-`, ties to the smaller id.
pub fn recommend(
    dataset: &InteractionDataset,
    model: &FactorModel,
    user: UserId,
) -> Result<ItemId> {
    let candidates = recommendable_items(dataset, user);
    Ok(model.rank(user, &candidates)?[0].0)
}

/// Outcome of scoring one explanation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CfResult {
    /// Normalized benchmark score minus normalized recommended score, in `[-1, 1]`.
    pub score: f64,
    /// `score > 0`: the recommended item is strictly beaten by another item.
    pub qualitative: bool,
    pub benchmark_item: ItemId,
    pub strategy: Strategy,
}

/// Candidate sets and normalized counterfactual scores for one explanation.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualContext {
    explanation: Explanation,
    base_candidates: Vec<ItemId>,
    cf_candidates: Vec<ItemId>,
    normalized: Vec<f64>,
    cf_model: FactorModel,
}

impl CounterfactualContext {
    /// `dataset` is the original (unreduced) training data.
    pub fn new(
        dataset: &InteractionDataset,
        explanation: &Explanation,
        cf_model: FactorModel,
    ) -> Result<Self> {
        explanation.validate(dataset)?;
        let base_candidates = recommendable_items(dataset, explanation.user);
        let mut cf_candidates = base_candidates.clone();
        cf_candidates.extend_from_slice(explanation.items());
        cf_candidates.sort_unstable();
        if cf_candidates
            .binary_search(&explanation.recommended_item)
            .is_err()
        {
            return Err(Error::Numerical(format!(
                "invariant violated: {} missing from the counterfactual candidates",
                explanation.recommended_item
            )));
        }
        if cf_candidates.len() < 2 {
            return Err(Error::InvalidExplanation(
                "no benchmark item: the counterfactual candidate set has a single item".into(),
            ));
        }
        let raw = cf_model.scores(explanation.user, &cf_candidates)?;
        let normalized = normalize_scores(&raw)?;
        Ok(CounterfactualContext {
            explanation: explanation.clone(),
            base_candidates,
            cf_candidates,
            normalized,
            cf_model,
        })
    }

    pub fn explanation(&self) -> &Explanation {
        &self.explanation
    }

    /// `I_u^-`.
    pub fn base_candidates(&self) -> &[ItemId] {
        &self.base_candidates
    }

    /// `I_u^- ∪ E`.
    pub fn cf_candidates(&self) -> &[ItemId] {
        &self.cf_candidates
    }

    pub fn cf_model(&self) -> &FactorModel {
        &self.cf_model
    }

    pub fn normalized_scores(&self) -> BTreeMap<ItemId, f64> {
        self.cf_candidates
            .iter()
            .copied()
            .zip(self.normalized.iter().copied())
            .collect()
    }

    fn position(&self, item: ItemId) -> Result<usize> {
        self.cf_candidates
            .binary_search(&item)
            .map_err(|_| Error::invalid(format!("{item} is not a counterfactual candidate")))
    }

    /// Highest normalized score among candidates other than `excluded`;
    /// ties go to the smaller id because candidates are scanned in id order.
    fn best_excluding(&self, excluded: Option<usize>) -> usize {
        let mut best: Option<usize> = None;
        for k in 0..self.cf_candidates.len() {
            if Some(k) == excluded {
                continue;
            }
            match best {
                Some(b) if self.normalized[k] <= self.normalized[b] => {}
                _ => best = Some(k),
            }
        }
        best.expect("at least two candidates")
    }

    /// Whether `item` loses the top-1 position under the counterfactual model
    /// (argmax over `I_u^- ∪ E`, ties to the smaller id).
    pub fn is_qualitatively_counterfactual(&self, item: ItemId) -> Result<bool> {
        let k = self.position(item)?;
        Ok(self.best_excluding(None) != k)
    }

    pub fn score(&self, strategy: Strategy) -> Result<CfResult> {
        let k = self.position(self.explanation.recommended_item)?;
        let b = self.best_excluding(Some(k));
        let score = self.normalized[b] - self.normalized[k];
        Ok(CfResult {
            score,
            qualitative: score > 0.0,
            benchmark_item: self.cf_candidates[b],
            strategy,
        })
    }
}

/// Whether `item` is displaced from the top-1 position (ties to the smaller id).
pub fn cf_qualitative(context: &CounterfactualContext, item: ItemId) -> Result<bool> {
    context.is_qualitatively_counterfactual(item)
}

/// Result of [`cf_evaluate`]: the score, the context it came from and the
/// retrain trace when there was one.
#[derive(Debug, Clone)]
pub struct CfOutcome {
    pub result: CfResult,
    pub context: CounterfactualContext,
    pub trace: Option<TrainTrace>,
}

/// Scores `explanation` against `base`, which must currently recommend
/// `explanation.recommended_item` to the user.
pub fn cf_evaluate(
    dataset: &InteractionDataset,
    base: &FactorModel,
    explanation: &Explanation,
    provider: &dyn CounterfactualProvider,
) -> Result<CfOutcome> {
    explanation.validate(dataset)?;
    let top = recommend(dataset, base, explanation.user)?;
    if top != explanation.recommended_item {
        return Err(Error::InvalidExplanation(format!(
            "base model recommends {top}, not {}",
            explanation.recommended_item
        )));
    }
    let cf = provider.counterfactual_model(dataset, base, explanation)?;
    let context = CounterfactualContext::new(dataset, explanation, cf.model)?;
    let result = context.score(provider.strategy())?;
    Ok(CfOutcome {
        result,
        context,
        trace: cf.trace,
    })
}

pub fn cf_score(
    dataset: &InteractionDataset,
    base: &FactorModel,
    explanation: &Explanation,
    provider: &dyn CounterfactualProvider,
) -> Result<CfResult> {
    cf_evaluate(dataset, base, explanation, provider).map(|o| o.result)
}
