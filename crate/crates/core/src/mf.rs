//! Plain matrix factorization (no biases) trained by alternating least squares.
//!
//! The objective is
//! `sum over (u, i, r) of (r - p_u . q_i)^2 + lambda * (sum_u |p_u|^2 + sum_i |q_i|^2)`.
//! Every half-sweep solves each row of one side exactly by a ridge regression
//! against the other side's fixed factors, so the objective never increases.
//! One iteration is an item half-sweep followed by a user half-sweep; ending on
//! the user side leaves every user factor at the exact solve against the final
//! item factors, which is what [`fold_in_user`] reproduces.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::InteractionDataset;
use crate::linalg::{cholesky_solve, dot};
use crate::{Error, ItemId, Result, UserId};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub embedding_dim: usize,
    /// Full ALS sweeps (item half then user half).
    pub iterations: usize,
    pub regularization: f64,
    /// Factors start uniform in `(-init_scale, init_scale)`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embedding_dim: 40,
            iterations: 20,
            regularization: 0.05,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::invalid("embedding_dim must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if !(self.regularization > 0.0) || !self.regularization.is_finite() {
            return Err(Error::invalid(
                "regularization must be a positive finite number",
            ));
        }
        if !(self.init_scale > 0.0) || !self.init_scale.is_finite() {
            return Err(Error::invalid(
                "init_scale must be a positive finite number",
            ));
        }
        Ok(())
    }
}

/// Trained user and item factor matrices, row-major, rows in ascending id
/// order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FactorModel {
    config: TrainConfig,
    users: Vec<UserId>,
    items: Vec<ItemId>,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
}

impl FactorModel {
    /// Assembles a model from raw parts, checking shapes, id order and
    /// finiteness.
    pub fn from_parts(
        config: TrainConfig,
        users: Vec<UserId>,
        items: Vec<ItemId>,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
    ) -> Result<Self> {
        let d = config.embedding_dim;
        if d == 0 {
            return Err(Error::invalid("embedding_dim must be at least 1"));
        }
        if user_factors.len() != users.len() * d || item_factors.len() != items.len() * d {
            return Err(Error::invalid("factor matrix shape does not match ids"));
        }
        if !users.windows(2).all(|w| w[0] < w[1]) || !items.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("ids must be strictly ascending"));
        }
        if !user_factors
            .iter()
            .chain(&item_factors)
            .all(|x| x.is_finite())
        {
            return Err(Error::Numerical("non-finite factor entry".into()));
        }
        Ok(FactorModel {
            config,
            users,
            items,
            user_factors,
            item_factors,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.embedding_dim
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn user_factors(&self) -> &[f64] {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &[f64] {
        &self.item_factors
    }

    pub fn user_factor(&self, user: UserId) -> Option<&[f64]> {
        let d = self.dim();
        let k = self.users.binary_search(&user).ok()?;
        Some(&self.user_factors[k * d..(k + 1) * d])
    }

    pub fn item_factor(&self, item: ItemId) -> Option<&[f64]> {
        let d = self.dim();
        let k = self.items.binary_search(&item).ok()?;
        Some(&self.item_factors[k * d..(k + 1) * d])
    }

    /// Copy of the model with one user's factor replaced.
    pub fn with_user_factor(&self, user: UserId, factor: &[f64]) -> Result<Self> {
        let d = self.dim();
        if factor.len() != d {
            return Err(Error::invalid("factor length differs from embedding_dim"));
        }
        if !factor.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical("non-finite factor entry".into()));
        }
        let k = self
            .users
            .binary_search(&user)
            .map_err(|_| Error::UnknownUser(user))?;
        let mut out = self.clone();
        out.user_factors[k * d..(k + 1) * d].copy_from_slice(factor);
        Ok(out)
    }

    /// `f(u, i) = p_u . q_i`.
    pub fn predict(&self, user: UserId, item: ItemId) -> Result<f64> {
        let p = self.user_factor(user).ok_or(Error::UnknownUser(user))?;
        let q = self.item_factor(item).ok_or(Error::UnknownItem(item))?;
        Ok(dot(p, q))
    }

    /// Raw scores of `candidates` for `user`, in the given order.
    pub fn scores(&self, user: UserId, candidates: &[ItemId]) -> Result<Vec<f64>> {
        let p = self.user_factor(user).ok_or(Error::UnknownUser(user))?;
        candidates
            .iter()
            .map(|&i| {
                let q = self.item_factor(i).ok_or(Error::UnknownItem(i))?;
                Ok(dot(p, q))
            })
            .collect()
    }

    /// Candidates sorted by score descending, ties by ascending item id.
    pub fn rank(&self, user: UserId, candidates: &[ItemId]) -> Result<Vec<(ItemId, f64)>> {
        if candidates.is_empty() {
            return Err(Error::invalid("cannot rank an empty candidate set"));
        }
        let scores = self.scores(user, candidates)?;
        let mut ranked: Vec<(ItemId, f64)> = candidates.iter().copied().zip(scores).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.dedup_by_key(|e| e.0);
        Ok(ranked)
    }

    /// Regularized squared error of the model on `dataset`.
    pub fn objective(&self, dataset: &InteractionDataset) -> Result<f64> {
        let mut loss = 0.0;
        for r in dataset.interactions() {
            let e = r.rating - self.predict(r.user, r.item)?;
            loss += e * e;
        }
        let penalty: f64 = self
            .user_factors
            .iter()
            .chain(&self.item_factors)
            .map(|x| x * x)
            .sum();
        Ok(loss + self.config.regularization * penalty)
    }
}

/// Which side a half-sweep re-solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Side {
    Items,
    Users,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HalfSweep {
    /// 1-based ALS iteration.
    pub iteration: usize,
    pub side: Side,
    pub objective: f64,
}

/// Objective value at initialization and after every half-sweep.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainTrace {
    pub initial: f64,
    pub sweeps: Vec<HalfSweep>,
}

impl TrainTrace {
    /// Largest single-step increase of the objective (<= 0 when monotone).
    pub fn max_increase(&self) -> f64 {
        let mut prev = self.initial;
        let mut worst = f64::NEG_INFINITY;
        for s in &self.sweeps {
            worst = worst.max(s.objective - prev);
            prev = s.objective;
        }
        worst
    }

    /// True when no half-sweep raised the objective.
    pub fn is_non_increasing(&self) -> bool {
        self.sweeps.is_empty() || self.max_increase() <= 0.0
    }

    pub fn final_objective(&self) -> f64 {
        self.sweeps.last().map_or(self.initial, |s| s.objective)
    }
}

/// Trains a factor model on every interaction of `dataset`.
pub fn train(dataset: &InteractionDataset, config: &TrainConfig) -> Result<FactorModel> {
    train_with_trace(dataset, config).map(|(m, _)| m)
}

/// [`train`], also returning the objective after every half-sweep.
pub fn train_with_trace(
    dataset: &InteractionDataset,
    config: &TrainConfig,
) -> Result<(FactorModel, TrainTrace)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = config.embedding_dim;
    let lambda = config.regularization;
    let users: Vec<UserId> = dataset.users().iter().copied().collect();
    let items: Vec<ItemId> = dataset.items().iter().copied().collect();

    let mut by_user: Vec<Vec<(u32, f64)>> = vec![Vec::new(); users.len()];
    let mut by_item: Vec<Vec<(u32, f64)>> = vec![Vec::new(); items.len()];
    for r in dataset.interactions() {
        let u = users
            .binary_search(&r.user)
            .map_err(|_| Error::DanglingInteraction {
                user: r.user,
                item: r.item,
            })?;
        let i = items
            .binary_search(&r.item)
            .map_err(|_| Error::DanglingInteraction {
                user: r.user,
                item: r.item,
            })?;
        by_user[u].push((i as u32, r.rating));
        by_item[i].push((u as u32, r.rating));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let s = config.init_scale;
    let mut user_factors: Vec<f64> = (0..users.len() * d).map(|_| rng.gen_range(-s..s)).collect();
    let mut item_factors: Vec<f64> = (0..items.len() * d).map(|_| rng.gen_range(-s..s)).collect();

    let objective = |uf: &[f64], itf: &[f64]| -> f64 {
        let mut loss = 0.0;
        for (u, row) in by_user.iter().enumerate() {
            let p = &uf[u * d..(u + 1) * d];
            for &(i, r) in row {
                let i = i as usize;
                let e = r - dot(p, &itf[i * d..(i + 1) * d]);
                loss += e * e;
            }
        }
        let penalty: f64 = uf.iter().chain(itf).map(|x| x * x).sum();
        loss + lambda * penalty
    };

    let mut trace = TrainTrace {
        initial: objective(&user_factors, &item_factors),
        sweeps: Vec::with_capacity(2 * config.iterations),
    };
    let mut solver = RowSolver::new(d);
    for iteration in 1..=config.iterations {
        for (i, row) in by_item.iter().enumerate() {
            solver
                .solve(
                    &user_factors,
                    row,
                    lambda,
                    &mut item_factors[i * d..(i + 1) * d],
                )
                .map_err(|_| Error::NonFinite { iteration })?;
        }
        let obj = objective(&user_factors, &item_factors);
        if !obj.is_finite() {
            return Err(Error::NonFinite { iteration });
        }
        trace.sweeps.push(HalfSweep {
            iteration,
            side: Side::Items,
            objective: obj,
        });

        for (u, row) in by_user.iter().enumerate() {
            solver
                .solve(
                    &item_factors,
                    row,
                    lambda,
                    &mut user_factors[u * d..(u + 1) * d],
                )
                .map_err(|_| Error::NonFinite { iteration })?;
        }
        let obj = objective(&user_factors, &item_factors);
        if !obj.is_finite() {
            return Err(Error::NonFinite { iteration });
        }
        trace.sweeps.push(HalfSweep {
            iteration,
            side: Side::Users,
            objective: obj,
        });
    }

    let model = FactorModel::from_parts(*config, users, items, user_factors, item_factors)?;
    Ok((model, trace))
}

/// Closed-form ridge solve of one user factor against the model's fixed item
/// factors: `argmin_p sum (r - p . q_i)^2 + lambda |p|^2`.
///
/// The history is processed in ascending item order, the same order the
/// trainer's user half-sweep uses, so folding in a trained user's own history
/// reproduces their factor exactly.
pub fn fold_in_user(
    model: &FactorModel,
    history: &[(ItemId, f64)],
    lambda: f64,
) -> Result<Vec<f64>> {
    if history.is_empty() {
        return Err(Error::invalid("fold-in needs a nonempty history"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(
            "regularization must be finite and non-negative",
        ));
    }
    let mut rows: Vec<(u32, f64)> = Vec::with_capacity(history.len());
    for &(item, rating) in history {
        let k = model
            .items
            .binary_search(&item)
            .map_err(|_| Error::UnknownItem(item))?;
        if !rating.is_finite() {
            return Err(Error::invalid("non-finite rating in history"));
        }
        rows.push((k as u32, rating));
    }
    rows.sort_by_key(|e| e.0);
    if rows.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid("history lists an item twice"));
    }
    let mut out = vec![0.0; model.dim()];
    RowSolver::new(model.dim()).solve(&model.item_factors, &rows, lambda, &mut out)?;
    Ok(out)
}

/// Min-max rescaling to `[0, 1]`; a constant input maps to 0.5 everywhere.
pub fn normalize_scores(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::invalid("cannot normalize an empty score list"));
    }
    if !scores.iter().all(|s| s.is_finite()) {
        return Err(Error::Numerical("non-finite score".into()));
    }
    let (lo, hi) = min_max(scores);
    if hi == lo {
        return Ok(vec![0.5; scores.len()]);
    }
    let span = hi - lo;
    Ok(scores.iter().map(|s| (s - lo) / span).collect())
}

pub(crate) fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Scratch space for the per-row normal equations.
struct RowSolver {
    dim: usize,
    gram: Vec<f64>,
    rhs: Vec<f64>,
}

impl RowSolver {
    fn new(dim: usize) -> Self {
        RowSolver {
            dim,
            gram: vec![0.0; dim * dim],
            rhs: vec![0.0; dim],
        }
    }

    fn accumulate(&mut self, fixed: &[f64], row: &[(u32, f64)], ridge: f64) {
        let d = self.dim;
        self.gram.fill(0.0);
        self.rhs.fill(0.0);
        for &(j, r) in row {
            let q = &fixed[j as usize * d..(j as usize + 1) * d];
            for a in 0..d {
                let qa = q[a];
                self.rhs[a] += r * qa;
                let g = &mut self.gram[a * d..a * d + a + 1];
                for (gb, qb) in g.iter_mut().zip(q) {
                    *gb += qa * qb;
                }
            }
        }
        for a in 0..d {
            self.gram[a * d + a] += ridge;
        }
    }

    /// Writes the ridge solution for one row into `out`. When the `d x d`
    /// normal equations are singular (only possible with `lambda == 0`) the
    /// dual system `(Q Q^T + lambda I) a = r`, `p = Q^T a` is tried instead;
    /// it yields the minimum-norm least-squares solution whenever the rated
    /// items' factors are linearly independent.
    fn solve(
        &mut self,
        fixed: &[f64],
        row: &[(u32, f64)],
        lambda: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let d = self.dim;
        self.accumulate(fixed, row, lambda);
        if cholesky_solve(&mut self.gram, &mut self.rhs, d).is_ok() {
            if !self.rhs.iter().all(|x| x.is_finite()) {
                return Err(Error::Numerical("non-finite ridge solution".into()));
            }
            out.copy_from_slice(&self.rhs);
            return Ok(());
        }
        let n = row.len();
        let factor = |k: usize| {
            let j = row[k].0 as usize;
            &fixed[j * d..(j + 1) * d]
        };
        let mut gram = vec![0.0; n * n];
        let mut alpha: Vec<f64> = row.iter().map(|e| e.1).collect();
        for a in 0..n {
            for b in 0..=a {
                gram[a * n + b] = dot(factor(a), factor(b));
            }
            gram[a * n + a] += lambda;
        }
        cholesky_solve(&mut gram, &mut alpha, n).map_err(|_| {
            Error::Numerical("normal equations are singular even in dual form".into())
        })?;
        out.fill(0.0);
        for (k, &w) in alpha.iter().enumerate() {
            for (o, q) in out.iter_mut().zip(factor(k)) {
                *o += w * q;
            }
        }
        if !out.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical("non-finite ridge solution".into()));
        }
        Ok(())
    }
}
