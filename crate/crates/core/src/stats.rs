//! Pearson / Spearman correlation, one-feature OLS with a held-out split, and
//! the one-tailed paired t-test with an in-house Student-t CDF.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    libm::sqrt(ss / (xs.len() - 1) as f64)
}

fn check_pair(xs: &[f64], ys: &[f64], min_len: usize) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < min_len {
        return Err(Error::invalid(format!(
            "need at least {min_len} observations, got {}",
            xs.len()
        )));
    }
    if !xs.iter().chain(ys).all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite observation".into()));
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys, 2)?;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("correlation undefined: zero variance"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys, 2)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
}

impl OlsFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Closed-form least squares line through `(xs, ys)`.
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> Result<OlsFit> {
    check_pair(xs, ys, 2)?;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        return Err(Error::invalid(
            "regression undefined: training scores have zero variance",
        ));
    }
    let slope = sxy / sxx;
    Ok(OlsFit {
        slope,
        intercept: my - slope * mx,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OlsEval {
    pub slope: f64,
    pub intercept: f64,
    pub test_mse: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Shuffles `pairs` with `seed`, fits OLS on the first
/// `round(train_fraction * n)` points and reports MSE on the rest.
pub fn ols_fit_eval(pairs: &[(f64, f64)], train_fraction: f64, seed: u64) -> Result<OlsEval> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(
            "train fraction must lie strictly between 0 and 1",
        ));
    }
    let n = pairs.len();
    let n_train = libm::round(train_fraction * n as f64) as usize;
    if n_train < 2 || n_train >= n {
        return Err(Error::invalid(format!(
            "{n} observations give {n_train} training points; need >= 2 and a nonempty test part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, test) = order.split_at(n_train);
    let xs: Vec<f64> = train.iter().map(|&k| pairs[k].0).collect();
    let ys: Vec<f64> = train.iter().map(|&k| pairs[k].1).collect();
    let fit = ols_fit(&xs, &ys)?;
    let mse = test
        .iter()
        .map(|&k| {
            let e = pairs[k].1 - fit.predict(pairs[k].0);
            e * e
        })
        .sum::<f64>()
        / test.len() as f64;
    if !mse.is_finite() {
        return Err(Error::Numerical("non-finite test MSE".into()));
    }
    Ok(OlsEval {
        slope: fit.slope,
        intercept: fit.intercept,
        test_mse: mse,
        n_train,
        n_test: test.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairedTTest {
    pub t: f64,
    /// Upper-tail p-value, `P(T >= t)` for H1: mean(a) > mean(b).
    pub p: f64,
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub sd_a: f64,
    pub sd_b: f64,
}

/// One-tailed (upper tail) paired t-test of `a` against `b`.
pub fn paired_ttest_upper(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    check_pair(a, b, 2)?;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let sd = sample_sd(&diffs);
    if sd == 0.0 {
        return Err(Error::invalid(
            "t statistic undefined: paired differences have zero variance",
        ));
    }
    let t = mean(&diffs) / (sd / libm::sqrt(n as f64));
    let df = (n - 1) as f64;
    Ok(PairedTTest {
        t,
        p: student_t_sf(t, df)?,
        n,
        mean_a: mean(a),
        mean_b: mean(b),
        sd_a: sample_sd(a),
        sd_b: sample_sd(b),
    })
}

/// Student-t cumulative distribution function.
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    student_t_sf(-t, df)
}

/// Student-t survival function `P(T > t)`, computed without cancellation for
/// either sign of `t`.
pub fn student_t_sf(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) || !df.is_finite() || t.is_nan() {
        return Err(Error::invalid(
            "Student t needs df > 0 and a non-NaN statistic",
        ));
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 0.0 } else { 1.0 });
    }
    let x = df / (df + t * t);
    let half_tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x)?;
    Ok(if t > 0.0 { half_tail } else { 1.0 - half_tail })
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(
            "incomplete beta needs a, b > 0 and x in [0, 1]",
        ));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_continued_fraction(a, b, x)? / a)
    } else {
        Ok(1.0 - front * beta_continued_fraction(b, a, 1.0 - x)? / b)
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> Result<f64> {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let clamp = |v: f64| if libm::fabs(v) < TINY { TINY } else { v };
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 / clamp(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / clamp(1.0 + aa * d);
        c = clamp(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / clamp(1.0 + aa * d);
        c = clamp(1.0 + aa / c);
        let delta = d * c;
        h *= delta;
        if libm::fabs(delta - 1.0) < EPS {
            return Ok(h);
        }
    }
    Err(Error::Numerical(
        "incomplete beta continued fraction did not converge".into(),
    ))
}
