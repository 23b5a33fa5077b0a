//! Small statistical helpers shared by the engine and its test oracles:
//! Poisson/binomial log-pmfs, goodness-of-fit p-values and sample summaries.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// `log P[Po(mean) = k]`; a zero mean puts all mass on `k = 0`.
pub fn poisson_ln_pmf(k: u64, mean: f64) -> f64 {
    if mean <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - ln_factorial(k)
}

/// `log P[Bi(n, p) = k]`.
pub fn binomial_ln_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if p <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
        + k as f64 * p.ln()
        + (n - k) as f64 * (-p).ln_1p()
}

/// `P[Po(mean) ≥ n]` by summing the pmf upward from `n` in log space.
pub fn poisson_upper_tail(n: u64, mean: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if mean <= 0.0 {
        return 0.0;
    }
    let mut k = n;
    let mut term = poisson_ln_pmf(k, mean).exp();
    let mut sum = 0.0;
    loop {
        sum += term;
        k += 1;
        term *= mean / k as f64;
        if (k as f64 > mean && term < 1e-18 * sum) || term == 0.0 && k as f64 > mean {
            break;
        }
        if k > n + 10_000_000 {
            break;
        }
    }
    sum
}

/// One-sample Kolmogorov–Smirnov test against a continuous cdf.
///
/// Sorts `xs` in place and returns the asymptotic p-value with Stephens'
/// small-sample correction.
pub fn ks_test<F: Fn(f64) -> f64>(xs: &mut [f64], cdf: F) -> f64 {
    let n = xs.len();
    if n == 0 {
        return 1.0;
    }
    let d = ks_statistic(xs, cdf);
    ks_p_value(d, n)
}

pub fn ks_statistic<F: Fn(f64) -> f64>(xs: &mut [f64], cdf: F) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Result of a pooled chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Chi-square test of integer-valued samples against a pmf on `0..`.
///
/// `observed[k]` counts samples equal to `k`; `probs[k]` is the model
/// probability of `k`. Any mass beyond `probs` is folded into the last
/// cell. Adjacent cells are pooled until each expects at least
/// `min_expected` samples.
pub fn chi_square_pmf(observed: &[u64], probs: &[f64], min_expected: f64) -> ChiSquare {
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let len = observed.len().max(probs.len());
    let get_obs = |k: usize| observed.get(k).copied().unwrap_or(0) as f64;
    let get_p = |k: usize| probs.get(k).copied().unwrap_or(0.0);
    let covered: f64 = probs.iter().sum();

    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for k in 0..len {
        o += get_obs(k);
        e += n * get_p(k);
        if e >= min_expected {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    e += n * (1.0 - covered).max(0.0);
    if o > 0.0 || e > 0.0 {
        if e >= min_expected || cells.is_empty() {
            cells.push((o, e));
        } else if let Some(last) = cells.last_mut() {
            last.0 += o;
            last.1 += e;
        }
    }
    let statistic: f64 = cells
        .iter()
        .filter(|c| c.1 > 0.0)
        .map(|&(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = cells.len().saturating_sub(1).max(1);
    let p_value = ChiSquared::new(df as f64)
        .map(|c| 1.0 - c.cdf(statistic))
        .unwrap_or(f64::NAN);
    ChiSquare {
        statistic,
        df,
        p_value,
    }
}

/// Chi-square test that `counts` are draws from equally likely bins.
pub fn chi_square_uniform(counts: &[u64]) -> ChiSquare {
    let k = counts.len();
    let probs = vec![1.0 / k as f64; k];
    chi_square_pmf(counts, &probs, 0.0)
}

/// Sample mean and standard deviation with divisor `n`.
pub fn mean_sd_population(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean, unbiased variance and standard error of the mean.
pub fn mean_var_se(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma_lr;

    #[test]
    fn poisson_tail_matches_regularized_gamma() {
        for (n, mean) in [(1u64, 0.5), (31, 30.0), (60, 30.0), (5, 12.0), (200, 150.0)] {
            let direct = poisson_upper_tail(n, mean);
            let oracle = gamma_lr(n as f64, mean);
            assert!((direct - oracle).abs() < 1e-12, "{n} {mean}: {direct} {oracle}");
        }
        assert_eq!(poisson_upper_tail(0, 3.0), 1.0);
    }

    #[test]
    fn binomial_pmf_sums_to_one() {
        let s: f64 = (0..=40).map(|k| binomial_ln_pmf(k, 40, 0.3).exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_uniform_grid_is_accepted() {
        let mut xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_test(&mut xs, |x| x) > 0.99);
        let mut bad: Vec<f64> = (0..1000).map(|i| ((i as f64 + 0.5) / 1000.0).powi(2)).collect();
        assert!(ks_test(&mut bad, |x| x) < 1e-6);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let probs = [0.25, 0.5, 0.25];
        let r = chi_square_pmf(&[250, 500, 250], &probs, 5.0);
        assert!(r.statistic.abs() < 1e-12);
        assert!(r.p_value > 0.99);
        let r = chi_square_pmf(&[400, 300, 300], &probs, 5.0);
        assert!(r.p_value < 1e-6);
    }
}
