//! Monthly counts from quarterly totals.
//!
//! 1. each quarterly total divided by 3 is a monthly-mean anchor placed at
//!    the quarter's centre;
//! 2. a natural cubic smoothing spline through the anchors is evaluated at
//!    every month midpoint;
//! 3. Gaussian noise with the residual standard error of a straight-line fit
//!    to the anchors is added and the result rounded to a non-negative count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::series::{CountSeries, Provenance, QuarterlySeries};
use super::spline::SmoothingSpline;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub series: CountSeries,
    /// Spline values at month midpoints before noise.
    pub smooth: Vec<f64>,
    pub noise_sd: f64,
    pub spline_lambda: f64,
}

/// Residual standard error of the least-squares line through `(x, y)`.
pub fn line_residual_se(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - xm) * (a - xm)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (ym + slope * (a - xm));
            r * r
        })
        .sum();
    (rss / (n - 2.0)).sqrt()
}

pub fn synthesize_monthly(quarterly: &QuarterlySeries, seed: u64) -> Result<Synthesis> {
    let q = quarterly.counts.len();
    if q < 4 {
        return Err(Error::invalid("quarterly", format!("need at least 4 quarters, got {q}")));
    }
    let anchors: Vec<f64> = quarterly.counts.iter().map(|c| c / 3.0).collect();
    let centres: Vec<f64> = (0..q).map(|i| 3.0 * i as f64 + 1.5).collect();
    let spline = SmoothingSpline::fit_gcv(&centres, &anchors)?;
    let noise_sd = line_residual_se(&centres, &anchors);

    let smooth: Vec<f64> = (0..3 * q).map(|m| spline.eval(m as f64 + 0.5)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd.max(0.0)).map_err(|e| Error::invalid("noise_sd", e.to_string()))?;
    let points = smooth
        .iter()
        .enumerate()
        .map(|(m, &v)| {
            let y = v + noise.sample(&mut rng);
            (m as i64, y.round().max(0.0) as u64)
        })
        .collect();
    Ok(Synthesis {
        series: CountSeries::new(
            quarterly.class_id.clone(),
            quarterly.origin,
            points,
            Provenance::Synthesized,
        )?,
        smooth,
        noise_sd,
        spline_lambda: spline.lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::series::YearMonth;

    fn quarterly(counts: Vec<f64>) -> QuarterlySeries {
        QuarterlySeries {
            class_id: "x".into(),
            origin: YearMonth::new(2015, 1).unwrap(),
            counts,
        }
    }

    #[test]
    fn flat_input_gives_flat_months() {
        let s = synthesize_monthly(&quarterly(vec![300.0; 8]), 1).unwrap();
        assert_eq!(s.noise_sd, 0.0);
        assert!(s.series.counts().iter().all(|&c| c == 100));
        assert_eq!(s.series.provenance, Provenance::Synthesized);
    }

    #[test]
    fn noisy_flat_input_is_centred() {
        let counts: Vec<f64> = (0..16).map(|i| 300.0 + if i % 2 == 0 { 9.0 } else { -9.0 }).collect();
        let s = synthesize_monthly(&quarterly(counts), 4).unwrap();
        let xs: Vec<f64> = s.series.counts().iter().map(|&c| c as f64).collect();
        let (mean, _, _) = crate::stats::mean_var_se(&xs);
        let se = s.noise_sd / (xs.len() as f64).sqrt() + 3.0 / (xs.len() as f64).sqrt();
        assert!((mean - 100.0).abs() < 2.0 * se, "{mean}");
    }

    #[test]
    fn linear_trend_scales_by_a_third() {
        let b = 30.0;
        let counts: Vec<f64> = (0..10).map(|i| 900.0 + b * i as f64).collect();
        let s = synthesize_monthly(&quarterly(counts), 2).unwrap();
        let x: Vec<f64> = (0..s.smooth.len()).map(|m| m as f64 / 3.0).collect();
        let n = x.len() as f64;
        let xm = x.iter().sum::<f64>() / n;
        let ym = s.smooth.iter().sum::<f64>() / n;
        let slope = x.iter().zip(&s.smooth).map(|(a, y)| (a - xm) * (y - ym)).sum::<f64>()
            / x.iter().map(|a| (a - xm) * (a - xm)).sum::<f64>();
        assert!((slope - b / 3.0).abs() < 1e-6, "{slope}");
    }

    #[test]
    fn reproducible_for_a_seed() {
        let counts: Vec<f64> = (0..12).map(|i| 900.0 + 40.0 * ((i as f64) * 0.9).sin()).collect();
        let a = synthesize_monthly(&quarterly(counts.clone()), 7).unwrap();
        let b = synthesize_monthly(&quarterly(counts.clone()), 7).unwrap();
        let c = synthesize_monthly(&quarterly(counts), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.series, c.series);
    }

    #[test]
    fn too_few_quarters() {
        assert!(synthesize_monthly(&quarterly(vec![1.0, 2.0, 3.0]), 0).is_err());
    }
}
