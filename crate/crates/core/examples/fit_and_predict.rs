//! Fit (β₀, β₁, α) to monthly counts, then compare what-if trajectories.

use occq::inference::mcmc::{fit, McmcConfig};
use occq::inference::posterior::{simulate_counts, NormalPrior, Params, PriorSpec};
use occq::inference::predict::{predict_from, Scenario};
use occq::inference::series::YearMonth;

fn main() -> occq::Result<()> {
    let truth = Params { beta0: 677.4, beta1: -3.77, alpha: 4.0 };
    let series = simulate_counts(&truth, 5.22, 49, YearMonth::new(2015, 3)?, 11)?;
    let priors = PriorSpec::new(NormalPrior { mu: 680.0, sigma: 60.0 }, NormalPrior { mu: -4.0, sigma: 2.0 }, 5.22)?;
    let draws = fit(&series, &priors, &McmcConfig::with_iterations(4000, 3))?;
    for (k, s) in draws.summary() {
        println!("{k:>6}: {:9.3} ± {:.3}", s.mean, s.sd);
    }

    let (tau, n) = series.last().expect("non-empty");
    let horizons: Vec<u32> = (1..=8).collect();
    let scenarios = [
        ("baseline", Scenario::Baseline),
        ("E[S] = 3", Scenario::ServiceSwitch { mean_service_new: 3.0 }),
        ("E[S] = 8", Scenario::ServiceSwitch { mean_service_new: 8.0 }),
        ("0.8 λ", Scenario::LambdaScale { factor: 0.8 }),
    ];
    for (label, sc) in scenarios {
        let p = predict_from(&draws, tau, n, &horizons, &sc, 1)?;
        let row: Vec<String> = p.points.iter().map(|q| format!("{:.0}", q.mean)).collect();
        println!("{label:>9}: {}", row.join(" "));
    }
    Ok(())
}
