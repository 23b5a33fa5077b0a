// Mean time to clear congestion, with and without a 20% cut in arrivals.
use occq::dist::ServiceDistribution;
use occq::horizon::{recovery_with_intervention, Intervention, RecoveryProblem};

fn main() -> occq::Result<()> {
    println!("scv   n    k    beta   beta(0.8 lambda)");
    for scv in [1.5, 3.0, 6.0] {
        for n in [33.0, 45.0, 60.0, 90.0] {
            let dist = ServiceDistribution::pareto_with_mean_scv(3.0, scv)?;
            let p = RecoveryProblem::new(10.0, dist, n, None)?;
            let base = recovery_with_intervention(&p, Intervention::None)?;
            let cut = recovery_with_intervention(&p, Intervention::ScaleLambda { factor: 0.8 })?;
            println!("{scv:<4} {n:>4} {:>4} {:>7.2} {:>7.2}", p.k, base.beta_months, cut.beta_months);
        }
    }
    Ok(())
}
