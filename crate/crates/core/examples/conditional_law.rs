//! Law of the occupancy a few months after a head-count, for a prison-like
//! population with a declining linear arrival rate.

use occq::arrivals::{ArrivalRate, Domain};
use occq::dist::ServiceDistribution;
use occq::observed::conditional_law;

fn main() -> occq::Result<()> {
    let rate = ArrivalRate::linear(677.4, -3.77, Domain::new(f64::NEG_INFINITY, 150.0)?)?;
    let dist = ServiceDistribution::pareto_with_mean(5.22, 4.0)?;
    let (tau, n) = (48.0, 2600);

    println!("delta  mean      sd     q05   q95   poisson-mean  tv");
    for delta in [0.0, 1.0, 3.0, 6.0, 12.0, 24.0] {
        let law = conditional_law(&rate, &dist, tau, delta, n)?;
        println!(
            "{delta:>5}  {:>8.1}  {:>5.1}  {:>4}  {:>4}  {:>12.1}  {:.3}",
            law.mean(),
            law.variance().sqrt(),
            law.quantile(0.05)?,
            law.quantile(0.95)?,
            law.poisson_approx_mean(),
            law.tv_to_poisson_approx(),
        );
    }
    Ok(())
}
