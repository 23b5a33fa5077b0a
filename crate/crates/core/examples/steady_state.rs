//! Simulated M/G/∞ occupancy with Pareto service against `λ E[S]`.

use occq::arrivals::ArrivalRate;
use occq::dist::ServiceDistribution;
use occq::sim::{self, SimConfig};

fn main() -> occq::Result<()> {
    let dist = ServiceDistribution::pareto_with_mean(3.0, 4.0)?;
    let rate = ArrivalRate::constant_from(10.0, 0.0)?;
    let probes = [3.0, 9.0, 30.0, 90.0];
    let out = sim::run(&SimConfig::new(rate, dist, 90.0, 5_000, 7), &probes)?;
    for t in probes {
        let (mean, se) = out.mean_at(t)?;
        println!("t = {t:>4}: mean {mean:7.3} (se {se:.3}), limit 30");
    }
    Ok(())
}
