//! How long until the system empties once arrivals stop.

use occq::dist::ServiceDistribution;
use occq::horizon::LastDepartureLaw;

fn main() -> occq::Result<()> {
    for scv in [3.0, 6.0] {
        let dist = ServiceDistribution::pareto_with_mean_scv(3.0, scv)?;
        let law = LastDepartureLaw::stationary(10.0, &dist)?;
        print!("scv {scv}: nu = {:.0}", law.nu());
        for q in [0.5, 0.9, 0.99] {
            print!(", q{q} = {:.1}", law.quantile(q)?);
        }
        println!();
    }
    Ok(())
}
