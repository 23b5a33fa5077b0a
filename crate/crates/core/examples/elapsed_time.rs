//! Knowing how long each person has already stayed sharpens the forecast.

use occq::arrivals::ArrivalRate;
use occq::dist::ServiceDistribution;
use occq::observed::{conditional_law, elapsed_informed_prediction, ClassObservation};

fn main() -> occq::Result<()> {
    let dist = ServiceDistribution::pareto_with_mean(3.0, 3.0)?;
    let rate = ArrivalRate::constant(10.0)?;
    let tau = 40.0;
    for (label, elapsed) in [("recent", vec![0.5; 30]), ("long-stay", vec![12.0; 30])] {
        let class = ClassObservation { class_id: label.into(), n: 30, elapsed: Some(elapsed) };
        for delta in [1.0, 6.0] {
            let mv = elapsed_informed_prediction(&class, tau, &rate, &dist, delta)?;
            let blind = conditional_law(&rate, &dist, tau, delta, 30)?;
            println!(
                "{label:>9} delta {delta}: mean {:.2} sd {:.2} (head-count only: {:.2})",
                mv.mean,
                mv.variance.sqrt(),
                blind.mean()
            );
        }
    }
    Ok(())
}
