use occq::arrivals::{sample_nhpp, ArrivalRate};

fn main() -> occq::Result<()> {
    let rate = ArrivalRate::piecewise_linear(vec![(0.0, 2.0), (6.0, 20.0), (12.0, 2.0)])?;
    let times = sample_nhpp(&rate, 0.0, 12.0, 5)?;
    println!("{} arrivals, expected {:.1}", times.len(), rate.integral(0.0, 12.0)?);
    for m in 0..12 {
        let k = times.iter().filter(|&&t| t >= m as f64 && t < (m + 1) as f64).count();
        println!("{m:>2} {}", "#".repeat(k));
    }
    Ok(())
}
