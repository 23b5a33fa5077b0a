//! Discrete-event simulation of the `M_t/G/∞` queue.
//!
//! With infinitely many servers nobody waits, so a replication is just a
//! list of (arrival, departure) pairs. Occupancy at a probe time is the
//! number of arrivals up to it minus the number of departures up to it.
//!
//! Every replication owns three ChaCha8 streams derived from
//! `(seed, replication)`: [`STREAM_ARRIVALS`], [`STREAM_SERVICES`] and
//! [`STREAM_COHORT`]. Adding probes or replications never changes the draws
//! of an existing replication.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrivals::{sample_nhpp_with, ArrivalRate};
use crate::dist::ServiceDistribution;
use crate::error::{Error, Result};
use crate::observed::RemainingTimeLaw;

pub const STREAM_ARRIVALS: u64 = 0;
pub const STREAM_SERVICES: u64 = 1;
pub const STREAM_COHORT: u64 = 2;

/// The RNG for one stream of one replication.
pub fn stream_rng(seed: u64, replication: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication * 4 + stream);
    rng
}

/// Arrivals at or after `at` are served under `new`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceSwitch {
    pub at: f64,
    pub new: ServiceDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialPreset {
    Empty,
    /// `Po(ν_start)` individuals with i.i.d. remaining times from `G_start`.
    SteadyStatePoisson,
}

/// Who is in the system at the start of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialCondition {
    Preset(InitialPreset),
    /// `n` individuals; remaining times come from `H_{y_i}` when elapsed
    /// times `y_i` are given and from `G_start` otherwise.
    Cohort {
        n: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        elapsed: Option<Vec<f64>>,
    },
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self::Preset(InitialPreset::Empty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub rate: ArrivalRate,
    pub dist: ServiceDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch: Option<ServiceSwitch>,
    #[serde(default)]
    pub initial: InitialCondition,
    /// Simulation window is `[start, start + horizon]`.
    #[serde(default)]
    pub start: f64,
    pub horizon: f64,
    pub replications: u64,
    pub seed: u64,
    /// Keep every departure time (memory grows with the arrival count).
    #[serde(default)]
    pub record_departures: bool,
}

impl SimConfig {
    pub fn new(rate: ArrivalRate, dist: ServiceDistribution, horizon: f64, replications: u64, seed: u64) -> Self {
        Self {
            rate,
            dist,
            switch: None,
            initial: InitialCondition::default(),
            start: 0.0,
            horizon,
            replications,
            seed,
            record_departures: false,
        }
    }

    pub fn with_initial(mut self, initial: InitialCondition) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_start(mut self, start: f64) -> Self {
        self.start = start;
        self
    }

    pub fn with_switch(mut self, switch: ServiceSwitch) -> Self {
        self.switch = Some(switch);
        self
    }

    pub fn end(&self) -> f64 {
        self.start + self.horizon
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid("horizon", format!("must be finite and > 0, got {}", self.horizon)));
        }
        if !self.start.is_finite() {
            return Err(Error::invalid("start", "must be finite"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications", "must be >= 1"));
        }
        if let InitialCondition::Cohort { n, elapsed: Some(e) } = &self.initial {
            if e.len() as u64 != *n {
                return Err(Error::invalid(
                    "elapsed",
                    format!("{} elapsed times for n = {n}", e.len()),
                ));
            }
            for &y in e {
                if !(y.is_finite() && y >= 0.0) {
                    return Err(Error::invalid("elapsed", "entries must be finite and >= 0"));
                }
                self.dist.conditional_remaining_ccdf(y, 0.0)?;
            }
        }
        self.rate.sup_on(self.start, self.end())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    /// Occupancy at each probe time, in probe order.
    pub occupancy: Vec<u64>,
    pub initial: u64,
    pub arrivals: u64,
    /// Departures inside the window.
    pub departures: u64,
    /// Occupancy at the end of the window.
    pub final_occupancy: u64,
    /// Time from `start` until the last departure of anyone simulated, 0 if
    /// nobody was ever present.
    pub last_departure: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub departure_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub config: SimConfig,
    pub probes: Vec<f64>,
    pub replications: Vec<ReplicationResult>,
}

/// How the initial cohort's remaining times are drawn.
enum CohortSampler {
    None,
    Remaining(RemainingTimeLaw),
}

impl CohortSampler {
    fn draw<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        match self {
            Self::Remaining(law) => law.quantile(rng.random::<f64>()),
            Self::None => Err(Error::Degenerate("no remaining-time law".into())),
        }
    }
}

pub fn run(config: &SimConfig, probe_times: &[f64]) -> Result<SimOutput> {
    config.validate()?;
    for &t in probe_times {
        if !(t >= config.start && t <= config.end()) {
            return Err(Error::invalid(
                "probe_times",
                format!("{t} outside [{}, {}]", config.start, config.end()),
            ));
        }
    }
    let needs_law = match &config.initial {
        InitialCondition::Preset(InitialPreset::SteadyStatePoisson) => true,
        InitialCondition::Cohort { n, elapsed: None } => *n > 0,
        _ => false,
    };
    let (sampler, nu) = if needs_law {
        match RemainingTimeLaw::new(&config.rate, &config.dist, config.start) {
            Ok(law) => {
                let nu = law.nu();
                (CohortSampler::Remaining(law), nu)
            }
            Err(Error::Degenerate(_))
                if matches!(config.initial, InitialCondition::Preset(_)) =>
            {
                (CohortSampler::None, 0.0)
            }
            Err(e) => return Err(e),
        }
    } else {
        (CohortSampler::None, 0.0)
    };

    let replications = (0..config.replications)
        .into_par_iter()
        .map(|rep| replicate(config, probe_times, &sampler, nu, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimOutput {
        config: config.clone(),
        probes: probe_times.to_vec(),
        replications,
    })
}

fn replicate(
    config: &SimConfig,
    probes: &[f64],
    sampler: &CohortSampler,
    nu: f64,
    rep: u64,
) -> Result<ReplicationResult> {
    let start = config.start;
    let end = config.end();
    let mut cohort_rng = stream_rng(config.seed, rep, STREAM_COHORT);
    let mut departures: Vec<f64> = Vec::new();

    match &config.initial {
        InitialCondition::Preset(InitialPreset::Empty) => {}
        InitialCondition::Preset(InitialPreset::SteadyStatePoisson) => {
            let n = if nu > 0.0 {
                Poisson::new(nu)
                    .map_err(|e| Error::invalid("nu", e.to_string()))?
                    .sample(&mut cohort_rng) as u64
            } else {
                0
            };
            for _ in 0..n {
                departures.push(start + sampler.draw(&mut cohort_rng)?);
            }
        }
        InitialCondition::Cohort { n, elapsed: None } => {
            for _ in 0..*n {
                departures.push(start + sampler.draw(&mut cohort_rng)?);
            }
        }
        InitialCondition::Cohort { elapsed: Some(ys), .. } => {
            for &y in ys {
                let u: f64 = cohort_rng.random();
                departures.push(start + config.dist.conditional_remaining_quantile(y, u)?);
            }
        }
    }
    let initial = departures.len() as u64;

    let mut arrival_rng = stream_rng(config.seed, rep, STREAM_ARRIVALS);
    let mut service_rng = stream_rng(config.seed, rep, STREAM_SERVICES);
    let arrivals = sample_nhpp_with(&config.rate, start, end, &mut arrival_rng)?;
    for &a in &arrivals {
        let dist = match config.switch {
            Some(sw) if a >= sw.at => sw.new,
            _ => config.dist,
        };
        departures.push(a + dist.sample(&mut service_rng));
    }

    let last_departure = departures
        .iter()
        .fold(0.0f64, |acc, &d| acc.max(d - start));
    departures.sort_by(f64::total_cmp);

    let occupancy = probes
        .iter()
        .map(|&t| {
            let arrived = initial + arrivals.partition_point(|&a| a <= t) as u64;
            let left = departures.partition_point(|&d| d <= t) as u64;
            arrived - left
        })
        .collect();
    let departed = departures.partition_point(|&d| d <= end) as u64;
    let total = initial + arrivals.len() as u64;

    Ok(ReplicationResult {
        occupancy,
        initial,
        arrivals: arrivals.len() as u64,
        departures: departed,
        final_occupancy: total - departed,
        last_departure,
        departure_times: config.record_departures.then_some(departures),
    })
}

impl SimOutput {
    fn probe_index(&self, probe: f64) -> Result<usize> {
        self.probes
            .iter()
            .position(|&p| (p - probe).abs() <= 1e-12 * (1.0 + probe.abs()))
            .ok_or_else(|| Error::invalid("probe", format!("{probe} was not requested")))
    }

    pub fn occupancies_at(&self, probe: f64) -> Result<Vec<u64>> {
        let i = self.probe_index(probe)?;
        Ok(self.replications.iter().map(|r| r.occupancy[i]).collect())
    }

    /// Sample mean and its standard error at a probe.
    pub fn mean_at(&self, probe: f64) -> Result<(f64, f64)> {
        let xs: Vec<f64> = self.occupancies_at(probe)?.into_iter().map(|v| v as f64).collect();
        let (mean, _, se) = crate::stats::mean_var_se(&xs);
        Ok((mean, se))
    }

    pub fn last_departures(&self) -> Vec<f64> {
        self.replications.iter().map(|r| r.last_departure).collect()
    }

    /// Per-replication occupancy paths as `replication,time,occupancy`.
    pub fn write_occupancy_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replication", "time", "occupancy"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for (rep, r) in self.replications.iter().enumerate() {
            for (t, q) in self.probes.iter().zip(&r.occupancy) {
                w.write_record([rep.to_string(), t.to_string(), q.to_string()])
                    .map_err(|e| Error::Io(e.to_string()))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Normalized frequency table of occupancy at one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalLaw {
    pub probe: f64,
    pub replications: u64,
    /// `counts[y]` replications had occupancy `y`.
    pub counts: Vec<u64>,
    pub frequencies: Vec<f64>,
}

impl EmpiricalLaw {
    pub fn mean(&self) -> f64 {
        self.frequencies
            .iter()
            .enumerate()
            .map(|(y, f)| y as f64 * f)
            .sum()
    }
}

pub fn empirical_law(output: &SimOutput, probe: f64) -> Result<EmpiricalLaw> {
    let values = output.occupancies_at(probe)?;
    let max = values.iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0u64; max + 1];
    for v in &values {
        counts[*v as usize] += 1;
    }
    let total = values.len() as f64;
    let frequencies = counts.iter().map(|&c| c as f64 / total).collect();
    Ok(EmpiricalLaw {
        probe,
        replications: values.len() as u64,
        counts,
        frequencies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::CutSide;
    use crate::observed::conditional_law;
    use crate::stats::chi_square_pmf;

    fn pareto3() -> ServiceDistribution {
        ServiceDistribution::pareto(6.0, 3.0).unwrap()
    }

    #[test]
    fn zero_rate_empty_start_stays_empty() {
        let cfg = SimConfig::new(ArrivalRate::constant(0.0).unwrap(), pareto3(), 50.0, 20, 1);
        let out = run(&cfg, &[0.0, 10.0, 50.0]).unwrap();
        for r in &out.replications {
            assert!(r.occupancy.iter().all(|&q| q == 0));
            assert_eq!(r.last_departure, 0.0);
        }
    }

    #[test]
    fn conservation_holds_per_replication() {
        let rate = ArrivalRate::constant_from(5.0, 0.0).unwrap();
        let cfg = SimConfig::new(rate, pareto3(), 40.0, 200, 9)
            .with_initial(InitialCondition::Cohort { n: 25, elapsed: None })
            .with_start(10.0);
        let out = run(&cfg, &[10.0, 30.0, 50.0]).unwrap();
        for r in &out.replications {
            assert_eq!(r.arrivals + r.initial, r.departures + r.final_occupancy);
            assert_eq!(r.occupancy[0], 25);
            assert_eq!(*r.occupancy.last().unwrap(), r.final_occupancy);
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let rate = ArrivalRate::constant(10.0).unwrap();
        let cfg = SimConfig::new(rate, pareto3(), 10.0, 50, 42)
            .with_initial(InitialCondition::Preset(InitialPreset::SteadyStatePoisson));
        let a = run(&cfg, &[5.0, 10.0]).unwrap();
        let b = run(&cfg, &[5.0, 10.0]).unwrap();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.seed = 43;
        assert_ne!(run(&other, &[5.0, 10.0]).unwrap().replications, a.replications);
    }

    #[test]
    fn extra_probes_do_not_perturb_draws() {
        let rate = ArrivalRate::constant(10.0).unwrap();
        let cfg = SimConfig::new(rate, pareto3(), 10.0, 30, 5)
            .with_initial(InitialCondition::Cohort { n: 12, elapsed: None });
        let a = run(&cfg, &[4.0]).unwrap();
        let b = run(&cfg, &[1.0, 4.0, 9.0]).unwrap();
        for (x, y) in a.replications.iter().zip(&b.replications) {
            assert_eq!(x.occupancy[0], y.occupancy[1]);
            assert_eq!(x.last_departure, y.last_departure);
        }
    }

    #[test]
    fn empirical_law_basics() {
        let rate = ArrivalRate::constant(10.0).unwrap();
        let cfg = SimConfig::new(rate.clone(), pareto3(), 5.0, 1, 3);
        let out = run(&cfg, &[5.0]).unwrap();
        let law = empirical_law(&out, 5.0).unwrap();
        assert_eq!(law.frequencies.iter().filter(|&&f| f > 0.0).count(), 1);
        let cfg = SimConfig::new(rate, pareto3(), 5.0, 500, 3);
        let out = run(&cfg, &[5.0]).unwrap();
        let law = empirical_law(&out, 5.0).unwrap();
        assert!((law.frequencies.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(empirical_law(&out, 4.0).is_err());
    }

    #[test]
    fn conditional_law_matches_simulation() {
        let rate = ArrivalRate::constant(10.0).unwrap();
        let d = pareto3();
        let delta = 3.0;
        let cfg = SimConfig::new(rate.clone(), d, delta, 20_000, 77)
            .with_initial(InitialCondition::Cohort { n: 60, elapsed: None });
        let out = run(&cfg, &[delta]).unwrap();
        let emp = empirical_law(&out, delta).unwrap();
        let exact = conditional_law(&rate, &d, 0.0, delta, 60).unwrap();
        let chi = chi_square_pmf(&emp.counts, &exact.pmf_table(), 5.0);
        assert!(chi.p_value > 1e-3, "{chi:?}");
    }

    #[test]
    fn zero_elapsed_exponential_is_memoryless() {
        let rate = ArrivalRate::constant(4.0).unwrap();
        let d = ServiceDistribution::exponential(0.5).unwrap();
        let delta = 1.5;
        let with = SimConfig::new(rate.clone(), d, delta, 20_000, 11)
            .with_initial(InitialCondition::Cohort { n: 20, elapsed: Some(vec![0.0; 20]) });
        let without = SimConfig::new(rate.clone(), d, delta, 20_000, 12)
            .with_initial(InitialCondition::Cohort { n: 20, elapsed: None });
        let a = empirical_law(&run(&with, &[delta]).unwrap(), delta).unwrap();
        let exact = conditional_law(&rate, &d, 0.0, delta, 20).unwrap().pmf_table();
        let b = empirical_law(&run(&without, &[delta]).unwrap(), delta).unwrap();
        assert!(chi_square_pmf(&a.counts, &exact, 5.0).p_value > 1e-3);
        assert!(chi_square_pmf(&b.counts, &exact, 5.0).p_value > 1e-3);
    }

    #[test]
    fn switch_changes_only_later_arrivals() {
        let rate = ArrivalRate::constant(10.0).unwrap();
        let old = pareto3();
        let new = ServiceDistribution::pareto_with_mean(8.0, 3.0).unwrap();
        let base = SimConfig::new(rate, old, 6.0, 100, 8)
            .with_initial(InitialCondition::Cohort { n: 30, elapsed: None });
        let switched = base.clone().with_switch(ServiceSwitch { at: 0.0, new });
        let a = run(&base, &[6.0]).unwrap();
        let b = run(&switched, &[6.0]).unwrap();
        let (ma, _) = a.mean_at(6.0).unwrap();
        let (mb, _) = b.mean_at(6.0).unwrap();
        assert!(mb > ma);
        for (x, y) in a.replications.iter().zip(&b.replications) {
            assert_eq!(x.arrivals, y.arrivals);
        }
    }

    #[test]
    fn cut_rate_terminates_arrivals() {
        let rate = ArrivalRate::constant(10.0).unwrap().cut(0.0, CutSide::Past);
        let cfg = SimConfig::new(rate, pareto3(), 100.0, 50, 2)
            .with_initial(InitialCondition::Preset(InitialPreset::SteadyStatePoisson));
        let out = run(&cfg, &[0.0]).unwrap();
        for r in &out.replications {
            assert_eq!(r.arrivals, 0);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let rate = ArrivalRate::constant(1.0).unwrap();
        assert!(run(&SimConfig::new(rate.clone(), pareto3(), 0.0, 1, 0), &[]).is_err());
        assert!(run(&SimConfig::new(rate.clone(), pareto3(), 1.0, 0, 0), &[]).is_err());
        let bad = SimConfig::new(rate.clone(), pareto3(), 1.0, 1, 0)
            .with_initial(InitialCondition::Cohort { n: 2, elapsed: Some(vec![1.0]) });
        assert!(run(&bad, &[]).is_err());
        assert!(run(&SimConfig::new(rate, pareto3(), 1.0, 1, 0), &[2.0]).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = SimConfig::new(ArrivalRate::constant(10.0).unwrap(), pareto3(), 5.0, 10, 1)
            .with_initial(InitialCondition::Preset(InitialPreset::SteadyStatePoisson));
        let s = serde_json::to_string(&cfg).unwrap();
        assert!(s.contains("\"steady-state-poisson\""));
        assert_eq!(serde_json::from_str::<SimConfig>(&s).unwrap(), cfg);
        let cohort: InitialCondition = serde_json::from_str(r#"{"n":3,"elapsed":[1,2,3]}"#).unwrap();
        assert!(matches!(cohort, InitialCondition::Cohort { n: 3, elapsed: Some(_) }));
    }

    #[test]
    fn csv_dump_has_one_row_per_probe() {
        let cfg = SimConfig::new(ArrivalRate::constant(2.0).unwrap(), pareto3(), 5.0, 3, 1);
        let out = run(&cfg, &[1.0, 5.0]).unwrap();
        let mut buf = Vec::new();
        out.write_occupancy_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 2);
    }
}
