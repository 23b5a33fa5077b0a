//! Deterministic arrival-rate functions `λ(t)`.
//!
//! Every supported rate is piecewise linear, so integrals are exact
//! polynomial antiderivatives. A rate is declared on a domain `[lo, hi]`:
//! arrivals begin at `lo` (the system is empty before it; `lo = -∞` means
//! the process has been running forever) and `hi` is the last time the rate
//! is trusted. Evaluating past `hi` is an error, never a silent clamp.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A closed interval `[lo, hi]`, either end possibly infinite.
///
/// Serialized as a two-element array with `null` for an infinite end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub const UNBOUNDED: Domain = Domain {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY
        {
            return Err(Error::invalid("domain", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }
}

impl Default for Domain {
    fn default() -> Self {
        Self::UNBOUNDED
    }
}

impl Serialize for Domain {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let lo = self.lo.is_finite().then_some(self.lo);
        let hi = self.hi.is_finite().then_some(self.hi);
        [lo, hi].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [lo, hi] = <[Option<f64>; 2]>::deserialize(d)?;
        Domain::new(
            lo.unwrap_or(f64::NEG_INFINITY),
            hi.unwrap_or(f64::INFINITY),
        )
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutSide {
    /// Arrivals before the cut only; zero on `[τ, ∞)`.
    Past,
    /// Arrivals from the cut on; zero on `(-∞, τ)`.
    Future,
}

/// A rate cut at an observation time `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutRate {
    pub base: Box<ArrivalRate>,
    pub cut_at: f64,
    pub side: CutSide,
}

/// An arrival-rate function in arrivals per month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawRate")]
pub enum ArrivalRate {
    Constant {
        rate: f64,
        #[serde(default)]
        domain: Domain,
    },
    /// `λ(t) = β₀ + β₁ t` on an explicit domain.
    Linear {
        beta0: f64,
        beta1: f64,
        domain: Domain,
    },
    /// Linear interpolation between `(t, rate)` knots; the domain is the
    /// knot span.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    Cut(CutRate),
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawRate {
    Constant {
        rate: f64,
        #[serde(default)]
        domain: Domain,
    },
    Linear {
        beta0: f64,
        beta1: f64,
        domain: Domain,
    },
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
    },
    Cut(CutRate),
}

impl TryFrom<RawRate> for ArrivalRate {
    type Error = Error;

    fn try_from(raw: RawRate) -> Result<Self> {
        match raw {
            RawRate::Constant { rate, domain } => Self::constant_on(rate, domain),
            RawRate::Linear {
                beta0,
                beta1,
                domain,
            } => Self::linear(beta0, beta1, domain),
            RawRate::PiecewiseLinear { knots } => Self::piecewise_linear(knots),
            RawRate::Cut(c) => {
                if !c.cut_at.is_finite() {
                    return Err(Error::invalid("cut_at", "must be finite"));
                }
                Ok(Self::Cut(c))
            }
        }
    }
}

/// A linear piece `c0 + c1·t` on `[start, end]`; `start` may be `-∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Piece {
    pub start: f64,
    pub end: f64,
    pub c0: f64,
    pub c1: f64,
}

impl Piece {
    fn integral(&self) -> f64 {
        let (a, b) = (self.start, self.end);
        self.c0 * (b - a) + 0.5 * self.c1 * (b - a) * (b + a)
    }
}

impl ArrivalRate {
    /// Constant rate running since `-∞`.
    pub fn constant(rate: f64) -> Result<Self> {
        Self::constant_on(rate, Domain::UNBOUNDED)
    }

    /// Constant rate switched on at `start` (empty system before).
    pub fn constant_from(rate: f64, start: f64) -> Result<Self> {
        Self::constant_on(rate, Domain::new(start, f64::INFINITY)?)
    }

    pub fn constant_on(rate: f64, domain: Domain) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::invalid("rate", format!("must be finite and >= 0, got {rate}")));
        }
        Ok(Self::Constant { rate, domain })
    }

    pub fn linear(beta0: f64, beta1: f64, domain: Domain) -> Result<Self> {
        if !(beta0.is_finite() && beta1.is_finite()) {
            return Err(Error::invalid("beta", "coefficients must be finite"));
        }
        let at = |t: f64| beta0 + beta1 * t;
        let negative = (domain.lo.is_infinite() && beta1 > 0.0)
            || (domain.hi.is_infinite() && beta1 < 0.0)
            || (domain.lo.is_finite() && at(domain.lo) < 0.0)
            || (domain.hi.is_finite() && at(domain.hi) < 0.0);
        if negative {
            return Err(Error::Domain(format!(
                "rate {beta0} + {beta1}·t goes negative on [{}, {}]",
                domain.lo, domain.hi
            )));
        }
        Ok(Self::Linear {
            beta0,
            beta1,
            domain,
        })
    }

    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::invalid("knots", "need at least two knots"));
        }
        for w in knots.windows(2) {
            if !(w[0].0 < w[1].0) {
                return Err(Error::invalid("knots", "times must be strictly increasing"));
            }
        }
        if knots
            .iter()
            .any(|&(t, r)| !t.is_finite() || !r.is_finite() || r < 0.0)
        {
            return Err(Error::invalid("knots", "rates must be finite and >= 0"));
        }
        Ok(Self::PiecewiseLinear { knots })
    }

    /// Splits the rate at `tau`, keeping one side.
    pub fn cut(&self, tau: f64, side: CutSide) -> Self {
        Self::Cut(CutRate {
            base: Box::new(self.clone()),
            cut_at: tau,
            side,
        })
    }

    /// The domain on which the rate is defined.
    pub fn domain(&self) -> Domain {
        match self {
            Self::Constant { domain, .. } | Self::Linear { domain, .. } => *domain,
            Self::PiecewiseLinear { knots } => Domain {
                lo: knots[0].0,
                hi: knots[knots.len() - 1].0,
            },
            Self::Cut(c) => {
                let b = c.base.domain();
                match c.side {
                    CutSide::Past => Domain {
                        lo: b.lo,
                        hi: f64::INFINITY,
                    },
                    CutSide::Future => Domain {
                        lo: f64::NEG_INFINITY,
                        hi: b.hi,
                    },
                }
            }
        }
    }

    /// Earliest time at which arrivals can occur.
    pub fn arrivals_start(&self) -> f64 {
        match self {
            Self::Cut(c) if c.side == CutSide::Future => c.base.arrivals_start().max(c.cut_at),
            _ => self.domain().lo,
        }
    }

    fn out_of_domain(&self, t: f64) -> Error {
        let d = self.domain();
        Error::Domain(format!("t = {t} outside rate domain [{}, {}]", d.lo, d.hi))
    }

    /// `λ(t)`.
    pub fn rate(&self, t: f64) -> Result<f64> {
        if t.is_nan() {
            return Err(Error::Domain("t is NaN".into()));
        }
        match self {
            Self::Cut(c) => match c.side {
                CutSide::Past if t >= c.cut_at => Ok(0.0),
                CutSide::Future if t < c.cut_at => Ok(0.0),
                _ => c.base.rate(t),
            },
            _ => {
                if !self.domain().contains(t) {
                    return Err(self.out_of_domain(t));
                }
                Ok(self.eval_unchecked(t))
            }
        }
    }

    fn eval_unchecked(&self, t: f64) -> f64 {
        match self {
            Self::Constant { rate, .. } => *rate,
            Self::Linear { beta0, beta1, .. } => beta0 + beta1 * t,
            Self::PiecewiseLinear { knots } => {
                let i = knots.partition_point(|k| k.0 <= t).clamp(1, knots.len() - 1);
                let (t0, r0) = knots[i - 1];
                let (t1, r1) = knots[i];
                r0 + (r1 - r0) * (t - t0) / (t1 - t0)
            }
            Self::Cut(c) => match c.side {
                CutSide::Past if t >= c.cut_at => 0.0,
                CutSide::Future if t < c.cut_at => 0.0,
                _ => c.base.eval_unchecked(t),
            },
        }
    }

    /// `∫_a^b λ(u) du`, exact.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if !(a <= b) {
            return Err(Error::Domain(format!("integral needs a <= b, got [{a}, {b}]")));
        }
        let d = self.domain();
        if a < d.lo {
            return Err(self.out_of_domain(a));
        }
        if b > d.hi {
            return Err(self.out_of_domain(b));
        }
        Ok(self.pieces(a, b)?.iter().map(Piece::integral).sum())
    }

    /// Linear pieces covering the part of `[a, b]` where arrivals may occur.
    pub(crate) fn pieces(&self, a: f64, b: f64) -> Result<Vec<Piece>> {
        let d = self.domain();
        if b > d.hi {
            return Err(self.out_of_domain(b));
        }
        let a = a.max(self.arrivals_start());
        if a >= b {
            return Ok(Vec::new());
        }
        Ok(match self {
            Self::Constant { rate, .. } => vec![Piece {
                start: a,
                end: b,
                c0: *rate,
                c1: 0.0,
            }],
            Self::Linear { beta0, beta1, .. } => vec![Piece {
                start: a,
                end: b,
                c0: *beta0,
                c1: *beta1,
            }],
            Self::PiecewiseLinear { knots } => knots
                .windows(2)
                .filter_map(|w| {
                    let (t0, r0) = w[0];
                    let (t1, r1) = w[1];
                    let s = a.max(t0);
                    let e = b.min(t1);
                    (s < e).then(|| {
                        let c1 = (r1 - r0) / (t1 - t0);
                        Piece {
                            start: s,
                            end: e,
                            c0: r0 - c1 * t0,
                            c1,
                        }
                    })
                })
                .collect(),
            Self::Cut(c) => match c.side {
                CutSide::Past => {
                    let e = b.min(c.cut_at);
                    if a >= e {
                        Vec::new()
                    } else {
                        c.base.pieces(a, e)?
                    }
                }
                CutSide::Future => c.base.pieces(a.max(c.cut_at), b)?,
            },
        })
    }

    /// Largest value of the rate on `[a, b]`.
    pub fn sup_on(&self, a: f64, b: f64) -> Result<f64> {
        let pieces = self.pieces(a, b)?;
        let mut sup: f64 = 0.0;
        for p in &pieces {
            for t in [p.start, p.end] {
                let v = p.c0 + p.c1 * t;
                if !v.is_finite() {
                    return Err(Error::Unsupported(format!(
                        "rate is unbounded on [{a}, {b}]"
                    )));
                }
                sup = sup.max(v);
            }
        }
        Ok(sup)
    }

    /// Constant rate value when the rate is constant wherever it is active.
    pub(crate) fn as_constant(&self) -> Option<f64> {
        match self {
            Self::Constant { rate, .. } => Some(*rate),
            Self::Linear { beta0, beta1, .. } if *beta1 == 0.0 => Some(*beta0),
            _ => None,
        }
    }
}

/// Arrival times of a nonhomogeneous Poisson process on `[a, b]`, generated
/// by thinning against the supremum rate. Reproducible for a given seed.
pub fn sample_nhpp(rate: &ArrivalRate, a: f64, b: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_nhpp_with(rate, a, b, &mut rng)
}

pub fn sample_nhpp_with<R: Rng + ?Sized>(
    rate: &ArrivalRate,
    a: f64,
    b: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(Error::Domain(format!("window must be finite with a <= b, got [{a}, {b}]")));
    }
    let sup = rate.sup_on(a, b)?;
    let mut out = Vec::new();
    if sup <= 0.0 {
        return Ok(out);
    }
    let mut t = a;
    loop {
        let u: f64 = rng.random();
        t += -(-u).ln_1p() / sup;
        if t > b {
            break;
        }
        let accept: f64 = rng.random();
        if accept * sup < rate.eval_unchecked(t).max(0.0) && t >= rate.arrivals_start() {
            out.push(t);
        }
    }
    Ok(out)
}
