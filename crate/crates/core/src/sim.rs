//! Ground-truth systems behind an init/step protocol, trace-length
//! distributions, and passive sampling.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, ProtocolError, Result};
use crate::model::Model;
use crate::observation::{Dataset, Observation};
use crate::scheduler::Scheduler;

/// A system whose state is hidden from the learner. It can only be reset
/// (emitting an initial label) and stepped with an action (emitting the next
/// label).
pub trait System {
    /// Resets the system for a trace of `length` labels and returns the first.
    fn init(&mut self, length: usize) -> Result<String>;

    fn step(&mut self, action: &str) -> Result<String>;
}

impl<S: System + ?Sized> System for &mut S {
    fn init(&mut self, length: usize) -> Result<String> {
        (**self).init(length)
    }

    fn step(&mut self, action: &str) -> Result<String> {
        (**self).step(action)
    }
}

/// Samples traces from a known model.
#[derive(Debug, Clone)]
pub struct SimulatedSystem {
    model: Model,
    rng: ChaCha8Rng,
    initial: WeightedIndex<f64>,
    /// One sampler per `(action, state)`, indexed `action * S + state`.
    rows: Vec<WeightedIndex<f64>>,
    state: Option<usize>,
    remaining: usize,
}

pub fn simulate(m: &Model, seed: u64) -> Result<SimulatedSystem> {
    let report = m.validate();
    if !report.is_empty() {
        return Err(Error::InvalidModel(report.to_string()));
    }
    let sampler = |row: &[f64]| {
        WeightedIndex::new(row).map_err(|e| Error::InvalidModel(format!("unusable distribution row: {e}")))
    };
    let mut rows = Vec::with_capacity(m.n_actions() * m.n_states());
    for a in 0..m.n_actions() {
        for s in 0..m.n_states() {
            rows.push(sampler(m.tau_row(a, s))?);
        }
    }
    Ok(SimulatedSystem {
        initial: sampler(m.iota_row())?,
        rows,
        model: m.clone(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        state: None,
        remaining: 0,
    })
}

impl SimulatedSystem {
    pub fn model(&self) -> &Model {
        &self.model
    }

    fn emit(&mut self, idx: usize) -> String {
        let n = self.model.n_states();
        self.state = Some(idx % n);
        self.model.alphabet().symbol(idx / n).to_string()
    }
}

impl System for SimulatedSystem {
    fn init(&mut self, length: usize) -> Result<String> {
        let idx = self.initial.sample(&mut self.rng);
        self.remaining = length.saturating_sub(1);
        Ok(self.emit(idx))
    }

    fn step(&mut self, action: &str) -> Result<String> {
        let s = self.state.ok_or(ProtocolError::NotInitialized)?;
        if self.remaining == 0 {
            return Err(ProtocolError::TraceComplete.into());
        }
        let a = self
            .model
            .actions()
            .id(action)
            .ok_or_else(|| ProtocolError::UnknownAction(action.to_string()))?;
        self.remaining -= 1;
        let idx = self.rows[a * self.model.n_states() + s].sample(&mut self.rng);
        Ok(self.emit(idx))
    }
}

/// Serves the traces of a recorded dataset, in file order.
///
/// Each `init` starts the next recorded trace; the requested length may not
/// exceed the recorded one and every action must match the recording.
#[derive(Debug, Clone)]
pub struct ReplaySystem {
    traces: Vec<Observation>,
    next: usize,
    current: Option<(usize, usize, usize)>,
}

impl ReplaySystem {
    pub fn new(data: &Dataset) -> Self {
        let mut traces = Vec::new();
        for (o, k) in data.iter() {
            traces.extend(std::iter::repeat_n(o.clone(), k as usize));
        }
        ReplaySystem::from_traces(traces)
    }

    /// Serves `traces` in the given order.
    pub fn from_traces(traces: Vec<Observation>) -> Self {
        ReplaySystem {
            traces,
            next: 0,
            current: None,
        }
    }

    /// Number of traces not yet started.
    pub fn remaining(&self) -> usize {
        self.traces.len() - self.next
    }
}

impl System for ReplaySystem {
    fn init(&mut self, length: usize) -> Result<String> {
        let trace = self.traces.get(self.next).ok_or(ProtocolError::Exhausted)?;
        if length > trace.len() {
            return Err(ProtocolError::TooShort {
                recorded: trace.len(),
                requested: length,
            }
            .into());
        }
        self.current = Some((self.next, 0, length));
        self.next += 1;
        Ok(trace.labels()[0].clone())
    }

    fn step(&mut self, action: &str) -> Result<String> {
        let (idx, pos, len) = self.current.ok_or(ProtocolError::NotInitialized)?;
        if pos + 1 >= len {
            return Err(ProtocolError::TraceComplete.into());
        }
        let trace = &self.traces[idx];
        if trace.actions()[pos] != action {
            return Err(ProtocolError::ActionMismatch {
                expected: trace.actions()[pos].clone(),
                got: action.to_string(),
            }
            .into());
        }
        self.current = Some((idx, pos + 1, len));
        Ok(trace.labels()[pos + 1].clone())
    }
}

/// Longest trace any sampler will produce.
pub const MAX_TRACE_LENGTH: usize = 10_000;

/// Distribution of trace lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LengthSampler {
    Fixed(usize),
    /// `P(T = k) = (1-p)^(k-1) p` for `k >= 1`.
    Geometric { p: f64 },
    /// `P(T = offset + k) = (1-p)^(k-1) p` for `k >= 1`.
    ShiftedGeometric { offset: usize, p: f64 },
}

impl LengthSampler {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LengthSampler::Fixed(0) => Err(Error::InvalidArgument("trace length must be at least 1".into())),
            LengthSampler::Geometric { p } | LengthSampler::ShiftedGeometric { p, .. } if !(p > 0.0 && p < 1.0) => {
                Err(Error::InvalidArgument(format!("geometric parameter must lie in (0,1), got {p}")))
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        match *self {
            LengthSampler::Fixed(t) => t,
            LengthSampler::Geometric { p } => geometric(p, rng),
            LengthSampler::ShiftedGeometric { offset, p } => (offset + geometric(p, rng)).min(MAX_TRACE_LENGTH),
        }
    }
}

/// Inverse transform: the smallest `k >= 1` with `1 - (1-p)^k >= u`.
fn geometric(p: f64, rng: &mut impl Rng) -> usize {
    // `random` is in [0, 1); flip it so the logarithm is finite.
    let u: f64 = 1.0 - rng.random::<f64>();
    let k = (u.ln() / (1.0 - p).ln()).ceil();
    if k.is_finite() && k >= 1.0 {
        (k as usize).min(MAX_TRACE_LENGTH)
    } else {
        1
    }
}

pub fn sample_length(ls: &LengthSampler, rng: &mut impl Rng) -> usize {
    ls.sample(rng)
}

impl fmt::Display for LengthSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LengthSampler::Fixed(t) => write!(f, "fixed:{t}"),
            LengthSampler::Geometric { p } => write!(f, "geo:{p}"),
            LengthSampler::ShiftedGeometric { offset, p } => write!(f, "shifted-geo:{offset}:{p}"),
        }
    }
}

/// Parses `fixed:T`, `geo:p`, or `shifted-geo:offset:p`.
impl FromStr for LengthSampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad length spec `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        let ls = match parts.as_slice() {
            ["fixed", t] => LengthSampler::Fixed(t.parse().map_err(|_| bad())?),
            ["geo", p] => LengthSampler::Geometric {
                p: p.parse().map_err(|_| bad())?,
            },
            ["shifted-geo", o, p] => LengthSampler::ShiftedGeometric {
                offset: o.parse().map_err(|_| bad())?,
                p: p.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        ls.validate()?;
        Ok(ls)
    }
}

/// Draws an index from a weight vector.
pub(crate) fn sample_weights(weights: &[f64], rng: &mut impl Rng) -> Result<usize> {
    let dist = WeightedIndex::new(weights)
        .map_err(|e| Error::InvalidArgument(format!("invalid action distribution: {e}")))?;
    Ok(dist.sample(rng))
}

/// Samples one trace of length `len` with actions chosen by `sched`.
pub fn sample_trace(system: &mut impl System, sched: &dyn Scheduler, len: usize, rng: &mut impl Rng) -> Result<Observation> {
    let mut labels = vec![system.init(len)?];
    let mut actions = Vec::with_capacity(len.saturating_sub(1));
    for _ in 1..len {
        let dist = sched.distribution(&labels, &actions);
        let a = sched.actions().symbol(sample_weights(&dist, rng)?).to_string();
        labels.push(system.step(&a)?);
        actions.push(a);
    }
    Observation::new(labels, actions)
}

/// Draws `count` traces, each with its own length drawn from `len`.
pub fn passive_sample(
    system: &mut impl System,
    sched: &dyn Scheduler,
    len: &LengthSampler,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    len.validate()?;
    let mut data = Dataset::new();
    for _ in 0..count {
        let t = len.sample(rng);
        data.push(sample_trace(system, sched, t, rng)?);
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{reber_model, street_crossing_model};
    use crate::scheduler::UniformScheduler;

    #[test]
    fn reber_always_starts_with_start() {
        let mut sys = simulate(&reber_model(), 4).unwrap();
        for _ in 0..50 {
            assert_eq!(sys.init(3).unwrap(), "start");
        }
    }

    #[test]
    fn street_bumps_after_move_from_s3() {
        let m = street_crossing_model(0.75).unwrap();
        let mut sys = simulate(&m, 1).unwrap();
        let mut seen = 0;
        for _ in 0..200 {
            sys.init(3).unwrap();
            if sys.step("stay").unwrap() == "left" {
                // stay from s1 emitting left lands in s3
                assert_eq!(sys.step("move").unwrap(), "bump");
                seen += 1;
            }
        }
        assert!(seen > 100);
    }

    #[test]
    fn protocol_errors() {
        let mut sys = simulate(&reber_model(), 0).unwrap();
        assert!(matches!(sys.step("next"), Err(Error::Protocol(ProtocolError::NotInitialized))));
        sys.init(2).unwrap();
        assert!(matches!(sys.step("jump"), Err(Error::Protocol(ProtocolError::UnknownAction(_)))));
        sys.step("next").unwrap();
        assert!(matches!(sys.step("next"), Err(Error::Protocol(ProtocolError::TraceComplete))));
    }

    #[test]
    fn replay_serves_recorded_traces() {
        let data = Dataset::parse("a u b v c\nx\n").unwrap();
        let mut sys = ReplaySystem::new(&data);
        assert_eq!(sys.init(2).unwrap(), "a");
        assert!(matches!(sys.step("v"), Err(Error::Protocol(ProtocolError::ActionMismatch { .. }))));
        assert_eq!(sys.step("u").unwrap(), "b");
        assert!(sys.step("v").is_err());
        assert!(matches!(sys.init(2), Err(Error::Protocol(ProtocolError::TooShort { .. }))));
    }

    #[test]
    fn length_specs() {
        assert_eq!("fixed:12".parse::<LengthSampler>().unwrap(), LengthSampler::Fixed(12));
        assert_eq!(
            "shifted-geo:10:0.9".parse::<LengthSampler>().unwrap(),
            LengthSampler::ShiftedGeometric { offset: 10, p: 0.9 }
        );
        for bad in ["fixed:0", "geo:1.5", "geo:x", "poisson:3", "geo:0"] {
            assert!(bad.parse::<LengthSampler>().is_err(), "{bad}");
        }
        let ls: LengthSampler = "geo:0.8".parse().unwrap();
        assert_eq!(ls.to_string().parse::<LengthSampler>().unwrap(), ls);
    }

    #[test]
    fn shifted_geometric_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ls = LengthSampler::ShiftedGeometric { offset: 10, p: 0.9 };
        let draws: Vec<usize> = (0..2000).map(|_| ls.sample(&mut rng)).collect();
        assert_eq!(*draws.iter().min().unwrap(), 11);
        let frac = draws.iter().filter(|&&t| t == 11).count() as f64 / 2000.0;
        // 3 sigma binomial band around 0.9
        assert!((frac - 0.9).abs() < 3.0 * (0.9f64 * 0.1 / 2000.0).sqrt());
    }

    #[test]
    fn single_label_traces() {
        let m = reber_model();
        let mut sys = simulate(&m, 0).unwrap();
        let sched = UniformScheduler::new(m.actions().clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = passive_sample(&mut sys, &sched, &LengthSampler::Fixed(1), 3, &mut rng).unwrap();
        assert_eq!(d.len(), 3);
        assert!(d.iter().all(|(o, _)| o.len() == 1));
        assert!(passive_sample(&mut sys, &sched, &LengthSampler::Fixed(1), 0, &mut rng).is_err());
    }
}
