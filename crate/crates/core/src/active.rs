//! Count-balancing schedulers and the active learning loop.
//!
//! The learner tracks, per hidden state of the current hypothesis, how often
//! each action is expected to have been chosen. New traces are then sampled
//! with a scheduler that favors the actions least represented so far, mixed
//! over the belief about the current hidden state.

use rand::Rng;
use serde::Serialize;

use crate::em::{encode_dataset, expectation, mdp_bw, EmConfig, EmReport};
use crate::error::{Error, Result};
use crate::eval::mean_log_likelihood;
use crate::inference::forward_encoded;
use crate::model::{ActionSet, EncodedObservation, Model};
use crate::observation::{Dataset, Observation};
use crate::scheduler::{Scheduler, UniformScheduler};
use crate::sim::{passive_sample, sample_weights, LengthSampler, System};

/// Expected number of times each action was chosen from each hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionCountMatrix {
    n_states: usize,
    n_actions: usize,
    /// `[state][action]`
    counts: Vec<f64>,
}

impl ActionCountMatrix {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        ActionCountMatrix {
            n_states,
            n_actions,
            counts: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_actions = rows.first().map_or(0, Vec::len);
        if n_actions == 0 || rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::InvalidArgument("count rows must be nonempty and equally long".into()));
        }
        if rows.iter().flatten().any(|&c| c.is_nan() || c < 0.0) {
            return Err(Error::InvalidArgument("counts must be nonnegative".into()));
        }
        Ok(ActionCountMatrix {
            n_states: rows.len(),
            n_actions,
            counts: rows.concat(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.counts[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.counts[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn add(&mut self, s: usize, a: usize, w: f64) {
        self.counts[s * self.n_actions + a] += w;
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Posterior-weighted action counts over a dataset. Sequences with zero
/// likelihood are skipped; their multiplicity is returned alongside.
pub fn action_counts(m: &Model, data: &Dataset) -> Result<(ActionCountMatrix, u64)> {
    let encoded = encode_dataset(m, data)?;
    let stats = expectation(m, &encoded);
    if stats.used == 0 && stats.skipped > 0 {
        return Err(Error::NoUsableSequences);
    }
    let counts = ActionCountMatrix {
        n_states: m.n_states(),
        n_actions: m.n_actions(),
        counts: stats.action_counts(),
    };
    Ok((counts, stats.skipped))
}

/// A memoryless state-based scheduler `S -> Dist(A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemorylessScheduler {
    n_actions: usize,
    rows: Vec<f64>,
}

impl MemorylessScheduler {
    pub fn n_states(&self) -> usize {
        self.rows.len() / self.n_actions
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.rows[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Mixes the rows by a belief over states.
    pub fn mix(&self, belief: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions];
        for (s, &b) in belief.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(s)) {
                *o += b * p;
            }
        }
        out
    }
}

fn opposite_row(counts: &[f64], out: &mut [f64]) {
    let k = counts.len();
    let total: f64 = counts.iter().sum();
    if k == 1 {
        out[0] = 1.0;
    } else if total > 0.0 {
        for (o, &c) in out.iter_mut().zip(counts) {
            *o = (1.0 - c / total) / (k - 1) as f64;
        }
    } else {
        out.iter_mut().for_each(|o| *o = 1.0 / k as f64);
    }
}

/// Chooses actions with probability opposite to their observed frequency:
/// `(1 - m_sa / sum_a' m_sa') / (|A| - 1)`. Rows without counts are uniform.
pub fn opposite_scheduler(counts: &ActionCountMatrix) -> MemorylessScheduler {
    let mut rows = vec![0.0; counts.counts.len()];
    for s in 0..counts.n_states {
        let range = s * counts.n_actions..(s + 1) * counts.n_actions;
        opposite_row(counts.row(s), &mut rows[range]);
    }
    MemorylessScheduler {
        n_actions: counts.n_actions,
        rows,
    }
}

/// The belief-weighted scheduler: the opposite scheduler mixed over the
/// filtered state distribution of the hypothesis given the prefix.
#[derive(Debug, Clone)]
pub struct BeliefScheduler<'a> {
    model: &'a Model,
    memoryless: MemorylessScheduler,
}

pub fn belief_scheduler<'a>(m: &'a Model, counts: &ActionCountMatrix) -> BeliefScheduler<'a> {
    BeliefScheduler {
        model: m,
        memoryless: opposite_scheduler(counts),
    }
}

impl BeliefScheduler<'_> {
    pub fn memoryless(&self) -> &MemorylessScheduler {
        &self.memoryless
    }

    fn uniform(&self) -> Vec<f64> {
        let k = self.model.n_actions();
        vec![1.0 / k as f64; k]
    }
}

impl Scheduler for BeliefScheduler<'_> {
    fn actions(&self) -> &ActionSet {
        self.model.actions()
    }

    fn distribution(&self, labels: &[String], actions: &[String]) -> Vec<f64> {
        let Ok(prefix) = Observation::new(labels.to_vec(), actions.to_vec()) else {
            return self.uniform();
        };
        let Ok(encoded) = self.model.encode(&prefix) else {
            return self.uniform();
        };
        let fwd = forward_encoded(self.model, &encoded);
        if !fwd.is_possible() {
            return self.uniform();
        }
        self.memoryless.mix(fwd.column(fwd.len() - 1))
    }
}

/// A trace produced by [`active_sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveTrace {
    pub observation: Observation,
    /// The hypothesis could not explain an observed label; actions after
    /// that point were chosen uniformly.
    pub collapsed: bool,
}

/// Samples one trace of length `len` with the belief-weighted opposite
/// scheduler, updating `counts` online with the belief mass of every step.
pub fn active_sample(
    system: &mut impl System,
    m: &Model,
    counts: &mut ActionCountMatrix,
    len: usize,
    rng: &mut impl Rng,
) -> Result<ActiveTrace> {
    if len == 0 {
        return Err(Error::InvalidArgument("trace length must be at least 1".into()));
    }
    if counts.n_states != m.n_states() || counts.n_actions != m.n_actions() {
        return Err(Error::InvalidArgument("count matrix does not match the hypothesis".into()));
    }
    let n = m.n_states();
    let first = system.init(len)?;
    let mut enc = EncodedObservation {
        labels: vec![m.label_id(&first)?],
        actions: Vec::new(),
    };
    let mut belief: Vec<f64> = m.iota_row()[enc.labels[0] * n..(enc.labels[0] + 1) * n].to_vec();
    let mut collapsed = !normalize(&mut belief);
    let mut sigma = vec![0.0; m.n_actions()];
    let mut row = vec![0.0; m.n_actions()];
    let mut next = vec![0.0; n];
    for _ in 1..len {
        let dist = if collapsed {
            vec![1.0 / m.n_actions() as f64; m.n_actions()]
        } else {
            sigma.iter_mut().for_each(|x| *x = 0.0);
            for (s, &b) in belief.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                opposite_row(counts.row(s), &mut row);
                for (x, &p) in sigma.iter_mut().zip(&row) {
                    *x += b * p;
                }
            }
            sigma.clone()
        };
        let a = sample_weights(&dist, rng)?;
        let label = system.step(m.actions().symbol(a))?;
        let l = m.label_id(&label)?;
        enc.actions.push(a);
        enc.labels.push(l);
        if collapsed {
            continue;
        }
        next.iter_mut().for_each(|x| *x = 0.0);
        for (s, &b) in belief.iter().enumerate() {
            counts.add(s, a, b);
            if b == 0.0 {
                continue;
            }
            let row = &m.tau_row(a, s)[l * n..(l + 1) * n];
            for (x, &p) in next.iter_mut().zip(row) {
                *x += b * p;
            }
        }
        std::mem::swap(&mut belief, &mut next);
        collapsed = !normalize(&mut belief);
    }
    Ok(ActiveTrace {
        observation: m.decode(&enc),
        collapsed,
    })
}

fn normalize(v: &mut [f64]) -> bool {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
        true
    } else {
        false
    }
}

/// How new traces are collected in each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Belief-weighted opposite-frequency scheduler.
    Active,
    /// Memoryless uniform action choice.
    PassiveUniform,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Active => "active",
            Strategy::PassiveUniform => "passive-uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub iterations: usize,
    pub per_iteration: usize,
    pub lengths: LengthSampler,
    /// Re-fit from the current hypothesis (true) or from the initial one.
    pub warm_start: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            iterations: 200,
            per_iteration: 1,
            lengths: LengthSampler::Fixed(12),
            warm_start: true,
        }
    }
}

/// One row of a learning curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub strategy: Strategy,
    pub iteration: usize,
    pub dataset_size: u64,
    pub train_ll_per_seq: f64,
    pub test_ll_per_seq: Option<f64>,
    pub skipped_traces: u64,
}

#[derive(Debug, Clone)]
pub struct LearningOutcome {
    pub model: Model,
    pub dataset: Dataset,
    pub curve: Vec<CurveRow>,
    /// Report of the last Baum-Welch fit.
    pub report: EmReport,
    /// Traces whose belief collapsed during active sampling.
    pub collapsed_traces: usize,
}

/// The active learning loop: fit `hyp0` to `data0`, then repeatedly build
/// action counts, sample new traces with the belief-weighted scheduler, and
/// re-fit.
pub fn active_learn(
    system: &mut impl System,
    hyp0: &Model,
    data0: &Dataset,
    schedule: &Schedule,
    cfg: &EmConfig,
    test: Option<&Dataset>,
    rng: &mut impl Rng,
) -> Result<LearningOutcome> {
    incremental_learn(Strategy::Active, system, hyp0, data0, schedule, cfg, test, rng)
}

/// Same loop as [`active_learn`] with memoryless uniform sampling, for
/// comparison at equal trace budgets.
pub fn passive_learn(
    system: &mut impl System,
    hyp0: &Model,
    data0: &Dataset,
    schedule: &Schedule,
    cfg: &EmConfig,
    test: Option<&Dataset>,
    rng: &mut impl Rng,
) -> Result<LearningOutcome> {
    incremental_learn(Strategy::PassiveUniform, system, hyp0, data0, schedule, cfg, test, rng)
}

#[allow(clippy::too_many_arguments)]
pub fn incremental_learn(
    strategy: Strategy,
    system: &mut impl System,
    hyp0: &Model,
    data0: &Dataset,
    schedule: &Schedule,
    cfg: &EmConfig,
    test: Option<&Dataset>,
    rng: &mut impl Rng,
) -> Result<LearningOutcome> {
    schedule.lengths.validate()?;
    let (mut hyp, mut report) = mdp_bw(data0, hyp0, cfg)?;
    let mut data = data0.clone();
    let mut curve = Vec::with_capacity(schedule.iterations);
    let mut collapsed_traces = 0;
    let uniform = UniformScheduler::new(hyp0.actions().clone());
    for iteration in 1..=schedule.iterations {
        match strategy {
            Strategy::Active => {
                let (mut counts, _) = action_counts(&hyp, &data)?;
                for _ in 0..schedule.per_iteration {
                    let len = schedule.lengths.sample(rng);
                    let trace = active_sample(system, &hyp, &mut counts, len, rng)?;
                    collapsed_traces += usize::from(trace.collapsed);
                    data.push(trace.observation);
                }
            }
            Strategy::PassiveUniform => {
                if schedule.per_iteration > 0 {
                    let fresh = passive_sample(system, &uniform, &schedule.lengths, schedule.per_iteration, rng)?;
                    data.extend_from(&fresh);
                }
            }
        }
        let start = if schedule.warm_start { &hyp } else { hyp0 };
        let (next, next_report) = mdp_bw(&data, start, cfg)?;
        hyp = next;
        report = next_report;
        let test_ll = test.map(|t| mean_log_likelihood(&hyp, t)).transpose()?.map(|s| s.mean);
        curve.push(CurveRow {
            strategy,
            iteration,
            dataset_size: data.len(),
            train_ll_per_seq: report.log_likelihood_per_sequence(),
            test_ll_per_seq: test_ll,
            skipped_traces: report.skipped,
        });
    }
    Ok(LearningOutcome {
        model: hyp,
        dataset: data,
        curve,
        report,
        collapsed_traces,
    })
}
