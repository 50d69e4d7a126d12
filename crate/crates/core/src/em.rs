//! Baum-Welch parameter estimation for labelled MDPs and Markov chains.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{posteriors, Posteriors, TrellisPair};
use crate::model::{EncodedObservation, Model};
use crate::observation::Dataset;

/// What to do with sequences the hypothesis cannot generate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZeroLikelihoodPolicy {
    /// Leave them out of the iteration and count them in the report.
    Skip,
    /// Mix the initial hypothesis with a uniform floor before iterating.
    Smooth { floor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    /// Stop once the total log-likelihood improves by at most this (nats).
    pub epsilon: f64,
    pub max_iterations: usize,
    pub zero_likelihood: ZeroLikelihoodPolicy,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            epsilon: 0.01,
            max_iterations: 300,
            zero_likelihood: ZeroLikelihoodPolicy::Skip,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if let ZeroLikelihoodPolicy::Smooth { floor } = self.zero_likelihood {
            if !(floor > 0.0 && floor <= 1e-3) {
                return Err(Error::InvalidArgument("smoothing floor must lie in (0, 1e-3]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmReport {
    /// Number of update steps performed.
    pub iterations: usize,
    /// Total log-likelihood of the usable sequences under `H_0, H_1, ...`.
    pub log_likelihood: Vec<f64>,
    /// Sequences (with multiplicity) skipped for zero likelihood.
    pub skipped: u64,
    /// Sequences (with multiplicity) that took part in learning.
    pub sequences: u64,
    /// States with no expected action selections, per update step.
    pub frozen_states: Vec<usize>,
}

impl EmReport {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood.last().expect("trace starts with H_0")
    }

    /// Final log-likelihood divided by the number of usable sequences.
    pub fn log_likelihood_per_sequence(&self) -> f64 {
        self.final_log_likelihood() / self.sequences as f64
    }
}

/// Expected counts accumulated over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    n_states: usize,
    n_labels: usize,
    n_actions: usize,
    /// `[label][state]`
    pub iota: Vec<f64>,
    /// `[action][from][label][to]`
    pub tau: Vec<f64>,
    /// `[action][from]`: expected number of times `action` left `from`.
    pub visits: Vec<f64>,
    /// Weight of the sequences accumulated.
    pub weight: f64,
    pub log_likelihood: f64,
    pub skipped: u64,
    pub used: u64,
}

impl SufficientStats {
    pub fn new(m: &Model) -> Self {
        let (n, l, a) = (m.n_states(), m.n_labels(), m.n_actions());
        SufficientStats {
            n_states: n,
            n_labels: l,
            n_actions: a,
            iota: vec![0.0; l * n],
            tau: vec![0.0; a * n * l * n],
            visits: vec![0.0; a * n],
            weight: 0.0,
            log_likelihood: 0.0,
            skipped: 0,
            used: 0,
        }
    }

    /// Adds one sequence's posteriors with the given multiplicity.
    pub fn accumulate(&mut self, post: &Posteriors, multiplicity: u64) {
        let n = self.n_states;
        let w = multiplicity as f64;
        let o = post.observation();
        let l0 = o.labels[0];
        for (s, g) in post.gamma_column(0).iter().enumerate() {
            self.iota[l0 * n + s] += w * g;
        }
        let row_len = self.n_labels * n;
        for t in 0..post.len() - 1 {
            let (a, l) = (o.actions[t], o.labels[t + 1]);
            let xi = post.xi_matrix(t);
            for s in 0..n {
                self.visits[a * n + s] += w * post.gamma(s, t);
                let off = (a * n + s) * row_len + l * n;
                for (acc, x) in self.tau[off..off + n].iter_mut().zip(&xi[s * n..(s + 1) * n]) {
                    *acc += w * x;
                }
            }
        }
        self.weight += w;
        self.used += multiplicity;
    }

    pub fn merge(&mut self, other: &SufficientStats) {
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.iota, &other.iota);
        add(&mut self.tau, &other.tau);
        add(&mut self.visits, &other.visits);
        self.weight += other.weight;
        self.log_likelihood += other.log_likelihood;
        self.skipped += other.skipped;
        self.used += other.used;
    }

    /// Expected action counts `[from][action]`.
    pub fn action_counts(&self) -> Vec<f64> {
        let (n, a) = (self.n_states, self.n_actions);
        let mut out = vec![0.0; n * a];
        for act in 0..a {
            for s in 0..n {
                out[s * a + act] = self.visits[act * n + s];
            }
        }
        out
    }
}

const CHUNK: usize = 64;

/// Encodes a dataset against a model's vocabulary.
pub fn encode_dataset(m: &Model, data: &Dataset) -> Result<Vec<(EncodedObservation, u64)>> {
    data.iter().map(|(o, k)| Ok((m.encode(o)?, k))).collect()
}

/// E-step: forward-backward on every sequence, accumulating expected counts.
///
/// Work is split into fixed-size chunks that are merged in order, so the
/// result does not depend on the number of worker threads.
pub fn expectation(m: &Model, data: &[(EncodedObservation, u64)]) -> SufficientStats {
    let partials: Vec<SufficientStats> = data
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut stats = SufficientStats::new(m);
            for (o, k) in chunk {
                let tr = TrellisPair::compute(m, o.clone());
                match posteriors(m, &tr) {
                    Ok(post) => {
                        stats.log_likelihood += *k as f64 * tr.log_likelihood();
                        stats.accumulate(&post, *k);
                    }
                    Err(_) => stats.skipped += k,
                }
            }
            stats
        })
        .collect();
    let mut total = SufficientStats::new(m);
    for p in &partials {
        total.merge(p);
    }
    total
}

/// M-step. Rows `tau_a(s)` whose state was never left by action `a` are
/// copied from `m`. Returns the new model and the number of states with no
/// expected action selections at all.
pub fn update(m: &Model, stats: &SufficientStats) -> Result<(Model, usize)> {
    if stats.used == 0 {
        return Err(Error::NoUsableSequences);
    }
    let n = m.n_states();
    let mut next = m.clone();
    for (dst, &num) in next.iota_row_mut().iter_mut().zip(&stats.iota) {
        *dst = (num / stats.weight).min(1.0);
    }
    let row_len = m.row_len();
    for a in 0..m.n_actions() {
        for s in 0..n {
            let den = stats.visits[a * n + s];
            if den > 0.0 {
                let off = (a * n + s) * row_len;
                for (dst, &num) in next.tau_row_mut(a, s).iter_mut().zip(&stats.tau[off..off + row_len]) {
                    *dst = (num / den).min(1.0);
                }
            }
        }
    }
    let frozen = (0..n)
        .filter(|&s| (0..m.n_actions()).all(|a| stats.visits[a * n + s] == 0.0))
        .count();
    Ok((next, frozen))
}

/// The update step from precomputed posteriors; `None` marks a skipped
/// sequence. `posteriors` is indexed like `data.iter()`.
pub fn update_from_posteriors(m: &Model, data: &Dataset, posteriors: &[Option<Posteriors>]) -> Result<Model> {
    if posteriors.len() != data.distinct() {
        return Err(Error::InvalidArgument("one posterior entry per distinct sequence expected".into()));
    }
    let mut stats = SufficientStats::new(m);
    for ((_, k), post) in data.iter().zip(posteriors) {
        match post {
            Some(p) => stats.accumulate(p, k),
            None => stats.skipped += k,
        }
    }
    update(m, &stats).map(|(model, _)| model)
}

/// Baum-Welch for MDPs: alternate expectation and update until the total
/// log-likelihood improves by at most `epsilon`, or `max_iterations` updates
/// have been made.
pub fn mdp_bw(data: &Dataset, hyp0: &Model, cfg: &EmConfig) -> Result<(Model, EmReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let report = hyp0.validate();
    if !report.is_empty() {
        return Err(Error::InvalidModel(report.to_string()));
    }
    let encoded = encode_dataset(hyp0, data)?;
    let mut hyp = match cfg.zero_likelihood {
        ZeroLikelihoodPolicy::Skip => hyp0.clone(),
        ZeroLikelihoodPolicy::Smooth { floor } => hyp0.with_floor(floor),
    };
    let mut stats = expectation(&hyp, &encoded);
    let mut report = EmReport {
        iterations: 0,
        log_likelihood: vec![stats.log_likelihood],
        skipped: stats.skipped,
        sequences: stats.used,
        frozen_states: Vec::new(),
    };
    loop {
        let (next, frozen) = update(&hyp, &stats)?;
        let next_stats = expectation(&next, &encoded);
        let gain = next_stats.log_likelihood - stats.log_likelihood;
        report.iterations += 1;
        report.frozen_states.push(frozen);
        report.log_likelihood.push(next_stats.log_likelihood);
        hyp = next;
        stats = next_stats;
        if gain <= cfg.epsilon || report.iterations >= cfg.max_iterations {
            break;
        }
    }
    report.skipped = stats.skipped;
    report.sequences = stats.used;
    Ok((hyp, report))
}

/// Baum-Welch for Markov chains: `mdp_bw` restricted to single-action
/// hypotheses and data.
pub fn mc_bw(data: &Dataset, hyp0: &Model, cfg: &EmConfig) -> Result<(Model, EmReport)> {
    if hyp0.n_actions() != 1 {
        return Err(Error::NotAChain(format!("hypothesis has {} actions", hyp0.n_actions())));
    }
    let only = hyp0.actions().symbol(0);
    if let Some((o, _)) = data.iter().find(|(o, _)| o.actions().iter().any(|a| a != only)) {
        return Err(Error::NotAChain(format!("observation `{o}` uses an action other than `{only}`")));
    }
    mdp_bw(data, hyp0, cfg)
}
