//! Forward-backward recurrences and the posteriors `gamma` and `xi`.
//!
//! Columns are rescaled at every time step: the stored forward column is
//! `alpha(., t) / c_t`-normalized to sum to one, the backward column is
//! divided by the same factors, and the log-likelihood is `sum_t ln c_t`.
//! Time steps are zero-based: column `t` corresponds to label `t`.

use crate::error::{Error, Result};
use crate::model::{EncodedObservation, Model};
use crate::observation::Observation;

/// Normalized forward columns and their scaling factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    n_states: usize,
    /// `T x S`, each column sums to one (or is all zero after a dead end).
    alpha: Vec<f64>,
    /// `c_t`; zero from the first step at which the observation is impossible.
    scale: Vec<f64>,
}

impl Forward {
    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Normalized forward weight, i.e. the filtered belief `P(X_t = s | prefix)`.
    pub fn alpha(&self, s: usize, t: usize) -> f64 {
        self.alpha[t * self.n_states + s]
    }

    pub fn column(&self, t: usize) -> &[f64] {
        &self.alpha[t * self.n_states..(t + 1) * self.n_states]
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn log_likelihood(&self) -> f64 {
        self.scale.iter().map(|c| c.ln()).sum()
    }

    pub fn is_possible(&self) -> bool {
        self.scale.iter().all(|&c| c > 0.0)
    }

    /// The unscaled `alpha(s, t)` of the plain recurrence.
    pub fn unscaled(&self, s: usize, t: usize) -> f64 {
        let log_prefix: f64 = self.scale[..=t].iter().map(|c| c.ln()).sum();
        self.alpha(s, t) * log_prefix.exp()
    }
}

/// Runs the scaled forward recurrence on an encoded observation.
pub fn forward_encoded(m: &Model, o: &EncodedObservation) -> Forward {
    let n = m.n_states();
    let len = o.len();
    let mut alpha = vec![0.0; len * n];
    let mut scale = vec![0.0; len];
    let l0 = o.labels[0];
    alpha[..n].copy_from_slice(&m.iota_row()[l0 * n..(l0 + 1) * n]);
    let mut alive = normalize(&mut alpha[..n], &mut scale[0]);
    for t in 1..len {
        if !alive {
            break;
        }
        let (prev, next) = alpha.split_at_mut(t * n);
        let prev = &prev[(t - 1) * n..];
        let next = &mut next[..n];
        let (a, l) = (o.actions[t - 1], o.labels[t]);
        for (from, &w) in prev.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = &m.tau_row(a, from)[l * n..(l + 1) * n];
            for (x, &p) in next.iter_mut().zip(row) {
                *x += w * p;
            }
        }
        alive = normalize(next, &mut scale[t]);
    }
    Forward { n_states: n, alpha, scale }
}

fn normalize(col: &mut [f64], scale: &mut f64) -> bool {
    let total: f64 = col.iter().sum();
    *scale = total;
    if total > 0.0 {
        for x in col.iter_mut() {
            *x /= total;
        }
        true
    } else {
        col.iter_mut().for_each(|x| *x = 0.0);
        false
    }
}

/// Scaled backward recurrence using the forward pass's factors. A zero factor
/// (impossible observation) is replaced by one so the result stays finite.
pub fn backward_encoded(m: &Model, o: &EncodedObservation, scale: &[f64]) -> Vec<f64> {
    let n = m.n_states();
    let len = o.len();
    let mut beta = vec![0.0; len * n];
    beta[(len - 1) * n..].iter_mut().for_each(|x| *x = 1.0);
    for t in (0..len.saturating_sub(1)).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * n);
        let cur = &mut cur[t * n..];
        let next = &next[..n];
        let (a, l) = (o.actions[t], o.labels[t + 1]);
        let c = if scale[t + 1] > 0.0 { scale[t + 1] } else { 1.0 };
        for (from, x) in cur.iter_mut().enumerate() {
            let row = &m.tau_row(a, from)[l * n..(l + 1) * n];
            let s: f64 = row.iter().zip(next).map(|(p, b)| p * b).sum();
            *x = s / c;
        }
    }
    beta
}

/// Forward and backward tables for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrellisPair {
    pub forward: Forward,
    beta: Vec<f64>,
    pub observation: EncodedObservation,
}

impl TrellisPair {
    pub fn compute(m: &Model, o: EncodedObservation) -> Self {
        let forward = forward_encoded(m, &o);
        let beta = backward_encoded(m, &o, forward.scale());
        TrellisPair { forward, beta, observation: o }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_states(&self) -> usize {
        self.forward.n_states
    }

    pub fn alpha(&self, s: usize, t: usize) -> f64 {
        self.forward.alpha(s, t)
    }

    /// Scaled backward weight.
    pub fn beta(&self, s: usize, t: usize) -> f64 {
        self.beta[t * self.n_states() + s]
    }

    pub fn scale(&self) -> &[f64] {
        self.forward.scale()
    }

    pub fn alpha_unscaled(&self, s: usize, t: usize) -> f64 {
        self.forward.unscaled(s, t)
    }

    /// The unscaled `beta(s, t)` of the plain recurrence.
    pub fn beta_unscaled(&self, s: usize, t: usize) -> f64 {
        let log_suffix: f64 = self.scale()[t + 1..]
            .iter()
            .map(|&c| if c > 0.0 { c.ln() } else { 0.0 })
            .sum();
        self.beta(s, t) * log_suffix.exp()
    }

    pub fn log_likelihood(&self) -> f64 {
        self.forward.log_likelihood()
    }
}

pub fn forward(m: &Model, o: &Observation) -> Result<Forward> {
    Ok(forward_encoded(m, &m.encode(o)?))
}

pub fn trellis(m: &Model, o: &Observation) -> Result<TrellisPair> {
    Ok(TrellisPair::compute(m, m.encode(o)?))
}

/// Natural-log likelihood; `-inf` for impossible observations.
pub fn log_likelihood(m: &Model, o: &Observation) -> Result<f64> {
    Ok(forward(m, o)?.log_likelihood())
}

/// State posteriors `gamma` and transition posteriors `xi` for one
/// observation.
///
/// Only `xi_a(s, t)(l, s')` with `a = a_t` and `l = l_{t+1}` can be nonzero,
/// so `xi` is stored as one `S x S` matrix per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    n_states: usize,
    gamma: Vec<f64>,
    xi: Vec<f64>,
    observation: EncodedObservation,
}

impl Posteriors {
    pub fn len(&self) -> usize {
        self.observation.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn observation(&self) -> &EncodedObservation {
        &self.observation
    }

    pub fn gamma(&self, s: usize, t: usize) -> f64 {
        self.gamma[t * self.n_states + s]
    }

    pub fn gamma_column(&self, t: usize) -> &[f64] {
        &self.gamma[t * self.n_states..(t + 1) * self.n_states]
    }

    /// `xi(s, t)(l_{t+1}, s')` for the action actually taken at step `t`.
    pub fn xi_step(&self, t: usize, s: usize, to: usize) -> f64 {
        let n = self.n_states;
        self.xi[(t * n + s) * n + to]
    }

    /// The `S x S` matrix of step `t`, indexed `[from * S + to]`.
    pub fn xi_matrix(&self, t: usize) -> &[f64] {
        let nn = self.n_states * self.n_states;
        &self.xi[t * nn..(t + 1) * nn]
    }

    /// Full `xi_a(s, t)(l, s')`, zero unless `a = a_t` and `l = l_{t+1}`.
    pub fn xi(&self, action: usize, t: usize, s: usize, label: usize, to: usize) -> f64 {
        if self.observation.actions[t] == action && self.observation.labels[t + 1] == label {
            self.xi_step(t, s, to)
        } else {
            0.0
        }
    }
}

pub fn posteriors(m: &Model, tr: &TrellisPair) -> Result<Posteriors> {
    if !tr.forward.is_possible() {
        return Err(Error::ZeroLikelihood);
    }
    let n = m.n_states();
    let len = tr.len();
    let o = &tr.observation;
    let mut gamma = vec![0.0; len * n];
    let mut norms = vec![0.0; len];
    for t in 0..len {
        let col = &mut gamma[t * n..(t + 1) * n];
        for (s, g) in col.iter_mut().enumerate() {
            *g = tr.alpha(s, t) * tr.beta(s, t);
        }
        let z: f64 = col.iter().sum();
        if z.is_nan() || z <= 0.0 {
            return Err(Error::ZeroLikelihood);
        }
        norms[t] = z;
        col.iter_mut().for_each(|g| *g /= z);
    }
    let mut xi = vec![0.0; len.saturating_sub(1) * n * n];
    for t in 0..len.saturating_sub(1) {
        let (a, l) = (o.actions[t], o.labels[t + 1]);
        let denom = norms[t] * tr.scale()[t + 1];
        let block = &mut xi[t * n * n..(t + 1) * n * n];
        for s in 0..n {
            let w = tr.alpha(s, t);
            if w == 0.0 {
                continue;
            }
            let row = &m.tau_row(a, s)[l * n..(l + 1) * n];
            for (to, &p) in row.iter().enumerate() {
                block[s * n + to] = w * p * tr.beta(to, t + 1) / denom;
            }
        }
    }
    Ok(Posteriors {
        n_states: n,
        gamma,
        xi,
        observation: o.clone(),
    })
}
