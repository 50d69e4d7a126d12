//! Brute-force oracles shared by the integration tests. Everything here
//! enumerates hidden-state paths or schedulers explicitly and never calls the
//! forward-backward or value-iteration code it is used to check.

#![allow(dead_code, clippy::needless_range_loop)]

use mdpbw_core::builtin::random_model;
use mdpbw_core::model::{EncodedObservation, Model};
use mdpbw_core::sim::{passive_sample, simulate};
use mdpbw_core::{ActionSet, Alphabet, Dataset, LengthSampler, UniformScheduler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn alphabet(n_labels: usize) -> Alphabet {
    // `err` is appended, so ask for one fewer ordinary label.
    Alphabet::new((0..n_labels.saturating_sub(1)).map(|i| format!("l{i}"))).unwrap()
}

pub fn actions(n_actions: usize) -> ActionSet {
    ActionSet::new((0..n_actions).map(|i| format!("a{i}"))).unwrap()
}

/// A random model where each row keeps a random subset of its entries.
pub fn sparse_model(n: usize, n_labels: usize, n_actions: usize, seed: u64, keep: f64) -> Model {
    let dense = random_model(n, alphabet(n_labels), actions(n_actions), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut m = dense.clone();
    let mut sparsify = |row: &mut [f64]| {
        let pick = rng.random_range(0..row.len());
        for (i, w) in row.iter_mut().enumerate() {
            if i != pick && rng.random::<f64>() > keep {
                *w = 0.0;
            }
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= total);
    };
    sparsify(m.iota_row_mut());
    for a in 0..n_actions {
        for s in 0..n {
            sparsify(m.tau_row_mut(a, s));
        }
    }
    m
}

/// Traces drawn from `m` with uniformly random actions.
pub fn sample_dataset(m: &Model, count: usize, max_len: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sys = simulate(m, seed).unwrap();
    let sched = UniformScheduler::new(m.actions().clone());
    let mut data = Dataset::new();
    for _ in 0..count {
        let len = rng.random_range(1..=max_len);
        data.extend_from(&passive_sample(&mut sys, &sched, &LengthSampler::Fixed(len), 1, &mut rng).unwrap());
    }
    data
}

/// Calls `f(path, weight)` for every hidden-state path with nonzero weight.
pub fn for_each_path(m: &Model, o: &EncodedObservation, mut f: impl FnMut(&[usize], f64)) {
    let n = m.n_states();
    let len = o.labels.len();
    let total = n.pow(len as u32);
    let mut path = vec![0; len];
    for code in 0..total {
        let mut c = code;
        for p in path.iter_mut() {
            *p = c % n;
            c /= n;
        }
        let mut w = m.iota(o.labels[0], path[0]);
        for t in 1..len {
            w *= m.tau(o.actions[t - 1], path[t - 1], o.labels[t], path[t]);
        }
        if w > 0.0 {
            f(&path, w);
        }
    }
}

pub fn brute_likelihood(m: &Model, o: &EncodedObservation) -> f64 {
    let mut total = 0.0;
    for_each_path(m, o, |_, w| total += w);
    total
}

/// Sum over paths of the weight up to step `t`, ending in `s` (the unscaled
/// forward value).
pub fn brute_alpha(m: &Model, o: &EncodedObservation, s: usize, t: usize) -> f64 {
    let prefix = EncodedObservation {
        labels: o.labels[..=t].to_vec(),
        actions: o.actions[..t].to_vec(),
    };
    let mut total = 0.0;
    for_each_path(m, &prefix, |p, w| {
        if p[t] == s {
            total += w
        }
    });
    total
}

/// `(gamma[t][s], xi[t][s][s'])` by explicit path enumeration.
pub fn brute_posteriors(m: &Model, o: &EncodedObservation) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let n = m.n_states();
    let len = o.labels.len();
    let mut gamma = vec![vec![0.0; n]; len];
    let mut xi = vec![vec![vec![0.0; n]; n]; len.saturating_sub(1)];
    let mut z = 0.0;
    for_each_path(m, o, |p, w| {
        z += w;
        for t in 0..len {
            gamma[t][p[t]] += w;
            if t + 1 < len {
                xi[t][p[t]][p[t + 1]] += w;
            }
        }
    });
    for col in gamma.iter_mut() {
        col.iter_mut().for_each(|g| *g /= z);
    }
    for mat in xi.iter_mut() {
        for row in mat.iter_mut() {
            row.iter_mut().for_each(|x| *x /= z);
        }
    }
    (gamma, xi)
}

/// Maximal probability of emitting `goal` within `h` steps after the initial
/// emission (without emitting `avoid` first), maximized by enumerating every
/// deterministic scheduler that maps `(step, state)` to an action.
pub fn brute_reach(m: &Model, goal: usize, avoid: Option<usize>, h: usize) -> f64 {
    let n = m.n_states();
    let k = m.n_actions();
    let slots = h * n;
    let total = k.pow(slots as u32);
    let mut best: f64 = 0.0;
    let mut choice = vec![0; slots];
    for code in 0..total {
        let mut c = code;
        for x in choice.iter_mut() {
            *x = c % k;
            c /= k;
        }
        // Evaluate this fixed scheduler backwards in time; no maximization
        // happens inside the evaluation.
        let mut v = vec![0.0; n];
        for step in (0..h).rev() {
            let mut next = vec![0.0; n];
            for (s, out) in next.iter_mut().enumerate() {
                let a = choice[step * n + s];
                for l in 0..m.n_labels() {
                    for t in 0..n {
                        let w = m.tau(a, s, l, t);
                        if l == goal {
                            *out += w;
                        } else if Some(l) != avoid {
                            *out += w * v[t];
                        }
                    }
                }
            }
            v = next;
        }
        let mut p = 0.0;
        for l in 0..m.n_labels() {
            for s in 0..n {
                let w = m.iota(l, s);
                if l == goal {
                    p += w;
                } else if Some(l) != avoid {
                    p += w * v[s];
                }
            }
        }
        best = best.max(p);
    }
    best
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() < 1e-300
}

/// Largest absolute difference between corresponding parameters.
pub fn max_param_diff(a: &Model, b: &Model) -> f64 {
    let mut d: f64 = 0.0;
    for (x, y) in a.iota_row().iter().zip(b.iota_row()) {
        d = d.max((x - y).abs());
    }
    for act in 0..a.n_actions() {
        for s in 0..a.n_states() {
            for (x, y) in a.tau_row(act, s).iter().zip(b.tau_row(act, s)) {
                d = d.max((x - y).abs());
            }
        }
    }
    d
}
