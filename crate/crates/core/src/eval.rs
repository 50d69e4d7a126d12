//! Model quality metrics: normalized log-likelihood, empirical KL divergence
//! against a known model, and bounded maximal reachability.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::inference::log_likelihood;
use crate::model::Model;
use crate::observation::{Dataset, Observation};

/// Serializes non-finite values as the strings `inf` / `-inf` / `nan`.
fn finite_or_string<S: Serializer>(v: &f64, ser: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        ser.serialize_f64(*v)
    } else {
        ser.serialize_str(&v.to_string())
    }
}

fn option_finite_or_string<S: Serializer>(v: &Option<f64>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => finite_or_string(x, ser),
        None => ser.serialize_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LikelihoodSummary {
    /// Nats per sequence; `-inf` when some sequence is impossible.
    #[serde(serialize_with = "finite_or_string")]
    pub mean: f64,
    /// Sequences (with multiplicity) of zero likelihood.
    pub zero_count: u64,
    pub sequences: u64,
}

/// Log-likelihood where labels outside the model's alphabet count as
/// impossible rather than as an error.
fn trace_log_likelihood(m: &Model, o: &Observation) -> Result<f64> {
    match log_likelihood(m, o) {
        Err(Error::UnknownSymbol { kind: "label", .. }) => Ok(f64::NEG_INFINITY),
        other => other,
    }
}

/// Mean natural-log likelihood per sequence, weighted by multiplicity.
pub fn mean_log_likelihood(m: &Model, data: &Dataset) -> Result<LikelihoodSummary> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut total = 0.0;
    let mut zero_count = 0;
    for (o, k) in data.iter() {
        let ll = trace_log_likelihood(m, o)?;
        if ll == f64::NEG_INFINITY {
            zero_count += k;
        }
        total += k as f64 * ll;
    }
    let sequences = data.len();
    Ok(LikelihoodSummary {
        mean: total / sequences as f64,
        zero_count,
        sequences,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlEstimate {
    /// Nats per sequence; `+inf` when the hypothesis rules out a test trace.
    #[serde(serialize_with = "finite_or_string")]
    pub value: f64,
    /// Standard error of the mean log-ratio (finite case only).
    #[serde(serialize_with = "finite_or_string")]
    pub std_error: f64,
    /// Test sequences (with multiplicity) the hypothesis cannot generate.
    pub hyp_zero_count: u64,
}

/// Monte-Carlo estimate of the KL divergence from `true_m` to `hyp`: the
/// mean of `ln L(true_m, o) - ln L(hyp, o)` over the test traces.
pub fn kl_estimate(true_m: &Model, hyp: &Model, test: &Dataset) -> Result<KlEstimate> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let mut ratios = Vec::with_capacity(test.distinct());
    let mut hyp_zero_count = 0;
    for (o, k) in test.iter() {
        let lt = trace_log_likelihood(true_m, o)?;
        if lt == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!(
                "test trace `{o}` is impossible under the true model"
            )));
        }
        let lh = trace_log_likelihood(hyp, o)?;
        if lh == f64::NEG_INFINITY {
            hyp_zero_count += k;
        }
        ratios.push((lt - lh, k as f64));
    }
    let n = test.len() as f64;
    if hyp_zero_count > 0 {
        return Ok(KlEstimate {
            value: f64::INFINITY,
            std_error: f64::INFINITY,
            hyp_zero_count,
        });
    }
    let mean = ratios.iter().map(|(r, w)| r * w).sum::<f64>() / n;
    let var = if n > 1.0 {
        ratios.iter().map(|(r, w)| w * (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(KlEstimate {
        value: mean,
        std_error: (var / n).sqrt(),
        hyp_zero_count,
    })
}

/// Value iteration shared by the reachability queries: the maximal
/// probability, over all schedulers, of emitting `goal` within `h` steps
/// after the initial emission without first emitting `avoid`.
fn max_reach(m: &Model, goal: usize, avoid: Option<usize>, h: usize) -> f64 {
    let n = m.n_states();
    let weight = |l: usize, v: &[f64], s: usize| -> f64 {
        if l == goal {
            1.0
        } else if Some(l) == avoid {
            0.0
        } else {
            v[s]
        }
    };
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..h {
        for (s, out) in next.iter_mut().enumerate() {
            *out = (0..m.n_actions())
                .map(|a| {
                    let row = m.tau_row(a, s);
                    (0..m.n_labels())
                        .map(|l| (0..n).map(|t| row[l * n + t] * weight(l, &v, t)).sum::<f64>())
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
        }
        std::mem::swap(&mut v, &mut next);
    }
    let mut total = 0.0;
    for l in 0..m.n_labels() {
        for s in 0..n {
            total += m.iota(l, s) * weight(l, &v, s);
        }
    }
    total.min(1.0)
}

/// `P_max(F^{<k} goal)` when `strict`, else `P_max(F^{<=k} goal)`.
///
/// The initial emission is time 0, so the strict form allows `k - 1` further
/// emissions and the non-strict form `k`.
pub fn bounded_reachability(m: &Model, goal: &str, k: usize, strict: bool) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let g = m.label_id(goal)?;
    Ok(max_reach(m, g, None, if strict { k - 1 } else { k }))
}

/// `P_max(not avoid U^{<=k} goal)`.
pub fn bounded_until(m: &Model, avoid: &str, goal: &str, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let (a, g) = (m.label_id(avoid)?, m.label_id(goal)?);
    if a == g {
        return Err(Error::InvalidArgument("avoid and goal labels must differ".into()));
    }
    Ok(max_reach(m, g, Some(a), k))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub query: String,
    pub probability: f64,
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub model: String,
    #[serde(serialize_with = "option_finite_or_string")]
    pub train_ll_per_seq: Option<f64>,
    #[serde(serialize_with = "option_finite_or_string")]
    pub test_ll_per_seq: Option<f64>,
    pub test_zero_count: u64,
    #[serde(serialize_with = "option_finite_or_string")]
    pub kl: Option<f64>,
    #[serde(serialize_with = "option_finite_or_string")]
    pub kl_std_error: Option<f64>,
    pub queries: Vec<QueryResult>,
}
