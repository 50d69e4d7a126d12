//! Labelled Markov decision processes.
//!
//! A [`Model`] has `n` hidden states, an [`Alphabet`] of emitted labels and an
//! [`ActionSet`]. The initial distribution `iota` assigns a weight to every
//! `(label, state)` pair, and for every action `a` and source state `s` the
//! kernel `tau_a(s)` is a distribution over `(label, target)` pairs. Markov
//! chains are models with exactly one action.
//!
//! Weights are stored densely: `iota` as `[label][state]` and `tau` as
//! `[action][from][label][to]`, so a single kernel row `tau_a(s)` is the
//! contiguous slice returned by [`Model::tau_row`].

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::Observation;

/// Reserved label emitted when an unavailable action is chosen.
pub const ERROR_LABEL: &str = "err";

/// Row sums must be within this distance of one.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
struct SymbolSet {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl SymbolSet {
    fn new<I, S>(kind: &str, symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = SymbolSet {
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        for sym in symbols {
            let sym = sym.into();
            if sym.is_empty() || sym.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!(
                    "{kind} symbol {sym:?} must be nonempty and contain no whitespace"
                )));
            }
            if set.index.contains_key(&sym) {
                return Err(Error::InvalidArgument(format!("duplicate {kind} `{sym}`")));
            }
            set.index.insert(sym.clone(), set.symbols.len());
            set.symbols.push(sym);
        }
        if set.symbols.is_empty() {
            return Err(Error::InvalidArgument(format!("empty {kind} set")));
        }
        Ok(set)
    }
}

/// Ordered set of labels. Always contains [`ERROR_LABEL`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet(SymbolSet);

impl Alphabet {
    /// Builds an alphabet, appending `err` when it is not already present.
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if !labels.iter().any(|l| l == ERROR_LABEL) {
            labels.push(ERROR_LABEL.to_string());
        }
        SymbolSet::new("label", labels).map(Alphabet)
    }

    pub fn len(&self) -> usize {
        self.0.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.0.index.get(label).copied()
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.0.symbols[id]
    }

    pub fn symbols(&self) -> &[String] {
        &self.0.symbols
    }

    pub fn error_id(&self) -> usize {
        self.0.index[ERROR_LABEL]
    }
}

/// Ordered set of actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet(SymbolSet);

impl ActionSet {
    pub fn new<I, S>(actions: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SymbolSet::new("action", actions).map(ActionSet)
    }

    pub fn len(&self) -> usize {
        self.0.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, action: &str) -> Option<usize> {
        self.0.index.get(action).copied()
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.0.symbols[id]
    }

    pub fn symbols(&self) -> &[String] {
        &self.0.symbols
    }
}

/// An observation translated to the integer ids of a particular model.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedObservation {
    pub labels: Vec<usize>,
    pub actions: Vec<usize>,
}

impl EncodedObservation {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    n_states: usize,
    alphabet: Alphabet,
    actions: ActionSet,
    iota: Vec<f64>,
    tau: Vec<f64>,
}

impl Model {
    /// A model with every weight set to zero; fill it with the setters.
    pub fn zeros(n_states: usize, alphabet: Alphabet, actions: ActionSet) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidArgument("a model needs at least one state".into()));
        }
        let (l, a) = (alphabet.len(), actions.len());
        Ok(Model {
            n_states,
            iota: vec![0.0; l * n_states],
            tau: vec![0.0; a * n_states * l * n_states],
            alphabet,
            actions,
        })
    }

    /// Builds a model from dense weight vectors laid out as described in the
    /// module docs. Only the shape is checked; use [`Model::validate`] for
    /// stochasticity.
    pub fn from_parts(
        n_states: usize,
        alphabet: Alphabet,
        actions: ActionSet,
        iota: Vec<f64>,
        tau: Vec<f64>,
    ) -> Result<Self> {
        let mut m = Model::zeros(n_states, alphabet, actions)?;
        if iota.len() != m.iota.len() || tau.len() != m.tau.len() {
            return Err(Error::InvalidModel(format!(
                "expected {} initial and {} transition weights, got {} and {}",
                m.iota.len(),
                m.tau.len(),
                iota.len(),
                tau.len()
            )));
        }
        m.iota = iota;
        m.tau = tau;
        Ok(m)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_labels(&self) -> usize {
        self.alphabet.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    /// Length of one distribution row over `(label, state)` pairs.
    pub fn row_len(&self) -> usize {
        self.alphabet.len() * self.n_states
    }

    pub fn iota(&self, label: usize, state: usize) -> f64 {
        self.iota[label * self.n_states + state]
    }

    pub fn iota_row(&self) -> &[f64] {
        &self.iota
    }

    pub fn iota_row_mut(&mut self) -> &mut [f64] {
        &mut self.iota
    }

    pub fn set_iota(&mut self, label: usize, state: usize, p: f64) {
        self.iota[label * self.n_states + state] = p;
    }

    fn tau_offset(&self, action: usize, from: usize) -> usize {
        (action * self.n_states + from) * self.row_len()
    }

    pub fn tau(&self, action: usize, from: usize, label: usize, to: usize) -> f64 {
        self.tau[self.tau_offset(action, from) + label * self.n_states + to]
    }

    pub fn set_tau(&mut self, action: usize, from: usize, label: usize, to: usize, p: f64) {
        let off = self.tau_offset(action, from);
        self.tau[off + label * self.n_states + to] = p;
    }

    /// The distribution `tau_a(s)` indexed by `label * n_states + to`.
    pub fn tau_row(&self, action: usize, from: usize) -> &[f64] {
        let off = self.tau_offset(action, from);
        &self.tau[off..off + self.row_len()]
    }

    pub fn tau_row_mut(&mut self, action: usize, from: usize) -> &mut [f64] {
        let off = self.tau_offset(action, from);
        let len = self.row_len();
        &mut self.tau[off..off + len]
    }

    /// All transition weights, laid out `[action][from][label][to]`.
    pub fn tau_weights(&self) -> &[f64] {
        &self.tau
    }

    pub fn label_id(&self, label: &str) -> Result<usize> {
        self.alphabet.id(label).ok_or_else(|| Error::UnknownSymbol {
            kind: "label",
            symbol: label.to_string(),
        })
    }

    pub fn action_id(&self, action: &str) -> Result<usize> {
        self.actions.id(action).ok_or_else(|| Error::UnknownSymbol {
            kind: "action",
            symbol: action.to_string(),
        })
    }

    pub fn set_iota_sym(&mut self, label: &str, state: usize, p: f64) -> Result<()> {
        let l = self.label_id(label)?;
        self.check_state(state)?;
        self.set_iota(l, state, p);
        Ok(())
    }

    pub fn set_tau_sym(
        &mut self,
        action: &str,
        from: usize,
        label: &str,
        to: usize,
        p: f64,
    ) -> Result<()> {
        let a = self.action_id(action)?;
        let l = self.label_id(label)?;
        self.check_state(from)?;
        self.check_state(to)?;
        self.set_tau(a, from, l, to, p);
        Ok(())
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::InvalidArgument(format!(
                "state {s} out of range for a {}-state model",
                self.n_states
            )));
        }
        Ok(())
    }

    pub fn encode(&self, o: &Observation) -> Result<EncodedObservation> {
        let labels = o
            .labels()
            .iter()
            .map(|l| self.label_id(l))
            .collect::<Result<Vec<_>>>()?;
        let actions = o
            .actions()
            .iter()
            .map(|a| self.action_id(a))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncodedObservation { labels, actions })
    }

    pub fn decode(&self, o: &EncodedObservation) -> Observation {
        Observation::new(
            o.labels.iter().map(|&l| self.alphabet.symbol(l).to_string()).collect(),
            o.actions.iter().map(|&a| self.actions.symbol(a).to_string()).collect(),
        )
        .expect("encoded observations are well formed")
    }

    /// Relabels hidden states: state `s` of `self` becomes state `perm[s]`.
    pub fn permute_states(&self, perm: &[usize]) -> Result<Model> {
        let n = self.n_states;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("not a permutation of the states".into()));
        }
        let mut out = Model::zeros(n, self.alphabet.clone(), self.actions.clone())?;
        for l in 0..self.n_labels() {
            for (s, &ps) in perm.iter().enumerate() {
                out.set_iota(l, ps, self.iota(l, s));
            }
        }
        for a in 0..self.n_actions() {
            for s in 0..n {
                for l in 0..self.n_labels() {
                    for t in 0..n {
                        out.set_tau(a, perm[s], l, perm[t], self.tau(a, s, l, t));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Mixes every distribution row with a uniform floor: each entry `w`
    /// becomes `(w + floor) / (1 + floor * row_len)`.
    pub fn with_floor(&self, floor: f64) -> Model {
        let mut out = self.clone();
        let k = self.row_len() as f64;
        let denom = 1.0 + floor * k;
        for w in out.iota.iter_mut().chain(out.tau.iter_mut()) {
            *w = (*w + floor) / denom;
        }
        out
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let check_entries = |row: &[f64], place: RowRef, out: &mut Vec<Violation>| {
            for (i, &w) in row.iter().enumerate() {
                if !(-STOCHASTIC_TOLERANCE..=1.0 + STOCHASTIC_TOLERANCE).contains(&w) || !w.is_finite() {
                    out.push(Violation::WeightOutOfRange {
                        row: place,
                        label: i / self.n_states,
                        to: i % self.n_states,
                        weight: w,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if !sum.is_finite() || (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                out.push(Violation::RowSum {
                    row: place,
                    deviation: 1.0 - sum,
                });
            }
        };
        check_entries(&self.iota, RowRef::Initial, &mut violations);
        for a in 0..self.n_actions() {
            for s in 0..self.n_states {
                check_entries(
                    self.tau_row(a, s),
                    RowRef::Transition { action: a, from: s },
                    &mut violations,
                );
            }
        }
        ValidationReport { violations }
    }

    pub fn to_file(&self) -> ModelFile {
        let mut iota = Vec::new();
        for l in 0..self.n_labels() {
            for s in 0..self.n_states {
                let p = self.iota(l, s);
                if p != 0.0 {
                    iota.push(IotaEntry {
                        label: self.alphabet.symbol(l).to_string(),
                        state: s,
                        p,
                    });
                }
            }
        }
        let mut tau = Vec::new();
        for a in 0..self.n_actions() {
            for s in 0..self.n_states {
                for l in 0..self.n_labels() {
                    for t in 0..self.n_states {
                        let p = self.tau(a, s, l, t);
                        if p != 0.0 {
                            tau.push(TauEntry {
                                action: self.actions.symbol(a).to_string(),
                                from: s,
                                label: self.alphabet.symbol(l).to_string(),
                                to: t,
                                p,
                            });
                        }
                    }
                }
            }
        }
        ModelFile {
            labels: self.alphabet.symbols().to_vec(),
            actions: self.actions.symbols().to_vec(),
            n_states: self.n_states,
            iota,
            tau,
        }
    }

    /// Builds a model from its file representation. Fails on unknown symbols,
    /// out-of-range states, or any validation violation.
    pub fn from_file(file: &ModelFile) -> Result<Model> {
        let alphabet = Alphabet::new(file.labels.iter().cloned())?;
        let actions = ActionSet::new(file.actions.iter().cloned())?;
        let mut m = Model::zeros(file.n_states, alphabet, actions)?;
        for e in &file.iota {
            m.set_iota_sym(&e.label, e.state, e.p)?;
        }
        for e in &file.tau {
            m.set_tau_sym(&e.action, e.from, &e.label, e.to, e.p)?;
        }
        let report = m.validate();
        if !report.is_empty() {
            return Err(Error::InvalidModel(report.to_string()));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model file serializes")
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let file: ModelFile = serde_json::from_str(text)?;
        Model::from_file(&file)
    }
}

/// Serialized model: omitted entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub labels: Vec<String>,
    pub actions: Vec<String>,
    pub n_states: usize,
    pub iota: Vec<IotaEntry>,
    pub tau: Vec<TauEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IotaEntry {
    pub label: String,
    pub state: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauEntry {
    pub action: String,
    pub from: usize,
    pub label: String,
    pub to: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowRef {
    Initial,
    Transition { action: usize, from: usize },
}

impl fmt::Display for RowRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowRef::Initial => write!(f, "iota"),
            RowRef::Transition { action, from } => write!(f, "tau[action {action}][state {from}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `deviation` is `1 - sum(row)`.
    RowSum { row: RowRef, deviation: f64 },
    WeightOutOfRange {
        row: RowRef,
        label: usize,
        to: usize,
        weight: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { row, deviation } => {
                write!(f, "{row} sums to {} (deviation {deviation:e})", 1.0 - deviation)
            }
            Violation::WeightOutOfRange {
                row,
                label,
                to,
                weight,
            } => write!(f, "{row} entry (label {label}, state {to}) = {weight} outside [0,1]"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
