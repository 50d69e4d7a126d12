//! Observation traces and datasets.
//!
//! The text format holds one observation per line as whitespace-separated
//! alternating tokens `l1 a1 l2 a2 ... lT`. Lines starting with `#` are
//! comments and blank lines are ignored. Repeated lines add multiplicity.
//!
//! Markov chain datasets may omit the action tokens altogether; see
//! [`Dataset::parse_for`].

use std::fmt;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::model::ActionSet;

/// An alternating label/action sequence that ends in a label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    labels: Vec<String>,
    actions: Vec<String>,
}

impl Observation {
    pub fn new(labels: Vec<String>, actions: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("an observation needs at least one label".into()));
        }
        if actions.len() + 1 != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels need {} actions, got {}",
                labels.len(),
                labels.len() - 1,
                actions.len()
            )));
        }
        Ok(Observation { labels, actions })
    }

    /// A chain observation: every step uses `action`.
    pub fn chain<I, S>(labels: I, action: &str) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let actions = vec![action.to_string(); labels.len().saturating_sub(1)];
        Observation::new(labels, actions)
    }

    /// Parses whitespace-separated alternating tokens.
    pub fn parse_alternating(line: &str) -> Result<Self> {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "expected an odd number of alternating label/action tokens, got {}",
                tokens.len()
            )));
        }
        let labels = tokens.iter().step_by(2).map(|t| t.to_string()).collect();
        let actions = tokens.iter().skip(1).step_by(2).map(|t| t.to_string()).collect();
        Observation::new(labels, actions)
    }

    /// Number of labels.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    /// Renders the labels only, for single-action datasets.
    pub fn labels_line(&self) -> String {
        self.labels.join(" ")
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.labels[0])?;
        for (a, l) in self.actions.iter().zip(&self.labels[1..]) {
            write!(f, " {a} {l}")?;
        }
        Ok(())
    }
}

/// A multiset of observations, kept in first-insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    entries: IndexMap<Observation, u64>,
}

impl Dataset {
    pub fn new() -> Self {
        Dataset::default()
    }

    pub fn push(&mut self, o: Observation) {
        self.push_n(o, 1);
    }

    pub fn push_n(&mut self, o: Observation, k: u64) {
        if k > 0 {
            *self.entries.entry(o).or_insert(0) += k;
        }
    }

    pub fn extend_from(&mut self, other: &Dataset) {
        for (o, k) in other.iter() {
            self.push_n(o.clone(), k);
        }
    }

    /// Distinct observations with their multiplicities.
    pub fn iter(&self) -> impl Iterator<Item = (&Observation, u64)> + '_ {
        self.entries.iter().map(|(o, &k)| (o, k))
    }

    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    /// Total number of observations, counting multiplicity.
    pub fn len(&self) -> u64 {
        self.entries.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn multiplicity(&self, o: &Observation) -> u64 {
        self.entries.get(o).copied().unwrap_or(0)
    }

    /// Total number of labels, counting multiplicity.
    pub fn label_count(&self) -> u64 {
        self.iter().map(|(o, k)| o.len() as u64 * k).sum()
    }

    /// Parses the alternating text format.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_lines(text, Observation::parse_alternating)
    }

    /// Parses with knowledge of the model's actions. When there is a single
    /// action, lines that are not a valid alternating encoding using that
    /// action are read as label-only chain observations.
    pub fn parse_for(text: &str, actions: &ActionSet) -> Result<Self> {
        if actions.len() != 1 {
            return Self::parse(text);
        }
        let only = actions.symbol(0);
        Self::parse_lines(text, |line| match Observation::parse_alternating(line) {
            Ok(o) if o.actions().iter().all(|a| a == only) => Ok(o),
            _ => Observation::chain(line.split_whitespace(), only),
        })
    }

    fn parse_lines(text: &str, parse: impl Fn(&str) -> Result<Observation>) -> Result<Self> {
        let mut data = Dataset::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let o = parse(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: match e {
                    Error::InvalidArgument(m) => m,
                    other => other.to_string(),
                },
            })?;
            data.push(o);
        }
        Ok(data)
    }

    /// Renders the alternating format, one line per observation (repeated by
    /// multiplicity).
    pub fn to_text(&self) -> String {
        self.render(|o| o.to_string())
    }

    /// Renders label-only lines, for single-action datasets.
    pub fn to_labels_text(&self) -> String {
        self.render(Observation::labels_line)
    }

    fn render(&self, line: impl Fn(&Observation) -> String) -> String {
        let mut out = String::new();
        for (o, k) in self.iter() {
            let l = line(o);
            for _ in 0..k {
                out.push_str(&l);
                out.push('\n');
            }
        }
        out
    }
}

impl FromIterator<Observation> for Dataset {
    fn from_iter<I: IntoIterator<Item = Observation>>(iter: I) -> Self {
        let mut d = Dataset::new();
        for o in iter {
            d.push(o);
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_shape_is_checked() {
        assert!(Observation::new(vec![], vec![]).is_err());
        assert!(Observation::new(vec!["a".into(), "b".into()], vec![]).is_err());
        let o = Observation::parse_alternating("a u b v c").unwrap();
        assert_eq!(o.len(), 3);
        assert_eq!(o.actions(), &["u".to_string(), "v".to_string()]);
        assert_eq!(o.to_string(), "a u b v c");
        assert!(Observation::parse_alternating("a u").is_err());
    }

    #[test]
    fn duplicates_add_multiplicity() {
        let text = "# header\na u b\n\na u b\nc\n";
        let d = Dataset::parse(text).unwrap();
        assert_eq!(d.distinct(), 2);
        assert_eq!(d.len(), 3);
        assert_eq!(d.to_text(), "a u b\na u b\nc\n");
    }

    #[test]
    fn parse_error_names_the_line() {
        let err = Dataset::parse("a u b\n# c\nx y\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn chain_datasets_accept_label_only_lines() {
        let actions = ActionSet::new(["next"]).unwrap();
        let d = Dataset::parse_for("start B T\nstart next B\n", &actions).unwrap();
        let first = d.iter().next().unwrap().0;
        assert_eq!(first.labels(), &["start", "B", "T"]);
        assert_eq!(first.actions(), &["next", "next"]);
        assert_eq!(d.distinct(), 2);
        assert_eq!(Dataset::parse_for(&d.to_labels_text(), &actions).unwrap(), d);
    }
}
