//! Parsing of model references, initial-hypothesis specs and reachability
//! queries given on the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mdpbw_core::builtin::{self, GridLayout, DEFAULT_STREET_P};
use mdpbw_core::eval::{bounded_reachability, bounded_until};
use mdpbw_core::{ActionSet, Alphabet, Dataset, Model};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelRef {
    Reber,
    Street { p: f64 },
    /// `None` is the builtin small grid.
    Grid(Option<PathBuf>),
    File(PathBuf),
}

impl FromStr for ModelRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "reber" => ModelRef::Reber,
            "street" => ModelRef::Street { p: DEFAULT_STREET_P },
            "grid" => ModelRef::Grid(None),
            _ => {
                if let Some(rest) = s.strip_prefix("street:") {
                    let p = rest
                        .strip_prefix("p=")
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| format!("expected `street:p=<value>`, got `{s}`"))?;
                    ModelRef::Street { p }
                } else if let Some(path) = s.strip_prefix("grid:") {
                    ModelRef::Grid(Some(path.into()))
                } else {
                    ModelRef::File(s.into())
                }
            }
        })
    }
}

impl fmt::Display for ModelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelRef::Reber => write!(f, "reber"),
            ModelRef::Street { p } => write!(f, "street:p={p}"),
            ModelRef::Grid(None) => write!(f, "grid"),
            ModelRef::Grid(Some(p)) => write!(f, "grid:{}", p.display()),
            ModelRef::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl ModelRef {
    pub fn load(&self) -> CliResult<Model> {
        match self {
            ModelRef::Reber => Ok(builtin::reber_model()),
            ModelRef::Street { p } => Ok(builtin::street_crossing_model(*p)?),
            ModelRef::Grid(None) => Ok(builtin::grid_world_model(&GridLayout::small())?),
            ModelRef::Grid(Some(path)) => {
                let text = read(path)?;
                let layout = GridLayout::from_toml(&text).map_err(|e| CliError::from(e).in_file(path))?;
                Ok(builtin::grid_world_model(&layout).map_err(|e| CliError::from(e).in_file(path))?)
            }
            ModelRef::File(path) => load_model_file(path),
        }
    }
}

pub fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn load_model_file(path: &Path) -> CliResult<Model> {
    Model::from_json(&read(path)?).map_err(|e| CliError::from(e).in_file(path))
}

/// Reads a dataset, accepting label-only lines when `actions` has a single
/// action.
pub fn load_dataset(path: &Path, actions: &ActionSet) -> CliResult<Dataset> {
    Dataset::parse_for(&read(path)?, actions).map_err(|e| CliError::from(e).in_file(path))
}

/// How the initial hypothesis is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Random { states: usize },
    File(PathBuf),
}

impl FromStr for InitSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.strip_prefix("random:") {
            Some(n) => match n.parse() {
                Ok(states) if states > 0 => Ok(InitSpec::Random { states }),
                _ => Err(format!("expected `random:<states>` with states >= 1, got `{s}`")),
            },
            None => Ok(InitSpec::File(s.into())),
        }
    }
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSpec::Random { states } => write!(f, "random:{states}"),
            InitSpec::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl InitSpec {
    pub fn build(&self, alphabet: &Alphabet, actions: &ActionSet, seed: u64) -> CliResult<Model> {
        match self {
            InitSpec::Random { states } => Ok(builtin::random_model(*states, alphabet.clone(), actions.clone(), seed)?),
            InitSpec::File(path) => load_model_file(path),
        }
    }
}

/// A maximal bounded reachability query:
/// `goal:<label>:<k` (`F^{<k}`), `goal:<label>:<=k` (`F^{<=k}`), or
/// `until:<avoid>:<goal>:<=k` (`not avoid U^{<=k} goal`).
#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Reach { goal: String, k: usize, strict: bool },
    Until { avoid: String, goal: String, k: usize },
}

impl FromStr for Query {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("bad query `{s}`; expected goal:<label>:<k, goal:<label>:<=k or until:<avoid>:<goal>:<=k");
        let parts: Vec<&str> = s.split(':').collect();
        let bound = |b: &str| -> Result<(usize, bool), String> {
            let (rest, strict) = match b.strip_prefix("<=") {
                Some(r) => (r, false),
                None => (b.strip_prefix('<').ok_or_else(bad)?, true),
            };
            let k: usize = rest.parse().map_err(|_| bad())?;
            if k == 0 {
                return Err(format!("query `{s}` needs a horizon of at least 1"));
            }
            Ok((k, strict))
        };
        match parts.as_slice() {
            ["goal", label, b] if !label.is_empty() => {
                let (k, strict) = bound(b)?;
                Ok(Query::Reach {
                    goal: label.to_string(),
                    k,
                    strict,
                })
            }
            ["until", avoid, goal, b] if !avoid.is_empty() && !goal.is_empty() => match bound(b)? {
                (k, false) => Ok(Query::Until {
                    avoid: avoid.to_string(),
                    goal: goal.to_string(),
                    k,
                }),
                _ => Err(format!("until queries take a non-strict bound `<=k`, got `{s}`")),
            },
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Reach { goal, k, strict: true } => write!(f, "goal:{goal}:<{k}"),
            Query::Reach { goal, k, strict: false } => write!(f, "goal:{goal}:<={k}"),
            Query::Until { avoid, goal, k } => write!(f, "until:{avoid}:{goal}:<={k}"),
        }
    }
}

impl Query {
    /// The maximal probability under `m`; a label the model does not know
    /// is never emitted, so reaching it has probability 0.
    pub fn evaluate(&self, m: &Model) -> CliResult<f64> {
        let known = |l: &str| m.alphabet().id(l).is_some();
        Ok(match self {
            Query::Reach { goal, .. } | Query::Until { goal, .. } if !known(goal) => 0.0,
            Query::Reach { goal, k, strict } => bounded_reachability(m, goal, *k, *strict)?,
            Query::Until { avoid, goal, k } if !known(avoid) => bounded_reachability(m, goal, *k, false)?,
            Query::Until { avoid, goal, k } => bounded_until(m, avoid, goal, *k)?,
        })
    }
}
