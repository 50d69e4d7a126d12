//! Builtin models: the Reber grammar chain, the street-crossing MDP, a
//! parametric grid world, and seeded random hypotheses.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{ActionSet, Alphabet, Model};

/// Action name used by the builtin Markov chains.
pub const CHAIN_ACTION: &str = "next";

/// Default probability that the stranger changes side.
pub const DEFAULT_STREET_P: f64 = 0.75;

/// The seven-state Reber grammar chain. States `s1..s7` are `0..6`.
pub fn reber_model() -> Model {
    let alphabet = Alphabet::new(["start", "B", "T", "P", "S", "X", "V", "E"])
        .expect("static alphabet");
    let actions = ActionSet::new([CHAIN_ACTION]).expect("static actions");
    let mut m = Model::zeros(7, alphabet, actions).expect("seven states");
    let edges: [(usize, &str, usize, f64); 12] = [
        (0, "B", 1, 1.0),
        (1, "T", 2, 0.5),
        (1, "P", 3, 0.5),
        (2, "S", 2, 0.6),
        (2, "X", 4, 0.4),
        (3, "T", 3, 0.7),
        (3, "V", 5, 0.3),
        (4, "S", 6, 0.5),
        (4, "X", 3, 0.5),
        (5, "V", 6, 0.5),
        (5, "P", 4, 0.5),
        (6, "E", 6, 1.0),
    ];
    m.set_iota_sym("start", 0, 1.0).expect("static");
    for (from, label, to, p) in edges {
        m.set_tau_sym(CHAIN_ACTION, from, label, to, p).expect("static");
    }
    m
}

/// The street-crossing MDP. States `s1, s2, s3, hit, ok` are `0..5`.
pub fn street_crossing_model(p: f64) -> Result<Model> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "side-change probability must lie in (0,1), got {p}"
        )));
    }
    let alphabet = Alphabet::new(["start", "left", "right", "bump", "avoid"])?;
    let actions = ActionSet::new(["stay", "move"])?;
    let mut m = Model::zeros(5, alphabet, actions)?;
    const S1: usize = 0;
    const S2: usize = 1;
    const S3: usize = 2;
    const HIT: usize = 3;
    const OK: usize = 4;
    m.set_iota_sym("start", S1, 1.0)?;
    let q = 1.0 - p;
    let edges = [
        ("stay", S1, "left", S3, p),
        ("stay", S1, "right", S1, q),
        ("move", S1, "left", S2, p),
        ("move", S1, "right", S3, q),
        ("stay", S2, "right", S3, p),
        ("stay", S2, "left", S2, q),
        ("move", S2, "right", S1, p),
        ("move", S2, "left", S3, q),
        ("move", S3, "bump", HIT, 1.0),
        ("stay", S3, "avoid", OK, 1.0),
        ("stay", HIT, "bump", HIT, 1.0),
        ("move", HIT, "bump", HIT, 1.0),
        ("stay", OK, "avoid", OK, 1.0),
        ("move", OK, "avoid", OK, 1.0),
    ];
    for (a, from, l, to, w) in edges {
        m.set_tau_sym(a, from, l, to, w)?;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Terrain {
    pub label: String,
    pub slip: f64,
}

/// A rectangular grid of terrain characters. `#` marks walls.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct GridLayout {
    pub rows: Vec<String>,
    pub terrain: BTreeMap<char, Terrain>,
    /// `[row, column]` of the initial cell.
    pub init: Option<[usize; 2]>,
    /// `[row, column]` of the absorbing goal cell, which emits `goal`.
    #[serde(default)]
    pub goal: Option<[usize; 2]>,
}

pub const WALL: char = '#';
pub const GOAL_LABEL: &str = "goal";

/// Compass moves in `N, E, S, W` order as `(row, column)` deltas.
const MOVES: [(&str, (isize, isize)); 4] = [
    ("N", (-1, 0)),
    ("E", (0, 1)),
    ("S", (1, 0)),
    ("W", (0, -1)),
];

/// A 3x3 grid with mixed terrain, starting in the middle cell with the goal
/// in the top-right corner.
pub const SMALL_GRID: &str = r#"
rows = ["GMC", "SCM", "CGS"]
init = [1, 1]
goal = [0, 2]

[terrain]
C = { label = "concrete", slip = 0.0 }
G = { label = "grass", slip = 0.2 }
M = { label = "mud", slip = 0.4 }
S = { label = "sand", slip = 0.25 }
"#;

impl GridLayout {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            message: e.message().to_string(),
        })
    }

    pub fn small() -> Self {
        GridLayout::from_toml(SMALL_GRID).expect("builtin grid parses")
    }

    fn cell(&self, r: isize, c: isize) -> Option<char> {
        if r < 0 || c < 0 {
            return None;
        }
        let ch = self.rows.get(r as usize)?.chars().nth(c as usize)?;
        (ch != WALL).then_some(ch)
    }
}

/// Builds the grid-world MDP over actions `N, E, S, W`.
///
/// Moving toward a cell of terrain `x` succeeds with probability
/// `1 - slip(x)`; the slip mass is split evenly between the two diagonal
/// cells flanking the intended direction, and a diagonal that is off-grid or
/// a wall falls back onto the intended cell. Moves into walls or off the grid
/// emit `err` and leave the state unchanged. The emitted label is the terrain
/// of the cell arrived at.
pub fn grid_world_model(layout: &GridLayout) -> Result<Model> {
    let width = layout.rows.first().map_or(0, |r| r.chars().count());
    if width == 0 || layout.rows.iter().any(|r| r.chars().count() != width) {
        return Err(Error::InvalidArgument("grid layout is not rectangular".into()));
    }
    for (ch, t) in &layout.terrain {
        if !(0.0..1.0).contains(&t.slip) {
            return Err(Error::InvalidArgument(format!(
                "slip for terrain `{ch}` must lie in [0,1), got {}",
                t.slip
            )));
        }
    }
    let mut state_of = BTreeMap::new();
    for (r, row) in layout.rows.iter().enumerate() {
        for (c, ch) in row.chars().enumerate() {
            if ch == WALL {
                continue;
            }
            if !layout.terrain.contains_key(&ch) {
                return Err(Error::InvalidArgument(format!("unknown terrain character `{ch}`")));
            }
            let id = state_of.len();
            state_of.insert((r as isize, c as isize), id);
        }
    }
    let locate = |pos: Option<[usize; 2]>, what: &str| -> Result<Option<(isize, isize)>> {
        match pos {
            None => Ok(None),
            Some([r, c]) => {
                let key = (r as isize, c as isize);
                if state_of.contains_key(&key) {
                    Ok(Some(key))
                } else {
                    Err(Error::InvalidArgument(format!("{what} cell ({r},{c}) is not a free cell")))
                }
            }
        }
    };
    let init = locate(layout.init, "initial")?
        .ok_or_else(|| Error::InvalidArgument("grid layout has no initial cell".into()))?;
    let goal = locate(layout.goal, "goal")?;

    let mut labels: Vec<String> = Vec::new();
    for t in layout.terrain.values() {
        if !labels.contains(&t.label) {
            labels.push(t.label.clone());
        }
    }
    if goal.is_some() && !labels.iter().any(|l| l == GOAL_LABEL) {
        labels.push(GOAL_LABEL.to_string());
    }
    let alphabet = Alphabet::new(labels)?;
    let actions = ActionSet::new(MOVES.iter().map(|(n, _)| *n))?;
    let mut m = Model::zeros(state_of.len(), alphabet, actions)?;

    let label_at = |pos: (isize, isize)| -> &str {
        if Some(pos) == goal {
            GOAL_LABEL
        } else {
            let ch = layout.cell(pos.0, pos.1).expect("free cell");
            &layout.terrain[&ch].label
        }
    };
    let err = m.alphabet().error_id();

    m.set_iota_sym(label_at(init), state_of[&init], 1.0)?;
    for (&pos, &s) in &state_of {
        for (a, &(_, (dr, dc))) in MOVES.iter().enumerate() {
            if Some(pos) == goal {
                let l = m.label_id(GOAL_LABEL)?;
                m.set_tau(a, s, l, s, 1.0);
                continue;
            }
            let target = (pos.0 + dr, pos.1 + dc);
            let Some(ch) = layout.cell(target.0, target.1) else {
                m.set_tau(a, s, err, s, 1.0);
                continue;
            };
            let slip = layout.terrain[&ch].slip;
            // Diagonals flanking the intended direction.
            let flanks = if dr == 0 {
                [(pos.0 - 1, target.1), (pos.0 + 1, target.1)]
            } else {
                [(target.0, pos.1 - 1), (target.0, pos.1 + 1)]
            };
            let mut outcomes = vec![(target, 1.0 - slip)];
            for f in flanks {
                let dest = if layout.cell(f.0, f.1).is_some() { f } else { target };
                outcomes.push((dest, slip / 2.0));
            }
            for (dest, p) in outcomes {
                if p == 0.0 {
                    continue;
                }
                let l = m.label_id(label_at(dest))?;
                let to = state_of[&dest];
                let w = m.tau(a, s, l, to);
                m.set_tau(a, s, l, to, w + p);
            }
        }
    }
    Ok(m)
}

/// A random hypothesis: every distribution row is an independent draw from
/// the flat Dirichlet distribution, so all weights are strictly positive.
pub fn random_model(n_states: usize, alphabet: Alphabet, actions: ActionSet, seed: u64) -> Result<Model> {
    let mut m = Model::zeros(n_states, alphabet, actions)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fill_dirichlet(m.iota_row_mut(), &mut rng);
    for a in 0..m.n_actions() {
        for s in 0..n_states {
            fill_dirichlet(m.tau_row_mut(a, s), &mut rng);
        }
    }
    Ok(m)
}

fn fill_dirichlet(row: &mut [f64], rng: &mut impl Rng) {
    loop {
        for w in row.iter_mut() {
            *w = rng.sample::<f64, _>(Exp1);
        }
        let total: f64 = row.iter().sum();
        if total > 0.0 && row.iter().all(|&w| w > 0.0) {
            for w in row.iter_mut() {
                *w /= total;
            }
            return;
        }
    }
}
