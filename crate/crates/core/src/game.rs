//! Finite-horizon tabular two-player zero-sum Markov games and Markov policies.
//!
//! Tensors are stored flat in row-major order. Horizon indices are zero-based
//! throughout the crate: step `h` here is step `h + 1` in one-based notation.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

/// Absolute tolerance on transition row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("extent `{0}` must be at least 1")]
    ZeroExtent(&'static str),
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("malformed game document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid game:\n{0}")]
    Invalid(ValidationReport),
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
}

/// Extents `(H, S, A, B)` of a game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub horizon: usize,
    pub states: usize,
    pub actions_max: usize,
    pub actions_min: usize,
}

impl Shape {
    pub fn new(
        horizon: usize,
        states: usize,
        actions_max: usize,
        actions_min: usize,
    ) -> Result<Self, GameError> {
        for (name, v) in [
            ("horizon", horizon),
            ("num_states", states),
            ("num_actions_max", actions_max),
            ("num_actions_min", actions_min),
        ] {
            if v == 0 {
                return Err(GameError::ZeroExtent(name));
            }
        }
        Ok(Self {
            horizon,
            states,
            actions_max,
            actions_min,
        })
    }

    /// Number of `(h, s)` cells.
    pub fn cells(&self) -> usize {
        self.horizon * self.states
    }

    /// Number of entries in a `[h][s][a][b]` tensor.
    pub fn q_len(&self) -> usize {
        self.cells() * self.actions_max * self.actions_min
    }

    #[inline]
    pub fn cell(&self, h: usize, s: usize) -> usize {
        h * self.states + s
    }

    /// Flat offset of `(h, s, a, b)` in a `[h][s][a][b]` tensor.
    #[inline]
    pub fn q_index(&self, h: usize, s: usize, a: usize, b: usize) -> usize {
        (self.cell(h, s) * self.actions_max + a) * self.actions_min + b
    }

    /// Offset of the `A x B` block belonging to `(h, s)`.
    #[inline]
    pub fn block(&self, h: usize, s: usize) -> usize {
        self.cell(h, s) * self.actions_max * self.actions_min
    }

    pub fn actions(&self, side: Side) -> usize {
        match side {
            Side::Max => self.actions_max,
            Side::Min => self.actions_min,
        }
    }

    /// `log(AB)`, the action-count factor in every bound.
    pub fn log_ab(&self) -> f64 {
        ((self.actions_max * self.actions_min) as f64).ln()
    }
}

/// One invariant violation found by [`MarkovGame::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    RewardOutOfRange {
        h: usize,
        s: usize,
        a: usize,
        b: usize,
        value: f64,
    },
    NegativeProbability {
        h: usize,
        s: usize,
        a: usize,
        b: usize,
        next: usize,
        value: f64,
    },
    RowSum {
        h: usize,
        s: usize,
        a: usize,
        b: usize,
        sum: f64,
    },
    InitialState {
        index: usize,
        states: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::RewardOutOfRange { h, s, a, b, value } => {
                write!(f, "reward[{h}][{s}][{a}][{b}] = {value} outside [0, 1]")
            }
            Violation::NegativeProbability {
                h,
                s,
                a,
                b,
                next,
                value,
            } => write!(
                f,
                "transition[{h}][{s}][{a}][{b}][{next}] = {value} is negative"
            ),
            Violation::RowSum { h, s, a, b, sum } => write!(
                f,
                "transition row [{h}][{s}][{a}][{b}] sums to {sum} (off by {:e})",
                (sum - 1.0).abs()
            ),
            Violation::InitialState { index, states } => {
                write!(f, "initial_state {index} not in [0, {states})")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovGame {
    shape: Shape,
    initial_state: usize,
    rewards: Vec<f64>,
    transitions: Vec<f64>,
}

impl MarkovGame {
    /// Builds a game from flat row-major tensors. Only the extents are
    /// checked here; call [`validate`](Self::validate) for value invariants.
    pub fn new(
        shape: Shape,
        initial_state: usize,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
    ) -> Result<Self, GameError> {
        let q_len = shape.q_len();
        if rewards.len() != q_len {
            return Err(GameError::ShapeMismatch {
                what: "rewards".into(),
                expected: q_len,
                found: rewards.len(),
            });
        }
        if transitions.len() != q_len * shape.states {
            return Err(GameError::ShapeMismatch {
                what: "transitions".into(),
                expected: q_len * shape.states,
                found: transitions.len(),
            });
        }
        Ok(Self {
            shape,
            initial_state,
            rewards,
            transitions,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize, b: usize) -> f64 {
        self.rewards[self.shape.q_index(h, s, a, b)]
    }

    /// The `A x B` reward block at `(h, s)`, row-major in `a`.
    pub fn reward_block(&self, h: usize, s: usize) -> &[f64] {
        let off = self.shape.block(h, s);
        &self.rewards[off..off + self.shape.actions_max * self.shape.actions_min]
    }

    /// Next-state distribution `P_h(. | s, a, b)`.
    #[inline]
    pub fn transition_row(&self, h: usize, s: usize, a: usize, b: usize) -> &[f64] {
        let off = self.shape.q_index(h, s, a, b) * self.shape.states;
        &self.transitions[off..off + self.shape.states]
    }

    /// Lists every invariant violation; never aborts.
    pub fn validate(&self) -> ValidationReport {
        let sh = self.shape;
        let mut violations = Vec::new();
        if self.initial_state >= sh.states {
            violations.push(Violation::InitialState {
                index: self.initial_state,
                states: sh.states,
            });
        }
        for h in 0..sh.horizon {
            for s in 0..sh.states {
                for a in 0..sh.actions_max {
                    for b in 0..sh.actions_min {
                        let value = self.reward(h, s, a, b);
                        if !(0.0..=1.0).contains(&value) {
                            violations.push(Violation::RewardOutOfRange { h, s, a, b, value });
                        }
                        let row = self.transition_row(h, s, a, b);
                        for (next, &p) in row.iter().enumerate() {
                            if p < 0.0 || !p.is_finite() {
                                violations.push(Violation::NegativeProbability {
                                    h,
                                    s,
                                    a,
                                    b,
                                    next,
                                    value: p,
                                });
                            }
                        }
                        let sum: f64 = row.iter().sum();
                        if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                            violations.push(Violation::RowSum { h, s, a, b, sum });
                        }
                    }
                }
            }
        }
        ValidationReport { violations }
    }

    /// Random game: i.i.d. uniform rewards, flat-Dirichlet transition rows.
    ///
    /// Draw order: all rewards in `(h, s, a, b)` order, then every transition
    /// row in the same order with `s'` ascending inside the row.
    pub fn generate_random(seed: u64, shape: Shape) -> Self {
        let mut rng = SplitMix64::new(seed);
        let q_len = shape.q_len();
        let rewards: Vec<f64> = (0..q_len).map(|_| rng.next_f64()).collect();
        let mut transitions = Vec::with_capacity(q_len * shape.states);
        let mut row = vec![0.0; shape.states];
        for _ in 0..q_len {
            for e in row.iter_mut() {
                *e = rng.next_exp();
            }
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                transitions.extend(row.iter().map(|e| e / total));
            } else {
                let u = 1.0 / shape.states as f64;
                transitions.extend(std::iter::repeat_n(u, shape.states));
            }
        }
        Self {
            shape,
            initial_state: 0,
            rewards,
            transitions,
        }
    }

    pub fn save<W: Write>(&self, mut sink: W) -> Result<usize, GameError> {
        let mut bytes = serde_json::to_vec(&GameDocument::from(self))?;
        bytes.push(b'\n');
        sink.write_all(&bytes)?;
        Ok(bytes.len())
    }

    pub fn to_document_string(&self) -> String {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Parses a game document and rejects it unless it validates.
    pub fn load<R: Read>(source: R) -> Result<Self, GameError> {
        let doc: GameDocument = serde_json::from_reader(source)?;
        let game = doc.into_game()?;
        let report = game.validate();
        if !report.is_valid() {
            return Err(GameError::Invalid(report));
        }
        Ok(game)
    }

    pub fn from_document_str(text: &str) -> Result<Self, GameError> {
        Self::load(text.as_bytes())
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> Result<usize, GameError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        let n = self.save(&mut w)?;
        w.flush()?;
        Ok(n)
    }

    pub fn load_from_path(path: impl AsRef<Path>) -> Result<Self, GameError> {
        let file = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(file))
    }
}

/// On-disk layout: nested arrays `[h][s][a][b]` and `[h][s][a][b][s']`.
#[derive(Serialize, Deserialize)]
struct GameDocument {
    horizon: usize,
    num_states: usize,
    num_actions_max: usize,
    num_actions_min: usize,
    initial_state: usize,
    rewards: Vec<Vec<Vec<Vec<f64>>>>,
    transitions: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl From<&MarkovGame> for GameDocument {
    fn from(g: &MarkovGame) -> Self {
        let sh = g.shape;
        let rewards = (0..sh.horizon)
            .map(|h| {
                (0..sh.states)
                    .map(|s| {
                        (0..sh.actions_max)
                            .map(|a| (0..sh.actions_min).map(|b| g.reward(h, s, a, b)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let transitions = (0..sh.horizon)
            .map(|h| {
                (0..sh.states)
                    .map(|s| {
                        (0..sh.actions_max)
                            .map(|a| {
                                (0..sh.actions_min)
                                    .map(|b| g.transition_row(h, s, a, b).to_vec())
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            horizon: sh.horizon,
            num_states: sh.states,
            num_actions_max: sh.actions_max,
            num_actions_min: sh.actions_min,
            initial_state: g.initial_state,
            rewards,
            transitions,
        }
    }
}

fn expect_len(
    what: impl FnOnce() -> String,
    expected: usize,
    found: usize,
) -> Result<(), GameError> {
    if expected == found {
        Ok(())
    } else {
        Err(GameError::ShapeMismatch {
            what: what(),
            expected,
            found,
        })
    }
}

impl GameDocument {
    fn into_game(self) -> Result<MarkovGame, GameError> {
        let sh = Shape::new(
            self.horizon,
            self.num_states,
            self.num_actions_max,
            self.num_actions_min,
        )?;
        let mut rewards = Vec::with_capacity(sh.q_len());
        expect_len(|| "rewards".into(), sh.horizon, self.rewards.len())?;
        for (h, per_h) in self.rewards.into_iter().enumerate() {
            expect_len(|| format!("rewards[{h}]"), sh.states, per_h.len())?;
            for (s, per_s) in per_h.into_iter().enumerate() {
                expect_len(|| format!("rewards[{h}][{s}]"), sh.actions_max, per_s.len())?;
                for (a, per_a) in per_s.into_iter().enumerate() {
                    expect_len(
                        || format!("rewards[{h}][{s}][{a}]"),
                        sh.actions_min,
                        per_a.len(),
                    )?;
                    rewards.extend(per_a);
                }
            }
        }
        let mut transitions = Vec::with_capacity(sh.q_len() * sh.states);
        expect_len(|| "transitions".into(), sh.horizon, self.transitions.len())?;
        for (h, per_h) in self.transitions.into_iter().enumerate() {
            expect_len(|| format!("transitions[{h}]"), sh.states, per_h.len())?;
            for (s, per_s) in per_h.into_iter().enumerate() {
                expect_len(
                    || format!("transitions[{h}][{s}]"),
                    sh.actions_max,
                    per_s.len(),
                )?;
                for (a, per_a) in per_s.into_iter().enumerate() {
                    expect_len(
                        || format!("transitions[{h}][{s}][{a}]"),
                        sh.actions_min,
                        per_a.len(),
                    )?;
                    for (b, row) in per_a.into_iter().enumerate() {
                        expect_len(
                            || format!("transitions[{h}][{s}][{a}][{b}]"),
                            sh.states,
                            row.len(),
                        )?;
                        transitions.extend(row);
                    }
                }
            }
        }
        MarkovGame::new(sh, self.initial_state, rewards, transitions)
    }
}

/// Named deterministic games used by tests and the CLI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fixture {
    /// `r = value` everywhere on a 2-state, 2x2 game with uniform transitions.
    Constant {
        value: f64,
        horizon: usize,
    },
    MatchingPennies,
    RockPaperScissors,
    SingleEntry,
    TwoStage,
}

impl FromStr for Fixture {
    type Err = GameError;

    /// Accepts `matching_pennies`, `rps`, `single_entry`, `two_stage`,
    /// `constant(c)` and `constant(c,H)`; the default horizon is 2.
    fn from_str(name: &str) -> Result<Self, Self::Err> {
        let unknown = || GameError::UnknownFixture(name.to_string());
        match name {
            "matching_pennies" => return Ok(Fixture::MatchingPennies),
            "rps" => return Ok(Fixture::RockPaperScissors),
            "single_entry" => return Ok(Fixture::SingleEntry),
            "two_stage" => return Ok(Fixture::TwoStage),
            _ => {}
        }
        let args = name
            .strip_prefix("constant(")
            .and_then(|rest| rest.strip_suffix(')'))
            .ok_or_else(unknown)?;
        let mut parts = args.split(',').map(str::trim);
        let value: f64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(unknown)?;
        let horizon = match parts.next() {
            Some(h) => h.parse().map_err(|_| unknown())?,
            None => 2,
        };
        if parts.next().is_some() || horizon == 0 {
            return Err(unknown());
        }
        Ok(Fixture::Constant { value, horizon })
    }
}

fn single_stage(block: &[f64], actions_max: usize, actions_min: usize) -> MarkovGame {
    let shape = Shape::new(1, 1, actions_max, actions_min).expect("fixture extents are positive");
    MarkovGame::new(shape, 0, block.to_vec(), vec![1.0; block.len()])
        .expect("fixture tensors match their shape")
}

impl Fixture {
    pub fn build(self) -> MarkovGame {
        match self {
            Fixture::Constant { value, horizon } => {
                let shape = Shape::new(horizon, 2, 2, 2).expect("fixture extents are positive");
                let q_len = shape.q_len();
                MarkovGame::new(shape, 0, vec![value; q_len], vec![0.5; q_len * 2])
                    .expect("fixture tensors match their shape")
            }
            Fixture::MatchingPennies => single_stage(&[1.0, 0.0, 0.0, 1.0], 2, 2),
            Fixture::RockPaperScissors => {
                single_stage(&[0.5, 1.0, 0.0, 0.0, 0.5, 1.0, 1.0, 0.0, 0.5], 3, 3)
            }
            Fixture::SingleEntry => single_stage(&[1.0, 0.0, 0.0, 0.0], 2, 2),
            Fixture::TwoStage => {
                let shape = Shape::new(2, 2, 2, 2).expect("fixture extents are positive");
                let mut rewards = vec![0.0; shape.q_len()];
                let mut transitions = vec![0.0; shape.q_len() * 2];
                for s in 0..2 {
                    for a in 0..2 {
                        for b in 0..2 {
                            let i0 = shape.q_index(0, s, a, b);
                            rewards[i0] = if a == b { 1.0 } else { 0.0 };
                            let next = if a == b { 0 } else { 1 };
                            transitions[i0 * 2 + next] = 1.0;

                            let i1 = shape.q_index(1, s, a, b);
                            rewards[i1] = if s == 0 { 1.0 } else { 0.0 };
                            transitions[i1 * 2 + s] = 1.0;
                        }
                    }
                }
                MarkovGame::new(shape, 0, rewards, transitions)
                    .expect("fixture tensors match their shape")
            }
        }
    }
}

/// Which player a policy belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Max,
    Min,
}

/// Markov policy `pi[h][s][action]` for one player.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    side: Side,
    shape: Shape,
    probs: Vec<f64>,
}

impl Policy {
    pub fn uniform(shape: Shape, side: Side) -> Self {
        let n = shape.actions(side);
        Self {
            side,
            shape,
            probs: vec![1.0 / n as f64; shape.cells() * n],
        }
    }

    /// Wraps a flat `[h][s][action]` tensor; rows are not checked.
    pub fn from_probs(shape: Shape, side: Side, probs: Vec<f64>) -> Result<Self, GameError> {
        let expected = shape.cells() * shape.actions(side);
        expect_len(|| format!("{side:?} policy"), expected, probs.len())?;
        Ok(Self { side, shape, probs })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn num_actions(&self) -> usize {
        self.shape.actions(self.side)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let n = self.num_actions();
        let off = self.shape.cell(h, s) * n;
        &self.probs[off..off + n]
    }

    #[inline]
    pub fn row_mut(&mut self, h: usize, s: usize) -> &mut [f64] {
        let n = self.num_actions();
        let off = self.shape.cell(h, s) * n;
        &mut self.probs[off..off + n]
    }

    /// Largest `|sum - 1|` over rows, or infinity if any entry is negative.
    pub fn max_row_defect(&self) -> f64 {
        self.probs
            .chunks(self.num_actions())
            .map(|row| {
                if row.iter().any(|&p| !(p >= 0.0)) {
                    f64::INFINITY
                } else {
                    (row.iter().sum::<f64>() - 1.0).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Nested `[h][s][action]` view for serialization.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.shape.horizon)
            .map(|h| {
                (0..self.shape.states)
                    .map(|s| self.row(h, s).to_vec())
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyPair {
    pub mu: Policy,
    pub nu: Policy,
}

impl PolicyPair {
    pub fn new(mu: Policy, nu: Policy) -> Result<Self, GameError> {
        if mu.side != Side::Max || nu.side != Side::Min {
            return Err(GameError::ShapeMismatch {
                what: "policy pair sides".into(),
                expected: 0,
                found: 1,
            });
        }
        if mu.shape != nu.shape {
            return Err(GameError::ShapeMismatch {
                what: "policy pair shapes".into(),
                expected: mu.shape.q_len(),
                found: nu.shape.q_len(),
            });
        }
        Ok(Self { mu, nu })
    }

    pub fn uniform(game: &MarkovGame) -> Self {
        let shape = game.shape();
        Self {
            mu: Policy::uniform(shape, Side::Max),
            nu: Policy::uniform(shape, Side::Min),
        }
    }

    pub fn shape(&self) -> Shape {
        self.mu.shape
    }

    /// JSON document with the game's extents plus keys `mu` and `nu`.
    pub fn to_document_string(&self) -> String {
        #[derive(Serialize)]
        struct PolicyDocument {
            horizon: usize,
            num_states: usize,
            num_actions_max: usize,
            num_actions_min: usize,
            mu: Vec<Vec<Vec<f64>>>,
            nu: Vec<Vec<Vec<f64>>>,
        }
        let sh = self.shape();
        let doc = PolicyDocument {
            horizon: sh.horizon,
            num_states: sh.states,
            num_actions_max: sh.actions_max,
            num_actions_min: sh.actions_min,
            mu: self.mu.to_nested(),
            nu: self.nu.to_nested(),
        };
        let mut text = serde_json::to_string(&doc).expect("policy document serializes");
        text.push('\n');
        text
    }
}
