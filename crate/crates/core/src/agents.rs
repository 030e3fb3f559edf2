//! Synthetic search sessions standing in for human participants.
//!
//! The solo agent refines around its best find or jumps elsewhere, and stops
//! after `patience` submissions without improvement. The aided agent makes
//! the same decisions, except that every `assist_every`-th submission is a
//! simulated-annealing proposal. The two decision streams use separate RNGs,
//! so with `assist_every = 0` an aided run replays the solo run exactly.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::landscape::{generate, height_at, HeightMap, LandscapeParams};
use crate::seed::derive_seed;
use crate::torus::{Node, Torus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Solo,
    Aided,
}

impl Condition {
    pub fn label(self) -> u8 {
        match self {
            Condition::Solo => 0,
            Condition::Aided => 1,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Solo => "solo",
            Condition::Aided => "aided",
        })
    }
}

impl FromStr for Condition {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "solo" => Ok(Condition::Solo),
            "aided" => Ok(Condition::Aided),
            _ => Err(CoreError::Invalid(format!("unknown condition `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Gain,
    Loss,
}

/// One trial: the ordered dial submissions of a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub session_id: String,
    pub participant_id: String,
    pub condition: Condition,
    pub peaks: usize,
    pub landscape_id: String,
    pub moves: Vec<Node>,
    #[serde(default)]
    pub frame: Option<Frame>,
    #[serde(default)]
    pub anchor: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Probability of a local refinement step; jumps happen otherwise.
    pub local_prob: f64,
    /// Largest wrapped distance of a local step from the best find.
    pub step_radius: usize,
    /// Stop after this many consecutive submissions without improvement.
    pub patience: usize,
    /// Hard cap on submissions.
    pub budget: usize,
    /// First submission; drawn uniformly when absent.
    pub start: Option<Node>,
    pub initial_temperature: f64,
    /// Geometric cooling factor applied after every proposal.
    pub cooling: f64,
    pub proposal_radius: usize,
    /// Every k-th submission is an annealing proposal; 0 disables assistance.
    pub assist_every: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            local_prob: 0.6,
            step_radius: 2,
            patience: 15,
            budget: 126,
            start: None,
            initial_temperature: 4.0,
            cooling: 0.9,
            proposal_radius: 1,
            assist_every: 2,
        }
    }
}

impl AgentConfig {
    pub fn jump_rate(&self) -> f64 {
        1.0 - self.local_prob
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Invalid(format!("agent config: {m}")));
        if !(0.0..=1.0).contains(&self.local_prob) {
            return bad("local_prob must lie in [0, 1]");
        }
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if self.step_radius == 0 || self.proposal_radius == 0 {
            return bad("step and proposal radii must be at least 1");
        }
        if self.initial_temperature.is_nan() || self.initial_temperature <= 0.0 {
            return bad("initial temperature must be positive");
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return bad("cooling must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Metropolis acceptance for a maximization problem with geometric cooling.
#[derive(Clone, Debug, PartialEq)]
pub struct Annealer {
    pub temperature: f64,
    pub cooling: f64,
}

impl Annealer {
    pub fn new(initial_temperature: f64, cooling: f64) -> Self {
        Self { temperature: initial_temperature, cooling }
    }

    /// `min(1, exp(delta / T))` for an elevation change `delta`.
    pub fn accept_probability(&self, delta: f64) -> f64 {
        if delta >= 0.0 {
            1.0
        } else {
            (delta / self.temperature).exp()
        }
    }

    pub fn cool(&mut self) {
        self.temperature *= self.cooling;
    }
}

/// Offsets with wrapped Manhattan length in `1..=radius`.
fn ball_offsets(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let d = dx.abs() + dy.abs();
            if d >= 1 && d <= r {
                out.push((dx, dy));
            }
        }
    }
    out
}

struct SoloPolicy {
    torus: Torus,
    local: Vec<(i64, i64)>,
    local_prob: f64,
}

impl SoloPolicy {
    fn next(&self, best: Node, rng: &mut ChaCha8Rng) -> Node {
        let t = self.torus;
        if rng.gen_bool(self.local_prob) {
            let &(dx, dy) = self.local.choose(rng).expect("radius >= 1");
            return t.wrap(best.x as i64 + dx, best.y as i64 + dy);
        }
        let far: Vec<Node> = t.nodes().filter(|&n| t.manhattan(n, best).total >= 3).collect();
        *far.choose(rng).expect("a 24x24 torus has distant nodes")
    }
}

fn run_session(map: &HeightMap, cfg: &AgentConfig, seed: u64, assist_every: usize) -> Vec<Node> {
    let t = Torus::STANDARD;
    let mut solo_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "solo-policy", 0));
    let mut anneal_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "annealing", 0));
    let policy = SoloPolicy { torus: t, local: ball_offsets(cfg.step_radius), local_prob: cfg.local_prob };
    let proposals = ball_offsets(cfg.proposal_radius);

    let start = cfg.start.unwrap_or_else(|| Node::new(solo_rng.gen_range(0..t.n), solo_rng.gen_range(0..t.n)));
    let mut moves = vec![start];
    let mut best = start;
    let mut best_height = height_at(map, start);
    let mut current = start;
    let mut annealer = Annealer::new(cfg.initial_temperature, cfg.cooling);
    let mut stale = 0;

    while moves.len() < cfg.budget && stale < cfg.patience {
        let i = moves.len();
        let node = if assist_every > 0 && i % assist_every == 0 {
            let &(dx, dy) = proposals.choose(&mut anneal_rng).expect("radius >= 1");
            let proposal = t.wrap(current.x as i64 + dx, current.y as i64 + dy);
            let delta = height_at(map, proposal) - height_at(map, current);
            if anneal_rng.gen::<f64>() < annealer.accept_probability(delta) {
                current = proposal;
            }
            annealer.cool();
            proposal
        } else {
            let node = policy.next(best, &mut solo_rng);
            if height_at(map, node) > best_height {
                // The helper restarts its chain from the participant's new best.
                current = node;
            }
            node
        };
        let h = height_at(map, node);
        if h > best_height {
            best = node;
            best_height = h;
            stale = 0;
        } else {
            stale += 1;
        }
        moves.push(node);
    }
    moves
}

fn log_for(map: &HeightMap, condition: Condition, moves: Vec<Node>) -> TrajectoryLog {
    TrajectoryLog {
        session_id: String::new(),
        participant_id: String::new(),
        condition,
        peaks: map.peaks,
        landscape_id: map.landscape_id.clone(),
        moves,
        frame: None,
        anchor: None,
    }
}

pub fn simulate_solo(map: &HeightMap, cfg: &AgentConfig, seed: u64) -> Result<TrajectoryLog> {
    cfg.validate()?;
    Ok(log_for(map, Condition::Solo, run_session(map, cfg, seed, 0)))
}

pub fn simulate_aided(map: &HeightMap, cfg: &AgentConfig, seed: u64) -> Result<TrajectoryLog> {
    cfg.validate()?;
    Ok(log_for(map, Condition::Aided, run_session(map, cfg, seed, cfg.assist_every)))
}

/// The (condition, peaks) cells every participant attempts, in session order.
pub const CELLS: [(Condition, usize); 4] =
    [(Condition::Solo, 1), (Condition::Solo, 4), (Condition::Aided, 1), (Condition::Aided, 4)];

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedCorpus {
    pub logs: Vec<TrajectoryLog>,
    pub maps: Vec<HeightMap>,
}

/// Four sessions per participant, each on its own freshly generated map.
pub fn generate_corpus(
    n_participants: usize,
    cfg: &AgentConfig,
    landscape: &LandscapeParams,
    master_seed: u64,
) -> Result<SimulatedCorpus> {
    if n_participants == 0 {
        return Err(CoreError::Invalid("need at least one participant".into()));
    }
    cfg.validate()?;
    let sessions: Vec<(TrajectoryLog, HeightMap)> = (0..n_participants * CELLS.len())
        .into_par_iter()
        .map(|s| {
            let participant = s / CELLS.len();
            let (condition, peaks) = CELLS[s % CELLS.len()];
            let participant_id = format!("p{participant:04}");
            let session_id = format!("{participant_id}-{condition}-{peaks}pk");
            let mut map = generate(derive_seed(master_seed, "landscape", s as u64), peaks, landscape)?;
            map.landscape_id = format!("{session_id}-map");
            let seed = derive_seed(master_seed, "session", s as u64);
            let mut log = match condition {
                Condition::Solo => simulate_solo(&map, cfg, seed)?,
                Condition::Aided => simulate_aided(&map, cfg, seed)?,
            };
            log.session_id = session_id;
            log.participant_id = participant_id;
            Ok((log, map))
        })
        .collect::<Result<_>>()?;
    let (logs, maps) = sessions.into_iter().unzip();
    Ok(SimulatedCorpus { logs, maps })
}
