//! Trajectory containers, expert datasets, subsampling, the FIFO replay
//! buffer and line-delimited trajectory file I/O.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// Expert data as state-action pairs: `states.len() == actions.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoTrajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub ep_return: f64,
}

/// Observation-only trajectory: a state sequence of length ≥ 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsTrajectory {
    pub states: Vec<Vec<f64>>,
}

impl DemoTrajectory {
    pub fn validate(&self) -> Result<()> {
        if self.states.len() < 2 {
            return Err(Error::contract("trajectory needs at least two states"));
        }
        if self.actions.len() + 1 != self.states.len() {
            return Err(Error::contract(format!(
                "length mismatch: {} states vs {} actions",
                self.states.len(),
                self.actions.len()
            )));
        }
        for s in &self.states {
            crate::error::ensure_finite(s, "state")?;
        }
        for a in &self.actions {
            crate::error::ensure_finite(a, "action")?;
        }
        if !self.ep_return.is_finite() {
            return Err(Error::numeric("non-finite episode return"));
        }
        Ok(())
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl ObsTrajectory {
    pub fn validate(&self) -> Result<()> {
        if self.states.len() < 2 {
            return Err(Error::contract(
                "observation trajectory needs at least two states",
            ));
        }
        for s in &self.states {
            crate::error::ensure_finite(s, "state")?;
        }
        Ok(())
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Discards actions, keeping states verbatim.
pub fn strip_actions(demo: &DemoTrajectory) -> ObsTrajectory {
    ObsTrajectory {
        states: demo.states.clone(),
    }
}

/// Uniformly subsamples `floor(n/rate)` transition indices without
/// replacement, returned in increasing order.
pub fn subsample_indices(n_transitions: usize, rate: usize, seed: u64) -> Result<Vec<usize>> {
    if rate == 0 {
        return Err(Error::contract("subsample rate must be at least 1"));
    }
    let keep = n_transitions / rate;
    if keep == 0 {
        return Err(Error::EmptySubsample {
            rate,
            len: n_transitions,
        });
    }
    if keep == n_transitions {
        return Ok((0..n_transitions).collect());
    }
    // partial Fisher-Yates over index array, then sort the chosen prefix
    let mut rng = stream(seed, crate::rng::tags::SUBSAMPLE);
    let mut idx: Vec<usize> = (0..n_transitions).collect();
    for i in 0..keep {
        let j = rng.gen_range(i..n_transitions);
        idx.swap(i, j);
    }
    let mut chosen = idx[..keep].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Order-preserving random subsample of state-state transition pairs.
pub fn subsample_pairs(
    states: &[Vec<f64>],
    rate: usize,
    seed: u64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let n = states.len().saturating_sub(1);
    let idx = subsample_indices(n, rate, seed)?;
    Ok(idx
        .into_iter()
        .map(|i| (states[i].clone(), states[i + 1].clone()))
        .collect())
}

/// One environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
}

/// FIFO replay buffer of `(s, a, s')` triplets.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    entries: VecDeque<Transition>,
}

/// Default replay capacity.
pub const REPLAY_CAPACITY: usize = 100_000;

/// Base seed shared by anchor computation and training-time evaluation, so
/// normalized returns compare like against like.
pub const DEFAULT_EVAL_SEED: u64 = 777_000;

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        ReplayBuffer {
            capacity,
            state_dim,
            action_dim,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.entries[i]
    }

    /// Appends triplets in order, evicting oldest entries beyond capacity.
    pub fn push(&mut self, triplets: impl IntoIterator<Item = Transition>) -> Result<()> {
        for t in triplets {
            if t.state.len() != self.state_dim
                || t.next_state.len() != self.state_dim
                || t.action.len() != self.action_dim
            {
                return Err(Error::contract(format!(
                    "triplet shapes ({}, {}, {}) vs buffer ({}, {}, {})",
                    t.state.len(),
                    t.action.len(),
                    t.next_state.len(),
                    self.state_dim,
                    self.action_dim,
                    self.state_dim
                )));
            }
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(t);
        }
        Ok(())
    }

    /// Uniform sample of `batch_size` indices, with replacement.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..batch_size)
            .map(|_| rng.gen_range(0..self.entries.len()))
            .collect())
    }

    /// Uniform minibatch of triplets, with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<Transition>> {
        let idx = self.sample_indices(batch_size, rng)?;
        Ok(idx.into_iter().map(|i| self.entries[i].clone()).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }
}

#[derive(Serialize, Deserialize)]
struct TrajRecord {
    states: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    actions: Option<Vec<Vec<f64>>>,
    ep_return: f64,
}

/// Saves trajectories as UTF-8 JSON lines (one record per line). Finite
/// doubles round-trip bit-exactly.
pub fn save_trajectories(path: impl AsRef<Path>, trajectories: &[DemoTrajectory]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in trajectories {
        let record = TrajRecord {
            states: t.states.clone(),
            actions: Some(t.actions.clone()),
            ep_return: t.ep_return,
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::numeric(format!("serialization failed: {e}")))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Loads demonstration trajectories; every record must carry actions.
pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<DemoTrajectory>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let actions = record.actions.ok_or(Error::Parse {
            line: i + 1,
            msg: "record has no actions".into(),
        })?;
        let demo = DemoTrajectory {
            states: record.states,
            actions,
            ep_return: record.ep_return,
        };
        demo.validate().map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(demo);
    }
    Ok(out)
}

/// Loads a dataset as observation-only trajectories (actions dropped if present).
pub fn load_observations(path: impl AsRef<Path>) -> Result<Vec<ObsTrajectory>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let obs = ObsTrajectory {
            states: record.states,
        };
        obs.validate().map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(obs);
    }
    Ok(out)
}

/// Return anchors stored next to an expert dataset; used to normalize agent
/// returns as `(agent - random) / (expert - random)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub env_name: String,
    pub expert_return: f64,
    pub random_return: f64,
    pub n_eval_episodes: usize,
    pub eval_seed: u64,
}

impl DatasetMeta {
    pub fn normalized_return(&self, agent_return: f64) -> f64 {
        (agent_return - self.random_return) / (self.expert_return - self.random_return)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::numeric(format!("serialization failed: {e}")))?;
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = File::open(path)?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })
    }
}
