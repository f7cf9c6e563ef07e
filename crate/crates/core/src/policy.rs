//! Tabulated decision rules extracted from a solve, with nearest-node lookup
//! and a small binary file format.

use crate::bayes::Prior;
use crate::model::{Action, Impulse, ModelSpec, State};
use crate::numerics::GridSpec;
use crate::solver::SolveReport;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("choice table does not match the grids")]
    GridMismatch,
    #[error("bad policy file: {0}")]
    BadFormat(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("header: {0}")]
    Json(#[from] serde_json::Error),
}

pub const TIE_BREAK_RULE: &str = "wait-then-lowest-action-index";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolicyHeader {
    grids: GridSpec,
    actions: Vec<Impulse>,
    epsilon: f64,
    tie_break: String,
    model_hash: String,
}

/// Grid policy: one choice per (time, space, belief) node, 0 for wait and
/// `a + 1` for action `a`.  Queries snap to the nearest node.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    grids: GridSpec,
    actions: Vec<Impulse>,
    table: Vec<u16>,
    epsilon: f64,
    tie_break: String,
    model_hash: String,
}

/// Argmax table of a solve as a standalone policy.  `epsilon` is the
/// caller's suboptimality budget for the extraction, recorded for
/// bookkeeping.
pub fn extract_policy(
    report: &SolveReport,
    spec: &ModelSpec,
    epsilon: f64,
) -> Result<Policy, PolicyError> {
    let grids = report.field.grids().clone();
    let (nt, ns, nm) = grids.node_counts();
    if report.choices.len() != nt * ns * nm {
        return Err(PolicyError::GridMismatch);
    }
    if report
        .choices
        .iter()
        .any(|c| *c as usize > spec.actions.len())
    {
        return Err(PolicyError::GridMismatch);
    }
    Ok(Policy {
        grids,
        actions: spec.actions.clone(),
        table: report.choices.clone(),
        epsilon,
        tie_break: TIE_BREAK_RULE.to_string(),
        model_hash: spec.digest(),
    })
}

impl Policy {
    pub fn grids(&self) -> &GridSpec {
        &self.grids
    }

    pub fn actions(&self) -> &[Impulse] {
        &self.actions
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tie_break(&self) -> &str {
        &self.tie_break
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    pub fn node_choice(&self, t: usize, s: usize, m: usize) -> u16 {
        let (_, ns, nm) = self.grids.node_counts();
        self.table[(t * ns + s) * nm + m]
    }

    /// Nearest time node; ties halfway between nodes resolve to the earlier
    /// node, matching the space and belief lookups.
    fn nearest_time(&self, t: f64) -> usize {
        let last = self.grids.time_count() - 1;
        let u = (t / self.grids.time_step()).clamp(0.0, last as f64);
        let i = if u - u.floor() > 0.5 {
            u.ceil()
        } else {
            u.floor()
        };
        i as usize
    }

    /// Choice code at the node nearest to the query.
    pub fn lookup_choice(&self, state: &State, prior: &Prior) -> u16 {
        if state.t > self.grids.horizon + self.grids.time_snap() {
            return 0; // no decisions past the horizon
        }
        let t = self.nearest_time(state.t);
        let s = self.grids.space.nearest(&state.x);
        let m = self.grids.simplex.nearest(prior);
        self.node_choice(t, s, m)
    }

    pub fn lookup(&self, state: &State, prior: &Prior) -> Action {
        match self.lookup_choice(state, prior) {
            0 => Action::Wait,
            c => Action::Impulse(self.actions[c as usize - 1].clone()),
        }
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

const POLICY_MAGIC: &[u8; 4] = b"IBPL";
const POLICY_VERSION: u32 = 1;

impl Policy {
    /// JSON header (grids, actions, bookkeeping) followed by the raw choice
    /// table as little-endian `u16`.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<(), PolicyError> {
        let header = PolicyHeader {
            grids: self.grids.clone(),
            actions: self.actions.clone(),
            epsilon: self.epsilon,
            tie_break: self.tie_break.clone(),
            model_hash: self.model_hash.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        w.write_all(POLICY_MAGIC)?;
        w.write_all(&POLICY_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&(self.table.len() as u64).to_le_bytes())?;
        for c in &self.table {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self, PolicyError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != POLICY_MAGIC {
            return Err(PolicyError::BadFormat("magic mismatch".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != POLICY_VERSION {
            return Err(PolicyError::BadFormat("unsupported version".into()));
        }
        r.read_exact(&mut b4)?;
        let header_len = u32::from_le_bytes(b4) as usize;
        if header_len > 1 << 24 {
            return Err(PolicyError::BadFormat("oversized header".into()));
        }
        let mut header = vec![0u8; header_len];
        r.read_exact(&mut header)?;
        let header: PolicyHeader = serde_json::from_slice(&header)?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        let (nt, ns, nm) = header.grids.node_counts();
        if count != nt * ns * nm {
            return Err(PolicyError::BadFormat("table size mismatch".into()));
        }
        let mut table = vec![0u16; count];
        let mut b2 = [0u8; 2];
        for c in table.iter_mut() {
            r.read_exact(&mut b2)?;
            *c = u16::from_le_bytes(b2);
        }
        if table.iter().any(|c| *c as usize > header.actions.len()) {
            return Err(PolicyError::BadFormat("choice out of range".into()));
        }
        Ok(Self {
            grids: header.grids,
            actions: header.actions,
            table,
            epsilon: header.epsilon,
            tie_break: header.tie_break,
            model_hash: header.model_hash,
        })
    }
}
