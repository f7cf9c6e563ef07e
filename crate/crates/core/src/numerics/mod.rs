//! Grids, interpolation, and quadrature-based propagation of expectations.
//!
//! Time is discretized dyadically: level `n` uses nodes `j * T / 2^n`, so
//! consecutive levels nest bit-exactly.  Beliefs live on a barycentric grid
//! over the probability simplex (supported for at most three parameters).
//! Value fields are stored per (time node, space node, simplex node) and
//! extend beyond the horizon by the terminal gain.

pub mod quad;

use crate::bayes::Prior;
use crate::model::{ModelError, ModelSpec, State};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("belief grids support at most 3 parameters, got {0}")]
    UnsupportedSimplexDimension(usize),
    #[error("query at {0:?} outside the grid domain with clamping disabled")]
    OutOfDomain(Vec<f64>),
    #[error("time {0} is neither a grid node nor beyond the horizon")]
    TimeOffGrid(f64),
    #[error("field does not belong to these grids")]
    GridMismatch,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("propagation over gap {gap} would branch past {max} points")]
    CloudTooLarge { gap: f64, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad field file: {0}")]
    BadFormat(String),
}

/// Quadrature and stepping controls shared across solver and simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericOpts {
    /// Euler sub-steps per full grid interval (partial gaps are prorated).
    pub euler_substeps: usize,
    /// Gauss-Hermite nodes per axis and sub-step.
    pub hermite_nodes: usize,
    /// Clamp space queries to the domain box instead of failing.
    pub clamp: bool,
}

impl Default for NumericOpts {
    fn default() -> Self {
        Self {
            euler_substeps: 4,
            hermite_nodes: 5,
            clamp: true,
        }
    }
}

/// Uniform rectangular grid over the state box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
}

impl SpaceGrid {
    pub fn node_count(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn axis_node(&self, axis: usize, i: usize) -> f64 {
        let n = self.counts[axis];
        debug_assert!(i < n);
        let h = (self.hi[axis] - self.lo[axis]) / (n - 1) as f64;
        self.lo[axis] + i as f64 * h
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.counts[axis] - 1) as f64
    }

    /// Coordinates of the flat node index (row-major over axes).
    pub fn node(&self, mut idx: usize) -> Vec<f64> {
        let d = self.counts.len();
        let mut x = vec![0.0; d];
        for axis in (0..d).rev() {
            let n = self.counts[axis];
            x[axis] = self.axis_node(axis, idx % n);
            idx /= n;
        }
        x
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (axis, &i) in multi.iter().enumerate() {
            idx = idx * self.counts[axis] + i;
        }
        idx
    }

    /// Multilinear cell weights at `x`: up to `2^d` (node index, weight)
    /// pairs summing to one.  Clamps to the box or fails per `clamp`.
    pub fn locate(&self, x: &[f64], clamp: bool) -> Result<Vec<(usize, f64)>, NumericsError> {
        let d = self.counts.len();
        debug_assert_eq!(x.len(), d);
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0f64; d];
        for axis in 0..d {
            let n = self.counts[axis];
            let h = self.spacing(axis);
            let mut u = (x[axis] - self.lo[axis]) / h;
            if u < 0.0 || u > (n - 1) as f64 {
                if !clamp {
                    return Err(NumericsError::OutOfDomain(x.to_vec()));
                }
                u = u.clamp(0.0, (n - 1) as f64);
            }
            let i = (u.floor() as usize).min(n - 2);
            base[axis] = i;
            frac[axis] = u - i as f64;
        }
        let mut out = Vec::with_capacity(1 << d);
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut multi = vec![0usize; d];
            for axis in 0..d {
                if corner >> axis & 1 == 1 {
                    w *= frac[axis];
                    multi[axis] = base[axis] + 1;
                } else {
                    w *= 1.0 - frac[axis];
                    multi[axis] = base[axis];
                }
            }
            if w != 0.0 || corner == 0 {
                out.push((self.flat_index(&multi), w));
            }
        }
        Ok(out)
    }

    /// Nearest node index under per-axis scaled Euclidean distance
    /// (each axis divided by its spacing); ties resolve to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let d = self.counts.len();
        let mut multi = vec![0usize; d];
        for axis in 0..d {
            let n = self.counts[axis];
            let u = ((x[axis] - self.lo[axis]) / self.spacing(axis))
                .clamp(0.0, (n - 1) as f64);
            // round half down so ties go to the lower index
            let i = if u - u.floor() > 0.5 {
                u.ceil()
            } else {
                u.floor()
            };
            multi[axis] = i as usize;
        }
        self.flat_index(&multi)
    }
}

/// Barycentric grid over beliefs for `k <= 3` parameters.
///
/// Resolution `r` places nodes with weights at multiples of `1/(r-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexGrid {
    pub k: usize,
    pub resolution: usize,
}

impl SimplexGrid {
    pub fn new(k: usize, resolution: usize) -> Result<Self, NumericsError> {
        if k == 0 || k > 3 {
            return Err(NumericsError::UnsupportedSimplexDimension(k));
        }
        if k > 1 && resolution < 2 {
            return Err(NumericsError::InvalidGrid(
                "simplex resolution must be at least 2".into(),
            ));
        }
        // a single parameter has a single belief regardless of resolution
        let resolution = if k == 1 { 1 } else { resolution };
        Ok(Self { k, resolution })
    }

    pub fn node_count(&self) -> usize {
        match self.k {
            1 => 1,
            2 => self.resolution,
            3 => self.resolution * (self.resolution + 1) / 2,
            _ => unreachable!(),
        }
    }

    /// Belief at a node index.
    pub fn node(&self, idx: usize) -> Prior {
        let r = (self.resolution - 1).max(1) as f64;
        match self.k {
            1 => Prior::new(vec![1.0]).unwrap(),
            2 => {
                let w0 = idx as f64 / r;
                Prior::new(vec![w0, 1.0 - w0]).unwrap()
            }
            3 => {
                let (i, j) = self.unrank3(idx);
                let w0 = i as f64 / r;
                let w1 = j as f64 / r;
                // the residual can round a hair below zero on the far edge
                let w2 = (1.0 - w0 - w1).max(0.0);
                Prior::new(vec![w0, w1, w2]).unwrap()
            }
            _ => unreachable!(),
        }
    }

    fn rank3(&self, i: usize, j: usize) -> usize {
        // rows of decreasing length: row i holds resolution - i entries
        let r = self.resolution;
        i * (2 * r + 1 - i) / 2 + j
    }

    fn unrank3(&self, mut idx: usize) -> (usize, usize) {
        let r = self.resolution;
        let mut i = 0;
        while idx >= r - i {
            idx -= r - i;
            i += 1;
        }
        (i, idx)
    }

    /// Piecewise-linear weights at a belief: at most `k` (node index, weight)
    /// pairs summing to one, exact for fields affine in the belief.
    pub fn locate(&self, prior: &Prior) -> Vec<(usize, f64)> {
        assert_eq!(prior.len(), self.k, "belief dimension mismatch");
        let rm1 = (self.resolution - 1) as f64;
        match self.k {
            1 => vec![(0, 1.0)],
            2 => {
                let s = (prior.weight(0) * rm1).clamp(0.0, rm1);
                let i = (s.floor() as usize).min(self.resolution - 2);
                let u = s - i as f64;
                if u == 0.0 {
                    vec![(i, 1.0)]
                } else {
                    vec![(i, 1.0 - u), (i + 1, u)]
                }
            }
            3 => {
                let n = self.resolution - 1;
                let s = (prior.weight(0) * rm1).clamp(0.0, rm1);
                let r = (prior.weight(1) * rm1).clamp(0.0, rm1 - s);
                let i = (s.floor() as usize).min(n);
                let j = (r.floor() as usize).min(n - i);
                if i + j >= n {
                    // on the far edge the local cell degenerates to a node
                    debug_assert!(s - i as f64 + r - j as f64 <= 1e-9);
                    return vec![(self.rank3(i, j), 1.0)];
                }
                let u = s - i as f64;
                let v = r - j as f64;
                if u + v <= 1.0 {
                    vec![
                        (self.rank3(i, j), 1.0 - u - v),
                        (self.rank3(i + 1, j), u),
                        (self.rank3(i, j + 1), v),
                    ]
                } else {
                    vec![
                        (self.rank3(i + 1, j + 1), u + v - 1.0),
                        (self.rank3(i + 1, j), 1.0 - v),
                        (self.rank3(i, j + 1), 1.0 - u),
                    ]
                }
            }
            _ => unreachable!(),
        }
    }

    /// Nearest node in total variation distance; ties resolve to the lowest
    /// index.
    pub fn nearest(&self, prior: &Prior) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for idx in 0..self.node_count() {
            let d = self.node(idx).tv_distance(prior);
            if d < best_d {
                best_d = d;
                best = idx;
            }
        }
        best
    }
}

/// Where the next decision after a given time falls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridTime {
    Node(usize),
    /// At or past the horizon: no further grid decision time exists.
    BeyondHorizon,
}

/// Joint discretization: dyadic time nodes, space box, belief simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub level: u32,
    pub horizon: f64,
    pub space: SpaceGrid,
    pub simplex: SimplexGrid,
}

impl GridSpec {
    /// Builds grids for a model: dyadic level `level` in time, `space_counts`
    /// nodes per axis over the model domain, and the given belief resolution.
    pub fn build(
        spec: &ModelSpec,
        level: u32,
        space_counts: &[usize],
        simplex_resolution: usize,
    ) -> Result<Self, NumericsError> {
        if space_counts.len() != spec.dimension || space_counts.iter().any(|c| *c < 2) {
            return Err(NumericsError::InvalidGrid(
                "need at least two space nodes per axis".into(),
            ));
        }
        if level > 20 {
            return Err(NumericsError::InvalidGrid("time level too deep".into()));
        }
        Ok(Self {
            level,
            horizon: spec.horizon,
            space: SpaceGrid {
                lo: spec.domain.lo.clone(),
                hi: spec.domain.hi.clone(),
                counts: space_counts.to_vec(),
            },
            simplex: SimplexGrid::new(spec.param_count(), simplex_resolution)?,
        })
    }

    pub fn time_count(&self) -> usize {
        (1usize << self.level) + 1
    }

    /// `j * T / 2^level`, computed so that nested levels agree bit-exactly.
    pub fn time_node(&self, j: usize) -> f64 {
        (j as f64 * self.horizon) / (1u64 << self.level) as f64
    }

    pub fn time_step(&self) -> f64 {
        self.horizon / (1u64 << self.level) as f64
    }

    pub(crate) fn time_snap(&self) -> f64 {
        self.time_step() * 1e-9
    }

    /// Index of the grid node equal to `t` (within snapping tolerance).
    pub fn time_index_of(&self, t: f64) -> Option<usize> {
        let j = (t / self.time_step()).round();
        if j < 0.0 || j > (1u64 << self.level) as f64 {
            return None;
        }
        let j = j as usize;
        ((t - self.time_node(j)).abs() <= self.time_snap()).then_some(j)
    }

    pub fn node_counts(&self) -> (usize, usize, usize) {
        (
            self.time_count(),
            self.space.node_count(),
            self.simplex.node_count(),
        )
    }
}

/// First decision node at or after `t` (strictly after when `strict`).
/// Times at or past the horizon have no further decision node.
pub fn next_grid_time(grids: &GridSpec, t: f64, strict: bool) -> GridTime {
    let eps = grids.time_snap();
    let step = grids.time_step();
    let last = 1usize << grids.level;
    let j = if strict {
        ((t + eps) / step).floor() as i64 + 1
    } else {
        ((t - eps) / step).ceil() as i64
    };
    let j = j.max(0) as usize;
    if j > last || t >= grids.horizon - if strict { eps } else { -eps } {
        GridTime::BeyondHorizon
    } else {
        GridTime::Node(j)
    }
}

/// Values tabulated on a [`GridSpec`], extended past the horizon by the
/// terminal gain.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    grids: GridSpec,
    values: Vec<f64>,
}

impl ValueField {
    pub fn new_filled(grids: GridSpec, value: f64) -> Self {
        let (nt, ns, nm) = grids.node_counts();
        Self {
            grids,
            values: vec![value; nt * ns * nm],
        }
    }

    pub fn grids(&self) -> &GridSpec {
        &self.grids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, t: usize, s: usize, m: usize) -> usize {
        let (_, ns, nm) = self.grids.node_counts();
        (t * ns + s) * nm + m
    }

    #[inline]
    pub fn value_at(&self, t: usize, s: usize, m: usize) -> f64 {
        self.values[self.index(t, s, m)]
    }

    #[inline]
    pub fn set_value(&mut self, t: usize, s: usize, m: usize, v: f64) {
        let i = self.index(t, s, m);
        self.values[i] = v;
    }

    /// Values of one time slice, space-major.
    pub fn slice(&self, t: usize) -> &[f64] {
        let (_, ns, nm) = self.grids.node_counts();
        &self.values[t * ns * nm..(t + 1) * ns * nm]
    }

    pub fn slice_mut(&mut self, t: usize) -> &mut [f64] {
        let (_, ns, nm) = self.grids.node_counts();
        &mut self.values[t * ns * nm..(t + 1) * ns * nm]
    }
}

/// Field value at a query point.
///
/// The query time must be a grid node (after snapping) or lie beyond the
/// horizon, in which case the terminal gain is returned.  Space and belief
/// coordinates are interpolated multilinearly / barycentrically.
pub fn interpolate(
    field: &ValueField,
    spec: &ModelSpec,
    state: &State,
    prior: &Prior,
    clamp: bool,
) -> Result<f64, NumericsError> {
    let grids = &field.grids;
    if state.t > grids.horizon + grids.time_snap() {
        return Ok(spec.terminal_gain(state, prior));
    }
    let t_idx = grids
        .time_index_of(state.t)
        .ok_or(NumericsError::TimeOffGrid(state.t))?;
    let slice = field.slice(t_idx);
    Ok(interpolate_slice(grids, slice, &state.x, prior, clamp)?)
}

/// Interpolation within one time slice (space-major values).
pub(crate) fn interpolate_slice(
    grids: &GridSpec,
    slice: &[f64],
    x: &[f64],
    prior: &Prior,
    clamp: bool,
) -> Result<f64, NumericsError> {
    let nm = grids.simplex.node_count();
    let sw = grids.space.locate(x, clamp)?;
    let mw = grids.simplex.locate(prior);
    let mut v = 0.0;
    for &(si, a) in &sw {
        let row = &slice[si * nm..(si + 1) * nm];
        for &(mi, b) in &mw {
            v += a * b * row[mi];
        }
    }
    Ok(v)
}

/// Weighted point cloud produced by propagating a single state forward with
/// Euler steps and per-step Gauss-Hermite branching.
pub(crate) struct Cloud {
    pub xs: Vec<Vec<f64>>,
    pub ws: Vec<f64>,
}

/// Branching propagation multiplies the cloud by `hermite_nodes^d` per
/// sub-step; refuse to grow past this rather than exhaust memory.
const CLOUD_CAP: usize = 1 << 22;

pub(crate) fn propagate_cloud(
    spec: &ModelSpec,
    t0: f64,
    x0: &[f64],
    until: f64,
    step_ref: f64,
    opts: &NumericOpts,
) -> Result<Cloud, NumericsError> {
    let gap = until - t0;
    debug_assert!(gap >= -1e-12);
    if gap <= 0.0 {
        return Ok(Cloud {
            xs: vec![x0.to_vec()],
            ws: vec![1.0],
        });
    }
    let d = spec.dimension;
    let deterministic = spec.is_deterministic();
    let nsub = ((opts.euler_substeps as f64 * gap / step_ref).ceil() as usize).max(1);
    let h = gap / nsub as f64;
    let sqrt_h = h.sqrt();
    let nodes = if deterministic {
        Vec::new()
    } else {
        quad::standard_normal(opts.hermite_nodes)
    };
    let mut xs = vec![x0.to_vec()];
    let mut ws = vec![1.0];
    let mut drift = vec![0.0; d];
    let mut t = t0;
    for _ in 0..nsub {
        if deterministic {
            for x in xs.iter_mut() {
                if !spec.extrapolate {
                    spec.drift(&State::new(t, x.clone()))?;
                }
                spec.drift_into(x, &mut drift);
                for i in 0..d {
                    x[i] += drift[i] * h;
                }
            }
        } else {
            let branch = nodes.len().pow(d as u32);
            if xs.len().saturating_mul(branch) > CLOUD_CAP {
                return Err(NumericsError::CloudTooLarge {
                    gap,
                    max: CLOUD_CAP,
                });
            }
            let mut nxs = Vec::with_capacity(xs.len() * branch);
            let mut nws = Vec::with_capacity(nxs.capacity());
            let sigma = &spec.dynamics.diffusion;
            for (x, w) in xs.iter().zip(&ws) {
                if !spec.extrapolate {
                    spec.drift(&State::new(t, x.clone()))?;
                }
                spec.drift_into(x, &mut drift);
                // tensor product over axes of the normal rule
                let mut idx = vec![0usize; d];
                loop {
                    let mut y = vec![0.0; d];
                    let mut wp = *w;
                    for i in 0..d {
                        let mut diff = 0.0;
                        for j in 0..d {
                            diff += sigma[i][j] * nodes[idx[j]].0;
                        }
                        y[i] = x[i] + drift[i] * h + sqrt_h * diff;
                    }
                    for j in 0..d {
                        wp *= nodes[idx[j]].1;
                    }
                    nxs.push(y);
                    nws.push(wp);
                    let mut i = 0;
                    loop {
                        if i == d {
                            break;
                        }
                        idx[i] += 1;
                        if idx[i] < nodes.len() {
                            break;
                        }
                        idx[i] = 0;
                        i += 1;
                    }
                    if i == d {
                        break;
                    }
                }
            }
            xs = nxs;
            ws = nws;
        }
        t += h;
    }
    Ok(Cloud { xs, ws })
}

/// Expectation of `f(until, X_until)` for the uncontrolled diffusion started
/// at `state`, by Euler stepping with Gauss-Hermite branching.
///
/// With zero drift, unit diffusion, `f(x) = x^2` and a single sub-step this
/// returns `x^2 + (until - t)` exactly for two or more Hermite nodes.
pub fn diffuse_expectation(
    spec: &ModelSpec,
    state: &State,
    until: f64,
    step_ref: f64,
    opts: &NumericOpts,
    f: &mut dyn FnMut(f64, &[f64]) -> f64,
) -> Result<f64, NumericsError> {
    let cloud = propagate_cloud(spec, state.t, &state.x, until, step_ref, opts)?;
    Ok(cloud
        .xs
        .iter()
        .zip(&cloud.ws)
        .map(|(x, w)| w * f(until, x))
        .sum())
}

/// Expected field value after waiting from `state` until the grid time
/// `until` with the belief unchanged.
pub fn wait_expectation(
    field: &ValueField,
    spec: &ModelSpec,
    state: &State,
    prior: &Prior,
    until: f64,
    opts: &NumericOpts,
) -> Result<f64, NumericsError> {
    let grids = &field.grids;
    let t_idx = grids
        .time_index_of(until)
        .ok_or(NumericsError::TimeOffGrid(until))?;
    let slice = field.slice(t_idx);
    let cloud = propagate_cloud(spec, state.t, &state.x, until, grids.time_step(), opts)?;
    let mut v = 0.0;
    for (x, w) in cloud.xs.iter().zip(&cloud.ws) {
        v += w * interpolate_slice(grids, slice, x, prior, opts.clamp)?;
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Field serialization
// ---------------------------------------------------------------------------

const FIELD_MAGIC: &[u8; 4] = b"IBVF";
const FIELD_VERSION: u32 = 1;

impl ValueField {
    /// Writes the field: a fixed header describing the grids plus the raw
    /// values as little-endian `f64` in (time, space, simplex) order.
    /// `tag` is an arbitrary caller identifier (e.g. a model digest).
    pub fn write_binary<W: Write>(&self, w: &mut W, tag: &[u8; 16]) -> Result<(), NumericsError> {
        let g = &self.grids;
        w.write_all(FIELD_MAGIC)?;
        w.write_all(&FIELD_VERSION.to_le_bytes())?;
        w.write_all(tag)?;
        w.write_all(&g.level.to_le_bytes())?;
        w.write_all(&g.horizon.to_le_bytes())?;
        let d = g.space.counts.len() as u32;
        w.write_all(&d.to_le_bytes())?;
        for axis in 0..g.space.counts.len() {
            w.write_all(&g.space.lo[axis].to_le_bytes())?;
            w.write_all(&g.space.hi[axis].to_le_bytes())?;
            w.write_all(&(g.space.counts[axis] as u64).to_le_bytes())?;
        }
        w.write_all(&(g.simplex.k as u32).to_le_bytes())?;
        w.write_all(&(g.simplex.resolution as u32).to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<(ValueField, [u8; 16]), NumericsError> {
        fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N], NumericsError> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf)?;
            Ok(buf)
        }
        let magic: [u8; 4] = take(r)?;
        if &magic != FIELD_MAGIC {
            return Err(NumericsError::BadFormat("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(r)?);
        if version != FIELD_VERSION {
            return Err(NumericsError::BadFormat(format!(
                "unsupported version {version}"
            )));
        }
        let tag: [u8; 16] = take(r)?;
        let level = u32::from_le_bytes(take(r)?);
        let horizon = f64::from_le_bytes(take(r)?);
        let d = u32::from_le_bytes(take(r)?) as usize;
        if d == 0 || d > 3 {
            return Err(NumericsError::BadFormat(format!("bad dimension {d}")));
        }
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        let mut counts = vec![0usize; d];
        for axis in 0..d {
            lo[axis] = f64::from_le_bytes(take(r)?);
            hi[axis] = f64::from_le_bytes(take(r)?);
            counts[axis] = u64::from_le_bytes(take(r)?) as usize;
        }
        let k = u32::from_le_bytes(take(r)?) as usize;
        let resolution = u32::from_le_bytes(take(r)?) as usize;
        let n_values = u64::from_le_bytes(take(r)?) as usize;
        let grids = GridSpec {
            level,
            horizon,
            space: SpaceGrid { lo, hi, counts },
            simplex: SimplexGrid::new(k, resolution)?,
        };
        let (nt, ns, nm) = grids.node_counts();
        if n_values != nt * ns * nm {
            return Err(NumericsError::BadFormat("value count mismatch".into()));
        }
        let mut values = Vec::with_capacity(n_values);
        for _ in 0..n_values {
            values.push(f64::from_le_bytes(take(r)?));
        }
        Ok((ValueField { grids, values }, tag))
    }

    /// CSV export: one row per node with full coordinates.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<(), NumericsError> {
        let g = &self.grids;
        let d = g.space.counts.len();
        let k = g.simplex.k;
        write!(w, "t")?;
        for i in 0..d {
            write!(w, ",x{i}")?;
        }
        for i in 0..k {
            write!(w, ",w{i}")?;
        }
        writeln!(w, ",value")?;
        let (nt, ns, nm) = g.node_counts();
        for ti in 0..nt {
            let t = g.time_node(ti);
            for si in 0..ns {
                let x = g.space.node(si);
                for mi in 0..nm {
                    let m = g.simplex.node(mi);
                    write!(w, "{t}")?;
                    for xi in &x {
                        write!(w, ",{xi}")?;
                    }
                    for wi in m.weights() {
                        write!(w, ",{wi}")?;
                    }
                    writeln!(w, ",{}", self.value_at(ti, si, mi))?;
                }
            }
        }
        Ok(())
    }
}
