//! Path simulation under the exact outcome laws, and Monte Carlo policy
//! evaluation.
//!
//! Every random quantity is drawn from a counter-based generator keyed by
//! (seed, path index, role), so results are reproducible for a given seed and
//! independent of thread count or evaluation order.  Monte Carlo averages use
//! a fixed pairwise summation tree for the same reason.

use crate::bayes::{bayes_update, BayesError, Prior};
use crate::model::{ImpulseFamily, Impulse, ModelSpec, State};
use crate::numerics::{next_grid_time, GridTime};
use crate::policy::Policy;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("policy was extracted for model {policy_hash}, got {model_hash}")]
    ModelMismatch {
        policy_hash: String,
        model_hash: String,
    },
    #[error("inadmissible event: {0}")]
    InadmissibleEvent(String),
    #[error("true parameter index {0} out of range")]
    BadParameter(usize),
    #[error(transparent)]
    Bayes(#[from] BayesError),
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

pub mod rng {
    //! Counter-based uniform/normal/exponential streams.  Output `i` of a
    //! stream is a pure function of (seed, path, role, i).

    const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum StreamRole {
        /// Sampling the unknown parameter from the prior.
        Param = 0,
        /// Diffusion increments between decisions.
        Brownian = 1,
        /// Impulse outcome draws (delays, fill noise).
        Impulse = 2,
        /// The terminal gain disturbance.
        Terminal = 3,
    }

    #[derive(Debug, Clone)]
    pub struct Stream {
        key: u64,
        counter: u64,
        spare: Option<f64>,
    }

    impl Stream {
        pub fn new(seed: u64, path: u64, role: StreamRole) -> Self {
            let key = mix(seed ^ mix(path ^ mix(role as u64 ^ GAMMA)));
            Self {
                key,
                counter: 0,
                spare: None,
            }
        }

        pub fn next_u64(&mut self) -> u64 {
            self.counter += 1;
            mix(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
        }

        /// Uniform on [0, 1) with 53 random bits.
        pub fn uniform(&mut self) -> f64 {
            (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
        }

        /// Standard normal via the Box-Muller pair; one draw is banked.
        pub fn normal(&mut self) -> f64 {
            if let Some(z) = self.spare.take() {
                return z;
            }
            let u1 = self.uniform();
            let u2 = self.uniform();
            let r = (-2.0 * (1.0 - u1).ln()).sqrt();
            let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
            self.spare = Some(r * s);
            r * c
        }

        /// Exponential with the given rate, by inverse transform.
        pub fn exponential(&mut self, rate: f64) -> f64 {
            debug_assert!(rate > 0.0);
            -(1.0 - self.uniform()).ln() / rate
        }
    }
}

use rng::{Stream, StreamRole};

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ImpulseEvent {
    pub placed_at: f64,
    /// Index into the model's action list.
    pub action: usize,
    pub resolved_at: f64,
    pub landing: Vec<f64>,
    pub filled: Option<bool>,
    /// Per-parameter likelihood of the realized outcome.
    pub likelihood: Vec<f64>,
    /// Belief right after the landing.
    pub posterior: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    /// (time, state) at decision nodes, Euler sub-steps, and landings.
    pub samples: Vec<(f64, Vec<f64>)>,
    pub events: Vec<ImpulseEvent>,
    /// Index of the parameter the path was generated under.
    pub param_index: usize,
    /// Last landing time if it falls past the horizon, else the horizon.
    pub effective_horizon: f64,
    pub terminal_state: Vec<f64>,
    pub terminal_noise: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimOpts {
    /// Euler sub-steps per grid interval (partial gaps are prorated).
    pub euler_substeps: usize,
}

impl Default for SimOpts {
    fn default() -> Self {
        Self { euler_substeps: 4 }
    }
}

struct Draw {
    theta: f64,
    landing: Vec<f64>,
    filled: Option<bool>,
    likelihood: Vec<f64>,
}

/// Samples one impulse outcome under the true parameter, with the same
/// landing arithmetic as the outcome kernels so that zero-noise landings
/// match kernel support points bit for bit.
fn draw_outcome(
    spec: &ModelSpec,
    tau: f64,
    x: &[f64],
    action: &Impulse,
    u_true: f64,
    rng: &mut Stream,
) -> Draw {
    let params = spec.parameters.values();
    match &spec.family {
        ImpulseFamily::CensoredExecution { attempt_cost } => {
            let deadline = action.duration;
            let (filled, delay) = if deadline == 0.0 {
                (false, 0.0)
            } else {
                let d = rng.exponential(u_true);
                if d < deadline {
                    (true, d)
                } else {
                    (false, deadline)
                }
            };
            let theta = tau + if filled { delay } else { deadline };
            let mut y = x.to_vec();
            if filled {
                for (yi, oi) in y.iter_mut().zip(&action.order) {
                    *yi += oi;
                }
            }
            y[0] -= attempt_cost;
            let likelihood = params
                .iter()
                .map(|uk| {
                    if filled {
                        uk * (-uk * delay).exp()
                    } else {
                        (-uk * deadline).exp()
                    }
                })
                .collect();
            Draw {
                theta,
                landing: y,
                filled: Some(filled),
                likelihood,
            }
        }
        ImpulseFamily::GaussianImpact { noise_scale, .. } => {
            let theta = tau + action.duration;
            let mut y = x.to_vec();
            if *noise_scale == 0.0 {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi = x[i] + action.order[i] * u_true;
                }
                // exact support points: the likelihood is an indicator of
                // landing equality, as in the kernel
                let likelihood = params
                    .iter()
                    .map(|uk| {
                        let same = (0..x.len())
                            .all(|i| (x[i] + action.order[i] * uk).to_bits() == y[i].to_bits());
                        if same {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Draw {
                    theta,
                    landing: y,
                    filled: None,
                    likelihood,
                }
            } else {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi = x[i] + action.order[i] * u_true + noise_scale * rng.normal();
                }
                // Gaussian densities up to a factor common to all parameters
                let likelihood = params
                    .iter()
                    .map(|uk| {
                        let mut q = 0.0;
                        for i in 0..x.len() {
                            let r = (y[i] - x[i] - action.order[i] * uk) / noise_scale;
                            q += r * r;
                        }
                        (-0.5 * q).exp()
                    })
                    .collect();
                Draw {
                    theta,
                    landing: y,
                    filled: None,
                    likelihood,
                }
            }
        }
    }
}

fn sample_categorical(m: &Prior, u: f64) -> usize {
    let mut acc = 0.0;
    for (k, w) in m.weights().iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    m.weights().len() - 1
}

/// Euler steps from `t0` to `t1`, drawing per-axis normals in axis order at
/// each sub-step; records every sub-step state.  Uses the raw drift without
/// domain checks: paths may leave the box, lookups clamp.
fn euler_segment(
    spec: &ModelSpec,
    x: &mut [f64],
    t0: f64,
    t1: f64,
    step_ref: f64,
    substeps: usize,
    rng: &mut Stream,
    samples: &mut Vec<(f64, Vec<f64>)>,
) {
    let gap = t1 - t0;
    if gap <= 0.0 {
        return;
    }
    let nsub = ((substeps as f64 * gap / step_ref).ceil() as usize).max(1);
    let h = gap / nsub as f64;
    let sqrt_h = h.sqrt();
    let d = x.len();
    let deterministic = spec.is_deterministic();
    let mut drift = vec![0.0; d];
    let mut z = vec![0.0; d];
    for s in 0..nsub {
        spec.drift_into(x, &mut drift);
        if !deterministic {
            for zi in z.iter_mut() {
                *zi = rng.normal();
            }
        }
        for i in 0..d {
            let mut diff = 0.0;
            if !deterministic {
                for (j, zj) in z.iter().enumerate() {
                    diff += spec.dynamics.diffusion[i][j] * zj;
                }
            }
            x[i] += drift[i] * h + sqrt_h * diff;
        }
        samples.push((t0 + (s + 1) as f64 * h, x.to_vec()));
    }
}

/// Simulates one path under the policy.  `true_param` pins the parameter;
/// otherwise it is sampled from `m0`.
pub fn simulate(
    spec: &ModelSpec,
    policy: &Policy,
    x0: &[f64],
    m0: &Prior,
    seed: u64,
    true_param: Option<usize>,
    opts: &SimOpts,
) -> Result<Trajectory, SimError> {
    sim_path(spec, policy, x0, m0, seed, 0, true_param, opts)
}

#[allow(clippy::too_many_arguments)]
pub fn sim_path(
    spec: &ModelSpec,
    policy: &Policy,
    x0: &[f64],
    m0: &Prior,
    seed: u64,
    path: u64,
    true_param: Option<usize>,
    opts: &SimOpts,
) -> Result<Trajectory, SimError> {
    let model_hash = spec.digest();
    if policy.model_hash() != model_hash {
        return Err(SimError::ModelMismatch {
            policy_hash: policy.model_hash().to_string(),
            model_hash,
        });
    }
    let grids = policy.grids();
    let step = grids.time_step();
    let snap = grids.time_snap();
    let last = grids.time_count() - 1;

    let mut param_rng = Stream::new(seed, path, StreamRole::Param);
    let k_true = match true_param {
        Some(k) => {
            if k >= spec.param_count() {
                return Err(SimError::BadParameter(k));
            }
            k
        }
        None => sample_categorical(m0, param_rng.uniform()),
    };
    let u_true = spec.parameters.value(k_true);
    let mut brownian = Stream::new(seed, path, StreamRole::Brownian);
    let mut impulse_rng = Stream::new(seed, path, StreamRole::Impulse);
    let mut terminal_rng = Stream::new(seed, path, StreamRole::Terminal);

    let mut x = x0.to_vec();
    let mut m = m0.clone();
    let mut samples = vec![(0.0, x.clone())];
    let mut events: Vec<ImpulseEvent> = Vec::new();
    let mut j = 0usize;
    let (end_t, end_x) = loop {
        let tj = grids.time_node(j);
        let choice = policy.lookup_choice(&State::new(tj, x.clone()), &m);
        if choice == 0 {
            if j == last {
                break (grids.horizon, x.clone());
            }
            euler_segment(
                spec,
                &mut x,
                tj,
                grids.time_node(j + 1),
                step,
                opts.euler_substeps,
                &mut brownian,
                &mut samples,
            );
            j += 1;
            continue;
        }
        let action_idx = choice as usize - 1;
        let action = policy.actions()[action_idx].clone();
        let draw = draw_outcome(spec, tj, &x, &action, u_true, &mut impulse_rng);
        if draw.theta < tj - snap {
            return Err(SimError::InadmissibleEvent(format!(
                "landing at {} precedes its impulse at {}",
                draw.theta, tj
            )));
        }
        let post = bayes_update(&m, &draw.likelihood)?;
        events.push(ImpulseEvent {
            placed_at: tj,
            action: action_idx,
            resolved_at: draw.theta,
            landing: draw.landing.clone(),
            filled: draw.filled,
            likelihood: draw.likelihood,
            posterior: post.weights().to_vec(),
        });
        x = draw.landing;
        m = post;
        samples.push((draw.theta, x.clone()));
        if draw.theta > grids.horizon + snap {
            break (draw.theta, x.clone());
        }
        let target = if draw.theta > tj + snap {
            next_grid_time(grids, draw.theta, false)
        } else {
            next_grid_time(grids, tj, true)
        };
        match target {
            GridTime::Node(j2) => {
                euler_segment(
                    spec,
                    &mut x,
                    draw.theta,
                    grids.time_node(j2),
                    step,
                    opts.euler_substeps,
                    &mut brownian,
                    &mut samples,
                );
                j = j2;
            }
            // a zero-latency impulse at the horizon ends the path there
            GridTime::BeyondHorizon => break (grids.horizon, x.clone()),
        }
    };

    let e0 = terminal_rng.normal();
    let terminal = State::new(end_t, end_x.clone());
    let gain = spec.realized_gain(&terminal, &m, u_true, e0);
    Ok(Trajectory {
        samples,
        events,
        param_index: k_true,
        effective_horizon: end_t,
        terminal_state: end_x,
        terminal_noise: e0,
        gain,
    })
}

impl Trajectory {
    /// CSV header for trajectory dumps.
    pub fn csv_header(dimension: usize, n_params: usize) -> String {
        let mut cols = vec!["path".to_string(), "kind".to_string(), "t".to_string()];
        cols.extend((0..dimension).map(|i| format!("x{i}")));
        cols.extend(["action".to_string(), "resolved_at".to_string(), "filled".to_string()]);
        cols.extend((0..n_params).map(|k| format!("w{k}")));
        cols.push("gain".to_string());
        cols.join(",")
    }

    /// Appends one row per sample, event, and the terminal summary.
    pub fn append_csv<W: std::io::Write>(
        &self,
        w: &mut W,
        path: u64,
        n_params: usize,
    ) -> std::io::Result<()> {
        let blank_w = vec![String::new(); n_params].join(",");
        for (t, x) in &self.samples {
            let xs: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{path},sample,{t},{},,,,{blank_w},", xs.join(","))?;
        }
        for e in &self.events {
            let xs: Vec<String> = e.landing.iter().map(|v| format!("{v}")).collect();
            let ws: Vec<String> = e.posterior.iter().map(|v| format!("{v}")).collect();
            let filled = e
                .filled
                .map(|f| f.to_string())
                .unwrap_or_default();
            writeln!(
                w,
                "{path},event,{},{},{},{},{},{},",
                e.placed_at,
                xs.join(","),
                e.action,
                e.resolved_at,
                filled,
                ws.join(",")
            )?;
        }
        let xs: Vec<String> = self.terminal_state.iter().map(|v| format!("{v}")).collect();
        let ws = if let Some(e) = self.events.last() {
            e.posterior
                .iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(",")
        } else {
            blank_w
        };
        writeln!(
            w,
            "{path},terminal,{},{},,,,{ws},{}",
            self.effective_horizon,
            xs.join(","),
            self.gain
        )?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
    pub seed: u64,
}

/// Sums with a fixed halving tree, so the result depends only on the values
/// and their order, never on chunking or thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Mean gain of the policy over `paths` independent paths with consecutive
/// path indices, plus its standard error.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_mc(
    spec: &ModelSpec,
    policy: &Policy,
    x0: &[f64],
    m0: &Prior,
    seed: u64,
    paths: usize,
    true_param: Option<usize>,
    opts: &SimOpts,
) -> Result<McEstimate, SimError> {
    assert!(paths > 0, "need at least one path");
    let gains: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| sim_path(spec, policy, x0, m0, seed, p as u64, true_param, opts).map(|t| t.gain))
        .collect::<Result<_, _>>()?;
    let mean = pairwise_sum(&gains) / paths as f64;
    let sq: Vec<f64> = gains.iter().map(|g| (g - mean) * (g - mean)).collect();
    let std_error = if paths > 1 {
        (pairwise_sum(&sq) / (paths as f64 - 1.0) / paths as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(McEstimate {
        mean,
        std_error,
        paths,
        seed,
    })
}
