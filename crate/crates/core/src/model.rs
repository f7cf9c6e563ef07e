//! Controlled system description: dynamics, impulse outcome laws, and the
//! terminal gain.
//!
//! Two impulse families are built in.
//!
//! * `CensoredExecution`: an impulse is an order working for at most
//!   `duration`.  The execution delay is exponential with rate equal to the
//!   reaction parameter; the order either fills before the deadline or is
//!   cancelled at it, and only the resolution time plus the fill indicator
//!   are observed (the delay is right-censored at the deadline).
//! * `GaussianImpact`: an impulse resolves after exactly `duration`, shifting
//!   the state by `order * u + noise_scale * e` with `e` standard normal.
//!   The landing position is the observation.

use crate::bayes::{ParameterSet, Prior};
use crate::numerics::quad;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model parameter: {0}")]
    InvalidModelParams(String),
    #[error("action not part of this model: {0}")]
    UnsupportedAction(String),
    #[error("state {0:?} outside the declared domain and extrapolation is disabled")]
    UnsupportedStateDomain(Vec<f64>),
}

/// Time-and-position of the controlled process.  `t` lives in `[0, 2T]`:
/// latencies of impulses placed at the horizon can resolve up to `2T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub x: Vec<f64>,
}

impl State {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x }
    }
}

/// An impulse: an order of parameters `order` working for `duration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Impulse {
    pub duration: f64,
    pub order: Vec<f64>,
}

/// Controller choice at a decision time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Wait,
    Impulse(Impulse),
}

/// One support point of the discretized outcome law of an impulse.
///
/// `base_weight` is the mass under the parameter-free dominating measure;
/// `likelihood[k]` is the outcome density under parameter `k` relative to
/// that measure, so that `sum_o base_weight * likelihood[k] = 1` for each `k`
/// up to quadrature error.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub landing: State,
    pub base_weight: f64,
    pub likelihood: Vec<f64>,
    /// Whether the order filled (censored family only).
    pub filled: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeKernel {
    pub outcomes: Vec<Outcome>,
}

impl OutcomeKernel {
    /// Max over parameters of `|sum_o base_weight * likelihood_k - 1|`.
    pub fn stochasticity_defect(&self, n_params: usize) -> f64 {
        (0..n_params)
            .map(|k| {
                let mass: f64 = self
                    .outcomes
                    .iter()
                    .map(|o| o.base_weight * o.likelihood[k])
                    .sum();
                (mass - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Affine drift `mu(t, x) = linear * x + constant` with constant diffusion
/// matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineDynamics {
    pub linear: Vec<Vec<f64>>,
    pub constant: Vec<f64>,
    pub diffusion: Vec<Vec<f64>>,
}

impl AffineDynamics {
    /// Frozen dynamics: zero drift and diffusion in dimension `d`.
    pub fn frozen(d: usize) -> Self {
        Self {
            linear: vec![vec![0.0; d]; d],
            constant: vec![0.0; d],
            diffusion: vec![vec![0.0; d]; d],
        }
    }

    /// Scalar Brownian dynamics with drift `mu` and volatility `sigma`.
    pub fn scalar(mu: f64, sigma: f64) -> Self {
        Self {
            linear: vec![vec![0.0]],
            constant: vec![mu],
            diffusion: vec![vec![sigma]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImpulseFamily {
    /// Exponential execution delay censored at the order deadline.
    /// A fill moves the state by `order`; every attempt costs `attempt_cost`.
    CensoredExecution { attempt_cost: f64 },
    /// Deterministic latency; landing shifted by `order * u` plus Gaussian
    /// noise.  `reference_param` centers the dominating measure.
    GaussianImpact {
        noise_scale: f64,
        reference_param: f64,
    },
}

/// Terminal payoff family, affine in state, parameter and terminal noise:
///
/// `g(z, m, u, e) = constant + <linear_x, x> + param_coeff * u
///                + noise_coeff * e - time_penalty * (t - T)^+
///                - dispersion_penalty * Var_m(u)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSpec {
    pub constant: f64,
    pub linear_x: Vec<f64>,
    pub param_coeff: f64,
    pub noise_coeff: f64,
    pub time_penalty: f64,
    pub dispersion_penalty: f64,
}

impl GainSpec {
    /// Payoff `g = <linear_x, x>` only.
    pub fn linear(linear_x: Vec<f64>) -> Self {
        Self {
            constant: 0.0,
            linear_x,
            param_coeff: 0.0,
            noise_coeff: 0.0,
            time_penalty: 0.0,
            dispersion_penalty: 0.0,
        }
    }
}

/// Rectangular state domain used for grids and for the declared gain bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Complete description of one control problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub horizon: f64,
    pub dimension: usize,
    pub parameters: ParameterSet,
    pub dynamics: AffineDynamics,
    pub family: ImpulseFamily,
    pub gain: GainSpec,
    pub actions: Vec<Impulse>,
    pub domain: Domain,
    /// When false, evaluating dynamics outside `domain` is an error instead
    /// of an extrapolation.
    pub extrapolate: bool,
}

fn check_dims(spec: &ModelSpec) -> Result<(), ModelError> {
    let d = spec.dimension;
    let bad = |msg: &str| Err(ModelError::InvalidModelParams(msg.to_string()));
    if d == 0 {
        return bad("dimension must be positive");
    }
    if !(spec.horizon > 0.0) || !spec.horizon.is_finite() {
        return bad("horizon must be positive and finite");
    }
    if spec.dynamics.constant.len() != d
        || spec.dynamics.linear.len() != d
        || spec.dynamics.linear.iter().any(|r| r.len() != d)
        || spec.dynamics.diffusion.len() != d
        || spec.dynamics.diffusion.iter().any(|r| r.len() != d)
    {
        return bad("dynamics dimensions do not match");
    }
    if spec.gain.linear_x.len() != d {
        return bad("gain linear_x dimension does not match");
    }
    if spec.gain.time_penalty < 0.0 || spec.gain.dispersion_penalty < 0.0 {
        return bad("gain penalties must be nonnegative");
    }
    if spec.domain.lo.len() != d
        || spec.domain.hi.len() != d
        || spec
            .domain
            .lo
            .iter()
            .zip(&spec.domain.hi)
            .any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite())
    {
        return bad("domain must satisfy lo < hi componentwise");
    }
    if spec.actions.is_empty() {
        return bad("action grid must not be empty");
    }
    for a in &spec.actions {
        if !(0.0..=spec.horizon).contains(&a.duration) || !a.duration.is_finite() {
            return bad("action duration must lie in [0, horizon]");
        }
        if a.order.len() != d || a.order.iter().any(|b| !b.is_finite()) {
            return bad("action order must be a finite vector of model dimension");
        }
    }
    Ok(())
}

impl ModelSpec {
    /// Builds and validates a censored-execution model.  `parameters` are the
    /// candidate execution rates (all positive).
    pub fn censored_execution(
        horizon: f64,
        rates: Vec<f64>,
        attempt_cost: f64,
        dynamics: AffineDynamics,
        gain: GainSpec,
        actions: Vec<Impulse>,
        domain: Domain,
    ) -> Result<Self, ModelError> {
        if rates.iter().any(|u| !(*u > 0.0)) {
            return Err(ModelError::InvalidModelParams(
                "execution rates must be positive".into(),
            ));
        }
        if !attempt_cost.is_finite() {
            return Err(ModelError::InvalidModelParams(
                "attempt cost must be finite".into(),
            ));
        }
        let parameters = ParameterSet::new(rates)
            .map_err(|e| ModelError::InvalidModelParams(e.to_string()))?;
        let spec = Self {
            horizon,
            dimension: dynamics.constant.len(),
            parameters,
            dynamics,
            family: ImpulseFamily::CensoredExecution { attempt_cost },
            gain,
            actions,
            domain,
            extrapolate: true,
        };
        check_dims(&spec)?;
        Ok(spec)
    }

    /// Builds and validates a Gaussian-impact model.  `parameters` are the
    /// candidate impact slopes.  The dominating measure is centered at the
    /// arithmetic mean of the parameter set.
    pub fn gaussian_impact(
        horizon: f64,
        params: Vec<f64>,
        noise_scale: f64,
        dynamics: AffineDynamics,
        gain: GainSpec,
        actions: Vec<Impulse>,
        domain: Domain,
    ) -> Result<Self, ModelError> {
        if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
            return Err(ModelError::InvalidModelParams(
                "noise scale must be nonnegative".into(),
            ));
        }
        let reference_param = params.iter().sum::<f64>() / params.len().max(1) as f64;
        let parameters = ParameterSet::new(params)
            .map_err(|e| ModelError::InvalidModelParams(e.to_string()))?;
        let spec = Self {
            horizon,
            dimension: dynamics.constant.len(),
            parameters,
            dynamics,
            family: ImpulseFamily::GaussianImpact {
                noise_scale,
                reference_param,
            },
            gain,
            actions,
            domain,
            extrapolate: true,
        };
        check_dims(&spec)?;
        Ok(spec)
    }

    pub fn param_count(&self) -> usize {
        self.parameters.len()
    }

    fn domain_check(&self, x: &[f64]) -> Result<(), ModelError> {
        if self.extrapolate {
            return Ok(());
        }
        let inside = x
            .iter()
            .zip(self.domain.lo.iter().zip(&self.domain.hi))
            .all(|(xi, (l, h))| xi >= l && xi <= h);
        if inside {
            Ok(())
        } else {
            Err(ModelError::UnsupportedStateDomain(x.to_vec()))
        }
    }

    /// Drift vector at a state.
    pub fn drift(&self, state: &State) -> Result<Vec<f64>, ModelError> {
        self.domain_check(&state.x)?;
        let mut out = vec![0.0; self.dimension];
        self.drift_into(&state.x, &mut out);
        Ok(out)
    }

    pub(crate) fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.dimension {
            let mut v = self.dynamics.constant[i];
            let row = &self.dynamics.linear[i];
            for j in 0..self.dimension {
                v += row[j] * x[j];
            }
            out[i] = v;
        }
    }

    /// Diffusion matrix (constant over the domain).
    pub fn diffusion(&self, state: &State) -> Result<&[Vec<f64>], ModelError> {
        self.domain_check(&state.x)?;
        Ok(&self.dynamics.diffusion)
    }

    /// Whether the diffusion matrix is identically zero.
    pub fn is_deterministic(&self) -> bool {
        self.dynamics
            .diffusion
            .iter()
            .all(|row| row.iter().all(|s| *s == 0.0))
    }

    pub(crate) fn has_drift(&self) -> bool {
        self.dynamics.constant.iter().any(|c| *c != 0.0)
            || self
                .dynamics
                .linear
                .iter()
                .any(|row| row.iter().any(|a| *a != 0.0))
    }

    /// Discretized outcome law of an impulse placed at `state`.
    ///
    /// `resolution` controls the quadrature of the continuous observation
    /// component (Gauss-Legendre points over the delay for the censored
    /// family, Gauss-Hermite points per axis for the Gaussian family).
    /// Degenerate laws come out as exact atoms independent of `resolution`.
    pub fn impulse_outcome_kernel(
        &self,
        state: &State,
        action: &Impulse,
        resolution: usize,
    ) -> Result<OutcomeKernel, ModelError> {
        if resolution == 0 {
            return Err(ModelError::InvalidModelParams(
                "kernel resolution must be positive".into(),
            ));
        }
        if !(0.0..=self.horizon).contains(&action.duration) || action.order.len() != self.dimension
        {
            return Err(ModelError::UnsupportedAction(format!("{action:?}")));
        }
        match &self.family {
            ImpulseFamily::CensoredExecution { attempt_cost } => {
                Ok(self.censored_kernel(state, action, resolution, *attempt_cost))
            }
            ImpulseFamily::GaussianImpact {
                noise_scale,
                reference_param,
            } => Ok(self.gaussian_kernel(state, action, resolution, *noise_scale, *reference_param)),
        }
    }

    fn censored_kernel(
        &self,
        state: &State,
        action: &Impulse,
        resolution: usize,
        attempt_cost: f64,
    ) -> OutcomeKernel {
        let ell = action.duration;
        let rates = self.parameters.values();
        let mut outcomes = Vec::with_capacity(resolution + 1);
        if ell > 0.0 {
            // Continuous part: fill at delay s in (0, ell), density u e^{-u s}.
            for (s, w) in quad::gauss_legendre(resolution, 0.0, ell) {
                let mut x = state.x.clone();
                for (xi, b) in x.iter_mut().zip(&action.order) {
                    *xi += b;
                }
                // the attempt cost is booked on the first axis
                x[0] -= attempt_cost;
                outcomes.push(Outcome {
                    landing: State::new(state.t + s, x),
                    base_weight: w,
                    likelihood: rates.iter().map(|u| u * (-u * s).exp()).collect(),
                    filled: Some(true),
                });
            }
        }
        // Atom at the deadline: no fill, survival probability e^{-u ell}.
        let mut x = state.x.clone();
        x[0] -= attempt_cost;
        outcomes.push(Outcome {
            landing: State::new(state.t + ell, x),
            base_weight: 1.0,
            likelihood: rates.iter().map(|u| (-u * ell).exp()).collect(),
            filled: Some(false),
        });
        OutcomeKernel { outcomes }
    }

    fn gaussian_kernel(
        &self,
        state: &State,
        action: &Impulse,
        resolution: usize,
        noise_scale: f64,
        reference_param: f64,
    ) -> OutcomeKernel {
        let d = self.dimension;
        let params = self.parameters.values();
        let theta = state.t + action.duration;
        if noise_scale == 0.0 {
            // Degenerate limit: one atom per distinct landing, indicator
            // likelihoods under the counting measure.
            let landings: Vec<Vec<f64>> = params
                .iter()
                .map(|u| {
                    state
                        .x
                        .iter()
                        .zip(&action.order)
                        .map(|(xi, b)| xi + b * u)
                        .collect()
                })
                .collect();
            let mut outcomes: Vec<Outcome> = Vec::new();
            for (k, landing) in landings.iter().enumerate() {
                if let Some(o) = outcomes
                    .iter_mut()
                    .find(|o| o.landing.x == *landing)
                {
                    o.likelihood[k] = 1.0;
                } else {
                    let mut likelihood = vec![0.0; params.len()];
                    likelihood[k] = 1.0;
                    outcomes.push(Outcome {
                        landing: State::new(theta, landing.clone()),
                        base_weight: 1.0,
                        likelihood,
                        filled: None,
                    });
                }
            }
            return OutcomeKernel { outcomes };
        }
        // Dominating measure: Gaussian centered at the reference parameter's
        // landing, discretized by a tensor Gauss-Hermite rule.  Likelihoods
        // are the density ratios, keeping per-parameter masses at one.
        let nodes = quad::standard_normal(resolution);
        let mut outcomes = Vec::new();
        let mut idx = vec![0usize; d];
        loop {
            let mut y = vec![0.0; d];
            let mut w = 1.0;
            for i in 0..d {
                let (xi, wi) = nodes[idx[i]];
                y[i] = state.x[i] + action.order[i] * reference_param + noise_scale * xi;
                w *= wi;
            }
            let likelihood = params
                .iter()
                .map(|u| {
                    let mut log_ratio = 0.0;
                    for i in 0..d {
                        let dk = y[i] - state.x[i] - action.order[i] * u;
                        let dr = y[i] - state.x[i] - action.order[i] * reference_param;
                        log_ratio += (dr * dr - dk * dk) / (2.0 * noise_scale * noise_scale);
                    }
                    log_ratio.exp()
                })
                .collect();
            outcomes.push(Outcome {
                landing: State::new(theta, y),
                base_weight: w,
                likelihood,
                filled: None,
            });
            // advance tensor index
            let mut i = 0;
            loop {
                if i == d {
                    return OutcomeKernel { outcomes };
                }
                idx[i] += 1;
                if idx[i] < nodes.len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }

    /// Expected payoff at `state` when no further impulse is placed: the
    /// terminal noise is integrated by quadrature and the parameter by the
    /// belief.
    pub fn terminal_gain(&self, state: &State, prior: &Prior) -> f64 {
        debug_assert_eq!(prior.len(), self.param_count());
        let lin: f64 = self
            .gain
            .linear_x
            .iter()
            .zip(&state.x)
            .map(|(c, xi)| c * xi)
            .sum();
        let over = (state.t - self.horizon).max(0.0);
        let mean_u = prior.mean_of(|k| self.parameters.value(k));
        let var_u = if self.gain.dispersion_penalty != 0.0 {
            prior.mean_of(|k| {
                let du = self.parameters.value(k) - mean_u;
                du * du
            })
        } else {
            0.0
        };
        let noise_part = if self.gain.noise_coeff != 0.0 {
            quad::standard_normal(DEFAULT_NOISE_QUAD)
                .iter()
                .map(|&(e, w)| w * self.gain.noise_coeff * e)
                .sum()
        } else {
            0.0
        };
        self.gain.constant + lin + self.gain.param_coeff * mean_u + noise_part
            - self.gain.time_penalty * over
            - self.gain.dispersion_penalty * var_u
    }

    /// Realized payoff for a simulated path: parameter and terminal noise are
    /// plugged in rather than integrated.
    pub fn realized_gain(&self, state: &State, prior: &Prior, u: f64, e0: f64) -> f64 {
        let lin: f64 = self
            .gain
            .linear_x
            .iter()
            .zip(&state.x)
            .map(|(c, xi)| c * xi)
            .sum();
        let over = (state.t - self.horizon).max(0.0);
        let var_u = if self.gain.dispersion_penalty != 0.0 {
            let mean_u = prior.mean_of(|k| self.parameters.value(k));
            prior.mean_of(|k| {
                let du = self.parameters.value(k) - mean_u;
                du * du
            })
        } else {
            0.0
        };
        self.gain.constant
            + lin
            + self.gain.param_coeff * u
            + self.gain.noise_coeff * e0
            - self.gain.time_penalty * over
            - self.gain.dispersion_penalty * var_u
    }

    /// Bound on `|terminal_gain|` over `domain x [0, 2T]` and all beliefs.
    pub fn gain_bound(&self) -> f64 {
        let lin: f64 = self
            .gain
            .linear_x
            .iter()
            .zip(self.domain.lo.iter().zip(&self.domain.hi))
            .map(|(c, (l, h))| (c * l).abs().max((c * h).abs()))
            .sum();
        let umax = self
            .parameters
            .values()
            .iter()
            .fold(0.0f64, |m, u| m.max(u.abs()));
        let urange = {
            let lo = self
                .parameters
                .values()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let hi = self
                .parameters
                .values()
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        self.gain.constant.abs()
            + lin
            + self.gain.param_coeff.abs() * umax
            + self.gain.time_penalty * self.horizon
            + self.gain.dispersion_penalty * urange * urange * 0.25
    }

    /// Stable content digest of the model (hex), used to tie artifacts to the
    /// model they were computed from.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let value = serde_json::to_value(self).expect("model is serializable");
        // serde_json maps are ordered, so this rendering is canonical
        let canon = serde_json::to_string(&value).expect("canonical rendering");
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        let out = h.finalize();
        out.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Quadrature size for integrating the terminal noise.
pub const DEFAULT_NOISE_QUAD: usize = 8;
