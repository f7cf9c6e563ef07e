//! Exact expectimax ground truth on finite instances.
//!
//! A [`DiscreteInstance`] freezes the diffusion (zero drift and volatility)
//! so that the controlled process only moves at impulse landings.  With a
//! finite state set and exact outcome kernels, the value can be computed by
//! full-width backward recursion over reachable `(time, state, belief)`
//! triples, memoized on exact belief bits.  This module never touches the
//! grid solver; it is the reference the solver is checked against.

use crate::bayes::{bayes_update, predictive_density, ParameterSet, Prior};
use crate::model::{ModelError, ModelSpec, State};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("landing {0:?} escapes the instance state set or domain")]
    StateEscape(Vec<f64>),
    #[error("instances require frozen dynamics (zero drift and diffusion)")]
    RequiresFrozenDynamics,
    #[error("instances require terminal gains linear in the belief")]
    RequiresLinearGain,
    #[error("unknown state or time index")]
    BadIndex,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Where an impulse outcome lands.
#[derive(Debug, Clone)]
pub enum DiscreteLanding {
    /// Back on the decision grid.
    Grid { time: usize, state: usize },
    /// Past the horizon; per-parameter terminal gains evaluated at the
    /// landing.
    Terminal { param_gains: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct DiscreteOutcome {
    pub landing: DiscreteLanding,
    pub base_weight: f64,
    pub likelihood: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    pub outcomes: Vec<DiscreteOutcome>,
}

/// Finite decision problem: dyadic decision times, a finite state set, and
/// exact outcome kernels per (time, state, action).
pub struct DiscreteInstance {
    pub times: Vec<f64>,
    pub horizon: f64,
    pub states: Vec<Vec<f64>>,
    pub params: ParameterSet,
    pub n_actions: usize,
    kernels: HashMap<(usize, usize, usize), DiscreteKernel>,
    /// `terminal[s][k]`: gain when no impulse is pending at the horizon.
    pub terminal: Vec<Vec<f64>>,
    /// Decision nodes reachable from the seeded start.
    pub decision_nodes: Vec<(usize, usize)>,
}

/// Argmax tree of an instance: `choice` 0 is wait, `i + 1` is action `i`.
#[derive(Debug)]
pub struct PolicyTree {
    pub choice: usize,
    pub value: f64,
    pub branches: Vec<PolicyTree>,
}

type Memo = HashMap<(usize, usize, Vec<u64>), f64>;

impl DiscreteInstance {
    /// Derives an instance from a frozen model by enumerating every state
    /// reachable from `x0` through impulse landings.
    ///
    /// The mapping of landing times to decision nodes mirrors the grid
    /// solver: a landing strictly between nodes defers to the next node, a
    /// landing past the horizon is terminal, and an impulse placed at the
    /// horizon is always terminal.
    pub fn from_model(
        spec: &ModelSpec,
        level: u32,
        x0: &[f64],
        kernel_resolution: usize,
    ) -> Result<(Self, usize), OracleError> {
        if !spec.is_deterministic() || spec.has_drift() {
            return Err(OracleError::RequiresFrozenDynamics);
        }
        if spec.gain.dispersion_penalty != 0.0 {
            return Err(OracleError::RequiresLinearGain);
        }
        let n_params = spec.param_count();
        let last = 1usize << level;
        let horizon = spec.horizon;
        let times: Vec<f64> = (0..=last)
            .map(|j| (j as f64 * horizon) / (1u64 << level) as f64)
            .collect();
        let step = horizon / (1u64 << level) as f64;
        let snap = step * 1e-9;

        fn intern(
            states: &mut Vec<Vec<f64>>,
            index: &mut HashMap<Vec<u64>, usize>,
            x: &[f64],
        ) -> usize {
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            *index.entry(key).or_insert_with(|| {
                states.push(x.to_vec());
                states.len() - 1
            })
        }
        let mut states: Vec<Vec<f64>> = Vec::new();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let x0_idx = intern(&mut states, &mut index, x0);

        let param_gains_at = |landing: &State| -> Vec<f64> {
            (0..n_params)
                .map(|k| spec.terminal_gain(landing, &Prior::dirac(k, n_params)))
                .collect()
        };

        let mut kernels = HashMap::new();
        let mut decision_nodes = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut queue = std::collections::VecDeque::new();
        queue.push_back((0usize, x0_idx));
        seen.insert((0usize, x0_idx));
        while let Some((t_idx, s_idx)) = queue.pop_front() {
            decision_nodes.push((t_idx, s_idx));
            let x = states[s_idx].clone();
            let inside = x
                .iter()
                .zip(spec.domain.lo.iter().zip(&spec.domain.hi))
                .all(|(xi, (l, h))| *xi >= *l && *xi <= *h);
            if !inside {
                return Err(OracleError::StateEscape(x));
            }
            if t_idx < last && seen.insert((t_idx + 1, s_idx)) {
                queue.push_back((t_idx + 1, s_idx));
            }
            let acted = times[t_idx];
            let state = State::new(acted, x);
            for (ai, action) in spec.actions.iter().enumerate() {
                let raw = spec.impulse_outcome_kernel(&state, action, kernel_resolution)?;
                let mut outcomes = Vec::with_capacity(raw.outcomes.len());
                for o in raw.outcomes {
                    let theta = o.landing.t;
                    let landing = if t_idx == last || theta > horizon + snap {
                        DiscreteLanding::Terminal {
                            param_gains: param_gains_at(&o.landing),
                        }
                    } else {
                        let j = if theta > acted + snap {
                            (((theta - snap) / step).ceil() as usize).min(last)
                        } else {
                            t_idx + 1
                        };
                        let si = intern(&mut states, &mut index, &o.landing.x);
                        if seen.insert((j, si)) {
                            queue.push_back((j, si));
                        }
                        DiscreteLanding::Grid { time: j, state: si }
                    };
                    outcomes.push(DiscreteOutcome {
                        landing,
                        base_weight: o.base_weight,
                        likelihood: o.likelihood,
                    });
                }
                kernels.insert((t_idx, s_idx, ai), DiscreteKernel { outcomes });
            }
        }

        let terminal = states
            .iter()
            .map(|x| param_gains_at(&State::new(horizon, x.clone())))
            .collect();

        Ok((
            Self {
                times,
                horizon,
                states,
                params: spec.parameters.clone(),
                n_actions: spec.actions.len(),
                kernels,
                terminal,
                decision_nodes,
            },
            x0_idx,
        ))
    }

    pub fn kernel(&self, t: usize, s: usize, a: usize) -> Option<&DiscreteKernel> {
        self.kernels.get(&(t, s, a))
    }

    pub fn state_index(&self, x: &[f64]) -> Option<usize> {
        self.states.iter().position(|s| s == x)
    }

    fn last(&self) -> usize {
        self.times.len() - 1
    }

    fn wait_value(
        &self,
        t: usize,
        s: usize,
        m: &Prior,
        use_bayes: bool,
        memo: &mut Memo,
    ) -> Result<f64, OracleError> {
        if t == self.last() {
            Ok(m.mean_of(|k| self.terminal[s][k]))
        } else {
            self.value_inner(t + 1, s, m, use_bayes, memo)
        }
    }

    fn branch_value(
        &self,
        kernel: &DiscreteKernel,
        m: &Prior,
        use_bayes: bool,
        memo: &mut Memo,
    ) -> Result<f64, OracleError> {
        let mut acc = 0.0;
        for o in &kernel.outcomes {
            let pred = predictive_density(m, &o.likelihood);
            if pred <= 0.0 {
                continue; // outcome impossible under this belief
            }
            let post = if use_bayes {
                bayes_update(m, &o.likelihood).expect("positive predictive mass")
            } else {
                m.clone()
            };
            let v = match &o.landing {
                DiscreteLanding::Grid { time, state } => {
                    self.value_inner(*time, *state, &post, use_bayes, memo)?
                }
                DiscreteLanding::Terminal { param_gains } => {
                    post.mean_of(|k| param_gains[k])
                }
            };
            acc += o.base_weight * pred * v;
        }
        Ok(acc)
    }

    fn value_inner(
        &self,
        t: usize,
        s: usize,
        m: &Prior,
        use_bayes: bool,
        memo: &mut Memo,
    ) -> Result<f64, OracleError> {
        if t >= self.times.len() || s >= self.states.len() {
            return Err(OracleError::BadIndex);
        }
        let key = (t, s, m.bit_key());
        if let Some(v) = memo.get(&key) {
            return Ok(*v);
        }
        let mut best = self.wait_value(t, s, m, use_bayes, memo)?;
        for a in 0..self.n_actions {
            if let Some(kernel) = self.kernels.get(&(t, s, a)) {
                let v = self.branch_value(kernel, m, use_bayes, memo)?;
                if v > best {
                    best = v;
                }
            }
        }
        memo.insert(key, best);
        Ok(best)
    }

    /// Exact value of the instance at a decision node.
    pub fn exact_value(&self, t: usize, s: usize, m: &Prior) -> Result<f64, OracleError> {
        self.value_inner(t, s, m, true, &mut Memo::new())
    }

    /// Value with belief updates disabled: the posterior is pinned to the
    /// prior at every landing, so observations carry no information.
    pub fn exact_value_pinned(&self, t: usize, s: usize, m: &Prior) -> Result<f64, OracleError> {
        self.value_inner(t, s, m, false, &mut Memo::new())
    }

    /// Argmax tree: choice at each node, ties to wait then the lowest action
    /// index, expanded along the chosen branch.
    pub fn exact_policy(&self, t: usize, s: usize, m: &Prior) -> Result<PolicyTree, OracleError> {
        let memo = &mut Memo::new();
        self.policy_inner(t, s, m, memo)
    }

    fn policy_inner(
        &self,
        t: usize,
        s: usize,
        m: &Prior,
        memo: &mut Memo,
    ) -> Result<PolicyTree, OracleError> {
        let wait = self.wait_value(t, s, m, true, memo)?;
        let mut best = wait;
        let mut choice = 0usize;
        for a in 0..self.n_actions {
            if let Some(kernel) = self.kernels.get(&(t, s, a)) {
                let v = self.branch_value(kernel, m, true, memo)?;
                if v > best {
                    best = v;
                    choice = a + 1;
                }
            }
        }
        let mut branches = Vec::new();
        if choice == 0 {
            if t < self.last() {
                branches.push(self.policy_inner(t + 1, s, m, memo)?);
            }
        } else if let Some(kernel) = self.kernels.get(&(t, s, choice - 1)) {
            for o in &kernel.outcomes {
                let pred = predictive_density(m, &o.likelihood);
                if pred <= 0.0 {
                    continue;
                }
                if let DiscreteLanding::Grid { time, state } = &o.landing {
                    let post = bayes_update(m, &o.likelihood).expect("positive predictive mass");
                    branches.push(self.policy_inner(*time, *state, &post, memo)?);
                }
            }
        }
        Ok(PolicyTree {
            choice,
            value: best,
            branches,
        })
    }

    /// All beliefs reachable from `m0` at decision nodes, including `m0`.
    pub fn reachable_beliefs(&self, m0: &Prior) -> Vec<Prior> {
        let mut out: Vec<Prior> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![m0.clone()];
        while let Some(m) = stack.pop() {
            if !seen.insert(m.bit_key()) {
                continue;
            }
            for kernel in self.kernels.values() {
                for o in &kernel.outcomes {
                    if matches!(o.landing, DiscreteLanding::Grid { .. })
                        && predictive_density(&m, &o.likelihood) > 0.0
                    {
                        let post = bayes_update(&m, &o.likelihood).unwrap();
                        if !seen.contains(&post.bit_key()) {
                            stack.push(post);
                        }
                    }
                }
            }
            out.push(m);
        }
        out
    }
}

/// Ready-made instances with hand-checked values, shared by tests and the
/// command line.
pub mod instances {
    use super::*;
    use crate::model::{AffineDynamics, Domain, GainSpec, Impulse};

    pub struct BundledInstance {
        pub name: &'static str,
        pub spec: ModelSpec,
        pub level: u32,
        pub x0: Vec<f64>,
        pub m0: Prior,
        pub space_counts: Vec<usize>,
        pub simplex_resolution: usize,
        /// Hand-computed exact value at `(t=0, x0, m0)`, when known in
        /// closed form.
        pub frozen_value: Option<f64>,
    }

    impl BundledInstance {
        pub fn instance(
            &self,
            kernel_resolution: usize,
        ) -> Result<(DiscreteInstance, usize), OracleError> {
            DiscreteInstance::from_model(&self.spec, self.level, &self.x0, kernel_resolution)
        }
    }

    fn gain_x() -> GainSpec {
        GainSpec::linear(vec![1.0])
    }

    fn gain_x_with_late_penalty(penalty: f64) -> GainSpec {
        GainSpec {
            time_penalty: penalty,
            ..GainSpec::linear(vec![1.0])
        }
    }

    /// Every impulse strictly loses money; the exact value is `x0` and the
    /// policy waits everywhere.
    pub fn frozen_no_profit() -> BundledInstance {
        let spec = ModelSpec::gaussian_impact(
            1.0,
            vec![1.0, 2.0],
            0.0,
            AffineDynamics::frozen(1),
            gain_x(),
            vec![Impulse {
                duration: 0.5,
                order: vec![-1.0],
            }],
            Domain {
                lo: vec![-6.5],
                hi: vec![0.5],
            },
        )
        .unwrap();
        BundledInstance {
            name: "frozen_no_profit",
            spec,
            level: 1,
            x0: vec![0.0],
            m0: Prior::new(vec![0.5, 0.5]).unwrap(),
            space_counts: vec![29],
            simplex_resolution: 5,
            frozen_value: Some(0.0),
        }
    }

    /// A single profitable impulse: acting at `t = 0` resolves exactly at the
    /// horizon and adds the unknown parameter (0 or 1), while the lateness
    /// penalty makes any later impulse worthless.  Exact value `x0 + 0.5`.
    pub fn one_shot() -> BundledInstance {
        let spec = ModelSpec::gaussian_impact(
            1.0,
            vec![0.0, 1.0],
            0.0,
            AffineDynamics::frozen(1),
            gain_x_with_late_penalty(1.0),
            vec![Impulse {
                duration: 1.0,
                order: vec![1.0],
            }],
            Domain {
                lo: vec![-2.0],
                hi: vec![2.0],
            },
        )
        .unwrap();
        BundledInstance {
            name: "one_shot",
            spec,
            level: 1,
            x0: vec![0.0],
            m0: Prior::new(vec![0.5, 0.5]).unwrap(),
            space_counts: vec![17],
            simplex_resolution: 5,
            frozen_value: Some(0.5),
        }
    }

    /// Acting early reveals the sign of the parameter, and the second period
    /// exploits it; acting late (or never) is worth nothing.  Exact value
    /// `x0 + 1`.
    pub fn two_period_voi() -> BundledInstance {
        let spec = ModelSpec::gaussian_impact(
            1.0,
            vec![-1.0, 1.0],
            0.0,
            AffineDynamics::frozen(1),
            gain_x_with_late_penalty(10.0),
            vec![
                Impulse {
                    duration: 0.5,
                    order: vec![1.0],
                },
                Impulse {
                    duration: 0.5,
                    order: vec![-1.0],
                },
            ],
            Domain {
                lo: vec![-2.5],
                hi: vec![2.5],
            },
        )
        .unwrap();
        BundledInstance {
            name: "two_period_voi",
            spec,
            level: 1,
            x0: vec![0.0],
            m0: Prior::new(vec![0.5, 0.5]).unwrap(),
            space_counts: vec![21],
            simplex_resolution: 5,
            frozen_value: Some(1.0),
        }
    }

    /// The impulse is an exact no-op, so every branch ties with waiting and
    /// the tie-break must pick wait everywhere.  Exact value `x0`.
    pub fn tie_break() -> BundledInstance {
        let spec = ModelSpec::gaussian_impact(
            1.0,
            vec![1.0, 2.0],
            0.0,
            AffineDynamics::frozen(1),
            gain_x(),
            vec![Impulse {
                duration: 0.5,
                order: vec![0.0],
            }],
            Domain {
                lo: vec![-1.0],
                hi: vec![1.0],
            },
        )
        .unwrap();
        BundledInstance {
            name: "tie_break",
            spec,
            level: 1,
            x0: vec![0.0],
            m0: Prior::new(vec![0.5, 0.5]).unwrap(),
            space_counts: vec![9],
            simplex_resolution: 5,
            frozen_value: Some(0.0),
        }
    }

    /// Censored execution with a known rate: exercises the quadrature kernel,
    /// deadline atom, attempt cost, and landing deferral end to end.
    pub fn censored_known_rate() -> BundledInstance {
        let spec = ModelSpec::censored_execution(
            1.0,
            vec![1.0],
            0.3,
            AffineDynamics::frozen(1),
            gain_x(),
            vec![Impulse {
                duration: 0.5,
                order: vec![1.0],
            }],
            Domain {
                lo: vec![-1.5],
                hi: vec![2.5],
            },
        )
        .unwrap();
        BundledInstance {
            name: "censored_known_rate",
            spec,
            level: 1,
            x0: vec![0.0],
            m0: Prior::new(vec![1.0]).unwrap(),
            space_counts: vec![41],
            simplex_resolution: 2,
            frozen_value: None,
        }
    }

    /// Three-parameter variant: the first impulse is a fair coin over
    /// {-1, 0, +1} that reveals the parameter; only the +1 branch is worth
    /// repeating.  Exact value `x0 + 0.25`.
    pub fn three_param() -> BundledInstance {
        let spec = ModelSpec::gaussian_impact(
            1.0,
            vec![-1.0, 0.0, 1.0],
            0.0,
            AffineDynamics::frozen(1),
            gain_x_with_late_penalty(10.0),
            vec![Impulse {
                duration: 0.5,
                order: vec![1.0],
            }],
            Domain {
                lo: vec![-2.5],
                hi: vec![2.5],
            },
        )
        .unwrap();
        BundledInstance {
            name: "three_param",
            spec,
            level: 1,
            x0: vec![0.0],
            m0: Prior::new(vec![0.25, 0.5, 0.25]).unwrap(),
            space_counts: vec![21],
            simplex_resolution: 5,
            frozen_value: Some(0.25),
        }
    }

    pub fn bundled() -> Vec<BundledInstance> {
        vec![
            frozen_no_profit(),
            one_shot(),
            two_period_voi(),
            tie_break(),
            censored_known_rate(),
            three_param(),
        ]
    }
}
