//! Randomized invariants: belief updates stay distributions, outcome kernels
//! integrate to one per parameter, grid interpolation reproduces affine
//! functions exactly, and the deterministic summation tree stays accurate.

use impulse_core::bayes::{bayes_update, normalize, predictive_density, Prior};
use impulse_core::model::{AffineDynamics, Domain, GainSpec, Impulse, ModelSpec, State};
use impulse_core::numerics::{next_grid_time, GridSpec, GridTime, SimplexGrid, SpaceGrid};
use impulse_core::oracle::instances;
use impulse_core::sim::pairwise_sum;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn posterior_is_a_distribution(
        k in 1usize..=3,
        raw in prop::collection::vec(1e-6f64..1.0, 3),
        lik in prop::collection::vec(1e-9f64..10.0, 3),
    ) {
        let prior = normalize(&raw[..k]).unwrap();
        let post = bayes_update(&prior, &lik[..k]).unwrap();
        let mass: f64 = (0..k).map(|i| post.weight(i)).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-12);
        prop_assert!((0..k).all(|i| post.weight(i) >= 0.0));
    }

    #[test]
    fn dirac_is_a_fixed_point(
        k in 1usize..=3,
        which in 0usize..3,
        lik in prop::collection::vec(1e-9f64..10.0, 3),
    ) {
        let which = which % k;
        let m = Prior::dirac(which, k);
        let post = bayes_update(&m, &lik[..k]).unwrap();
        prop_assert_eq!(post, m);
    }

    #[test]
    fn uninformative_observations_leave_the_belief_alone(
        k in 1usize..=3,
        raw in prop::collection::vec(1e-6f64..1.0, 3),
        c in 1e-6f64..100.0,
    ) {
        let prior = normalize(&raw[..k]).unwrap();
        let post = bayes_update(&prior, &vec![c; k]).unwrap();
        for i in 0..k {
            prop_assert!((post.weight(i) - prior.weight(i)).abs() <= 1e-15);
        }
    }
}

/// Mixing posteriors by predictive outcome mass recovers the prior.  Checked
/// over every outcome kernel of every bundled instance.
#[test]
fn posterior_mixture_recovers_the_prior_on_bundled_kernels() {
    for b in instances::bundled() {
        let k = b.spec.param_count();
        let priors = [
            b.m0.clone(),
            Prior::uniform(k),
            normalize(&(1..=k).map(|i| i as f64).collect::<Vec<_>>()).unwrap(),
        ];
        for (ai, action) in b.spec.actions.iter().enumerate() {
            let kernel = b
                .spec
                .impulse_outcome_kernel(&State::new(0.0, b.x0.clone()), action, 12)
                .expect("kernel builds");
            for prior in &priors {
                let mut mixed = vec![0.0; k];
                for o in &kernel.outcomes {
                    let pred = predictive_density(prior, &o.likelihood);
                    if pred <= 0.0 {
                        continue;
                    }
                    let post = bayes_update(prior, &o.likelihood).unwrap();
                    for i in 0..k {
                        mixed[i] += o.base_weight * pred * post.weight(i);
                    }
                }
                for i in 0..k {
                    assert!(
                        (mixed[i] - prior.weight(i)).abs() <= 1e-10,
                        "{} action {}: component {} drifts: {} vs {}",
                        b.name,
                        ai,
                        i,
                        mixed[i],
                        prior.weight(i)
                    );
                }
            }
        }
    }
}

fn unit_action() -> Vec<Impulse> {
    vec![Impulse {
        duration: 0.5,
        order: vec![1.0],
    }]
}

fn censored_model(rates: Vec<f64>) -> ModelSpec {
    ModelSpec::censored_execution(
        1.0,
        rates,
        0.1,
        AffineDynamics::frozen(1),
        GainSpec::linear(vec![1.0]),
        unit_action(),
        Domain {
            lo: vec![-4.0],
            hi: vec![4.0],
        },
    )
    .unwrap()
}

fn gaussian_model(slopes: Vec<f64>, noise: f64) -> ModelSpec {
    ModelSpec::gaussian_impact(
        1.0,
        slopes,
        noise,
        AffineDynamics::frozen(1),
        GainSpec::linear(vec![1.0]),
        unit_action(),
        Domain {
            lo: vec![-4.0],
            hi: vec![4.0],
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn censored_kernels_have_unit_mass_per_rate(
        rate in 0.2f64..6.0,
        duration in 0.1f64..1.0,
        order in -1.5f64..1.5,
    ) {
        let spec = censored_model(vec![rate, rate * 1.7]);
        let action = Impulse { duration, order: vec![order] };
        let kernel = spec
            .impulse_outcome_kernel(&State::new(0.0, vec![0.0]), &action, 12)
            .unwrap();
        prop_assert!(kernel.stochasticity_defect(2) <= 1e-8);
    }

    #[test]
    fn gaussian_kernels_have_unit_mass_per_slope(
        gap in 0.1f64..1.5,
        noise in 0.05f64..0.8,
        shift in -1.8f64..1.8,
    ) {
        // the order is sized so the slopes separate the landing by at most
        // 1.8 noise standard deviations, the envelope where the default
        // quadrature resolves the likelihood ratios to 1e-8
        let order = shift * noise / (gap / 2.0);
        let spec = gaussian_model(vec![0.0, gap], noise);
        let action = Impulse { duration: 0.5, order: vec![order] };
        let kernel = spec
            .impulse_outcome_kernel(&State::new(0.0, vec![0.0]), &action, 12)
            .unwrap();
        prop_assert!(kernel.stochasticity_defect(2) <= 1e-8);
    }

    #[test]
    fn space_interpolation_weights_partition_unity(
        counts in prop::collection::vec(2usize..12, 1..=2),
        rel in prop::collection::vec(0.0f64..1.0, 2),
        coefs in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let d = counts.len();
        let grid = SpaceGrid {
            lo: vec![-1.0; d],
            hi: vec![2.0; d],
            counts: counts.clone(),
        };
        let x: Vec<f64> = (0..d).map(|i| -1.0 + 3.0 * rel[i]).collect();
        let pairs = grid.locate(&x, false).unwrap();
        let total: f64 = pairs.iter().map(|(_, w)| w).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(pairs.iter().all(|(i, w)| *i < grid.node_count() && *w >= -1e-15));

        // multilinear weights reproduce affine functions exactly
        let f = |y: &[f64]| coefs[0] + (0..d).map(|i| coefs[i + 1] * y[i]).sum::<f64>();
        let interpolated: f64 = pairs.iter().map(|(i, w)| w * f(&grid.node(*i))).sum();
        prop_assert!((interpolated - f(&x)).abs() <= 1e-9);
    }

    #[test]
    fn simplex_interpolation_weights_partition_unity(
        k in 2usize..=3,
        res in 2usize..=17,
        raw in prop::collection::vec(1e-3f64..1.0, 3),
    ) {
        let grid = SimplexGrid::new(k, res).unwrap();
        let prior = normalize(&raw[..k]).unwrap();
        let pairs = grid.locate(&prior);
        let total: f64 = pairs.iter().map(|(_, w)| w).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(pairs.len() <= k);

        // barycentric weights reconstruct the belief component-wise
        for c in 0..k {
            let mixed: f64 = pairs
                .iter()
                .map(|(i, w)| w * grid.node(*i).weight(c))
                .sum();
            prop_assert!((mixed - prior.weight(c)).abs() <= 1e-9);
        }
    }

    #[test]
    fn next_decision_time_is_the_first_node_at_or_after(
        level in 0u32..=6,
        horizon in 0.5f64..4.0,
        rel in -0.1f64..1.1,
    ) {
        let spec = gaussian_model(vec![0.0, 1.0], 0.0);
        let spec = ModelSpec { horizon, ..spec };
        let grids = GridSpec::build(&spec, level, &[3], 3).unwrap();
        let t = rel * horizon;
        for strict in [false, true] {
            match next_grid_time(&grids, t, strict) {
                GridTime::Node(j) => {
                    let tj = grids.time_node(j);
                    if strict {
                        prop_assert!(tj > t);
                        prop_assert!(j == 0 || grids.time_node(j - 1) <= t + 1e-15);
                    } else {
                        prop_assert!(tj >= t - grids.time_step() * 1e-9);
                        prop_assert!(j == 0 || grids.time_node(j - 1) < t);
                    }
                }
                GridTime::BeyondHorizon => {
                    prop_assert!(t >= horizon - grids.time_step() * 1e-9);
                }
            }
        }
    }

    #[test]
    fn halving_tree_sum_matches_compensated_sum(
        xs in prop::collection::vec(-1e6f64..1e6, 0..512),
    ) {
        let tree = pairwise_sum(&xs);
        // Kahan-Babuska reference
        let mut s = 0.0f64;
        let mut c = 0.0f64;
        for &x in &xs {
            let t = s + x;
            if s.abs() >= x.abs() {
                c += (s - t) + x;
            } else {
                c += (x - t) + s;
            }
            s = t;
        }
        let reference = s + c;
        let scale: f64 = xs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        prop_assert!((tree - reference).abs() <= 1e-10 * scale);
    }
}
