//! Randomized structural checks on small dense chains: stationary solves,
//! adjoint identities, semigroup laws, functional constants, and transport
//! metric axioms.

use cutofflab::{
    build_chain, carre_du_champ, carre_du_champ_bilinear, dirichlet_form, evolve_density,
    hop_metric, lazify, lipschitz_seminorm, mixing_time, poincare_constant, rank_one_perturb,
    semigroup_apply, sobolev_upper_estimate, spectral_gap, stats, varentropy_curve, wasserstein_1,
    worst_case_tv, Chain, Density, Direction, SobolevKind, TransitionMatrix, TvFrom,
};
use proptest::prelude::*;

/// Dense positive weights with a random sparsity mask; the ring edge
/// x -> x+1 is always kept, so every draw is irreducible.
fn general_chain(n: usize, weights: &[f64], keep: &[bool]) -> Chain {
    let mut rows = vec![vec![0.0f64; n]; n];
    for x in 0..n {
        for y in 0..n {
            if keep[x * n + y] || y == (x + 1) % n {
                rows[x][y] = 0.05 + weights[x * n + y];
            }
        }
        let s: f64 = rows[x].iter().sum();
        for v in rows[x].iter_mut() {
            *v /= s;
        }
    }
    build_chain(TransitionMatrix::from_dense(&rows).unwrap()).unwrap()
}

/// Random walk on a weighted ring with random chords; reversible for the
/// law pi(x) proportional to the total weight at x.
fn reversible_chain(n: usize, weights: &[f64]) -> Chain {
    let mut w = vec![vec![0.0f64; n]; n];
    for x in 0..n {
        for y in (x + 1)..n {
            let ring = y == x + 1 || (x == 0 && y == n - 1);
            let raw = weights[x * n + y];
            let val = if ring {
                0.2 + raw
            } else if raw > 0.55 {
                raw
            } else {
                0.0
            };
            w[x][y] = val;
            w[y][x] = val;
        }
    }
    let mut rows = vec![vec![0.0f64; n]; n];
    for x in 0..n {
        let s: f64 = w[x].iter().sum();
        for y in 0..n {
            rows[x][y] = w[x][y] / s;
        }
    }
    build_chain(TransitionMatrix::from_dense(&rows).unwrap()).unwrap()
}

fn random_density(chain: &Chain, raw: &[f64]) -> Density {
    let total: f64 = raw[..chain.n()].iter().sum();
    let mu: Vec<f64> = raw[..chain.n()].iter().map(|&v| v / total).collect();
    Density::from_measure(chain, &mu).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn detailed_balance_defect(chain: &Chain) -> f64 {
    let n = chain.n();
    let mut worst = 0.0f64;
    for x in 0..n {
        for y in 0..n {
            let fwd = chain.pi()[x] * chain.t().entry(x, y);
            let bwd = chain.pi()[y] * chain.t().entry(y, x);
            worst = worst.max((fwd - bwd).abs());
        }
    }
    worst
}

prop_compose! {
    fn arb_general()(n in 3usize..9)(
        n in Just(n),
        weights in prop::collection::vec(0.0f64..1.0, n * n),
        keep in prop::collection::vec(any::<bool>(), n * n),
    ) -> Chain {
        general_chain(n, &weights, &keep)
    }
}

prop_compose! {
    fn arb_reversible()(n in 3usize..9)(
        n in Just(n),
        weights in prop::collection::vec(0.0f64..1.0, n * n),
    ) -> Chain {
        reversible_chain(n, &weights)
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn stationary_law_and_adjoint_satisfy_their_identities(chain in arb_general()) {
        let n = chain.n();
        let pi = chain.pi();
        let total: f64 = pi.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(pi.iter().all(|&p| p > 0.0));

        let mut pi_t = vec![0.0; n];
        chain.t().left_mul(pi, &mut pi_t);
        prop_assert!(max_abs_diff(&pi_t, pi) <= 1e-10);

        let mut worst = 0.0f64;
        for x in 0..n {
            for y in 0..n {
                let lhs = chain.adjoint().entry(x, y) * pi[x];
                let rhs = pi[y] * chain.t().entry(y, x);
                worst = worst.max((lhs - rhs).abs());
            }
        }
        prop_assert!(worst <= 1e-12);

        prop_assert_eq!(chain.reversible(), detailed_balance_defect(&chain) <= 1e-12);
    }

    #[test]
    fn inflated_row_sums_are_rejected(
        chain in arb_general(),
        row in 0usize..9,
        bump in 1e-6f64..1e-3,
    ) {
        let n = chain.n();
        let row = row % n;
        let mut rows = vec![vec![0.0f64; n]; n];
        for x in 0..n {
            for y in 0..n {
                rows[x][y] = chain.t().entry(x, y);
            }
        }
        rows[row][(row + 1) % n] += bump;
        prop_assert!(TransitionMatrix::from_dense(&rows).and_then(build_chain).is_err());
    }

    #[test]
    fn lazification_halves_time_and_preserves_the_stationary_law(
        chain in arb_general(),
        obs in prop::collection::vec(-1.0f64..1.0, 9),
        t in 0.2f64..3.0,
    ) {
        let lazy = lazify(&chain);
        prop_assert!(max_abs_diff(lazy.pi(), chain.pi()) <= 1e-12);
        for x in 0..chain.n() {
            let want = 0.5 * (1.0 + chain.t().entry(x, x));
            prop_assert!((lazy.t().entry(x, x) - want).abs() <= 1e-12);
        }
        let v = &obs[..chain.n()];
        let slow = semigroup_apply(&lazy, v, t, Direction::Forward).unwrap();
        let fast = semigroup_apply(&chain, v, 0.5 * t, Direction::Forward).unwrap();
        prop_assert!(max_abs_diff(&slow, &fast) <= 1e-9);
    }

    #[test]
    fn rank_one_interpolation_matches_its_formula(
        chain in arb_general(),
        theta in prop_oneof![Just(0.0f64), Just(1.0f64), 0.0f64..1.0],
    ) {
        let tilted = rank_one_perturb(&chain, theta).unwrap();
        let n = chain.n();
        for x in 0..n {
            for y in 0..n {
                let want = (1.0 - theta) * chain.t().entry(x, y) + theta * chain.pi()[y];
                prop_assert!((tilted.t().entry(x, y) - want).abs() <= 1e-12);
            }
        }
        prop_assert!(max_abs_diff(tilted.pi(), chain.pi()) <= 1e-10);
    }

    #[test]
    fn densities_normalize_and_obey_the_entropy_tv_inequality(
        chain in arb_general(),
        raw in prop::collection::vec(0.05f64..1.0, 9),
    ) {
        let f = random_density(&chain, &raw);
        let mass: f64 = chain.pi().iter().zip(f.values()).map(|(p, v)| p * v).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-12);
        prop_assert!(f.values().iter().all(|&v| v >= 0.0));

        let s = stats(&chain, &f);
        prop_assert!(s.entropy >= 0.0);
        prop_assert!(s.varentropy >= 0.0);
        prop_assert!(2.0 * s.tv_to_equilibrium.powi(2) <= s.entropy + 1e-12);

        let flat = Density::new(&chain, vec![1.0; chain.n()]).unwrap();
        let s0 = stats(&chain, &flat);
        prop_assert!(s0.entropy == 0.0 && s0.tv_to_equilibrium == 0.0);
    }

    #[test]
    fn the_carre_du_champ_integrates_to_the_dirichlet_energy(
        chain in arb_general(),
        obs in prop::collection::vec(-2.0f64..2.0, 9),
    ) {
        let f = &obs[..chain.n()];
        let gamma = carre_du_champ(&chain, f);
        prop_assert!(gamma.iter().all(|&g| g >= 0.0));
        prop_assert!(max_abs_diff(&gamma, &carre_du_champ_bilinear(&chain, f, f)) <= 1e-14);

        let mean_gamma = chain.expectation(&gamma);
        let energy = dirichlet_form(&chain, f, f);
        prop_assert!((mean_gamma - energy).abs() <= 1e-12 * (1.0 + energy.abs()));

        let lf = chain.apply_generator(f);
        let mean_lf = chain.expectation(&lf);
        prop_assert!(mean_lf.abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn the_semigroup_is_a_positive_contraction_semigroup(
        chain in arb_general(),
        obs in prop::collection::vec(-1.0f64..1.0, 9),
        raw in prop::collection::vec(0.05f64..1.0, 9),
        s in 0.1f64..1.5,
        t in 0.1f64..1.5,
    ) {
        let v = &obs[..chain.n()];
        let one_step = semigroup_apply(&chain, v, s + t, Direction::Forward).unwrap();
        let part = semigroup_apply(&chain, v, t, Direction::Forward).unwrap();
        let two_step = semigroup_apply(&chain, &part, s, Direction::Forward).unwrap();
        prop_assert!(max_abs_diff(&one_step, &two_step) <= 1e-9);

        let sup = v.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let sup_t = part.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        prop_assert!(sup_t <= sup + 1e-12);

        let f0 = random_density(&chain, &raw);
        let ft = evolve_density(&chain, &f0, t).unwrap();
        prop_assert!(ft.values().iter().all(|&x| x >= -1e-12));
        let mass: f64 = chain.pi().iter().zip(ft.values()).map(|(p, v)| p * v).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-10);
        prop_assert!(stats(&chain, &ft).entropy <= stats(&chain, &f0).entropy + 1e-10);
    }

    #[test]
    fn reversible_walks_match_spectral_and_variational_gaps(chain in arb_reversible()) {
        prop_assert!(chain.reversible());
        let gap = spectral_gap(&chain).unwrap().gap;
        prop_assert!(gap > 1e-12 && gap <= 2.0 + 1e-12);
        let poincare = poincare_constant(&chain).unwrap();
        prop_assert!((gap - poincare).abs() <= 1e-8 * (1.0 + gap));
    }

    #[test]
    fn mixing_times_are_monotone_in_the_accuracy(
        chain in arb_reversible(),
        lo_eps in 0.05f64..0.2,
        hi_eps in 0.25f64..0.45,
        t1 in 0.1f64..2.0,
        dt in 0.1f64..2.0,
    ) {
        let t_tight = mixing_time(&chain, lo_eps, TvFrom::Worst).unwrap();
        let t_loose = mixing_time(&chain, hi_eps, TvFrom::Worst).unwrap();
        prop_assert!(t_tight >= t_loose - 1e-7 * (1.0 + t_tight));

        let d1 = worst_case_tv(&chain, t1).unwrap();
        let d2 = worst_case_tv(&chain, t1 + dt).unwrap();
        prop_assert!((0.0..=1.0).contains(&d1) && (0.0..=1.0).contains(&d2));
        prop_assert!(d2 <= d1 + 1e-10);
    }

    #[test]
    fn entropy_decay_curves_are_monotone(
        chain in arb_reversible(),
        raw in prop::collection::vec(0.05f64..1.0, 9),
        t0 in 0.05f64..0.5,
    ) {
        let f0 = random_density(&chain, &raw);
        let times: Vec<f64> = (0..5).map(|k| t0 * (k as f64 + 1.0)).collect();
        let curve = varentropy_curve(&chain, &f0, &times).unwrap();
        for k in 1..times.len() {
            prop_assert!(curve.entropy[k] <= curve.entropy[k - 1] + 1e-10);
            prop_assert!(curve.tv[k] <= curve.tv[k - 1] + 1e-10);
        }
        prop_assert!(curve.entropy_slope.iter().all(|&s| s >= -1e-10));
    }

    #[test]
    fn coarse_curvature_never_exceeds_the_gap(chain in arb_reversible()) {
        let metric = hop_metric(&chain).unwrap();
        let (kappa1, _) = cutofflab::ollivier_kappa1(&chain, &metric).unwrap();
        let gap = spectral_gap(&chain).unwrap().gap;
        prop_assert!(kappa1 <= gap + 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn wasserstein_one_is_a_metric_dominating_total_variation(
        chain in arb_reversible(),
        raw_a in prop::collection::vec(0.05f64..1.0, 9),
        raw_b in prop::collection::vec(0.05f64..1.0, 9),
        raw_c in prop::collection::vec(0.05f64..1.0, 9),
    ) {
        let n = chain.n();
        let metric = hop_metric(&chain).unwrap();
        let norm = |raw: &[f64]| {
            let s: f64 = raw[..n].iter().sum();
            raw[..n].iter().map(|&v| v / s).collect::<Vec<f64>>()
        };
        let (mu, nu, xi) = (norm(&raw_a), norm(&raw_b), norm(&raw_c));

        let (w_ab, plan) = wasserstein_1(&mu, &nu, &metric).unwrap();
        let (w_ba, _) = wasserstein_1(&nu, &mu, &metric).unwrap();
        let (w_ac, _) = wasserstein_1(&mu, &xi, &metric).unwrap();
        let (w_bc, _) = wasserstein_1(&nu, &xi, &metric).unwrap();
        let (w_aa, _) = wasserstein_1(&mu, &mu, &metric).unwrap();

        prop_assert!(w_aa.abs() <= 1e-12);
        prop_assert!((w_ab - w_ba).abs() <= 1e-10);
        prop_assert!(w_ac <= w_ab + w_bc + 1e-9);

        let tv: f64 = 0.5 * mu.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum::<f64>();
        prop_assert!(tv <= w_ab + 1e-9);
        prop_assert!(w_ab <= f64::from(metric.diameter()) * tv + 1e-9);

        // Strong duality: the returned potential is 1-Lipschitz and its
        // pairing with mu - nu reproduces the primal cost.
        prop_assert!((plan.cost - w_ab).abs() <= 1e-12);
        let pot = &plan.dual_potentials;
        let dual: f64 = (0..n).map(|x| pot[x] * (mu[x] - nu[x])).sum();
        prop_assert!((dual - w_ab).abs() <= 1e-9);
        prop_assert!(lipschitz_seminorm(&metric, pot) <= 1.0 + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn sobolev_witnesses_reproduce_their_reported_ratios(
        chain in arb_reversible(),
        seed in any::<u64>(),
    ) {
        for kind in [SobolevKind::Mlsi, SobolevKind::Lsi] {
            let bracket = sobolev_upper_estimate(&chain, kind, seed, 400).unwrap();
            prop_assert!(bracket.upper.is_finite() && bracket.upper > 0.0);
            prop_assert!(bracket.lower <= bracket.upper + 1e-6);

            let w = bracket.witness.values();
            let mass: f64 = chain.pi().iter().zip(w).map(|(p, v)| p * v).sum();
            prop_assert!((mass - 1.0).abs() <= 1e-12);

            let logw: Vec<f64> = w.iter().map(|&v| v.max(1e-300).ln()).collect();
            let ent: f64 = chain
                .pi()
                .iter()
                .zip(w)
                .zip(&logw)
                .map(|((p, v), l)| p * v * l)
                .sum();
            let num = match kind {
                SobolevKind::Mlsi => {
                    let l_logw = chain.apply_generator(&logw);
                    -chain
                        .pi()
                        .iter()
                        .zip(w)
                        .zip(&l_logw)
                        .map(|((p, v), l)| p * v * l)
                        .sum::<f64>()
                }
                SobolevKind::Lsi => {
                    let u: Vec<f64> = w.iter().map(|&v| v.sqrt()).collect();
                    dirichlet_form(&chain, &u, &u)
                }
            };
            prop_assert!((num / ent - bracket.upper).abs() <= 1e-10);
        }
    }
}
