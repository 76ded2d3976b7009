mod common;

use common::*;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ensemble_sysid::bcd::{bcd_fit, multi_start, restart_init, BcdOptions};
use ensemble_sysid::dynamics::{cost_matrix, fit_weighted, AffineModel, CostMatrix, ModelKind, WeightedPair};
use ensemble_sysid::eval::match_permutation;
use ensemble_sysid::synth::{sample_instance, SimConfig};
use ensemble_sysid::transport::{
    build_coupled_lp, solve_classic_ot, solve_lp, CoupledSolver, CscMatrix, RevisedSimplex,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn classic_ot_is_brute_force_assignment(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = unit_sequence(&mut rng, 2, n, 2);
        let cost = cost_matrix(&AffineModel::identity(ModelKind::Affine, 2), seq.measure(0), seq.measure(1)).unwrap();
        let ot = solve_classic_ot(&cost, seq.measure(0), seq.measure(1)).unwrap();
        let oracle = brute_force_assignment(&cost);
        prop_assert!(rel_close(ot.objective, oracle, 1e-9), "{} vs {oracle}", ot.objective);
        // a vertex of the Birkhoff polytope is a permutation matrix
        for &v in ot.plan.entries() {
            prop_assert!(v.abs() < 1e-9 || (v - 1.0).abs() < 1e-9, "fractional entry {v}");
        }
    }

    #[test]
    fn single_ensemble_decouples_into_classic_problems(seed in any::<u64>(), horizon in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes: Vec<usize> = (0..horizon).map(|_| rng.random_range(1..=5)).collect();
        let seq = weighted_sequence(&mut rng, &sizes, 2);
        let costs = random_costs(&mut rng, 1, &sizes);
        let coupled = solve_lp(&build_coupled_lp(&seq, &costs).unwrap()).unwrap();
        let separate: f64 = (0..horizon - 1)
            .map(|t| solve_classic_ot(&costs[0][t], seq.measure(t), seq.measure(t + 1)).unwrap().objective)
            .sum();
        prop_assert!(rel_close(coupled.objective, separate, 1e-9), "{} vs {separate}", coupled.objective);
    }

    #[test]
    fn two_snapshots_collapse_to_pointwise_minimum(seed in any::<u64>(), k in 2usize..=3, n in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = unit_sequence(&mut rng, 2, n, 2);
        let costs = random_costs(&mut rng, k, &[n, n]);
        let min = CostMatrix::pointwise_min(&costs.iter().map(|c| c[0].clone()).collect::<Vec<_>>()).unwrap();
        let oracle = brute_force_assignment(&min);
        let full = solve_lp(&build_coupled_lp(&seq, &costs).unwrap()).unwrap();
        let reduced = CoupledSolver::new(&seq, k).unwrap().solve(&costs).unwrap();
        prop_assert!(rel_close(full.objective, oracle, 1e-9), "{} vs {oracle}", full.objective);
        prop_assert!(rel_close(reduced.objective, oracle, 1e-9), "{} vs {oracle}", reduced.objective);
    }

    #[test]
    fn objective_scales_with_mass(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = [3, 4, 3];
        let seq = weighted_sequence(&mut rng, &sizes, 2);
        let costs = random_costs(&mut rng, 2, &sizes);
        let base = CoupledSolver::new(&seq, 2).unwrap().solve(&costs).unwrap();
        let scaled_seq = seq.scaled(scale).unwrap();
        let scaled = CoupledSolver::new(&scaled_seq, 2).unwrap().solve(&costs).unwrap();
        prop_assert!(rel_close(scaled.objective, scale * base.objective, 1e-9));
        prop_assert!(scaled.max_residual(&scaled_seq) <= 1e-9 * scale.max(1.0));
    }

    #[test]
    fn simplex_returns_optimality_certificate(seed in any::<u64>(), m in 1usize..=8, extra in 0usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = m + extra;
        let mut triplets = Vec::new();
        for j in 0..n {
            for i in 0..m {
                if rng.random_bool(0.5) {
                    triplets.push((i, j, rng.random_range(-3.0..3.0)));
                }
            }
        }
        let e = CscMatrix::from_triplets(m, n, &triplets);
        // feasible by construction, bounded because c ≥ 0
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let mut f = vec![0.0; m];
        for (i, j, v) in e.triplets() {
            f[i] += v * x0[j];
        }
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let sol = RevisedSimplex::new(e.clone(), f.clone()).solve(&c).unwrap();

        let scale = f.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let mut ex = vec![0.0; m];
        let mut reduced = c.clone();
        for (i, j, v) in e.triplets() {
            ex[i] += v * sol.x[j];
            reduced[j] -= sol.duals[i] * v;
        }
        for i in 0..m {
            prop_assert!((ex[i] - f[i]).abs() <= 1e-8 * scale, "row {i}: {} vs {}", ex[i], f[i]);
        }
        prop_assert!(sol.x.iter().all(|&v| v >= 0.0));
        let cscale = c.iter().fold(1.0f64, |a, v| a.max(*v));
        prop_assert!(reduced.iter().all(|&d| d >= -1e-8 * cscale), "{reduced:?}");
        let dual_obj: f64 = sol.duals.iter().zip(&f).map(|(y, f)| y * f).sum();
        prop_assert!(rel_close(sol.objective, dual_obj, 1e-8), "{} vs {dual_obj}", sol.objective);
    }

    #[test]
    fn weighted_fit_matches_normal_equations(seed in any::<u64>(), d in 1usize..=3, n in 8usize..=30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ws: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let pairs: Vec<WeightedPair> = (0..n).map(|i| WeightedPair::new(&xs[i], &ys[i], ws[i])).collect();
        let fit = fit_weighted(&pairs, ModelKind::Affine).unwrap();
        let (a, b) = normal_equations(&xs, &ys, &ws);
        prop_assert!((fit.a() - a).amax() <= 1e-9);
        prop_assert!((fit.b() - b).amax() <= 1e-9);
    }

    #[test]
    fn matching_is_invariant_to_relabeling(seed in any::<u64>(), k in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<AffineModel> = (0..k).map(|_| AffineModel::random(ModelKind::Affine, 2, 1.0, &mut rng)).collect();
        let est: Vec<AffineModel> = (0..k).map(|_| AffineModel::random(ModelKind::Affine, 2, 1.0, &mut rng)).collect();
        let (perm, err) = match_permutation(&est, &truth).unwrap();
        // error is the cost of the returned alignment
        let direct: f64 = perm.iter().enumerate().map(|(t, &e)| est[e].sq_distance(&truth[t])).sum();
        prop_assert!((direct - err).abs() <= 1e-12 * err.max(1.0));
        // relabeling the estimates only relabels the alignment
        let shuffled: Vec<AffineModel> = est.iter().rev().cloned().collect();
        let (perm2, err2) = match_permutation(&shuffled, &truth).unwrap();
        prop_assert!((err2 - err).abs() <= 1e-12 * err.max(1.0));
        let mapped: f64 = perm2.iter().enumerate().map(|(t, &e)| shuffled[e].sq_distance(&truth[t])).sum();
        prop_assert!((mapped - err).abs() <= 1e-12 * err.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn descent_never_increases_objective(seed in any::<u64>(), sigma2 in 0.0f64..0.1, k in 1usize..=3) {
        let cfg = SimConfig { sizes: vec![4, 5, 3][..k].to_vec(), horizon: 4, sigma2, seed, ..SimConfig::default() };
        let inst = sample_instance(&cfg).unwrap();
        let opts = BcdOptions { seed, ..BcdOptions::default() };
        let init = restart_init(2, k, ModelKind::Affine, &opts, 0);
        let sol = bcd_fit(&inst.observations, k, ModelKind::Affine, &init, &opts).unwrap();
        let first = sol.objective_trace[0];
        for w in sol.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10 * first.abs().max(1e-12), "{:?}", sol.objective_trace);
        }
    }
}

#[test]
fn noise_free_fit_recovers_generating_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for d in 1..=3 {
        let model = AffineModel::random(ModelKind::Affine, d, 1.0, &mut rng);
        let xs: Vec<Vec<f64>> = (0..10).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| model.apply(x).unwrap().0).collect();
        let pairs: Vec<WeightedPair> = xs.iter().zip(&ys).map(|(x, y)| WeightedPair::new(x, y, 1.0)).collect();
        let fit = fit_weighted(&pairs, ModelKind::Affine).unwrap();
        assert!(fit.sq_distance(&model).sqrt() <= 1e-10);
        let shift = AffineModel::shift(DVector::from_element(d, 0.7)).unwrap();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| shift.apply(x).unwrap().0).collect();
        let pairs: Vec<WeightedPair> = xs.iter().zip(&ys).map(|(x, y)| WeightedPair::new(x, y, 2.0)).collect();
        assert!(fit_weighted(&pairs, ModelKind::Shift).unwrap().sq_distance(&shift).sqrt() <= 1e-12);
    }
}

#[test]
fn runs_are_deterministic() {
    let cfg = SimConfig { sizes: vec![4, 5], horizon: 4, seed: 99, ..SimConfig::default() };
    let a = sample_instance(&cfg).unwrap();
    let b = sample_instance(&cfg).unwrap();
    assert_eq!(a.observations, b.observations);
    assert_eq!(a.trajectories, b.trajectories);
    let opts = BcdOptions { restarts: 3, seed: 5, ..BcdOptions::default() };
    let s1 = multi_start(&a.observations, 2, ModelKind::Affine, &opts).unwrap();
    let s2 = multi_start(&b.observations, 2, ModelKind::Affine, &opts).unwrap();
    assert_eq!(s1, s2);
}

#[test]
fn true_dynamics_give_zero_cost_without_noise() {
    let cfg = SimConfig { sigma2: 0.0, seed: 3, ..SimConfig::default() };
    let inst = sample_instance(&cfg).unwrap();
    let truth = inst.observations.truth.models.clone().unwrap();
    let opts = BcdOptions::default();
    let sol = bcd_fit(&inst.observations, 3, ModelKind::Affine, &truth, &opts).unwrap();
    assert!(sol.objective_trace[0] <= 1e-8, "{:?}", sol.objective_trace);
    assert_eq!(&sol.labels[..], inst.observations.labels().unwrap());
}
