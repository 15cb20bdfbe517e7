use hybridfpca::fofreg::{fit_fof, predict, train_test_split};
use hybridfpca::hpca::{fit_hpca, reconstruct, HpcaModel};
use hybridfpca::metrics::{mse_beta, prediction_mspe};
use hybridfpca::pooling::{pool_reconstruction, pool_to_curve};
use hybridfpca::selection::{mspe, select_num_components, select_with_model};
use hybridfpca::simgen::{gen_fof, FofGenConfig};
use hybridfpca::tensorcore::{center, make_trapezoid_grid, weighted_inner_product};
use hybridfpca::{FofConfig, FunctionalSample, Grid1D, HpcaConfig, HybridTensor};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn grid_strategy(max_len: usize) -> impl Strategy<Value = Grid1D> {
    sized_grid(2, max_len)
}

fn sized_grid(min_len: usize, max_len: usize) -> impl Strategy<Value = Grid1D> {
    (-2.0f64..2.0, prop::collection::vec(0.05f64..0.6, min_len - 1..max_len))
        .prop_map(|(start, steps)| {
            let mut x = start;
            let mut pts = vec![x];
            for d in steps {
                x += d;
                pts.push(x);
            }
            make_trapezoid_grid(&pts).unwrap()
        })
}

/// Dense tensor with `2..=max_n` subjects and small grids.
fn tensor_strategy(max_n: usize) -> impl Strategy<Value = HybridTensor> {
    sized_tensor(2, max_n, 2)
}

fn sized_tensor(min_n: usize, max_n: usize, min_s: usize) -> impl Strategy<Value = HybridTensor> {
    (min_n..=max_n, 1usize..=3, grid_strategy(6), sized_grid(min_s, min_s + 5)).prop_flat_map(|(n, nr, gw, gs)| {
        let len = n * nr * gw.len() * gs.len();
        prop::collection::vec(-3.0f64..3.0, len)
            .prop_map(move |v| HybridTensor::new(v, n, nr, gw.clone(), gs.clone(), None).unwrap())
    })
}

fn weighted_norm_sq(t: &HybridTensor) -> f64 {
    (0..t.n()).map(|i| t.subject_norm_sq(i)).sum()
}

fn full() -> HpcaConfig {
    HpcaConfig { fve_target: 1.0, ..HpcaConfig::default() }
}

fn permute_tensor(t: &HybridTensor, perm: &[usize]) -> HybridTensor {
    t.select_subjects(perm).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trapezoid_integrates_piecewise_linear_exactly(grid in grid_strategy(20), a in -3.0f64..3.0, c in -3.0f64..3.0) {
        let f: Vec<f64> = grid.points().iter().map(|x| a * x + c).collect();
        let ones = vec![1.0; grid.len()];
        let got = weighted_inner_product(&f, &ones, &grid).unwrap();
        let (x0, x1) = (grid.first(), grid.last());
        let want = a * (x1 * x1 - x0 * x0) / 2.0 + c * (x1 - x0);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn centering_twice_leaves_zero_mean(t in tensor_strategy(6)) {
        let (_, z) = center(&t).unwrap();
        let (mean, _) = center(&z).unwrap();
        prop_assert!(mean.max_abs() <= 1e-10);
    }

    #[test]
    fn scores_are_isometric_on_the_retained_subspace(t in tensor_strategy(6), fve in 0.5f64..1.0) {
        let (_, z) = center(&t).unwrap();
        let total = weighted_norm_sq(&z);
        let model = fit_hpca(&t, &HpcaConfig { fve_target: fve, ..HpcaConfig::default() }).unwrap();
        let partial: f64 = model.scores.iter().map(|x| x * x).sum();
        prop_assert!(partial <= total * (1.0 + 1e-10) + 1e-12);
        let model = fit_hpca(&t, &full()).unwrap();
        let all: f64 = model.scores.iter().map(|x| x * x).sum();
        prop_assert!((all - total).abs() <= 1e-8 * total.max(1e-300), "{all} vs {total}");
    }

    #[test]
    fn reconstruction_error_is_monotone(t in tensor_strategy(6)) {
        let model = fit_hpca(&t, &full()).unwrap();
        let (_, z) = center(&t).unwrap();
        let mut prev = weighted_norm_sq(&z);
        for q in 1..=model.n_components() {
            let cur = weighted_norm_sq(&z.sub(&reconstruct(&model, q).unwrap()).unwrap());
            prop_assert!(cur <= prev + 1e-10 * prev.max(1.0));
            prev = cur;
        }
        prop_assert!(prev <= 1e-8 * weighted_norm_sq(&z).max(1.0));
    }

    #[test]
    fn permuting_subjects_permutes_scores(t in tensor_strategy(7), seed in 0u64..1000) {
        let n = t.n();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left((seed as usize) % n);
        if n > 2 {
            perm.swap(0, n - 1);
        }
        let a = fit_hpca(&t, &HpcaConfig::default()).unwrap();
        let b = fit_hpca(&permute_tensor(&t, &perm), &HpcaConfig::default()).unwrap();
        prop_assume!(well_separated(&a) && a.ranking == b.ranking);
        let signs = basis_signs(&a, &b);
        prop_assert!(signs.is_some(), "bases differ beyond sign");
        let signs = signs.unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for c in 0..a.n_components() {
                prop_assert!((b.score(new_i, c) - signs[c] * a.score(old_i, c)).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn pooling_is_linear(t in tensor_strategy(5), a in -2.0f64..2.0, b in -2.0f64..2.0, shift in -1.0f64..1.0) {
        let u = HybridTensor::from_fn(t.n(), t.regions(), t.omega_grid().clone(), t.s_grid().clone(), |i, r, w, s| {
            t.get(i, r, w, s).sin() + shift * (i + r + w + s) as f64
        }).unwrap();
        let lhs = pool_to_curve(&t.axpby(a, &u, b).unwrap()).unwrap();
        let (pt, pu) = (pool_to_curve(&t).unwrap(), pool_to_curve(&u).unwrap());
        let rhs: Vec<f64> = pt.values().iter().zip(pu.values()).map(|(x, y)| a * x + b * y).collect();
        prop_assert!(max_abs_diff(lhs.values(), &rhs) <= 1e-12);
    }

    #[test]
    fn pooled_fast_path_matches_prefix_sum(t in tensor_strategy(6)) {
        let model = fit_hpca(&t, &HpcaConfig::default()).unwrap();
        for q in 1..=model.n_components() {
            let slow = pool_to_curve(&reconstruct(&model, q).unwrap()).unwrap();
            let fast = pool_reconstruction(&model, q).unwrap();
            prop_assert!(max_abs_diff(slow.values(), fast.values()) <= 1e-10);
        }
    }

    #[test]
    fn metrics_vanish_exactly_on_equal_inputs(vals in prop::collection::vec(-5.0f64..5.0, 12), k in 0usize..12, eps in 1e-6f64..1.0) {
        let grid = Grid1D::uniform(0.0, 1.0, 4).unwrap();
        let a = FunctionalSample::new(vals.clone(), 3, grid.clone()).unwrap();
        prop_assert_eq!(prediction_mspe(&a, &a).unwrap(), 0.0);
        let mut other = vals.clone();
        other[k] += eps;
        let b = FunctionalSample::new(other, 3, grid).unwrap();
        prop_assert!(prediction_mspe(&a, &b).unwrap() > 0.0);
        let s = DMatrix::from_row_slice(3, 4, &vals);
        prop_assert_eq!(mse_beta(&s, &s, None).unwrap(), 0.0);
        let mut s2 = s.clone();
        s2[(k / 4, k % 4)] -= eps;
        prop_assert!(mse_beta(&s, &s2, Some(3)).unwrap() > 0.0);
    }
}

fn well_separated(m: &HpcaModel) -> bool {
    let gaps = |ev: &[f64], kept: usize| {
        (0..kept).all(|k| {
            let top = ev[0].abs().max(1e-300);
            let prev = if k > 0 { (ev[k - 1] - ev[k]) / top > 1e-4 } else { true };
            let next = ev.get(k + 1).is_none_or(|nx| (ev[k] - nx) / top > 1e-4);
            prev && next
        })
    };
    let v = &m.score_variance;
    let distinct = v.windows(2).all(|w| (w[0] - w[1]).abs() > 1e-6 * v[0].max(1e-300));
    gaps(&m.basis_region.eigenvalues, m.k())
        && gaps(&m.basis_omega.eigenvalues, m.l())
        && gaps(&m.basis_s.eigenvalues, m.m())
        && distinct
}

/// Sign of each ranked component relating `b` to `a`, if the bases agree up to sign.
fn basis_signs(a: &HpcaModel, b: &HpcaModel) -> Option<Vec<f64>> {
    let sign_of = |x: &[f64], y: &[f64]| -> Option<f64> {
        if max_abs_diff(x, y) <= 1e-8 {
            Some(1.0)
        } else if x.iter().zip(y).all(|(p, q)| (p + q).abs() <= 1e-8) {
            Some(-1.0)
        } else {
            None
        }
    };
    let per_dim = |ba: &hybridfpca::hpca::MarginalBasis, bb: &hybridfpca::hpca::MarginalBasis| -> Option<Vec<f64>> {
        (0..ba.retained()).map(|k| sign_of(ba.vector(k), bb.vector(k))).collect()
    };
    let (sr, sw, ss) = (
        per_dim(&a.basis_region, &b.basis_region)?,
        per_dim(&a.basis_omega, &b.basis_omega)?,
        per_dim(&a.basis_s, &b.basis_s)?,
    );
    Some(a.ranking.iter().map(|t| sr[t.k] * sw[t.l] * ss[t.m]).collect())
}

fn small_fof_data(seed: u64, n: usize) -> (Vec<FunctionalSample>, FunctionalSample) {
    let cfg = FofGenConfig { n, p: 2, g_points: 11, s_points: 11, seed, ..FofGenConfig::default() };
    let (xs, w, _) = gen_fof(&cfg).unwrap();
    (xs, w)
}

fn small_fof_config() -> FofConfig {
    FofConfig { n_basis_g: 6, n_basis_s: 6, max_components: Some(3), ..FofConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn prediction_is_affine_in_predictors(seed in 0u64..500, a in -2.0f64..2.0) {
        let (xs, w) = small_fof_data(seed, 16);
        let model = fit_fof(&w, &xs, &small_fof_config()).unwrap();
        let (ys, _) = small_fof_data(seed + 1000, 16);
        let mix: Vec<FunctionalSample> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| x.map(|v| a * v).add(&y.map(|v| (1.0 - a) * v)).unwrap())
            .collect();
        let (px, py, pm) = (
            predict(&model, &xs).unwrap(),
            predict(&model, &ys).unwrap(),
            predict(&model, &mix).unwrap(),
        );
        let want: Vec<f64> = px.values().iter().zip(py.values()).map(|(u, v)| a * u + (1.0 - a) * v).collect();
        prop_assert!(max_abs_diff(pm.values(), &want) <= 1e-9);
    }

    #[test]
    fn predictions_are_permutation_equivariant(seed in 0u64..500, shift in 1usize..15) {
        let (xs, w) = small_fof_data(seed, 16);
        let model = fit_fof(&w, &xs, &small_fof_config()).unwrap();
        let perm: Vec<usize> = (0..16).map(|i| (i + shift) % 16).collect();
        let permuted: Vec<FunctionalSample> = xs.iter().map(|x| x.select(&perm).unwrap()).collect();
        let (p, q) = (predict(&model, &xs).unwrap(), predict(&model, &permuted).unwrap());
        prop_assert!(max_abs_diff(p.select(&perm).unwrap().values(), q.values()) <= 1e-10);
    }

    #[test]
    fn train_error_does_not_grow_as_penalty_shrinks(seed in 0u64..500) {
        let (xs, w) = small_fof_data(seed, 16);
        let mut prev = f64::INFINITY;
        for exp in [2.0, 0.0, -2.0, -4.0, -6.0] {
            let cfg = FofConfig { penalty_grid: vec![10f64.powf(exp)], ..small_fof_config() };
            let model = fit_fof(&w, &xs, &cfg).unwrap();
            let err = mspe(&w, &predict(&model, &xs).unwrap()).unwrap();
            prop_assert!(err <= prev * (1.0 + 1e-9) + 1e-15, "{err} after {prev}");
            prev = err;
        }
    }

    #[test]
    fn full_selection_entry_equals_manual_composition(t in sized_tensor(8, 12, 6), seed in 0u64..100) {
        let g = Grid1D::uniform(0.0, 1.0, 9).unwrap();
        let x = FunctionalSample::from_fn(t.n(), g, |i, j| ((i * 7 + j * 3) as f64 * 0.37 + seed as f64).sin()).unwrap();
        let fof = FofConfig { n_basis_g: 5, n_basis_s: 5, max_components: Some(2), seed, ..FofConfig::default() };
        let model = fit_hpca(&t, &HpcaConfig::default()).unwrap();
        let res = select_with_model(&model, &t, std::slice::from_ref(&x), &fof).unwrap();

        let q = model.n_components();
        let w = pool_to_curve(&reconstruct(&model, q).unwrap()).unwrap();
        let (train, test) = train_test_split(t.n(), fof.train_fraction, seed).unwrap();
        let fitted = fit_fof(&w.select(&train).unwrap(), &[x.select(&train).unwrap()], &fof).unwrap();
        let pred = predict(&fitted, &[x.select(&test).unwrap()]).unwrap();
        let manual = mspe(&w.select(&test).unwrap(), &pred).unwrap();
        prop_assert!((res.mspe_by_q[q] - manual).abs() <= 1e-12 * manual.max(1.0));
    }

    #[test]
    fn rescaling_responses_scales_mspe_and_keeps_argmin(t in sized_tensor(8, 12, 6), c in 0.1f64..10.0) {
        let g = Grid1D::uniform(0.0, 1.0, 9).unwrap();
        let x = FunctionalSample::from_fn(t.n(), g, |i, j| ((i * 5 + j) as f64 * 0.61).cos()).unwrap();
        let fof = FofConfig { n_basis_g: 5, n_basis_s: 5, max_components: Some(2), seed: 3, ..FofConfig::default() };
        let scaled = t.axpby(c, &t, 0.0).unwrap();
        let a = select_num_components(&t, std::slice::from_ref(&x), &fof, &HpcaConfig::default()).unwrap();
        let b = select_num_components(&scaled, std::slice::from_ref(&x), &fof, &HpcaConfig::default()).unwrap();
        prop_assert_eq!(a.mspe_by_q.len(), b.mspe_by_q.len());
        for (u, v) in a.mspe_by_q.iter().zip(&b.mspe_by_q) {
            prop_assert!((v - c * c * u).abs() <= 1e-7 * (c * c * u).max(1e-12), "{v} vs {}", c * c * u);
        }
        let sorted_gap = {
            let mut m = a.mspe_by_q.clone();
            m.sort_by(f64::total_cmp);
            if m.len() > 1 { (m[1] - m[0]) / m[0].max(1e-300) } else { 1.0 }
        };
        prop_assume!(sorted_gap > 1e-6);
        prop_assert_eq!(a.q_min, b.q_min);
    }
}
