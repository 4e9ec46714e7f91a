use sparselab_core::lattice::{DyadicCube, GridFunction, GridSpec, Measure, SparseFamily};
use sparselab_core::normest::*;
use sparselab_core::weights::{multiweight_constant, multiweight_per_cube_extended, WeightTuple};
use sparselab_core::{Error, ExponentConfig};

type G = GridFunction<f64>;

fn grid(l: u32) -> GridSpec {
    GridSpec::new(l).unwrap()
}

fn identity() -> FnEvaluator<impl Fn(&[G]) -> sparselab_core::Result<Output<f64>> + Sync> {
    FnEvaluator { arity: 1, f: |fs: &[G]| Ok(Output::Function(fs[0].clone())) }
}

fn power_weight(g: GridSpec, e: f64) -> WeightTuple<f64> {
    WeightTuple::new(vec![G::sample(g, |x| x.powf(e)).unwrap()]).unwrap()
}

#[test]
fn identity_with_unit_weights_has_norm_one() {
    let g = grid(8);
    let mu = Measure::<f64>::lebesgue(g);
    let cfg = ExponentConfig::new(0.0, vec![1.0], vec![2.0]);
    let w = WeightTuple::ones(g, 1).unwrap();
    let res = strong_norm_search(&identity(), &w, &cfg, &SearchConfig::default(), &mu).unwrap();
    assert!((res.estimate - 1.0).abs() <= 1e-9, "{}", res.estimate);
}

/// Every pair of level-2 step functions with values in {0, 1/2, 1, 2}.
fn hoelder_oracle(cfg: &ExponentConfig) -> f64 {
    let vals = [0.0, 0.5, 1.0, 2.0];
    let (p, r, sp, qp) = (cfg.p[0], cfg.r[0], cfg.s_prime, 1.0 / (1.0 - 1.0 / cfg.q));
    let mean_pow = |v: &[f64], e: f64| (v.iter().map(|x| x.powf(e)).sum::<f64>() / 4.0).powf(1.0 / e);
    let mut best = 0.0f64;
    for a in 0..256usize {
        let f: Vec<f64> = (0..4).map(|i| vals[(a >> (2 * i)) & 3]).collect();
        for b in 0..256usize {
            let h: Vec<f64> = (0..4).map(|i| vals[(b >> (2 * i)) & 3]).collect();
            let denom = mean_pow(&f, p) * mean_pow(&h, qp);
            if denom > 0.0 {
                best = best.max(mean_pow(&f, r) * mean_pow(&h, sp) / denom);
            }
        }
    }
    best
}

#[test]
fn root_form_matches_step_function_oracle() {
    let g = grid(6);
    let mu = Measure::<f64>::lebesgue(g);
    let cfg = ExponentConfig::new(0.0, vec![2.0], vec![4.0]).with_s(4.0, 4.0 / 3.0);
    let w = WeightTuple::ones(g, 1).unwrap();
    let root = SparseFamily::from_cubes(g, [DyadicCube::ROOT], 0.5).unwrap();
    let eval = SparseFormEval { cfg: cfg.clone(), mu: mu.clone(), family: Some(root) };
    let res = strong_norm_search(&eval, &w, &cfg, &SearchConfig::default(), &mu).unwrap();
    let oracle = hoelder_oracle(&cfg);
    assert!((res.estimate - oracle).abs() <= 0.05 * oracle, "{} vs {oracle}", res.estimate);
    assert!(res.estimate <= 1.0 + 1e-12);
}

#[test]
fn doubling_a_weight_rescales_by_homogeneity() {
    let g = grid(8);
    let mu = Measure::<f64>::lebesgue(g);
    let cfg = ExponentConfig::new(0.0, vec![2.0], vec![4.0]).with_s(4.0, 4.0 / 3.0);
    let w = power_weight(g, 1.0 / 16.0);
    let w2 = WeightTuple::new(vec![w.component(0).scale(2.0)]).unwrap();
    let sc = SearchConfig { trials: 24, ..SearchConfig::default() };

    // the form sees ω in slot 1 and ω^-1 in the dual slot: the two factors cancel
    let form = SparseFormEval { cfg: cfg.clone(), mu: mu.clone(), family: None };
    let a = strong_norm_search(&form, &w, &cfg, &sc, &mu).unwrap().estimate;
    let b = strong_norm_search(&form, &w2, &cfg, &sc, &mu).unwrap().estimate;
    assert!((a - b).abs() <= 1e-9 * a, "{a} vs {b}");

    // m inputs, output in L^q(ω^q): invariant
    let maximal = MaximalEval { eta: 0.0, r: vec![2.0], mu: mu.clone() };
    let a = strong_norm_search(&maximal, &w, &cfg, &sc, &mu).unwrap().estimate;
    let b = strong_norm_search(&maximal, &w2, &cfg, &sc, &mu).unwrap().estimate;
    assert!((a - b).abs() <= 1e-9 * a, "{a} vs {b}");

    // a single candidate with an unweighted scalar output: the ratio halves
    let sum = FnEvaluator { arity: 1, f: |fs: &[G]| Ok(Output::Scalar(fs[0].values().iter().sum::<f64>())) };
    let f = vec![G::sample(g, |x| 1.0 + x).unwrap()];
    let ra = strong_ratio(&sum, &w, &cfg, &f, &mu).unwrap().unwrap();
    let rb = strong_ratio(&sum, &w2, &cfg, &f, &mu).unwrap().unwrap();
    assert!((ra - 2.0 * rb).abs() <= 1e-12 * ra);
}

#[test]
fn weak_search_with_unit_weights() {
    let g = grid(8);
    let mu = Measure::<f64>::lebesgue(g);
    let cfg = ExponentConfig::new(0.0, vec![1.0], vec![2.0]).with_s(2.0, 2.0);
    let w = WeightTuple::ones(g, 1).unwrap();
    let maximal = MaximalEval { eta: 0.0, r: vec![1.0, 2.0], mu: mu.clone() };
    let res = weak_norm_search(&maximal, &w, &cfg, &SearchConfig::default(), &mu).unwrap();
    assert!(res.estimate >= 1.0 - 1e-12);
    assert!(res.extremal_best.unwrap() >= 1.0 - 1e-12);
}

#[test]
fn extremal_ratios_reproduce_the_characteristic_per_cube() {
    let g = grid(9);
    let mu = Measure::<f64>::lebesgue(g);
    let cfg = ExponentConfig::new(0.0, vec![2.0], vec![4.0]).with_s(8.0, 8.0 / 7.0);
    let w = power_weight(g, 0.15);
    let per_cube = multiweight_per_cube_extended(&w, &cfg).unwrap();
    let maximal = MaximalEval { eta: 0.0, r: vec![2.0, 8.0 / 7.0], mu: mu.clone() };
    let slots = slots_for(&w, &cfg, 2).unwrap();
    for q in [DyadicCube::ROOT, DyadicCube::new(3, 0), DyadicCube::new(5, 7), DyadicCube::new(9, 0)] {
        // f_j = ω_j^{-ρ_j/r_j} χ_Q, built here by hand
        let fs: Vec<G> = slots
            .iter()
            .map(|s| {
                let rho = 1.0 / (1.0 / s.r - 1.0 / s.p);
                let cells: Vec<usize> = g.cube_cells(q).collect();
                G::from_cells(g, |c| if cells.contains(&c) { s.weight.get(c).powf(-rho / s.r) } else { 0.0 }).unwrap()
            })
            .collect();
        let r = weak_ratio(&maximal, &w, &cfg, &fs, &mu).unwrap().unwrap();
        assert!(r >= per_cube.get(q) * (1.0 - 1e-10), "{q:?}: {r} < {}", per_cube.get(q));
    }
}

#[test]
fn weak_estimate_dominates_characteristic_for_power_weights() {
    let g = grid(9);
    let mu = Measure::<f64>::lebesgue(g);
    for (e, s) in [(1.0 / 16.0, 4.0), (0.1, 8.0), (-0.2, 6.0), (0.2, f64::INFINITY)] {
        let sp = if s.is_infinite() { 1.0 } else { s / (s - 1.0) };
        let cfg = ExponentConfig::new(0.0, vec![2.0], vec![4.0]).with_s(s, sp);
        let w = power_weight(g, e);
        let c = multiweight_constant(&w, &cfg).unwrap().value;
        let mut r = cfg.r.clone();
        r.push(sp);
        let maximal = MaximalEval { eta: 0.0, r, mu: mu.clone() };
        let sc = SearchConfig { trials: 8, refine: false, ..SearchConfig::default() };
        let res = weak_norm_search(&maximal, &w, &cfg, &sc, &mu).unwrap();
        assert!(c <= res.extremal_best.unwrap() * (1.0 + 1e-10), "exponent {e}: {c} vs {:?}", res.extremal_best);
    }
}

#[test]
fn scaling_a_candidate_leaves_its_ratio_unchanged() {
    let g = grid(8);
    let mu = Measure::<f64>::lebesgue(g);
    let cfg = ExponentConfig::new(0.0, vec![2.0], vec![4.0]).with_s(4.0, 4.0 / 3.0);
    let w = power_weight(g, 1.0 / 16.0);
    let maximal = MaximalEval { eta: 0.0, r: vec![2.0, 4.0 / 3.0], mu: mu.clone() };
    let fs = vec![G::sample(g, |x| (7.0 * x).sin().abs()).unwrap(), G::sample(g, |x| 1.0 / (0.1 + x)).unwrap()];
    let base = weak_ratio(&maximal, &w, &cfg, &fs, &mu).unwrap().unwrap();
    for c in [1e-3, 0.3, 17.0] {
        let scaled: Vec<G> = fs.iter().map(|f| f.scale(c)).collect();
        let r = weak_ratio(&maximal, &w, &cfg, &scaled, &mu).unwrap().unwrap();
        assert!((r - base).abs() <= 1e-9 * base);
        let s = strong_ratio(&maximal, &w, &cfg, &scaled, &mu).unwrap().unwrap();
        let s0 = strong_ratio(&maximal, &w, &cfg, &fs, &mu).unwrap().unwrap();
        assert!((s - s0).abs() <= 1e-9 * s0);
    }
}

#[test]
fn estimates_grow_with_trials_and_repeat_exactly() {
    let g = grid(8);
    let mu = Measure::<f64>::lebesgue(g);
    let cfg = ExponentConfig::new(0.0, vec![2.0], vec![4.0]).with_s(4.0, 4.0 / 3.0);
    let w = power_weight(g, 1.0 / 16.0);
    let form = SparseFormEval { cfg: cfg.clone(), mu: mu.clone(), family: None };
    let mut prev = 0.0;
    for trials in [4, 8, 16, 32] {
        let sc = SearchConfig { trials, seed: 3, ..SearchConfig::default() };
        let a = strong_norm_search(&form, &w, &cfg, &sc, &mu).unwrap().estimate;
        let b = strong_norm_search(&form, &w, &cfg, &sc, &mu).unwrap().estimate;
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a >= prev, "{trials} trials: {a} < {prev}");
        prev = a;
    }
}

#[test]
fn non_homogeneous_evaluator_is_rejected() {
    let g = grid(6);
    let mu = Measure::<f64>::lebesgue(g);
    let cfg = ExponentConfig::new(0.0, vec![1.0], vec![2.0]);
    let w = WeightTuple::ones(g, 1).unwrap();
    let square = FnEvaluator { arity: 1, f: |fs: &[G]| Ok(Output::Function(fs[0].map(|x| x * x))) };
    let err = strong_norm_search(&square, &w, &cfg, &SearchConfig::default(), &mu).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

#[test]
fn non_finite_outputs_are_discarded() {
    let g = grid(6);
    let mu = Measure::<f64>::lebesgue(g);
    let cfg = ExponentConfig::new(0.0, vec![1.0], vec![2.0]);
    let w = WeightTuple::ones(g, 1).unwrap();
    let eval = FnEvaluator {
        arity: 1,
        f: |fs: &[G]| {
            let v = fs[0].values();
            let s: f64 = v.iter().sum::<f64>() / v.len() as f64;
            Ok(Output::Scalar(if v.iter().all(|&x| x > 0.0) { f64::INFINITY } else { s }))
        },
    };
    let sc = SearchConfig { families: vec![CandidateFamily::CubeIndicators], trials: 64, seed: 1, refine: false };
    let res = strong_norm_search(&eval, &w, &cfg, &sc, &mu).unwrap();
    assert!(res.discarded > 0 && res.estimate.is_finite());
}

#[test]
fn equivalence_report_unit_weights() {
    let g = grid(8);
    let mu = Measure::<f64>::lebesgue(g);
    let cfg = ExponentConfig::new(0.0, vec![1.0], vec![2.0]).with_s(2.0, 2.0);
    let w = WeightTuple::ones(g, 1).unwrap();
    let rep = maximal_equiv_report(&w, &cfg, &SearchConfig { trials: 16, ..SearchConfig::default() }, &mu).unwrap();
    assert!((rep.char_const - 1.0).abs() < 1e-12);
    assert!(rep.weak_est >= 1.0 - 1e-12);
    assert!(rep.rescale_gap <= RESCALE_TOL);
}

#[test]
fn equivalence_report_power_weights() {
    let g = grid(9);
    let mu = Measure::<f64>::lebesgue(g);
    let sc = SearchConfig { trials: 16, ..SearchConfig::default() };
    let cfg = ExponentConfig::new(0.0, vec![2.0], vec![4.0]).with_s(4.0, 4.0 / 3.0);
    let rep = maximal_equiv_report(&power_weight(g, 1.0 / 16.0), &cfg, &sc, &mu).unwrap();
    assert!(rep.char_const <= rep.weak_est * (1.0 + EQUIV_TOL));
    assert!(rep.char_const.is_finite() && rep.weak_est.is_finite());
    assert!(rep.strong_form_ratio.is_finite() && rep.strong_form_ratio > 0.0);
    assert!(rep.rescale_gap <= RESCALE_TOL);

    // bilinear, η > 0
    let cfg = ExponentConfig::new(0.25, vec![2.0, 2.0], vec![4.0, 4.0]).with_s(8.0, 8.0 / 7.0);
    let w = WeightTuple::new(vec![
        G::sample(g, |x| x.powf(0.05)).unwrap(),
        G::sample(g, |x| (1.0 - x).powf(-0.05)).unwrap(),
    ])
    .unwrap();
    let rep = maximal_equiv_report(&w, &cfg, &sc, &mu).unwrap();
    assert!(rep.char_const <= rep.weak_est * (1.0 + EQUIV_TOL));
    assert!(rep.rescale_gap <= RESCALE_TOL);
    assert!(rep.band_bound > 0.0 && rep.strong_form_ratio.is_finite());
}

#[test]
fn local_extremal_path_matches_full_evaluation() {
    let g = grid(8);
    let dens = G::sample(g, |x| 1.0 + 0.5 * (9.0 * x).sin()).unwrap();
    for mu in [Measure::<f64>::lebesgue(g), Measure::with_density(&dens).unwrap()] {
        for (eta, cfg) in [
            (0.0, ExponentConfig::new(0.0, vec![2.0], vec![4.0]).with_s(4.0, 4.0 / 3.0)),
            (0.0, ExponentConfig::new(0.0, vec![1.5], vec![3.0]).with_s(6.0, 1.2)),
            (0.3, ExponentConfig::new(0.3, vec![1.5], vec![2.0]).with_s(8.0, 8.0 / 7.0)),
        ] {
            let w = power_weight(g, 0.12);
            let mut r = cfg.r.clone();
            r.push(cfg.s_prime);
            let fast = MaximalEval { eta, r: r.clone(), mu: mu.clone() };
            let mu2 = mu.clone();
            let slow = FnEvaluator {
                arity: 2,
                f: move |fs: &[G]| {
                    Ok(Output::Function(sparselab_core::operators::fractional_maximal(fs, eta, &r, &mu2)?))
                },
            };
            let sc = SearchConfig { trials: 4, refine: false, ..SearchConfig::default() };
            for weak in [true, false] {
                let (a, b) = if weak {
                    (
                        weak_norm_search(&fast, &w, &cfg, &sc, &mu).unwrap(),
                        weak_norm_search(&slow, &w, &cfg, &sc, &mu).unwrap(),
                    )
                } else {
                    (
                        strong_norm_search(&fast, &w, &cfg, &sc, &mu).unwrap(),
                        strong_norm_search(&slow, &w, &cfg, &sc, &mu).unwrap(),
                    )
                };
                assert!((a.estimate - b.estimate).abs() <= 1e-12 * a.estimate, "{} vs {}", a.estimate, b.estimate);
                if weak {
                    let (x, y) = (a.extremal_best.unwrap(), b.extremal_best.unwrap());
                    assert!((x - y).abs() <= 1e-12 * x, "{x} vs {y}");
                }
            }
        }
    }
}

#[test]
fn equivalence_report_at_level_twelve_is_fast() {
    let g = grid(12);
    let mu = Measure::<f64>::lebesgue(g);
    let cfg = ExponentConfig::new(0.0, vec![2.0], vec![4.0]).with_s(4.0, 4.0 / 3.0);
    let t = std::time::Instant::now();
    let rep = maximal_equiv_report(
        &power_weight(g, 1.0 / 16.0),
        &cfg,
        &SearchConfig { trials: 16, ..SearchConfig::default() },
        &mu,
    )
    .unwrap();
    assert!(rep.char_const <= rep.weak_est * (1.0 + EQUIV_TOL));
    assert!(t.elapsed().as_secs_f64() < 30.0, "{:?}", t.elapsed());
}
