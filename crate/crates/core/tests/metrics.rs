use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rilab_core::continuum::{ProfileBase, ProfileField};
use rilab_core::metrics::{
    d_bl, d_r, distances, profile_measure, scaled_measure, verify_sandwich, wasserstein1, BumpKind,
    Mollifier, ScaledMeasure,
};
use rilab_core::pointset::PointSet;
use rilab_core::sampler::OccupationField;
use rilab_core::{CompactSet, DiscreteBox, Error, LatticePoint};

fn measure(pts: &[(Vec<f64>, f64)]) -> ScaledMeasure {
    ScaledMeasure::from_atoms(3, 2.0, pts.iter().map(|(x, w)| (x.as_slice(), *w))).unwrap()
}

fn random_measure(rng: &mut ChaCha8Rng, k: usize, total: f64) -> ScaledMeasure {
    let w: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 0.01).collect();
    let s: f64 = w.iter().sum();
    let pts: Vec<(Vec<f64>, f64)> = w
        .iter()
        .map(|wi| ((0..3).map(|_| rng.gen_range(-2.0..=2.0)).collect(), total * wi / s))
        .collect();
    measure(&pts)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum over all permutations for uniform measures of equal size.
fn assignment_oracle(p: &ScaledMeasure, q: &ScaledMeasure) -> f64 {
    fn rec(i: usize, used: &mut Vec<bool>, c: &[Vec<f64>], acc: f64, best: &mut f64) {
        if i == c.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..c.len() {
            if !used[j] {
                used[j] = true;
                rec(i + 1, used, c, acc + c[i][j], best);
                used[j] = false;
            }
        }
    }
    let k = p.len();
    let c: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| euclid(p.atom(i), q.atom(j))).collect()).collect();
    let mut best = f64::INFINITY;
    rec(0, &mut vec![false; k], &c, 0.0, &mut best);
    best / k as f64
}

#[test]
fn dirac_pairs_and_split_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let w = wasserstein1(&measure(&[(x.clone(), 1.0)]), &measure(&[(y.clone(), 1.0)])).unwrap();
        assert!((w.value - euclid(&x, &y)).abs() < 1e-9);
        assert!(w.gap < 1e-9);
    }
    let p = measure(&[(vec![0.0; 3], 1.0)]);
    let q = measure(&[(vec![1.0, 0.0, 0.0], 0.5), (vec![-1.0, 0.0, 0.0], 0.5)]);
    assert!((wasserstein1(&p, &q).unwrap().value - 1.0).abs() < 1e-12);
    assert!(wasserstein1(&p, &q.scaled(2.0)).is_err());
    assert!(wasserstein1(&p, &p).unwrap().value.abs() < 1e-15);
}

#[test]
fn wasserstein_matches_assignment_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 2..=6 {
        for _ in 0..5 {
            let mk = |rng: &mut ChaCha8Rng| {
                let pts: Vec<(Vec<f64>, f64)> = (0..k)
                    .map(|_| ((0..3).map(|_| rng.gen_range(-2.0..=2.0)).collect(), 1.0 / k as f64))
                    .collect();
                measure(&pts)
            };
            let (p, q) = (mk(&mut rng), mk(&mut rng));
            let w = wasserstein1(&p, &q).unwrap();
            let o = assignment_oracle(&p, &q);
            assert!((w.value - o).abs() < 1e-9, "k {k}: {} vs {o}", w.value);
        }
    }
}

#[test]
fn bounded_lipschitz_two_atoms() {
    // eta = 1 at the heavier atom, 1 - min(|x - y|, 2) at the lighter one
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let (a, b) = (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0));
        let got = d_bl(&measure(&[(x.clone(), a)]), &measure(&[(y.clone(), b)])).unwrap().value;
        let want = (a - b).abs() + a.min(b) * euclid(&x, &y).min(2.0);
        assert!((got - want).abs() < 1e-9, "{got} {want}");
    }
}

#[test]
fn mass_gap_cases() {
    let x = vec![0.3, -0.1, 1.2];
    let a = measure(&[(x.clone(), 1.0)]);
    let b = measure(&[(x, 2.0)]);
    assert!((d_r(&a, &b).unwrap().value - 1.0).abs() < 1e-12);
    assert!((d_bl(&a, &b).unwrap().value - 1.0).abs() < 1e-12);
    let s = verify_sandwich(&a, &b).unwrap();
    assert!(s.holds);
    assert!((s.lower - 0.5).abs() < 1e-12);
    assert!((s.upper - (1.0 + 2.0 * 3f64.sqrt() * 2.0 / 2.0)).abs() < 1e-12);
    let same = verify_sandwich(&a, &a).unwrap();
    assert_eq!((same.lower, same.d_r), (0.0, 0.0));
    assert!(same.upper.abs() < 1e-15);

    // twice Lebesgue against Lebesgue on a grid: normalized parts agree
    let grid: Vec<(Vec<f64>, f64)> = DiscreteBox::ball(LatticePoint::origin(3).unwrap(), 4)
        .points()
        .map(|x| (x.coords().iter().map(|&c| c as f64 / 2.0).collect(), 1.0 / 8.0))
        .collect();
    let lam = measure(&grid);
    let two = lam.scaled(2.0);
    assert!((d_r(&two, &lam).unwrap().value - lam.total()).abs() < 1e-9);
}

#[test]
fn sandwich_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let (k1, k2) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let (t1, t2) = (rng.gen_range(0.05..5.0), rng.gen_range(0.05..5.0));
        let mu = random_measure(&mut rng, k1, t1);
        let nu = random_measure(&mut rng, k2, t2);
        let s = verify_sandwich(&mu, &nu).unwrap();
        worst = worst.min(s.lower_slack).min(s.upper_slack);
        assert!(s.holds, "{s:?}");
    }
    assert!(worst >= -1e-7);
}

#[test]
fn triangle_inequality_and_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let ms: Vec<ScaledMeasure> = (0..3)
            .map(|_| {
                let k = rng.gen_range(1..15);
                random_measure(&mut rng, k, 1.0)
            })
            .collect();
        let w = |a: usize, b: usize| wasserstein1(&ms[a], &ms[b]).unwrap().value;
        assert!(w(0, 2) <= w(0, 1) + w(1, 2) + 1e-7);
        assert!((w(0, 1) - w(1, 0)).abs() < 1e-9);
    }
}

#[test]
fn scaled_measure_recount() {
    let bx = DiscreteBox::ball(LatticePoint::origin(3).unwrap(), 5);
    let window = Arc::new(PointSet::from_box(&bx));
    let zero = OccupationField {
        window: window.clone(),
        u: 1.0,
        values: vec![0.0; window.len()],
    };
    assert!(scaled_measure(&zero, 2, 2.0).unwrap().is_empty());
    let mut values = vec![0.0; window.len()];
    let x = LatticePoint::new(&[1, -2, 3]).unwrap();
    values[window.rank(&x).unwrap()] = 0.75;
    let single = OccupationField { window: window.clone(), u: 1.0, values };
    let m = scaled_measure(&single, 2, 2.0).unwrap();
    assert_eq!(m.len(), 1);
    assert_eq!(m.atom(0), &[0.5, -1.0, 1.5]);
    assert!((m.masses[0] - 0.75 / 8.0).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let values: Vec<f64> = (0..window.len()).map(|_| rng.gen::<f64>()).collect();
    let field = OccupationField { window: window.clone(), u: 1.0, values };
    let m = scaled_measure(&field, 3, 1.5).unwrap();
    let recount: f64 = field
        .iter()
        .filter(|(x, _)| x.sup_norm() <= 4)
        .map(|(_, l)| l)
        .sum::<f64>()
        / 27.0;
    assert!((m.total() - recount).abs() < 1e-12);
    assert!(matches!(scaled_measure(&field, 3, 2.0), Err(Error::WindowTooSmall(_))));
}

#[test]
fn coarsening_within_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mu = random_measure(&mut rng, 60, 2.0);
    let nu = random_measure(&mut rng, 60, 1.5);
    let exact = distances(&mu, &nu, 10_000).unwrap();
    assert!(exact.cell.is_none());
    let coarse = distances(&mu, &nu, 100).unwrap();
    assert!(coarse.cell.is_some());
    assert!((coarse.d_w - exact.d_w).abs() <= coarse.coarsening_bound);
    assert!((coarse.d_r - exact.d_r).abs() <= coarse.coarsening_bound);
}

#[test]
fn larger_problem_is_solved_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = random_measure(&mut rng, 700, 1.0);
    let q = random_measure(&mut rng, 700, 1.0);
    let w = wasserstein1(&p, &q).unwrap();
    assert!(w.gap < 1e-9, "{w:?}");
    // any coupling bounds the optimum; the product coupling is one
    let product: f64 = (0..p.len())
        .map(|i| (0..q.len()).map(|j| p.masses[i] * q.masses[j] * euclid(p.atom(i), q.atom(j))).sum::<f64>())
        .sum();
    assert!(w.value < product);
}

/// Radial Simpson rule for `int chi_eps` with `n` panels.
fn simpson_mass(m: &Mollifier, n: usize) -> f64 {
    let h = m.eps / n as f64;
    let f = |r: f64| 4.0 * std::f64::consts::PI * r * r * m.value(&[r, 0.0, 0.0]);
    let mut s = f(0.0) + f(m.eps);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn mollifier_normalization() {
    for kind in [BumpKind::BumpPoly4, BumpKind::BumpExp] {
        for eps in [0.05, 0.3, 0.9] {
            let m = Mollifier::new(kind, 3, eps).unwrap();
            assert!((simpson_mass(&m, 20_000) - 1.0).abs() < 1e-8, "{kind:?} {eps}");
        }
    }
    assert!(matches!(Mollifier::new(BumpKind::BumpPoly4, 3, 1.0), Err(Error::EpsilonOutOfRange(_))));
    assert!(matches!(Mollifier::new(BumpKind::BumpPoly4, 3, 0.0), Err(Error::EpsilonOutOfRange(_))));
    let m = Mollifier::new(BumpKind::BumpPoly4, 3, 0.5).unwrap();
    let x = LatticePoint::new(&[2, 0, -1]).unwrap();
    assert_eq!(m.located(&[0.5, 0.0, -0.25], &x, 4), m.value(&[0.0; 3]));
}

#[test]
fn convolution_of_constant_approaches_constant() {
    let m = Mollifier::new(BumpKind::BumpPoly4, 3, 0.3).unwrap();
    let x = [0.1, -0.2, 0.05];
    let err = |n: u32| (m.convolve(|_| 0.7, 2.0, n, &x) - 0.7).abs();
    let (e20, e40) = (err(20), err(40));
    assert!(e40 < e20, "{e20} {e40}");
    assert!(e40 < 1e-3, "{e40}");
}

#[test]
fn mollification_closeness_constant_is_stable() {
    let eta = |y: &[f64]| y[0].clamp(-1.0, 1.0);
    let r = 2.0;
    let fitted = |eps: f64, n: u32| {
        let m = Mollifier::new(BumpKind::BumpPoly4, 3, eps).unwrap();
        let mut sup = 0.0f64;
        let steps = 12;
        for i in 0..=steps {
            let t = -(r - eps) + 2.0 * (r - eps) * i as f64 / steps as f64;
            for x in [[t, 0.0, 0.0], [t, 0.7, -0.4]] {
                sup = sup.max((m.convolve(eta, r, n, &x) - eta(&x)).abs());
            }
        }
        sup / eps
    };
    for eps in [0.2, 0.4] {
        let (c1, c2) = (fitted(eps, 20), fitted(eps, 40));
        assert!(c1 < 1.0 && c2 < 1.0, "{c1} {c2}");
        assert!((c1 - c2).abs() < 0.1 * c1.max(c2) + 0.01, "eps {eps}: {c1} vs {c2}");
    }
    // the continuum bound: eps times the first moment
    let m = Mollifier::new(BumpKind::BumpPoly4, 3, 0.2).unwrap();
    assert!(fitted(0.2, 40) <= m.first_moment() * 1.05);
}

#[test]
fn profile_measures_cauchy_in_bounded_lipschitz() {
    let pf = ProfileField::new(
        0.5,
        2.0,
        ProfileBase::Continuum(CompactSet::ball(vec![0.0; 3], 0.4)),
    )
    .unwrap();
    let ms: Vec<ScaledMeasure> = [2, 4, 8].iter().map(|&n| profile_measure(&pf, 3, n, 1.0).unwrap()).collect();
    let a = d_bl(&ms[0], &ms[1]).unwrap().value;
    let b = d_bl(&ms[1], &ms[2]).unwrap().value;
    assert!(b < a, "{a} {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sandwich_property(seed in 0u64..100_000, k1 in 1usize..8, k2 in 1usize..8, t1 in 0.01f64..10.0, t2 in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = random_measure(&mut rng, k1, t1);
        let nu = random_measure(&mut rng, k2, t2);
        let s = verify_sandwich(&mu, &nu).unwrap();
        prop_assert!(s.holds, "{:?}", s);
    }

    #[test]
    fn d_r_vanishes_only_on_equal_measures(seed in 0u64..100_000, k in 1usize..8, t in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = random_measure(&mut rng, k, t);
        prop_assert!(d_r(&mu, &mu).unwrap().value.abs() < 1e-12);
        prop_assert!(d_r(&mu, &mu.scaled(1.5)).unwrap().value > 0.0);
    }
}
