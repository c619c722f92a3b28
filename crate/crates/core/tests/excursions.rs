use std::sync::Arc;

use proptest::prelude::*;
use rilab_core::excursions::{
    count_excursions, epsilon_hat, occupancy_check, scales, write_excursions_csv, ScalePair,
};
use rilab_core::pointset::PointSet;
use rilab_core::potential::{equilibrium, Backend, EquilibriumParams};
use rilab_core::sampler::{
    sample_ensemble, InterlacementEnsemble, OccupationField, SampleOptions, Segment, Trajectory, WindowMeasure,
};
use rilab_core::stats::proportion;
use rilab_core::{Error, LatticePoint};

fn p(c: &[i32]) -> LatticePoint {
    LatticePoint::new(c).unwrap()
}

/// Exact value of a finite positive double as `mant * 2^exp`.
fn decompose(x: f64) -> (u128, i32) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as u128;
    if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u128 << 52), exp - 1075)
    }
}

#[test]
fn scale_arithmetic() {
    let s = scales(3, 10_000, 0.1, 100).unwrap();
    assert_eq!(s.l0, 95);
    assert_eq!(s.lhat0, 948_600);
    assert_eq!(s.k_bar(), 203);
    let z = p(&[5, -7, 2]);
    let (b, d, u) = (s.b_box(&z).unwrap(), s.d_box(&z).unwrap(), s.u_box(&z).unwrap());
    assert!(b.is_subset_of(&d) && d.is_subset_of(&u));
    assert_eq!(b.min_corner(), z);
    assert_eq!(d.sides()[0], 7 * 95);
    assert_eq!(u.sides()[0], 2 * 100 * 95 - 2);
    assert!(matches!(scales(3, 2, 0.01, 100), Err(Error::DegenerateScale(_))));
    assert!(scales(3, 100, 0.5, 99).is_err());
    assert!(scales(3, 100, 1.5, 100).is_err());
    assert!(scales(3, 100, 0.0, 100).is_err());
    // Lhat0 / L0 grows along decades
    let r: Vec<f64> = (3..=9)
        .map(|k| {
            let s = scales(3, 10u64.pow(k), 0.1, 100).unwrap();
            s.lhat0 as f64 / s.l0 as f64
        })
        .collect();
    assert!(r.windows(2).all(|w| w[1] > w[0]), "{r:?}");
}

proptest! {
    #[test]
    fn scales_match_exact_oracle(n in 3u64..1_000_000, g in 0.001f64..=1.0, d in 3usize..=5) {
        match scales(d, n, g, 100) {
            Ok(s) => {
                // sqrt part checked in exact integer arithmetic on the double value of gamma
                let m = (s.lhat0 / (100 * d as u64)) as u128;
                let (mant, e) = decompose(g);
                let sh = (-e) as u32;
                let rhs = mant * (n as u128) * (n as u128);
                prop_assert!((m * m) << sh <= rhs);
                prop_assert!(((m + 1) * (m + 1)) << sh > rhs);
                // log part bracketed with an independently evaluated logarithm
                let x = g * n as f64 * ((n as f64).log2() * std::f64::consts::LN_2);
                let p = (d - 1) as i32;
                prop_assert!((s.l0 as f64).powi(p) <= x * (1.0 + 1e-12));
                prop_assert!(((s.l0 + 1) as f64).powi(p) > x * (1.0 - 1e-12));
            }
            Err(Error::DegenerateScale(_)) => {
                prop_assert!(g * n as f64 * (n as f64).ln() < 1.0 + 1e-12);
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}

fn toy() -> ScalePair {
    // D = [-3, 4)^3, U = [-4, 4)^3
    ScalePair::toy(3, 1, 5).unwrap()
}

fn u_window() -> Arc<PointSet> {
    Arc::new(PointSet::from_box(&toy().u_box(&p(&[0, 0, 0])).unwrap()))
}

fn synthetic(trajs: Vec<Vec<(LatticePoint, &str)>>) -> InterlacementEnsemble {
    let window = u_window();
    let trajectories = trajs
        .into_iter()
        .enumerate()
        .map(|(i, segs)| Trajectory {
            label: 0.1 * (i + 1) as f64,
            segments: segs
                .into_iter()
                .map(|(start, dirs)| Segment {
                    start,
                    dirs: dirs.to_string(),
                    holds: vec![1.0; dirs.len() + 1],
                })
                .collect(),
        })
        .collect();
    InterlacementEnsemble {
        window,
        u_max: 10.0,
        cap: 1.0,
        rho: 100.0,
        seed: 0,
        backend: Backend::Exact,
        trajectories,
        bias_bound: 0.0,
        backward_checked: 0,
    }
}

#[test]
fn synthetic_paths() {
    let s = toy();
    let o = p(&[0, 0, 0]);
    // enter at x = -4, cross D along axis 0, leave through x = 4
    let cross = (p(&[-4, 0, 0]), "0000000");
    let one = synthetic(vec![vec![cross]]);
    let r = count_excursions(&one, 1.0, &o, &s).unwrap();
    assert_eq!(r.count, 1);
    assert_eq!((r.excursions[0].entry, r.excursions[0].exit), (1, 8));
    // boundary sites visited: x = -3 and x = 3
    assert_eq!(r.local_time, 2.0);
    // the same trajectory re-entering the window once more
    let two = synthetic(vec![vec![cross, (p(&[3, 0, 0]), "1111111")]]);
    assert_eq!(count_excursions(&two, 1.0, &o, &s).unwrap().count, 2);
    // wandering from D into U \ D and back does not end an excursion
    let wander = synthetic(vec![vec![(p(&[-4, 0, 0]), "001100")]]);
    assert_eq!(count_excursions(&wander, 1.0, &o, &s).unwrap().count, 1);
    // never entering D
    let miss = synthetic(vec![vec![(p(&[-4, -4, 0]), "0000000")]]);
    assert_eq!(count_excursions(&miss, 1.0, &o, &s).unwrap().count, 0);
    // label filtering
    let both = synthetic(vec![vec![cross], vec![cross]]);
    assert_eq!(count_excursions(&both, 0.1, &o, &s).unwrap().count, 1);
    assert_eq!(count_excursions(&both, 0.2, &o, &s).unwrap().count, 2);
    // U_z must fit in the window
    assert!(matches!(
        count_excursions(&one, 1.0, &p(&[1, 0, 0]), &s),
        Err(Error::WindowTooSmall(_))
    ));
}

fn sampled(seed: u64, u_max: f64) -> InterlacementEnsemble {
    let w = u_window();
    let t = equilibrium(w.points(), &EquilibriumParams::default()).unwrap();
    let m = WindowMeasure::from_table(&t);
    sample_ensemble(w, &m, u_max, 40.0, seed, &SampleOptions::default()).unwrap()
}

/// Splits the visit stream at exits from `U` and at window departures, then counts
/// pieces that reach `D`; local time runs from the first `D` visit of each piece.
fn stack_recount(ens: &InterlacementEnsemble, u: f64, s: &ScalePair) -> (usize, f64) {
    let o = p(&[0, 0, 0]);
    let (dz, uz) = (s.d_box(&o).unwrap(), s.u_box(&o).unwrap());
    let mut tokens: Vec<Option<(LatticePoint, f64)>> = Vec::new();
    for t in ens.trajectories.iter().filter(|t| t.label <= u) {
        for seg in &t.segments {
            tokens.extend(seg.visits().map(Some));
            tokens.push(None);
        }
    }
    let mut count = 0;
    let mut lt = 0.0;
    let mut stack: Vec<(LatticePoint, f64)> = Vec::new();
    let mut flush = |stack: &mut Vec<(LatticePoint, f64)>| {
        if let Some(k) = stack.iter().position(|(x, _)| dz.contains(x)) {
            count += 1;
            let inner: Vec<LatticePoint> = dz.inner_boundary();
            lt += stack[k..].iter().filter(|(x, _)| inner.contains(x)).map(|(_, h)| h).sum::<f64>();
        }
        stack.clear();
    };
    for tok in tokens {
        match tok {
            Some((x, _)) if !uz.contains(&x) => flush(&mut stack),
            Some(v) => stack.push(v),
            None => flush(&mut stack),
        }
    }
    (count, lt)
}

#[test]
fn recount_by_stack_machine() {
    let s = toy();
    let o = p(&[0, 0, 0]);
    for seed in 0..6 {
        let ens = sampled(seed, 3.0);
        for u in [0.5, 1.5, 3.0] {
            let r = count_excursions(&ens, u, &o, &s).unwrap();
            let (c, lt) = stack_recount(&ens, u, &s);
            assert_eq!(r.count, c);
            assert!((r.local_time - lt).abs() < 1e-9 * (1.0 + lt));
            // local time never exceeds occupation of D_z
            let field = ens.occupation_field(u).unwrap();
            let occ: f64 = s.d_box(&o).unwrap().points().map(|x| field.get(&x)).sum();
            assert!(r.local_time <= occ + 1e-9);
            for e in &r.excursions {
                assert!(e.entry < e.exit);
            }
        }
    }
}

#[test]
fn counts_additive_and_monotone() {
    let s = toy();
    let o = p(&[0, 0, 0]);
    for seed in 10..14 {
        let ens = sampled(seed, 2.0);
        let levels = [0.0, 0.25, 0.5, 1.0, 2.0];
        let c: Vec<usize> = levels.iter().map(|&u| count_excursions(&ens, u, &o, &s).unwrap().count).collect();
        assert_eq!(c[0], 0);
        assert!(c.windows(2).all(|w| w[0] <= w[1]), "{c:?}");
        let r = count_excursions(&ens, 2.0, &o, &s).unwrap();
        let mut per = vec![0usize; ens.trajectories.len()];
        for e in &r.excursions {
            per[e.trajectory] += 1;
        }
        assert_eq!(per.iter().sum::<usize>(), r.count);
        // excursions of one trajectory are disjoint and ordered in time
        for w in r.excursions.windows(2) {
            if w[0].trajectory == w[1].trajectory {
                assert!(w[0].exit <= w[1].entry);
            }
        }
    }
    let mut buf = Vec::new();
    let recs: Vec<_> = [0.5, 1.0]
        .iter()
        .map(|&u| count_excursions(&sampled(1, 1.0), u, &o, &s).unwrap())
        .collect();
    write_excursions_csv(&mut buf, &recs).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("z0,z1,z2,u,count,local_time"));
}

#[test]
fn occupancy_trivial_cases() {
    let d = toy().d_box(&p(&[0, 0, 0])).unwrap();
    let w = Arc::new(PointSet::from_box(&d));
    let t = equilibrium(w.points(), &EquilibriumParams::default()).unwrap();
    let zero = OccupationField { window: w.clone(), u: 0.0, values: vec![0.0; w.len()] };
    for g in [1e-6, 0.5, 3.0] {
        assert!(!occupancy_check(&zero, &t, g, 0.0).pass);
    }
    let g = 0.7;
    let flat = OccupationField { window: w.clone(), u: g, values: vec![g; w.len()] };
    let c = occupancy_check(&flat, &t, g, 0.0);
    assert!(c.margin.abs() < 1e-12 * t.cap, "{c:?}");
    assert!(c.pass);
    // the multi-box threshold is lowered by 1 + eps_hat
    let c = occupancy_check(&flat, &t, g, 0.1);
    assert!((c.threshold * 1.1 - g * t.cap).abs() < 1e-12 && c.margin > 0.0);
}

#[test]
fn occupancy_pass_rate_consistent_across_seeds() {
    let d = toy().d_box(&p(&[0, 0, 0])).unwrap();
    let w = Arc::new(PointSet::from_box(&d));
    let t = equilibrium(w.points(), &EquilibriumParams::default()).unwrap();
    let m = WindowMeasure::from_table(&t);
    let g = 0.5;
    let rate = |seeds: std::ops::Range<u64>| {
        let n = seeds.end - seeds.start;
        let k = seeds
            .filter(|&s| {
                let ens = sample_ensemble(w.clone(), &m, g, 40.0, s, &SampleOptions::default()).unwrap();
                occupancy_check(&ens.occupation_field(g).unwrap(), &t, g, 0.0).pass
            })
            .count() as u64;
        proportion(k, n)
    };
    let (a, b) = (rate(0..400), rate(1000..1400));
    assert!((a.mean - b.mean).abs() < 4.0 * (a.se * a.se + b.se * b.se).sqrt(), "{a:?} {b:?}");
    assert!(a.mean > 0.2 && a.mean < 0.8, "{a:?}");
}

#[test]
fn eps_hat_single_and_separated_boxes() {
    let params = EquilibriumParams::default();
    let s = toy();
    let one = epsilon_hat(&[s.d_box(&p(&[0, 0, 0])).unwrap()], &params).unwrap();
    assert!(one.eps_hat < 1e-9 && one.eps_lower < 1e-9);
    assert!((one.box_mass[0] - one.cap_c).abs() < 1e-9 * one.cap_c);
    let pair = |sep: i32| {
        let boxes = [s.d_box(&p(&[0, 0, 0])).unwrap(), s.d_box(&p(&[sep, 0, 0])).unwrap()];
        epsilon_hat(&boxes, &params).unwrap()
    };
    let e: Vec<f64> = [9, 14, 24].iter().map(|&k| pair(k).eps_hat).collect();
    assert!(e[0] > 0.0 && e[0] > e[1] && e[1] > e[2], "{e:?}");
    let r = pair(14);
    assert!((r.box_mass.iter().sum::<f64>() - r.cap_c).abs() < 1e-9 * r.cap_c);
    let overlap = [s.d_box(&p(&[0, 0, 0])).unwrap(), s.d_box(&p(&[3, 0, 0])).unwrap()];
    assert!(epsilon_hat(&overlap, &params).is_err());
}
