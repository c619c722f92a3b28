use rilab_core::green::{c_d, green, green_truncated_solve, GreenKernel, GreenMethod, GreenTable};
use rilab_core::special::gauss_legendre_on;
use rilab_core::LatticePoint;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

fn p(c: &[i32]) -> LatticePoint {
    LatticePoint::new(c).unwrap()
}

/// Torus integral for d = 3 and `x = (x1, x2, 0)`, with the third angle integrated in closed
/// form and a Duffy split of `[0, pi]^2` removing the `1/r` singularity at the origin.
fn torus_green_d3(x1: i32, x2: i32) -> f64 {
    let n = 160;
    let (u, wu) = gauss_legendre_on(n, 0.0, PI);
    let (v, wv) = gauss_legendre_on(n, 0.0, 1.0);
    let f = |t1: f64, t2: f64| {
        let a = 3.0 - t1.cos() - t2.cos();
        (x1 as f64 * t1).cos() * (x2 as f64 * t2).cos() / (a * a - 1.0).sqrt()
    };
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (s, t) = (u[i], u[i] * v[j]);
            acc += wu[i] * wv[j] * s * (f(s, t) + f(t, s));
        }
    }
    3.0 * 4.0 * acc / (4.0 * PI * PI)
}

fn watson_g0() -> f64 {
    6f64.sqrt() / (32.0 * PI.powi(3))
        * gamma(1.0 / 24.0)
        * gamma(5.0 / 24.0)
        * gamma(7.0 / 24.0)
        * gamma(11.0 / 24.0)
}

#[test]
fn g0_matches_closed_form() {
    let g0 = green(3, &p(&[0, 0, 0]), 1e-10).unwrap();
    assert!((g0 - watson_g0()).abs() < 1e-9, "g0 = {g0}, watson {}", watson_g0());
    assert!((g0 - 1.516386).abs() < 1e-6);
}

#[test]
fn torus_quadrature_agrees() {
    let k = GreenKernel::new(3, 6, 1e-10).unwrap();
    for (a, b) in [(0, 0), (1, 0), (1, 1), (2, 1), (3, 0), (4, 2)] {
        let t = torus_green_d3(a, b);
        let g = k.value(&p(&[a, b, 0]));
        assert!((t - g).abs() < 2e-6 * g, "x=({a},{b},0): torus {t} quadrature {g}");
    }
}

#[test]
fn g_e1_is_g0_minus_one() {
    let g0 = green(3, &p(&[0, 0, 0]), 1e-10).unwrap();
    let g1 = green(3, &p(&[0, 1, 0]), 1e-10).unwrap();
    assert!((g1 - (g0 - 1.0)).abs() < 1e-9);
    assert!((g1 - 0.516386).abs() < 1e-6);
}

#[test]
fn asymptotic_ratio_at_distance_20() {
    let k = GreenKernel::new(3, 20, 1e-9).unwrap();
    for x in [p(&[20, 0, 0]), p(&[12, 16, 0])] {
        let r = k.value(&x) * x.norm() / c_d(3);
        assert!((r - 1.0).abs() < 0.02, "ratio {r}");
    }
}

#[test]
fn far_values_in_higher_dimensions() {
    for d in [4usize, 5] {
        let mut c = vec![0; d];
        c[0] = 30;
        let x = LatticePoint::new(&c).unwrap();
        let g = green(d, &x, 1e-9).unwrap();
        let r = g * x.norm().powi(d as i32 - 2) / c_d(d);
        assert!((r - 1.0).abs() < 0.02, "d={d} ratio {r}");
    }
}

#[test]
fn truncated_solve_is_close() {
    let q = green(3, &p(&[1, 1, 0]), 1e-10).unwrap();
    let t = green_truncated_solve(3, &p(&[1, 1, 0]), 24).unwrap();
    assert!((q - t).abs() < 1e-3 * q, "{q} vs {t}");
    let tab = GreenTable::build(3, 2, 1e-3, GreenMethod::TruncatedSolve).unwrap();
    assert!((tab.get(&p(&[0, 0, 0])).unwrap() - 1.516386).abs() < 2e-3);
}

#[test]
fn table_cache_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let t = GreenTable::load_or_build(dir.path(), 3, 3, 1e-9).unwrap();
    let again = GreenTable::load_or_build(dir.path(), 3, 3, 1e-9).unwrap();
    assert_eq!(t.len(), again.len());
    assert_eq!(
        t.get(&p(&[1, 2, 3])).unwrap(),
        again.get(&p(&[3, 2, 1])).unwrap()
    );
}
