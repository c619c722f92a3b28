use rilab_core::continuum::{ProfileBase, ProfileField};
use rilab_core::entropic::{profile_distance_pipeline, EntropicConfig};
use rilab_core::metrics::{d_r, profile_measure};
use rilab_core::CompactSet;

fn small() -> EntropicConfig {
    EntropicConfig {
        set: CompactSet::ball(vec![0.0; 3], 0.5),
        n: 4,
        m: 2.0,
        u: 4.0,
        r: 2.0,
        cell: 1.0,
        u_bar_grid: vec![5.0, 8.0],
        budget: 2000,
        min_hits: 4,
        unconditioned: 8,
        seed: 5,
        rho: None,
        bootstrap: 50,
    }
}

#[test]
fn profile_self_distance_vanishes() {
    let set = CompactSet::ball(vec![0.0; 3], 0.5);
    let p = ProfileField::new(2.0, 5.0, ProfileBase::Continuum(set)).unwrap();
    let m = profile_measure(&p, 3, 4, 2.0).unwrap();
    assert!(d_r(&m, &m).unwrap().value.abs() < 1e-12);
    let c = m.coarsen(0.5);
    // coarsening moves each atom by at most sqrt(3) * w / 2
    let moved = d_r(&m, &c).unwrap().value;
    assert!(moved <= 3f64.sqrt() * 0.25 * m.total() + 1e-9, "{moved}");
}

#[test]
fn config_validation() {
    let mut c = small();
    c.r = 1.5;
    assert!(profile_distance_pipeline(&c).is_err());
    let mut c = small();
    c.u_bar_grid = vec![3.0];
    assert!(c.validate().is_err());
    let mut c = small();
    c.cell = 0.0;
    assert!(c.validate().is_err());
    let mut c = small();
    c.min_hits = 1;
    assert!(c.validate().is_err());
    assert!(small().validate().is_ok());
}

#[test]
fn too_rare_event_is_reported() {
    let mut c = small();
    c.u = 0.05;
    c.u_bar_grid = vec![1.0];
    c.budget = 256;
    assert!(profile_distance_pipeline(&c).is_err());
}

#[test]
fn small_run_is_deterministic_and_complete() {
    let c = small();
    let a = profile_distance_pipeline(&c).unwrap();
    let b = profile_distance_pipeline(&c).unwrap();
    assert!(a.hits >= c.min_hits && a.tries >= a.hits);
    assert!(c.u_bar_grid.contains(&a.u_bar_fit));
    assert_eq!(a.fit_curve.len(), c.u_bar_grid.len());
    let roles = |r: &str| a.rows.iter().filter(|x| x.role == r).count();
    assert_eq!(roles("fit") + roles("eval"), a.hits);
    assert_eq!(roles("all"), c.unconditioned);
    assert!(a.rows.iter().filter(|x| x.role != "all").all(|x| x.occurred));
    assert!(a.rows.iter().all(|x| x.d_r >= 0.0 && x.d_bl >= 0.0 && x.d_r_flat.is_finite()));
    let mut x = Vec::new();
    let mut y = Vec::new();
    a.write_rows_csv(&mut x).unwrap();
    b.write_rows_csv(&mut y).unwrap();
    assert_eq!(x, y);
    let text = String::from_utf8(x).unwrap();
    assert!(text.starts_with("replica,seed,occurred,role,d_r,d_bl,d_r_flat\n"));
    assert_eq!(text.lines().count(), a.rows.len() + 1);
}
