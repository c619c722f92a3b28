//! Brownian potential theory in `R^d`: harmonic potentials, capacities and occupation profiles.
//!
//! Normalization: generator `Δ/2` and energy `½∫|∇f|²`, so a ball of radius `r` in `d = 3` has
//! capacity `2πr`.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::lattice::{discretize, LatticePoint};
use crate::pointset::PointSet;
use crate::potential::{energy_harmonic_outside, equilibrium, EquilibriumParams, PotentialTable};
use crate::rng::{derive_seed, stream_rng};
use crate::shape::CompactSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialMethod {
    ExactBall,
    WalkOnSpheres,
    DiscreteLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityMethod {
    Scaling,
    DirichletEnergy,
    DiscreteLimit,
    WalkOnSpheres,
}

#[derive(Clone, Debug)]
pub struct ContinuumOptions {
    /// Target absolute error (standard error for Monte Carlo methods).
    pub tol: f64,
    pub seed: u64,
    /// Absorption shell width relative to the diameter.
    pub eps_rel: f64,
    pub max_samples: usize,
    /// Scale for `discrete-limit` potentials; first scale for capacity extrapolation.
    pub n: u32,
    /// Number of doubled scales used for capacity extrapolation (at least 3).
    pub levels: usize,
}

impl Default for ContinuumOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            seed: 1,
            eps_rel: 1e-4,
            max_samples: 1 << 25,
            n: 8,
            levels: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuumEstimate {
    pub value: f64,
    /// Statistical standard error (0 for deterministic methods).
    pub se: f64,
    /// Quoted discretization or truncation error.
    pub bias: f64,
    pub samples: usize,
}

impl ContinuumEstimate {
    fn exact(value: f64) -> Self {
        Self {
            value,
            se: 0.0,
            bias: 0.0,
            samples: 0,
        }
    }
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

/// Constant `c` in the Brownian Green function `c / |x|^{d-2}`.
pub fn brownian_green_constant(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    gamma(h - 1.0) / (2.0 * std::f64::consts::PI.powf(h))
}

/// Capacity of the unit ball.
pub fn unit_ball_capacity(d: usize) -> f64 {
    1.0 / brownian_green_constant(d)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random_direction<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

struct WalkOnSpheres<'a> {
    set: &'a CompactSet,
    center: Vec<f64>,
    r_enc: f64,
    eps: f64,
}

impl<'a> WalkOnSpheres<'a> {
    fn new(set: &'a CompactSet, eps_rel: f64) -> Self {
        let (center, r_enc) = set.enclosing_ball();
        Self {
            eps: eps_rel * set.diameter().max(1e-12),
            set,
            center,
            r_enc: r_enc.max(1e-12),
        }
    }

    /// One walk from `z`: true if the set is hit.
    ///
    /// Beyond twice the enclosing radius the walk either escapes or is moved to the enclosing
    /// sphere, using the exact hitting probability and hitting law of that sphere.
    fn hits<R: Rng>(&self, z: &[f64], rng: &mut R) -> bool {
        let d = z.len();
        let mut z = z.to_vec();
        let r_out = 2.0 * self.r_enc;
        loop {
            let rel: Vec<f64> = z.iter().zip(&self.center).map(|(a, b)| a - b).collect();
            let rz = norm(&rel);
            if rz > r_out {
                let p = (self.r_enc / rz).powi(d as i32 - 2);
                if rng.gen::<f64>() >= p {
                    return false;
                }
                // hitting law from outside is proportional to |z - y|^{-d} on the sphere
                loop {
                    let y: Vec<f64> = random_direction(d, rng).iter().map(|v| v * self.r_enc).collect();
                    let dist = norm(&rel.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
                    if rng.gen::<f64>() < ((rz - self.r_enc) / dist).powi(d as i32) {
                        z = y.iter().zip(&self.center).map(|(a, b)| a + b).collect();
                        break;
                    }
                }
                continue;
            }
            let delta = self.set.distance(&z);
            if delta < self.eps {
                return true;
            }
            let dir = random_direction(d, rng);
            for (zi, di) in z.iter_mut().zip(&dir) {
                *zi += delta * di;
            }
        }
    }

    /// Mean of `f(rng)` over batches until the standard error is below `tol`.
    fn adaptive<F>(&self, tol: f64, seed: u64, max_samples: usize, f: F) -> Result<ContinuumEstimate>
    where
        F: Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync,
    {
        let batch = 4096usize;
        let (mut s, mut s2, mut n) = (0.0, 0.0, 0usize);
        let mut k = 0u64;
        loop {
            // run batches in groups so every thread has work
            let group = rayon::current_num_threads().max(1) as u64;
            let parts: Vec<(f64, f64)> = (k..k + group)
                .into_par_iter()
                .map(|b| {
                    let mut rng = stream_rng(derive_seed(seed, b), 0);
                    let mut a = (0.0, 0.0);
                    for _ in 0..batch {
                        let x = f(&mut rng);
                        a.0 += x;
                        a.1 += x * x;
                    }
                    a
                })
                .collect();
            k += group;
            for (a, b) in parts {
                s += a;
                s2 += b;
                n += batch;
            }
            let mean = s / n as f64;
            let var = (s2 / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            // guard against a zero variance estimate from a short run
            if se <= tol && n >= 4 * batch {
                return Ok(ContinuumEstimate {
                    value: mean,
                    se,
                    bias: self.eps,
                    samples: n,
                });
            }
            if n >= max_samples {
                return Err(Error::ToleranceNotReached(format!(
                    "walk on spheres: se {se:.3e} after {n} samples, wanted {tol:.3e}"
                )));
            }
        }
    }
}

/// The harmonic potential `W_z[B is hit]`.
pub fn harmonic_potential(
    set: &CompactSet,
    z: &[f64],
    method: PotentialMethod,
    opts: &ContinuumOptions,
) -> Result<ContinuumEstimate> {
    set.validate().map_err(Error::InvalidParameter)?;
    if z.len() != set.dim() {
        return Err(Error::InvalidDimension(z.len()));
    }
    if set.dim() < 3 {
        return Err(Error::InvalidDimension(set.dim()));
    }
    if set.contains(z) {
        return Ok(ContinuumEstimate::exact(1.0));
    }
    match method {
        PotentialMethod::ExactBall => match set {
            CompactSet::Ball { center, radius } => {
                let r = norm(&z.iter().zip(center).map(|(a, b)| a - b).collect::<Vec<_>>());
                Ok(ContinuumEstimate::exact((radius / r).powi(z.len() as i32 - 2)))
            }
            _ => Err(Error::MethodUnavailable("exact-ball requires a ball".into())),
        },
        PotentialMethod::WalkOnSpheres => {
            let w = WalkOnSpheres::new(set, opts.eps_rel);
            w.adaptive(opts.tol, opts.seed, opts.max_samples, |rng| {
                if w.hits(z, rng) {
                    1.0
                } else {
                    0.0
                }
            })
        }
        PotentialMethod::DiscreteLimit => {
            let at = |n: u32| -> Result<f64> {
                let pts = discretize(set, n);
                if pts.is_empty() {
                    return Err(Error::DegenerateScale(format!("no lattice points at N = {n}")));
                }
                let t = equilibrium(&pts, &EquilibriumParams::default())?;
                Ok(t.h(&lattice_floor(z, n)))
            };
            let h = at(opts.n)?;
            let h2 = at(2 * opts.n)?;
            Ok(ContinuumEstimate {
                value: h,
                se: 0.0,
                bias: (h - h2).abs(),
                samples: 0,
            })
        }
    }
}

/// `floor(N z)` as a lattice point.
pub fn lattice_floor(z: &[f64], n: u32) -> LatticePoint {
    let c: Vec<i32> = z.iter().map(|v| (v * n as f64).floor() as i32).collect();
    LatticePoint::new(&c).expect("dimension checked by caller")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GoldenCapacity {
    pub shape: String,
    pub d: usize,
    pub value: f64,
    pub method: String,
    pub scales: Vec<u32>,
    pub reference: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GoldenFile {
    pub normalization: String,
    pub entries: Vec<GoldenCapacity>,
}

/// Stored unit-shape capacities.
pub fn golden() -> &'static GoldenFile {
    static G: OnceLock<GoldenFile> = OnceLock::new();
    G.get_or_init(|| {
        serde_json::from_str(include_str!("../golden/capacities.json")).expect("valid golden file")
    })
}

fn unit_cube_capacity(d: usize) -> Option<f64> {
    golden()
        .entries
        .iter()
        .find(|e| e.shape == "unit-cube" && e.d == d)
        .map(|e| e.value)
}

/// Capacity of `set`.
pub fn brownian_capacity(
    set: &CompactSet,
    method: CapacityMethod,
    opts: &ContinuumOptions,
) -> Result<ContinuumEstimate> {
    set.validate().map_err(Error::InvalidParameter)?;
    let d = set.dim();
    if d < 3 {
        return Err(Error::InvalidDimension(d));
    }
    match method {
        CapacityMethod::Scaling => match set {
            CompactSet::Ball { radius, .. } => Ok(ContinuumEstimate::exact(
                unit_ball_capacity(d) * radius.powi(d as i32 - 2),
            )),
            CompactSet::Box { lo, hi } => {
                let s = hi[0] - lo[0];
                if lo.iter().zip(hi).any(|(a, b)| ((b - a) - s).abs() > 1e-12 * s.max(1.0)) {
                    return Err(Error::MethodUnavailable("scaling needs a cube or a ball".into()));
                }
                let c = unit_cube_capacity(d).ok_or_else(|| {
                    Error::MethodUnavailable(format!("no stored unit cube capacity for d = {d}"))
                })?;
                Ok(ContinuumEstimate::exact(c * s.powi(d as i32 - 2)))
            }
            CompactSet::Union { .. } => Err(Error::MethodUnavailable("scaling needs a cube or a ball".into())),
        },
        CapacityMethod::DiscreteLimit => extrapolate(set, opts, |t, _| t.cap),
        CapacityMethod::DirichletEnergy => extrapolate(set, opts, |t, pts| {
            energy_harmonic_outside(pts, |x| t.h(x))
        }),
        CapacityMethod::WalkOnSpheres => {
            let w = WalkOnSpheres::new(set, opts.eps_rel);
            let r = 2.0 * w.r_enc;
            // sphere average of the potential around the set is c cap / r^{d-2}
            let scale = r.powi(d as i32 - 2) / brownian_green_constant(d);
            let est = w.adaptive(opts.tol / scale, opts.seed, opts.max_samples, |rng| {
                let z: Vec<f64> = random_direction(d, rng)
                    .iter()
                    .zip(&w.center)
                    .map(|(v, c)| r * v + c)
                    .collect();
                if w.hits(&z, rng) {
                    1.0
                } else {
                    0.0
                }
            })?;
            Ok(ContinuumEstimate {
                value: est.value * scale,
                se: est.se * scale,
                bias: est.bias * scale,
                samples: est.samples,
            })
        }
    }
}

/// `d * f(B_N) / N^{d-2}` over doubled scales, extrapolated with Aitken's delta-squared.
fn extrapolate<F>(set: &CompactSet, opts: &ContinuumOptions, f: F) -> Result<ContinuumEstimate>
where
    F: Fn(&PotentialTable, &PointSet) -> f64,
{
    if opts.levels < 3 {
        return Err(Error::InvalidParameter("extrapolation needs at least 3 scales".into()));
    }
    let d = set.dim();
    let mut vals = Vec::new();
    for k in 0..opts.levels {
        let n = opts.n << k;
        let pts = discretize(set, n);
        if pts.is_empty() {
            return Err(Error::DegenerateScale(format!("no lattice points at N = {n}")));
        }
        let t = equilibrium(&pts, &EquilibriumParams::default())?;
        let ps = PointSet::new(&pts);
        vals.push(d as f64 * f(&t, &ps) / (n as f64).powi(d as i32 - 2));
    }
    let aitken = |a: f64, b: f64, c: f64| {
        let (d1, d2) = (b - a, c - b);
        if (d2 - d1).abs() < 1e-300 {
            c
        } else {
            c - d2 * d2 / (d2 - d1)
        }
    };
    let m = vals.len();
    let last = aitken(vals[m - 3], vals[m - 2], vals[m - 1]);
    let err = if m >= 4 {
        (last - aitken(vals[m - 4], vals[m - 3], vals[m - 2])).abs()
    } else {
        (last - vals[m - 1]).abs()
    };
    if !last.is_finite() || err > opts.tol * last.abs().max(1.0) {
        return Err(Error::ToleranceNotReached(format!(
            "capacity extrapolation error {err:.3e} over scales {:?}",
            vals
        )));
    }
    Ok(ContinuumEstimate {
        value: last,
        se: 0.0,
        bias: err,
        samples: 0,
    })
}

/// `(√u + (√ū − √u) h)²`.
pub fn profile(u: f64, u_bar: f64, potential: f64) -> Result<f64> {
    if !(u > 0.0) || !(u < u_bar) {
        return Err(Error::InvalidParameter(format!("profile needs 0 < u < u_bar, got u = {u}, u_bar = {u_bar}")));
    }
    if !(0.0..=1.0).contains(&potential) {
        return Err(Error::InvalidParameter(format!("potential {potential} outside [0, 1]")));
    }
    let s = u.sqrt() + (u_bar.sqrt() - u.sqrt()) * potential;
    Ok(s * s)
}

#[derive(Clone, Debug)]
pub enum ProfileBase {
    Continuum(CompactSet),
    Discrete(Arc<PotentialTable>),
}

/// The profile `M^u` over a continuum set or a discrete set.
#[derive(Clone, Debug)]
pub struct ProfileField {
    pub u: f64,
    pub u_bar: f64,
    pub base: ProfileBase,
    pub opts: ContinuumOptions,
}

impl ProfileField {
    pub fn new(u: f64, u_bar: f64, base: ProfileBase) -> Result<Self> {
        profile(u, u_bar, 0.0)?;
        Ok(Self {
            u,
            u_bar,
            base,
            opts: ContinuumOptions::default(),
        })
    }

    /// Value at a point of `R^d` (continuum base).
    pub fn at(&self, x: &[f64]) -> Result<f64> {
        let h = match &self.base {
            ProfileBase::Continuum(set) => {
                let method = if matches!(set, CompactSet::Ball { .. }) {
                    PotentialMethod::ExactBall
                } else {
                    PotentialMethod::WalkOnSpheres
                };
                harmonic_potential(set, x, method, &self.opts)?.value.clamp(0.0, 1.0)
            }
            ProfileBase::Discrete(t) => t.h(&lattice_floor(x, 1)),
        };
        profile(self.u, self.u_bar, h)
    }

    /// Value at a lattice site (discrete base).
    pub fn at_site(&self, x: &LatticePoint) -> Result<f64> {
        match &self.base {
            ProfileBase::Discrete(t) => profile(self.u, self.u_bar, t.h(x)),
            ProfileBase::Continuum(_) => {
                let z: Vec<f64> = x.coords().iter().map(|&c| c as f64).collect();
                self.at(&z)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        assert!((unit_ball_capacity(3) - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        // both forms of the ball capacity agree in every dimension
        for d in 3..=6 {
            let a = 0.5 * (d as f64 - 2.0) * sphere_area(d);
            assert!((a - unit_ball_capacity(d)).abs() < 1e-10 * a);
        }
    }

    #[test]
    fn profile_arithmetic() {
        assert!((profile(0.25, 1.0, 0.5).unwrap() - 0.5625).abs() < 1e-15);
        assert_eq!(profile(0.25, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(profile(0.25, 1.0, 0.0).unwrap(), 0.25);
        assert!(profile(1.0, 1.0, 0.5).is_err());
        assert!(profile(0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn golden_file_parses() {
        assert!(unit_cube_capacity(3).is_some());
    }
}
