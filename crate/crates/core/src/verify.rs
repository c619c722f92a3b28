//! Monte Carlo checks of occupation-time formulas against sampled interlacements.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::{g_norm, laplace_functional, tail_bound, Potential, TailBound};
use crate::green::GreenKernel;
use crate::pointset::PointSet;
use crate::potential::{equilibrium, EquilibriumParams};
use crate::rng::derive_seed;
use crate::sampler::{sample_ensemble, OccupationField, SampleOptions, WindowMeasure};
use crate::stats::{clopper_pearson, Estimate};

/// Shared setup for repeated ensembles on a fixed window.
pub struct OccupationSampler {
    pub window: Arc<PointSet>,
    pub measure: WindowMeasure,
    pub rho: f64,
    pub bias_bound: f64,
}

impl OccupationSampler {
    pub fn new(window: &[crate::LatticePoint], rho: f64) -> Result<Self> {
        let w = Arc::new(PointSet::new(window));
        let t = equilibrium(w.points(), &EquilibriumParams::default())?;
        let bias = {
            let c = w.center_point();
            let d = w.dim();
            (0..2 * d)
                .map(|k| t.h(&c.shifted(k / 2, if k % 2 == 0 { 1 } else { -1 } * (rho as i32 + 1))))
                .fold(0.0, f64::max)
        };
        Ok(Self {
            window: w,
            measure: WindowMeasure::from_table(&t),
            rho,
            bias_bound: bias,
        })
    }

    /// `f(L_u)` over `n` independent ensembles.
    pub fn samples<F>(&self, u: f64, n: usize, seed: u64, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&OccupationField) -> f64 + Sync,
    {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let e = sample_ensemble(
                    self.window.clone(),
                    &self.measure,
                    u,
                    self.rho,
                    derive_seed(seed, i as u64),
                    &SampleOptions::default(),
                )?;
                Ok(f(&e.occupation_field(u)?))
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LaplaceCheck {
    pub analytic: f64,
    pub empirical: Estimate,
    pub z: f64,
    /// Relative truncation bias bound of occupation times.
    pub bias_bound: f64,
    pub variance_warning: bool,
}

/// Empirical `E[exp <L_u, V>]` against `exp(u <V, gamma_V>)`.
pub fn laplace_check(
    green: &GreenKernel,
    v: &Potential,
    u: f64,
    rho: f64,
    ensembles: usize,
    seed: u64,
) -> Result<LaplaceCheck> {
    let analytic = laplace_functional(green, v, u)?;
    if v.is_zero() {
        return Ok(LaplaceCheck {
            analytic,
            empirical: Estimate { mean: 1.0, se: 0.0, n: ensembles },
            z: 0.0,
            bias_bound: 0.0,
            variance_warning: false,
        });
    }
    let norm = g_norm(green, v);
    let s = OccupationSampler::new(&v.support(), rho)?;
    let xs = s.samples(u, ensembles, seed, |l| v.pair(|x| l.get(x)).exp())?;
    let empirical = Estimate::from_samples(&xs);
    Ok(LaplaceCheck {
        analytic,
        z: empirical.z(analytic),
        empirical,
        bias_bound: s.bias_bound,
        variance_warning: norm > 0.9,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailCheck {
    pub bound: TailBound,
    pub hits: u64,
    pub trials: u64,
    pub empirical: f64,
    /// One-sided lower confidence bound of the tail probability.
    pub lower: f64,
    pub level: f64,
    /// `lower <= bound`.
    pub consistent: bool,
}

/// Empirical `P[<L_u, V + delta eta> >= u <V', gamma_V^2> + t]` against the analytic bound.
#[allow(clippy::too_many_arguments)]
pub fn tail_check(
    green: &GreenKernel,
    v: &Potential,
    eta: &Potential,
    delta: f64,
    u: f64,
    t: f64,
    rho: f64,
    ensembles: usize,
    seed: u64,
) -> Result<TailCheck> {
    let bound = tail_bound(green, v, eta, delta, u, t)?;
    let vp = v.plus(&eta.scale(delta));
    if vp.is_zero() {
        return Err(Error::InvalidParameter("perturbed potential vanishes".into()));
    }
    let s = OccupationSampler::new(&vp.support(), rho)?;
    let thr = bound.threshold;
    let xs = s.samples(u, ensembles, seed, |l| {
        if vp.pair(|x| l.get(x)) >= thr {
            1.0
        } else {
            0.0
        }
    })?;
    let hits = xs.iter().filter(|&&x| x > 0.0).count() as u64;
    let trials = ensembles as u64;
    let level = 0.99;
    let (lower, _) = clopper_pearson(hits, trials, level);
    Ok(TailCheck {
        consistent: lower <= bound.bound,
        empirical: hits as f64 / trials as f64,
        bound,
        hits,
        trials,
        lower,
        level,
    })
}
