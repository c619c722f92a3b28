//! Finite-N comparison of the occupation field with the profile `M^u`, with and without
//! conditioning on disconnection.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuum::{ProfileBase, ProfileField};
use crate::disconnection::DisconnectionLab;
use crate::error::{Error, Result};
use crate::lattice::{blow_up, DiscreteBox, LatticePoint};
use crate::metrics::{d_bl, d_r, profile_measure, scaled_measure, ScaledMeasure};
use crate::shape::CompactSet;
use crate::stats::{bootstrap_median, Estimate};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntropicConfig {
    pub set: CompactSet,
    pub n: u32,
    pub m: f64,
    pub u: f64,
    /// Radius of the comparison box `B_R`; needs `M <= R`.
    pub r: f64,
    /// Grid width the measures are coarsened to before transport.
    pub cell: f64,
    /// Candidate values for `u_bar`, all above `u`.
    pub u_bar_grid: Vec<f64>,
    /// Replica budget for the rejection sampler.
    pub budget: usize,
    /// Conditioned replicas required.
    pub min_hits: usize,
    /// Unconditioned replicas used for the comparison (taken in seed order).
    pub unconditioned: usize,
    pub seed: u64,
    pub rho: Option<f64>,
    pub bootstrap: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistanceRow {
    pub replica: usize,
    pub seed: u64,
    pub occurred: bool,
    /// `fit`, `eval` or `all`.
    pub role: String,
    pub d_r: f64,
    pub d_bl: f64,
    /// `d_R` to the flat measure `u Leb`.
    pub d_r_flat: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntropicReport {
    pub u: f64,
    pub u_bar_fit: f64,
    /// Median `d_R` to `M^u` on the fitting half for each candidate.
    pub fit_curve: Vec<(f64, f64)>,
    pub hits: usize,
    pub tries: usize,
    /// Average over `A_N` of the conditional occupation, minus `u`.
    pub excess_a: Estimate,
    pub median_conditioned: Estimate,
    pub median_unconditioned: Estimate,
    pub median_unconditioned_flat: Estimate,
    /// `(median_unconditioned - median_conditioned) / combined se`.
    pub z_distance: f64,
    pub z_excess: f64,
    pub rows: Vec<DistanceRow>,
}

impl EntropicReport {
    pub fn write_rows_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "replica,seed,occurred,role,d_r,d_bl,d_r_flat")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{:.12e},{:.12e},{:.12e}",
                r.replica, r.seed, r.occurred, r.role, r.d_r, r.d_bl, r.d_r_flat
            )?;
        }
        Ok(())
    }
}

impl EntropicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m <= self.r) {
            return Err(Error::InvalidParameter(format!("need M = {} <= R = {}", self.m, self.r)));
        }
        if !(self.cell > 0.0) {
            return Err(Error::InvalidParameter("cell width must be positive".into()));
        }
        if self.u_bar_grid.is_empty() || self.u_bar_grid.iter().any(|&b| !(b > self.u)) {
            return Err(Error::InvalidParameter("u_bar candidates must exceed u".into()));
        }
        if self.min_hits < 2 {
            return Err(Error::InvalidParameter("need at least two conditioned replicas".into()));
        }
        Ok(())
    }
}

fn profile_cells(cfg: &EntropicConfig, u_bar: f64) -> Result<ScaledMeasure> {
    let p = ProfileField::new(cfg.u, u_bar, ProfileBase::Continuum(cfg.set.clone()))?;
    Ok(profile_measure(&p, cfg.set.dim(), cfg.n, cfg.r)?.coarsen(cfg.cell))
}

/// `u Leb` discretized like the profile.
fn flat_cells(cfg: &EntropicConfig) -> Result<ScaledMeasure> {
    let d = cfg.set.dim();
    let rad = (cfg.n as f64 * cfg.r).floor() as u32;
    let nd = (cfg.n as f64).powi(d as i32);
    let mut m = ScaledMeasure::zero(d, cfg.r);
    for x in DiscreteBox::ball(LatticePoint::origin(d)?, rad).points() {
        m.coords.extend(x.coords().iter().map(|&c| c as f64 / cfg.n as f64));
        m.masses.push(cfg.u / nd);
    }
    Ok(m.coarsen(cfg.cell))
}

/// Samples replicas until `min_hits` disconnect, fits `u_bar` on half of them and compares
/// `d_R` to `M^u` on the other half with unconditioned replicas.
pub fn profile_distance_pipeline(cfg: &EntropicConfig) -> Result<EntropicReport> {
    cfg.validate()?;
    let pair = blow_up(&cfg.set, cfg.m, cfg.n)?;
    let lab = DisconnectionLab::new(pair, cfg.rho)?;
    let (n, r, cell) = (cfg.n, cfg.r, cfg.cell);
    let reps = lab.replicas(
        cfg.u,
        cfg.seed,
        cfg.budget.max(cfg.unconditioned),
        cfg.min_hits,
        |res, _| res.occurred,
        |field| scaled_measure(field, n, r).map(|m| m.coarsen(cell)),
    )?;
    let mut cond = Vec::new();
    let mut uncond = Vec::new();
    for (i, rep) in reps.iter().enumerate() {
        let m = rep.obs.as_ref().map_err(|e| Error::WindowTooSmall(e.to_string()))?;
        if rep.hit {
            cond.push((i, m));
        }
        if i < cfg.unconditioned {
            uncond.push((i, m));
        }
    }
    let (fit, eval): (Vec<_>, Vec<_>) = cond.iter().enumerate().partition(|(k, _)| k % 2 == 0);
    let fit: Vec<_> = fit.into_iter().map(|(_, c)| *c).collect();
    let eval: Vec<_> = eval.into_iter().map(|(_, c)| *c).collect();

    let dist_r = |a: &ScaledMeasure, b: &ScaledMeasure| d_r(a, b).map(|t| t.value);
    let mut fit_curve = Vec::new();
    for &ub in &cfg.u_bar_grid {
        let prof = profile_cells(cfg, ub)?;
        let ds: Vec<f64> = fit.par_iter().map(|(_, m)| dist_r(m, &prof)).collect::<Result<_>>()?;
        fit_curve.push((ub, crate::stats::median(&ds)));
    }
    let (u_bar_fit, _) = fit_curve
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
    let prof = profile_cells(cfg, u_bar_fit)?;
    let flat = flat_cells(cfg)?;
    let row = |(i, m): &(usize, &ScaledMeasure), role: &str| -> Result<DistanceRow> {
        Ok(DistanceRow {
            replica: *i,
            seed: reps[*i].seed,
            occurred: reps[*i].occurred,
            role: role.to_string(),
            d_r: dist_r(m, &prof)?,
            d_bl: d_bl(m, &prof)?.value,
            d_r_flat: dist_r(m, &flat)?,
        })
    };
    let mut rows: Vec<DistanceRow> = fit.par_iter().map(|c| row(c, "fit")).collect::<Result<_>>()?;
    let eval_rows: Vec<DistanceRow> = eval.par_iter().map(|c| row(c, "eval")).collect::<Result<_>>()?;
    let all_rows: Vec<DistanceRow> = uncond.par_iter().map(|c| row(c, "all")).collect::<Result<_>>()?;

    let pick = |rs: &[DistanceRow], f: fn(&DistanceRow) -> f64| rs.iter().map(f).collect::<Vec<f64>>();
    let mc = bootstrap_median(&pick(&eval_rows, |r| r.d_r), cfg.bootstrap, cfg.seed ^ 0x5eed_0001);
    let mu = bootstrap_median(&pick(&all_rows, |r| r.d_r), cfg.bootstrap, cfg.seed ^ 0x5eed_0002);
    let mf = bootstrap_median(&pick(&all_rows, |r| r.d_r_flat), cfg.bootstrap, cfg.seed ^ 0x5eed_0003);
    let a_len = lab.geo.a_indices().len() as f64;
    let cond_a: Vec<f64> = reps.iter().filter(|x| x.hit).map(|x| x.sum_a / a_len - cfg.u).collect();
    let excess_a = Estimate::from_samples(&cond_a);
    rows.extend(eval_rows);
    rows.extend(all_rows);
    Ok(EntropicReport {
        u: cfg.u,
        u_bar_fit,
        fit_curve,
        hits: cond.len(),
        tries: reps.len(),
        z_distance: (mu.mean - mc.mean) / (mu.se * mu.se + mc.se * mc.se).sqrt(),
        z_excess: excess_a.mean / excess_a.se,
        excess_a,
        median_conditioned: mc,
        median_unconditioned: mu,
        median_unconditioned_flat: mf,
        rows,
    })
}
