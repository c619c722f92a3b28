//! Equilibrium measures, capacities, harmonic potentials and the discrete Dirichlet form.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{c_d, GreenKernel, GreenTable, DEFAULT_TOL};
use crate::lattice::LatticePoint;
use crate::pointset::PointSet;
use crate::rng::{stream_rng, NeighborDraw};
use crate::symmetry::SymmetryGroup;

/// Finitely supported real function on the lattice.
pub type SparseFn = HashMap<LatticePoint, f64>;

/// Anything that can produce Green function values.
pub trait GreenSource {
    fn green_at(&self, x: &LatticePoint) -> Result<f64>;
}

impl GreenSource for GreenKernel {
    fn green_at(&self, x: &LatticePoint) -> Result<f64> {
        Ok(self.value(x))
    }
}

impl GreenSource for GreenTable {
    fn green_at(&self, x: &LatticePoint) -> Result<f64> {
        self.get(x)
    }
}

/// `(G V f)(x) = sum_y g(x, y) V(y) f(y)` at each query point.
pub fn apply_g<S: GreenSource, F: Fn(&LatticePoint) -> f64>(
    green: &S,
    v: &SparseFn,
    f: F,
    at: &[LatticePoint],
) -> Result<Vec<f64>> {
    let terms: Vec<(LatticePoint, f64)> = v
        .iter()
        .filter(|(_, &w)| w != 0.0)
        .map(|(y, &w)| (*y, w * f(y)))
        .collect();
    at.iter()
        .map(|x| {
            terms
                .iter()
                .try_fold(0.0, |acc, (y, w)| Ok(acc + green.green_at(&y.sub(x))? * w))
        })
        .collect()
}

/// `(1/4d) sum_{x ~ y} (f(y) - f(x)) (g(y) - g(x))`, ordered pairs, finitely supported inputs.
pub fn dirichlet_form(f: &SparseFn, g: &SparseFn) -> f64 {
    let d = match f.keys().chain(g.keys()).next() {
        Some(p) => p.dim(),
        None => return 0.0,
    };
    let get = |m: &SparseFn, p: &LatticePoint| m.get(p).copied().unwrap_or(0.0);
    let mut support: Vec<LatticePoint> = f.keys().chain(g.keys()).copied().collect();
    support.sort();
    support.dedup();
    let in_support: std::collections::HashSet<LatticePoint> = support.iter().copied().collect();
    let mut acc = 0.0;
    for x in &support {
        for y in x.neighbors() {
            let term = (get(f, &y) - get(f, x)) * (get(g, &y) - get(g, x));
            // edges with both ends in the support are visited from each end
            acc += if in_support.contains(&y) { term } else { 2.0 * term };
        }
    }
    acc / (4.0 * d as f64)
}

/// Dirichlet energy `E(f, f)` of a function that is harmonic off the finite set `lambda` and
/// vanishes at infinity. Only values on `lambda` and its outer boundary are used; the exterior
/// edges are summed exactly by parts.
pub fn energy_harmonic_outside<F: Fn(&LatticePoint) -> f64>(lambda: &PointSet, f: F) -> f64 {
    let d = lambda.dim() as f64;
    let mut inner = 0.0;
    let mut bd = 0.0;
    let mut ext = 0.0;
    for x in lambda.points() {
        let fx = f(x);
        for y in x.neighbors() {
            let fy = f(&y);
            if lambda.contains(&y) {
                inner += 0.5 * (fy - fx) * (fy - fx);
            } else {
                bd += (fy - fx) * (fy - fx);
                ext -= fy * (fy - fx);
            }
        }
    }
    (inner + bd + ext) / (2.0 * d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug)]
pub struct EquilibriumParams {
    /// `None` picks exact when the reduced system has at most `exact_limit` unknowns.
    pub backend: Option<Backend>,
    pub exact_limit: usize,
    pub tol: f64,
    /// Walks per boundary point for the Monte Carlo backend.
    pub mc_walks: u64,
    /// Killing radius for escape walks; default `8 diam + 64`.
    pub rho: Option<f64>,
    pub seed: u64,
    /// Total step budget for Monte Carlo.
    pub max_steps: u64,
    /// Shared Green kernel; built on demand when absent.
    pub green: Option<Arc<GreenKernel>>,
    /// Extra range for the on-demand kernel beyond the extent of `K`.
    pub kernel_margin: usize,
    pub use_symmetry: bool,
}

impl Default for EquilibriumParams {
    fn default() -> Self {
        Self {
            backend: None,
            exact_limit: 4096,
            tol: DEFAULT_TOL,
            mc_walks: 4000,
            rho: None,
            seed: 1,
            max_steps: 20_000_000_000,
            green: None,
            kernel_margin: 16,
            use_symmetry: true,
        }
    }
}

/// Equilibrium data of a finite set.
#[derive(Clone, Debug)]
pub struct PotentialTable {
    pub set: PointSet,
    /// Sites carrying equilibrium mass with their values (inner boundary of `K`).
    pub support: Vec<(LatticePoint, f64)>,
    /// Standard errors per support site (zero for the exact backend).
    pub se: Vec<f64>,
    pub cap: f64,
    pub cap_se: f64,
    pub backend: Backend,
    /// Monte Carlo truncation radius.
    pub rho: Option<f64>,
    /// Bound on the truncation bias of `cap` (zero for exact).
    pub bias_bound: f64,
    /// `max |G e - 1|` over the support (exact backend).
    pub residual: f64,
    pub green: Arc<GreenKernel>,
    index: HashMap<LatticePoint, usize>,
}

impl PotentialTable {
    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn e(&self, x: &LatticePoint) -> f64 {
        self.index.get(x).map(|&i| self.support[i].1).unwrap_or(0.0)
    }

    /// Normalized equilibrium measure `e_K / cap`.
    pub fn e_bar(&self) -> Vec<(LatticePoint, f64)> {
        self.support.iter().map(|(x, v)| (*x, v / self.cap)).collect()
    }

    /// `h_K(x) = sum_y g(x, y) e_K(y)`, equal to 1 on `K`.
    pub fn h(&self, x: &LatticePoint) -> f64 {
        if self.set.contains(x) {
            return 1.0;
        }
        let v: f64 = self
            .support
            .iter()
            .map(|(y, e)| self.green.value(&y.sub(x)) * e)
            .sum();
        v.clamp(0.0, 1.0)
    }

    /// `h_K` over a window, evaluated in parallel.
    pub fn h_on(&self, window: &[LatticePoint]) -> Vec<f64> {
        window.par_iter().map(|x| self.h(x)).collect()
    }

    /// Writes `x_1,..,x_d,e,h` rows for the given window (support sites always included).
    pub fn write_csv<W: Write>(&self, mut w: W, window: &[LatticePoint]) -> Result<()> {
        let d = self.dim();
        let head: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},e,h", head.join(","))?;
        let mut pts: Vec<LatticePoint> = self.support.iter().map(|(x, _)| *x).collect();
        pts.extend(window.iter().copied());
        pts.sort();
        pts.dedup();
        let h = self.h_on(&pts);
        for (x, hv) in pts.iter().zip(h) {
            let c: Vec<String> = x.coords().iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{:.12e},{:.12e}", c.join(","), self.e(x), hv)?;
        }
        Ok(())
    }
}

fn kernel_for(points: &PointSet, p: &EquilibriumParams) -> Result<Arc<GreenKernel>> {
    if let Some(g) = &p.green {
        return Ok(g.clone());
    }
    let ext = points.bounding_box().sides().iter().copied().max().unwrap_or(1) as usize;
    Ok(Arc::new(GreenKernel::new(points.dim(), ext + p.kernel_margin, p.tol)?))
}

/// Equilibrium measure and capacity of the finite set `k`.
pub fn equilibrium(k: &[LatticePoint], params: &EquilibriumParams) -> Result<PotentialTable> {
    if k.is_empty() {
        return Err(Error::InvalidParameter("equilibrium of an empty set".into()));
    }
    let set = PointSet::new(k);
    let green = kernel_for(&set, params)?;
    let boundary = set.inner_boundary();
    let group = if params.use_symmetry {
        SymmetryGroup::of(&set)
    } else {
        SymmetryGroup::trivial(set.dim())
    };
    let orbits = group.orbits(&boundary);
    let backend = params.backend.unwrap_or(if orbits.len() <= params.exact_limit {
        Backend::Exact
    } else {
        Backend::MonteCarlo
    });
    match backend {
        Backend::Exact => {
            if orbits.len() > params.exact_limit {
                return Err(Error::MethodUnavailable(format!(
                    "exact backend limited to {} unknowns, got {}",
                    params.exact_limit,
                    orbits.len()
                )));
            }
            exact(set, green, orbits)
        }
        Backend::MonteCarlo => monte_carlo(set, green, boundary, params),
    }
}

fn finish(
    set: PointSet,
    green: Arc<GreenKernel>,
    support: Vec<(LatticePoint, f64)>,
    se: Vec<f64>,
    backend: Backend,
    rho: Option<f64>,
    bias_bound: f64,
    residual: f64,
) -> PotentialTable {
    let cap = support.iter().map(|(_, v)| v).sum();
    let cap_se = se.iter().map(|s| s * s).sum::<f64>().sqrt();
    let index = support.iter().enumerate().map(|(i, (x, _))| (*x, i)).collect();
    PotentialTable {
        set,
        support,
        se,
        cap,
        cap_se,
        backend,
        rho,
        bias_bound,
        residual,
        green,
        index,
    }
}

fn exact(set: PointSet, green: Arc<GreenKernel>, orbits: Vec<Vec<LatticePoint>>) -> Result<PotentialTable> {
    let m = orbits.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let r = orbits[i][0];
            orbits
                .iter()
                .map(|o| o.iter().map(|y| green.value(&y.sub(&r))).sum())
                .collect()
        })
        .collect();
    let a = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
    let b = DVector::from_element(m, 1.0);
    let sol = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularSystem(format!("{m}x{m} orbit system")))?;
    let residual = (&a * &sol - &b).amax();
    let mut support = Vec::new();
    for (o, v) in orbits.iter().zip(sol.iter()) {
        for x in o {
            support.push((*x, *v));
        }
    }
    support.sort_by(|a, b| a.0.cmp(&b.0));
    let n = support.len();
    Ok(finish(set, green, support, vec![0.0; n], Backend::Exact, None, 0.0, residual))
}

/// Escape-probability estimator. A walk that leaves the killing ball at `y` contributes
/// `1 - cap0 * g(y - c)` instead of 1, which removes the leading return bias.
fn monte_carlo(
    set: PointSet,
    green: Arc<GreenKernel>,
    boundary: Vec<LatticePoint>,
    p: &EquilibriumParams,
) -> Result<PotentialTable> {
    let d = set.dim();
    let diam = set.diameter();
    let rho = p.rho.unwrap_or(8.0 * diam + 64.0);
    let center = set.center_point();
    let r_set = set.sup_radius() as f64;
    if rho <= r_set + 1.0 {
        return Err(Error::RhoTooSmall { rho, needed: r_set + 1.0 });
    }
    let rho_i = rho.floor() as i32;
    let cen = set.center();
    let n = p.mc_walks.max(1);
    let budget_per_point = p.max_steps / boundary.len().max(1) as u64;
    let cd = c_d(d);
    let g_far = |y: &LatticePoint| {
        let r2: f64 = (0..d).map(|i| (y.coord(i) as f64 - cen[i]).powi(2)).sum();
        cd / r2.sqrt().powi(d as i32 - 2)
    };
    // (escapes, sum of far-green at exits, sum of squares, steps)
    let raw: Vec<Result<(f64, f64, f64, f64)>> = boundary
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = stream_rng(p.seed, i as u64 + 1);
            let (mut esc, mut sw, mut sww) = (0.0, 0.0, 0.0);
            let mut steps = 0u64;
            let mut draw = NeighborDraw::default();
            for _ in 0..n {
                let mut y = x.neighbor(draw.next(&mut rng, d));
                loop {
                    if set.contains(&y) {
                        break;
                    }
                    if y.sub(&center).sup_norm() > rho_i {
                        let w = g_far(&y);
                        esc += 1.0;
                        sw += w;
                        sww += w * w;
                        break;
                    }
                    y = y.neighbor(draw.next(&mut rng, d));
                    steps += 1;
                }
                if steps > budget_per_point {
                    return Err(Error::BudgetExhausted { used: steps });
                }
            }
            Ok((esc, sw, sww, steps as f64))
        })
        .collect();
    let raw: Vec<(f64, f64, f64, f64)> = raw.into_iter().collect::<Result<_>>()?;
    let nf = n as f64;
    let cap0: f64 = raw.iter().map(|r| r.0 / nf).sum();
    let mut support = Vec::with_capacity(boundary.len());
    let mut se = Vec::with_capacity(boundary.len());
    for (x, (esc, sw, sww, _)) in boundary.iter().zip(&raw) {
        // per-walk value v = 1{esc} (1 - cap0 w)
        let s1 = esc - cap0 * sw;
        let s2 = esc - 2.0 * cap0 * sw + cap0 * cap0 * sww;
        let mean = s1 / nf;
        let var = (s2 / nf - mean * mean).max(0.0);
        support.push((*x, mean.max(0.0)));
        se.push((var / nf).sqrt());
    }
    let bias = cap0 * cd * d as f64 / rho.powi(d as i32 - 2);
    let mut order: Vec<usize> = (0..support.len()).collect();
    order.sort_by(|&a, &b| support[a].0.cmp(&support[b].0));
    let support: Vec<_> = order.iter().map(|&i| support[i]).collect();
    let se: Vec<_> = order.iter().map(|&i| se[i]).collect();
    Ok(finish(set, green, support, se, Backend::MonteCarlo, Some(rho), bias, f64::NAN))
}

/// Capacity of a finite set with the default (auto) backend.
pub fn capacity(k: &[LatticePoint]) -> Result<f64> {
    Ok(equilibrium(k, &EquilibriumParams::default())?.cap)
}
