//! Scaled occupation measures on `B_R = [-R, R]^d` and distances between them: Wasserstein,
//! `d_R`, bounded Lipschitz. Also the mollifier family used to test measures locally.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::continuum::{sphere_area, ProfileField};
use crate::error::{Error, Result};
use crate::lattice::{DiscreteBox, LatticePoint};
use crate::sampler::OccupationField;
use crate::special::gauss_legendre_on;
use crate::transport;

/// A finite atomic measure on `B_R`, coordinates stored row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledMeasure {
    pub d: usize,
    pub r: f64,
    pub coords: Vec<f64>,
    pub masses: Vec<f64>,
}

impl ScaledMeasure {
    pub fn zero(d: usize, r: f64) -> Self {
        Self {
            d,
            r,
            coords: Vec::new(),
            masses: Vec::new(),
        }
    }

    /// Atoms outside `B_R` and zero masses are dropped.
    pub fn from_atoms<'a, I>(d: usize, r: f64, atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let mut m = Self::zero(d, r);
        for (x, w) in atoms {
            if x.len() != d {
                return Err(Error::InvalidDimension(x.len()));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter(format!("atom mass {w} is not a nonnegative number")));
            }
            if w > 0.0 && x.iter().all(|v| v.abs() <= r) {
                m.coords.extend_from_slice(x);
                m.masses.push(w);
            }
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.coords[k * self.d..(k + 1) * self.d]
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.masses.iter().enumerate().map(move |(k, &w)| (self.atom(k), w))
    }

    /// `mu(B_R)`.
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut m = self.clone();
        m.masses.iter_mut().for_each(|w| *w *= c);
        m
    }

    /// Normalized to a probability measure (`None` for the zero measure).
    pub fn normalized(&self) -> Option<Self> {
        let t = self.total();
        (t > 0.0).then(|| self.scaled(1.0 / t))
    }

    /// Integral of `f`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.atoms().map(|(x, w)| w * f(x)).sum()
    }

    /// Atoms moved to the nearest point of the grid `w Z^d` and merged. Every atom moves by at
    /// most `sqrt(d) w / 2`.
    pub fn coarsen(&self, w: f64) -> Self {
        let mut cells: HashMap<Vec<i64>, f64> = HashMap::new();
        let lim = (self.r / w).floor() as i64;
        for (x, m) in self.atoms() {
            let key: Vec<i64> = x.iter().map(|v| ((v / w).round() as i64).clamp(-lim, lim)).collect();
            *cells.entry(key).or_default() += m;
        }
        let mut keys: Vec<_> = cells.into_iter().collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = Self::zero(self.d, self.r);
        for (k, m) in keys {
            out.coords.extend(k.iter().map(|&i| i as f64 * w));
            out.masses.push(m);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let head: Vec<String> = (0..self.d).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},mass", head.join(","))?;
        for (x, m) in self.atoms() {
            let c: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{},{:.9e}", c.join(","), m)?;
        }
        Ok(())
    }
}

/// `N^{-d} sum_x L_x delta_{x/N}` restricted to `B_R`.
pub fn scaled_measure(field: &OccupationField, n: u32, r: f64) -> Result<ScaledMeasure> {
    let d = field.window.dim();
    let rad = (n as f64 * r).floor() as u32;
    let need = DiscreteBox::ball(LatticePoint::origin(d)?, rad);
    if need.points().any(|x| !field.window.contains(&x)) {
        return Err(Error::WindowTooSmall(format!(
            "window does not cover N B_R at N = {n}, R = {r}"
        )));
    }
    let nd = (n as f64).powi(d as i32);
    let mut m = ScaledMeasure::zero(d, r);
    for (x, l) in field.iter() {
        if l > 0.0 && x.sup_norm() as u32 <= rad {
            m.coords.extend(x.coords().iter().map(|&c| c as f64 / n as f64));
            m.masses.push(l / nd);
        }
    }
    Ok(m)
}

/// Midpoint discretization of the density `M^u` on the grid `Z^d / N` inside `B_R`.
pub fn profile_measure(profile: &ProfileField, d: usize, n: u32, r: f64) -> Result<ScaledMeasure> {
    let rad = (n as f64 * r).floor() as u32;
    let nd = (n as f64).powi(d as i32);
    let mut m = ScaledMeasure::zero(d, r);
    for x in DiscreteBox::ball(LatticePoint::origin(d)?, rad).points() {
        let z: Vec<f64> = x.coords().iter().map(|&c| c as f64 / n as f64).collect();
        let v = profile.at(&z)?;
        m.coords.extend_from_slice(&z);
        m.masses.push(v / nd);
    }
    Ok(m)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect()
}

/// Positive and negative parts of `mu - nu`, atoms merged by position.
fn net(mu: &ScaledMeasure, nu: &ScaledMeasure) -> (ScaledMeasure, ScaledMeasure) {
    let mut acc: HashMap<Vec<u64>, (usize, f64)> = HashMap::new();
    let mut pts: Vec<&[f64]> = Vec::new();
    for (sign, m) in [(1.0, mu), (-1.0, nu)] {
        for (x, w) in m.atoms() {
            let e = acc.entry(key(x)).or_insert_with(|| {
                pts.push(x);
                (pts.len() - 1, 0.0)
            });
            e.1 += sign * w;
        }
    }
    let floor = 1e-15 * (mu.total() + nu.total());
    let mut entries: Vec<(usize, f64)> = acc.into_values().filter(|e| e.1.abs() > floor).collect();
    entries.sort_by_key(|e| e.0);
    let (mut pos, mut neg) = (ScaledMeasure::zero(mu.d, mu.r), ScaledMeasure::zero(mu.d, mu.r));
    for (k, w) in entries {
        if w > 0.0 {
            pos.coords.extend_from_slice(pts[k]);
            pos.masses.push(w);
        } else if w < 0.0 {
            neg.coords.extend_from_slice(pts[k]);
            neg.masses.push(-w);
        }
    }
    (pos, neg)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransportValue {
    pub value: f64,
    pub gap: f64,
    pub pivots: usize,
}

/// `d_{W,B_R}(P, Q)` for probability measures.
pub fn wasserstein1(p: &ScaledMeasure, q: &ScaledMeasure) -> Result<TransportValue> {
    let (a, b) = (p.total(), q.total());
    if (a - 1.0).abs() > 1e-9 || (b - 1.0).abs() > 1e-9 {
        return Err(Error::UnbalancedMasses { a, b });
    }
    let (pos, mut neg) = net(p, q);
    let (tp, tn) = (pos.total(), neg.total());
    if tp <= 1e-14 || tn <= 1e-14 {
        return Ok(TransportValue { value: 0.0, gap: 0.0, pivots: 0 });
    }
    // roundoff of the netting is relative to the unit mass, not to the net mass
    neg.masses.iter_mut().for_each(|w| *w *= tp / tn);
    let bound = 2.0 * p.r.max(q.r) * (p.d as f64).sqrt();
    let s = transport::solve(&pos.masses, &neg.masses, bound, |i, j| dist(pos.atom(i), neg.atom(j)))?;
    Ok(TransportValue {
        value: s.cost,
        gap: s.gap,
        pivots: s.pivots,
    })
}

/// `d_{BL,R}(mu, nu)`: transport with metric `min(|x - y|, 2)` plus a ground node at distance 1
/// that absorbs any mass imbalance.
pub fn d_bl(mu: &ScaledMeasure, nu: &ScaledMeasure) -> Result<TransportValue> {
    let (pos, neg) = net(mu, nu);
    let (tp, tn) = (pos.total(), neg.total());
    let mut supply = pos.masses.clone();
    supply.push(tn);
    let mut demand = neg.masses.clone();
    demand.push(tp);
    let (n, m) = (pos.len(), neg.len());
    let s = transport::solve(&supply, &demand, 2.0, |i, j| match (i == n, j == m) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => dist(pos.atom(i), neg.atom(j)).min(2.0),
    })?;
    Ok(TransportValue {
        value: s.cost,
        gap: s.gap,
        pivots: s.pivots,
    })
}

/// `d_R(mu, nu)` with its case split; `+inf` if exactly one measure vanishes.
pub fn d_r(mu: &ScaledMeasure, nu: &ScaledMeasure) -> Result<TransportValue> {
    match (mu.normalized(), nu.normalized()) {
        (None, None) => Ok(TransportValue { value: 0.0, gap: 0.0, pivots: 0 }),
        (Some(p), Some(q)) => {
            let w = wasserstein1(&p, &q)?;
            Ok(TransportValue {
                value: (mu.total() - nu.total()).abs() + w.value,
                ..w
            })
        }
        _ => Ok(TransportValue {
            value: f64::INFINITY,
            gap: 0.0,
            pivots: 0,
        }),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistanceReport {
    /// Wasserstein distance of the normalized measures (NaN if one vanishes).
    pub d_w: f64,
    pub d_r: f64,
    pub d_bl: f64,
    pub solver: String,
    pub gap: f64,
    /// Cell width used for coarsening, if any.
    pub cell: Option<f64>,
    /// Bound on the change of `d_w` (and of `d_r`) caused by coarsening.
    pub coarsening_bound: f64,
}

/// All three distances; supports larger than `max_atoms` are coarsened to a grid `(R/k) Z^d`.
pub fn distances(mu: &ScaledMeasure, nu: &ScaledMeasure, max_atoms: usize) -> Result<DistanceReport> {
    if mu.d != nu.d || (mu.r - nu.r).abs() > 1e-12 {
        return Err(Error::InvalidParameter("measures live on different boxes".into()));
    }
    let (mut a, mut b) = (mu.clone(), nu.clone());
    let mut cell = None;
    if a.len() + b.len() > max_atoms {
        let k = (((max_atoms / 2) as f64).powf(1.0 / mu.d as f64) - 1.0) / 2.0;
        let w = mu.r / k.floor().max(1.0);
        a = a.coarsen(w);
        b = b.coarsen(w);
        cell = Some(w);
    }
    let dr = d_r(&a, &b)?;
    let bl = d_bl(&a, &b)?;
    let dw = if a.is_empty() || b.is_empty() {
        f64::NAN
    } else {
        dr.value - (a.total() - b.total()).abs()
    };
    Ok(DistanceReport {
        d_w: dw,
        d_r: dr.value,
        d_bl: bl.value,
        solver: "network-simplex".into(),
        gap: dr.gap.max(bl.gap),
        coarsening_bound: cell.map(|w| (mu.d as f64).sqrt() * w).unwrap_or(0.0),
        cell,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SandwichCheck {
    pub lower: f64,
    pub d_r: f64,
    pub upper: f64,
    /// `d_r - lower`.
    pub lower_slack: f64,
    /// `upper - d_r`.
    pub upper_slack: f64,
    pub holds: bool,
}

/// `d_BL / (m ∧ n + 1) <= d_R <= d_BL (1 + 2 ((sqrt(d) R) ∨ 1) / (m ∨ n))` with masses `m, n`.
pub fn verify_sandwich(mu: &ScaledMeasure, nu: &ScaledMeasure) -> Result<SandwichCheck> {
    let (m, n) = (mu.total(), nu.total());
    if !(m > 0.0 && n > 0.0) {
        return Err(Error::InvalidParameter("both measures need positive mass".into()));
    }
    let r = d_r(mu, nu)?;
    let bl = d_bl(mu, nu)?;
    let lower = bl.value / (m.min(n) + 1.0);
    let upper = bl.value * (1.0 + 2.0 * ((mu.d as f64).sqrt() * mu.r).max(1.0) / m.max(n));
    let tol = 1e-7;
    Ok(SandwichCheck {
        lower,
        d_r: r.value,
        upper,
        lower_slack: r.value - lower,
        upper_slack: upper - r.value,
        holds: r.value - lower >= -tol && upper - r.value >= -tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BumpKind {
    /// `(1 - |y|^2)^4` on the unit ball.
    BumpPoly4,
    /// `exp(-1 / (1 - |y|^2))` on the unit ball.
    BumpExp,
}

impl BumpKind {
    fn radial(self, r2: f64) -> f64 {
        if r2 >= 1.0 {
            return 0.0;
        }
        match self {
            BumpKind::BumpPoly4 => (1.0 - r2).powi(4),
            BumpKind::BumpExp => (-1.0 / (1.0 - r2)).exp(),
        }
    }
}

/// `chi_eps(y) = eps^{-d} chi(y / eps)` for a radial bump `chi` with unit integral.
#[derive(Clone, Debug)]
pub struct Mollifier {
    pub kind: BumpKind,
    pub d: usize,
    pub eps: f64,
    norm: f64,
}

impl Mollifier {
    pub fn new(kind: BumpKind, d: usize, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::EpsilonOutOfRange(eps));
        }
        let hd = d as f64 / 2.0;
        let integral = match kind {
            // sigma_d * B(d/2, 5) / 2
            BumpKind::BumpPoly4 => sphere_area(d) * gamma(hd) * gamma(5.0) / (2.0 * gamma(hd + 5.0)),
            BumpKind::BumpExp => {
                let (x, w) = gauss_legendre_on(256, 0.0, 1.0);
                sphere_area(d)
                    * x.iter()
                        .zip(&w)
                        .map(|(r, w)| w * r.powi(d as i32 - 1) * kind.radial(r * r))
                        .sum::<f64>()
            }
        };
        Ok(Self {
            kind,
            d,
            eps,
            norm: 1.0 / integral,
        })
    }

    /// The unit-scale density `chi`.
    pub fn chi(&self, y: &[f64]) -> f64 {
        self.norm * self.kind.radial(y.iter().map(|v| v * v).sum())
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        let r2: f64 = y.iter().map(|v| v * v).sum::<f64>() / (self.eps * self.eps);
        self.norm * self.kind.radial(r2) / self.eps.powi(self.d as i32)
    }

    /// `chi_eps(z - x/N)`.
    pub fn located(&self, z: &[f64], x: &LatticePoint, n: u32) -> f64 {
        let y: Vec<f64> = z
            .iter()
            .zip(x.coords())
            .map(|(a, &c)| a - c as f64 / n as f64)
            .collect();
        self.value(&y)
    }

    /// `int chi(y) |y| dy`.
    pub fn first_moment(&self) -> f64 {
        let (x, w) = gauss_legendre_on(256, 0.0, 1.0);
        self.norm
            * sphere_area(self.d)
            * x.iter()
                .zip(&w)
                .map(|(r, w)| w * r.powi(self.d as i32) * self.kind.radial(r * r))
                .sum::<f64>()
    }

    /// `eta^eps_N(x) = N^{-d} sum_y chi_eps(x - y/N) eta(y/N)`, with `eta` zero outside `B_R`.
    pub fn convolve<F: Fn(&[f64]) -> f64>(&self, eta: F, r: f64, n: u32, x: &[f64]) -> f64 {
        let d = self.d;
        let nf = n as f64;
        let lo: Vec<i64> = x.iter().map(|v| ((v - self.eps) * nf).floor() as i64).collect();
        let hi: Vec<i64> = x.iter().map(|v| ((v + self.eps) * nf).ceil() as i64).collect();
        let mut cur = lo.clone();
        let mut y = vec![0.0; d];
        let mut diff = vec![0.0; d];
        let mut s = 0.0;
        'outer: loop {
            for i in 0..d {
                y[i] = cur[i] as f64 / nf;
                diff[i] = x[i] - y[i];
            }
            if y.iter().all(|v| v.abs() <= r) {
                let c = self.value(&diff);
                if c > 0.0 {
                    s += c * eta(&y);
                }
            }
            for i in (0..d).rev() {
                cur[i] += 1;
                if cur[i] <= hi[i] {
                    continue 'outer;
                }
                cur[i] = lo[i];
            }
            break;
        }
        s / nf.powi(d as i32)
    }
}
