//! Gauge functions `gamma_V = (I - G V)^{-1} 1`, perturbation identities and the
//! exponential tail bound for occupation-time functionals.
//!
//! `G V` has finite rank, so every operator identity is evaluated exactly on the joint
//! support of the potentials involved; values elsewhere follow from `f = 1 + G V f`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::GreenKernel;
use crate::lattice::{DiscreteBox, LatticePoint};
use crate::pointset::PointSet;
use crate::potential::energy_harmonic_outside;

/// Refuse potentials with `||G|V|||_inf` above this margin.
pub const ADMISSIBLE_MARGIN: f64 = 0.999;

/// Finitely supported real potential.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    /// Sorted by site, no zero values, no duplicate sites.
    entries: Vec<(LatticePoint, f64)>,
}

impl Potential {
    pub fn new(entries: impl IntoIterator<Item = (LatticePoint, f64)>) -> Self {
        let mut m: std::collections::BTreeMap<LatticePoint, f64> = Default::default();
        for (x, v) in entries {
            *m.entry(x).or_insert(0.0) += v;
        }
        Self {
            entries: m.into_iter().filter(|(_, v)| *v != 0.0).collect(),
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn delta(x: LatticePoint, s: f64) -> Self {
        Self::new([(x, s)])
    }

    pub fn entries(&self) -> &[(LatticePoint, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, x: &LatticePoint) -> f64 {
        self.entries
            .binary_search_by(|(y, _)| y.cmp(x))
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn support(&self) -> Vec<LatticePoint> {
        self.entries.iter().map(|(x, _)| *x).collect()
    }

    pub fn abs(&self) -> Self {
        Self::new(self.entries.iter().map(|(x, v)| (*x, v.abs())))
    }

    pub fn scale(&self, a: f64) -> Self {
        Self::new(self.entries.iter().map(|(x, v)| (*x, a * v)))
    }

    pub fn plus(&self, other: &Potential) -> Self {
        Self::new(self.entries.iter().chain(other.entries.iter()).copied())
    }

    pub fn minus(&self, other: &Potential) -> Self {
        self.plus(&other.scale(-1.0))
    }

    /// `<|V|, 1>`.
    pub fn l1(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v.abs()).sum()
    }

    /// `<V, f>`.
    pub fn pair<F: Fn(&LatticePoint) -> f64>(&self, f: F) -> f64 {
        self.entries.iter().map(|(x, v)| v * f(x)).sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.entries.iter().all(|(_, v)| *v >= 0.0)
    }
}

/// Dense linear algebra on a fixed finite site list.
struct Support<'a> {
    sites: Vec<LatticePoint>,
    g: DMatrix<f64>,
    green: &'a GreenKernel,
}

impl<'a> Support<'a> {
    fn new(green: &'a GreenKernel, pots: &[&Potential]) -> Self {
        let set: BTreeSet<LatticePoint> = pots.iter().flat_map(|p| p.support()).collect();
        let sites: Vec<LatticePoint> = set.into_iter().collect();
        let n = sites.len();
        let g = DMatrix::from_fn(n, n, |i, j| green.value(&sites[j].sub(&sites[i])));
        Self { sites, g, green }
    }

    fn diag(&self, v: &Potential) -> DVector<f64> {
        DVector::from_iterator(self.sites.len(), self.sites.iter().map(|x| v.get(x)))
    }

    /// `G diag(v)` restricted to the sites.
    fn gv(&self, v: &Potential) -> DMatrix<f64> {
        let dv = self.diag(v);
        let mut m = self.g.clone();
        for j in 0..m.ncols() {
            m.column_mut(j).scale_mut(dv[j]);
        }
        m
    }

    fn solve(&self, a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = a.nrows();
        a.lu()
            .solve(b)
            .ok_or_else(|| Error::SingularSystem(format!("{n}x{n} gauge system")))
    }

    /// `(I - G diag(v))^{-1} b` on the sites.
    fn resolvent(&self, v: &Potential, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.sites.len();
        self.solve(DMatrix::identity(n, n) - self.gv(v), b)
    }

    /// `sum_y g(x, y) w(y)` for a vector on the sites.
    fn potential_at(&self, x: &LatticePoint, w: &DVector<f64>) -> f64 {
        self.sites
            .iter()
            .zip(w.iter())
            .filter(|(_, &c)| c != 0.0)
            .map(|(y, c)| self.green.value(&y.sub(x)) * c)
            .sum()
    }

    fn ones(&self) -> DVector<f64> {
        DVector::from_element(self.sites.len(), 1.0)
    }
}

/// `||G|V|||_inf`, attained on the support of `V` by the maximum principle.
pub fn g_norm(green: &GreenKernel, v: &Potential) -> f64 {
    if v.is_zero() {
        return 0.0;
    }
    let s = Support::new(green, &[v]);
    let w = s.diag(&v.abs());
    (&s.g * w).amax()
}

/// `||(I - G|V|)^{-1} G|W|||_inf`, attained on the joint support.
pub fn resolvent_norm(green: &GreenKernel, v: &Potential, w: &Potential) -> Result<f64> {
    if w.is_zero() {
        return Ok(0.0);
    }
    let s = Support::new(green, &[v, w]);
    let gw = &s.g * s.diag(&w.abs());
    Ok(s.resolvent(&v.abs(), &gw)?.amax())
}

fn check_admissible(green: &GreenKernel, v: &Potential) -> Result<f64> {
    let n = g_norm(green, v);
    if n >= ADMISSIBLE_MARGIN {
        return Err(Error::InadmissiblePotential { norm: n });
    }
    Ok(n)
}

/// Gauge function of an admissible potential, evaluable anywhere.
#[derive(Clone, Debug)]
pub struct Gauge {
    pub v: Potential,
    sites: Vec<LatticePoint>,
    /// `gamma_V` on the support sites.
    values: Vec<f64>,
    /// `V gamma_V` on the support sites.
    mu: Vec<f64>,
    pub g_norm: f64,
    /// 1-norm condition number estimate of `I - G V` on the support.
    pub condition: f64,
}

impl Gauge {
    pub fn new(green: &GreenKernel, v: &Potential) -> Result<Self> {
        let g_norm = check_admissible(green, v)?;
        if v.is_zero() {
            return Ok(Self {
                v: v.clone(),
                sites: vec![],
                values: vec![],
                mu: vec![],
                g_norm,
                condition: 1.0,
            });
        }
        let s = Support::new(green, &[v]);
        let n = s.sites.len();
        let a = DMatrix::identity(n, n) - s.gv(v);
        let condition = match a.clone().try_inverse() {
            Some(inv) => one_norm(&a) * one_norm(&inv),
            None => f64::INFINITY,
        };
        let gamma = s.solve(a, &s.ones())?;
        let dv = s.diag(v);
        let mu: Vec<f64> = gamma.iter().zip(dv.iter()).map(|(g, v)| g * v).collect();
        Ok(Self {
            v: v.clone(),
            sites: s.sites,
            values: gamma.iter().copied().collect(),
            mu,
            g_norm,
            condition,
        })
    }

    /// `gamma_V(x) = 1 + sum_y g(x, y) V(y) gamma_V(y)`.
    pub fn value(&self, green: &GreenKernel, x: &LatticePoint) -> f64 {
        if let Ok(i) = self.sites.binary_search(x) {
            return self.values[i];
        }
        1.0 + self
            .sites
            .iter()
            .zip(&self.mu)
            .map(|(y, m)| green.value(&y.sub(x)) * m)
            .sum::<f64>()
    }

    pub fn on_support(&self) -> Vec<(LatticePoint, f64)> {
        self.sites.iter().copied().zip(self.values.iter().copied()).collect()
    }

    /// `<V, gamma_V>`.
    pub fn pairing(&self) -> f64 {
        self.mu.iter().sum()
    }

    /// `<V, gamma_V^2>`.
    pub fn pairing_sq(&self) -> f64 {
        self.mu.iter().zip(&self.values).map(|(m, g)| m * g).sum()
    }

    /// `||gamma_V||_inf`. `gamma_V - 1` is a potential of the signed measure `V gamma_V`, so the
    /// extremes of `gamma_V` over `Z^d` are attained on the support or equal the limit 1.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(1.0f64, |m, v| m.max(v.abs()))
    }

    /// `E(gamma_V - 1)` from lattice edges: exact inner sum on a padded window plus the
    /// exterior summed by parts (`gamma_V - 1` is harmonic off the support and vanishes at infinity).
    pub fn dirichlet_energy(&self, green: &GreenKernel) -> f64 {
        if self.sites.is_empty() {
            return 0.0;
        }
        let window = padded_window(&self.sites, 2);
        energy_harmonic_outside(&window, |x| self.value(green, x) - 1.0)
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn padded_window(sites: &[LatticePoint], pad: u32) -> PointSet {
    let ps = PointSet::new(sites);
    let b = ps.bounding_box();
    let d = b.dim();
    let shift = LatticePoint::new(&vec![-(pad as i32); d]).expect("dimension checked");
    let sides: Vec<u32> = b.sides().iter().map(|s| s + 2 * pad).collect();
    PointSet::from_box(&DiscreteBox::new(b.anchor().add(&shift), &sides).expect("valid box"))
}

/// Convenience: `gamma_V` at each query point.
pub fn gauge(green: &GreenKernel, v: &Potential, window: &[LatticePoint]) -> Result<GaugeResult> {
    let g = Gauge::new(green, v)?;
    Ok(GaugeResult {
        gamma: window.iter().map(|x| (*x, g.value(green, x))).collect(),
        pairing: g.pairing(),
        dirichlet: g.dirichlet_energy(green),
        g_norm: g.g_norm,
        condition: g.condition,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaugeResult {
    pub gamma: Vec<(LatticePoint, f64)>,
    pub pairing: f64,
    pub dirichlet: f64,
    pub g_norm: f64,
    pub condition: f64,
}

/// Residuals of the three perturbation identities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationReport {
    /// `max |gamma' - gamma - (I - GV)^{-1} G (V' - V) gamma'|`
    pub first: f64,
    /// `|<V', gamma'> - <V, gamma> - <(V' - V) gamma, gamma'>|`
    pub second: f64,
    /// `max |gamma' - (I - (I - GV)^{-1} G (V' - V))^{-1} gamma|`, absent when skipped
    pub third: Option<f64>,
    /// `||(I - G|V|)^{-1} G|V' - V|||_inf`
    pub perturbation_norm: f64,
    pub third_skipped: bool,
    pub g_norm_v: f64,
    pub g_norm_vp: f64,
}

impl PerturbationReport {
    pub fn max_residual(&self) -> f64 {
        self.first.max(self.second).max(self.third.unwrap_or(0.0))
    }
}

/// Checks the perturbation identities on the joint support and at extra `probes`.
pub fn verify_perturbation(
    green: &GreenKernel,
    v: &Potential,
    vp: &Potential,
    probes: &[LatticePoint],
) -> Result<PerturbationReport> {
    let g_norm_v = check_admissible(green, v)?;
    let g_norm_vp = check_admissible(green, vp)?;
    let diff = vp.minus(v);
    if v.is_zero() && vp.is_zero() {
        return Ok(PerturbationReport {
            first: 0.0,
            second: 0.0,
            third: Some(0.0),
            perturbation_norm: 0.0,
            third_skipped: false,
            g_norm_v,
            g_norm_vp,
        });
    }
    let s = Support::new(green, &[v, vp]);
    let n = s.sites.len();
    // independent solves for gamma_V and gamma_V'
    let gam = Gauge::new(green, v)?;
    let gamp = Gauge::new(green, vp)?;
    let gs: DVector<f64> = DVector::from_iterator(n, s.sites.iter().map(|x| gam.value(green, x)));
    let gps: DVector<f64> = DVector::from_iterator(n, s.sites.iter().map(|x| gamp.value(green, x)));
    let dd = s.diag(&diff);
    let dv = s.diag(v);

    // first identity: rhs = (I - GV)^{-1} G D gamma'
    let f = &s.g * dd.component_mul(&gps);
    let rhs = s.resolvent(v, &f)?;
    let mut first = (&gps - &gs - &rhs).amax();
    // off-support extension: psi(x) = f(x) + G V psi, with f = G D gamma'
    let w_f = dd.component_mul(&gps);
    let w_psi = dv.component_mul(&rhs);
    for x in probes {
        let psi = s.potential_at(x, &w_f) + s.potential_at(x, &w_psi);
        let r = gamp.value(green, x) - gam.value(green, x) - psi;
        first = first.max(r.abs());
    }

    // second identity
    let lhs = gamp.pairing() - gam.pairing();
    let r2: f64 = (0..n).map(|i| dd[i] * gs[i] * gps[i]).sum();
    let second = (lhs - r2).abs();

    // third identity
    let perturbation_norm = resolvent_norm(green, v, &diff)?;
    let (third, third_skipped) = if perturbation_norm < 1.0 {
        let gd = s.gv(&diff);
        let lu_rhs = DMatrix::identity(n, n) - s.gv(v);
        let t = lu_rhs
            .lu()
            .solve(&gd)
            .ok_or_else(|| Error::SingularSystem("resolvent".into()))?;
        let psi = s.solve(DMatrix::identity(n, n) - t, &gs)?;
        let mut r3 = (&gps - &psi).amax();
        // off support: psi = gamma + (I - GV)^{-1} G D psi = gamma + G(D psi + V chi), chi = T psi
        let chi = s.resolvent(v, &(&s.g * dd.component_mul(&psi)))?;
        let w1 = dd.component_mul(&psi);
        let w2 = dv.component_mul(&chi);
        for x in probes {
            let val = gam.value(green, x) + s.potential_at(x, &w1) + s.potential_at(x, &w2);
            r3 = r3.max((gamp.value(green, x) - val).abs());
        }
        (Some(r3), false)
    } else {
        (None, true)
    };
    Ok(PerturbationReport {
        first,
        second,
        third,
        perturbation_norm,
        third_skipped,
        g_norm_v,
        g_norm_vp,
    })
}

/// `E[exp <L_u, V>] = exp(u <V, gamma_V>)`.
pub fn laplace_functional(green: &GreenKernel, v: &Potential, u: f64) -> Result<f64> {
    if v.is_zero() {
        return Ok(1.0);
    }
    Ok((u * Gauge::new(green, v)?.pairing()).exp())
}

/// Remainder `<|eta|,1> ||gamma_V||^2 delta^2 q / (1 - delta q)`,
/// `q = ||(I - G|V|)^{-1} G|eta|||_inf`.
pub fn remainder(green: &GreenKernel, delta: f64, eta: &Potential, v: &Potential) -> Result<f64> {
    if delta == 0.0 || eta.is_zero() {
        return Ok(0.0);
    }
    let q = resolvent_norm(green, v, eta)?;
    let denom = 1.0 - delta * q;
    if denom <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "remainder denominator 1 - delta q = {denom} <= 0"
        )));
    }
    let gam = Gauge::new(green, v)?;
    let s = gam.sup_norm();
    Ok(eta.l1() * s * s * delta * delta * q / denom)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailBound {
    /// `exp(-u E(gamma_V - 1) - t + u R)`
    pub bound: f64,
    pub dirichlet: f64,
    pub remainder: f64,
    /// Threshold `u <V', gamma_V^2> + t` of the tail event.
    pub threshold: f64,
    /// `<V, gamma_V^2> - <V, gamma_V>`, equal to `dirichlet` up to rounding.
    pub pairing_difference: f64,
}

/// The exponential tail bound for `<L_u, V + delta eta>`.
pub fn tail_bound(
    green: &GreenKernel,
    v: &Potential,
    eta: &Potential,
    delta: f64,
    u: f64,
    t: f64,
) -> Result<TailBound> {
    let vp = v.plus(&eta.scale(delta));
    check_admissible(green, v)?;
    check_admissible(green, &vp)?;
    let q2 = resolvent_norm(green, v, &eta.scale(delta))?;
    if q2 >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "perturbation norm {q2} >= 1"
        )));
    }
    let gam = Gauge::new(green, v)?;
    let dirichlet = gam.dirichlet_energy(green);
    let rem = remainder(green, delta, eta, v)?;
    let threshold = u * vp.pair(|x| gam.value(green, x).powi(2)) + t;
    Ok(TailBound {
        bound: (-u * dirichlet - t + u * rem).exp(),
        dirichlet,
        remainder: rem,
        threshold,
        pairing_difference: gam.pairing_sq() - gam.pairing(),
    })
}
