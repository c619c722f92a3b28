//! Green function of the continuous-time simple random walk on `Z^d`.
//!
//! `g(x) = d * int_0^inf prod_i e^{-s} I_{x_i}(s) ds`. The integral is split into
//! `[0, 1]` (plain Gauss-Legendre), `[1, S]` (Gauss-Legendre panels in `log s`) and an
//! analytic tail on `[S, inf)` from the large-argument Bessel expansion.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{check_dim, DiscreteBox, LatticePoint, MAX_DIM};
use crate::special::{bessel_asymptotic_coeffs, gauss_legendre_on, scaled_bessel_i};

pub const DEFAULT_TOL: f64 = 1e-8;

/// Tail terms of the Bessel expansion.
const TAIL_TERMS: usize = 7;
const LOG_PANEL: f64 = 0.5;

/// Constant in `g(x) ~ C_d |x|^{2-d}`.
pub fn c_d(d: usize) -> f64 {
    let df = d as f64;
    df / (2.0 * PI.powf(df / 2.0)) * statrs::function::gamma::gamma(df / 2.0 - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreenMethod {
    Quadrature,
    TruncatedSolve,
}

/// Canonical key: sorted absolute coordinates.
fn canonical(x: &LatticePoint) -> ([u32; MAX_DIM], usize) {
    let d = x.dim();
    let mut k = [0u32; MAX_DIM];
    for i in 0..d {
        k[i] = x.coord(i).unsigned_abs();
    }
    k[..d].sort_unstable();
    (k, d)
}

/// Nodes, weights and tabulated scaled Bessel values for one cutoff.
#[derive(Clone, Debug)]
struct Rule {
    d: usize,
    nmax: usize,
    weights: Vec<f64>,
    /// `bessel[j * (nmax+1) + n] = e^{-s_j} I_n(s_j)`
    bessel: Vec<f64>,
    cutoff: f64,
}

impl Rule {
    fn new(d: usize, nmax: usize, n_unit: usize, n_panel: usize) -> Self {
        let s_min = (40.0 * (nmax as f64).powi(2)).max(2000.0);
        let panels = (s_min.ln() / LOG_PANEL).ceil() as usize;
        let cutoff = (panels as f64 * LOG_PANEL).exp();
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let (x, w) = gauss_legendre_on(n_unit, 0.0, 1.0);
        nodes.extend(x);
        weights.extend(w);
        for p in 0..panels {
            let (t, w) = gauss_legendre_on(n_panel, p as f64 * LOG_PANEL, (p + 1) as f64 * LOG_PANEL);
            for (ti, wi) in t.into_iter().zip(w) {
                let s = ti.exp();
                nodes.push(s);
                weights.push(wi * s);
            }
        }
        let stride = nmax + 1;
        let mut bessel = vec![0.0; nodes.len() * stride];
        for (j, &s) in nodes.iter().enumerate() {
            let v = scaled_bessel_i(nmax, s);
            bessel[j * stride..(j + 1) * stride].copy_from_slice(&v);
        }
        Self {
            d,
            nmax,
            weights,
            bessel,
            cutoff,
        }
    }

    fn body(&self, key: &[u32]) -> f64 {
        let stride = self.nmax + 1;
        let mut acc = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            let row = &self.bessel[j * stride..(j + 1) * stride];
            let mut p = *w;
            for &n in key {
                p *= row[n as usize];
            }
            acc += p;
        }
        acc
    }

    fn value(&self, key: &[u32], tail_terms: usize) -> f64 {
        let d = self.d as f64;
        d * (self.body(key) + tail(key, self.cutoff, tail_terms))
    }
}

/// `int_S^inf prod_i e^{-s} I_{n_i}(s) ds` from the asymptotic series.
fn tail(key: &[u32], s: f64, terms: usize) -> f64 {
    let d = key.len() as f64;
    let mut poly = vec![0.0; terms];
    poly[0] = 1.0;
    for &n in key {
        let c = bessel_asymptotic_coeffs(n as u64, terms);
        let mut next = vec![0.0; terms];
        for (i, a) in poly.iter().enumerate() {
            for (j, b) in c.iter().enumerate() {
                if i + j < terms {
                    next[i + j] += a * b;
                }
            }
        }
        poly = next;
    }
    let pref = (2.0 * PI).powf(-d / 2.0);
    poly.iter()
        .enumerate()
        .map(|(m, c)| {
            let e = d / 2.0 + m as f64 - 1.0;
            c * s.powf(-e) / e
        })
        .sum::<f64>()
        * pref
}

/// Green function evaluator with a lazily filled cache for `|x|_inf <= nmax`.
pub struct GreenKernel {
    d: usize,
    tol: f64,
    rule: Rule,
    dense: Option<Vec<AtomicU64>>,
}

impl std::fmt::Debug for GreenKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GreenKernel")
            .field("d", &self.d)
            .field("nmax", &self.rule.nmax)
            .field("tol", &self.tol)
            .finish()
    }
}

const DENSE_LIMIT: usize = 1 << 22;

impl GreenKernel {
    /// Builds a kernel accurate to relative `tol` for `|x|_inf <= nmax`.
    /// Larger arguments are still served, with a one-off rule per call.
    pub fn new(d: usize, nmax: usize, tol: f64) -> Result<Self> {
        check_dim(d)?;
        let nmax = nmax.max(1);
        let rule = Rule::new(d, nmax, 24, 16);
        let check = Rule::new(d, nmax, 32, 24);
        let probes: Vec<Vec<u32>> = vec![
            vec![0; d],
            {
                let mut v = vec![0; d];
                v[d - 1] = nmax as u32;
                v
            },
            vec![nmax as u32; d],
        ];
        for key in &probes {
            let a = rule.value(key, TAIL_TERMS);
            let b = check.value(key, TAIL_TERMS);
            let c = rule.value(key, TAIL_TERMS - 1);
            let err = ((a - b).abs()).max((a - c).abs()) / a;
            if !(err <= tol.max(1e-13)) {
                return Err(Error::ToleranceNotReached(format!(
                    "green quadrature at {key:?}: estimated relative error {err:.2e} > {tol:.1e}"
                )));
            }
        }
        let size = (nmax + 1).checked_pow(d as u32).unwrap_or(usize::MAX);
        let dense = (size <= DENSE_LIMIT).then(|| (0..size).map(|_| AtomicU64::new(0)).collect());
        Ok(Self {
            d,
            tol,
            rule,
            dense,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn nmax(&self) -> usize {
        self.rule.nmax
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// `g(x)` for a difference vector `x`.
    pub fn value(&self, x: &LatticePoint) -> f64 {
        let (k, d) = canonical(x);
        let key = &k[..d];
        let top = key[d - 1] as usize;
        if top > self.rule.nmax {
            let rule = Rule::new(d, top, 24, 16);
            return rule.value(key, TAIL_TERMS);
        }
        match &self.dense {
            Some(cache) => {
                let n = self.rule.nmax + 1;
                let idx = key.iter().fold(0usize, |a, &c| a * n + c as usize);
                let bits = cache[idx].load(Ordering::Relaxed);
                if bits != 0 {
                    return f64::from_bits(bits);
                }
                let v = self.rule.value(key, TAIL_TERMS);
                cache[idx].store(v.to_bits(), Ordering::Relaxed);
                v
            }
            None => self.rule.value(key, TAIL_TERMS),
        }
    }

    /// `g(x, y) = g(y - x)`.
    #[inline]
    pub fn between(&self, x: &LatticePoint, y: &LatticePoint) -> f64 {
        self.value(&y.sub(x))
    }
}

/// `g(x)` by quadrature with relative accuracy `tol`.
pub fn green(d: usize, x: &LatticePoint, tol: f64) -> Result<f64> {
    if x.dim() != d {
        return Err(Error::InvalidParameter("point dimension mismatch".into()));
    }
    let k = GreenKernel::new(d, x.sup_norm() as usize, tol)?;
    Ok(k.value(x))
}

/// `g(x)` by solving `L g = -delta_0` on the box `[-R, R]^d` with asymptotic boundary values.
/// Cruder than quadrature; its error is dominated by the `O(R^{-d})` boundary mismatch.
pub fn green_truncated_solve(d: usize, x: &LatticePoint, radius: u32) -> Result<f64> {
    check_dim(d)?;
    if x.sup_norm() as u32 >= radius {
        return Err(Error::WindowTooSmall(format!(
            "point {x} not inside the solve box of radius {radius}"
        )));
    }
    let f = truncated_field(d, radius)?;
    Ok(f(x))
}

/// Conjugate gradient for a symmetric positive definite operator.
pub(crate) fn conjugate_gradient<F>(apply: F, b: &[f64], rtol: f64, max_iter: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..max_iter {
        if rr.sqrt() <= rtol * bnorm {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= rtol * bnorm * 10.0 {
        return Ok(x);
    }
    Err(Error::ToleranceNotReached(format!(
        "conjugate gradient residual {:.2e}",
        rr.sqrt() / bnorm
    )))
}

/// Precomputed `g` for all difference vectors with `|x|_inf <= radius`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenTable {
    pub d: usize,
    pub radius: u32,
    pub tol: f64,
    pub method: GreenMethod,
    /// Values keyed by sorted absolute coordinates joined with commas.
    values: HashMap<String, f64>,
}

fn key_string(key: &[u32]) -> String {
    key.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl GreenTable {
    pub fn build(d: usize, radius: u32, tol: f64, method: GreenMethod) -> Result<Self> {
        check_dim(d)?;
        let mut values = HashMap::new();
        let keys = canonical_keys(d, radius);
        match method {
            GreenMethod::Quadrature => {
                let k = GreenKernel::new(d, radius as usize, tol)?;
                for key in keys {
                    let p = LatticePoint::new(&key.iter().map(|&v| v as i32).collect::<Vec<_>>())?;
                    values.insert(key_string(&key), k.value(&p));
                }
            }
            GreenMethod::TruncatedSolve => {
                let r = (4 * radius).max(24) + 1;
                let sol = truncated_field(d, r)?;
                for key in keys {
                    let p = LatticePoint::new(&key.iter().map(|&v| v as i32).collect::<Vec<_>>())?;
                    values.insert(key_string(&key), sol(&p));
                }
            }
        }
        Ok(Self {
            d,
            radius,
            tol,
            method,
            values,
        })
    }

    pub fn get(&self, x: &LatticePoint) -> Result<f64> {
        let s = x.sup_norm();
        if s > self.radius as i32 {
            return Err(Error::SupportExceedsTable {
                needed: s,
                radius: self.radius as i32,
            });
        }
        let (k, d) = canonical(x);
        Ok(self.values[&key_string(&k[..d])])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cache file name keyed by `(d, radius, tol)`.
    pub fn cache_name(d: usize, radius: u32, tol: f64) -> String {
        format!("green_d{d}_r{radius}_tol{tol:e}.json")
    }

    pub fn save(&self, dir: &std::path::Path) -> Result<std::path::PathBuf> {
        let path = dir.join(Self::cache_name(self.d, self.radius, self.tol));
        std::fs::write(&path, serde_json::to_vec(self)?)?;
        Ok(path)
    }

    /// Loads a cached table, or builds and stores one.
    pub fn load_or_build(dir: &std::path::Path, d: usize, radius: u32, tol: f64) -> Result<Self> {
        let path = dir.join(Self::cache_name(d, radius, tol));
        if let Ok(bytes) = std::fs::read(&path) {
            if let Ok(t) = serde_json::from_slice::<GreenTable>(&bytes) {
                if t.d == d && t.radius == radius && t.tol == tol {
                    return Ok(t);
                }
            }
        }
        let t = Self::build(d, radius, tol, GreenMethod::Quadrature)?;
        std::fs::create_dir_all(dir)?;
        t.save(dir)?;
        Ok(t)
    }
}

fn canonical_keys(d: usize, radius: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; d];
    loop {
        out.push(cur.clone());
        // next nondecreasing sequence
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < radius {
                cur[i] += 1;
                let v = cur[i];
                for c in cur.iter_mut().skip(i + 1) {
                    *c = v;
                }
                break;
            }
        }
    }
}

/// Solves the truncated problem once and returns an evaluator on the interior.
fn truncated_field(d: usize, radius: u32) -> Result<impl Fn(&LatticePoint) -> f64> {
    let origin = LatticePoint::origin(d)?;
    let bx = DiscreteBox::ball(origin, radius - 1);
    let n = bx.len();
    let cd = c_d(d);
    let mut rhs = vec![0.0; n];
    for (i, p) in bx.points().enumerate() {
        if p.sup_norm() == 0 {
            rhs[i] += 2.0 * d as f64;
        }
        for q in p.neighbors() {
            if !bx.contains(&q) {
                rhs[i] += cd / q.norm().powi(d as i32 - 2);
            }
        }
    }
    let apply = |f: &[f64], out: &mut [f64]| {
        for (i, p) in bx.points().enumerate() {
            let mut s = 2.0 * d as f64 * f[i];
            for q in p.neighbors() {
                if let Some(j) = bx.index_of(&q) {
                    s -= f[j];
                }
            }
            out[i] = s;
        }
    };
    let sol = conjugate_gradient(apply, &rhs, 1e-12, 20 * n)?;
    Ok(move |p: &LatticePoint| sol[bx.index_of(p).expect("inside solve box")])
}
