//! Capacity comparisons for well-separated unions of boxes: enlargement and diminution ratios,
//! perturbation of the equilibrium measure, and the ratio `a_L` of discrete to Brownian box capacity.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::continuum::{brownian_capacity, CapacityMethod, ContinuumEstimate, ContinuumOptions};
use crate::error::{Error, Result};
use crate::excursions::epsilon_hat;
use crate::lattice::{check_dim, DiscreteBox, LatticePoint};
use crate::potential::{equilibrium, EquilibriumParams};
use crate::shape::CompactSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxUnionConfig {
    pub anchors: Vec<LatticePoint>,
    /// Box side `L`.
    pub l: u32,
    /// Separation parameter: anchors are at sup-distance at least `K L`.
    pub k: u32,
    /// Enlargement in `(0, 1/4)`.
    pub r: f64,
}

/// Which of the three box families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Variant {
    Plain,
    Enlarged,
    Diminished,
}

impl BoxUnionConfig {
    /// Two boxes at sup-distance exactly `K L` along the first axis.
    pub fn two_boxes(d: usize, l: u32, k: u32, r: f64) -> Result<Self> {
        check_dim(d)?;
        let mut far = vec![0; d];
        far[0] = (k * l) as i32;
        let cfg = Self {
            anchors: vec![LatticePoint::origin(d)?, LatticePoint::new(&far)?],
            l,
            k,
            r,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn single(d: usize, l: u32, k: u32, r: f64) -> Result<Self> {
        let cfg = Self { anchors: vec![LatticePoint::origin(d)?], l, k, r };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.anchors[0].dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(Error::InvalidParameter("no anchors".into()));
        }
        check_dim(self.dim())?;
        if self.l == 0 {
            return Err(Error::DegenerateScale("L = 0".into()));
        }
        if !(self.r > 0.0 && self.r < 0.25) {
            return Err(Error::InvalidParameter(format!("r = {} outside (0, 1/4)", self.r)));
        }
        let kl = self.k as i64 * self.l as i64;
        for (i, a) in self.anchors.iter().enumerate() {
            if a.dim() != self.dim() {
                return Err(Error::InvalidParameter("anchor dimensions differ".into()));
            }
            for b in &self.anchors[i + 1..] {
                if (a.sub(b).sup_norm() as i64) < kl {
                    return Err(Error::InvalidParameter(format!("anchors {a} and {b} closer than K L = {kl}")));
                }
            }
        }
        Ok(())
    }

    /// Real interval `[lo, hi)` of one box relative to its anchor.
    fn interval(&self, v: Variant) -> (f64, f64) {
        let l = self.l as f64;
        match v {
            Variant::Plain => (0.0, l),
            Variant::Enlarged => (-self.r * l, (1.0 + self.r) * l),
            Variant::Diminished => (self.r * l, (1.0 - self.r) * l),
        }
    }

    /// Lattice box `z + [lo, hi) ∩ Z^d`.
    fn lattice_box(&self, z: &LatticePoint, v: Variant) -> Result<DiscreteBox> {
        let (lo, hi) = self.interval(v);
        let (a, b) = (lo.ceil() as i32, hi.ceil() as i32);
        DiscreteBox::half_open(*z, a, b)
    }

    fn union(&self, v: Variant) -> Result<Vec<LatticePoint>> {
        let mut pts = Vec::new();
        for z in &self.anchors {
            pts.extend(self.lattice_box(z, v)?.points());
        }
        Ok(pts)
    }

    /// Closed filling of one box at the origin.
    fn filling(&self, v: Variant) -> CompactSet {
        let (lo, hi) = self.interval(v);
        CompactSet::cube(self.dim(), lo, hi)
    }

    /// Union of the closed fillings.
    pub fn gamma(&self, enlarged: Option<bool>) -> CompactSet {
        let v = match enlarged {
            None => Variant::Plain,
            Some(true) => Variant::Enlarged,
            Some(false) => Variant::Diminished,
        };
        let one = self.filling(v);
        let parts: Vec<CompactSet> = self
            .anchors
            .iter()
            .map(|z| one.translated(&z.coords().iter().map(|&c| c as f64).collect::<Vec<_>>()))
            .collect();
        if parts.len() == 1 {
            parts.into_iter().next().expect("one part")
        } else {
            CompactSet::union_of(parts)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapacityRatioReport {
    pub d: usize,
    pub k: u32,
    pub l: u32,
    pub r: f64,
    pub boxes: usize,
    /// Discrete capacities of `C`, `C^{(r)}`, `C_{(r)}`.
    pub cap_c: f64,
    pub cap_c_up: f64,
    pub cap_c_low: f64,
    /// Brownian capacities of `Gamma`, `Gamma^{(r)}`, `Gamma_{(r)}`, each as
    /// `d cap(union) / a`, with `a` the single-box ratio of the same box family.
    pub cap_gamma: f64,
    pub cap_gamma_up: f64,
    pub cap_gamma_low: f64,
    pub ratio_up: f64,
    pub ratio_low: f64,
    /// `(1 + 2r)^{d-2}` and `(1 - 2r)^{d-2}`.
    pub bound_up: f64,
    pub bound_low: f64,
    /// Brownian single-box ratio `cap(Bhat^{(r)}) / cap(Bhat)`.
    pub single_box_ratio: f64,
    /// Smallest `delta >= 0` for which both one-sided comparisons hold.
    pub delta_needed: f64,
    /// Smallest `delta` with both ratios within `1 +- delta` of their scaling values.
    pub delta: f64,
}

impl CapacityRatioReport {
    pub fn pass(&self) -> bool {
        self.ratio_up <= (1.0 + self.delta_needed) * self.bound_up * (1.0 + 1e-12)
            && self.ratio_low >= (1.0 - self.delta_needed) * self.bound_low * (1.0 - 1e-12)
    }

    pub fn long_rows(&self) -> Vec<LongRow> {
        let row = |q: &str, value: f64, bound: f64, pass: bool| LongRow {
            k: self.k,
            l: self.l,
            r: self.r,
            quantity: q.to_string(),
            value,
            bound,
            pass,
        };
        vec![
            row("cap_c", self.cap_c, f64::NAN, true),
            row("cap_c_up", self.cap_c_up, f64::NAN, true),
            row("cap_c_low", self.cap_c_low, f64::NAN, true),
            row("cap_gamma", self.cap_gamma, f64::NAN, true),
            row("ratio_up", self.ratio_up, self.bound_up, self.ratio_up <= self.bound_up),
            row("ratio_low", self.ratio_low, self.bound_low, self.ratio_low >= self.bound_low),
            row("delta", self.delta, f64::NAN, true),
            row("delta_needed", self.delta_needed, f64::NAN, self.pass()),
        ]
    }
}

/// One line of the long-form output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LongRow {
    pub k: u32,
    pub l: u32,
    pub r: f64,
    pub quantity: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn write_long_csv<W: Write>(mut w: W, rows: &[LongRow]) -> Result<()> {
    writeln!(w, "K,L,r,quantity,value,bound,pass")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{:.12e},{:.12e},{}", r.k, r.l, r.r, r.quantity, r.value, r.bound, r.pass)?;
    }
    Ok(())
}

fn unit_cube(d: usize, opts: &ContinuumOptions) -> Result<f64> {
    Ok(brownian_capacity(&CompactSet::cube(d, 0.0, 1.0), CapacityMethod::Scaling, opts)?.value)
}

/// Compares `cap(Gamma^{(r)}) / cap(Gamma)` and `cap(Gamma_{(r)}) / cap(Gamma)` with the scaling law.
///
/// Exact discrete solves are used; `max_points` bounds `|C^{(r)}|`.
pub fn capacity_ratio_experiment(
    cfg: &BoxUnionConfig,
    params: &EquilibriumParams,
    max_points: usize,
) -> Result<CapacityRatioReport> {
    cfg.validate()?;
    let d = cfg.dim();
    let big = cfg.union(Variant::Enlarged)?;
    if big.len() > max_points {
        return Err(Error::BudgetExhausted { used: big.len() as u64 });
    }
    let copts = ContinuumOptions::default();
    let c1 = unit_cube(d, &copts)?;
    let p = d as i32 - 2;
    let mut gam = [0.0; 3];
    let mut disc = [0.0; 3];
    for (i, v) in [Variant::Plain, Variant::Enlarged, Variant::Diminished].into_iter().enumerate() {
        let (lo, hi) = cfg.interval(v);
        let cont_box = c1 * (hi - lo).powi(p);
        let origin = LatticePoint::origin(d)?;
        let one: Vec<LatticePoint> = cfg.lattice_box(&origin, v)?.points().collect();
        let cap_one = equilibrium(&one, params)?.cap;
        let cap_union = if cfg.anchors.len() == 1 {
            cap_one
        } else {
            equilibrium(&cfg.union(v)?, params)?.cap
        };
        disc[i] = cap_union;
        // d cap_Z(union) / a, with a = d cap_Z(box) / cap(box filling)
        gam[i] = cap_union * cont_box / cap_one;
    }
    let ratio_up = gam[1] / gam[0];
    let ratio_low = gam[2] / gam[0];
    let bound_up = (1.0 + 2.0 * cfg.r).powi(p);
    let bound_low = (1.0 - 2.0 * cfg.r).powi(p);
    let (du, dl) = (ratio_up / bound_up - 1.0, 1.0 - ratio_low / bound_low);
    let single = brownian_capacity(&cfg.filling(Variant::Enlarged), CapacityMethod::Scaling, &copts)?.value
        / brownian_capacity(&cfg.filling(Variant::Plain), CapacityMethod::Scaling, &copts)?.value;
    Ok(CapacityRatioReport {
        d,
        k: cfg.k,
        l: cfg.l,
        r: cfg.r,
        boxes: cfg.anchors.len(),
        cap_c: disc[0],
        cap_c_up: disc[1],
        cap_c_low: disc[2],
        cap_gamma: gam[0],
        cap_gamma_up: gam[1],
        cap_gamma_low: gam[2],
        ratio_up,
        ratio_low,
        bound_up,
        bound_low,
        single_box_ratio: single,
        delta_needed: du.max(dl).max(0.0),
        delta: du.abs().max(dl.abs()),
    })
}

/// Walk-on-spheres estimate of `cap(Gamma)` for comparison with the discrete route.
pub fn gamma_capacity_wos(cfg: &BoxUnionConfig, opts: &ContinuumOptions) -> Result<ContinuumEstimate> {
    cfg.validate()?;
    brownian_capacity(&cfg.gamma(None), CapacityMethod::WalkOnSpheres, opts)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationReport {
    /// Smallest `delta` with `(1 - delta) mu <= e_C <= (1 + delta) mu`.
    pub delta: f64,
    pub cap_c: f64,
    /// `e_C(B_z)` per anchor.
    pub box_mass: Vec<f64>,
}

/// Pointwise comparison of `e_C` with `mu = sum_z e_C(B_z) ebar_{B_z}`.
pub fn equilibrium_perturbation_check(cfg: &BoxUnionConfig, params: &EquilibriumParams) -> Result<PerturbationReport> {
    cfg.validate()?;
    let boxes = cfg
        .anchors
        .iter()
        .map(|z| cfg.lattice_box(z, Variant::Plain))
        .collect::<Result<Vec<_>>>()?;
    let e = epsilon_hat(&boxes, params)?;
    // e_C / mu ranges over [1 / ratio_max, 1 / ratio_min]
    let delta = (1.0 / e.ratio_min - 1.0).max(1.0 - 1.0 / e.ratio_max).max(0.0);
    Ok(PerturbationReport {
        delta,
        cap_c: e.cap_c,
        box_mass: e.box_mass,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ALRow {
    pub l: u32,
    pub cap_discrete: f64,
    pub cap_brownian: f64,
    /// `d cap_Z(B_L) / cap(Bhat_L)`.
    pub a_l: f64,
}

/// `a_L` for the boxes `[0, L)^d ∩ Z^d` against their fillings `[0, L]^d`.
pub fn a_l_study(d: usize, ls: &[u32], params: &EquilibriumParams) -> Result<Vec<ALRow>> {
    check_dim(d)?;
    let c1 = unit_cube(d, &ContinuumOptions::default())?;
    ls.iter()
        .map(|&l| {
            let b = DiscreteBox::cube(LatticePoint::origin(d)?, l)?;
            let pts: Vec<LatticePoint> = b.points().collect();
            let cap = equilibrium(&pts, params)?.cap;
            let cb = c1 * (l as f64).powi(d as i32 - 2);
            Ok(ALRow {
                l,
                cap_discrete: cap,
                cap_brownian: cb,
                a_l: d as f64 * cap / cb,
            })
        })
        .collect()
}
