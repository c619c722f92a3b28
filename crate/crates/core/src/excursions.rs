//! Excursions of interlacement trajectories between `D_z` and the exterior boundary of `U_z`,
//! the length scales they live on, and the occupancy inequality for `e_D` and `e_C`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{check_dim, DiscreteBox, LatticePoint};
use crate::potential::{equilibrium, EquilibriumParams, PotentialTable};
use crate::sampler::{InterlacementEnsemble, OccupationField, Trajectory};

/// Length scales of the coarse-graining.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalePair {
    pub d: usize,
    /// `None` under the toy-scale override.
    pub n: Option<u64>,
    pub gamma: Option<f64>,
    pub l0: u64,
    pub lhat0: u64,
    pub k: u64,
    pub toy: bool,
}

/// Largest `m >= 0` with `m^p <= x`.
fn int_root_floor(x: f64, p: u32) -> u64 {
    if !(x >= 1.0) {
        return 0;
    }
    let pow = |m: u64| (m as f64).powi(p as i32);
    let mut m = x.powf(1.0 / p as f64).floor() as u64;
    while m > 0 && pow(m) > x {
        m -= 1;
    }
    while pow(m + 1) <= x {
        m += 1;
    }
    m
}

/// `L_0 = floor((gamma N log N)^{1/(d-1)})` and `Lhat_0 = 100 d floor(sqrt(gamma) N)`.
pub fn scales(d: usize, n: u64, gamma: f64, k: u64) -> Result<ScalePair> {
    check_dim(d)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma {gamma} outside (0, 1]")));
    }
    if k < 100 {
        return Err(Error::InvalidParameter(format!("K = {k} below 100")));
    }
    if n < 2 {
        return Err(Error::DegenerateScale(format!("N = {n}")));
    }
    let nf = n as f64;
    let l0 = int_root_floor(gamma * nf * nf.ln(), (d - 1) as u32);
    if l0 == 0 {
        return Err(Error::DegenerateScale(format!("L0 = 0 at N = {n}, gamma = {gamma}")));
    }
    // floor(sqrt(gamma) N) = largest m with m^2 <= gamma N^2
    let lhat0 = 100 * d as u64 * int_root_floor(gamma * nf * nf, 2);
    Ok(ScalePair {
        d,
        n: Some(n),
        gamma: Some(gamma),
        l0,
        lhat0,
        k,
        toy: false,
    })
}

impl ScalePair {
    /// Desk-scale override with user-chosen `L0` and `K` (`K >= 5` keeps `D_z` inside `U_z`).
    pub fn toy(d: usize, l0: u64, k: u64) -> Result<Self> {
        check_dim(d)?;
        if l0 == 0 {
            return Err(Error::DegenerateScale("L0 = 0".into()));
        }
        if k < 5 {
            return Err(Error::InvalidParameter(format!("K = {k} below 5")));
        }
        Ok(Self {
            d,
            n: None,
            gamma: None,
            l0,
            lhat0: 100 * d as u64 * l0,
            k,
            toy: true,
        })
    }

    pub fn k_bar(&self) -> u64 {
        2 * self.k + 3
    }

    fn cube(&self, z: &LatticePoint, lo: i64, hi: i64) -> Result<DiscreteBox> {
        if z.dim() != self.d {
            return Err(Error::InvalidParameter("anchor dimension mismatch".into()));
        }
        let lo = i32::try_from(lo).map_err(|_| Error::DegenerateScale("box too large".into()))?;
        let hi = i32::try_from(hi).map_err(|_| Error::DegenerateScale("box too large".into()))?;
        DiscreteBox::half_open(*z, lo, hi)
    }

    /// `B_z = z + [0, L0)^d`.
    pub fn b_box(&self, z: &LatticePoint) -> Result<DiscreteBox> {
        self.cube(z, 0, self.l0 as i64)
    }

    /// `D_z = z + [-3 L0, 4 L0)^d`.
    pub fn d_box(&self, z: &LatticePoint) -> Result<DiscreteBox> {
        let l = self.l0 as i64;
        self.cube(z, -3 * l, 4 * l)
    }

    /// `U_z = z + [-K L0 + 1, K L0 - 1)^d`.
    pub fn u_box(&self, z: &LatticePoint) -> Result<DiscreteBox> {
        let kl = (self.k * self.l0) as i64;
        self.cube(z, -kl + 1, kl - 1)
    }
}

/// One excursion: visit indices along the trajectory's in-window visits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub trajectory: usize,
    /// First visit in `D_z`.
    pub entry: usize,
    /// First later visit outside `U_z`, or one past the last visit when the walk leaves the window.
    pub exit: usize,
    pub local_time: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExcursionRecord {
    pub z: LatticePoint,
    pub u: f64,
    pub count: usize,
    pub excursions: Vec<Excursion>,
    /// Holding time on the inner boundary of `D_z` during counted excursions.
    pub local_time: f64,
}

fn scan(t: &Trajectory, ti: usize, d: &DiscreteBox, u: &DiscreteBox) -> Vec<Excursion> {
    let mut out = Vec::new();
    let mut open: Option<(usize, f64)> = None;
    let mut idx = 0usize;
    for seg in &t.segments {
        for (x, h) in seg.visits() {
            if let Some((entry, lt)) = open.as_mut() {
                if !u.contains(&x) {
                    out.push(Excursion { trajectory: ti, entry: *entry, exit: idx, local_time: *lt });
                    open = None;
                } else if d.contains(&x) && x.neighbors().any(|y| !d.contains(&y)) {
                    *lt += h;
                }
            }
            if open.is_none() && d.contains(&x) {
                let on_bd = x.neighbors().any(|y| !d.contains(&y));
                open = Some((idx, if on_bd { h } else { 0.0 }));
            }
            idx += 1;
        }
        // leaving the window means leaving U_z
        if let Some((entry, lt)) = open.take() {
            out.push(Excursion { trajectory: ti, entry, exit: idx, local_time: lt });
        }
    }
    out
}

/// Counts excursions from `D_z` to the exterior boundary of `U_z` of trajectories with label `<= u`.
pub fn count_excursions(
    ens: &InterlacementEnsemble,
    u: f64,
    z: &LatticePoint,
    scale: &ScalePair,
) -> Result<ExcursionRecord> {
    if !(0.0..=ens.u_max).contains(&u) {
        return Err(Error::LevelOutOfRange { u, max: ens.u_max });
    }
    let dz = scale.d_box(z)?;
    let uz = scale.u_box(z)?;
    if uz.len() > ens.window.len() || uz.points().any(|x| !ens.window.contains(&x)) {
        return Err(Error::WindowTooSmall(format!("window does not contain U_z for z = {z}")));
    }
    let per: Vec<Vec<Excursion>> = ens
        .trajectories
        .par_iter()
        .enumerate()
        .filter(|(_, t)| t.label <= u)
        .map(|(i, t)| scan(t, i, &dz, &uz))
        .collect();
    let excursions: Vec<Excursion> = per.into_iter().flatten().collect();
    Ok(ExcursionRecord {
        z: *z,
        u,
        count: excursions.len(),
        local_time: excursions.iter().map(|e| e.local_time).sum(),
        excursions,
    })
}

/// Writes `z_1,..,z_d,u,count,local_time` rows.
pub fn write_excursions_csv<W: Write>(mut w: W, records: &[ExcursionRecord]) -> Result<()> {
    let Some(first) = records.first() else {
        return Ok(());
    };
    let head: Vec<String> = (0..first.z.dim()).map(|i| format!("z{i}")).collect();
    writeln!(w, "{},u,count,local_time", head.join(","))?;
    for r in records {
        let c: Vec<String> = r.z.coords().iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{},{},{:.12e}", c.join(","), r.u, r.count, r.local_time)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyCheck {
    /// `<L_u, e>`.
    pub pairing: f64,
    /// `gamma cap / (1 + eps_hat)`.
    pub threshold: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Evaluates `<L_u, e> >= gamma cap / (1 + eps_hat)`; sites missing from the field count as 0.
pub fn occupancy_check(field: &OccupationField, table: &PotentialTable, gamma: f64, eps_hat: f64) -> OccupancyCheck {
    let pairing: f64 = table.support.iter().map(|(x, e)| field.get(x) * e).sum();
    let threshold = gamma * table.cap / (1.0 + eps_hat);
    let margin = pairing - threshold;
    OccupancyCheck {
        pairing,
        threshold,
        margin,
        pass: margin >= -1e-12 * threshold.abs(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsHatReport {
    /// Smallest `eps` with `sum_D e_C(D) ebar_D <= (1 + eps) e_C` pointwise.
    pub eps_hat: f64,
    /// Largest `eps` with the reverse bound `(1 - eps) e_C <= sum_D e_C(D) ebar_D`.
    pub eps_lower: f64,
    /// Extremes of `mu / e_C` over the support of `e_C`, `mu = sum_D e_C(D) ebar_D`.
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub cap_c: f64,
    /// `e_C(D)` per box.
    pub box_mass: Vec<f64>,
    /// Equilibrium data of the union.
    #[serde(skip)]
    pub table: Option<PotentialTable>,
}

/// Measures the perturbation of `e_C` by the normalized box measures for disjoint boxes `C = ∪ D`.
pub fn epsilon_hat(boxes: &[DiscreteBox], params: &EquilibriumParams) -> Result<EpsHatReport> {
    if boxes.is_empty() {
        return Err(Error::InvalidParameter("no boxes".into()));
    }
    for (i, a) in boxes.iter().enumerate() {
        for b in &boxes[i + 1..] {
            if a.points().any(|x| b.contains(&x)) {
                return Err(Error::InvalidParameter("boxes overlap".into()));
            }
        }
    }
    let all: Vec<LatticePoint> = boxes.iter().flat_map(|b| b.points()).collect();
    let tc = equilibrium(&all, params)?;
    let mut mu = std::collections::HashMap::new();
    let mut box_mass = Vec::with_capacity(boxes.len());
    // normalized box measures by shape, translated to each anchor
    let mut shapes: Vec<(Vec<u32>, Vec<(LatticePoint, f64)>)> = Vec::new();
    for b in boxes {
        let m: f64 = b.points().map(|x| tc.e(&x)).sum();
        box_mass.push(m);
        let k = match shapes.iter().position(|(s, _)| s == b.sides()) {
            Some(k) => k,
            None => {
                let origin = LatticePoint::origin(b.dim())?;
                let pts: Vec<LatticePoint> = DiscreteBox::new(origin, b.sides())?.points().collect();
                shapes.push((b.sides().to_vec(), equilibrium(&pts, params)?.e_bar()));
                shapes.len() - 1
            }
        };
        for (x, e) in &shapes[k].1 {
            *mu.entry(x.add(&b.anchor())).or_insert(0.0) += m * e;
        }
    }
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for (x, ec) in &tc.support {
        let r = mu.get(x).copied().unwrap_or(0.0) / ec;
        hi = hi.max(r);
        lo = lo.min(r);
    }
    if mu.iter().any(|(x, &v)| v > 0.0 && tc.e(x) == 0.0) {
        hi = f64::INFINITY;
    }
    Ok(EpsHatReport {
        eps_hat: (hi - 1.0).max(0.0),
        eps_lower: (1.0 - lo).max(0.0),
        ratio_min: lo,
        ratio_max: hi,
        cap_c: tc.cap,
        box_mass,
        table: Some(tc),
    })
}
