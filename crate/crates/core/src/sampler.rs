//! Random interlacements restricted to a finite window `W`.
//!
//! The number of trajectories hitting `W` below level `u_max` is Poisson with mean
//! `u_max cap(W)`; each starts from the normalized equilibrium measure and runs as a
//! continuous-time walk until it leaves the sup-norm ball of radius `rho`. Backward halves
//! are conditioned never to return to `W` and are not simulated.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, WeightedAliasIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, MAX_DIM};
use crate::pointset::PointSet;
use crate::potential::{Backend, PotentialTable};
use crate::rng::{stream_rng, NeighborDraw};

/// Equilibrium data used to seed trajectories.
#[derive(Clone, Debug)]
pub struct WindowMeasure {
    pub cap: f64,
    /// Normalized equilibrium measure.
    pub e_bar: Vec<(LatticePoint, f64)>,
    pub backend: Backend,
    /// Relative bias bound of `cap` and `e_bar` (zero when exact).
    pub bias_bound: f64,
}

impl WindowMeasure {
    pub fn from_table(t: &PotentialTable) -> Self {
        Self {
            cap: t.cap,
            e_bar: t.e_bar(),
            backend: t.backend,
            bias_bound: if t.cap > 0.0 { t.bias_bound / t.cap } else { 0.0 },
        }
    }
}

/// A maximal run of consecutive visits to the window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: LatticePoint,
    /// Neighbour indices (`0..2d`) between consecutive visits, as a digit string.
    pub dirs: String,
    /// Exponential holding time at each visit.
    pub holds: Vec<f64>,
}

impl Segment {
    pub fn visits(&self) -> impl Iterator<Item = (LatticePoint, f64)> + '_ {
        let mut cur = self.start;
        let mut dirs = self.dirs.bytes();
        self.holds.iter().enumerate().map(move |(i, &h)| {
            if i > 0 {
                let k = (dirs.next().expect("one direction per step") - b'0') as usize;
                cur = cur.neighbor(k);
            }
            (cur, h)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub label: f64,
    pub segments: Vec<Segment>,
}

impl Trajectory {
    /// All `(site, hold)` pairs inside the window, in time order.
    pub fn visits(&self) -> impl Iterator<Item = (LatticePoint, f64)> + '_ {
        self.segments.iter().flat_map(|s| s.visits())
    }

    pub fn entry(&self) -> LatticePoint {
        self.segments[0].start
    }
}

#[derive(Clone, Debug, Default)]
pub struct SampleOptions {
    /// Also simulate backward halves by the Doob transform and check they avoid `W`.
    pub paranoid: bool,
    /// Needed for `paranoid`.
    pub table: Option<Arc<PotentialTable>>,
}

#[derive(Clone, Debug)]
pub struct InterlacementEnsemble {
    pub window: Arc<PointSet>,
    pub u_max: f64,
    pub cap: f64,
    pub rho: f64,
    pub seed: u64,
    pub backend: Backend,
    pub trajectories: Vec<Trajectory>,
    /// Relative bias bound of occupation quantities from killing at `rho`.
    pub bias_bound: f64,
    /// Backward halves checked (paranoid mode).
    pub backward_checked: usize,
}

/// Samples the interlacement trajectories hitting `window` with labels in `(0, u_max]`.
pub fn sample_ensemble(
    window: Arc<PointSet>,
    measure: &WindowMeasure,
    u_max: f64,
    rho: f64,
    seed: u64,
    opts: &SampleOptions,
) -> Result<InterlacementEnsemble> {
    if !(u_max >= 0.0) || !u_max.is_finite() {
        return Err(Error::LevelOutOfRange { u: u_max, max: f64::INFINITY });
    }
    let r_w = window.sup_radius() as f64;
    let diam = window.diameter();
    let needed = diam.max(r_w + 1.0);
    if !(rho > needed) {
        return Err(Error::RhoTooSmall { rho, needed });
    }
    if measure.e_bar.iter().any(|(x, _)| !window.contains(x)) {
        return Err(Error::InvalidParameter(
            "equilibrium measure not supported on the window".into(),
        ));
    }
    if opts.paranoid && opts.table.is_none() {
        return Err(Error::InvalidParameter("paranoid mode needs the potential table".into()));
    }
    let mean = u_max * measure.cap;
    let count = if mean > 0.0 {
        let pois = Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        pois.sample(&mut stream_rng(seed, 0)) as usize
    } else {
        0
    };
    let alias = if count > 0 {
        Some(
            WeightedAliasIndex::new(measure.e_bar.iter().map(|(_, w)| *w).collect())
                .map_err(|e| Error::InvalidParameter(format!("equilibrium weights: {e}")))?,
        )
    } else {
        None
    };
    let center = window.center_point();
    let rho_i = rho.floor() as i32;
    let d = window.dim();
    let trajectories: Vec<Result<Trajectory>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64 + 1);
            let label = u_max * (1.0 - rng.gen::<f64>());
            let start = measure.e_bar[alias.as_ref().expect("count > 0").sample(&mut rng)].0;
            let traj = forward_walk(&window, start, label, center, rho_i, d, &mut rng);
            if opts.paranoid {
                let t = opts.table.as_ref().expect("checked above");
                backward_walk(t, &window, start, center, rho_i, &mut rng)?;
            }
            Ok(traj)
        })
        .collect();
    let trajectories = trajectories.into_iter().collect::<Result<Vec<_>>>()?;
    let bias_bound = match &opts.table {
        Some(t) => face_return_bound(t, center, rho_i),
        None => crate::green::c_d(d) * measure.cap * 1.1 / (rho - r_w).powi(d as i32 - 2),
    };
    Ok(InterlacementEnsemble {
        window,
        u_max,
        cap: measure.cap,
        rho,
        seed,
        backend: measure.backend,
        backward_checked: if opts.paranoid { trajectories.len() } else { 0 },
        trajectories,
        bias_bound,
    })
}

/// `max h_W` over the face centres of the killing sphere.
fn face_return_bound(t: &PotentialTable, center: LatticePoint, rho: i32) -> f64 {
    let d = t.dim();
    (0..2 * d)
        .map(|k| {
            let axis = k / 2;
            let s = if k % 2 == 0 { rho + 1 } else { -(rho + 1) };
            t.h(&center.shifted(axis, s))
        })
        .fold(0.0, f64::max)
}

fn forward_walk<R: Rng>(
    window: &PointSet,
    start: LatticePoint,
    label: f64,
    center: LatticePoint,
    rho: i32,
    d: usize,
    rng: &mut R,
) -> Trajectory {
    let mut segments: Vec<Segment> = Vec::new();
    let mut cur: Option<Segment> = None;
    let mut x = start;
    let mut draw = NeighborDraw::default();
    let mut last_dir = 0u8;
    loop {
        if window.contains(&x) {
            let hold: f64 = Exp1.sample(rng);
            match cur.as_mut() {
                Some(s) => {
                    s.dirs.push((b'0' + last_dir) as char);
                    s.holds.push(hold);
                }
                None => {
                    cur = Some(Segment {
                        start: x,
                        dirs: String::new(),
                        holds: vec![hold],
                    })
                }
            }
        } else {
            if let Some(s) = cur.take() {
                segments.push(s);
            }
            if x.sub(&center).sup_norm() > rho {
                break;
            }
        }
        let k = draw.next(rng, d);
        last_dir = k as u8;
        x = x.neighbor(k);
    }
    if let Some(s) = cur.take() {
        segments.push(s);
    }
    Trajectory { label, segments }
}

/// Backward half from `start`: the walk conditioned to avoid `W` forever, realized as the
/// Doob transform with `1 - h_W`. Fails if it ever lands in `W`.
fn backward_walk<R: Rng>(
    t: &PotentialTable,
    window: &PointSet,
    start: LatticePoint,
    center: LatticePoint,
    rho: i32,
    rng: &mut R,
) -> Result<()> {
    let mut x = start;
    let mut w = [0.0f64; 2 * MAX_DIM];
    let d = t.dim();
    loop {
        let mut total = 0.0;
        for (k, slot) in w.iter_mut().enumerate().take(2 * d) {
            let y = x.neighbor(k);
            *slot = (1.0 - t.h(&y)).max(0.0);
            total += *slot;
        }
        if total <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "backward half stuck at {x}: no escaping neighbour"
            )));
        }
        let mut r = rng.gen::<f64>() * total;
        let mut k = 0;
        while k + 1 < 2 * d && r >= w[k] {
            r -= w[k];
            k += 1;
        }
        x = x.neighbor(k);
        if window.contains(&x) {
            return Err(Error::InvalidParameter(format!(
                "backward half re-entered the window at {x}"
            )));
        }
        if x.sub(&center).sup_norm() > rho {
            return Ok(());
        }
    }
}

/// Occupation times `L_{x,u}` on the window.
#[derive(Clone, Debug)]
pub struct OccupationField {
    pub window: Arc<PointSet>,
    pub u: f64,
    /// Aligned with `window.points()`.
    pub values: Vec<f64>,
}

impl OccupationField {
    pub fn get(&self, x: &LatticePoint) -> f64 {
        self.window.rank(x).map(|i| self.values[i]).unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticePoint, f64)> + '_ {
        self.window.points().iter().copied().zip(self.values.iter().copied())
    }
}

impl InterlacementEnsemble {
    fn check_level(&self, u: f64) -> Result<()> {
        if !(0.0..=self.u_max).contains(&u) {
            return Err(Error::LevelOutOfRange { u, max: self.u_max });
        }
        Ok(())
    }

    pub fn occupation_field(&self, u: f64) -> Result<OccupationField> {
        self.check_level(u)?;
        let mut values = vec![0.0; self.window.len()];
        for t in self.trajectories.iter().filter(|t| t.label <= u) {
            for (x, h) in t.visits() {
                values[self.window.rank(&x).expect("visits lie in the window")] += h;
            }
        }
        Ok(OccupationField {
            window: self.window.clone(),
            u,
            values,
        })
    }

    /// Smallest label of a trajectory visiting each window site (infinity if none).
    /// `x` is in `I^u` iff the value is at most `u`.
    pub fn first_label_field(&self) -> Vec<f64> {
        let mut m = vec![f64::INFINITY; self.window.len()];
        for t in &self.trajectories {
            for (x, _) in t.visits() {
                let i = self.window.rank(&x).expect("visits lie in the window");
                if t.label < m[i] {
                    m[i] = t.label;
                }
            }
        }
        m
    }

    /// `I^u` intersected with the window.
    pub fn interlacement_set(&self, u: f64) -> Result<Vec<LatticePoint>> {
        self.check_level(u)?;
        let m = self.first_label_field();
        Ok(self
            .window
            .points()
            .iter()
            .zip(m)
            .filter(|(_, l)| *l <= u)
            .map(|(x, _)| *x)
            .collect())
    }

    /// `V^u` intersected with `region`, which must lie in the window.
    pub fn vacant_set(&self, u: f64, region: &[LatticePoint]) -> Result<Vec<LatticePoint>> {
        self.check_level(u)?;
        if region.iter().any(|x| !self.window.contains(x)) {
            return Err(Error::RegionEscapesWindow);
        }
        let m = self.first_label_field();
        Ok(region
            .iter()
            .filter(|x| m[self.window.rank(x).expect("checked")] > u)
            .copied()
            .collect())
    }

    /// Writes a header line and one JSON record per trajectory.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = EnsembleHeader {
            window: self.window.points().to_vec(),
            u_max: self.u_max,
            cap: self.cap,
            rho: self.rho,
            seed: self.seed,
            backend: self.backend,
            bias_bound: self.bias_bound,
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for t in &self.trajectories {
            serde_json::to_writer(&mut w, t)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let head = lines
            .next()
            .ok_or_else(|| Error::InvalidParameter("empty ensemble file".into()))??;
        let h: EnsembleHeader = serde_json::from_str(&head)?;
        let mut trajectories = Vec::new();
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                trajectories.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self {
            window: Arc::new(PointSet::new(&h.window)),
            u_max: h.u_max,
            cap: h.cap,
            rho: h.rho,
            seed: h.seed,
            backend: h.backend,
            trajectories,
            bias_bound: h.bias_bound,
            backward_checked: 0,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct EnsembleHeader {
    window: Vec<LatticePoint>,
    u_max: f64,
    cap: f64,
    rho: f64,
    seed: u64,
    backend: Backend,
    bias_bound: f64,
}

/// Capacity and normalized equilibrium measure of a large set from walks started uniformly on
/// the sup-norm sphere of radius `rho0` about its centre and killed at radius `2 rho0`.
///
/// With `p` the fraction hitting `K` before being killed, `g_s` the mean Green value from the
/// start points and `g_e` that from the kill points, `cap = p / (g_s - (1 - p) g_e)`.
pub fn hitting_from_infinity(
    set: &PointSet,
    rho0: f64,
    walks: u64,
    seed: u64,
) -> Result<WindowMeasure> {
    let d = set.dim();
    let r = set.sup_radius() as f64;
    if rho0 <= 2.0 * r + 2.0 {
        return Err(Error::RhoTooSmall { rho: rho0, needed: 2.0 * r + 2.0 });
    }
    let center = set.center_point();
    let cen = set.center();
    let cd = crate::green::c_d(d);
    let g_far = |y: &LatticePoint| {
        let r2: f64 = (0..d).map(|i| (y.coord(i) as f64 - cen[i]).powi(2)).sum();
        cd / r2.sqrt().powi(d as i32 - 2)
    };
    let r0 = rho0.round() as i32;
    let kill = 2 * r0;
    let chunks = 64u64;
    let per = walks.div_ceil(chunks);
    let parts: Vec<(Vec<u64>, u64, f64, f64, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c + 1);
            let mut draw = NeighborDraw::default();
            let mut hits = vec![0u64; set.len()];
            let (mut nhit, mut gs, mut ge, mut nexit) = (0u64, 0.0, 0.0, 0u64);
            for _ in 0..per {
                // uniform point of the sphere |y|_inf = r0: pick a face, then coordinates
                let mut c = [0i32; MAX_DIM];
                loop {
                    let face = rng.gen_range(0..2 * d);
                    for (i, ci) in c.iter_mut().enumerate().take(d) {
                        *ci = rng.gen_range(-r0..=r0);
                        if i == face / 2 {
                            *ci = if face % 2 == 0 { r0 } else { -r0 };
                        }
                    }
                    // faces overlap on edges; thin to the uniform law on the sphere
                    let on = (0..d).filter(|&i| c[i].abs() == r0).count();
                    if rng.gen_range(0..on) == 0 {
                        break;
                    }
                }
                let mut x = center.add(&LatticePoint::from_slice_unchecked(&c[..d]));
                gs += g_far(&x);
                loop {
                    if let Some(i) = set.rank(&x) {
                        hits[i] += 1;
                        nhit += 1;
                        break;
                    }
                    if x.sub(&center).sup_norm() > kill {
                        ge += g_far(&x);
                        nexit += 1;
                        break;
                    }
                    x = x.neighbor(draw.next(&mut rng, d));
                }
            }
            (hits, nhit, gs, ge, nexit)
        })
        .collect();
    let total = (per * chunks) as f64;
    let mut hits = vec![0u64; set.len()];
    let (mut nhit, mut gs, mut ge, mut nexit) = (0u64, 0.0, 0.0, 0u64);
    for (h, a, b, c, e) in parts {
        for (t, v) in hits.iter_mut().zip(h) {
            *t += v;
        }
        nhit += a;
        gs += b;
        ge += c;
        nexit += e;
    }
    if nhit == 0 {
        return Err(Error::BudgetExhausted { used: total as u64 });
    }
    let p = nhit as f64 / total;
    let g_s = gs / total;
    let g_e = if nexit > 0 { ge / nexit as f64 } else { 0.0 };
    let cap = p / (g_s - (1.0 - p) * g_e);
    let e_bar = set
        .points()
        .iter()
        .zip(&hits)
        .filter(|(_, &h)| h > 0)
        .map(|(x, &h)| (*x, h as f64 / nhit as f64))
        .collect();
    Ok(WindowMeasure {
        cap,
        e_bar,
        backend: Backend::MonteCarlo,
        bias_bound: (set.diameter() / rho0).powi(d as i32 - 2),
    })
}
