//! Disconnection of `A_N` from `S_N` by the interlacement set, its probability, and occupation
//! statistics conditioned on it.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BlowUpPair, DiscreteBox, LatticePoint};
use crate::pointset::PointSet;
use crate::potential::{equilibrium, EquilibriumParams};
use crate::rng::derive_seed;
use crate::sampler::{sample_ensemble, InterlacementEnsemble, OccupationField, SampleOptions, WindowMeasure};
use crate::stats::{proportion, Estimate};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DisconnectionResult {
    pub occurred: bool,
    pub u: f64,
    pub n: u32,
    pub m: f64,
    /// Number of vacant sites connected to `A_N` inside the box (0 if `A_N` is covered).
    pub cluster_size: usize,
    /// Occupied sites separating `A_N` from `S_N` when disconnection occurred.
    pub witness: Option<Vec<LatticePoint>>,
}

/// Union-find with path halving and union by size.
struct Dsu {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a as usize] < self.size[b as usize] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b as usize] = a;
        self.size[a as usize] += self.size[b as usize];
    }
}

/// Geometry of the test: the enclosing box `B(0, floor(MN))` with `A_N` and `S_N` indexed.
#[derive(Clone, Debug)]
pub struct DisconnectionGeometry {
    pub pair: BlowUpPair,
    pub bx: DiscreteBox,
    a_idx: Vec<u32>,
    s_idx: Vec<u32>,
}

impl DisconnectionGeometry {
    pub fn new(pair: BlowUpPair) -> Self {
        let bx = pair.enclosing_box();
        let idx = |v: &[LatticePoint]| {
            v.iter()
                .map(|x| bx.index_of(x).expect("inside the enclosing box") as u32)
                .collect()
        };
        Self {
            a_idx: idx(&pair.a_n),
            s_idx: idx(&pair.s_n),
            bx,
            pair,
        }
    }

    pub fn a_indices(&self) -> &[u32] {
        &self.a_idx
    }

    /// Decides the disconnection event for a vacancy pattern indexed like `bx`.
    pub fn check(&self, vacant: &[bool], u: f64, with_witness: bool) -> DisconnectionResult {
        assert_eq!(vacant.len(), self.bx.len());
        let n = self.bx.len();
        let mut dsu = Dsu::new(n);
        let d = self.bx.dim();
        let sides = self.bx.sides();
        // strides of the row-major layout
        let mut stride = vec![1usize; d];
        for i in (0..d - 1).rev() {
            stride[i] = stride[i + 1] * sides[i + 1] as usize;
        }
        for i in 0..n {
            if !vacant[i] {
                continue;
            }
            for ax in 0..d {
                let coord = (i / stride[ax]) % sides[ax] as usize;
                if coord + 1 < sides[ax] as usize {
                    let j = i + stride[ax];
                    if vacant[j] {
                        dsu.union(i as u32, j as u32);
                    }
                }
            }
        }
        let mut roots: Vec<u32> = self
            .a_idx
            .iter()
            .filter(|&&i| vacant[i as usize])
            .map(|&i| dsu.find(i))
            .collect();
        roots.sort_unstable();
        roots.dedup();
        let reached = self
            .s_idx
            .iter()
            .filter(|&&i| vacant[i as usize])
            .any(|&i| roots.binary_search(&dsu.find(i)).is_ok());
        let cluster_size = roots.iter().map(|&r| dsu.size[r as usize] as usize).sum();
        let witness = (with_witness && !reached).then(|| self.blocking_set(vacant));
        DisconnectionResult {
            occurred: !reached,
            u,
            n: self.pair.n,
            m: self.pair.m,
            cluster_size,
            witness,
        }
    }

    /// Occupied sites of the box adjacent to the vacant cluster of `A_N`, together with the
    /// covered sites of `A_N` itself.
    fn blocking_set(&self, vacant: &[bool]) -> Vec<LatticePoint> {
        let mut seen = vec![false; vacant.len()];
        let mut block = vec![false; vacant.len()];
        let mut q = VecDeque::new();
        for &i in &self.a_idx {
            let i = i as usize;
            if vacant[i] {
                if !seen[i] {
                    seen[i] = true;
                    q.push_back(i);
                }
            } else {
                block[i] = true;
            }
        }
        while let Some(i) = q.pop_front() {
            let x = self.bx.point_at(i);
            for y in x.neighbors() {
                if let Some(j) = self.bx.index_of(&y) {
                    if vacant[j] {
                        if !seen[j] {
                            seen[j] = true;
                            q.push_back(j);
                        }
                    } else {
                        block[j] = true;
                    }
                }
            }
        }
        (0..vacant.len())
            .filter(|&i| block[i])
            .map(|i| self.bx.point_at(i))
            .collect()
    }

    /// Checks a blocking set: all its sites are occupied and vacant paths from `A_N` avoiding it
    /// never reach `S_N`.
    pub fn verify_witness(&self, vacant: &[bool], witness: &[LatticePoint]) -> bool {
        let mut blocked = vec![false; vacant.len()];
        for w in witness {
            match self.bx.index_of(w) {
                Some(i) if !vacant[i] => blocked[i] = true,
                _ => return false,
            }
        }
        let mut seen = vec![false; vacant.len()];
        let mut q: VecDeque<usize> = self
            .a_idx
            .iter()
            .map(|&i| i as usize)
            .filter(|&i| vacant[i] && !blocked[i])
            .collect();
        for &i in &q {
            seen[i] = true;
        }
        let s: std::collections::HashSet<u32> = self.s_idx.iter().copied().collect();
        while let Some(i) = q.pop_front() {
            if s.contains(&(i as u32)) {
                return false;
            }
            for y in self.bx.point_at(i).neighbors() {
                if let Some(j) = self.bx.index_of(&y) {
                    if vacant[j] && !blocked[j] && !seen[j] {
                        seen[j] = true;
                        q.push_back(j);
                    }
                }
            }
        }
        true
    }
}

/// Checks the event for an explicit vacant set.
pub fn check_disconnection(vacant: &[LatticePoint], pair: &BlowUpPair) -> Result<DisconnectionResult> {
    let geo = DisconnectionGeometry::new(pair.clone());
    let mut v = vec![false; geo.bx.len()];
    for x in vacant {
        let i = geo.bx.index_of(x).ok_or(Error::RegionEscapesWindow)?;
        v[i] = true;
    }
    Ok(geo.check(&v, f64::NAN, true))
}

/// Sampling setup shared by replicas: the window is the enclosing box.
#[derive(Clone, Debug)]
pub struct DisconnectionLab {
    pub geo: DisconnectionGeometry,
    pub window: Arc<PointSet>,
    pub measure: WindowMeasure,
    pub rho: f64,
}

impl DisconnectionLab {
    /// `rho` defaults to four times the box radius.
    pub fn new(pair: BlowUpPair, rho: Option<f64>) -> Result<Self> {
        let geo = DisconnectionGeometry::new(pair);
        let pts: Vec<LatticePoint> = geo.bx.points().collect();
        let window = Arc::new(PointSet::new(&pts));
        let table = equilibrium(window.points(), &EquilibriumParams::default())?;
        let r = geo.pair.radius() as f64;
        Ok(Self {
            rho: rho.unwrap_or(4.0 * r + 8.0),
            measure: WindowMeasure::from_table(&table),
            window,
            geo,
        })
    }

    pub fn ensemble(&self, u_max: f64, seed: u64) -> Result<InterlacementEnsemble> {
        sample_ensemble(
            self.window.clone(),
            &self.measure,
            u_max,
            self.rho,
            seed,
            &SampleOptions::default(),
        )
    }

    /// Vacancy pattern at level `u` from the first-visit labels.
    pub fn vacancy(&self, labels: &[f64], u: f64) -> Vec<bool> {
        // window ranks coincide with box indices (both row-major over the same box)
        labels.iter().map(|&l| l > u).collect()
    }

    /// Disconnection indicator at each level on one coupled ensemble.
    pub fn coupled_levels(&self, ens: &InterlacementEnsemble, levels: &[f64]) -> Vec<DisconnectionResult> {
        let labels = ens.first_label_field();
        levels
            .iter()
            .map(|&u| self.geo.check(&self.vacancy(&labels, u), u, false))
            .collect()
    }

    /// `P[D^u_N]` at each level, estimated from `replicas` coupled ensembles.
    pub fn probability(&self, levels: &[f64], replicas: usize, seed: u64) -> Result<Vec<(f64, Estimate)>> {
        if levels.iter().any(|&u| u < 0.0) {
            return Err(Error::InvalidParameter("levels must be nonnegative".into()));
        }
        let u_max = levels.iter().cloned().fold(0.0, f64::max);
        let flags: Vec<Vec<bool>> = (0..replicas)
            .into_par_iter()
            .map(|i| {
                let ens = self.ensemble(u_max, derive_seed(seed, i as u64))?;
                Ok(self.coupled_levels(&ens, levels).iter().map(|r| r.occurred).collect())
            })
            .collect::<Result<_>>()?;
        Ok(levels
            .iter()
            .enumerate()
            .map(|(j, &u)| {
                if u == 0.0 {
                    return (u, Estimate { mean: 0.0, se: 0.0, n: replicas });
                }
                let k = flags.iter().filter(|f| f[j]).count() as u64;
                (u, proportion(k, replicas as u64))
            })
            .collect())
    }

    /// Runs replicas at level `u` in batches until `min_hits` satisfy `condition` or the budget
    /// is spent, calling `observe` on every replica.
    pub fn replicas<C, F, T>(
        &self,
        u: f64,
        seed: u64,
        budget: usize,
        min_hits: usize,
        condition: C,
        observe: F,
    ) -> Result<Vec<Replica<T>>>
    where
        C: Fn(&DisconnectionResult, &OccupationField) -> bool + Sync,
        F: Fn(&OccupationField) -> T + Sync,
        T: Send,
    {
        if u <= 0.0 {
            return Err(Error::ConditioningTooRare { hits: 0, tries: 0 });
        }
        let batch = 256usize;
        let mut out: Vec<Replica<T>> = Vec::new();
        let mut hits = 0usize;
        let mut next = 0usize;
        while hits < min_hits && next < budget {
            let end = (next + batch).min(budget);
            let chunk: Vec<Replica<T>> = (next..end)
                .into_par_iter()
                .map(|i| {
                    let s = derive_seed(seed, i as u64);
                    let ens = self.ensemble(u, s)?;
                    let labels = ens.first_label_field();
                    let res = self.geo.check(&self.vacancy(&labels, u), u, false);
                    let field = ens.occupation_field(u)?;
                    let sum_a = self
                        .geo
                        .a_idx
                        .iter()
                        .map(|&i| field.values[i as usize])
                        .sum();
                    Ok(Replica {
                        seed: s,
                        occurred: res.occurred,
                        hit: condition(&res, &field),
                        sum_a,
                        obs: observe(&field),
                    })
                })
                .collect::<Result<_>>()?;
            hits += chunk.iter().filter(|r| r.hit).count();
            out.extend(chunk);
            next = end;
        }
        if hits < min_hits {
            return Err(Error::ConditioningTooRare {
                hits: hits as u64,
                tries: next as u64,
            });
        }
        Ok(out)
    }

    /// Per-site conditional and unconditional occupation means.
    pub fn conditional_profile<C>(
        &self,
        u: f64,
        seed: u64,
        budget: usize,
        min_hits: usize,
        condition: C,
    ) -> Result<ConditionalProfile>
    where
        C: Fn(&DisconnectionResult, &OccupationField) -> bool + Sync,
    {
        let reps = self.replicas(u, seed, budget, min_hits, condition, |f| f.values.clone())?;
        let n_sites = self.window.len();
        let stats = |sel: &dyn Fn(&Replica<Vec<f64>>) -> bool| -> (Vec<f64>, Vec<f64>, usize) {
            let chosen: Vec<&Replica<Vec<f64>>> = reps.iter().filter(|r| sel(r)).collect();
            let n = chosen.len();
            let mut mean = vec![0.0; n_sites];
            let mut sq = vec![0.0; n_sites];
            for r in &chosen {
                for (i, v) in r.obs.iter().enumerate() {
                    mean[i] += v;
                    sq[i] += v * v;
                }
            }
            let nf = n as f64;
            let se = mean
                .iter()
                .zip(&sq)
                .map(|(m, s)| {
                    let mu = m / nf;
                    ((s / nf - mu * mu).max(0.0) / (nf - 1.0).max(1.0)).sqrt()
                })
                .collect();
            (mean.iter().map(|m| m / nf).collect(), se, n)
        };
        let (cond_mean, cond_se, hits) = stats(&|r| r.hit);
        let (all_mean, all_se, tries) = stats(&|_| true);
        let a_len = self.geo.a_idx.len() as f64;
        let cond_a: Vec<f64> = reps.iter().filter(|r| r.hit).map(|r| r.sum_a / a_len).collect();
        let all_a: Vec<f64> = reps.iter().map(|r| r.sum_a / a_len).collect();
        let c = Estimate::from_samples(&cond_a);
        Ok(ConditionalProfile {
            u,
            sites: self.window.points().to_vec(),
            cond_mean,
            cond_se,
            all_mean,
            all_se,
            hits,
            tries,
            summary: Estimate {
                mean: c.mean - u,
                se: c.se,
                n: c.n,
            },
            unconditional_a: Estimate::from_samples(&all_a),
            replicas: reps
                .iter()
                .map(|r| ReplicaRow {
                    seed: r.seed,
                    occurred: r.occurred,
                    sum_a: r.sum_a,
                })
                .collect(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct Replica<T> {
    pub seed: u64,
    pub occurred: bool,
    /// Whether the conditioning event held.
    pub hit: bool,
    /// `sum_{x in A_N} L_{x,u}`.
    pub sum_a: f64,
    pub obs: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplicaRow {
    pub seed: u64,
    pub occurred: bool,
    pub sum_a: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionalProfile {
    pub u: f64,
    pub sites: Vec<LatticePoint>,
    pub cond_mean: Vec<f64>,
    pub cond_se: Vec<f64>,
    pub all_mean: Vec<f64>,
    pub all_se: Vec<f64>,
    pub hits: usize,
    pub tries: usize,
    /// Mean over `A_N` of `E[L | D] - u`.
    pub summary: Estimate,
    /// Unconditional mean over `A_N` of `L`.
    pub unconditional_a: Estimate,
    pub replicas: Vec<ReplicaRow>,
}

impl ConditionalProfile {
    pub fn write_sites_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.sites.first().map(|x| x.dim()).unwrap_or(3);
        let head: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},cond_mean,cond_se,mean,se", head.join(","))?;
        for i in 0..self.sites.len() {
            let c: Vec<String> = self.sites[i].coords().iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{},{:.6e},{:.6e},{:.6e},{:.6e}",
                c.join(","),
                self.cond_mean[i],
                self.cond_se[i],
                self.all_mean[i],
                self.all_se[i]
            )?;
        }
        Ok(())
    }

    pub fn write_replicas_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "seed,occurred,sum_a")?;
        for r in &self.replicas {
            writeln!(w, "{},{},{:.6e}", r.seed, r.occurred as u8, r.sum_a)?;
        }
        Ok(())
    }
}
