//! Run configuration: a TOML file with typed keys, every default spelled out.

use std::path::Path;

use rilab_core::CompactSet;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendChoice {
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub d: usize,
    pub u: f64,
    pub u_bar: f64,
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub backend: BackendChoice,
    /// Killing radius of sampled walks; `0` picks `4 MN + 8`.
    pub rho: f64,
    /// Levels for `disconnect`.
    pub levels: Vec<f64>,
    pub set: CompactSet,
    pub budgets: Budgets,
    pub tolerances: Tolerances,
    pub distance: DistanceSection,
    pub gauge: GaugeSection,
    pub laplace: LaplaceSection,
    pub bound: BoundSection,
    pub excursions: ExcursionSection,
    pub appendix: AppendixSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    pub replicas: usize,
    /// Replica budget of the rejection sampler behind `condition` and `profile-distance`.
    pub max_tries: usize,
    pub min_hits: usize,
    pub unconditioned: usize,
    pub ensembles: usize,
    pub bootstrap: usize,
    pub max_atoms: usize,
    pub mc_walks: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub green: f64,
    pub equilibrium: f64,
    pub continuum: f64,
    pub residual: f64,
    pub z: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceSection {
    pub cell: f64,
    /// Candidates for `u_bar` in `profile-distance`; empty means `u * [1.1, 1.25, 1.5, 2, 3]`.
    pub u_bar_grid: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaugeSection {
    pub trials: usize,
    pub support: u32,
    /// Potentials are drawn uniformly from `[-scale, scale]` per site.
    pub scale: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaplaceSection {
    /// Strength of the single-site potential.
    pub s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSection {
    /// `V = a e_{0}` with this `a`.
    pub a: f64,
    pub delta: f64,
    pub t: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcursionSection {
    /// Scale parameter of the asymptotic scales; ignored with `--toy-scale`.
    pub n: u64,
    pub gamma: f64,
    pub k: u64,
    pub toy_l0: u64,
    pub toy_k: u64,
    pub z: Vec<i32>,
    pub levels: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppendixSection {
    pub l: u32,
    pub ks: Vec<u32>,
    pub rs: Vec<f64>,
    pub a_l: Vec<u32>,
    pub max_points: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            d: 3,
            u: 2.5,
            u_bar: 3.0,
            n: 6,
            m: 2.0,
            r: 2.0,
            epsilon: 0.25,
            seed: 1,
            backend: BackendChoice::Auto,
            rho: 0.0,
            levels: vec![1.0, 2.0, 3.0, 4.0],
            set: CompactSet::ball(vec![0.0; 3], 0.5),
            budgets: Budgets::default(),
            tolerances: Tolerances::default(),
            distance: DistanceSection::default(),
            gauge: GaugeSection::default(),
            laplace: LaplaceSection::default(),
            bound: BoundSection::default(),
            excursions: ExcursionSection::default(),
            appendix: AppendixSection::default(),
        }
    }
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            replicas: 200,
            max_tries: 20_000,
            min_hits: 40,
            unconditioned: 100,
            ensembles: 20_000,
            bootstrap: 400,
            max_atoms: 4096,
            mc_walks: 4000,
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            green: 1e-9,
            equilibrium: 1e-10,
            continuum: 1e-3,
            residual: 1e-10,
            z: 3.0,
        }
    }
}

impl Default for DistanceSection {
    fn default() -> Self {
        Self { cell: 0.5, u_bar_grid: vec![] }
    }
}

impl Default for GaugeSection {
    fn default() -> Self {
        Self { trials: 20, support: 3, scale: 0.06 }
    }
}

impl Default for LaplaceSection {
    fn default() -> Self {
        Self { s: 0.3 }
    }
}

impl Default for BoundSection {
    fn default() -> Self {
        Self { a: 0.4, delta: 0.05, t: 0.1 }
    }
}

impl Default for ExcursionSection {
    fn default() -> Self {
        Self {
            n: 1000,
            gamma: 0.5,
            k: 100,
            toy_l0: 1,
            toy_k: 5,
            z: vec![],
            levels: vec![0.5, 1.0],
        }
    }
}

impl Default for AppendixSection {
    fn default() -> Self {
        Self {
            l: 8,
            ks: vec![8, 16, 32],
            rs: vec![0.05, 0.1, 0.2],
            a_l: vec![4, 8, 16, 32],
            max_points: 4096,
        }
    }
}

/// A rejected configuration: one `key.path: message` line per problem.
#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "config error: {l}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: toml::Value = text
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| ConfigError(vec![format!("<toml>: {}", e.to_string().trim())]))?;
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let msg = e.into_inner().to_string();
            ConfigError(vec![format!("{}: {}", path, msg.lines().next().unwrap_or("").trim())])
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(vec![format!("<file>: {}: {e}", p.display())]))?;
                Self::parse(&text)
            }
        }
    }

    /// Fills derived defaults so the manifest records every value used.
    pub fn resolve(&mut self) {
        if self.distance.u_bar_grid.is_empty() {
            self.distance.u_bar_grid = [1.1, 1.25, 1.5, 2.0, 3.0].iter().map(|f| f * self.u).collect();
        }
        if self.excursions.z.is_empty() {
            self.excursions.z = vec![0; self.d];
        }
        if self.rho == 0.0 {
            self.rho = 4.0 * (self.m * self.n as f64).floor() + 8.0;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        need((3..=6).contains(&self.d), format!("d: dimension {} unsupported (need 3..=6)", self.d));
        need(self.u > 0.0 && self.u.is_finite(), format!("u: must be positive, got {}", self.u));
        need(
            self.u < self.u_bar,
            format!("u: must be below u_bar (u = {}, u_bar = {})", self.u, self.u_bar),
        );
        need(self.n >= 1, "N: must be at least 1".into());
        need(self.m > 0.0, format!("M: must be positive, got {}", self.m));
        need(self.m <= self.r, format!("R: need M <= R (M = {}, R = {})", self.m, self.r));
        need(
            self.epsilon > 0.0 && self.epsilon < 1.0,
            format!("epsilon: {} outside (0, 1)", self.epsilon),
        );
        need(self.rho >= 0.0, format!("rho: must be nonnegative, got {}", self.rho));
        need(self.levels.iter().all(|&l| l >= 0.0), "levels: must be nonnegative".into());
        match self.set.validate() {
            Err(e) => need(false, format!("set: {e}")),
            Ok(()) => {
                need(
                    self.set.dim() == self.d,
                    format!("set: dimension {} differs from d = {}", self.set.dim(), self.d),
                );
                need(
                    self.set.dim() != self.d || self.set.strictly_inside_box(self.m),
                    format!("set: not strictly inside [-M, M]^d with M = {}", self.m),
                );
            }
        }
        let b = &self.budgets;
        need(b.replicas >= 1, "budgets.replicas: must be at least 1".into());
        need(b.max_tries >= 1, "budgets.max_tries: must be at least 1".into());
        need(b.min_hits >= 2, "budgets.min_hits: must be at least 2".into());
        need(b.ensembles >= 2, "budgets.ensembles: must be at least 2".into());
        need(b.max_atoms >= 16, "budgets.max_atoms: must be at least 16".into());
        need(b.mc_walks >= 1, "budgets.mc_walks: must be at least 1".into());
        let t = &self.tolerances;
        for (k, v) in [
            ("green", t.green),
            ("equilibrium", t.equilibrium),
            ("continuum", t.continuum),
            ("residual", t.residual),
            ("z", t.z),
        ] {
            need(v > 0.0, format!("tolerances.{k}: must be positive, got {v}"));
        }
        need(self.distance.cell > 0.0, "distance.cell: must be positive".into());
        for (i, &ub) in self.distance.u_bar_grid.iter().enumerate() {
            need(ub > self.u, format!("distance.u_bar_grid[{i}]: {ub} must exceed u = {}", self.u));
        }
        need(self.gauge.trials >= 1, "gauge.trials: must be at least 1".into());
        need(self.gauge.support >= 1, "gauge.support: must be at least 1".into());
        need(self.gauge.scale > 0.0, "gauge.scale: must be positive".into());
        need(self.bound.a > 0.0 && self.bound.a < 1.0, "bound.a: must lie in (0, 1)".into());
        need(self.bound.delta > 0.0, "bound.delta: must be positive".into());
        let ex = &self.excursions;
        need(ex.gamma > 0.0 && ex.gamma <= 1.0, format!("excursions.gamma: {} outside (0, 1]", ex.gamma));
        need(!ex.z.is_empty() && ex.z.len() == self.d, "excursions.z: length must equal d".into());
        need(ex.levels.iter().all(|&l| l >= 0.0), "excursions.levels: must be nonnegative".into());
        let ap = &self.appendix;
        for (i, &r) in ap.rs.iter().enumerate() {
            need(r > 0.0 && r < 0.25, format!("appendix.rs[{i}]: {r} outside (0, 1/4)"));
        }
        need(!ap.ks.is_empty(), "appendix.ks: must not be empty".into());
        need(ap.l >= 1, "appendix.l: must be at least 1".into());
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(errs))
        }
    }
}
