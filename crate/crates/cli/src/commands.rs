//! One function per subcommand. Each returns whether its checks passed.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rilab_core::appendix::{a_l_study, capacity_ratio_experiment, write_long_csv, BoxUnionConfig};
use rilab_core::continuum::{brownian_capacity, CapacityMethod, ContinuumOptions, ProfileBase, ProfileField};
use rilab_core::disconnection::DisconnectionLab;
use rilab_core::entropic::{profile_distance_pipeline, EntropicConfig};
use rilab_core::excursions::{count_excursions, scales, write_excursions_csv, ScalePair};
use rilab_core::gauge::{g_norm, remainder, verify_perturbation, Gauge, Potential};
use rilab_core::green::{green, GreenKernel};
use rilab_core::metrics::{distances, profile_measure, scaled_measure, ScaledMeasure};
use rilab_core::pointset::PointSet;
use rilab_core::potential::{equilibrium, Backend, EquilibriumParams, PotentialTable};
use rilab_core::sampler::{sample_ensemble, InterlacementEnsemble, SampleOptions, WindowMeasure};
use rilab_core::verify::{laplace_check, tail_check, OccupationSampler};
use rilab_core::{blow_up, BlowUpPair, CompactSet, DiscreteBox, LatticePoint};
use serde_json::{json, Value};

use crate::config::{BackendChoice, Config};
use crate::emit::{sha256_file, Emitter, RunManifest};

/// What a command leaves for the manifest.
pub struct Outcome {
    pub pass: bool,
    pub backends: Value,
    pub tolerances: Value,
}

pub struct Ctx<'a> {
    pub cfg: &'a Config,
    pub seed: u64,
    pub paranoid: bool,
    pub toy_scale: bool,
    pub out_dir: &'a Path,
}

fn eq_params(cfg: &Config, seed: u64) -> EquilibriumParams {
    EquilibriumParams {
        backend: match cfg.backend {
            BackendChoice::Auto => None,
            BackendChoice::Exact => Some(Backend::Exact),
            BackendChoice::MonteCarlo => Some(Backend::MonteCarlo),
        },
        tol: cfg.tolerances.equilibrium,
        mc_walks: cfg.budgets.mc_walks,
        seed,
        ..Default::default()
    }
}

fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::Exact => "exact",
        Backend::MonteCarlo => "monte-carlo",
    }
}

fn pair(cfg: &Config) -> Result<BlowUpPair> {
    Ok(blow_up(&cfg.set, cfg.m, cfg.n)?)
}

fn point(coords: &[i32]) -> Result<LatticePoint> {
    Ok(LatticePoint::new(coords)?)
}

fn coords_csv(x: &LatticePoint) -> String {
    x.coords().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn head(d: usize, prefix: &str) -> String {
    (0..d).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(",")
}

fn ok(pass: bool, backends: Value, tolerances: Value) -> Result<Outcome> {
    Ok(Outcome { pass, backends, tolerances })
}

pub fn green_cmd(ctx: &Ctx, em: &mut Emitter, d: usize, x: &str) -> Result<Outcome> {
    let mut c: Vec<i32> = x
        .split(',')
        .map(|s| s.trim().parse::<i32>().map_err(|e| anyhow!("--x: {e}")))
        .collect::<Result<_>>()?;
    if c.len() > d {
        bail!("--x: {} coordinates for d = {d}", c.len());
    }
    c.resize(d, 0);
    let p = point(&c)?;
    let tol = ctx.cfg.tolerances.green;
    let g = green(d, &p, tol)?;
    println!("{g:.10}");
    em.provenance("bessel-quadrature", tol);
    em.csv("green.csv", |w| {
        writeln!(w, "{},g", head(d, "x"))?;
        writeln!(w, "{},{:.15e}", coords_csv(&p), g)?;
        Ok(())
    })?;
    ok(true, json!({"green": "bessel-quadrature"}), json!({"green": tol}))
}

pub fn capacity(ctx: &Ctx, em: &mut Emitter) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let p = pair(cfg)?;
    let t = equilibrium(&p.a_n, &eq_params(cfg, ctx.seed))?;
    let method = match cfg.set {
        CompactSet::Union { .. } => CapacityMethod::WalkOnSpheres,
        _ => CapacityMethod::Scaling,
    };
    let opts = ContinuumOptions { tol: cfg.tolerances.continuum, seed: ctx.seed, ..Default::default() };
    let bc = brownian_capacity(&cfg.set, method, &opts)?;
    let d = cfg.d as f64;
    let ratio = d * t.cap / (cfg.n as f64).powi(cfg.d as i32 - 2) / bc.value;
    println!("cap_Z(A_N) = {:.10}  cap(A) = {:.10}  d cap_Z / (N^(d-2) cap) = {:.6}", t.cap, bc.value, ratio);
    em.provenance(backend_name(t.backend), cfg.tolerances.equilibrium);
    em.csv("capacity.csv", |w| {
        writeln!(w, "quantity,value,se,bias")?;
        writeln!(w, "cap_discrete,{:.15e},{:.6e},{:.6e}", t.cap, t.cap_se, t.bias_bound)?;
        writeln!(w, "cap_brownian,{:.15e},{:.6e},{:.6e}", bc.value, bc.se, bc.bias)?;
        writeln!(w, "scaled_ratio,{:.15e},0,0", ratio)?;
        Ok(())
    })?;
    ok(
        true,
        json!({"equilibrium": backend_name(t.backend), "continuum": format!("{method:?}")}),
        json!({"equilibrium": cfg.tolerances.equilibrium, "continuum": cfg.tolerances.continuum}),
    )
}

pub fn equilibrium_cmd(ctx: &Ctx, em: &mut Emitter) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let p = pair(cfg)?;
    let t = equilibrium(&p.a_n, &eq_params(cfg, ctx.seed))?;
    let window: Vec<LatticePoint> = p.a_n.clone();
    em.provenance(backend_name(t.backend), cfg.tolerances.equilibrium);
    em.csv("equilibrium.csv", |w| t.write_csv(w, &window))?;
    em.json(
        "equilibrium.json",
        &json!({
            "sites": p.a_n.len(),
            "cap": t.cap,
            "cap_se": t.cap_se,
            "backend": backend_name(t.backend),
            "residual": t.residual,
            "bias_bound": t.bias_bound,
        }),
    )?;
    println!("cap = {:.12} ({} sites, residual {:.2e})", t.cap, p.a_n.len(), t.residual);
    let pass = t.backend != Backend::Exact || t.residual <= cfg.tolerances.residual.max(cfg.tolerances.equilibrium);
    ok(
        pass,
        json!({"equilibrium": backend_name(t.backend)}),
        json!({"equilibrium": cfg.tolerances.equilibrium, "residual": cfg.tolerances.residual}),
    )
}

/// Ensemble on the enclosing box of the blow-up pair.
fn box_ensemble(ctx: &Ctx, u_max: f64) -> Result<(InterlacementEnsemble, Arc<PotentialTable>)> {
    let cfg = ctx.cfg;
    let p = pair(cfg)?;
    let pts: Vec<LatticePoint> = p.enclosing_box().points().collect();
    let window = Arc::new(PointSet::new(&pts));
    let table = Arc::new(equilibrium(window.points(), &eq_params(cfg, ctx.seed))?);
    let opts = SampleOptions { paranoid: ctx.paranoid, table: ctx.paranoid.then(|| table.clone()) };
    let ens = sample_ensemble(window, &WindowMeasure::from_table(&table), u_max, cfg.rho, ctx.seed, &opts)?;
    Ok((ens, table))
}

pub fn sample(ctx: &Ctx, em: &mut Emitter) -> Result<Outcome> {
    let (ens, table) = box_ensemble(ctx, ctx.cfg.u)?;
    em.raw("ensemble.jsonl", |w| ens.write_jsonl(w))?;
    let summary = json!({
        "u_max": ens.u_max,
        "trajectories": ens.trajectories.len(),
        "expected": ens.u_max * ens.cap,
        "cap": ens.cap,
        "rho": ens.rho,
        "bias_bound": ens.bias_bound,
        "backward_checked": ens.backward_checked,
    });
    em.json("sample.json", &summary)?;
    println!("{} trajectories (mean {:.3})", ens.trajectories.len(), ens.u_max * ens.cap);
    ok(
        true,
        json!({"equilibrium": backend_name(table.backend), "sampler": "walk-with-killing"}),
        json!({"equilibrium": ctx.cfg.tolerances.equilibrium, "rho": ens.rho}),
    )
}

pub fn occupation(ctx: &Ctx, em: &mut Emitter) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let (ens, table) = box_ensemble(ctx, cfg.u)?;
    let field = ens.occupation_field(cfg.u)?;
    em.provenance(backend_name(table.backend), ens.bias_bound);
    em.csv("occupation.csv", |w| {
        writeln!(w, "{},L", head(cfg.d, "x"))?;
        for (x, l) in field.iter() {
            writeln!(w, "{},{:.12e}", coords_csv(&x), l)?;
        }
        Ok(())
    })?;
    let p = pair(cfg)?;
    let mean_a = p.a_n.iter().map(|x| field.get(x)).sum::<f64>() / p.a_n.len() as f64;
    em.json(
        "occupation.json",
        &json!({"u": cfg.u, "sites": field.values.len(), "total": field.total(), "mean_a": mean_a, "bias_bound": ens.bias_bound}),
    )?;
    println!("mean over A_N = {mean_a:.6} (u = {})", cfg.u);
    ok(
        true,
        json!({"equilibrium": backend_name(table.backend)}),
        json!({"bias_bound": ens.bias_bound}),
    )
}

fn lab(cfg: &Config) -> Result<DisconnectionLab> {
    Ok(DisconnectionLab::new(pair(cfg)?, Some(cfg.rho))?)
}

pub fn disconnect(ctx: &Ctx, em: &mut Emitter) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let rows = lab(cfg)?.probability(&cfg.levels, cfg.budgets.replicas, ctx.seed)?;
    em.provenance("union-find", 0.0);
    em.csv("disconnect.csv", |w| {
        writeln!(w, "u,p,se,n")?;
        for (u, e) in &rows {
            writeln!(w, "{},{:.12e},{:.6e},{}", u, e.mean, e.se, e.n)?;
        }
        Ok(())
    })?;
    for (u, e) in &rows {
        println!("u = {u}: P[D] = {:.4} +- {:.4}", e.mean, e.se);
    }
    ok(true, json!({"connectivity": "union-find"}), json!({}))
}

pub fn condition(ctx: &Ctx, em: &mut Emitter) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let b = &cfg.budgets;
    let prof = lab(cfg)?.conditional_profile(cfg.u, ctx.seed, b.max_tries, b.min_hits, |r, _| r.occurred)?;
    em.provenance("union-find", 0.0);
    em.csv("condition_sites.csv", |w| prof.write_sites_csv(w))?;
    em.csv("condition_replicas.csv", |w| prof.write_replicas_csv(w))?;
    em.json(
        "condition.json",
        &json!({
            "u": prof.u,
            "hits": prof.hits,
            "tries": prof.tries,
            "excess_a": prof.summary,
            "unconditional_a": prof.unconditional_a,
        }),
    )?;
    println!(
        "{} hits in {} tries; mean over A_N of E[L|D] - u = {:.4} +- {:.4}",
        prof.hits, prof.tries, prof.summary.mean, prof.summary.se
    );
    ok(true, json!({"connectivity": "union-find"}), json!({}))
}

fn kernel(cfg: &Config, range: usize) -> Result<GreenKernel> {
    Ok(GreenKernel::new(cfg.d, range, cfg.tolerances.green)?)
}

fn random_potential(rng: &mut ChaCha8Rng, k: &GreenKernel, sites: &[LatticePoint], scale: f64) -> Potential {
    let v = Potential::new(sites.iter().map(|x| (*x, rng.gen_range(-scale..scale))));
    let n = g_norm(k, &v);
    if n < 0.95 {
        v
    } else {
        v.scale(0.9 / n)
    }
}

pub fn gauge_verify(ctx: &Ctx, em: &mut Emitter, trials: usize, support: u32) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let d = cfg.d;
    let k = kernel(cfg, 4 * support as usize + 8)?;
    let lo = -(support as i32) / 2;
    let sites: Vec<LatticePoint> = DiscreteBox::cube(point(&vec![lo; d])?, support)?.points().collect();
    let probes = [
        LatticePoint::unit(d, 0)?.shifted(0, support as i32 + 1),
        LatticePoint::unit(d, 1)?.shifted(1, -(support as i32) - 3),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let tol = cfg.tolerances.residual;
    let mut rows = Vec::new();
    for i in 0..trials {
        let v = random_potential(&mut rng, &k, &sites, cfg.gauge.scale);
        let vp = random_potential(&mut rng, &k, &sites, cfg.gauge.scale);
        let r = verify_perturbation(&k, &v, &vp, &probes)?;
        let g = Gauge::new(&k, &v)?;
        let dir = (g.pairing_sq() - g.pairing() - g.dirichlet_energy(&k)).abs();
        rows.push((i, r, dir));
    }
    let worst = rows.iter().map(|(_, r, dir)| r.max_residual().max(*dir)).fold(0.0, f64::max);
    let pass = worst <= tol;
    em.provenance("dense-lu", tol);
    em.csv("gauge_verify.csv", |w| {
        writeln!(w, "trial,first,second,third,dirichlet,perturbation_norm,pass")?;
        for (i, r, dir) in &rows {
            let third = r.third.map(|t| format!("{t:.3e}")).unwrap_or_else(|| "skipped".into());
            let p = r.max_residual().max(*dir) <= tol;
            writeln!(w, "{i},{:.3e},{:.3e},{third},{dir:.3e},{:.6},{}", r.first, r.second, r.perturbation_norm, p as u8)?;
        }
        Ok(())
    })?;
    em.json(
        "gauge_verify.json",
        &json!({"trials": trials, "support": support, "max_residual": worst, "tolerance": tol, "pass": pass}),
    )?;
    println!("{trials} trials on {support}^{d} supports: max residual {worst:.3e} ({})", if pass { "pass" } else { "FAIL" });
    ok(pass, json!({"linear_solve": "dense-lu"}), json!({"residual": tol, "green": cfg.tolerances.green}))
}

pub fn laplace_verify(ctx: &Ctx, em: &mut Emitter) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let k = kernel(cfg, 8)?;
    let o = LatticePoint::origin(cfg.d)?;
    let v = Potential::delta(o, cfg.laplace.s);
    let n = cfg.budgets.ensembles;
    let c = laplace_check(&k, &v, cfg.u, cfg.rho, n, ctx.seed)?;
    let slack = c.analytic * c.analytic.ln().abs() * c.bias_bound;
    let zt = cfg.tolerances.z;
    let mgf_pass = (c.empirical.mean - c.analytic).abs() <= zt * c.empirical.se + slack;
    let s = OccupationSampler::new(&[o], cfg.rho)?;
    let xs = s.samples(cfg.u, n, rilab_core::rng::derive_seed(ctx.seed, 1), |l| l.get(&o))?;
    let mean = rilab_core::stats::Estimate::from_samples(&xs);
    let mean_pass = (mean.mean - cfg.u).abs() <= zt * mean.se + cfg.u * s.bias_bound;
    let pass = mgf_pass && mean_pass;
    em.json(
        "laplace_verify.json",
        &json!({"mgf": c, "mgf_pass": mgf_pass, "mean": mean, "mean_target": cfg.u, "mean_pass": mean_pass}),
    )?;
    println!(
        "E exp(s L_0) = {:.5} +- {:.5} vs {:.5}; E L_0 = {:.4} +- {:.4} vs {} ({})",
        c.empirical.mean,
        c.empirical.se,
        c.analytic,
        mean.mean,
        mean.se,
        cfg.u,
        if pass { "pass" } else { "FAIL" }
    );
    ok(pass, json!({"sampler": "walk-with-killing"}), json!({"z": zt, "bias_bound": c.bias_bound}))
}

pub fn bound_verify(ctx: &Ctx, em: &mut Emitter) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let k = kernel(cfg, 8)?;
    let o = LatticePoint::origin(cfg.d)?;
    let single = equilibrium(&[o], &eq_params(cfg, ctx.seed))?;
    let v = Potential::new(single.support.iter().map(|(x, e)| (*x, cfg.bound.a * e)));
    let eta = Potential::delta(o, 1.0);
    let b = &cfg.bound;
    let c = tail_check(&k, &v, &eta, b.delta, cfg.u, b.t, cfg.rho, cfg.budgets.ensembles, ctx.seed)?;
    let r1 = remainder(&k, b.delta, &eta, &v)?;
    let r2 = remainder(&k, b.delta / 2.0, &eta, &v)?;
    let quadratic = r2 <= r1 / 3.0;
    let pass = c.consistent && quadratic;
    em.json(
        "bound_verify.json",
        &json!({"tail": c, "remainder": r1, "remainder_half": r2, "quadratic": quadratic, "pass": pass}),
    )?;
    println!(
        "P >= {:.4} (99% lower) vs bound {:.4}; R(delta/2)/R(delta) = {:.4} ({})",
        c.lower,
        c.bound.bound,
        r2 / r1,
        if pass { "pass" } else { "FAIL" }
    );
    ok(pass, json!({"sampler": "walk-with-killing"}), json!({"level": c.level}))
}

fn flat_measure(cfg: &Config) -> Result<ScaledMeasure> {
    let rad = (cfg.n as f64 * cfg.r).floor() as u32;
    let nd = (cfg.n as f64).powi(cfg.d as i32);
    let mut m = ScaledMeasure::zero(cfg.d, cfg.r);
    for x in DiscreteBox::ball(LatticePoint::origin(cfg.d)?, rad).points() {
        m.coords.extend(x.coords().iter().map(|&c| c as f64 / cfg.n as f64));
        m.masses.push(cfg.u / nd);
    }
    Ok(m)
}

pub fn distance(ctx: &Ctx, em: &mut Emitter) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let lab = lab(cfg)?;
    let ens = lab.ensemble(cfg.u, ctx.seed)?;
    let field = ens.occupation_field(cfg.u)?;
    let mu = scaled_measure(&field, cfg.n, cfg.r)?;
    let pf = ProfileField::new(cfg.u, cfg.u_bar, ProfileBase::Continuum(cfg.set.clone()))?;
    let prof = profile_measure(&pf, cfg.d, cfg.n, cfg.r)?;
    let flat = flat_measure(cfg)?;
    let to_profile = distances(&mu, &prof, cfg.budgets.max_atoms)?;
    let to_flat = distances(&mu, &flat, cfg.budgets.max_atoms)?;
    em.provenance("network-simplex", to_profile.coarsening_bound);
    em.csv("distance.csv", |w| {
        writeln!(w, "target,d_w,d_r,d_bl,gap,cell,coarsening_bound")?;
        for (name, r) in [("profile", &to_profile), ("flat", &to_flat)] {
            writeln!(
                w,
                "{name},{:.12e},{:.12e},{:.12e},{:.3e},{},{:.6e}",
                r.d_w,
                r.d_r,
                r.d_bl,
                r.gap,
                r.cell.unwrap_or(0.0),
                r.coarsening_bound
            )?;
        }
        Ok(())
    })?;
    println!("d_R to profile {:.6}, to u Leb {:.6}", to_profile.d_r, to_flat.d_r);
    ok(true, json!({"transport": "network-simplex"}), json!({"coarsening_bound": to_profile.coarsening_bound}))
}

pub fn profile_distance(ctx: &Ctx, em: &mut Emitter) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let ec = EntropicConfig {
        set: cfg.set.clone(),
        n: cfg.n,
        m: cfg.m,
        u: cfg.u,
        r: cfg.r,
        cell: cfg.distance.cell,
        u_bar_grid: cfg.distance.u_bar_grid.clone(),
        budget: cfg.budgets.max_tries,
        min_hits: cfg.budgets.min_hits,
        unconditioned: cfg.budgets.unconditioned,
        seed: ctx.seed,
        rho: Some(cfg.rho),
        bootstrap: cfg.budgets.bootstrap,
    };
    let rep = profile_distance_pipeline(&ec)?;
    em.provenance("network-simplex", (cfg.d as f64).sqrt() * cfg.distance.cell);
    em.csv("profile_distance.csv", |w| rep.write_rows_csv(w))?;
    let mut summary = serde_json::to_value(&rep)?;
    if let Some(m) = summary.as_object_mut() {
        m.remove("rows");
    }
    em.json("profile_distance.json", &summary)?;
    println!(
        "u_bar fit {}; excess over A_N {:.4} +- {:.4} (z {:.2}); median d_R cond {:.3} vs uncond {:.3} (z {:.2})",
        rep.u_bar_fit,
        rep.excess_a.mean,
        rep.excess_a.se,
        rep.z_excess,
        rep.median_conditioned.mean,
        rep.median_unconditioned.mean,
        rep.z_distance
    );
    ok(true, json!({"transport": "network-simplex"}), json!({"cell": cfg.distance.cell}))
}

pub fn excursions(ctx: &Ctx, em: &mut Emitter) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let ex = &cfg.excursions;
    let scale: ScalePair = if ctx.toy_scale {
        ScalePair::toy(cfg.d, ex.toy_l0, ex.toy_k)?
    } else {
        scales(cfg.d, ex.n, ex.gamma, ex.k)?
    };
    let z = point(&ex.z)?;
    let uz = scale.u_box(&z)?;
    if uz.len() > 250_000 {
        bail!("excursions: U_z has {} sites; rerun with --toy-scale or a smaller n", uz.len());
    }
    let pts: Vec<LatticePoint> = uz.points().collect();
    let window = Arc::new(PointSet::new(&pts));
    let table = equilibrium(window.points(), &eq_params(cfg, ctx.seed))?;
    let u_max = ex.levels.iter().cloned().fold(0.0, f64::max);
    let rho = cfg.rho.max(2.0 * window.diameter() + 8.0);
    let ens = sample_ensemble(window, &WindowMeasure::from_table(&table), u_max, rho, ctx.seed, &SampleOptions::default())?;
    let recs = ex
        .levels
        .iter()
        .map(|&u| count_excursions(&ens, u, &z, &scale))
        .collect::<rilab_core::Result<Vec<_>>>()?;
    em.provenance(backend_name(table.backend), ens.bias_bound);
    em.csv("excursions.csv", |w| write_excursions_csv(w, &recs))?;
    em.json("excursions.json", &json!({"scale": scale, "records": recs}))?;
    for r in &recs {
        println!("u = {}: {} excursions, local time {:.4}", r.u, r.count, r.local_time);
    }
    ok(true, json!({"equilibrium": backend_name(table.backend)}), json!({"rho": rho}))
}

pub fn appendix_a(ctx: &Ctx, em: &mut Emitter) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let ap = &cfg.appendix;
    let params = eq_params(cfg, ctx.seed);
    let mut rows = Vec::new();
    let mut pass = true;
    let mut deltas = Vec::new();
    for &r in &ap.rs {
        let single = capacity_ratio_experiment(&BoxUnionConfig::single(cfg.d, ap.l, ap.ks[0], r)?, &params, ap.max_points)?;
        let want = (1.0 + 2.0 * r).powi(cfg.d as i32 - 2);
        pass &= (single.single_box_ratio - want).abs() <= 1e-6;
        let mut ds = Vec::new();
        for &k in &ap.ks {
            let rep = capacity_ratio_experiment(&BoxUnionConfig::two_boxes(cfg.d, ap.l, k, r)?, &params, ap.max_points)?;
            pass &= rep.pass();
            ds.push(rep.delta);
            rows.extend(rep.long_rows());
        }
        pass &= ds.windows(2).all(|w| w[1] < w[0]);
        println!("r = {r}: delta over K = {:?}: {ds:?}", ap.ks);
        deltas.push(json!({"r": r, "ks": ap.ks, "delta": ds, "single_box_ratio": single.single_box_ratio}));
    }
    let al = a_l_study(cfg.d, &ap.a_l, &params)?;
    let dev: Vec<f64> = al.iter().map(|x| (x.a_l - 1.0).abs()).collect();
    pass &= dev.windows(2).all(|w| w[1] < w[0]);
    println!("a_L over L = {:?}: {:?}", ap.a_l, al.iter().map(|x| x.a_l).collect::<Vec<_>>());
    em.provenance("exact", cfg.tolerances.equilibrium);
    em.csv("appendix_a.csv", |w| write_long_csv(w, &rows))?;
    em.csv("appendix_a_l.csv", |w| {
        writeln!(w, "L,cap_discrete,cap_brownian,a_L")?;
        for x in &al {
            writeln!(w, "{},{:.12e},{:.12e},{:.12e}", x.l, x.cap_discrete, x.cap_brownian, x.a_l)?;
        }
        Ok(())
    })?;
    em.json("appendix_a.json", &json!({"deltas": deltas, "a_l": al, "pass": pass}))?;
    println!("{}", if pass { "pass" } else { "FAIL" });
    ok(pass, json!({"equilibrium": "exact", "continuum": "scaling"}), json!({"single_box": 1e-6}))
}

/// Summarizes every `<out-dir>/*/manifest.json` and rechecks output digests.
pub fn report(ctx: &Ctx, em: &mut Emitter) -> Result<Outcome> {
    let mut entries = Vec::new();
    let mut pass = true;
    let mut dirs: Vec<_> = fs::read_dir(ctx.out_dir)
        .with_context(|| format!("reading {}", ctx.out_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file() && p.file_name().is_some_and(|n| n != "report"))
        .collect();
    dirs.sort();
    for dir in dirs {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let m: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}/manifest.json", dir.display()))?;
        let mut intact = true;
        for o in &m.outputs {
            intact &= sha256_file(&dir.join(&o.file)).map(|h| h == o.sha256).unwrap_or(false);
        }
        pass &= intact && m.status == "pass";
        entries.push((dir.file_name().unwrap_or_default().to_string_lossy().to_string(), m, intact));
    }
    em.provenance("none", 0.0);
    em.csv("report.csv", |w| {
        writeln!(w, "dir,command,status,intact,outputs,wall_clock_seconds")?;
        for (d, m, intact) in &entries {
            writeln!(w, "{d},{},{},{},{},{:.3}", m.command, m.status, *intact as u8, m.outputs.len(), m.wall_clock_seconds)?;
        }
        Ok(())
    })?;
    for (d, m, intact) in &entries {
        println!("{d:20} {:16} {:5} {}", m.command, m.status, if *intact { "intact" } else { "DIGEST MISMATCH" });
    }
    ok(pass, json!({}), json!({}))
}
