use std::path::PathBuf;

use anyhow::{anyhow, Context as _, Result};
use rayon::prelude::*;

use leibenson_core::config::{RunConfig, RunSetup};
use leibenson_core::degiorgi::IterationTrace;
use leibenson_core::integrator::Trajectory;
use leibenson_core::oracle::relative_l1_error;
use leibenson_core::propagation::{
    dead_core_time, default_threshold, fit_rate, scaling_slope, track_support, RateFit, SupportTrace,
};
use leibenson_core::suite::{self, Solution, VerifyReport};
use leibenson_core::{Error, Regime};

use crate::output::{self, num, OutDir};

/// Settings shared by every subcommand after the command-line overrides.
pub struct RunContext {
    pub config: RunConfig,
    pub out: PathBuf,
    pub command: &'static str,
}

impl RunContext {
    fn prepare(&self) -> Result<RunSetup> {
        Ok(self.config.prepare()?)
    }

    fn out_dir(&self) -> Result<OutDir> {
        OutDir::create(&self.out)
    }
}

fn manifest(command: &str, setup: &RunSetup) -> Result<String> {
    Ok(format!(
        "# leibenson {} `{command}`; resolved configuration, reloadable with --config\n{}",
        env!("CARGO_PKG_VERSION"),
        setup.resolved.to_toml()?
    ))
}

/// Leaves the failing step in the output directory before propagating.
fn guard<T>(out: &OutDir, setup: &RunSetup, r: leibenson_core::Result<T>) -> Result<T> {
    if let Err(e @ Error::SolverFailure { .. }) = &r {
        let text = format!(
            "{e}\n\np = {}, q = {}, cells = {}, dt = {:e}, t_end = {:e}, newton_tol = {:e}\n",
            setup.params.p(),
            setup.params.q(),
            setup.grid.cells(),
            setup.time.dt,
            setup.time.t_end,
            setup.time.newton_tol
        );
        out.write_text("solver_failure.txt", &text)?;
    }
    Ok(r?)
}

fn write_trajectory(out: &OutDir, setup: &RunSetup, traj: &Trajectory) -> Result<()> {
    let nodes = setup.grid.nodes();
    let mut rows = Vec::with_capacity(traj.snapshots.len() * nodes.len());
    for s in &traj.snapshots {
        for (r, u) in nodes.iter().zip(s.values()) {
            rows.push(vec![num(s.time()), num(*r), num(*u)]);
        }
    }
    out.write_table("trajectory.csv", &["time", "r", "u"], &rows)?;
    let mut norms = vec![norm_row(traj.start_time(), traj.initial_norms.as_array())];
    norms.extend(traj.steps.iter().map(|s| norm_row(s.time, s.norms.as_array())));
    out.write_table("norms.csv", &["time", "L1", "L2", "Lq+1", "Linf"], &norms)?;
    out.write_text("plot_trajectory.py", &output::plot_trajectory())?;
    out.write_text("plot_norms.py", &output::plot_norms())?;
    Ok(())
}

fn norm_row(t: f64, n: [f64; 4]) -> Vec<String> {
    std::iter::once(t).chain(n).map(num).collect()
}

fn write_solution(out: &OutDir, command: &str, setup: &RunSetup, sol: &Solution) -> Result<()> {
    out.write_text("manifest.toml", &manifest(command, setup)?)?;
    write_trajectory(out, setup, &sol.limit)?;
    let header = [
        "N",
        "floor",
        "ceiling",
        "min_excess",
        "max_value",
        "lower_ok",
        "upper_ok",
        "truncation_inactive",
        "distance",
    ];
    let mut rows = Vec::new();
    if let Some(c) = &sol.continuation {
        for l in &c.levels {
            let b = &l.barriers;
            rows.push(vec![
                num(b.n),
                num(b.floor),
                num(b.ceiling),
                num(b.min_excess),
                num(b.max_value),
                b.lower_ok().to_string(),
                b.upper_ok().to_string(),
                l.truncation_inactive.to_string(),
                l.distance.map(num).unwrap_or_default(),
            ]);
        }
        rows.push(vec![
            "inf".into(),
            num(0.0),
            String::new(),
            num(c.limit.running_min()),
            num(c.limit.running_max()),
            String::new(),
            String::new(),
            String::new(),
            num(c.limit_distance),
        ]);
    }
    out.write_table("barriers.csv", &header, &rows)?;
    if let Some(reason) = &sol.stalled {
        out.write_text("continuation_stalled.txt", reason)?;
    }
    Ok(())
}

fn solution_ok(sol: &Solution) -> bool {
    sol.stalled.is_none()
        && sol
            .continuation
            .as_ref()
            .is_none_or(|c| c.levels.iter().all(|l| l.barriers.passed()))
}

pub fn solve(ctx: &RunContext) -> Result<bool> {
    let setup = ctx.prepare()?;
    let out = ctx.out_dir()?;
    let sol = guard(&out, &setup, suite::solve(&setup))?;
    write_solution(&out, ctx.command, &setup, &sol)?;
    let ok = solution_ok(&sol);
    if let Some(worst) = write_oracle_error(&out, &setup, &sol.limit)? {
        println!("oracle: worst relative L1 error {worst:.3e} while the front is inside 0.9 R");
    }
    println!(
        "solve: {} snapshots to t = {:e}, {} steps; {}",
        sol.limit.snapshots.len(),
        sol.limit.end_time(),
        sol.limit.steps.len(),
        if ok { "barriers and continuation ok" } else { "barrier or continuation failure" }
    );
    Ok(ok)
}

/// Relative L¹ distance to the exact self-similar solution at each snapshot,
/// when the data were sampled from one. Returns the worst value while the
/// exact front is inside 0.9 R.
fn write_oracle_error(out: &OutDir, setup: &RunSetup, traj: &Trajectory) -> Result<Option<f64>> {
    let Some(profile) = &setup.oracle else {
        return Ok(None);
    };
    let limit = 0.9 * setup.grid.radius();
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for s in &traj.snapshots {
        let err = relative_l1_error(profile, &setup.grid, s.values(), s.time(), 0);
        let front = profile.support_radius(s.time());
        if front.is_none_or(|f| f <= limit) {
            worst = worst.max(err);
        }
        rows.push(vec![num(s.time()), num(err), front.map(num).unwrap_or_default()]);
    }
    out.write_table("oracle_error.csv", &["time", "rel_l1_error", "exact_support"], &rows)?;
    Ok(Some(worst))
}

fn write_ladder(out: &OutDir, trace: &IterationTrace) -> Result<()> {
    out.write_rows("ladder.csv", &trace.rows())?;
    out.write_text("plot_ladder.py", &output::plot_ladder())?;
    Ok(())
}

fn write_verify(out: &OutDir, command: &str, setup: &RunSetup, rep: &VerifyReport) -> Result<()> {
    write_solution(out, command, setup, &rep.solution)?;
    out.write_rows("verify.csv", &rep.monitors)?;
    if let Some(l) = &rep.ladder {
        write_ladder(out, l)?;
    }
    if let Some(c) = &rep.caccioppoli {
        out.write_rows("caccioppoli.csv", &c.samples)?;
    }
    if let Some(n) = &rep.norm_decay {
        out.write_rows("norm_decay.csv", &n.samples)?;
    }
    Ok(())
}

fn print_monitors(rep: &VerifyReport) {
    for m in &rep.monitors {
        let status = if m.skipped {
            "skip"
        } else if m.passed {
            "pass"
        } else {
            "FAIL"
        };
        println!("{status:>4}  {:<24} {:>12.4e}  {}", m.monitor, m.value, m.detail);
    }
}

pub fn verify(ctx: &RunContext) -> Result<bool> {
    let setup = ctx.prepare()?;
    let out = ctx.out_dir()?;
    let rep = guard(&out, &setup, suite::verify(&setup))?;
    write_verify(&out, ctx.command, &setup, &rep)?;
    print_monitors(&rep);
    let failures = rep.failures();
    if failures.is_empty() {
        println!("verify: all monitors pass");
    } else {
        println!("verify: failed: {}", failures.join(", "));
    }
    Ok(failures.is_empty())
}

struct RatePoint {
    amplitude: f64,
    fit: RateFit,
    trace: SupportTrace,
}

fn rate_point(base: &RunConfig, amplitude: f64, out: &OutDir) -> Result<RatePoint> {
    let cfg = base.with_amplitude(amplitude)?;
    let setup = cfg.prepare()?;
    let delta = setup.params.delta();
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!(
            "fit-rate needs the slow regime (δ > 0), got δ = {delta} at p = {}, q = {}",
            setup.params.p(),
            setup.params.q()
        ))
        .into());
    }
    let traj = guard(out, &setup, suite::run_limit_from(&setup, &setup.u0))?;
    let thresh = default_threshold(&traj, setup.resolved.diagnostics.support_threshold);
    let trace = track_support(&traj, &setup.grid, thresh)?;
    let fit = fit_rate(&trace, &setup.params, setup.grid.manifold(), setup.sigma)?;
    Ok(RatePoint { amplitude, fit, trace })
}

#[derive(Clone, Copy)]
struct DeadCore {
    sweep: &'static str,
    amplitude: f64,
    b0: f64,
    t0: f64,
}

fn dead_core_point(base: &RunConfig, sweep: &'static str, b0: f64, amplitude: f64, out: &OutDir) -> Result<DeadCore> {
    let setup = base.dead_core_layout(b0, amplitude).prepare()?;
    let traj = guard(out, &setup, suite::run_limit_from(&setup, &setup.u0))?;
    let t0 = dead_core_time(&traj, &setup.grid, b0, 1e-6 * amplitude)?;
    if t0 >= traj.end_time() {
        return Err(Error::InsufficientWindow(format!(
            "the half ball of radius {} stayed dead until t_end = {:e}; raise sweep.dead_core_t_end",
            0.5 * b0,
            traj.end_time()
        ))
        .into());
    }
    Ok(DeadCore { sweep, amplitude, b0, t0 })
}

pub fn fit_rate_cmd(ctx: &RunContext) -> Result<bool> {
    let setup = ctx.prepare()?;
    let delta = setup.params.delta();
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!(
            "fit-rate needs the slow regime (δ > 0), got δ = {delta}"
        ))
        .into());
    }
    let out = ctx.out_dir()?;
    out.write_text("manifest.toml", &manifest(ctx.command, &setup)?)?;
    let base = &ctx.config;
    let sweep = &base.sweep;
    let diag = setup.resolved.diagnostics;

    // Rate fits at every listed [p, q] point, or at the configured exponents.
    let variants: Vec<RunConfig> = if sweep.points.is_empty() {
        vec![base.clone()]
    } else {
        sweep.points.iter().map(|&[p, q]| base.with_exponents(p, q)).collect()
    };
    let jobs: Vec<(&RunConfig, f64)> =
        variants.iter().flat_map(|v| sweep.amplitudes.iter().map(move |&a| (v, a))).collect();
    let points: Vec<RatePoint> = jobs
        .par_iter()
        .map(|&(cfg, a)| rate_point(cfg, a, &out))
        .collect::<Result<_>>()?;
    let fits: Vec<RateFit> = points.iter().map(|p| p.fit).collect();
    out.write_rows("rate_fit.csv", &fits)?;
    let mut support = Vec::new();
    for p in &points {
        for (t, r) in p.trace.times.iter().zip(&p.trace.support_radius) {
            support.push(vec![num(*t), num(p.fit.p), num(p.fit.q), num(p.amplitude), num(*r)]);
        }
    }
    out.write_table("support.csv", &["time", "p", "q", "amplitude", "support_radius"], &support)?;
    out.write_text("plot_rate.py", &output::plot_rate())?;
    let mut ok = true;
    for f in &fits {
        let pass = f.rel_err <= diag.rate_tolerance;
        ok &= pass;
        println!(
            "{}  p = {}, q = {}  beta_hat = {:.4}  beta_theory = {:.4}  rel_err = {:.4}",
            if pass { "pass" } else { "FAIL" },
            f.p,
            f.q,
            f.beta_hat,
            f.beta_theory,
            f.rel_err
        );
    }

    let mut jobs: Vec<(&'static str, f64, f64)> = Vec::new();
    if sweep.amplitudes.len() >= 2 {
        jobs.extend(sweep.amplitudes.iter().map(|&a| ("amplitude", sweep.dead_core_radius, a)));
    }
    if sweep.dead_core_radii.len() >= 2 {
        jobs.extend(sweep.dead_core_radii.iter().map(|&b| ("radius", b, 1.0)));
    }
    let cores: Vec<DeadCore> = jobs
        .par_iter()
        .map(|&(kind, b0, a)| dead_core_point(base, kind, b0, a, &out))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<String>> = cores
        .iter()
        .map(|c| vec![c.sweep.to_string(), num(c.amplitude), num(c.b0), num(c.t0)])
        .collect();
    out.write_table("dead_core.csv", &["sweep", "amplitude", "b0_radius", "t0"], &rows)?;
    let mut fit_rows = Vec::new();
    for (kind, expected) in [("amplitude", -delta), ("radius", setup.params.p())] {
        let sel: Vec<&DeadCore> = cores.iter().filter(|c| c.sweep == kind).collect();
        if sel.len() < 2 {
            continue;
        }
        let x: Vec<f64> = sel.iter().map(|c| if kind == "amplitude" { c.amplitude } else { c.b0 }).collect();
        let t0: Vec<f64> = sel.iter().map(|c| c.t0).collect();
        let slope = scaling_slope(&x, &t0).ok_or_else(|| anyhow!("degenerate {kind} sweep"))?;
        let rel = (slope - expected).abs() / expected.abs();
        let pass = rel <= diag.scaling_tolerance;
        ok &= pass;
        println!(
            "{}  dead-core {kind} slope = {slope:.4}  expected = {expected:.4}  rel_err = {rel:.4}",
            if pass { "pass" } else { "FAIL" }
        );
        fit_rows.push(vec![kind.to_string(), num(slope), num(expected), num(rel)]);
    }
    out.write_table("dead_core_fit.csv", &["sweep", "slope", "expected", "rel_err"], &fit_rows)?;
    out.write_text("plot_dead_core.py", &output::plot_dead_core())?;
    Ok(ok)
}

pub fn sweep_cmd(ctx: &RunContext) -> Result<bool> {
    let base = &ctx.config;
    if base.sweep.points.is_empty() {
        return Err(Error::config("sweep.points", "the sweep command needs at least one [p, q] point").into());
    }
    // Validate the base config before fanning out.
    ctx.prepare()?;
    let out = ctx.out_dir()?;
    let results: Vec<(f64, f64, Regime, f64, Vec<&'static str>)> = base
        .sweep
        .points
        .par_iter()
        .map(|&[p, q]| -> Result<_> {
            let cfg = base.with_exponents(p, q);
            let setup = cfg.prepare().with_context(|| format!("sweep point p = {p}, q = {q}"))?;
            let dir = out.sub(&format!("p{p}_q{q}"))?;
            let rep = guard(&dir, &setup, suite::verify(&setup))?;
            write_verify(&dir, ctx.command, &setup, &rep)?;
            Ok((p, q, setup.params.regime(), setup.params.delta(), rep.failures()))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|(p, q, regime, delta, fails)| {
            vec![
                num(*p),
                num(*q),
                num(*delta),
                regime.to_string(),
                fails.is_empty().to_string(),
                fails.join(";"),
            ]
        })
        .collect();
    out.write_table("sweep.csv", &["p", "q", "delta", "regime", "passed", "failed_monitors"], &rows)?;
    let mut ok = true;
    for (p, q, regime, _, fails) in &results {
        ok &= fails.is_empty();
        if fails.is_empty() {
            println!("pass  p = {p}, q = {q} ({regime})");
        } else {
            println!("FAIL  p = {p}, q = {q} ({regime}): {}", fails.join(", "));
        }
    }
    Ok(ok)
}
