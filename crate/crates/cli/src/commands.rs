//! One function per command; each writes its files under the output directory.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use gsbq_core::dsurface::{
    classify_point, full_point, nodal_atlas, sweep_segment, write_crossings_csv, write_points_csv,
    write_sweep_csv, Classification, SurfaceOptions, SweepSpec,
};
use gsbq_core::evolution::{evolve, make_perturbation, EvolveError, EvolveSpec, TrajectorySummary};
use gsbq_core::functionals::{
    direction_closed_forms, h_quadratic_form, instability_direction_forms, wave_report,
};
use gsbq_core::grid::{make_grid, Grid, StatePair};
use gsbq_core::model::{in_domain, kernel_eval, kernel_oracle};
use gsbq_core::petviashvili::{solve_ground_state, SolitaryWave, SolveOptions};
use serde::Serialize;
use serde_json::json;

use crate::config::{CommandName, RunConfig};
use crate::CliError;

/// Points at which the kernel closed form is checked against the oracle.
pub const KERNEL_CHECK_POINTS: [(f64, f64); 4] = [(-3.0, 0.0), (-2.0, 0.0), (0.0, 0.0), (1.0, 0.3)];
pub const KERNEL_CHECK_X: [f64; 3] = [0.0, 1.0, 5.0];

fn num(v: f64) -> String {
    if v.is_finite() {
        // -0 prints as 0
        format!("{:.16e}", v + 0.0)
    } else {
        String::new()
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn at_point(cfg: &RunConfig, e: impl std::fmt::Display) -> CliError {
    let p = &cfg.params;
    CliError::Compute(format!(
        "at (beta = {}, c = {}, p = {}, {}): {e}",
        p.beta, p.c, p.p, p.parity
    ))
}

fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(io_err(format!("cannot create {}", path.display())))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(format!("cannot write {}", path.display())))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Compute(e.to_string()))?;
    write_file(dir, name, |w| writeln!(w, "{text}"))
}

fn grid_of(cfg: &RunConfig) -> Result<Arc<Grid>, CliError> {
    make_grid(cfg.half_length, cfg.n_points).map_err(|e| CliError::Usage(e.to_string()))
}

fn solve_options(cfg: &RunConfig) -> SolveOptions {
    SolveOptions {
        max_iterations: cfg.solve.max_iterations,
        dealias: cfg.solve.dealias,
        ..SolveOptions::default()
    }
}

fn surface_options(cfg: &RunConfig) -> Result<SurfaceOptions, CliError> {
    Ok(SurfaceOptions {
        grid: grid_of(cfg)?,
        solve: solve_options(cfg),
    })
}

fn solve_wave(cfg: &RunConfig) -> Result<SolitaryWave, CliError> {
    solve_ground_state(&cfg.params, &grid_of(cfg)?, &solve_options(cfg))
        .map_err(|e| at_point(cfg, e))
}

fn run_header(cfg: &RunConfig) -> serde_json::Value {
    json!({
        "command": cfg.command,
        "params": cfg.params,
        "grid": { "L": cfg.half_length, "n": cfg.n_points },
        "seed": cfg.seed,
    })
}

/// Executes a validated configuration, inside a dedicated pool when a worker count is set.
pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output_path).map_err(|e| {
        CliError::Usage(format!(
            "output not writable: {}: {e}",
            cfg.output_path.display()
        ))
    })?;
    match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| CliError::Usage(format!("workers: {e}")))?
            .install(|| dispatch(cfg)),
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command {
        CommandName::Solve => solve(cfg),
        CommandName::Kernel => kernel(cfg),
        CommandName::Functionals => functionals(cfg),
        CommandName::Sweep => sweep(cfg),
        CommandName::Atlas => atlas(cfg),
        CommandName::Classify => classify(cfg),
        CommandName::Evolve => evolve_cmd(cfg),
        CommandName::Validate => validate(cfg),
    }
}

fn solve(cfg: &RunConfig) -> Result<(), CliError> {
    let wave = solve_wave(cfg)?;
    let dir = &cfg.output_path;
    write_file(dir, "profile.csv", |w| wave.write_profile_csv(w))?;
    let mut doc = run_header(cfg);
    doc["options"] = json!(solve_options(cfg));
    doc["diagnostics"] = json!(wave.diagnostics);
    write_json(dir, "diagnostics.json", &doc)?;
    let d = &wave.diagnostics;
    println!(
        "solve: {} iterations, residual {:e}, ik_gap_rel {:e}, pohozaev_rel {:e}",
        d.iterations, d.residual_sup, d.ik_gap_rel, d.pohozaev_rel
    );
    Ok(())
}

fn kernel(cfg: &RunConfig) -> Result<(), CliError> {
    let (beta, c) = (cfg.params.beta, cfg.params.c);
    let k = &cfg.kernel;
    let mut rows = Vec::with_capacity(k.x_samples);
    let mut worst = 0.0f64;
    for i in 0..k.x_samples {
        let x = k.x_max * i as f64 / (k.x_samples - 1) as f64;
        let closed = kernel_eval(x, beta, c).map_err(|e| at_point(cfg, e))?;
        let oracle = kernel_oracle(x, beta, c).map_err(|e| at_point(cfg, e))?;
        worst = worst.max((closed - oracle).abs());
        rows.push([x, closed, oracle, (closed - oracle).abs()]);
    }
    write_file(&cfg.output_path, "kernel.csv", |w| {
        writeln!(w, "x,kernel,oracle,abs_diff")?;
        for r in &rows {
            writeln!(w, "{}", r.map(num).join(","))?;
        }
        Ok(())
    })?;
    println!(
        "kernel: {} samples, max |closed - oracle| = {worst:e}",
        k.x_samples
    );
    Ok(())
}

fn functionals(cfg: &RunConfig) -> Result<(), CliError> {
    let wave = solve_wave(cfg)?;
    let report = wave_report(&wave);
    write_json(&cfg.output_path, "functionals.json", &report)?;
    let forms = instability_direction_forms(&wave);
    let (closed_i, closed_ii) = direction_closed_forms(&wave);
    let mut doc = run_header(cfg);
    doc["directions"] = json!(forms);
    doc["closed_form_i"] = json!(closed_i);
    doc["closed_form_ii"] = json!(closed_ii);
    write_json(&cfg.output_path, "directions.json", &doc)?;
    println!(
        "functionals: d = {:e}, I = {:e}, K = {:e}, E = {:e}, Q = {:e}",
        report.d_value, report.i, report.k, report.e, report.q
    );
    Ok(())
}

fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let spec = SweepSpec {
        segment: cfg.sweep.segment,
        samples: cfg.sweep.samples,
        p: cfg.params.p,
        parity: cfg.params.parity,
        options: surface_options(cfg)?,
        with_curvature: cfg.sweep.curvature,
    };
    let rows = sweep_segment(&spec);
    write_file(&cfg.output_path, "sweep.csv", |w| write_sweep_csv(&rows, w))?;
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    for r in rows.iter().filter(|r| r.outcome.is_err()) {
        if let Err(e) = &r.outcome {
            eprintln!("sweep: (beta = {}, c = {}): {e}", r.beta, r.c);
        }
    }
    println!("sweep: {} points, {failed} failed", rows.len());
    Ok(())
}

fn atlas(cfg: &RunConfig) -> Result<(), CliError> {
    let opts = surface_options(cfg)?;
    let atlas = nodal_atlas(cfg.params.p, cfg.params.parity, cfg.sweep.resolution, &opts);
    let dir = &cfg.output_path;
    write_file(dir, "atlas.csv", |w| write_points_csv(&atlas.points, w))?;
    write_file(dir, "crossings.csv", |w| {
        write_crossings_csv(&atlas.crossings, w)
    })?;
    let counts = json!({
        "Stable": atlas.count(Classification::Stable),
        "Unstable": atlas.count(Classification::Unstable),
        "NoSolitaryWave": atlas.count(Classification::NoSolitaryWave),
        "Indeterminate": atlas.count(Classification::Indeterminate),
    });
    let failures: Vec<_> = atlas
        .failures
        .iter()
        .map(|(beta, c, reason)| json!({ "beta": beta, "c": c, "reason": reason }))
        .collect();
    let mut doc = run_header(cfg);
    doc["resolution"] = json!(cfg.sweep.resolution);
    doc["counts"] = counts.clone();
    doc["crossings"] = json!(atlas.crossings.len());
    doc["failures"] = json!(failures);
    write_json(dir, "atlas.json", &doc)?;
    println!(
        "atlas: {} points ({counts}), {} crossings, {} failed anchors",
        atlas.points.len(),
        atlas.crossings.len(),
        atlas.failures.len()
    );
    Ok(())
}

fn classify(cfg: &RunConfig) -> Result<(), CliError> {
    let p = &cfg.params;
    let doc = if in_domain(p.beta, p.c) {
        let pt = full_point(p.beta, p.c, p.p, p.parity, false, &surface_options(cfg)?)
            .map_err(|e| at_point(cfg, e))?;
        println!(
            "classify: {} (d_cc = {})",
            pt.classification,
            pt.d_cc.map(num).unwrap_or_default()
        );
        json!(pt)
    } else {
        let class = classify_point(p.beta, p.c, p.p, p.parity, None);
        println!("classify: {class}");
        json!({ "beta": p.beta, "c": p.c, "classification": class })
    };
    write_json(&cfg.output_path, "classification.json", &doc)
}

fn trajectory_outputs(
    cfg: &RunConfig,
    summary: &TrajectorySummary,
    blowup_time: Option<f64>,
) -> Result<(), CliError> {
    write_file(&cfg.output_path, "trajectory.csv", |w| summary.write_csv(w))?;
    let mut doc = run_header(cfg);
    doc["evolve"] = json!(cfg.evolve);
    doc["max_e_drift"] = json!(summary.max_e_drift());
    doc["max_q_drift"] = json!(summary.max_q_drift());
    doc["max_q1_drift"] = json!(summary.max_q1_drift());
    doc["max_q2_drift"] = json!(summary.max_q2_drift());
    doc["max_orbital_distance"] = json!(summary.max_orbital_distance());
    doc["blowup_flag"] = json!(summary.blowup_flag);
    doc["blowup_time"] = json!(blowup_time);
    write_json(&cfg.output_path, "evolve.json", &doc)
}

fn evolve_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let wave = solve_wave(cfg)?;
    let e = &cfg.evolve;
    let initial = make_perturbation(&wave, e.perturbation, e.delta, cfg.seed);
    let spec = EvolveSpec {
        t_final: e.t_final,
        dt: e.dt,
        record_every: e.record_every,
        dealias: cfg.solve.dealias,
        monitors: e.monitors.clone(),
    };
    match evolve(&initial, &cfg.params, &spec, Some(&wave)) {
        Ok(summary) => {
            trajectory_outputs(cfg, &summary, None)?;
            println!(
                "evolve: {} records, max E drift {:e}, max orbital distance {:e}",
                summary.times.len(),
                summary.max_e_drift(),
                summary.max_orbital_distance()
            );
            Ok(())
        }
        Err(EvolveError::BlowupDetected { time, summary }) => {
            trajectory_outputs(cfg, &summary, Some(time))?;
            Err(at_point(cfg, format!("blowup detected at t = {time}")))
        }
        Err(other) => Err(at_point(cfg, other)),
    }
}

/// One row of the validation table.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value.is_finite() && value <= tolerance,
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Identity battery on the configured wave plus the kernel closed form against its oracle.
pub fn identity_battery(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let wave = solve_wave(cfg)?;
    let p = wave.params.p;
    let r = wave_report(&wave);
    let traveling = StatePair::traveling(&wave.profile, wave.params.c);
    let h = h_quadratic_form(&traveling, &traveling, &wave).map_err(|e| at_point(cfg, e))?;
    let forms = instability_direction_forms(&wave);
    let (closed_i, closed_ii) = direction_closed_forms(&wave);

    let mut checks = vec![
        Check::new("ik_gap_rel", wave.diagnostics.ik_gap_rel, 1e-6),
        Check::new("pohozaev_rel", wave.diagnostics.pohozaev_rel, 1e-6),
        Check::new("nehari_over_I", r.nehari_p.abs() / r.i, 1e-6),
        Check::new(
            "energy_momentum_vs_d",
            rel(r.e + wave.params.c * r.q, r.d_value),
            1e-6,
        ),
        Check::new("action_vs_d", rel(r.action_l, r.d_value), 1e-6),
        Check::new("hessian_vs_d", rel(h, -2.0 * (p + 1.0) * r.d_value), 1e-4),
        Check::new(
            "direction_i_closed_form",
            rel(forms.dir_i_value, closed_i),
            1e-4,
        ),
        Check::new(
            "direction_ii_closed_form",
            rel(forms.dir_ii_value, closed_ii),
            1e-4,
        ),
    ];

    let mut points = KERNEL_CHECK_POINTS.to_vec();
    let own = (cfg.params.beta, cfg.params.c);
    if !points.contains(&own) {
        points.push(own);
    }
    for (beta, c) in points {
        for x in KERNEL_CHECK_X {
            let closed = kernel_eval(x, beta, c).map_err(|e| at_point(cfg, e))?;
            let oracle = kernel_oracle(x, beta, c).map_err(|e| at_point(cfg, e))?;
            checks.push(Check::new(
                format!("kernel(beta={beta},c={c},x={x})"),
                (closed - oracle).abs(),
                1e-8,
            ));
        }
    }
    Ok(checks)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let checks = identity_battery(cfg)?;
    write_file(&cfg.output_path, "validate.csv", |w| {
        writeln!(w, "check,value,tolerance,status")?;
        for c in &checks {
            let status = if c.pass { "pass" } else { "fail" };
            writeln!(
                w,
                "\"{}\",{},{},{status}",
                c.name,
                num(c.value),
                num(c.tolerance)
            )?;
        }
        Ok(())
    })?;
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        println!(
            "{status}  {:<width$}  {:>12.3e}  <= {:.0e}",
            c.name, c.value, c.tolerance
        );
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(at_point(
            cfg,
            format!("{failed} of {} checks failed", checks.len()),
        ));
    }
    println!("validate: all {} checks passed", checks.len());
    Ok(())
}
