mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cnafem::adaptive::AdaptiveRun;
use cnafem::estimators::{EstimatorConfig, StepEstimators};
use cnafem::harness::observables::{observable_params, observable_rows};
use cnafem::harness::output::observables_file;
use cnafem::harness::sensitivity::{coupled_sweep, space_sweep, time_sweep};
use cnafem::harness::sweep::{pairs_from_steps, run_table};
use cnafem::harness::{
    preset, run_adaptive_experiment, run_observables, run_sensitivity, run_uniform, AdaptiveParams, EocTable,
    FineReference, OutputDir, PlotDescription, Reference, ReferenceParams, SummaryRow, UniformParams,
};
use cnafem::problems::{catalog_with_eps, observable_grid, ProblemSpec};
use cnafem::spline::FeFunction;

use config::{overlay, Common, FileConfig};

#[derive(Parser)]
#[command(name = "cnafem", version, about = "Crank-Nicolson B-spline Galerkin runs with a posteriori estimators")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Single run on a uniform mesh with constant step.
    Run(RunArgs),
    /// Convergence table over refined uniform runs.
    Eoc(EocArgs),
    /// Space-time adaptive run.
    Adapt(AdaptArgs),
    /// ε-sensitivity sweeps on the focusing problem.
    Sensitivity(SensitivityArgs),
    /// Observable-mode adaptive run against a fine reference.
    Observables(ObservablesArgs),
    /// Fine-grid reference solution stored as JSON.
    Reference(ReferenceArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Dump every step (mesh, U^n, ∂̄W) to trajectory.json.
    #[arg(long)]
    trajectory: bool,
    /// Reference solution written by `reference`.
    #[arg(long)]
    reference_file: Option<PathBuf>,
}

#[derive(Args)]
struct RefOverride {
    #[arg(long)]
    ref_degree: Option<usize>,
    #[arg(long)]
    ref_elements: Option<usize>,
    /// Inverse reference step.
    #[arg(long)]
    ref_k_inv: Option<f64>,
}

#[derive(Args)]
struct EocArgs {
    #[command(flatten)]
    common: Common,
    /// Every preset row instead of the desk-scale subset.
    #[arg(long)]
    full: bool,
    /// Inverse steps; element counts follow from h ≈ k^{2/(r+1)}.
    #[arg(long, value_delimiter = ',')]
    k_inv: Vec<f64>,
    #[arg(long)]
    reference_file: Option<PathBuf>,
    #[command(flatten)]
    reference: RefOverride,
}

#[derive(Args)]
struct AdaptArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    tol_s: Option<f64>,
    #[arg(long)]
    tol_t: Option<f64>,
    /// Also run a uniform partition with the same Total DoF.
    #[arg(long)]
    compare_uniform: bool,
    /// Times at which solution snapshots are written.
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Vec<f64>,
}

#[derive(Args)]
struct SensitivityArgs {
    #[command(flatten)]
    common: Common,
    /// `coupled`, `space`, `time` or `all`.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct ObservablesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    tol_s: Option<f64>,
    /// Uniform sample points for N and J (breakpoints are added).
    #[arg(long)]
    grid_points: Option<usize>,
    #[command(flatten)]
    reference: RefOverride,
}

#[derive(Args)]
struct ReferenceArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    reference: RefOverride,
    /// Spacing of stored snapshots, a multiple of the reference step.
    #[arg(long)]
    k_sample: Option<f64>,
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run(a) => run(a),
        Cmd::Eoc(a) => eoc(a),
        Cmd::Adapt(a) => adapt(a),
        Cmd::Sensitivity(a) => sensitivity(a),
        Cmd::Observables(a) => observables(a),
        Cmd::Reference(a) => reference(a),
    }
}

struct Ctx {
    file: FileConfig,
    prob: ProblemSpec,
    out: OutputDir,
    estimators: EstimatorConfig,
}

fn context(common: &Common, default_problem: Option<&str>) -> Result<Ctx> {
    let file = common.file()?;
    let name = common
        .problem
        .clone()
        .or_else(|| file.problem.clone())
        .or_else(|| default_problem.map(String::from))
        .ok_or_else(|| anyhow!("no problem given; use --problem or `problem` in the config"))?;
    let prob = catalog_with_eps(&name, common.eps.or(file.eps))?;
    let out = common
        .out
        .clone()
        .or_else(|| file.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&name));
    let estimators = overlay(&EstimatorConfig::default(), Some(&common.estimator_patch(&file)))?;
    Ok(Ctx {
        out: OutputDir::create(&out)?,
        file,
        prob,
        estimators,
    })
}

fn load_reference(path: Option<&Path>) -> Result<Option<Reference>> {
    path.map(|p| {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(Reference::from_json(&text)?)
    })
    .transpose()
}

fn reference_params(base: ReferenceParams, file: &FileConfig, o: &RefOverride) -> Result<ReferenceParams> {
    let mut p = overlay(&base, file.reference.as_ref())?;
    if let Some(d) = o.ref_degree {
        p.degree = d;
    }
    if let Some(m) = o.ref_elements {
        p.elements = m;
    }
    if let Some(ki) = o.ref_k_inv {
        p.k_ref = 1.0 / ki;
    }
    Ok(p)
}

fn estimator_plot(file: &str) -> PlotDescription {
    let mut p = PlotDescription::new("estimators", "Local estimators", "t", "zeta").log(false, true);
    for c in ["zeta_T0", "zeta_T1", "zeta_S0", "zeta_S1", "zeta_S2", "zeta_S3", "zeta_C", "zeta_D"] {
        p = p.series(c, file, "t", c);
    }
    p
}

fn uniform_total_dof(steps: &[StepEstimators]) -> u64 {
    cnafem::adaptive::total_dof(steps.iter().map(|s| (s.k, s.dim)))
}

fn run(a: RunArgs) -> Result<()> {
    let ctx = context(&a.common, None)?;
    let (c, f, d) = (&a.common, &ctx.file, &ctx.prob.defaults);
    let mut p = UniformParams::new(
        c.degree.or(f.degree).unwrap_or(d.degree),
        c.elements.or(f.elements).unwrap_or(d.elements),
        c.k.or(f.k).unwrap_or(d.k),
    );
    p.quadrature = c.quadrature.or(f.quadrature);
    p.estimators = Some(ctx.estimators);
    p.keep_steps = true;
    p.trajectory = a.trajectory || f.trajectory.unwrap_or(false);
    let reference = load_reference(a.reference_file.as_deref().or(f.reference_file.as_deref()))?;
    let run = run_uniform(&ctx.prob, &p, reference.as_ref())?;
    let out = &ctx.out;
    out.write_steps("steps.csv", &run.steps)?;
    out.write_summary(
        "summary.csv",
        &[SummaryRow {
            label: "uniform".into(),
            totals: run.totals.unwrap_or_default(),
            error: run.error_exact.or(run.error_ref),
            effectivity: run.effectivity(),
            total_dof: Some(uniform_total_dof(&run.steps)),
        }],
    )?;
    out.write_json("mesh.json", &run.final_state.u.space().mesh().to_json())?;
    out.write_json("snapshot_final.json", &run.final_state.u.snapshot())?;
    if p.trajectory {
        out.write_json("trajectory.json", &run.trajectory)?;
    }
    out.write_plot(&estimator_plot("steps.csv"))?;
    out.write_json(
        "run.json",
        &json!({
            "command": "run",
            "problem": ctx.prob.info(),
            "params": p,
            "reference": reference.as_ref().map(|r| &r.params),
            "max_norm_drift": run.max_norm_drift,
            "max_midpoint_defect": run.max_midpoint_defect,
            "seconds": run.seconds,
        }),
    )?;
    if let Some(t) = run.totals {
        println!("E_total {:e}  steps {}", t.total(), t.steps);
    }
    if let Some(e) = run.error_exact.or(run.error_ref) {
        println!("error {e:e}  ei {:?}", run.effectivity());
    }
    println!("wrote {}", out.root().display());
    Ok(())
}

fn eoc_plots(out: &OutputDir, file: &str) -> Result<()> {
    let mut s = PlotDescription::new("eoc_space", "Space estimators", "M", "E").log(true, true);
    for c in ["E_S0", "E_S1", "E_S2", "E_S3"] {
        s = s.series(c, file, "M", c);
    }
    out.write_plot(&s)?;
    let mut t = PlotDescription::new("eoc_time", "Time estimators and error", "k_inv", "E").log(true, true);
    for c in ["E_T0", "E_T1", "error"] {
        t = t.series(c, file, "k_inv", c);
    }
    out.write_plot(&t)?;
    Ok(())
}

fn print_table(t: &EocTable) {
    println!("{:>7} {:>9} {:>11} {:>11} {:>11} {:>11} {:>11} {:>11} {:>9}", "M", "1/k", "E_S0", "E_S1", "E_S3", "E_T0", "E_T1", "error", "ei");
    for r in &t.rows {
        println!(
            "{:>7} {:>9.1} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11} {:>9}",
            r.elements,
            r.k_inv(),
            r.totals.e_s0,
            r.totals.e_s1,
            r.totals.e_s3,
            r.totals.e_t0,
            r.totals.e_t1,
            r.error.map_or("-".into(), |e| format!("{e:.4e}")),
            r.effectivity.map_or("-".into(), |e| format!("{e:.4}")),
        );
    }
    for c in ["E_S0", "E_S1", "E_S3", "E_T0", "E_T1", "error"] {
        if let Some(e) = t.eoc(c) {
            let s: Vec<String> = e.iter().map(|v| format!("{v:.4}")).collect();
            println!("EOC {c:<5} {}", s.join(" "));
        }
    }
}

fn table_outputs(out: &OutputDir, name: &str, t: &EocTable) -> Result<()> {
    out.write_eoc(&format!("{name}.csv"), t)?;
    let rows: Vec<SummaryRow> = t
        .rows
        .iter()
        .map(|r| SummaryRow {
            label: format!("M={} k_inv={}", r.elements, r.k_inv()),
            totals: r.totals,
            error: r.error,
            effectivity: r.effectivity,
            total_dof: None,
        })
        .collect();
    let summary = if name == "eoc" { "summary.csv".to_string() } else { format!("summary_{name}.csv") };
    out.write_summary(&summary, &rows)?;
    Ok(())
}

fn eoc(a: EocArgs) -> Result<()> {
    let ctx = context(&a.common, None)?;
    let f = &ctx.file;
    let full = a.full || f.full.unwrap_or(false);
    let k_inv = if a.k_inv.is_empty() { f.k_inv.clone().unwrap_or_default() } else { a.k_inv.clone() };
    let found = preset(&ctx.prob.name, full);
    let degree = a
        .common
        .degree
        .or(f.degree)
        .or(found.as_ref().map(|p| p.degree))
        .unwrap_or(ctx.prob.defaults.degree);
    let rows = if !k_inv.is_empty() {
        let rows = pairs_from_steps(&ctx.prob, degree, &k_inv);
        for (m, ki) in &rows {
            let h = (ctx.prob.b - ctx.prob.a) / *m as f64;
            eprintln!("pair: k = 1/{ki}, M = {m} (h = {h:.6e}, k^(2/(r+1)) = {:.6e})", (1.0 / ki).powf(2.0 / (degree as f64 + 1.0)));
        }
        rows
    } else {
        let p = found.as_ref().ok_or_else(|| anyhow!("no table preset for `{}`; pass --k-inv", ctx.prob.name))?;
        p.rows(full).to_vec()
    };
    let start = Instant::now();
    let mut reference = load_reference(a.reference_file.as_deref().or(f.reference_file.as_deref()))?;
    if reference.is_none() && ctx.prob.exact.is_none() {
        let finest = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        let base = found
            .as_ref()
            .and_then(|p| p.reference_for(full))
            .unwrap_or(ReferenceParams {
                degree: 5,
                elements: 4 * rows.iter().map(|r| r.0).max().unwrap_or(1),
                k_ref: 1.0 / (16.0 * finest),
                k_sample: 1.0 / finest,
            });
        let mut rp = reference_params(base, f, &a.reference)?;
        rp.k_sample = 1.0 / finest;
        eprintln!("computing reference: degree {}, {} elements, k_ref = {:e}", rp.degree, rp.elements, rp.k_ref);
        reference = Some(Reference::compute(&ctx.prob, &rp)?);
    }
    let table = run_table(&ctx.prob, degree, &rows, reference.as_ref(), ctx.estimators)?;
    table_outputs(&ctx.out, "eoc", &table)?;
    eoc_plots(&ctx.out, "eoc.csv")?;
    let seconds: Vec<f64> = table.rows.iter().map(|r| r.seconds).collect();
    ctx.out.write_json(
        "run.json",
        &json!({
            "command": "eoc",
            "problem": ctx.prob.info(),
            "degree": degree,
            "rows": rows,
            "full": full,
            "estimators": ctx.estimators,
            "reference": table.reference,
            "row_seconds": seconds,
            "seconds": start.elapsed().as_secs_f64(),
        }),
    )?;
    print_table(&table);
    println!("wrote {}", ctx.out.root().display());
    Ok(())
}

fn write_snapshots(out: &OutputDir, prefix: &str, snaps: &[(f64, FeFunction)], grid_points: Option<usize>) -> Result<()> {
    for (t, u) in snaps {
        out.write_json(&format!("{prefix}snapshot_{t}.json"), &u.snapshot())?;
        if let Some(n) = grid_points {
            let rows = observable_rows(u, &observable_grid(u, n))?;
            out.write_observables(prefix, *t, &rows)?;
        }
    }
    Ok(())
}

fn adaptive_outputs(out: &OutputDir, run: &AdaptiveRun) -> Result<()> {
    out.write_adaptive_steps("steps.csv", run)?;
    out.write_events("events.log", &run.events)?;
    out.write_json("mesh_initial.json", &run.initial_mesh.to_json())?;
    out.write_json("mesh_final.json", &run.final_state.u.space().mesh().to_json())?;
    out.write_plot(&estimator_plot("steps.csv"))?;
    out.write_plot(&PlotDescription::new("k", "Time step", "t", "k").log(false, true).series("k", "steps.csv", "t", "k"))?;
    out.write_plot(&PlotDescription::new("dof", "Degrees of freedom", "t", "dim").series("dim", "steps.csv", "t", "dim"))?;
    out.write_plot(
        &PlotDescription::new("tilde", "Accumulated estimators", "t", "E")
            .log(false, true)
            .series("tilde_E_T", "steps.csv", "t", "tilde_E_T")
            .series("tilde_E_S", "steps.csv", "t", "tilde_E_S"),
    )?;
    Ok(())
}

fn adaptive_params(ctx: &Ctx, c: &Common, tol_s: Option<f64>, tol_t: Option<f64>, base: AdaptiveParams) -> Result<AdaptiveParams> {
    let f = &ctx.file;
    let mut p = base;
    p.config = overlay(&p.config, f.adaptive.as_ref())?;
    p.config.estimators = ctx.estimators;
    if let Some(r) = c.degree.or(f.degree) {
        p.degree = r;
    }
    if let Some(m) = c.elements.or(f.elements) {
        p.elements = m;
    }
    if let Some(k) = c.k.or(f.k) {
        p.k0 = k;
    }
    if let Some(t) = tol_s {
        p.config.tol_s = t;
    }
    if let Some(t) = tol_t {
        p.config.tol_t = t;
    }
    p.config.validate()?;
    Ok(p)
}

fn adapt(a: AdaptArgs) -> Result<()> {
    let ctx = context(&a.common, None)?;
    let f = &ctx.file;
    let mut p = adaptive_params(&ctx, &a.common, a.tol_s, a.tol_t, AdaptiveParams::from_defaults(&ctx.prob))?;
    p.compare_uniform = a.compare_uniform || f.compare_uniform.unwrap_or(false);
    p.snapshot_times = if a.snapshot_times.is_empty() {
        f.snapshot_times.clone().unwrap_or_else(|| vec![0.0, ctx.prob.t_final])
    } else {
        a.snapshot_times.clone()
    };
    let rep = run_adaptive_experiment(&ctx.prob, &p)?;
    let out = &ctx.out;
    adaptive_outputs(out, &rep.run)?;
    write_snapshots(out, "", &rep.snapshots, f.grid_points)?;
    let mut summary = vec![SummaryRow {
        label: "adaptive".into(),
        totals: rep.run.totals,
        error: None,
        effectivity: None,
        total_dof: Some(rep.run.total_dof()),
    }];
    if let Some(u) = &rep.uniform {
        summary.push(SummaryRow {
            label: "uniform".into(),
            totals: u.run.totals.unwrap_or_default(),
            error: None,
            effectivity: None,
            total_dof: Some(u.total_dof),
        });
        write_snapshots(out, "uniform_", &u.snapshots, f.grid_points)?;
    }
    out.write_summary("summary.csv", &summary)?;
    out.write_json(
        "run.json",
        &json!({
            "command": "adapt",
            "problem": ctx.prob.info(),
            "params": p,
            "final_k": rep.run.final_k(),
            "total_dof": rep.run.total_dof(),
            "total_estimator": rep.total_estimator(),
            "uniform": rep.uniform.as_ref().map(|u| json!({
                "elements": u.elements, "k": u.k, "total_dof": u.total_dof,
                "total_estimator": u.run.totals.map(|t| t.tilde_t() + t.tilde_s()),
            })),
            "seconds": rep.run.seconds,
        }),
    )?;
    println!(
        "steps {}  final k {:e}  Total DoF {}  tilde E_T + E_S {:e}",
        rep.run.records.len(),
        rep.run.final_k().unwrap_or(f64::NAN),
        rep.run.total_dof(),
        rep.total_estimator()
    );
    if let Some(u) = &rep.uniform {
        let t = u.run.totals.unwrap_or_default();
        println!("uniform M {} k {:e}  Total DoF {}  tilde E_T + E_S {:e}", u.elements, u.k, u.total_dof, t.tilde_t() + t.tilde_s());
    }
    println!("wrote {}", out.root().display());
    Ok(())
}

fn sensitivity(a: SensitivityArgs) -> Result<()> {
    let ctx = context(&a.common, Some("sensitivity"))?;
    let f = &ctx.file;
    let full = a.full || f.full.unwrap_or(false);
    let which = a.sweep.clone().or_else(|| f.sweep.clone()).unwrap_or_else(|| "coupled".into());
    let sweeps = match which.as_str() {
        "coupled" => vec![coupled_sweep()],
        "space" => vec![space_sweep(full)],
        "time" => vec![time_sweep(full)],
        "all" => vec![coupled_sweep(), space_sweep(full), time_sweep(full)],
        other => bail!("unknown sweep `{other}`; expected coupled, space, time or all"),
    };
    let mut meta = Vec::new();
    for mut s in sweeps {
        if let Some(e) = a.common.eps.or(f.eps) {
            s.eps = e;
        }
        if let Some(r) = a.common.degree.or(f.degree) {
            s.degree = r;
        }
        let name = format!("eoc_{}", s.name);
        let table = run_sensitivity(&s, ctx.estimators)?;
        table_outputs(&ctx.out, &name, &table)?;
        eoc_plots(&ctx.out, &format!("{name}.csv"))?;
        println!("{} sweep, eps = {}, r = {}", s.name, s.eps, s.degree);
        print_table(&table);
        meta.push(json!({"sweep": s, "row_seconds": table.rows.iter().map(|r| r.seconds).collect::<Vec<_>>()}));
    }
    ctx.out.write_json("run.json", &json!({"command": "sensitivity", "full": full, "sweeps": meta}))?;
    println!("wrote {}", ctx.out.root().display());
    Ok(())
}

fn observables(a: ObservablesArgs) -> Result<()> {
    let ctx = context(&a.common, Some("obs1"))?;
    let f = &ctx.file;
    let p = adaptive_params(&ctx, &a.common, a.tol_s, None, observable_params(&ctx.prob))?;
    let mut fine = FineReference::default_for(&ctx.prob);
    if let Some(d) = a.reference.ref_degree {
        fine.degree = d;
    }
    if let Some(m) = a.reference.ref_elements {
        fine.elements = m;
    }
    if let Some(ki) = a.reference.ref_k_inv {
        fine.k = 1.0 / ki;
    }
    let grid = a.grid_points.or(f.grid_points).unwrap_or(4096);
    let rep = run_observables(&ctx.prob, &p, &fine)?;
    let out = &ctx.out;
    adaptive_outputs(out, &rep.adaptive.run)?;
    write_snapshots(out, "", &rep.adaptive.snapshots, Some(grid))?;
    let uniform = rep.adaptive.uniform.as_ref().expect("observable runs compare against uniform");
    write_snapshots(out, "uniform_", &uniform.snapshots, Some(grid))?;
    let t = ctx.prob.t_final;
    let reference = &rep.reference_solution;
    let rows = observable_rows(reference, &observable_grid(reference, grid))?;
    out.write_observables("reference_", t, &rows)?;
    out.write_summary(
        "summary.csv",
        &[
            SummaryRow {
                label: "adaptive".into(),
                totals: rep.adaptive.run.totals,
                error: Some(rep.adaptive_distance),
                effectivity: None,
                total_dof: Some(rep.adaptive.run.total_dof()),
            },
            SummaryRow {
                label: "uniform".into(),
                totals: uniform.run.totals.unwrap_or_default(),
                error: Some(rep.uniform_distance),
                effectivity: None,
                total_dof: Some(uniform.total_dof),
            },
        ],
    )?;
    let file_t = observables_file(t);
    for (name, col) in [("density", "N"), ("current", "J")] {
        out.write_plot(
            &PlotDescription::new(name, &format!("{col} at t = {t}"), "x", col)
                .series("adaptive", &file_t, "x", col)
                .series("uniform", &format!("uniform_{file_t}"), "x", col)
                .series("reference", &format!("reference_{file_t}"), "x", col),
        )?;
    }
    out.write_json(
        "run.json",
        &json!({
            "command": "observables",
            "problem": ctx.prob.info(),
            "params": p,
            "reference": rep.reference,
            "grid_points": grid,
            "adaptive_distance": rep.adaptive_distance,
            "uniform_distance": rep.uniform_distance,
            "uniform_elements": uniform.elements,
            "total_dof": rep.adaptive.run.total_dof(),
            "seconds": rep.adaptive.run.seconds,
        }),
    )?;
    println!("density distance to reference: adaptive {:e}, uniform {:e}", rep.adaptive_distance, rep.uniform_distance);
    println!("Total DoF {} (uniform {}, M = {})", rep.adaptive.run.total_dof(), uniform.total_dof, uniform.elements);
    println!("wrote {}", out.root().display());
    Ok(())
}

fn reference(a: ReferenceArgs) -> Result<()> {
    let ctx = context(&a.common, None)?;
    let d = &ctx.prob.defaults;
    let base = ReferenceParams {
        degree: 5,
        elements: 4 * d.elements,
        k_ref: d.k / 64.0,
        k_sample: d.k,
    };
    let mut p = reference_params(base, &ctx.file, &a.reference)?;
    if let Some(ks) = a.k_sample {
        p.k_sample = ks;
    }
    let start = Instant::now();
    let r = Reference::compute(&ctx.prob, &p)?;
    let path = ctx.out.path("reference.json");
    std::fs::write(&path, r.to_json()?)?;
    ctx.out.write_json(
        "run.json",
        &json!({"command": "reference", "problem": ctx.prob.info(), "params": p, "seconds": start.elapsed().as_secs_f64()}),
    )?;
    println!("{} snapshots, wrote {}", r.len(), path.display());
    Ok(())
}
