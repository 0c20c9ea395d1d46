//! Command-line surface of the toolkit: every command loads a scenario
//! document, runs one workflow and saves its CSV/SVG outputs with a manifest.

use clap::{Parser, Subcommand};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use iree_core::baselines::{baseline_solve, BaselineVariant};
use iree_core::capacity::{capacity_field, CapacityKind};
use iree_core::io::{self, svg, Artifact, RunInfo, ScenarioDocument};
use iree_core::scaling::{
    fit_scaling_law, iree_gradient_map, over_capacity_reductions, sweep, theory_overlay, LawInputs,
};
use iree_core::solver::{compare_training, evaluate_metrics, optimize, optimize_end_to_end};
use iree_core::{Deployment, Error};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "IREE_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "iree",
    version,
    about = "BS/RIS deployment optimization for integrated relative energy efficiency"
)]
pub struct Cli {
    /// Scenario document (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the document seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the document's.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the traffic field.
    TrafficGen,
    /// Run the alternating optimizer from the clustering warm start.
    Optimize,
    /// Evaluate the four baseline variants.
    Baseline,
    /// Compare alternating and end-to-end training.
    Ablation,
    /// Optimize over the document's grid of BS and RIS counts and fit scaling laws.
    ScalingSweep,
    /// Recompute metrics of a saved deployment.
    Metrics {
        /// Deployment JSON; defaults to `deployment.json` in the output directory.
        #[arg(long)]
        deployment: Option<PathBuf>,
    },
    /// Render the CSV outputs found in the output directory to SVG files under `plots/`.
    Plot,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::TrafficGen => "traffic-gen",
            Command::Optimize => "optimize",
            Command::Baseline => "baseline",
            Command::Ablation => "ablation",
            Command::ScalingSweep => "scaling-sweep",
            Command::Metrics { .. } => "metrics",
            Command::Plot => "plot",
        }
    }
}

/// A failed command with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::Validation { .. } => EXIT_CONFIG,
            Error::Io { .. } => EXIT_IO,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

/// Result of a successful command.
#[derive(Debug)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub manifest: io::Manifest,
    /// False when an optimizer ran out of iterations before meeting its tolerance.
    pub converged: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        }
    }
}

/// Worker threads requested through the environment, if any.
pub fn threads_from_env() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| config_error(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn load_document(cli: &Cli) -> Result<ScenarioDocument, Failure> {
    let mut doc = match &cli.config {
        Some(path) => io::load_scenario(path)?,
        None => ScenarioDocument::default(),
    };
    if let Some(seed) = cli.seed {
        doc.seed = seed;
    }
    if let Some(out) = &cli.out {
        doc.output.dir = out.to_string_lossy().into_owned();
    }
    doc.validate()?;
    Ok(doc)
}

struct Run {
    doc: ScenarioDocument,
    artifacts: Vec<Artifact>,
    converged: bool,
}

impl Run {
    fn csv(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts.push(Artifact::csv(name, bytes));
    }
}

/// Runs one command inside a thread pool of the requested size.
pub fn run(cli: &Cli, threads: Option<usize>) -> Result<Outcome, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure {
        code: EXIT_FAILURE,
        message: format!("cannot start worker threads: {e}"),
    })?;
    pool.install(|| run_command(cli))
}

fn run_command(cli: &Cli) -> Result<Outcome, Failure> {
    let start = Instant::now();
    let doc = load_document(cli)?;
    let base_dir = PathBuf::from(&doc.output.dir);
    let out_dir = match cli.command {
        Command::Plot => base_dir.join("plots"),
        _ => base_dir.clone(),
    };
    let mut run = Run {
        doc,
        artifacts: Vec::new(),
        converged: true,
    };
    match &cli.command {
        Command::TrafficGen => traffic_gen(&mut run)?,
        Command::Optimize => optimize_cmd(&mut run)?,
        Command::Baseline => baseline_cmd(&mut run)?,
        Command::Ablation => ablation_cmd(&mut run)?,
        Command::ScalingSweep => sweep_cmd(&mut run)?,
        Command::Metrics { deployment } => {
            let path = deployment.clone().unwrap_or_else(|| base_dir.join("deployment.json"));
            metrics_cmd(&mut run, &path)?
        }
        Command::Plot => plot_cmd(&mut run, &base_dir)?,
    }
    let info = RunInfo {
        command: cli.command.name().to_string(),
        seed: run.doc.seed,
        config_hash: io::sha256_hex(run.doc.to_toml()?.as_bytes()),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let manifest = io::save_results(&run.artifacts, &out_dir, &info)?;
    if !cli.quiet {
        for f in &manifest.files {
            log::info!("wrote {}", out_dir.join(&f.name).display());
        }
    }
    Ok(Outcome {
        out_dir,
        manifest,
        converged: run.converged,
    })
}

fn traffic_gen(run: &mut Run) -> Result<(), Failure> {
    let s = run.doc.scenario(run.doc.seed)?;
    run.csv(
        "traffic.csv",
        io::field_csv(s.grid.centers(), s.traffic.values(), "traffic_bps")?,
    );
    Ok(())
}

fn capacity_of(s: &iree_core::Scenario, dep: &Deployment) -> Result<Vec<f64>, Failure> {
    let field = capacity_field(dep, &s.grid, &s.propagation, &s.power, s.seed, CapacityKind::Total)?;
    Ok(field.values().to_vec())
}

fn deployment_json(dep: &Deployment) -> Result<Vec<u8>, Failure> {
    serde_json::to_vec_pretty(dep).map_err(|e| Failure {
        code: EXIT_FAILURE,
        message: format!("cannot encode deployment: {e}"),
    })
}

fn optimize_cmd(run: &mut Run) -> Result<(), Failure> {
    let s = run.doc.scenario(run.doc.seed)?;
    let trace = optimize(&s, &run.doc.solver_config())?;
    if !trace.converged {
        log::warn!(
            "optimizer stopped after {} outer iterations without converging",
            trace.records.len()
        );
    }
    run.converged = trace.converged;
    let cap = capacity_of(&s, &trace.deployment)?;
    run.csv(
        "traffic.csv",
        io::field_csv(s.grid.centers(), s.traffic.values(), "traffic_bps")?,
    );
    run.csv("capacity.csv", io::field_csv(s.grid.centers(), &cap, "capacity_bps")?);
    run.csv("trace.csv", io::trace_csv(&trace.records)?);
    run.csv("metrics.csv", io::metrics_csv(&trace.metrics)?);
    run.artifacts.push(Artifact::new(
        "deployment.json",
        deployment_json(&trace.deployment)?,
        "deployment/json",
    ));
    Ok(())
}

fn baseline_cmd(run: &mut Run) -> Result<(), Failure> {
    let s = run.doc.scenario(run.doc.seed)?;
    let cfg = run.doc.solver_config();
    let mut rows = Vec::with_capacity(4);
    for v in BaselineVariant::ALL {
        let trace = baseline_solve(&s, v, &cfg)?;
        rows.push((v, trace.metrics));
    }
    run.csv("baselines.csv", io::baseline_csv(&rows)?);
    Ok(())
}

fn ablation_cmd(run: &mut Run) -> Result<(), Failure> {
    let s = run.doc.scenario(run.doc.seed)?;
    let cfg = run.doc.solver_config();
    let cmp = compare_training(&s, &cfg, run.doc.ablation.rounds)?;
    let alt = optimize(&s, &cfg)?;
    let e2e = optimize_end_to_end(&s, &cfg)?;
    run.converged = alt.converged;
    run.csv("comparison.csv", io::comparison_csv(&cmp)?);
    run.csv("trace_alternating.csv", io::trace_csv(&alt.records)?);
    run.csv("trace_end_to_end.csv", io::trace_csv(&e2e.records)?);
    Ok(())
}

fn sweep_cmd(run: &mut Run) -> Result<(), Failure> {
    let doc = run.doc.clone();
    let sw = &doc.sweep;
    let cfg = doc.solver_config();
    let surface = sweep(
        |seed| doc.scenario(seed),
        &sw.bs_values,
        &sw.ris_values,
        &sw.seeds,
        &cfg,
    )?;
    let base = doc.scenario(sw.seeds[0])?;
    let law = fit_scaling_law(
        &surface,
        LawInputs::from_scenario(&base),
        base.traffic.d_lmax(),
        sw.fixed_n_bs,
        sw.fixed_n_ris,
    );
    let gradient = iree_gradient_map(&surface).ok();
    let overlay = theory_overlay(&surface, &law).ok();
    let regime = over_capacity_reductions(&surface);

    let mut report: Vec<(String, String)> = Vec::new();
    let mut kv = |k: &str, v: String| report.push((k.to_string(), v));
    kv("cells", surface.cells.len().to_string());
    kv("seeds", sw.seeds.len().to_string());
    kv(
        "converged_runs",
        surface
            .cells
            .iter()
            .flat_map(|c| &c.runs)
            .filter(|r| r.converged)
            .count()
            .to_string(),
    );
    if let Some(c) = law.capacity {
        kv("capacity_fixed_n_ris", sw.fixed_n_ris.to_string());
        kv("capacity_intercept", io::num(c.intercept));
        kv("capacity_slope", io::num(c.slope));
        kv("capacity_r2", io::num(c.r2));
    }
    if let Some(j) = law.js {
        kv("js_p_bs", io::num(j.p_bs));
        kv("js_r2_bs", io::num(j.r2_bs));
        kv("js_rate_ris", io::num(j.rate_ris));
        kv("js_r2_ris", io::num(j.r2_ris));
    }
    let min_delta = law.delta_err.iter().copied().fold(f64::INFINITY, f64::min);
    kv("delta_err_min", io::num(min_delta));
    kv("delta_err_violations", law.delta_violations().to_string());
    kv("over_capacity_xi_reduction_per_ris", io::num(regime.per_ris));
    kv("over_capacity_xi_reduction_per_bs", io::num(regime.per_bs));
    if let Some(o) = &overlay {
        kv("overlay_power_exponent", io::num(o.power_exponent));
        kv("overlay_scale", io::num(o.scale));
        kv("overlay_mismatch_weight", io::num(o.mismatch_weight));
        kv("overlay_rank_correlation", io::num(o.rank_correlation));
    }

    run.csv("surface.csv", io::surface_csv(&surface)?);
    if let Some(g) = &gradient {
        run.csv("gradient_map.csv", io::gradient_csv(g)?);
    }
    let mut cells = String::from("n_bs,n_ris,iree,predicted_iree,deviation,delta_err,ua_residual\n");
    for (k, c) in surface.cells.iter().enumerate() {
        let (p, d) = overlay
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |o| (o.predicted_iree[k], o.deviation[k]));
        cells.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.n_bs,
            c.n_ris,
            io::num(c.mean.iree),
            io::num(p),
            io::num(d),
            io::num(law.delta_err[k]),
            io::num(c.ua_residual)
        ));
    }
    run.csv("overlay.csv", cells.into_bytes());
    run.artifacts
        .push(Artifact::new("fit_report.txt", io::key_values(&report), "key = value"));
    run.converged = surface.cells.iter().all(|c| c.all_converged());
    Ok(())
}

fn metrics_cmd(run: &mut Run, path: &Path) -> Result<(), Failure> {
    let text = std::fs::read(path).map_err(|e| {
        Failure::from(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    let dep: Deployment = serde_json::from_slice(&text)
        .map_err(|e| config_error(format!("{}: not a deployment document: {e}", path.display())))?;
    dep.validate()?;
    let s = run.doc.scenario(run.doc.seed)?;
    let m = evaluate_metrics(&s, &dep)?;
    let cap = capacity_of(&s, &dep)?;
    run.csv("metrics.csv", io::metrics_csv(&m)?);
    run.csv("capacity.csv", io::field_csv(s.grid.centers(), &cap, "capacity_bps")?);
    Ok(())
}

fn svg_artifact(name: &str, text: String) -> Artifact {
    Artifact::new(name, text.into_bytes(), "image/svg+xml")
}

fn column<'a>(header: &[String], cols: &'a [Vec<f64>], name: &str) -> Option<&'a [f64]> {
    header.iter().position(|h| h == name).map(|i| cols[i].as_slice())
}

fn plot_cmd(run: &mut Run, dir: &Path) -> Result<(), Failure> {
    for (file, title) in [("traffic.csv", "Traffic (bit/s)"), ("capacity.csv", "Capacity (bit/s)")] {
        let path = dir.join(file);
        if path.exists() {
            let (_, values) = io::read_field_csv(&path)?;
            let side = (values.len() as f64).sqrt().round() as usize;
            if side * side == values.len() {
                let name = file.replace(".csv", ".svg");
                run.artifacts
                    .push(svg_artifact(&name, svg::field_heatmap(&values, side, title)));
            }
        }
    }
    for file in ["trace.csv", "trace_alternating.csv", "trace_end_to_end.csv"] {
        let path = dir.join(file);
        if path.exists() {
            let (h, cols) = io::read_columns(&path)?;
            if let (Some(eta), Some(loss)) = (column(&h, &cols, "eta"), column(&h, &cols, "loss")) {
                let stem = file.trim_end_matches(".csv");
                run.artifacts.push(svg_artifact(
                    &format!("{stem}_eta.svg"),
                    svg::line_chart(
                        &[("eta".into(), eta.to_vec())],
                        "IREE ratio per outer iteration",
                        "iteration",
                        "bit/J",
                    ),
                ));
                run.artifacts.push(svg_artifact(
                    &format!("{stem}_loss.svg"),
                    svg::line_chart(
                        &[("loss".into(), loss.to_vec())],
                        "Loss per outer iteration",
                        "iteration",
                        "loss",
                    ),
                ));
            }
        }
    }
    let path = dir.join("comparison.csv");
    if path.exists() {
        let (h, cols) = io::read_columns(&path)?;
        if let (Some(a), Some(e)) = (
            column(&h, &cols, "alternating_loss"),
            column(&h, &cols, "end_to_end_loss"),
        ) {
            run.artifacts.push(svg_artifact(
                "comparison.svg",
                svg::line_chart(
                    &[("alternating".into(), a.to_vec()), ("end-to-end".into(), e.to_vec())],
                    "Training loss",
                    "round",
                    "loss",
                ),
            ));
        }
    }
    let path = dir.join("surface.csv");
    if path.exists() {
        let (h, cols) = io::read_columns(&path)?;
        if let (Some(nb), Some(nr), Some(v)) = (
            column(&h, &cols, "n_bs"),
            column(&h, &cols, "n_ris"),
            column(&h, &cols, "iree"),
        ) {
            let mut bs: Vec<u64> = nb.iter().map(|x| *x as u64).collect();
            let mut ris: Vec<u64> = nr.iter().map(|x| *x as u64).collect();
            bs.sort_unstable();
            bs.dedup();
            ris.sort_unstable();
            ris.dedup();
            let mut sum = vec![0.0; bs.len() * ris.len()];
            let mut count = vec![0usize; bs.len() * ris.len()];
            for k in 0..v.len() {
                let i = bs.binary_search(&(nb[k] as u64)).unwrap_or(0);
                let j = ris.binary_search(&(nr[k] as u64)).unwrap_or(0);
                sum[i * ris.len() + j] += v[k];
                count[i * ris.len() + j] += 1;
            }
            let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, c)| s / (*c).max(1) as f64).collect();
            run.artifacts.push(svg_artifact(
                "surface_iree.svg",
                svg::matrix_heatmap(
                    &bs.iter().map(u64::to_string).collect::<Vec<_>>(),
                    &ris.iter().map(u64::to_string).collect::<Vec<_>>(),
                    &mean,
                    "Mean IREE (bit/J)",
                    "BSs",
                    "RISs",
                ),
            ));
        }
    }
    if run.artifacts.is_empty() {
        return Err(Failure {
            code: EXIT_IO,
            message: format!("no plottable CSV files in {}", dir.display()),
        });
    }
    Ok(())
}
