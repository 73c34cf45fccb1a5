//! The `spinmix` command line: `sweep` and `analyze`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{load_sweep, manifest_path, write_json, write_sweep_csv, Manifest, RunConfig};
use crate::lattice::Model;
use crate::sweep::{
    analyze_2d, derivative_extremum, detect_discontinuities, fit_scaling, locate_discontinuities, run_sweep,
    DerivativeExtremum, Discontinuity, ExtremumKind, Measure, ScalingFit, TwoDimAnalysis, TwoDimOptions,
};

#[derive(Debug, Parser)]
#[command(name = "spinmix", version, about = "Correlations of low-lying mixtures in frustrated spin models")]
pub struct Cli {
    /// Worker threads for the parallel sweep (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the measures on a parameter grid and write CSV plus manifest.
    Sweep(SweepArgs),
    /// Locate discontinuities and derivative extrema in sweep files; with
    /// several system sizes also fit finite-size scaling.
    Analyze(AnalyzeArgs),
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> std::result::Result<(T, T), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two comma-separated values, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<T>().map_err(|_| format!("cannot parse `{v}`"));
    Ok((p(a)?, p(b)?))
}

fn parse_measures(s: &str) -> Result<Vec<Measure>> {
    match s {
        "both" => Ok(vec![Measure::Sp, Measure::Concurrence]),
        other => other.parse::<Measure>().map(|m| vec![m]),
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// j1j2-1d, tfim or j1j2-2d.
    #[arg(long)]
    pub model: Option<Model>,
    #[arg(long = "n")]
    pub sites: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// sp, concurrence or both.
    #[arg(long)]
    pub measure: Option<String>,
    /// Site pair `a,b`.
    #[arg(long, value_parser = parse_pair::<usize>)]
    pub pair: Option<(usize, usize)>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Seed of the optimizer and eigensolver generators.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub degeneracy_tol: Option<f64>,
    #[arg(long)]
    pub fidelity_tol: Option<f64>,
    #[arg(long)]
    pub solver_tol: Option<f64>,
    #[arg(long)]
    pub jump_threshold: Option<f64>,
    #[arg(long)]
    pub refine_tol: Option<f64>,
    #[arg(long)]
    pub asymptotic: Option<f64>,
    /// Sweep CSV path; the manifest is written beside it.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Sweep CSV files, each with its manifest alongside.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Analysis JSON path.
    #[arg(long, short, default_value = "analysis.json")]
    pub output: PathBuf,
    /// Scaling-fit JSON path (written when several system sizes are given).
    #[arg(long, default_value = "scaling.json")]
    pub scaling_output: PathBuf,
    /// Report grid-level discontinuities without bisection refinement.
    #[arg(long)]
    pub no_refine: bool,
    #[arg(long)]
    pub jump_threshold: Option<f64>,
    #[arg(long)]
    pub refine_tol: Option<f64>,
    #[arg(long)]
    pub asymptotic: Option<f64>,
    /// Seed for refinement evaluations (default: the sweep's seed).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_pair::<f64>)]
    pub window_c_min: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_pair::<f64>)]
    pub window_sp_max: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_pair::<f64>)]
    pub window_sp_2d: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_pair::<f64>)]
    pub window_drop_2d: Option<(f64, f64)>,
}

impl SweepArgs {
    pub fn into_config(self, threads: Option<usize>) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let model = self.model.ok_or_else(|| Error::Config("missing --model (or --config)".into()))?;
                let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| Error::Config(format!("missing --{flag}")));
                let steps = self.steps.ok_or_else(|| Error::Config("missing --steps".into()))?;
                let mut c = RunConfig::new(model, 0, need(self.from, "from")?, need(self.to, "to")?, steps);
                c.sites = None;
                c
            }
        };
        let measures = self.measure.as_deref().map(parse_measures).transpose()?;
        macro_rules! set {
            ($($field:ident <- $value:expr),* $(,)?) => {$(if let Some(v) = $value { cfg.$field = v; })*};
        }
        set!(model <- self.model, from <- self.from, to <- self.to, steps <- self.steps, measures <- measures,
             pair <- self.pair, k_max <- self.k_max, restarts <- self.restarts, seed <- self.seed,
             degeneracy_tol <- self.degeneracy_tol, fidelity_tol <- self.fidelity_tol, solver_tol <- self.solver_tol,
             refine_tol <- self.refine_tol, output <- self.output);
        if self.sites.is_some() || self.rows.is_some() || self.cols.is_some() {
            cfg.sites = self.sites;
            cfg.rows = self.rows;
            cfg.cols = self.cols;
        }
        if self.jump_threshold.is_some() {
            cfg.jump_threshold = self.jump_threshold;
        }
        if self.asymptotic.is_some() {
            cfg.asymptotic = self.asymptotic;
        }
        if threads.is_some() {
            cfg.threads = threads;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs the sweep described by `cfg`, writing the CSV and its manifest.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let point = cfg.point_config()?;
    let grid = cfg.grid()?;
    if let Some(dir) = cfg.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("output directory {} does not exist", dir.display()),
            )));
        }
    }
    let start = Instant::now();
    let sweep = run_sweep(&point, &grid)?;
    let wall = start.elapsed().as_secs_f64();
    write_sweep_csv(&cfg.output, &sweep.records)?;
    let manifest = Manifest::new(cfg, sweep.records.len(), rayon::current_num_threads(), wall);
    manifest.write(&manifest_path(&cfg.output))?;
    Ok(manifest)
}

/// Analysis of one sweep file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileAnalysis {
    pub file: PathBuf,
    pub model: Model,
    pub sites: usize,
    pub discontinuities: Vec<Discontinuity>,
    /// First and second discontinuity of the table measure (chain only);
    /// larger chains can show further jumps, which stay in `discontinuities`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far: Option<f64>,
    pub extrema: Vec<DerivativeExtremum>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_dim: Option<TwoDimAnalysis>,
    /// Analyses that could not be completed (e.g. no extremum in a window).
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub name: String,
    pub fit: ScalingFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub fits: Vec<NamedFit>,
    pub notes: Vec<String>,
}

fn apply_overrides(cfg: &mut RunConfig, args: &AnalyzeArgs) {
    if args.jump_threshold.is_some() {
        cfg.jump_threshold = args.jump_threshold;
    }
    if let Some(t) = args.refine_tol {
        cfg.refine_tol = t;
    }
    if args.asymptotic.is_some() {
        cfg.asymptotic = args.asymptotic;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let w = &mut cfg.windows;
    for (slot, v) in [
        (&mut w.c_min, args.window_c_min),
        (&mut w.sp_max, args.window_sp_max),
        (&mut w.sp_2d, args.window_sp_2d),
        (&mut w.drop_2d, args.window_drop_2d),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
}

/// Discontinuities, extrema and (for the 2-D model) the drop/minimum analysis
/// of one sweep.
pub fn analyze_file(path: &Path, overrides: Option<&AnalyzeArgs>, refine: bool) -> Result<(FileAnalysis, RunConfig)> {
    let (sweep, mut cfg) = load_sweep(path)?;
    if let Some(args) = overrides {
        apply_overrides(&mut cfg, args);
    }
    cfg.validate()?;
    let point = cfg.point_config()?;
    let mut out = FileAnalysis {
        file: path.to_path_buf(),
        model: sweep.model,
        sites: sweep.sites,
        discontinuities: Vec::new(),
        near: None,
        far: None,
        extrema: Vec::new(),
        two_dim: None,
        notes: Vec::new(),
    };
    match sweep.model {
        Model::J1J2Chain => {
            let mut measures = cfg.measures.clone();
            if !measures.contains(&cfg.table_measure) {
                measures.push(cfg.table_measure);
            }
            for m in measures {
                let found = if refine {
                    locate_discontinuities(&point, &sweep, m, cfg.jump_threshold, cfg.refine_tol)?
                } else {
                    detect_discontinuities(&sweep, m, cfg.jump_threshold)
                };
                if m == cfg.table_measure && !found.is_empty() {
                    out.near = Some(found[0].location);
                    out.far = found.get(1).map(|d| d.location);
                }
                out.discontinuities.extend(found);
            }
        }
        Model::TfimChain => {
            for (m, window, kind) in [
                (Measure::Concurrence, cfg.windows.c_min, ExtremumKind::Min),
                (Measure::Sp, cfg.windows.sp_max, ExtremumKind::Max),
            ] {
                if !cfg.measures.contains(&m) {
                    continue;
                }
                match derivative_extremum(&sweep, m, window, kind) {
                    Ok(e) => out.extrema.push(e),
                    Err(e @ Error::Fit(_)) => out.notes.push(format!("{} derivative {kind:?}: {e}", m.name())),
                    Err(e) => return Err(e),
                }
                out.discontinuities.extend(detect_discontinuities(&sweep, m, cfg.jump_threshold));
            }
        }
        Model::J1J2Square => {
            let opts = TwoDimOptions {
                drop_window: cfg.windows.drop_2d,
                sp_window: cfg.windows.sp_2d,
                jump_threshold: cfg.jump_threshold,
                refine_tol: if refine { cfg.refine_tol } else { f64::INFINITY },
            };
            match analyze_2d(&point, &sweep, &opts) {
                Ok(a) => out.two_dim = Some(a),
                Err(e @ Error::Fit(_)) => out.notes.push(format!("2-D analysis: {e}")),
                Err(e) => return Err(e),
            }
        }
    }
    Ok((out, cfg))
}

/// Scaling fits over a series of system sizes: near/far discontinuities split
/// by parity for the chain, the concurrence minimum and shared-purity maximum
/// for the Ising chain.
pub fn scaling_report(analyses: &[(FileAnalysis, RunConfig)]) -> ScalingReport {
    let mut series: Vec<(String, Vec<(f64, f64)>, Option<f64>)> = Vec::new();
    let mut push = |name: String, n: usize, x: f64, asym: Option<f64>| match series.iter_mut().find(|s| s.0 == name) {
        Some(s) => s.1.push((n as f64, x)),
        None => series.push((name, vec![(n as f64, x)], asym)),
    };
    for (a, cfg) in analyses {
        let asym = cfg.asymptotic_point();
        match a.model {
            Model::J1J2Chain => {
                let parity = if a.sites % 2 == 1 { "odd" } else { "even" };
                if let Some(x) = a.near {
                    push(format!("near_{parity}"), a.sites, x, asym);
                }
                if let Some(x) = a.far {
                    push(format!("far_{parity}"), a.sites, x, asym);
                }
            }
            Model::TfimChain => {
                for e in &a.extrema {
                    push(format!("{}_{:?}", e.measure.name(), e.kind).to_lowercase(), a.sites, e.location, asym);
                }
            }
            Model::J1J2Square => {}
        }
    }
    let mut report = ScalingReport { fits: Vec::new(), notes: Vec::new() };
    for (name, mut points, asym) in series {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let Some(asym) = asym else { continue };
        match fit_scaling(&points, asym) {
            Ok(fit) => report.fits.push(NamedFit { name, fit }),
            Err(e) => report.notes.push(format!("{name}: {e}")),
        }
    }
    report
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(Vec<FileAnalysis>, Option<ScalingReport>)> {
    let analyses = args
        .files
        .iter()
        .map(|f| analyze_file(f, Some(args), !args.no_refine))
        .collect::<Result<Vec<_>>>()?;
    write_json(&args.output, &analyses.iter().map(|a| &a.0).collect::<Vec<_>>())?;
    let sizes: std::collections::BTreeSet<usize> = analyses.iter().map(|a| a.0.sites).collect();
    let scaling = (sizes.len() > 1).then(|| scaling_report(&analyses));
    if let Some(report) = &scaling {
        write_json(&args.scaling_output, report)?;
    }
    Ok((analyses.into_iter().map(|a| a.0).collect(), scaling))
}

/// Process exit status for an error: 2 configuration or schema, 3 numerical
/// failure, 4 I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 4,
        Error::AtPoint { source, .. } => exit_code(source),
        e if e.is_numerical() => 3,
        Error::LengthMismatch { .. } => 3,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
    }
    let threads = match &cli.command {
        Command::Sweep(a) => match &a.config {
            Some(p) if cli.threads.is_none() => RunConfig::load(p)?.threads,
            _ => cli.threads,
        },
        Command::Analyze(_) => cli.threads,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Sweep(args) => {
            let cfg = args.into_config(threads)?;
            let m = cmd_sweep(&cfg)?;
            eprintln!("wrote {} rows to {} in {:.1} s", m.rows, cfg.output.display(), m.wall_time_seconds);
            Ok(())
        }
        Command::Analyze(args) => {
            let (files, scaling) = cmd_analyze(&args)?;
            for f in &files {
                let (jumps, extrema) = match &f.two_dim {
                    Some(t) => (t.drops.len() + t.other.len(), 1),
                    None => (f.discontinuities.len(), f.extrema.len()),
                };
                eprintln!("{} (N = {}): {jumps} discontinuities, {extrema} extrema", f.file.display(), f.sites);
                for note in &f.notes {
                    eprintln!("  note: {note}");
                }
            }
            if let Some(s) = scaling {
                for f in &s.fits {
                    eprintln!("{}: beta = {:.4} (r^2 = {:.4})", f.name, f.fit.exponent, f.fit.r_squared);
                }
            }
            Ok(())
        }
    })
}
