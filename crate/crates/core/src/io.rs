//! Run configuration, the sweep CSV format and run manifests.
//!
//! Default values of [`RunConfig`]:
//!
//! | key              | default                   |
//! |------------------|---------------------------|
//! | `measures`       | `["sp", "concurrence"]`   |
//! | `pair`           | `[0, 1]`                  |
//! | `k_max`          | 4                         |
//! | `restarts`       | 20                        |
//! | `seed`           | 1592652254 (`0x5eedf1de`) |
//! | `degeneracy_tol` | 1e-7                      |
//! | `fidelity_tol`   | 1e-10                     |
//! | `solver_tol`     | 1e-10                     |
//! | `jump_threshold` | 5 × median adjacent \|Δ\| |
//! | `refine_tol`     | 1e-6                      |
//! | `table_measure`  | `"concurrence"`           |
//! | `asymptotic`     | 0.2412 (chain), 1 (tfim)  |
//! | `output`         | `sweep.csv`               |
//! | `threads`        | all cores                 |
//! | `windows.c_min`  | [0.95, 1.15]              |
//! | `windows.sp_max` | [0.85, 1.05]              |
//! | `windows.sp_2d`  | [0.55, 0.68]              |
//! | `windows.drop_2d`| [0.35, 0.45]              |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eigen::{SolverConfig, DEFAULT_DEGENERACY_TOL};
use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, Model};
use crate::measures::{DEFAULT_FIDELITY_TOL, DEFAULT_RESTARTS};
use crate::mixture::DEFAULT_K_MAX;
use crate::sweep::{linear_grid, Measure, PointConfig, PointRecord, SweepResult, DEFAULT_REFINE_TOL};

pub const CSV_COLUMNS: [&str; 15] = [
    "param", "sp", "concurrence", "f_global", "f_local", "e0", "d0", "e1", "d1", "e2", "d2", "e3", "d3", "e4", "d4",
];

pub const DEFAULT_SEED: u64 = 0x5eed_f1de;
/// α_c of the J1–J2 chain.
pub const CHAIN_CRITICAL_POINT: f64 = 0.2412;
/// λ_c of the transverse-field Ising chain.
pub const TFIM_CRITICAL_POINT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitWindows {
    pub c_min: (f64, f64),
    pub sp_max: (f64, f64),
    pub sp_2d: (f64, f64),
    pub drop_2d: (f64, f64),
}

impl Default for FitWindows {
    fn default() -> Self {
        Self { c_min: (0.95, 1.15), sp_max: (0.85, 1.05), sp_2d: (0.55, 0.68), drop_2d: (0.35, 0.45) }
    }
}

/// Everything a sweep and its analysis depend on. Serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    /// Chain length (or total sites of a square 2-D lattice).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    #[serde(default = "default_measures")]
    pub measures: Vec<Measure>,
    #[serde(default = "default_pair")]
    pub pair: (usize, usize),
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_degeneracy_tol")]
    pub degeneracy_tol: f64,
    #[serde(default = "default_fidelity_tol")]
    pub fidelity_tol: f64,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_threshold: Option<f64>,
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
    /// Measure whose discontinuities define the chain's near/far points.
    #[serde(default = "default_table_measure")]
    pub table_measure: Measure,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymptotic: Option<f64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub windows: FitWindows,
}

fn default_measures() -> Vec<Measure> {
    vec![Measure::Sp, Measure::Concurrence]
}
fn default_pair() -> (usize, usize) {
    (0, 1)
}
fn default_k_max() -> usize {
    DEFAULT_K_MAX
}
fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_degeneracy_tol() -> f64 {
    DEFAULT_DEGENERACY_TOL
}
fn default_fidelity_tol() -> f64 {
    DEFAULT_FIDELITY_TOL
}
fn default_solver_tol() -> f64 {
    SolverConfig::default().tol
}
fn default_refine_tol() -> f64 {
    DEFAULT_REFINE_TOL
}
fn default_table_measure() -> Measure {
    Measure::Concurrence
}
fn default_output() -> PathBuf {
    PathBuf::from("sweep.csv")
}

impl RunConfig {
    /// A configuration with every optional field at its default.
    pub fn new(model: Model, sites: usize, from: f64, to: f64, steps: usize) -> Self {
        Self {
            model,
            sites: Some(sites),
            rows: None,
            cols: None,
            from,
            to,
            steps,
            measures: default_measures(),
            pair: default_pair(),
            k_max: DEFAULT_K_MAX,
            restarts: DEFAULT_RESTARTS,
            seed: DEFAULT_SEED,
            degeneracy_tol: DEFAULT_DEGENERACY_TOL,
            fidelity_tol: DEFAULT_FIDELITY_TOL,
            solver_tol: default_solver_tol(),
            jump_threshold: None,
            refine_tol: DEFAULT_REFINE_TOL,
            table_measure: Measure::Concurrence,
            asymptotic: None,
            output: default_output(),
            threads: None,
            windows: FitWindows::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn spec(&self) -> Result<LatticeSpec> {
        let cfg = |e: Error| Error::Config(e.to_string());
        match (self.model, self.sites, self.rows, self.cols) {
            (Model::J1J2Square, _, Some(r), Some(c)) => {
                let spec = LatticeSpec::square(r, c).map_err(cfg)?;
                if self.sites.is_some_and(|n| n != spec.sites()) {
                    return Err(Error::Config(format!("sites = {} disagrees with rows × cols = {}", self.sites.unwrap(), spec.sites())));
                }
                Ok(spec)
            }
            (_, Some(n), None, None) => LatticeSpec::for_model(self.model, n).map_err(cfg),
            (Model::J1J2Square, None, _, _) => Err(Error::Config("field `rows`/`cols` (or `sites`) is required".into())),
            (_, None, _, _) => Err(Error::Config("field `sites` is required".into())),
            _ => Err(Error::Config("fields `rows`/`cols` apply only to model j1j2-2d".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.spec()?;
        let n = spec.sites();
        let bad = |field: &str, why: String| Err(Error::Config(format!("field `{field}`: {why}")));
        linear_grid(self.from, self.to, self.steps).map_err(|e| Error::Config(format!("fields `from`/`to`/`steps`: {e}")))?;
        if self.from < 0.0 {
            return bad("from", format!("coupling ratio {} is negative", self.from));
        }
        if self.measures.is_empty() {
            return bad("measures", "at least one measure is required".into());
        }
        let (a, b) = self.pair;
        if a == b || a >= n || b >= n {
            return bad("pair", format!("({a}, {b}) must be two distinct sites below {n}"));
        }
        if self.restarts == 0 {
            return bad("restarts", "must be at least 1".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad("seed", format!("{} exceeds {}", self.seed, i64::MAX));
        }
        for (field, v) in [
            ("degeneracy_tol", self.degeneracy_tol),
            ("fidelity_tol", self.fidelity_tol),
            ("solver_tol", self.solver_tol),
            ("refine_tol", self.refine_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(field, format!("{v} is not a positive number"));
            }
        }
        if let Some(t) = self.jump_threshold {
            if !(t > 0.0 && t.is_finite()) {
                return bad("jump_threshold", format!("{t} is not a positive number"));
            }
        }
        if self.threads == Some(0) {
            return bad("threads", "must be at least 1".into());
        }
        let w = &self.windows;
        for (field, (lo, hi)) in [("windows.c_min", w.c_min), ("windows.sp_max", w.sp_max), ("windows.sp_2d", w.sp_2d), ("windows.drop_2d", w.drop_2d)] {
            if !(lo < hi) {
                return bad(field, format!("[{lo}, {hi}] is empty"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        linear_grid(self.from, self.to, self.steps)
    }

    /// Seed of the eigensolver start vectors, derived from `seed`.
    pub fn solver_seed(&self) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x5eed_1a2c
    }

    pub fn point_config(&self) -> Result<PointConfig> {
        let mut cfg = PointConfig::new(self.spec()?);
        cfg.pair = self.pair;
        cfg.k_max = self.k_max;
        cfg.degeneracy_tol = self.degeneracy_tol;
        cfg.restarts = self.restarts;
        cfg.fidelity_tol = self.fidelity_tol;
        cfg.seed = self.seed;
        cfg.solver.tol = self.solver_tol;
        cfg.solver.seed = self.solver_seed();
        Ok(cfg)
    }

    /// The configured asymptotic critical point, or the model's default.
    pub fn asymptotic_point(&self) -> Option<f64> {
        self.asymptotic.or(match self.model {
            Model::J1J2Chain => Some(CHAIN_CRITICAL_POINT),
            Model::TfimChain => Some(TFIM_CRITICAL_POINT),
            Model::J1J2Square => None,
        })
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("{} is not a file path", path.display()))))?;
    let tmp = path.with_file_name(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sweep_csv(records: &[PointRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let schema_err = |e: csv::Error| Error::Schema(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(schema_err)?;
    for r in records {
        let mut row = vec![fmt_f64(r.param), fmt_f64(r.sp), fmt_f64(r.concurrence), fmt_f64(r.f_global), fmt_f64(r.f_local)];
        for k in 0..5 {
            row.push(fmt_f64(r.energies[k]));
            row.push(r.degeneracies[k].to_string());
        }
        w.write_record(&row).map_err(schema_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_sweep_csv(path: &Path, records: &[PointRecord]) -> Result<()> {
    write_atomic(path, &sweep_csv(records)?)
}

/// Parses a sweep CSV, checking the header against [`CSV_COLUMNS`].
pub fn parse_sweep_csv(text: &str) -> Result<Vec<PointRecord>> {
    if text.trim().is_empty() {
        return Err(Error::Schema("sweep file is empty".into()));
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(|e| Error::Schema(e.to_string()))?.iter().map(str::to_owned).collect();
    if header != CSV_COLUMNS {
        let missing: Vec<&str> = CSV_COLUMNS.iter().copied().filter(|c| !header.iter().any(|h| h == c)).collect();
        let extra: Vec<&str> = header.iter().map(String::as_str).filter(|h| !CSV_COLUMNS.contains(h)).collect();
        return Err(Error::Schema(format!(
            "column mismatch: missing [{}], unexpected [{}], expected order {}",
            missing.join(", "),
            extra.join(", "),
            CSV_COLUMNS.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| Error::Schema(format!("row {}: {e}", i + 1)))?;
        let f = |c: usize| -> Result<f64> {
            row[c].parse().map_err(|_| Error::Schema(format!("row {}, column {}: `{}` is not a number", i + 1, CSV_COLUMNS[c], &row[c])))
        };
        let d = |c: usize| -> Result<usize> {
            row[c].parse().map_err(|_| Error::Schema(format!("row {}, column {}: `{}` is not a count", i + 1, CSV_COLUMNS[c], &row[c])))
        };
        let mut energies = [0.0; 5];
        let mut degeneracies = [0; 5];
        for k in 0..5 {
            energies[k] = f(5 + 2 * k)?;
            degeneracies[k] = d(6 + 2 * k)?;
        }
        out.push(PointRecord {
            param: f(0)?,
            sp: f(1)?,
            concurrence: f(2)?,
            f_global: f(3)?,
            f_local: f(4)?,
            energies,
            degeneracies,
            ppt_min: None,
        });
    }
    if out.is_empty() {
        return Err(Error::Schema("sweep file has a header but no data rows".into()));
    }
    Ok(out)
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<PointRecord>> {
    let text = fs::read_to_string(path)?;
    parse_sweep_csv(&text).map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        e => e,
    })
}

/// Record of how a sweep file was produced; enough to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub optimizer_seed: u64,
    pub solver_seed: u64,
    pub rows: usize,
    pub threads: usize,
    pub wall_time_seconds: f64,
}

impl Manifest {
    pub fn new(config: &RunConfig, rows: usize, threads: usize, wall_time_seconds: f64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            optimizer_seed: config.seed,
            solver_seed: config.solver_seed(),
            rows,
            threads,
            wall_time_seconds,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        m.config.validate()?;
        Ok(m)
    }
}

/// `out/sweep.csv` → `out/sweep.manifest.json`.
pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

/// A sweep read back from disk together with the configuration that produced it.
pub fn load_sweep(csv: &Path) -> Result<(SweepResult, RunConfig)> {
    let records = read_sweep_csv(csv)?;
    let mpath = manifest_path(csv);
    if !mpath.exists() {
        return Err(Error::Config(format!("manifest {} not found next to the sweep file", mpath.display())));
    }
    let config = Manifest::read(&mpath)?.config;
    let spec = config.spec()?;
    Ok((SweepResult { model: spec.model(), sites: spec.sites(), pair: config.pair, records }, config))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(x: f64) -> PointRecord {
        PointRecord {
            param: x,
            sp: 0.1 + x,
            concurrence: 1.0 / 3.0,
            f_global: std::f64::consts::PI,
            f_local: -1e-300,
            energies: [-1.5, -1.0, 0.0, f64::NAN, f64::NAN],
            degeneracies: [1, 3, 2, 0, 0],
            ppt_min: None,
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = RunConfig::new(Model::TfimChain, 12, 0.5, 1.5, 201);
        cfg.jump_threshold = Some(1e-3);
        cfg.fidelity_tol = 0.1 + 0.2;
        cfg.windows.c_min = (0.9, 1.1);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_toml_str("model = \"j1j2-2d\"\nrows = 4\ncols = 4\nfrom = 0.3\nto = 0.7\nsteps = 41\n").unwrap();
        assert_eq!(cfg.spec().unwrap().sites(), 16);
        assert_eq!(cfg.k_max, 4);
        assert_eq!(cfg.windows, FitWindows::default());
    }

    #[test]
    fn bad_fields_are_named() {
        let err = RunConfig::from_toml_str("model = \"tfim\"\nsites = 6\nfrom = 0.5\nto = 1.5\nsteps = 11\npair = [0, 9]\n").unwrap_err();
        assert!(err.to_string().contains("`pair`"), "{err}");
        let err = RunConfig::from_toml_str("model = \"tfim\"\nsites = 6\nfrom = 0.5\nto = 1.5\nsteps = 11\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn csv_is_bit_exact() {
        let recs = vec![record(0.25), record(0.1 + 0.2)];
        let bytes = sweep_csv(&recs).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(!text.contains('\r'));
        assert!(text.starts_with("param,sp,concurrence,f_global,f_local,e0,d0,e1,d1,e2,d2,e3,d3,e4,d4\n"));
        let back = parse_sweep_csv(&text).unwrap();
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.param.to_bits(), b.param.to_bits());
            assert_eq!(a.concurrence.to_bits(), b.concurrence.to_bits());
            assert_eq!(a.f_local.to_bits(), b.f_local.to_bits());
            assert!(b.energies[4].is_nan());
            assert_eq!(a.degeneracies, b.degeneracies);
        }
    }

    #[test]
    fn schema_errors_list_columns() {
        let err = parse_sweep_csv("param,sp,bogus\n0,0,0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("missing [concurrence") && msg.contains("unexpected [bogus]"), "{msg}");
        assert!(matches!(parse_sweep_csv(""), Err(Error::Schema(_))));
        assert!(matches!(parse_sweep_csv(&CSV_COLUMNS.join(",")), Err(Error::Schema(_))));
    }
}
