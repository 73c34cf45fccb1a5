//! Parameter sweeps and their analysis: discontinuities, derivative extrema
//! and finite-size scaling fits.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{low_spectrum, SolverConfig, DEFAULT_DEGENERACY_TOL, DEFAULT_LEVELS};
use crate::error::{Error, Result};
use crate::lattice::{build_hamiltonian, CouplingParams, LatticeSpec, Model};
use crate::measures::{concurrence, partial_transpose_min_eigenvalue, shared_purity, DEFAULT_FIDELITY_TOL, DEFAULT_RESTARTS};
use crate::mixture::{build_mixture, reduce_to_pair, DEFAULT_K_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Sp,
    Concurrence,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Sp => "sp",
            Measure::Concurrence => "concurrence",
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sp" => Ok(Measure::Sp),
            "concurrence" | "c" => Ok(Measure::Concurrence),
            other => Err(Error::Config(format!("unknown measure `{other}` (expected sp or concurrence)"))),
        }
    }
}

/// Everything needed to evaluate the pipeline at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointConfig {
    pub spec: LatticeSpec,
    pub pair: (usize, usize),
    pub k_max: usize,
    pub solver: SolverConfig,
    pub degeneracy_tol: f64,
    pub restarts: usize,
    pub fidelity_tol: f64,
    /// Seed of the local-fidelity starts; mixed with the parameter value so a
    /// point gives the same result on any grid.
    pub seed: u64,
}

impl PointConfig {
    pub fn new(spec: LatticeSpec) -> Self {
        Self {
            spec,
            pair: (0, 1),
            k_max: DEFAULT_K_MAX,
            solver: SolverConfig::default(),
            degeneracy_tol: DEFAULT_DEGENERACY_TOL,
            restarts: DEFAULT_RESTARTS,
            fidelity_tol: DEFAULT_FIDELITY_TOL,
            seed: 0x5eed_f1de,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub param: f64,
    pub sp: f64,
    pub concurrence: f64,
    pub f_global: f64,
    pub f_local: f64,
    /// Lowest level energies; NaN where fewer levels exist.
    pub energies: [f64; 5],
    /// Level degeneracies; 0 where fewer levels exist.
    pub degeneracies: [usize; 5],
    /// Smallest eigenvalue of the partial transpose of the pair state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppt_min: Option<f64>,
}

impl PointRecord {
    pub fn get(&self, m: Measure) -> f64 {
        match m {
            Measure::Sp => self.sp,
            Measure::Concurrence => self.concurrence,
        }
    }
}

pub fn evaluate_point(cfg: &PointConfig, x: f64) -> Result<PointRecord> {
    let run = || -> Result<PointRecord> {
        let model = cfg.spec.model();
        let h = build_hamiltonian(&cfg.spec, &CouplingParams::at(model, x))?;
        let spectrum = low_spectrum(&h, DEFAULT_LEVELS.max(cfg.k_max + 1), cfg.degeneracy_tol, &cfg.solver)?;
        let mix = build_mixture(&spectrum, cfg.k_max)?;
        let rho = reduce_to_pair(&mix, cfg.pair, h.sites())?;
        let c = concurrence(&rho)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ x.to_bits());
        let sp = shared_purity(&rho, cfg.restarts, cfg.fidelity_tol, &mut rng)?;
        let mut energies = [f64::NAN; 5];
        let mut degeneracies = [0; 5];
        for (k, level) in spectrum.levels.iter().take(5).enumerate() {
            energies[k] = level.energy;
            degeneracies[k] = level.degeneracy();
        }
        Ok(PointRecord {
            param: x,
            sp: sp.sp,
            concurrence: c.value,
            f_global: sp.f_global,
            f_local: sp.f_local,
            energies,
            degeneracies,
            ppt_min: Some(partial_transpose_min_eigenvalue(&rho)),
        })
    };
    run().map_err(|e| Error::AtPoint { param: x, source: Box::new(e) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub model: Model,
    pub sites: usize,
    pub pair: (usize, usize),
    pub records: Vec<PointRecord>,
}

impl SweepResult {
    pub fn grid(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.param).collect()
    }

    pub fn values(&self, m: Measure) -> Vec<f64> {
        self.records.iter().map(|r| r.get(m)).collect()
    }
}

/// `steps` evenly spaced values from `from` to `to` inclusive. A single step
/// requires `from == to`.
pub fn linear_grid(from: f64, to: f64, steps: usize) -> Result<Vec<f64>> {
    if !from.is_finite() || !to.is_finite() {
        return Err(Error::InvalidParameter("sweep bounds must be finite".into()));
    }
    match steps {
        0 => Err(Error::InvalidParameter("a sweep needs at least one step".into())),
        1 if from == to => Ok(vec![from]),
        1 => Err(Error::InvalidParameter(format!("one step cannot span [{from}, {to}]"))),
        _ if from >= to => Err(Error::InvalidParameter(format!("empty sweep range [{from}, {to}]"))),
        _ => Ok((0..steps)
            .map(|i| if i + 1 == steps { to } else { from + (to - from) * i as f64 / (steps - 1) as f64 })
            .collect()),
    }
}

/// Evaluates every grid point (in parallel) and returns records in grid order.
pub fn run_sweep(cfg: &PointConfig, grid: &[f64]) -> Result<SweepResult> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("sweep grid must be non-empty and strictly ascending".into()));
    }
    if let Some(&x) = grid.iter().find(|&&x| x < 0.0) {
        return Err(Error::InvalidParameter(format!("coupling ratio {x} is negative")));
    }
    let records = grid.par_iter().map(|&x| evaluate_point(cfg, x)).collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { model: cfg.spec.model(), sites: cfg.spec.sites(), pair: cfg.pair, records })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discontinuity {
    pub measure: Measure,
    pub location: f64,
    /// Change of the measure across the bracket (right minus left).
    pub jump: f64,
    pub refined: bool,
    pub bracket: (f64, f64),
    pub bracket_width: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Default jump threshold: five times the median absolute adjacent difference
/// (never below 1e−10, so exact plateaus do not flag roundoff).
pub fn default_jump_threshold(values: &[f64]) -> f64 {
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    if diffs.is_empty() {
        return f64::INFINITY;
    }
    (5.0 * median(diffs)).max(1e-10)
}

/// Adjacent-point jumps larger than the threshold; runs of flagged intervals
/// are merged into one discontinuity.
pub fn detect_discontinuities(sweep: &SweepResult, measure: Measure, threshold: Option<f64>) -> Vec<Discontinuity> {
    let x = sweep.grid();
    let f = sweep.values(measure);
    if f.len() < 3 {
        return Vec::new();
    }
    let threshold = threshold.unwrap_or_else(|| default_jump_threshold(&f));
    let mut out: Vec<Discontinuity> = Vec::new();
    let mut open: Option<usize> = None;
    for i in 0..f.len() - 1 {
        let flagged = (f[i + 1] - f[i]).abs() > threshold;
        match (flagged, open) {
            (true, None) => open = Some(i),
            (false, Some(s)) => {
                out.push(discontinuity(measure, &x, &f, s, i));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        out.push(discontinuity(measure, &x, &f, s, f.len() - 1));
    }
    out
}

fn discontinuity(measure: Measure, x: &[f64], f: &[f64], lo: usize, hi: usize) -> Discontinuity {
    Discontinuity {
        measure,
        location: 0.5 * (x[lo] + x[hi]),
        jump: f[hi] - f[lo],
        refined: false,
        bracket: (x[lo], x[hi]),
        bracket_width: x[hi] - x[lo],
    }
}

/// Default bracket width at which refinement stops.
pub const DEFAULT_REFINE_TOL: f64 = 1e-6;

/// Bisection on a bracket holding one jump. Each step keeps the half whose
/// endpoint difference is larger; if neither half retains a quarter of the
/// original jump the bracket held more than one feature and an error is
/// returned.
pub fn refine_discontinuity(cfg: &PointConfig, measure: Measure, bracket: (f64, f64), tol: f64) -> Result<Discontinuity> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("bad refinement bracket [{lo}, {hi}] or tolerance {tol}")));
    }
    let mut f_lo = evaluate_point(cfg, lo)?.get(measure);
    let mut f_hi = evaluate_point(cfg, hi)?.get(measure);
    let jump0 = f_hi - f_lo;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = evaluate_point(cfg, mid)?.get(measure);
        let (left, right) = ((f_mid - f_lo).abs(), (f_hi - f_mid).abs());
        if left.max(right) < 0.25 * jump0.abs() {
            return Err(Error::Refinement(format!(
                "jump of {jump0:.3e} in [{}, {}] vanished near {mid}; use a finer initial grid",
                bracket.0, bracket.1
            )));
        }
        if left >= right {
            hi = mid;
            f_hi = f_mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    Ok(Discontinuity {
        measure,
        location: 0.5 * (lo + hi),
        jump: f_hi - f_lo,
        refined: true,
        bracket: (lo, hi),
        bracket_width: hi - lo,
    })
}

/// Detects discontinuities of `measure` on the sweep and refines each one.
pub fn locate_discontinuities(cfg: &PointConfig, sweep: &SweepResult, measure: Measure, threshold: Option<f64>, tol: f64) -> Result<Vec<Discontinuity>> {
    detect_discontinuities(sweep, measure, threshold)
        .into_par_iter()
        .map(|d| refine_discontinuity(cfg, measure, d.bracket, tol))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeExtremum {
    pub measure: Measure,
    pub location: f64,
    pub kind: ExtremumKind,
    pub fit_window: (f64, f64),
    /// Cubic c0 + c1 x + c2 x² + c3 x³ fitted to the derivative samples.
    pub fit_coeffs: [f64; 4],
    pub samples: usize,
}

/// Central differences of `f` on an ascending (possibly non-uniform) grid, at
/// interior points.
pub fn central_differences(x: &[f64], f: &[f64]) -> Vec<(f64, f64)> {
    (1..x.len().saturating_sub(1))
        .map(|i| (x[i], (f[i + 1] - f[i - 1]) / (x[i + 1] - x[i - 1])))
        .collect()
}

/// Least-squares cubic through the derivative samples inside `window` and its
/// interior extremum of the requested kind.
pub fn derivative_extremum(sweep: &SweepResult, measure: Measure, window: (f64, f64), kind: ExtremumKind) -> Result<DerivativeExtremum> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("empty fit window [{lo}, {hi}]")));
    }
    let samples: Vec<(f64, f64)> = central_differences(&sweep.grid(), &sweep.values(measure))
        .into_iter()
        .filter(|&(x, _)| x >= lo && x <= hi)
        .collect();
    if samples.len() < 8 {
        return Err(Error::Fit(format!(
            "only {} derivative samples inside [{lo}, {hi}]; at least 8 are needed",
            samples.len()
        )));
    }
    // Fit in t = (x − m)/h ∈ [−1, 1] for conditioning.
    let (m, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let a = DMatrix::from_fn(samples.len(), 4, |i, k| ((samples[i].0 - m) / h).powi(k as i32));
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let t = a
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::Fit(format!("cubic least squares failed: {e}")))?;

    // p'(t) = t1 + 2 t2 t + 3 t3 t², p''(t) = 2 t2 + 6 t3 t.
    let roots: Vec<f64> = if t[3].abs() < 1e-14 * t.amax() {
        if t[2] == 0.0 { vec![] } else { vec![-t[1] / (2.0 * t[2])] }
    } else {
        let (qa, qb, qc) = (3.0 * t[3], 2.0 * t[2], t[1]);
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            vec![]
        } else {
            let s = disc.sqrt();
            // Numerically stable quadratic roots.
            let q = -0.5 * (qb + qb.signum() * s);
            if q == 0.0 { vec![0.0] } else { vec![q / qa, qc / q] }
        }
    };
    let want = |r: f64| {
        let curv = 2.0 * t[2] + 6.0 * t[3] * r;
        match kind {
            ExtremumKind::Min => curv > 0.0,
            ExtremumKind::Max => curv < 0.0,
        }
    };
    let coeffs = to_monomial([t[0], t[1], t[2], t[3]], m, h);
    let r = roots.into_iter().find(|&r| r > -1.0 && r < 1.0 && want(r)).ok_or_else(|| {
        Error::Fit(format!(
            "fitted cubic has no interior {kind:?} in [{lo}, {hi}] (coefficients {coeffs:?}, {} samples)",
            samples.len()
        ))
    })?;
    Ok(DerivativeExtremum {
        measure,
        location: m + h * r,
        kind,
        fit_window: window,
        fit_coeffs: coeffs,
        samples: samples.len(),
    })
}

/// Coefficients in x of Σ a_k ((x − m)/h)^k.
fn to_monomial(a: [f64; 4], m: f64, h: f64) -> [f64; 4] {
    let binom = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
    let mut out = [0.0; 4];
    for k in 0..4 {
        let ak = a[k] / h.powi(k as i32);
        for j in 0..=k {
            out[j] += ak * binom[k][j] * (-m).powi((k - j) as i32);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Above,
    Below,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// Slope β of ln|x_N − x_c| against ln N.
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub asymptotic_critical_point: f64,
    pub points: Vec<(f64, f64)>,
    /// Position of the pseudo-critical points relative to x_c; the fit uses
    /// absolute distances either way.
    pub side: Side,
}

pub fn fit_scaling(points: &[(f64, f64)], asymptotic: f64) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("{} points given; a scaling fit needs at least 3", points.len())));
    }
    if let Some(&(n, _)) = points.iter().find(|p| p.1 == asymptotic) {
        return Err(Error::Fit(format!("pseudo-critical point for N = {n} equals the asymptotic value")));
    }
    if let Some(&(n, _)) = points.iter().find(|p| !(p.0 > 0.0)) {
        return Err(Error::Fit(format!("system size {n} is not positive")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| (p.1 - asymptotic).abs().ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all system sizes are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    let above = points.iter().all(|p| p.1 > asymptotic);
    let below = points.iter().all(|p| p.1 < asymptotic);
    Ok(ScalingFit {
        exponent: slope,
        intercept,
        r_squared,
        asymptotic_critical_point: asymptotic,
        points: points.to_vec(),
        side: if above { Side::Above } else if below { Side::Below } else { Side::Mixed },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoDimAnalysis {
    /// The largest jump of each measure inside the drop window, refined.
    pub drops: Vec<Discontinuity>,
    /// Minimum of the fitted shared-purity derivative.
    pub second: DerivativeExtremum,
    /// Every other detected discontinuity, unrefined and unclassified.
    pub other: Vec<Discontinuity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoDimOptions {
    pub drop_window: (f64, f64),
    pub sp_window: (f64, f64),
    pub jump_threshold: Option<f64>,
    pub refine_tol: f64,
}

impl Default for TwoDimOptions {
    fn default() -> Self {
        Self { drop_window: (0.35, 0.45), sp_window: (0.55, 0.68), jump_threshold: None, refine_tol: DEFAULT_REFINE_TOL }
    }
}

/// The square-lattice analysis: the sharp drop near α ≈ 0.4 in both measures
/// and the derivative minimum of shared purity near α ≈ 0.6.
pub fn analyze_2d(cfg: &PointConfig, sweep: &SweepResult, opts: &TwoDimOptions) -> Result<TwoDimAnalysis> {
    let mut drops = Vec::new();
    let mut other = Vec::new();
    for measure in [Measure::Concurrence, Measure::Sp] {
        let found = detect_discontinuities(sweep, measure, opts.jump_threshold);
        let (w_lo, w_hi) = opts.drop_window;
        let largest = found
            .iter()
            .enumerate()
            .filter(|(_, d)| d.location >= w_lo && d.location <= w_hi)
            .max_by(|a, b| a.1.jump.abs().total_cmp(&b.1.jump.abs()))
            .map(|(i, _)| i);
        let Some(i) = largest else {
            return Err(Error::Fit(format!(
                "no {} discontinuity inside [{w_lo}, {w_hi}]",
                measure.name()
            )));
        };
        drops.push(refine_discontinuity(cfg, measure, found[i].bracket, opts.refine_tol)?);
        other.extend(found.into_iter().enumerate().filter(|&(j, _)| j != i).map(|(_, d)| d));
    }
    let second = derivative_extremum(sweep, Measure::Sp, opts.sp_window, ExtremumKind::Min)?;
    Ok(TwoDimAnalysis { drops, second, other })
}
