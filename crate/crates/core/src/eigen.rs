//! Lowest eigenpairs of a [`SparseHamiltonian`] and their grouping into
//! degenerate levels.
//!
//! The Hamiltonian is split into charge × momentum blocks (see the `symmetry`
//! module) and each block is solved with a block Lanczos iteration that keeps
//! the whole Krylov basis and reorthogonalizes every new vector against it (two
//! classical Gram–Schmidt passes). Ritz pairs come from a dense Rayleigh–Ritz
//! step on the projected matrix. When the basis reaches its cap the lowest Ritz
//! vectors are kept and the iteration continues from their residuals. Small
//! blocks are diagonalized densely.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CsrMatrix, SparseHamiltonian};
use crate::symmetry::Symmetry;

/// Number of distinct levels kept in a [`LowSpectrum`] by default.
pub const DEFAULT_LEVELS: usize = 5;
/// Relative energy tolerance under which two eigenvalues form one level.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-7;
/// Eigenpairs requested on the first solve.
pub const DEFAULT_PAIRS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Vectors per Lanczos block; must cover the largest degeneracy inside one
    /// symmetry block (the momentum pair ±q already accounts for a factor two).
    pub block_size: usize,
    /// Cap on matrix–vector products per sector solve.
    pub max_iterations: usize,
    /// Basis size at which the iteration restarts.
    pub max_basis: usize,
    /// Convergence threshold on ‖Hv − Ev‖ / max(1, |E|).
    pub tol: f64,
    /// Seed for the random starting blocks.
    pub seed: u64,
    /// Sectors up to this dimension are diagonalized densely.
    pub dense_threshold: usize,
    /// Split the problem into symmetry blocks. When false the Lanczos
    /// iteration runs on the full space.
    pub use_symmetry: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            block_size: 4,
            max_iterations: 10_000,
            max_basis: 64,
            tol: 1e-10,
            seed: 0x5eed_1a2c,
            dense_threshold: 400,
            use_symmetry: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub energy: f64,
    /// Unit-norm vector on the full 2^N space.
    pub vector: Vec<f64>,
}

/// One energy level with an orthonormal basis of its eigenspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub energy: f64,
    pub basis: Vec<Vec<f64>>,
}

impl Level {
    pub fn degeneracy(&self) -> usize {
        self.basis.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowSpectrum {
    /// Distinct levels, ascending in energy.
    pub levels: Vec<Level>,
    pub levels_requested: usize,
    /// True when an eigenpair above the last retained level was seen, so that
    /// level's degeneracy is known to be complete.
    pub boundary_resolved: bool,
}

impl LowSpectrum {
    pub fn energies(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy).collect()
    }

    pub fn degeneracies(&self) -> Vec<usize> {
        self.levels.iter().map(Level::degeneracy).collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn scale(v: &mut [f64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

fn random_block(rng: &mut ChaCha8Rng, n: usize, b: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, b, |_, _| rng.random::<f64>() - 0.5)
}

/// Eigenpairs of one sector operator, energies ascending, vectors in sector
/// coordinates.
struct SectorSolution {
    energies: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

fn dense_solve(a: &CsrMatrix, m: usize) -> SectorSolution {
    let n = a.dim();
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for (j, v) in a.row(i) {
            dense[(i, j)] = v;
        }
    }
    let eig = SymmetricEigen::new(dense);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    order.truncate(m);
    SectorSolution {
        energies: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        vectors: order
            .iter()
            .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect(),
    }
}

/// Krylov basis with its image under the operator, stored column-major so
/// projections and updates run as matrix–matrix products.
struct Krylov<'a> {
    op: &'a CsrMatrix,
    basis: DMatrix<f64>,
    images: DMatrix<f64>,
    /// basisᵀ·A·basis on the leading `len × len` block.
    proj: DMatrix<f64>,
    len: usize,
    matvecs: usize,
}

impl<'a> Krylov<'a> {
    fn new(op: &'a CsrMatrix, cap: usize) -> Self {
        let n = op.dim();
        Self {
            op,
            basis: DMatrix::zeros(n, cap),
            images: DMatrix::zeros(n, cap),
            proj: DMatrix::zeros(cap, cap),
            len: 0,
            matvecs: 0,
        }
    }

    fn project_out(&self, w: &mut DMatrix<f64>) {
        if self.len == 0 {
            return;
        }
        let q = self.basis.columns(0, self.len);
        for _ in 0..2 {
            let c = q.tr_mul(w);
            w.gemm(-1.0, &q, &c, 1.0);
        }
    }

    /// Removes the basis from the columns of `w` and orthonormalizes them.
    /// Columns keeping less than `1e-8` of their norm are dropped.
    fn orthonormalize(&self, mut w: DMatrix<f64>) -> DMatrix<f64> {
        let n = w.nrows();
        let start: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
        self.project_out(&mut w);
        let mut kept: Vec<DVector<f64>> = Vec::with_capacity(w.ncols());
        for (j, col) in w.column_iter().enumerate() {
            let mut v = col.into_owned();
            for _ in 0..2 {
                for q in &kept {
                    let c = q.dot(&v);
                    v.axpy(-c, q, 1.0);
                }
            }
            let left = v.norm();
            if start[j] == 0.0 || left <= 1e-8 * start[j] {
                continue;
            }
            v /= left;
            if left < 1e-2 * start[j] {
                // Heavy cancellation: clean the normalized remainder once more.
                let mut m = DMatrix::from_column_slice(n, 1, v.as_slice());
                self.project_out(&mut m);
                let mut v2 = m.column(0).into_owned();
                for q in &kept {
                    let c = q.dot(&v2);
                    v2.axpy(-c, q, 1.0);
                }
                let l2 = v2.norm();
                if l2 < 0.5 {
                    continue;
                }
                v = v2 / l2;
            }
            kept.push(v);
        }
        if kept.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&kept)
        }
    }

    fn append(&mut self, block: &DMatrix<f64>) {
        let (n, b) = block.shape();
        let k = self.len;
        for j in 0..b {
            let col = k + j;
            self.basis.as_mut_slice()[col * n..(col + 1) * n].copy_from_slice(block.column(j).as_slice());
            let (src, dst) = (&self.basis.as_slice()[col * n..(col + 1) * n], &mut self.images.as_mut_slice()[col * n..(col + 1) * n]);
            self.op.apply_into(src, dst);
        }
        self.matvecs += b;
        let c = self.basis.columns(0, k + b).tr_mul(&self.images.columns(k, b));
        for j in 0..b {
            for i in 0..k {
                self.proj[(i, k + j)] = c[(i, j)];
                self.proj[(k + j, i)] = c[(i, j)];
            }
            for i in 0..b {
                let v = 0.5 * (c[(k + i, j)] + c[(k + j, i)]);
                self.proj[(k + i, k + j)] = v;
            }
        }
        self.len += b;
    }

    /// Ritz values ascending with their coefficient vectors as columns.
    fn ritz(&self) -> (Vec<f64>, DMatrix<f64>) {
        let k = self.len;
        let eig = SymmetricEigen::new(self.proj.view((0, 0), (k, k)).into_owned());
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let coeffs = DMatrix::from_fn(k, k, |i, j| eig.eigenvectors[(i, order[j])]);
        (values, coeffs)
    }

    /// The first `p` Ritz vectors, their images and residual norms.
    fn ritz_vectors(&self, values: &[f64], coeffs: &DMatrix<f64>, p: usize) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
        let s = coeffs.columns(0, p);
        let y = self.basis.columns(0, self.len) * s;
        let ay = self.images.columns(0, self.len) * s;
        let res = (0..p)
            .map(|j| {
                let (yj, ayj) = (y.column(j), ay.column(j));
                ayj.iter().zip(yj.iter()).map(|(a, v)| (a - values[j] * v).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        (y, ay, res)
    }

    /// Replaces the basis by `y` (orthonormal) with known images `ay`.
    fn reset(&mut self, y: &DMatrix<f64>, ay: &DMatrix<f64>) {
        let p = y.ncols();
        self.basis.columns_mut(0, p).copy_from(y);
        self.images.columns_mut(0, p).copy_from(ay);
        let t = y.tr_mul(ay);
        for i in 0..p {
            for j in 0..p {
                self.proj[(i, j)] = 0.5 * (t[(i, j)] + t[(j, i)]);
            }
        }
        self.len = p;
    }
}

fn block_lanczos(a: &CsrMatrix, m: usize, cfg: &SolverConfig, seed: u64) -> Result<SectorSolution> {
    let n = a.dim();
    let b = cfg.block_size.max(1).min(n);
    let max_basis = cfg.max_basis.max(m + 3 * b).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kr = Krylov::new(a, max_basis + b);
    let mut block = kr.orthonormalize(random_block(&mut rng, n, b));

    let mut worst = f64::INFINITY;
    let mut next_check = m;
    loop {
        let start = kr.len;
        let added = block.ncols();
        kr.append(&block);
        let k = kr.len;
        let exhausted = k >= n;
        let restart = k + b > max_basis;
        let mut restarted = false;

        if k >= m && (exhausted || restart || k >= next_check) {
            next_check = k + (k / 8).max(2 * b);
            let (values, coeffs) = kr.ritz();
            let keep = if restart { (m + b).min(k) } else { m };
            let (y, ay, res) = kr.ritz_vectors(&values, &coeffs, keep);
            let converged = (0..m)
                .position(|i| res[i] > cfg.tol * values[i].abs().max(1.0))
                .unwrap_or(m);
            if converged == m || exhausted {
                return Ok(SectorSolution {
                    energies: values[..m].to_vec(),
                    vectors: (0..m).map(|j| y.column(j).iter().copied().collect()).collect(),
                });
            }
            worst = res[converged] / values[converged].abs().max(1.0);

            if restart {
                // Keep the lowest Ritz vectors and continue along the residuals
                // of the first unconverged ones.
                let open = b.min(keep - converged);
                let mut r = ay.columns(converged, open).into_owned();
                for j in 0..open {
                    let theta = values[converged + j];
                    r.column_mut(j).axpy(-theta, &y.column(converged + j), 1.0);
                }
                kr.reset(&y, &ay);
                block = kr.orthonormalize(r);
                next_check = kr.len + 2 * b;
                restarted = true;
            }
        }
        if kr.matvecs >= cfg.max_iterations {
            return Err(Error::NoConvergence { iterations: kr.matvecs, residual: worst });
        }
        if !restarted {
            // Next Krylov block: A applied to the block just added.
            block = kr.orthonormalize(kr.images.columns(start, added).into_owned());
        }
        if block.ncols() == 0 {
            // Invariant subspace reached; continue with fresh random directions.
            let room = b.min(n - kr.len);
            block = kr.orthonormalize(random_block(&mut rng, n, room));
            if block.ncols() == 0 {
                return Err(Error::NoConvergence { iterations: kr.matvecs, residual: worst });
            }
        }
    }
}

fn solve_sector(a: &CsrMatrix, m: usize, cfg: &SolverConfig, seed: u64) -> Result<SectorSolution> {
    let m = m.min(a.dim());
    if m == 0 {
        return Ok(SectorSolution { energies: Vec::new(), vectors: Vec::new() });
    }
    if a.dim() <= cfg.dense_threshold || 2 * (m + cfg.block_size) >= a.dim() {
        return Ok(dense_solve(a, m));
    }
    block_lanczos(a, m, cfg, seed)
}

/// The `m` lowest eigenpairs, ascending, using the default solver settings.
pub fn lowest_eigenpairs(h: &SparseHamiltonian, m: usize) -> Result<Vec<EigenPair>> {
    lowest_eigenpairs_with(h, m, &SolverConfig::default())
}

/// The `m` lowest eigenpairs, ascending. `m` may equal the dimension, which
/// yields the whole spectrum.
pub fn lowest_eigenpairs_with(h: &SparseHamiltonian, m: usize, cfg: &SolverConfig) -> Result<Vec<EigenPair>> {
    let dim = h.dim();
    if m == 0 || m > dim {
        return Err(Error::InvalidParameter(format!(
            "requested {m} eigenpairs of a {dim}-dimensional Hamiltonian"
        )));
    }
    if cfg.use_symmetry {
        return symmetric_eigenpairs(h, m, cfg);
    }
    // Without symmetry blocks a multiplet is only resolved if the Krylov block
    // is at least as wide as the number of pairs wanted.
    let wide = SolverConfig {
        block_size: cfg.block_size.max(m),
        max_basis: cfg.max_basis.max(4 * m),
        ..*cfg
    };
    let sol = solve_sector(h.matrix(), m, &wide, cfg.seed)?;
    Ok(sol
        .energies
        .into_iter()
        .zip(sol.vectors)
        .map(|(energy, vector)| EigenPair { energy, vector })
        .collect())
}

/// Degenerate eigenvalues of one block: `range` indexes the block solution.
struct Cluster {
    energy: f64,
    block: usize,
    range: std::ops::Range<usize>,
}

fn clusters(sol: &SectorSolution, block: usize, out: &mut Vec<Cluster>) {
    let mut start = 0;
    for i in 1..=sol.energies.len() {
        let e0 = sol.energies[start];
        if i == sol.energies.len() || (sol.energies[i] - e0).abs() > DEFAULT_DEGENERACY_TOL * e0.abs().max(1.0) {
            out.push(Cluster { energy: e0, block, range: start..i });
            start = i;
        }
    }
}

/// Block-by-block solve. Every block starts with a small request; blocks that
/// might still hide one of the `m` lowest full-space eigenvalues are re-solved
/// with twice as many.
fn symmetric_eigenpairs(h: &SparseHamiltonian, m: usize, cfg: &SolverConfig) -> Result<Vec<EigenPair>> {
    let sym = Symmetry::new(h);
    let blocks = sym.blocks();
    let mut request: Vec<usize> = blocks
        .iter()
        .map(|b| {
            let base = if b.complex { 2 * cfg.block_size } else { cfg.block_size };
            base.min(m.max(2)).min(b.dim())
        })
        .collect();
    let mut solved: Vec<Option<SectorSolution>> = (0..blocks.len()).map(|_| None).collect();
    let mut stale: Vec<usize> = (0..blocks.len()).collect();
    loop {
        for &k in &stale {
            let seed = cfg.seed.wrapping_add((k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            solved[k] = Some(solve_sector(&blocks[k].op, request[k], cfg, seed)?);
        }

        let mut all = Vec::new();
        for (k, sol) in solved.iter().enumerate() {
            clusters(sol.as_ref().expect("block solved"), k, &mut all);
        }
        all.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.block.cmp(&b.block)).then(a.range.start.cmp(&b.range.start)));

        // Expand clusters in ascending order until `m` full-space vectors are known.
        let mut pairs: Vec<EigenPair> = Vec::new();
        let mut cutoff = f64::INFINITY;
        for c in &all {
            let sol = solved[c.block].as_ref().unwrap();
            let central: Vec<Vec<f64>> = c.range.clone().map(|i| sym.expand(&blocks[c.block], &sol.vectors[i])).collect();
            let count = central.len();
            let vectors = sym.complete(central);
            for (j, vector) in vectors.into_iter().enumerate() {
                // Central vectors keep their own Ritz values; multiplet partners
                // take the lowest value of the cluster.
                let energy = if j < count {
                    sol.energies[c.range.start + j]
                } else {
                    c.energy
                };
                pairs.push(EigenPair { energy, vector });
            }
            if pairs.len() >= m {
                cutoff = sol.energies[c.range.end - 1];
                break;
            }
        }

        let margin = DEFAULT_DEGENERACY_TOL * cutoff.abs().max(1.0);
        stale = (0..blocks.len())
            .filter(|&k| {
                let sol = solved[k].as_ref().unwrap();
                let top = sol.energies.last().copied().unwrap_or(f64::NEG_INFINITY);
                request[k] < blocks[k].dim() && top <= cutoff + margin
            })
            .collect();
        if stale.is_empty() {
            pairs.sort_by(|a, b| a.energy.total_cmp(&b.energy));
            pairs.truncate(m);
            return Ok(pairs);
        }
        for &k in &stale {
            request[k] = (2 * request[k]).min(blocks[k].dim());
        }
    }
}

/// Modified Gram–Schmidt with a second pass.
fn gram_schmidt(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v;
        for _ in 0..2 {
            for q in &out {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let nrm = norm(&w);
        scale(&mut w, 1.0 / nrm);
        out.push(w);
    }
    out
}

/// Groups ascending eigenpairs into at most `max_levels` distinct levels.
///
/// An eigenvalue joins the current level when it lies within
/// `tol_rel · max(1, |E|)` of the level's first eigenvalue. Level bases are
/// re-orthonormalized.
pub fn group_levels(pairs: &[EigenPair], tol_rel: f64, max_levels: usize) -> LowSpectrum {
    let mut levels: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    let mut boundary_resolved = false;
    for p in pairs {
        match levels.last_mut() {
            Some((e, basis)) if (p.energy - *e).abs() <= tol_rel * e.abs().max(1.0) => {
                basis.push(p.vector.clone());
            }
            _ => {
                if levels.len() == max_levels {
                    boundary_resolved = true;
                    break;
                }
                levels.push((p.energy, vec![p.vector.clone()]));
            }
        }
    }
    LowSpectrum {
        levels: levels
            .into_iter()
            .map(|(energy, basis)| Level { energy, basis: gram_schmidt(basis) })
            .collect(),
        levels_requested: max_levels,
        boundary_resolved,
    }
}

/// The lowest `levels` distinct levels with complete degenerate eigenspaces.
///
/// Starts from [`DEFAULT_PAIRS`] eigenpairs and doubles the request until an
/// eigenvalue above the last retained level is found or the whole spectrum is
/// known.
pub fn low_spectrum(h: &SparseHamiltonian, levels: usize, tol_rel: f64, cfg: &SolverConfig) -> Result<LowSpectrum> {
    let dim = h.dim();
    let mut m = DEFAULT_PAIRS.min(dim);
    loop {
        let pairs = lowest_eigenpairs_with(h, m, cfg)?;
        let mut spec = group_levels(&pairs, tol_rel, levels);
        if m == dim {
            spec.boundary_resolved = true;
        }
        if spec.boundary_resolved {
            return Ok(spec);
        }
        if m == dim {
            return Err(Error::LevelResolution {
                requested: levels,
                message: format!("level boundary unresolved with the full spectrum of {dim} states"),
            });
        }
        m = (2 * m).min(dim);
    }
}
