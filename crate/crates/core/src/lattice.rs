//! Periodic spin-½ lattices and their Hamiltonians in the σ^z product basis.
//!
//! Basis convention: state index bit `N-1-i` holds site `i` (site 0 is the most
//! significant bit); a clear bit is spin up with σ^z|0⟩ = +|0⟩.
//!
//! All three models are real symmetric in this basis. Hamiltonians are written
//! with Pauli matrices, so a Heisenberg bond is σ_a·σ_b = σ^xσ^x + σ^yσ^y + σ^zσ^z.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest chain length accepted by [`LatticeSpec::chain`].
pub const MAX_CHAIN_SITES: usize = 20;

/// Largest Hilbert space (in sites) a Hamiltonian may be built for.
pub const MAX_SITES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    /// 1-D J1–J2 Heisenberg chain.
    #[serde(rename = "j1j2-1d")]
    J1J2Chain,
    /// 1-D transverse-field Ising chain.
    #[serde(rename = "tfim")]
    TfimChain,
    /// 2-D J1–J2 Heisenberg model on a square lattice.
    #[serde(rename = "j1j2-2d")]
    J1J2Square,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::J1J2Chain => "j1j2-1d",
            Model::TfimChain => "tfim",
            Model::J1J2Square => "j1j2-2d",
        }
    }

    pub fn is_heisenberg(self) -> bool {
        !matches!(self, Model::TfimChain)
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "j1j2-1d" | "j1j2" | "chain" => Ok(Model::J1J2Chain),
            "tfim" | "ising" => Ok(Model::TfimChain),
            "j1j2-2d" | "square" => Ok(Model::J1J2Square),
            other => Err(Error::Config(format!(
                "unknown model `{other}` (expected j1j2-1d, tfim or j1j2-2d)"
            ))),
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Model and geometry. Boundary conditions are always periodic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    model: Model,
    rows: usize,
    cols: usize,
}

impl LatticeSpec {
    /// A periodic chain of `sites` spins, `2 ≤ sites ≤ 20`.
    pub fn chain(model: Model, sites: usize) -> Result<Self> {
        if model == Model::J1J2Square {
            return Err(Error::InvalidLattice(
                "the square-lattice model needs rows and cols".into(),
            ));
        }
        if !(2..=MAX_CHAIN_SITES).contains(&sites) {
            return Err(Error::InvalidLattice(format!(
                "chain length {sites} outside 2..={MAX_CHAIN_SITES}"
            )));
        }
        Ok(Self { model, rows: 1, cols: sites })
    }

    /// A periodic `rows × cols` square lattice for the 2-D J1–J2 model.
    pub fn square(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidLattice(format!(
                "square lattice {rows}x{cols} needs rows >= 2 and cols >= 2"
            )));
        }
        Ok(Self { model: Model::J1J2Square, rows, cols })
    }

    /// Chain of `sites` spins or the default 4×4 lattice for the 2-D model.
    pub fn for_model(model: Model, sites: usize) -> Result<Self> {
        match model {
            Model::J1J2Square => {
                let side = (sites as f64).sqrt().round() as usize;
                if side * side != sites {
                    return Err(Error::InvalidLattice(format!(
                        "{sites} sites is not a square lattice; give rows and cols"
                    )));
                }
                Self::square(side, side)
            }
            _ => Self::chain(model, sites),
        }
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn sites(&self) -> usize {
        self.rows * self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Site index of `(row, col)` with wraparound.
    pub fn site(&self, row: usize, col: usize) -> usize {
        (row % self.rows) * self.cols + (col % self.cols)
    }
}

/// Couplings in units of the Pauli-matrix Hamiltonians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub j1: f64,
    pub j2: f64,
    pub lambda: f64,
}

impl CouplingParams {
    pub fn heisenberg(j1: f64, j2: f64) -> Self {
        Self { j1, j2, lambda: 0.0 }
    }

    pub fn ising(lambda: f64) -> Self {
        Self { j1: 0.0, j2: 0.0, lambda }
    }

    /// Parameters for a sweep coordinate: α = J2/J1 with J1 = 1 for the
    /// Heisenberg models, λ for the Ising chain.
    pub fn at(model: Model, x: f64) -> Self {
        if model.is_heisenberg() {
            Self::heisenberg(1.0, x)
        } else {
            Self::ising(x)
        }
    }

    /// α = J2/J1, defined only for J1 > 0.
    pub fn alpha(&self) -> Option<f64> {
        (self.j1 > 0.0).then(|| self.j2 / self.j1)
    }

    fn validate(&self, model: Model) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} must be finite and >= 0")))
            }
        };
        if model.is_heisenberg() {
            check("j1", self.j1)?;
            check("j2", self.j2)
        } else {
            check("lambda", self.lambda)
        }
    }
}

/// Nearest and next-nearest neighbor bonds, each an unordered pair listed once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bonds {
    pub nn: Vec<(usize, usize)>,
    pub nnn: Vec<(usize, usize)>,
}

fn dedup_pairs(raw: impl IntoIterator<Item = (usize, usize)>) -> Vec<(usize, usize)> {
    let mut seen = HashSet::new();
    raw.into_iter()
        .filter(|&(a, b)| a != b && seen.insert((a.min(b), a.max(b))))
        .collect()
}

/// Bond lists for a lattice. Wrapped bonds that coincide (short chains, short
/// lattice sides) are kept once, so every physical bond carries one coupling.
pub fn neighbor_pairs(spec: &LatticeSpec) -> Bonds {
    match spec.model {
        Model::J1J2Chain | Model::TfimChain => {
            let n = spec.sites();
            Bonds {
                nn: dedup_pairs((0..n).map(|i| (i, (i + 1) % n))),
                nnn: dedup_pairs((0..n).map(|i| (i, (i + 2) % n))),
            }
        }
        Model::J1J2Square => {
            let cells = || (0..spec.rows).flat_map(|r| (0..spec.cols).map(move |c| (r, c)));
            let nn = cells().flat_map(|(r, c)| {
                [
                    (spec.site(r, c), spec.site(r, c + 1)),
                    (spec.site(r, c), spec.site(r + 1, c)),
                ]
            });
            let nnn = cells().flat_map(|(r, c)| {
                [
                    (spec.site(r, c), spec.site(r + 1, c + 1)),
                    (spec.site(r, c), spec.site(r + 1, c + spec.cols - 1)),
                ]
            });
            Bonds { nn: dedup_pairs(nn), nnn: dedup_pairs(nnn) }
        }
    }
}

/// Row-compressed real sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix row by row. `row` must append the entries of row `i`
    /// (duplicates allowed, they are summed).
    pub(crate) fn from_rows<F>(dim: usize, row: F) -> Self
    where
        F: Fn(usize, &mut Vec<(u32, f64)>) + Sync,
    {
        const CHUNK: usize = 4096;
        let chunks: Vec<(Vec<usize>, Vec<u32>, Vec<f64>)> = (0..dim.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(dim);
                let mut lens = Vec::with_capacity(hi - lo);
                let mut cols = Vec::new();
                let mut vals = Vec::new();
                let mut scratch = Vec::new();
                for i in lo..hi {
                    scratch.clear();
                    row(i, &mut scratch);
                    scratch.sort_by_key(|e| e.0);
                    let start = cols.len();
                    for &(j, v) in &scratch {
                        if cols.len() > start && *cols.last().unwrap() == j {
                            *vals.last_mut().unwrap() += v;
                        } else {
                            cols.push(j);
                            vals.push(v);
                        }
                    }
                    lens.push(cols.len() - start);
                }
                (lens, cols, vals)
            })
            .collect();

        let nnz = chunks.iter().map(|c| c.1.len()).sum();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (lens, c, v) in chunks {
            for len in lens {
                row_ptr.push(row_ptr.last().unwrap() + len);
            }
            cols.extend(c);
            vals.extend(v);
        }
        Self { dim, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .zip(&self.vals[range])
            .map(|(&j, &v)| (j as usize, v))
    }

    /// Stored value at `(i, j)`, zero if absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&(j as u32)) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Exact structural and numerical transpose equality.
    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| {
            self.row(i).all(|(j, v)| {
                let range = self.row_ptr[j]..self.row_ptr[j + 1];
                match self.cols[range.clone()].binary_search(&(i as u32)) {
                    Ok(k) => self.vals[range.start + k] == v,
                    Err(_) => false,
                }
            })
        })
    }

    /// `y = A x`. Rows are summed in stored column order, so the result is
    /// bit-reproducible regardless of thread count.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        let row = |(i, yi): (usize, &mut f64)| {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *yi = acc;
        };
        if self.dim >= 1 << 15 {
            y.par_iter_mut().enumerate().with_min_len(1 << 12).for_each(row);
        } else {
            y.iter_mut().enumerate().for_each(row);
        }
    }
}

/// A set of basis states whose span is invariant under the Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    /// Full-space basis indices, ascending.
    pub states: Vec<usize>,
    /// When set, this sector is the global spin-flip image of the referenced
    /// sector: the flip maps `states[k]` of that sector to `states[len-1-k]` here.
    pub mirror_of: Option<usize>,
}

/// A model Hamiltonian on the full 2^N space, plus its conserved-quantity blocks.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    spec: LatticeSpec,
    sites: usize,
    matrix: CsrMatrix,
    sectors: Vec<Sector>,
}

impl SparseHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Invariant subspaces partitioning the basis: total S^z blocks for the
    /// Heisenberg models, σ^z-parity blocks for the Ising chain.
    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn is_symmetric(&self) -> bool {
        self.matrix.is_symmetric()
    }

    /// The Hamiltonian restricted to `sectors()[k]`, indexed in sector order.
    pub fn sector_matrix(&self, k: usize) -> CsrMatrix {
        let states = &self.sectors[k].states;
        let mut local = vec![u32::MAX; self.dim()];
        for (l, &s) in states.iter().enumerate() {
            local[s] = l as u32;
        }
        CsrMatrix::from_rows(states.len(), |l, out| {
            for (j, v) in self.matrix.row(states[l]) {
                debug_assert_ne!(local[j], u32::MAX, "sector is not invariant");
                out.push((local[j], v));
            }
        })
    }
}

/// `H·v` with a length check.
pub fn apply(h: &SparseHamiltonian, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != h.dim() {
        return Err(Error::LengthMismatch { expected: h.dim(), got: v.len() });
    }
    let mut out = vec![0.0; v.len()];
    h.matrix.apply_into(v, &mut out);
    Ok(out)
}

#[inline]
fn site_mask(sites: usize, i: usize) -> usize {
    1 << (sites - 1 - i)
}

/// Assembles the Hamiltonian of `spec` term by term from bit-flip rules:
///
/// - Heisenberg bond J σ_a·σ_b: diagonal J z_a z_b, and 2J between states
///   differing by an antiparallel pair flip.
/// - Ising bond λ σ^x_a σ^x_b: λ between states differing by the pair flip.
/// - Field Σ σ^z_i: diagonal Σ z_i.
pub fn build_hamiltonian(spec: &LatticeSpec, params: &CouplingParams) -> Result<SparseHamiltonian> {
    let n = spec.sites();
    if n > MAX_SITES {
        return Err(Error::Capacity { sites: n });
    }
    params.validate(spec.model)?;
    let dim = 1usize << n;
    let bonds = neighbor_pairs(spec);
    let mask = |(a, b): (usize, usize)| (site_mask(n, a), site_mask(n, b));

    let matrix = match spec.model {
        Model::J1J2Chain | Model::J1J2Square => {
            let mut weighted: Vec<((usize, usize), f64)> = Vec::new();
            if params.j1 != 0.0 {
                weighted.extend(bonds.nn.iter().map(|&p| (mask(p), params.j1)));
            }
            if params.j2 != 0.0 {
                weighted.extend(bonds.nnn.iter().map(|&p| (mask(p), params.j2)));
            }
            CsrMatrix::from_rows(dim, |s, out| {
                let mut diag = 0.0;
                for &((ma, mb), j) in &weighted {
                    if ((s & ma) == 0) == ((s & mb) == 0) {
                        diag += j;
                    } else {
                        diag -= j;
                        out.push(((s ^ ma ^ mb) as u32, 2.0 * j));
                    }
                }
                out.push((s as u32, diag));
            })
        }
        Model::TfimChain => {
            let flips: Vec<usize> = bonds.nn.iter().map(|&p| mask(p)).map(|(a, b)| a ^ b).collect();
            let lambda = params.lambda;
            CsrMatrix::from_rows(dim, |s, out| {
                let down = s.count_ones() as f64;
                out.push((s as u32, n as f64 - 2.0 * down));
                if lambda != 0.0 {
                    for &f in &flips {
                        out.push(((s ^ f) as u32, lambda));
                    }
                }
            })
        }
    };

    let sectors = if spec.model.is_heisenberg() {
        magnetization_sectors(n)
    } else {
        parity_sectors(n)
    };
    Ok(SparseHamiltonian { spec: *spec, sites: n, matrix, sectors })
}

fn magnetization_sectors(n: usize) -> Vec<Sector> {
    let mut by_count: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for s in 0..1usize << n {
        by_count[s.count_ones() as usize].push(s);
    }
    by_count
        .into_iter()
        .enumerate()
        .map(|(down, states)| Sector {
            states,
            mirror_of: (2 * down > n).then(|| n - down),
        })
        .collect()
}

fn parity_sectors(n: usize) -> Vec<Sector> {
    let (even, odd): (Vec<usize>, Vec<usize>) =
        (0..1usize << n).partition(|s| s.count_ones() % 2 == 0);
    vec![
        Sector { states: even, mirror_of: None },
        Sector { states: odd, mirror_of: None },
    ]
}
