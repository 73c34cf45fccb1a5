//! Lattice translations and spin symmetries that split a Hamiltonian into
//! small independent blocks.
//!
//! Every conserved-charge sector is decomposed further into momentum blocks
//! spanned by translation-symmetrized states
//!
//! ```text
//! |r, q⟩ = √(S_r / L) Σ_{g ∈ G/Stab(r)} χ_q(g) |g·r⟩
//! ```
//!
//! where `r` is the smallest state of an orbit, `S_r` its stabilizer order and
//! `L` the group order. Momenta `q` and `−q` share one block: the complex
//! block matrix `A + iB` is embedded as the real symmetric `[[A, −B], [B, A]]`,
//! and each embedded eigenvector `(x, y)` maps to the real full-space vector
//! `√2·Re ψ(x + iy)`. The map is an isometry, so an orthonormal set of block
//! eigenvectors becomes an orthonormal set of real eigenvectors.
//!
//! For the Heisenberg models only the charge sector with the smallest |S^z|
//! is diagonalized; the other members of each spin multiplet are obtained by
//! repeatedly applying the total raising operator and the global spin flip.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::lattice::{CsrMatrix, SparseHamiltonian};

/// One momentum block of one charge sector.
pub(crate) struct Block {
    pub op: CsrMatrix,
    /// Index into `SparseHamiltonian::sectors()`.
    pub sector: usize,
    /// Covers the momentum pair `q, −q` through the real embedding.
    pub complex: bool,
    q: usize,
    /// Block coordinate of each orbit slot, `u32::MAX` where the orbit has no
    /// state of this momentum.
    coord: Vec<u32>,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.op.dim()
    }
}

/// Orbit table of the translation group over the diagonalized sectors.
struct Orbits {
    /// Slot of the orbit containing each state (`u32::MAX` outside the sectors).
    slot: Vec<u32>,
    /// Group element mapping the orbit representative onto each state.
    elem: Vec<u8>,
    /// Representative (smallest state) of each slot.
    reps: Vec<usize>,
    /// Stabilizer of each representative as a bit set over group elements.
    stab: Vec<u32>,
}

pub(crate) struct Symmetry<'a> {
    h: &'a SparseHamiltonian,
    order: usize,
    orbits: Orbits,
    /// `chars[q][e]` = (Re, Im) of χ_q(e).
    chars: Vec<Vec<(f64, f64)>>,
    blocks: Vec<Block>,
    su2: bool,
}

/// `bit_image[e][b]`: the basis bit that bit `b` is carried to by element `e`.
fn translation_table(rows: usize, cols: usize) -> Vec<Vec<usize>> {
    let n = rows * cols;
    let mut table = Vec::with_capacity(n);
    for tr in 0..rows {
        for tc in 0..cols {
            let mut images = vec![0usize; n];
            for b in 0..n {
                let site = n - 1 - b;
                let (r, c) = (site / cols, site % cols);
                let target = ((r + tr) % rows) * cols + (c + tc) % cols;
                images[b] = 1 << (n - 1 - target);
            }
            table.push(images);
        }
    }
    table
}

fn translate(images: &[usize], s: usize) -> usize {
    let mut out = 0;
    let mut bits = s;
    while bits != 0 {
        let b = bits.trailing_zeros() as usize;
        out |= images[b];
        bits &= bits - 1;
    }
    out
}

/// χ_q(e) with exact values on multiples of a quarter turn.
fn character(rows: usize, cols: usize, q: usize, e: usize) -> (f64, f64) {
    let (qr, qc) = (q / cols, q % cols);
    let (tr, tc) = (e / cols, e % cols);
    let period = rows * cols;
    let p = (qr * tr * cols + qc * tc * rows) % period;
    if (4 * p) % period == 0 {
        return match 4 * p / period {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
    }
    let angle = std::f64::consts::TAU * p as f64 / period as f64;
    (angle.cos(), angle.sin())
}

fn negate(rows: usize, cols: usize, q: usize) -> usize {
    let (qr, qc) = (q / cols, q % cols);
    ((rows - qr) % rows) * cols + (cols - qc) % cols
}

impl<'a> Symmetry<'a> {
    pub fn new(h: &'a SparseHamiltonian) -> Self {
        let spec = h.spec();
        let (rows, cols) = (spec.rows(), spec.cols());
        let n = h.sites();
        let order = rows * cols;
        let su2 = spec.model().is_heisenberg();

        let sectors: Vec<usize> = if su2 {
            // The sector with the smallest |S^z| meets every multiplet.
            let down = n / 2;
            let k = h.sectors().iter().position(|s| s.states.first().is_some_and(|&x| x.count_ones() as usize == down));
            vec![k.expect("magnetization sector present")]
        } else {
            (0..h.sectors().len()).collect()
        };

        let table = translation_table(rows, cols);
        let mut orbits = Orbits {
            slot: vec![u32::MAX; h.dim()],
            elem: vec![0; h.dim()],
            reps: Vec::new(),
            stab: Vec::new(),
        };
        for &k in &sectors {
            for &s in &h.sectors()[k].states {
                if orbits.slot[s] != u32::MAX {
                    continue;
                }
                let slot = orbits.reps.len() as u32;
                let mut stab = 0u32;
                for (e, images) in table.iter().enumerate() {
                    let t = translate(images, s);
                    if t == s {
                        stab |= 1 << e;
                    }
                    if orbits.slot[t] == u32::MAX {
                        orbits.slot[t] = slot;
                        orbits.elem[t] = e as u8;
                    }
                }
                orbits.reps.push(s);
                orbits.stab.push(stab);
            }
        }

        let chars: Vec<Vec<(f64, f64)>> =
            (0..order).map(|q| (0..order).map(|e| character(rows, cols, q, e)).collect()).collect();

        let mut sym = Symmetry { h, order, orbits, chars, blocks: Vec::new(), su2 };
        for &k in &sectors {
            for q in 0..order {
                let nq = negate(rows, cols, q);
                if nq < q {
                    continue;
                }
                if let Some(block) = sym.block(k, q, nq != q) {
                    sym.blocks.push(block);
                }
            }
        }
        sym
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    fn admits(&self, slot: usize, q: usize) -> bool {
        let stab = self.orbits.stab[slot];
        (0..self.order).all(|e| stab & (1 << e) == 0 || self.chars[q][e] == (1.0, 0.0))
    }

    fn block(&self, sector: usize, q: usize, complex: bool) -> Option<Block> {
        let orbits = &self.orbits;
        let mut coord = vec![u32::MAX; orbits.reps.len()];
        let mut slots = Vec::new();
        for &s in &self.h.sectors()[sector].states {
            let slot = orbits.slot[s] as usize;
            if orbits.reps[slot] == s && self.admits(slot, q) {
                coord[slot] = slots.len() as u32;
                slots.push(slot);
            }
        }
        if slots.is_empty() {
            return None;
        }
        let d = slots.len();
        let chars = &self.chars[q];
        let matrix = self.h.matrix();
        let stab_order = |slot: usize| orbits.stab[slot].count_ones() as f64;
        // Entries (column, Re, Im) of block row i.
        let entries = |i: usize, out: &mut Vec<(u32, f64, f64)>| {
            let slot = slots[i];
            let si = stab_order(slot);
            for (j, c) in matrix.row(orbits.reps[slot]) {
                let sj = orbits.slot[j] as usize;
                let b = coord[sj];
                if b == u32::MAX {
                    continue;
                }
                let f = c * (stab_order(sj) / si).sqrt();
                let (re, im) = chars[orbits.elem[j] as usize];
                out.push((b, f * re, f * im));
            }
        };
        let op = if complex {
            CsrMatrix::from_rows(2 * d, |i, out| {
                let mut row = Vec::new();
                entries(i % d, &mut row);
                let d = d as u32;
                for (b, re, im) in row {
                    if i < d as usize {
                        out.push((b, re));
                        out.push((d + b, -im));
                    } else {
                        out.push((b, im));
                        out.push((d + b, re));
                    }
                }
            })
        } else {
            CsrMatrix::from_rows(d, |i, out| {
                let mut row = Vec::new();
                entries(i, &mut row);
                out.extend(row.into_iter().map(|(b, re, _)| (b, re)));
            })
        };
        Some(Block { op, sector, complex, q, coord })
    }

    /// Full-space vector of a block eigenvector.
    pub fn expand(&self, block: &Block, x: &[f64]) -> Vec<f64> {
        let orbits = &self.orbits;
        let chars = &self.chars[block.q];
        let d = if block.complex { x.len() / 2 } else { x.len() };
        let lift = if block.complex { std::f64::consts::SQRT_2 } else { 1.0 };
        let mut out = vec![0.0; self.h.dim()];
        for &s in &self.h.sectors()[block.sector].states {
            let slot = orbits.slot[s] as usize;
            let b = block.coord[slot];
            if b == u32::MAX {
                continue;
            }
            let b = b as usize;
            let norm = (orbits.stab[slot].count_ones() as f64 / self.order as f64).sqrt();
            let (cr, ci) = chars[orbits.elem[s] as usize];
            let re = if block.complex { x[b] * cr - x[d + b] * ci } else { x[b] * cr };
            out[s] = lift * norm * re;
        }
        out
    }

    /// All full-space eigenvectors generated by a set of degenerate block
    /// eigenvectors: the vectors themselves, in order, followed for
    /// spin-rotation invariant models by the remaining members of their
    /// multiplets.
    pub fn complete(&self, central: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        if !self.su2 {
            return central;
        }
        let n = self.h.sites();
        let all = self.h.dim() - 1;
        let flip = |v: &[f64]| -> Vec<f64> {
            let mut w = vec![0.0; v.len()];
            for (s, &x) in v.iter().enumerate() {
                w[s ^ all] = x;
            }
            w
        };
        let mut out = central.clone();
        if n % 2 == 1 {
            out.extend(central.iter().map(|v| flip(v)));
        }
        let mut layer = central;
        loop {
            layer = raised_span(&layer);
            if layer.is_empty() {
                break;
            }
            out.extend(layer.iter().map(|v| flip(v)));
            out.extend(layer.iter().cloned());
        }
        out
    }
}

/// Total spin raising operator Σ_i σ⁺_i (flips a down spin, bit 1, to up).
pub(crate) fn raise(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (s, &x) in v.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let mut bits = s;
        while bits != 0 {
            let b = bits & bits.wrapping_neg();
            out[s ^ b] += x;
            bits ^= b;
        }
    }
    out
}

/// Orthonormal basis of the span of the raised vectors. Within an eigenspace
/// the nonzero singular values of the raising operator are at least one, so
/// the rank cut at 1e-3 separates them cleanly from roundoff.
fn raised_span(vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let w: Vec<Vec<f64>> = vs.iter().map(|v| raise(v)).collect();
    let c = w.len();
    let gram = DMatrix::from_fn(c, c, |i, j| crate::eigen::dot(&w[i], &w[j]));
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order
        .into_iter()
        .filter(|&k| eig.eigenvalues[k] > 1e-3)
        .map(|k| {
            let scale = 1.0 / eig.eigenvalues[k].sqrt();
            let mut u = vec![0.0; w[0].len()];
            for (j, wj) in w.iter().enumerate() {
                let cj = eig.eigenvectors[(j, k)] * scale;
                if cj != 0.0 {
                    for (ui, x) in u.iter_mut().zip(wj) {
                        *ui += cj * x;
                    }
                }
            }
            u
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_hamiltonian, CouplingParams, LatticeSpec, Model};

    fn dense_blocks_spectrum(h: &SparseHamiltonian) -> Vec<f64> {
        let sym = Symmetry::new(h);
        let mut all = Vec::new();
        for b in sym.blocks() {
            let d = b.dim();
            let m = DMatrix::from_fn(d, d, |i, j| b.op.get(i, j));
            all.extend(SymmetricEigen::new(m).eigenvalues.iter().copied());
        }
        all.sort_by(f64::total_cmp);
        all
    }

    fn dense_full_spectrum(h: &SparseHamiltonian) -> Vec<f64> {
        let d = h.dim();
        let m = DMatrix::from_fn(d, d, |i, j| h.matrix().get(i, j));
        let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn tfim_blocks_reproduce_the_spectrum() {
        let h = build_hamiltonian(&LatticeSpec::chain(Model::TfimChain, 6).unwrap(), &CouplingParams::ising(0.7)).unwrap();
        let a = dense_blocks_spectrum(&h);
        let b = dense_full_spectrum(&h);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn blocks_are_symmetric() {
        let h = build_hamiltonian(&LatticeSpec::square(2, 3).unwrap(), &CouplingParams::heisenberg(1.0, 0.4)).unwrap();
        for b in Symmetry::new(&h).blocks() {
            for i in 0..b.dim() {
                for (j, v) in b.op.row(i) {
                    assert!((b.op.get(j, i) - v).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn expanded_block_eigenvectors_are_eigenvectors() {
        let h = build_hamiltonian(&LatticeSpec::chain(Model::J1J2Chain, 7).unwrap(), &CouplingParams::heisenberg(1.0, 0.3)).unwrap();
        let sym = Symmetry::new(&h);
        for b in sym.blocks() {
            let d = b.dim();
            let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| b.op.get(i, j)));
            for k in 0..d {
                let x: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
                let v = sym.expand(b, &x);
                let nrm = crate::eigen::dot(&v, &v).sqrt();
                assert!((nrm - 1.0).abs() < 1e-12);
                let hv = crate::lattice::apply(&h, &v).unwrap();
                let e = eig.eigenvalues[k];
                let res: f64 = hv.iter().zip(&v).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt();
                assert!(res < 1e-10, "residual {res}");
            }
        }
    }

    #[test]
    fn multiplets_fill_the_whole_space() {
        for n in [6usize, 7] {
            let h = build_hamiltonian(&LatticeSpec::chain(Model::J1J2Chain, n).unwrap(), &CouplingParams::heisenberg(1.0, 0.2)).unwrap();
            let sym = Symmetry::new(&h);
            let mut count = 0;
            for b in sym.blocks() {
                let d = b.dim();
                let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| b.op.get(i, j)));
                let mut order: Vec<usize> = (0..d).collect();
                order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
                // Degenerate block eigenvectors may mix multiplets, so complete
                // each eigenspace as a whole.
                let mut start = 0;
                for i in 1..=d {
                    if i == d || eig.eigenvalues[order[i]] - eig.eigenvalues[order[start]] > 1e-9 {
                        let central = order[start..i]
                            .iter()
                            .map(|&k| sym.expand(b, eig.eigenvectors.column(k).as_slice()))
                            .collect();
                        count += sym.complete(central).len();
                        start = i;
                    }
                }
            }
            assert_eq!(count, 1 << n);
        }
    }

    #[test]
    fn raising_a_fully_polarized_state_vanishes() {
        let mut v = vec![0.0; 8];
        v[0] = 1.0;
        assert!(raise(&v).iter().all(|&x| x == 0.0));
        let mut w = vec![0.0; 8];
        w[0b001] = 1.0;
        let r = raise(&w);
        assert_eq!(r[0], 1.0);
    }
}
