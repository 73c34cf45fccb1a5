//! Independent reference implementations shared by the integration tests and
//! the acceptance runner. Nothing here calls the library's Hamiltonian builder,
//! partial trace or optimizers.

#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix4, SymmetricEigen, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinmix::eigen::{low_spectrum, lowest_eigenpairs_with, SolverConfig, DEFAULT_DEGENERACY_TOL};
use spinmix::lattice::{build_hamiltonian, neighbor_pairs, CouplingParams, LatticeSpec, Model};
use spinmix::measures::{concurrence, local_fidelity, product_fidelity, shared_purity};
use spinmix::mixture::{reduce_to_pair, LowLyingMixture, MixtureTerm, TwoQubitState, C64};

pub type Check = Result<String, String>;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Real factors of the Pauli matrices: σ^x, iσ^y and σ^z, so that
/// σ^y⊗σ^y = −(iσ^y)⊗(iσ^y).
fn pauli(k: usize) -> DMatrix<f64> {
    match k {
        0 => DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        1 => DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        _ => DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
    }
}

/// `ops` placed on the given sites of an `n`-site register, identity elsewhere.
/// Site 0 is the leftmost tensor factor.
fn embed(n: usize, ops: &[(usize, DMatrix<f64>)]) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for site in 0..n {
        let factor = ops.iter().find(|(s, _)| *s == site).map(|(_, m)| m.clone()).unwrap_or_else(|| DMatrix::identity(2, 2));
        out = out.kronecker(&factor);
    }
    out
}

/// Dense Hamiltonian assembled from Kronecker products of Pauli matrices.
pub fn dense_hamiltonian(spec: &LatticeSpec, x: f64) -> DMatrix<f64> {
    let n = spec.sites();
    let d = 1 << n;
    let bonds = neighbor_pairs(spec);
    let mut h = DMatrix::<f64>::zeros(d, d);
    match spec.model() {
        Model::TfimChain => {
            for &(a, b) in &bonds.nn {
                h += embed(n, &[(a, pauli(0)), (b, pauli(0))]) * x;
            }
            for i in 0..n {
                h += embed(n, &[(i, pauli(2))]);
            }
        }
        _ => {
            for (list, j) in [(&bonds.nn, 1.0), (&bonds.nnn, x)] {
                for &(a, b) in list {
                    for (k, sign) in [(0, 1.0), (1, -1.0), (2, 1.0)] {
                        h += embed(n, &[(a, pauli(k)), (b, pauli(k))]) * (sign * j);
                    }
                }
            }
        }
    }
    h
}

pub fn dense_spectrum(h: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Distinct levels and multiplicities, grouping values within `tol` relative.
pub fn group(evals: &[f64], tol: f64, max_levels: usize) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for &e in evals {
        match out.last_mut() {
            Some(last) if (e - last.0).abs() <= tol * last.0.abs().max(1.0) => last.1 += 1,
            _ => {
                if out.len() == max_levels {
                    break;
                }
                out.push((e, 1));
            }
        }
    }
    out
}

/// Matrix-free Hamiltonian vs the Kronecker oracle for every model at N ≤ 6.
pub fn check_matvec() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut cases = 0;
    let specs = [
        (LatticeSpec::chain(Model::J1J2Chain, 4).unwrap(), 0.37),
        (LatticeSpec::chain(Model::J1J2Chain, 6).unwrap(), 0.5),
        (LatticeSpec::chain(Model::TfimChain, 5).unwrap(), 1.3),
        (LatticeSpec::chain(Model::TfimChain, 6).unwrap(), 0.8),
        (LatticeSpec::square(2, 3).unwrap(), 0.61),
    ];
    for (spec, x) in specs {
        let dense = dense_hamiltonian(&spec, x);
        let h = build_hamiltonian(&spec, &CouplingParams::at(spec.model(), x)).map_err(|e| e.to_string())?;
        for _ in 0..3 {
            let v: Vec<f64> = (0..h.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
            let got = spinmix::lattice::apply(&h, &v).map_err(|e| e.to_string())?;
            let want = &dense * nalgebra::DVector::from_vec(v.clone());
            let err = got.iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if err > 1e-12 {
                return Err(format!("{} N={} x={x}: matvec error {err:.2e}", spec.model(), spec.sites()));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} products agree to 1e-12"))
}

pub fn oracle_cases() -> Vec<(LatticeSpec, f64)> {
    let chain = |n| LatticeSpec::chain(Model::J1J2Chain, n).unwrap();
    let tfim = |n| LatticeSpec::chain(Model::TfimChain, n).unwrap();
    vec![
        (chain(8), 0.0),
        (chain(8), 0.5),
        (chain(9), 0.3),
        (chain(10), 0.2412),
        (tfim(7), 1.0),
        (tfim(9), 0.6),
        (tfim(10), 1.2),
        (LatticeSpec::square(2, 4).unwrap(), 0.4),
        (LatticeSpec::square(3, 3).unwrap(), 0.55),
        (LatticeSpec::square(2, 5).unwrap(), 0.62),
    ]
}

/// Iterative solver vs dense diagonalization: 12 lowest energies to 1e−9 and
/// the five lowest levels with exact degeneracies, with and without symmetry
/// blocks.
pub fn check_eigensolver(cases: &[(LatticeSpec, f64)]) -> Check {
    for (spec, x) in cases {
        let label = format!("{} N={} x={x}", spec.model(), spec.sites());
        let dense = dense_spectrum(&dense_hamiltonian(spec, *x));
        let h = build_hamiltonian(spec, &CouplingParams::at(spec.model(), *x)).map_err(|e| e.to_string())?;
        for use_symmetry in [true, false] {
            let cfg = SolverConfig { use_symmetry, ..SolverConfig::default() };
            let pairs = lowest_eigenpairs_with(&h, 12, &cfg).map_err(|e| format!("{label}: {e}"))?;
            for (k, p) in pairs.iter().enumerate().take(12) {
                if (p.energy - dense[k]).abs() > 1e-9 {
                    return Err(format!("{label} symmetry={use_symmetry}: E{k} = {} vs dense {}", p.energy, dense[k]));
                }
            }
            let spec5 = low_spectrum(&h, 5, DEFAULT_DEGENERACY_TOL, &cfg).map_err(|e| format!("{label}: {e}"))?;
            let want = group(&dense, DEFAULT_DEGENERACY_TOL, 5);
            let got: Vec<(f64, usize)> = spec5.levels.iter().map(|l| (l.energy, l.degeneracy())).collect();
            if got.len() != want.len()
                || got.iter().zip(&want).any(|(g, w)| g.1 != w.1 || (g.0 - w.0).abs() > 1e-9)
            {
                return Err(format!("{label} symmetry={use_symmetry}: levels {got:?} vs dense {want:?}"));
            }
        }
    }
    Ok(format!("{} Hamiltonians, both solver paths", cases.len()))
}

pub fn bell() -> TwoQubitState {
    let s = 0.5f64.sqrt();
    TwoQubitState::pure([c(s), c(0.0), c(0.0), c(s)])
}

pub fn singlet() -> TwoQubitState {
    let s = 0.5f64.sqrt();
    TwoQubitState::pure([c(0.0), c(s), c(-s), c(0.0)])
}

pub fn werner(p: f64) -> TwoQubitState {
    let m = singlet().matrix.scale(p) + Matrix4::identity().scale((1.0 - p) / 4.0);
    TwoQubitState::new(m, (0, 1)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn check_concurrence_cases() -> Check {
    let cb = concurrence(&bell()).map_err(|e| e.to_string())?.value;
    if (cb - 1.0).abs() > 1e-12 {
        return Err(format!("Bell concurrence {cb}"));
    }
    let prod = TwoQubitState::pure([c(0.6), c(0.8), c(0.0), c(0.0)]);
    let cp = concurrence(&prod).map_err(|e| e.to_string())?.value;
    if cp.abs() > 1e-12 {
        return Err(format!("product concurrence {cp}"));
    }
    for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let got = concurrence(&werner(p)).map_err(|e| e.to_string())?.value;
        let want = f64::max(0.0, (3.0 * p - 1.0) / 2.0);
        if (got - want).abs() > 1e-12 {
            return Err(format!("Werner p={p}: {got} vs {want}"));
        }
    }
    Ok("Bell = 1, product = 0, Werner max(0, (3p−1)/2) at 5 points".into())
}

/// A random pure two-qubit state with Schmidt coefficients (cos t, sin t).
pub fn schmidt_state(rng: &mut ChaCha8Rng) -> ([C64; 4], f64) {
    let t: f64 = rng.random::<f64>() * std::f64::consts::FRAC_PI_4;
    let ua = random_unitary(rng);
    let ub = random_unitary(rng);
    let mut psi = [c(0.0); 4];
    for (k, amp) in [(0, t.cos()), (1, t.sin())] {
        for i in 0..2 {
            for j in 0..2 {
                psi[2 * i + j] += ua[(i, k)] * ub[(j, k)] * c(amp);
            }
        }
    }
    (psi, t.cos().powi(2))
}

pub fn check_shared_purity_cases() -> Check {
    let mut r = rng(5);
    let sp = |s: &TwoQubitState, r: &mut ChaCha8Rng| shared_purity(s, 20, 1e-12, r).map(|x| x.sp).map_err(|e| e.to_string());
    let prod = TwoQubitState::pure([c(0.6), c(0.0), c(0.8), c(0.0)]);
    let mixed = TwoQubitState::new(Matrix4::identity().scale(0.25), (0, 1)).unwrap();
    for (name, state, want) in [("product", prod, 0.0), ("I/4", mixed, 0.0), ("Bell", bell(), 0.5)] {
        let got = sp(&state, &mut r)?;
        if (got - want).abs() > 1e-9 {
            return Err(format!("{name}: Sp = {got}, expected {want}"));
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (psi, lam_max) = schmidt_state(&mut r);
        let got = sp(&TwoQubitState::pure(psi), &mut r)?;
        worst = worst.max((got - (1.0 - lam_max)).abs());
    }
    if worst > 1e-8 {
        return Err(format!("pure-state Schmidt identity off by {worst:.2e}"));
    }
    Ok(format!("product = 0, I/4 = 0, Bell = 0.5, Schmidt identity within {worst:.1e}"))
}

pub fn random_unitary(rng: &mut ChaCha8Rng) -> nalgebra::Matrix2<C64> {
    let mut g = || C64::new(gauss(rng), gauss(rng));
    let m = nalgebra::Matrix2::new(g(), g(), g(), g());
    m.qr().q()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random::<f64>().max(1e-300);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// A random full-rank-or-not density matrix: Σ_k p_k |ψ_k⟩⟨ψ_k| of `rank` states.
pub fn random_density(rng: &mut ChaCha8Rng, rank: usize) -> TwoQubitState {
    let mut m = Matrix4::<C64>::zeros();
    let mut total = 0.0;
    for _ in 0..rank {
        let v = nalgebra::Vector4::from_fn(|_, _| C64::new(gauss(rng), gauss(rng)));
        let w: f64 = rng.random();
        m += v * v.adjoint() * c(w / v.norm_squared());
        total += w;
    }
    m /= c(total);
    m = (m + m.adjoint()) * c(0.5);
    TwoQubitState::new(m, (0, 1)).unwrap()
}

pub fn local_rotate(s: &TwoQubitState, ua: &nalgebra::Matrix2<C64>, ub: &nalgebra::Matrix2<C64>) -> TwoQubitState {
    let u = Matrix4::from_fn(|r, q| ua[(r / 2, q / 2)] * ub[(r % 2, q % 2)]);
    let m = u * s.matrix * u.adjoint();
    TwoQubitState::new((m + m.adjoint()) * c(0.5), s.pair).unwrap()
}

pub fn check_local_unitary_invariance(count: usize) -> Check {
    let mut r = rng(17);
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let s = random_density(&mut r, 1 + i % 4);
        let (ua, ub) = (random_unitary(&mut r), random_unitary(&mut r));
        let t = local_rotate(&s, &ua, &ub);
        let (c0, c1) = (concurrence(&s).map_err(|e| e.to_string())?.value, concurrence(&t).map_err(|e| e.to_string())?.value);
        let s0 = shared_purity(&s, 20, 1e-12, &mut r).map_err(|e| e.to_string())?.sp;
        let s1 = shared_purity(&t, 20, 1e-12, &mut r).map_err(|e| e.to_string())?.sp;
        worst = worst.max((c0 - c1).abs()).max((s0 - s1).abs());
    }
    if worst > 1e-7 {
        return Err(format!("largest change under local unitaries {worst:.2e}"));
    }
    Ok(format!("{count} random states, largest change {worst:.1e}"))
}

fn bloch(theta: f64, phi: f64) -> Vector2<C64> {
    Vector2::new(c((0.5 * theta).cos()), C64::from_polar((0.5 * theta).sin(), phi))
}

/// The optimizer's F_L is never beaten by any product state on a 64×64 grid
/// (8 polar × 8 azimuthal directions per qubit).
pub fn check_bloch_dominance(count: usize) -> Check {
    let mut r = rng(23);
    let dirs: Vec<Vector2<C64>> = (0..8)
        .flat_map(|i| (0..8).map(move |j| (i, j)))
        .map(|(i, j)| bloch(std::f64::consts::PI * i as f64 / 7.0, std::f64::consts::TAU * j as f64 / 8.0))
        .collect();
    let mut margin = f64::INFINITY;
    for i in 0..count {
        let s = random_density(&mut r, 1 + i % 4);
        let fl = local_fidelity(&s, 20, 1e-12, &mut r).map_err(|e| e.to_string())?.value;
        let grid = dirs.iter().flat_map(|a| dirs.iter().map(move |b| (a, b))).map(|(a, b)| product_fidelity(&s, a, b)).fold(0.0, f64::max);
        if grid > fl + 1e-12 {
            return Err(format!("grid product state beats see-saw: {grid} > {fl}"));
        }
        margin = margin.min(fl - grid);
    }
    Ok(format!("{count} states, see-saw ≥ grid maximum (smallest margin {margin:.1e})"))
}

/// Partial trace through an explicit index loop over the full 2^n × 2^n
/// density matrix.
pub fn dense_partial_trace(rho: &DMatrix<f64>, n: usize, pair: (usize, usize)) -> [[f64; 4]; 4] {
    let bit = |s: usize, site: usize| (s >> (n - 1 - site)) & 1;
    let mut out = [[0.0; 4]; 4];
    let d = 1 << n;
    for s in 0..d {
        for t in 0..d {
            let rest = |x: usize| x & !((1 << (n - 1 - pair.0)) | (1 << (n - 1 - pair.1)));
            if rest(s) != rest(t) {
                continue;
            }
            let i = 2 * bit(s, pair.0) + bit(s, pair.1);
            let j = 2 * bit(t, pair.0) + bit(t, pair.1);
            out[i][j] += rho[(s, t)];
        }
    }
    out
}

pub fn check_partial_trace() -> Check {
    let n = 6;
    let d = 1 << n;
    let mut r = rng(29);
    let terms: Vec<MixtureTerm> = (0..5)
        .map(|k| {
            let v: Vec<f64> = (0..d).map(|_| gauss(&mut r)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            MixtureTerm { weight: (-(k as f64)).exp(), level: k, vector: v.iter().map(|x| x / norm).collect() }
        })
        .collect();
    let z: f64 = terms.iter().map(|t| t.weight).sum();
    let terms: Vec<MixtureTerm> = terms.into_iter().map(|t| MixtureTerm { weight: t.weight / z, ..t }).collect();
    let mut full = DMatrix::<f64>::zeros(d, d);
    for t in &terms {
        let v = nalgebra::DVector::from_vec(t.vector.clone());
        full += &v * v.transpose() * t.weight;
    }
    let mix = LowLyingMixture { terms, z };
    let mut worst: f64 = 0.0;
    for pair in [(0, 1), (2, 5), (4, 1), (5, 0)] {
        let want = dense_partial_trace(&full, n, pair);
        let got = reduce_to_pair(&mix, pair, n).map_err(|e| e.to_string())?;
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((got.matrix[(i, j)] - c(want[i][j])).norm());
            }
        }
    }
    if worst > 1e-12 {
        return Err(format!("partial trace differs by {worst:.2e}"));
    }
    Ok(format!("4 pairs at N = 6, largest difference {worst:.1e}"))
}
