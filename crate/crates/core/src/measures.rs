//! Concurrence and shared purity of a two-qubit state.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{TwoQubitState, C64};

/// Random starts of the local-fidelity search, besides the four computational
/// product states.
pub const DEFAULT_RESTARTS: usize = 20;
pub const DEFAULT_FIDELITY_TOL: f64 = 1e-10;
const MAX_ALTERNATIONS: usize = 10_000;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// σ^y ⊗ σ^y in the computational basis.
fn yy() -> Matrix4<C64> {
    let mut m = Matrix4::zeros();
    m[(0, 3)] = c(-1.0);
    m[(1, 2)] = c(1.0);
    m[(2, 1)] = c(1.0);
    m[(3, 0)] = c(-1.0);
    m
}

/// ρ̃ = (σ^y⊗σ^y) ρ* (σ^y⊗σ^y).
pub fn spin_flip(rho: &TwoQubitState) -> Matrix4<C64> {
    let y = yy();
    y * rho.matrix.conjugate() * y
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcurrenceResult {
    pub value: f64,
    /// Square roots of the eigenvalues of ρρ̃, descending.
    pub lambdas: [f64; 4],
}

pub fn concurrence(rho: &TwoQubitState) -> Result<ConcurrenceResult> {
    let r = rho.matrix * spin_flip(rho);
    let eig = r.schur().eigenvalues().ok_or_else(|| Error::NotPositive {
        value: f64::NAN,
        context: "ρρ̃ eigenvalues (Schur form not triangular)",
    })?;
    let mut ev: Vec<f64> = eig.iter().map(|z| z.re).collect();
    if let Some(&worst) = ev.iter().min_by(|a, b| a.total_cmp(b)) {
        if worst < -1e-8 {
            return Err(Error::NotPositive { value: worst, context: "ρρ̃ spectrum" });
        }
    }
    ev.sort_by(|a, b| b.total_cmp(a));
    let lambdas = [0, 1, 2, 3].map(|i| ev[i].max(0.0).sqrt());
    let value = (lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0);
    Ok(ConcurrenceResult { value, lambdas })
}

/// Largest eigenvalue of ρ.
pub fn global_fidelity(rho: &TwoQubitState) -> f64 {
    SymmetricEigen::new(rho.matrix).eigenvalues.max()
}

/// Smallest eigenvalue of the partial transpose over the second qubit.
pub fn partial_transpose_min_eigenvalue(rho: &TwoQubitState) -> f64 {
    let pt = Matrix4::from_fn(|r, s| {
        let (i, j) = (r / 2, r % 2);
        let (k, l) = (s / 2, s % 2);
        rho.matrix[(2 * i + l, 2 * k + j)]
    });
    SymmetricEigen::new(pt).eigenvalues.min()
}

/// ⟨a⊗b|ρ|a⊗b⟩.
pub fn product_fidelity(rho: &TwoQubitState, a: &Vector2<C64>, b: &Vector2<C64>) -> f64 {
    let v = nalgebra::Vector4::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]);
    (v.adjoint() * rho.matrix * v)[(0, 0)].re
}

/// Largest eigenvalue and a unit eigenvector of a Hermitian 2×2 matrix.
fn top_eigenpair(m: &Matrix2<C64>) -> (f64, Vector2<C64>) {
    let (p, r, off) = (m[(0, 0)].re, m[(1, 1)].re, m[(0, 1)]);
    let half = 0.5 * (p - r);
    let lam = 0.5 * (p + r) + (half * half + off.norm_sqr()).sqrt();
    // Two candidate (unnormalized) eigenvectors; take the better conditioned.
    let u = Vector2::new(off, c(lam - p));
    let w = Vector2::new(c(lam - r), off.conj());
    let v = if u.norm() >= w.norm() { u } else { w };
    let n = v.norm();
    if n == 0.0 {
        (lam, Vector2::new(c(1.0), c(0.0)))
    } else {
        (lam, v / c(n))
    }
}

/// M_b[i, i′] = Σ b̄_j ρ_{(ij),(i′j′)} b_{j′}, or the same with the roles of the
/// qubits exchanged.
fn conditioned(rho: &Matrix4<C64>, other: &Vector2<C64>, first: bool) -> Matrix2<C64> {
    Matrix2::from_fn(|i, ip| {
        let mut acc = c(0.0);
        for j in 0..2 {
            for jp in 0..2 {
                let (row, col) = if first { (2 * i + j, 2 * ip + jp) } else { (2 * j + i, 2 * jp + ip) };
                acc += other[j].conj() * rho[(row, col)] * other[jp];
            }
        }
        acc
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFidelity {
    pub value: f64,
    /// Maximizing product state |a⟩⊗|b⟩.
    pub optimizer: (Vector2<C64>, Vector2<C64>),
    /// Random starts tried (the four deterministic starts are not counted).
    pub restarts_used: usize,
    /// At least one start reached the tolerance.
    pub converged: bool,
}

/// See-saw from one start: alternately the optimal |a⟩ for fixed |b⟩ and the
/// optimal |b⟩ for fixed |a⟩, each an exact 2×2 eigenproblem.
fn seesaw(rho: &TwoQubitState, mut b: Vector2<C64>, tol: f64) -> (f64, Vector2<C64>, Vector2<C64>, bool) {
    let mut a = Vector2::new(c(1.0), c(0.0));
    let mut last = f64::NEG_INFINITY;
    for _ in 0..MAX_ALTERNATIONS {
        let (_, na) = top_eigenpair(&conditioned(&rho.matrix, &b, true));
        a = na;
        let (f, nb) = top_eigenpair(&conditioned(&rho.matrix, &a, false));
        b = nb;
        assert!(f >= last - 1e-12, "see-saw objective decreased from {last} to {f}");
        if f - last < tol {
            return (f.max(last), a, b, true);
        }
        last = f;
    }
    (last, a, b, false)
}

fn bloch(theta: f64, phi: f64) -> Vector2<C64> {
    Vector2::new(c((0.5 * theta).cos()), C64::from_polar((0.5 * theta).sin(), phi))
}

/// max over product states of ⟨a⊗b|ρ|a⊗b⟩.
pub fn local_fidelity<R: Rng + ?Sized>(rho: &TwoQubitState, restarts: usize, tol: f64, rng: &mut R) -> Result<LocalFidelity> {
    let basis = [Vector2::new(c(1.0), c(0.0)), Vector2::new(c(0.0), c(1.0))];
    let mut starts: Vec<Vector2<C64>> = Vec::with_capacity(restarts + 4);
    // Computational product states; the see-saw only uses the second factor.
    for _a in &basis {
        for b in &basis {
            starts.push(*b);
        }
    }
    for _ in 0..restarts {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        starts.push(bloch((1.0 - 2.0 * u).acos(), std::f64::consts::TAU * v));
    }

    let mut best: Option<(f64, Vector2<C64>, Vector2<C64>)> = None;
    let mut converged = false;
    for b in starts {
        let (f, a, b, ok) = seesaw(rho, b, tol);
        converged |= ok;
        if best.as_ref().is_none_or(|x| f > x.0) {
            best = Some((f, a, b));
        }
    }
    let (value, a, b) = best.expect("at least one start");
    if !converged {
        return Err(Error::OptimizerNoConvergence { best: value });
    }
    Ok(LocalFidelity { value, optimizer: (a, b), restarts_used: restarts, converged })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedPurityResult {
    pub sp: f64,
    pub f_global: f64,
    pub f_local: f64,
    pub optimizer: (Vector2<C64>, Vector2<C64>),
    pub restarts_used: usize,
    pub converged: bool,
}

/// Sp = F_G − F_L. F_L is capped at F_G, which it cannot exceed in exact
/// arithmetic.
pub fn shared_purity<R: Rng + ?Sized>(rho: &TwoQubitState, restarts: usize, tol: f64, rng: &mut R) -> Result<SharedPurityResult> {
    let f_global = global_fidelity(rho);
    let local = local_fidelity(rho, restarts, tol, rng)?;
    let f_local = local.value.min(f_global);
    Ok(SharedPurityResult {
        sp: f_global - f_local,
        f_global,
        f_local,
        optimizer: local.optimizer,
        restarts_used: local.restarts_used,
        converged: local.converged,
    })
}
