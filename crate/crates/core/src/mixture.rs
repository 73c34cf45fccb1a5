//! The exponentially weighted mixture of the lowest energy levels and its
//! reduction to a two-site density matrix.

use nalgebra::{Complex, Matrix4, SymmetricEigen};

use crate::eigen::LowSpectrum;
use crate::error::{Error, Result};

/// Default index of the highest retained level (ground state is level 0).
pub const DEFAULT_K_MAX: usize = 4;
/// Negative eigenvalues of a reduced state above this are treated as roundoff.
pub const CLIP_THRESHOLD: f64 = 1e-10;

pub type C64 = Complex<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTerm {
    pub weight: f64,
    pub level: usize,
    pub vector: Vec<f64>,
}

/// ρ = Σ_k e^{−k}/(d_k Z) Σ_i |E_k^i⟩⟨E_k^i| kept as weighted pure states.
#[derive(Debug, Clone, PartialEq)]
pub struct LowLyingMixture {
    pub terms: Vec<MixtureTerm>,
    /// Normalization Σ_{k ≤ k_max} e^{−k}.
    pub z: f64,
}

impl LowLyingMixture {
    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }
}

pub fn build_mixture(spectrum: &LowSpectrum, k_max: usize) -> Result<LowLyingMixture> {
    let available = spectrum.levels.len();
    if available == 0 || k_max + 1 > available {
        return Err(Error::LevelResolution {
            requested: k_max + 1,
            message: format!(
                "only {available} distinct levels are available; use k_max ≤ {}",
                available.saturating_sub(1)
            ),
        });
    }
    let z: f64 = (0..=k_max).map(|k| (-(k as f64)).exp()).sum();
    let mut terms = Vec::new();
    for (k, level) in spectrum.levels.iter().take(k_max + 1).enumerate() {
        let w = (-(k as f64)).exp() / (level.degeneracy() as f64 * z);
        terms.extend(level.basis.iter().map(|v| MixtureTerm { weight: w, level: k, vector: v.clone() }));
    }
    Ok(LowLyingMixture { terms, z })
}

/// Reduced density matrix of a site pair, basis |s_a s_b⟩ with index 2·s_a + s_b.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    pub matrix: Matrix4<C64>,
    pub pair: (usize, usize),
}

impl TwoQubitState {
    /// Validates Hermiticity, trace and positivity, clipping eigenvalues in
    /// (−1e−10, 0) and renormalizing.
    pub fn new(matrix: Matrix4<C64>, pair: (usize, usize)) -> Result<Self> {
        let herm = (matrix - matrix.adjoint()).norm();
        if herm > 1e-12 {
            return Err(Error::InvalidParameter(format!("density matrix is not Hermitian (‖ρ−ρ†‖ = {herm:.2e})")));
        }
        let matrix = (matrix + matrix.adjoint()).scale(0.5);
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("density matrix trace is {trace}")));
        }
        let eig = SymmetricEigen::new(matrix);
        let min = eig.eigenvalues.min();
        if min < -CLIP_THRESHOLD {
            return Err(Error::NotPositive { value: min, context: "reduced density matrix" });
        }
        let matrix = if min < 0.0 {
            let clipped = eig.eigenvalues.map(|e| e.max(0.0));
            let total = clipped.sum();
            let d = clipped.map(|e| C64::new(e / total, 0.0));
            let u = eig.eigenvectors;
            u * Matrix4::from_diagonal(&d) * u.adjoint()
        } else {
            matrix
        };
        Ok(Self { matrix, pair })
    }

    /// Pure state |ψ⟩⟨ψ| from four amplitudes.
    pub fn pure(psi: [C64; 4]) -> Self {
        let v = nalgebra::Vector4::from(psi);
        let v = v / C64::new(v.norm(), 0.0);
        Self { matrix: v * v.adjoint(), pair: (0, 1) }
    }

    /// The state with its two qubits exchanged.
    pub fn swapped(&self) -> Self {
        let p = [0usize, 2, 1, 3];
        Self {
            matrix: Matrix4::from_fn(|i, j| self.matrix[(p[i], p[j])]),
            pair: (self.pair.1, self.pair.0),
        }
    }
}

/// Partial trace of the mixture onto `pair` in a single pass over each term.
pub fn reduce_to_pair(mix: &LowLyingMixture, pair: (usize, usize), n_sites: usize) -> Result<TwoQubitState> {
    let (a, b) = pair;
    if a >= n_sites || b >= n_sites {
        return Err(Error::InvalidParameter(format!("site pair ({a}, {b}) outside 0..{n_sites}")));
    }
    if a == b {
        return Err(Error::InvalidParameter(format!("site pair ({a}, {b}) repeats a site")));
    }
    let dim = 1usize << n_sites;
    let (ma, mb) = (1usize << (n_sites - 1 - a), 1usize << (n_sites - 1 - b));
    let offsets = [0, mb, ma, ma | mb];

    let mut rho = [[0.0f64; 4]; 4];
    for term in &mix.terms {
        if term.vector.len() != dim {
            return Err(Error::LengthMismatch { expected: dim, got: term.vector.len() });
        }
        let v = &term.vector;
        let mut acc = [[0.0f64; 4]; 4];
        for s in (0..dim).filter(|s| s & (ma | mb) == 0) {
            let x = offsets.map(|o| v[s | o]);
            for i in 0..4 {
                for j in 0..4 {
                    acc[i][j] += x[i] * x[j];
                }
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                rho[i][j] += term.weight * acc[i][j];
            }
        }
    }
    // Grouped so the value is unchanged when the two qubits are exchanged.
    let trace = (rho[0][0] + rho[3][3]) + (rho[1][1] + rho[2][2]);
    let matrix = Matrix4::from_fn(|i, j| C64::new(rho[i][j] / trace, 0.0));
    TwoQubitState::new(matrix, pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::Level;

    fn unit(n: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    fn spectrum(degs: &[usize]) -> LowSpectrum {
        let mut next = 0;
        let dim: usize = degs.iter().sum::<usize>().next_power_of_two();
        let levels = degs
            .iter()
            .enumerate()
            .map(|(k, &d)| Level {
                energy: k as f64,
                basis: (0..d)
                    .map(|_| {
                        next += 1;
                        unit(dim, next - 1)
                    })
                    .collect(),
            })
            .collect();
        LowSpectrum { levels, levels_requested: 5, boundary_resolved: true }
    }

    #[test]
    fn pure_ground_state_limit() {
        let m = build_mixture(&spectrum(&[1]), 0).unwrap();
        assert_eq!(m.terms.len(), 1);
        assert_eq!(m.terms[0].weight, 1.0);
    }

    #[test]
    fn five_nondegenerate_levels() {
        let m = build_mixture(&spectrum(&[1, 1, 1, 1, 1]), 4).unwrap();
        assert!((m.z - 1.571_317_4).abs() < 1e-6);
        for (k, t) in m.terms.iter().enumerate() {
            assert!((t.weight - (-(k as f64)).exp() / m.z).abs() < 1e-15);
        }
        assert!((m.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_ground_level_is_split_evenly() {
        let m = build_mixture(&spectrum(&[2, 1, 1, 1, 1]), 4).unwrap();
        assert_eq!(m.terms[0].weight, m.terms[1].weight);
        assert!((m.terms[0].weight - 1.0 / (2.0 * m.z)).abs() < 1e-15);
        assert!((m.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_levels_is_an_error() {
        let err = build_mixture(&spectrum(&[1, 3, 1, 2]), 4).unwrap_err();
        assert!(err.to_string().contains("k_max ≤ 3"), "{err}");
    }

    #[test]
    fn product_state_reduces_to_product() {
        let mix = LowLyingMixture { terms: vec![MixtureTerm { weight: 1.0, level: 0, vector: unit(16, 0) }], z: 1.0 };
        let r = reduce_to_pair(&mix, (1, 2), 4).unwrap();
        assert_eq!(r.matrix[(0, 0)].re, 1.0);
        assert_eq!(r.matrix.norm(), 1.0);
    }

    #[test]
    fn singlet_is_unchanged_without_traced_sites() {
        let s = 0.5f64.sqrt();
        let mix = LowLyingMixture {
            terms: vec![MixtureTerm { weight: 1.0, level: 0, vector: vec![0.0, s, -s, 0.0] }],
            z: 1.0,
        };
        let r = reduce_to_pair(&mix, (0, 1), 2).unwrap();
        let want = [[0.0, 0.0, 0.0, 0.0], [0.0, 0.5, -0.5, 0.0], [0.0, -0.5, 0.5, 0.0], [0.0, 0.0, 0.0, 0.0]];
        for i in 0..4 {
            for j in 0..4 {
                assert!((r.matrix[(i, j)].re - want[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn swapping_the_pair_swaps_the_qubits_exactly() {
        let v: Vec<f64> = (0..32).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect();
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v: Vec<f64> = v.iter().map(|x| x / nrm).collect();
        let mix = LowLyingMixture { terms: vec![MixtureTerm { weight: 1.0, level: 0, vector: v }], z: 1.0 };
        let ab = reduce_to_pair(&mix, (1, 3), 5).unwrap();
        let ba = reduce_to_pair(&mix, (3, 1), 5).unwrap();
        assert_eq!(ab.swapped().matrix, ba.matrix);
    }

    #[test]
    fn bad_pairs_are_rejected() {
        let mix = LowLyingMixture { terms: vec![MixtureTerm { weight: 1.0, level: 0, vector: unit(4, 0) }], z: 1.0 };
        assert!(reduce_to_pair(&mix, (0, 0), 2).is_err());
        assert!(reduce_to_pair(&mix, (0, 2), 2).is_err());
    }

    #[test]
    fn strongly_negative_states_are_refused() {
        let m = Matrix4::from_diagonal(&nalgebra::Vector4::new(0.6, 0.5, 0.0, -0.1).map(|x| C64::new(x, 0.0)));
        assert!(matches!(TwoQubitState::new(m, (0, 1)), Err(Error::NotPositive { .. })));
        let m = Matrix4::from_diagonal(&nalgebra::Vector4::new(0.5, 0.5 + 1e-11, 0.0, -1e-11).map(|x| C64::new(x, 0.0)));
        let s = TwoQubitState::new(m, (0, 1)).unwrap();
        assert!(SymmetricEigen::new(s.matrix).eigenvalues.min() >= -1e-15);
    }
}
