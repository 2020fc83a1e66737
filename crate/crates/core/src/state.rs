//! Density matrices for the atomic and atoms⊗cavity sectors.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Which Hilbert space a density matrix lives on.
///
/// The joint space is ordered atoms-major: index `a * (n_max + 1) + n` for
/// Dicke index `a` and photon number `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    Atomic { n_atoms: usize },
    AtomsCavity { n_atoms: usize, n_max: usize },
}

impl Sector {
    pub fn dim(&self) -> usize {
        match *self {
            Sector::Atomic { n_atoms } => n_atoms + 1,
            Sector::AtomsCavity { n_atoms, n_max } => (n_atoms + 1) * (n_max + 1),
        }
    }

    pub fn n_atoms(&self) -> usize {
        match *self {
            Sector::Atomic { n_atoms } | Sector::AtomsCavity { n_atoms, .. } => n_atoms,
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sector::Atomic { n_atoms } => write!(f, "atomic(N={n_atoms})"),
            Sector::AtomsCavity { n_atoms, n_max } => {
                write!(f, "atoms⊗cavity(N={n_atoms}, n_max={n_max})")
            }
        }
    }
}

/// A density matrix tagged with its sector.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    sector: Sector,
    data: DMatrix<C64>,
}

/// Tolerances used by [`DensityMatrix::validate`].
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = 1e-8;

impl DensityMatrix {
    /// Wraps a matrix without checking the physical invariants; see [`validate`](Self::validate).
    pub fn from_matrix(sector: Sector, data: DMatrix<C64>) -> Result<Self> {
        let dim = sector.dim();
        if data.nrows() != dim || data.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "{sector} needs {dim}×{dim}, got {}×{}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self { sector, data })
    }

    pub fn pure(sector: Sector, psi: &DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::invalid("psi", "zero vector"));
        }
        let psi = psi / C64::new(norm, 0.0);
        Self::from_matrix(sector, &psi * psi.adjoint())
    }

    /// Projector onto the Dicke state with index `k` (m = k - N/2).
    pub fn dicke(n_atoms: usize, k: usize) -> Result<Self> {
        if k > n_atoms {
            return Err(Error::invalid("k", format!("Dicke index {k} exceeds N = {n_atoms}")));
        }
        let sector = Sector::Atomic { n_atoms };
        let mut data = DMatrix::zeros(n_atoms + 1, n_atoms + 1);
        data[(k, k)] = C64::new(1.0, 0.0);
        Ok(Self { sector, data })
    }

    pub fn maximally_mixed(sector: Sector) -> Self {
        let dim = sector.dim();
        let data = DMatrix::from_diagonal_element(dim, dim, C64::new(1.0 / dim as f64, 0.0));
        Self { sector, data }
    }

    /// Atomic state tensored with a cavity state.
    pub fn product(atoms: &DensityMatrix, cavity: &DMatrix<C64>) -> Result<Self> {
        let Sector::Atomic { n_atoms } = atoms.sector else {
            return Err(Error::WrongSector { expected: "atomic", found: atoms.sector.to_string() });
        };
        if cavity.nrows() != cavity.ncols() || cavity.nrows() < 2 {
            return Err(Error::DimensionMismatch("cavity state must be square, n_max >= 1".into()));
        }
        let n_max = cavity.nrows() - 1;
        let data = atoms.data.kronecker(cavity);
        Ok(Self { sector: Sector::AtomsCavity { n_atoms, n_max }, data })
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.data
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    /// Largest elementwise |ρ - ρ†|.
    pub fn hermiticity_residue(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..=j {
                worst = worst.max((self.data[(i, j)] - self.data[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.data + self.data.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Checks hermiticity, unit trace and positivity at the crate tolerances.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_residue();
        if herm > HERMITICITY_TOL {
            return Err(Error::invalid("rho", format!("hermiticity residue {herm:e}")));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::invalid("rho", format!("trace {tr}")));
        }
        let lmin = self.min_eigenvalue();
        if lmin < -POSITIVITY_TOL {
            return Err(Error::invalid("rho", format!("min eigenvalue {lmin:e}")));
        }
        Ok(())
    }

    /// ⟨k|ρ|k⟩ for every basis index.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.data[(i, i)].re).collect()
    }
}

/// Cavity projector |n⟩⟨n| truncated at `n_max`.
pub fn fock_projector(n_max: usize, n: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(n_max + 1, n_max + 1);
    m[(n, n)] = C64::new(1.0, 0.0);
    m
}

/// Coherent cavity state |α⟩⟨α| truncated at `n_max` and renormalized.
pub fn coherent_cavity_state(n_max: usize, alpha: C64) -> DMatrix<C64> {
    let mut amp = DVector::<C64>::zeros(n_max + 1);
    let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..=n_max {
        amp[n] = c;
        c *= alpha / ((n + 1) as f64).sqrt();
    }
    let norm = amp.norm();
    amp /= C64::new(norm, 0.0);
    &amp * amp.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_sector_dims() {
        let rho = DensityMatrix::dicke(3, 3).unwrap();
        let joint = DensityMatrix::product(&rho, &fock_projector(4, 0)).unwrap();
        assert_eq!(joint.sector(), Sector::AtomsCavity { n_atoms: 3, n_max: 4 });
        assert_eq!(joint.dim(), 20);
        joint.validate().unwrap();
    }

    #[test]
    fn rejects_wrong_shape() {
        let err = DensityMatrix::from_matrix(Sector::Atomic { n_atoms: 2 }, DMatrix::zeros(2, 2));
        assert!(err.is_err());
    }

    #[test]
    fn coherent_cavity_state_is_normalized() {
        let c = coherent_cavity_state(30, C64::new(2.0, 0.0));
        assert!((c.trace().re - 1.0).abs() < 1e-12);
    }
}
