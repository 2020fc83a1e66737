//! Dense superoperator and exact propagator for small systems (test oracle).

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::Liouvillian;
use crate::error::{Error, Result};

/// Largest Hilbert-space dimension for which the superoperator is materialized.
pub const PROPAGATOR_DIM_CAP: usize = 64;

/// The generator as a dim²×dim² matrix acting on column-stacked ρ.
pub fn superoperator_matrix(generator: &Liouvillian) -> Result<DMatrix<C64>> {
    let d = generator.dim();
    if d > PROPAGATOR_DIM_CAP {
        return Err(Error::PropagatorTooLarge { dim: d, cap: PROPAGATOR_DIM_CAP });
    }
    let n = d * d;
    let mut sup = DMatrix::<C64>::zeros(n, n);
    let mut unit = vec![C64::new(0.0, 0.0); n];
    let mut out = vec![C64::new(0.0, 0.0); n];
    let mut scratch = vec![C64::new(0.0, 0.0); n];
    for col in 0..n {
        unit[col] = C64::new(1.0, 0.0);
        generator.apply_into(&unit, &mut out, &mut scratch);
        sup.column_mut(col).copy_from_slice(&out);
        unit[col] = C64::new(0.0, 0.0);
    }
    Ok(sup)
}

/// exp(t·L) by Padé scaling-and-squaring on the materialized superoperator.
pub fn brute_force_propagator(generator: &Liouvillian, t: f64) -> Result<DMatrix<C64>> {
    let sup = superoperator_matrix(generator)?;
    if t == 0.0 {
        return Ok(DMatrix::identity(sup.nrows(), sup.ncols()));
    }
    Ok((sup * C64::new(t, 0.0)).exp())
}

/// Largest real part among the eigenvalues of the superoperator.
pub fn spectral_abscissa(generator: &Liouvillian) -> Result<f64> {
    let sup = superoperator_matrix(generator)?;
    let eig = sup
        .eigenvalues()
        .ok_or_else(|| Error::Quadrature("Schur decomposition did not converge".into()))?;
    Ok(eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Applies a dense propagator to a density matrix.
pub fn propagate(propagator: &DMatrix<C64>, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let d = rho.nrows();
    let v = nalgebra::DVector::from_column_slice(rho.as_slice());
    DMatrix::from_column_slice(d, d, (propagator * v).as_slice())
}
