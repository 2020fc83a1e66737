//! Loschmidt echoes, rate functions and Fock-overlap rate functions.

use std::fmt;

use crate::error::{Error, Result};
use crate::master_equation::{partial_trace_cavity, EvolutionResult};
use crate::povm_homodyne::Branch;
use crate::spin_algebra::rate_from_overlap;
use crate::state::{DensityMatrix, Sector};

/// Largest imaginary part of tr ρ(0)ρ(t) accepted before the echo is rejected.
pub const ECHO_IMAG_TOL: f64 = 1e-10;

/// Echoes below this are at the level of double-precision roundoff in the
/// Dicke basis and carry no information.
pub const ECHO_RESOLUTION: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateKind {
    Loschmidt,
    /// Overlap with the Dicke state of magnetic quantum number m.
    Fock(f64),
    Conditioned(Branch),
    Asymptotic,
}

impl fmt::Display for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateKind::Loschmidt => write!(f, "loschmidt"),
            RateKind::Fock(m) => write!(f, "fock({m})"),
            RateKind::Conditioned(b) => write!(f, "conditioned({b})"),
            RateKind::Asymptotic => write!(f, "asymptotic"),
        }
    }
}

/// A rate function sampled on a time grid. `n_atoms = None` means N → ∞.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    pub kind: RateKind,
    pub n_atoms: Option<usize>,
    pub model: String,
}

impl RateSeries {
    pub fn new(
        times: Vec<f64>,
        values: Vec<f64>,
        kind: RateKind,
        n_atoms: Option<usize>,
        model: impl Into<String>,
    ) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch(format!("{} times but {} values", times.len(), values.len())));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("times", "must be strictly increasing"));
        }
        Ok(Self { times, values, kind, n_atoms, model: model.into() })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Indices of strict interior local maxima.
    pub fn local_maxima(&self) -> Vec<usize> {
        let v = &self.values;
        (1..v.len().saturating_sub(1)).filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1]).collect()
    }
}

/// tr ρ(0)ρ(t).
pub fn loschmidt_echo(rho_t: &DensityMatrix, rho_0: &DensityMatrix) -> Result<f64> {
    if rho_t.sector() != rho_0.sector() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", rho_t.sector(), rho_0.sector())));
    }
    let (a, b) = (rho_0.matrix(), rho_t.matrix());
    // tr(AB) = Σ_ij A_ij B_ji
    let value: num_complex::Complex64 = a.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum();
    if value.im.abs() >= ECHO_IMAG_TOL {
        return Err(Error::invalid("rho_t", format!("echo has imaginary part {:e}", value.im)));
    }
    Ok(value.re)
}

/// −ln(L)/N, with L = 0 (or below the underflow threshold) mapped to +∞.
pub fn rate_function(l_value: f64, n_atoms: usize) -> f64 {
    rate_from_overlap(l_value, n_atoms)
}

/// r_m = −ln⟨m|ρ_A|m⟩/N for m = −N/2 … N/2 (ascending).
pub fn fock_overlap_rates(rho_t: &DensityMatrix) -> Result<Vec<f64>> {
    let Sector::Atomic { n_atoms } = rho_t.sector() else {
        return Err(Error::WrongSector { expected: "atomic", found: rho_t.sector().to_string() });
    };
    Ok(rho_t.populations().into_iter().map(|p| rate_from_overlap(p, n_atoms)).collect())
}

/// Atomic reduced state of either sector.
pub fn atomic_state(rho: &DensityMatrix) -> Result<DensityMatrix> {
    match rho.sector() {
        Sector::Atomic { .. } => Ok(rho.clone()),
        Sector::AtomsCavity { .. } => partial_trace_cavity(rho),
    }
}

/// Loschmidt rate of the atomic state along an evolution.
pub fn loschmidt_rates(evolution: &EvolutionResult, model: &str) -> Result<RateSeries> {
    let first = evolution.states.first().ok_or_else(|| Error::invalid("evolution", "no states"))?;
    let n = first.sector().n_atoms();
    let rho_a0 = atomic_state(first)?;
    let values = evolution
        .states
        .iter()
        .map(|rho| Ok(rate_function(loschmidt_echo(&atomic_state(rho)?, &rho_a0)?, n)))
        .collect::<Result<Vec<_>>>()?;
    RateSeries::new(evolution.times.clone(), values, RateKind::Loschmidt, Some(n), model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn echo_of_pure_and_mixed_states() {
        let dark = DensityMatrix::dicke(6, 6).unwrap();
        assert_abs_diff_eq!(loschmidt_echo(&dark, &dark).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(rate_function(1.0, 6), 0.0);
        let mixed = DensityMatrix::maximally_mixed(Sector::Atomic { n_atoms: 99 });
        let l = loschmidt_echo(&mixed, &mixed).unwrap();
        assert_abs_diff_eq!(l, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(rate_function(l, 99), 100f64.ln() / 99.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rate_function((-50.0f64 * 0.3).exp(), 50), 0.3, epsilon = 1e-14);
        assert_eq!(rate_function(0.0, 10), f64::INFINITY);
    }

    #[test]
    fn echo_rejects_mismatched_sectors() {
        let a = DensityMatrix::dicke(2, 2).unwrap();
        let b = DensityMatrix::dicke(3, 3).unwrap();
        assert!(loschmidt_echo(&a, &b).is_err());
    }

    #[test]
    fn fock_rates_at_time_zero() {
        let dark = DensityMatrix::dicke(8, 8).unwrap();
        let r = fock_overlap_rates(&dark).unwrap();
        assert_eq!(r[8], 0.0);
        assert!(r[..8].iter().all(|x| x.is_infinite()));
    }

    #[test]
    fn rate_series_requires_increasing_times() {
        assert!(RateSeries::new(vec![0.0, 0.0], vec![0.0, 0.0], RateKind::Loschmidt, Some(1), "x").is_err());
        assert!(RateSeries::new(vec![0.0], vec![0.0, 0.0], RateKind::Loschmidt, Some(1), "x").is_err());
    }
}
