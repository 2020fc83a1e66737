//! Collective spin operators, Dicke states and spin coherent states.
//!
//! All matrices act on the symmetric sector j = N/2, stored in ascending
//! order of the J_z eigenvalue: basis index `k` holds m = k - N/2. The
//! north pole θ = 0 of the coherent-state sphere is the Dicke state
//! m = +N/2, which is the dark state of the collective jump operator J₊.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::state::{DensityMatrix, Sector};

/// Overlaps below this threshold are treated as zero and mapped to an infinite rate.
pub const UNDERFLOW_THRESHOLD: f64 = 1e-300;

/// Collective angular-momentum matrices for N two-level atoms.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub n_atoms: usize,
    pub dim: usize,
    pub jx: DMatrix<C64>,
    pub jy: DMatrix<C64>,
    pub jz: DMatrix<C64>,
    pub jplus: DMatrix<C64>,
    pub jminus: DMatrix<C64>,
}

impl SpinOperators {
    pub fn new(n_atoms: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::invalid("n_atoms", "must be at least 1"));
        }
        let dim = n_atoms + 1;
        let j = n_atoms as f64 / 2.0;
        let mut jz = DMatrix::zeros(dim, dim);
        let mut jplus = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            let m = k as f64 - j;
            jz[(k, k)] = C64::new(m, 0.0);
            if k + 1 < dim {
                // J+|m> = sqrt(j(j+1) - m(m+1)) |m+1>
                jplus[(k + 1, k)] = C64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
            }
        }
        let jminus = jplus.adjoint();
        let half = C64::new(0.5, 0.0);
        let jx = (&jplus + &jminus) * half;
        let jy = (&jplus - &jminus) * C64::new(0.0, -0.5);
        Ok(Self { n_atoms, dim, jx, jy, jz, jplus, jminus })
    }

    /// Total spin quantum number j = N/2.
    pub fn j(&self) -> f64 {
        self.n_atoms as f64 / 2.0
    }

    /// Largest elementwise deviation from [jx, jy] = i jz and its cyclic permutations.
    pub fn commutator_residue(&self) -> f64 {
        let i = C64::new(0.0, 1.0);
        let comm = |a: &DMatrix<C64>, b: &DMatrix<C64>| a * b - b * a;
        let r1 = comm(&self.jx, &self.jy) - &self.jz * i;
        let r2 = comm(&self.jy, &self.jz) - &self.jx * i;
        let r3 = comm(&self.jz, &self.jx) - &self.jy * i;
        [r1, r2, r3].iter().map(max_abs).fold(0.0, f64::max)
    }

    /// Largest elementwise deviation of J² from j(j+1)·1.
    pub fn casimir_residue(&self) -> f64 {
        let j = self.j();
        let j2 = &self.jx * &self.jx + &self.jy * &self.jy + &self.jz * &self.jz;
        let target = DMatrix::from_diagonal_element(self.dim, self.dim, C64::new(j * (j + 1.0), 0.0));
        max_abs(&(j2 - target))
    }

    /// Largest elementwise deviation of J₊ from (J₋)†.
    pub fn adjoint_residue(&self) -> f64 {
        max_abs(&(&self.jplus - self.jminus.adjoint()))
    }
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// A point on the spin coherent-state sphere.
///
/// `theta = 0` is the dark state m = +N/2; `phi` is reduced into [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinCoherentPoint {
    phi: f64,
    theta: f64,
}

impl SpinCoherentPoint {
    pub fn new(phi: f64, theta: f64) -> Result<Self> {
        if !phi.is_finite() || !theta.is_finite() {
            return Err(Error::invalid("point", "angles must be finite"));
        }
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::invalid("theta", format!("{theta} outside [0, π]")));
        }
        let mut phi = phi.rem_euclid(2.0 * PI);
        if phi >= 2.0 * PI {
            phi = 0.0;
        }
        Ok(Self { phi, theta })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn is_pole(&self) -> bool {
        self.theta == 0.0 || self.theta == PI
    }

    /// Unit Bloch vector (sinθ cosφ, sinθ sinφ, cosθ).
    pub fn bloch(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn from_bloch(s: [f64; 3]) -> Self {
        let r = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
        let theta = (s[2] / r).clamp(-1.0, 1.0).acos();
        let phi = s[1].atan2(s[0]).rem_euclid(2.0 * PI);
        Self { phi: if phi >= 2.0 * PI { 0.0 } else { phi }, theta }
    }

    /// cos²(θ/2), the probability weight of a single atom in the upper level.
    pub fn cos2_half(&self) -> f64 {
        let c = (0.5 * self.theta).cos();
        c * c
    }
}

/// ln C(n, k) by direct summation.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// Spin coherent state |φ,θ⟩ in the ascending Dicke basis.
///
/// The amplitude on index k (m = k - N/2) is
/// √C(N,k) cos^k(θ/2) (e^{iφ} sin(θ/2))^{N-k}; it is evaluated in log space
/// so that large N does not overflow the binomial.
pub fn coherent_state_vector(n_atoms: usize, point: SpinCoherentPoint) -> DVector<C64> {
    let half = 0.5 * point.theta;
    let (s, c) = half.sin_cos();
    let (ln_c, ln_s) = (c.ln(), s.ln());
    DVector::from_fn(n_atoms + 1, |k, _| {
        let down = n_atoms - k;
        let mut ln_mag = 0.5 * ln_binomial(n_atoms, k);
        if k > 0 {
            ln_mag += k as f64 * ln_c;
        }
        if down > 0 {
            ln_mag += down as f64 * ln_s;
        }
        let mag = if ln_mag.is_nan() { 0.0 } else { ln_mag.exp() };
        C64::from_polar(mag, down as f64 * point.phi)
    })
}

/// A Dicke state |m⟩, identified by its index k = m + N/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DickeState {
    pub n_atoms: usize,
    pub k: usize,
}

impl DickeState {
    pub fn new(n_atoms: usize, k: usize) -> Result<Self> {
        if n_atoms == 0 || k > n_atoms {
            return Err(Error::invalid("dicke", format!("index {k} invalid for N = {n_atoms}")));
        }
        Ok(Self { n_atoms, k })
    }

    /// Dicke state from its J_z eigenvalue m ∈ {-N/2, …, N/2}.
    pub fn from_m(n_atoms: usize, m: f64) -> Result<Self> {
        let k = m + n_atoms as f64 / 2.0;
        if (k - k.round()).abs() > 1e-9 || k < -1e-9 {
            return Err(Error::invalid("m", format!("{m} is not a Dicke label for N = {n_atoms}")));
        }
        Self::new(n_atoms, k.round() as usize)
    }

    /// The dark state m = +N/2.
    pub fn dark(n_atoms: usize) -> Self {
        Self { n_atoms, k: n_atoms }
    }

    pub fn m(&self) -> f64 {
        self.k as f64 - self.n_atoms as f64 / 2.0
    }

    /// Fraction μ = k/N of excited atoms.
    pub fn fraction(&self) -> f64 {
        self.k as f64 / self.n_atoms as f64
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        DensityMatrix::dicke(self.n_atoms, self.k).expect("validated index")
    }
}

/// Reference state entering the overlap exponent W.
#[derive(Debug, Clone, Copy)]
pub enum OverlapReference<'a> {
    Dicke(DickeState),
    Density(&'a DensityMatrix),
}

/// How W is evaluated for Dicke references.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapMode {
    /// Exact finite-N closed form.
    Exact,
    /// N → ∞ limit at fixed μ = k/N (a binary relative entropy).
    Stirling,
}

/// W = -(1/N) ln⟨φ,θ|ρ₀|φ,θ⟩.
///
/// Returns `f64::INFINITY` when the overlap is below [`UNDERFLOW_THRESHOLD`].
/// Density-matrix references are always evaluated exactly.
pub fn overlap_exponent(
    reference: OverlapReference<'_>,
    point: SpinCoherentPoint,
    mode: OverlapMode,
) -> Result<f64> {
    match reference {
        OverlapReference::Dicke(d) => Ok(match mode {
            OverlapMode::Exact => dicke_overlap_exponent(d, point.theta),
            OverlapMode::Stirling => stirling_overlap_exponent(d.fraction(), point.cos2_half()),
        }),
        OverlapReference::Density(rho) => {
            let Sector::Atomic { n_atoms } = rho.sector() else {
                return Err(Error::WrongSector { expected: "atomic", found: rho.sector().to_string() });
            };
            let v = coherent_state_vector(n_atoms, point);
            let ov = (v.adjoint() * rho.matrix() * &v)[(0, 0)].re;
            Ok(rate_from_overlap(ov, n_atoms))
        }
    }
}

/// -(1/N) ln(value) with the underflow policy applied.
pub fn rate_from_overlap(value: f64, n_atoms: usize) -> f64 {
    if value < UNDERFLOW_THRESHOLD {
        f64::INFINITY
    } else {
        -value.ln() / n_atoms as f64
    }
}

/// Exact W_m(θ) = -(1/N)[ln C(N,k) + 2k ln cos(θ/2) + 2(N-k) ln sin(θ/2)].
pub fn dicke_overlap_exponent(d: DickeState, theta: f64) -> f64 {
    let n = d.n_atoms;
    let (s, c) = (0.5 * theta).sin_cos();
    let mut ln_ov = ln_binomial(n, d.k);
    for (count, amp) in [(d.k, c), (n - d.k, s)] {
        if count > 0 {
            if amp <= 0.0 {
                return f64::INFINITY;
            }
            ln_ov += 2.0 * count as f64 * amp.ln();
        }
    }
    if ln_ov < UNDERFLOW_THRESHOLD.ln() {
        return f64::INFINITY;
    }
    -ln_ov / n as f64
}

/// Large-N overlap exponent μ ln(μ/c) + (1-μ) ln((1-μ)/(1-c)) with c = cos²(θ/2).
pub fn stirling_overlap_exponent(mu: f64, c: f64) -> f64 {
    let term = |p: f64, q: f64| {
        if p <= 0.0 {
            0.0
        } else if q <= 0.0 {
            f64::INFINITY
        } else {
            p * (p / q).ln()
        }
    };
    term(mu, c) + term(1.0 - mu, 1.0 - c)
}
