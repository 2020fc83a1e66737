//! Half-plane coherent-state POVM E_± = ∫ d²α/π |α⟩⟨α| Θ(±Re α) and conditioned echoes.
//!
//! Writing α = r e^{iφ}, the matrix element factorizes into a radial moment and
//! an angular sector integral:
//!
//! ⟨n|E₊|m⟩ = Γ((n+m)/2 + 1) A_{n−m} / (2π √(n! m!)),
//! A_0 = π, A_k = 2 sin(kπ/2)/k,
//!
//! so every element is real, the diagonal is 1/2, and elements with even
//! nonzero n − m vanish.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::echoes::loschmidt_echo;
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_interval;
use crate::state::{DensityMatrix, Sector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Plus,
    Minus,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Plus => "+",
            Branch::Minus => "-",
        })
    }
}

/// ln Γ(k/2) for a positive integer k.
fn ln_gamma_half_integer(k: usize) -> f64 {
    assert!(k > 0);
    let (mut x, mut acc) = if k % 2 == 0 { (1.0, 0.0) } else { (0.5, 0.5 * PI.ln()) };
    while 2.0 * x < k as f64 {
        acc += x.ln();
        x += 1.0;
    }
    acc
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// ⟨n|E₊|m⟩ from the closed form.
pub fn halfplane_element(n: usize, m: usize) -> f64 {
    let k = n as i64 - m as i64;
    if k == 0 {
        return 0.5;
    }
    if k % 2 == 0 {
        return 0.0;
    }
    let angular = 2.0 * (k as f64 * PI / 2.0).sin() / k as f64;
    let ln_radial = ln_gamma_half_integer(n + m + 2) - 0.5 * (ln_factorial(n) + ln_factorial(m));
    angular * ln_radial.exp() / (2.0 * PI)
}

/// ⟨n|E₊|m⟩ by Cartesian Gauss–Legendre quadrature over the half plane, refined
/// until successive estimates agree to 1e−10 (relative, or absolute for tiny values).
pub fn halfplane_element_by_quadrature(n: usize, m: usize) -> Result<f64> {
    let norm = (-0.5 * (ln_factorial(n) + ln_factorial(m))).exp();
    let extent = 8.0 + (((n + m) as f64) / 2.0).sqrt() * 2.0;
    let estimate = |panels: usize| -> f64 {
        let width = extent / panels as f64;
        let mut xs = Vec::new();
        let mut wx = Vec::new();
        let mut ys = Vec::new();
        let mut wy = Vec::new();
        for p in 0..panels {
            let (x, w) = gauss_legendre_interval(16, p as f64 * width, (p + 1) as f64 * width);
            xs.extend(x);
            wx.extend(w);
        }
        for p in 0..2 * panels {
            let a = -extent + p as f64 * width;
            let (y, w) = gauss_legendre_interval(16, a, a + width);
            ys.extend(y);
            wy.extend(w);
        }
        let mut sum = C64::new(0.0, 0.0);
        for (x, wxi) in xs.iter().zip(&wx) {
            for (y, wyi) in ys.iter().zip(&wy) {
                let alpha = C64::new(*x, *y);
                let weight = (-(x * x + y * y)).exp();
                sum += alpha.powu(n as u32) * alpha.conj().powu(m as u32) * (weight * wxi * wyi);
            }
        }
        sum.re * norm / PI
    };
    let mut panels = 8;
    let mut previous = estimate(panels);
    for _ in 0..4 {
        panels *= 2;
        let current = estimate(panels);
        if (current - previous).abs() <= 1e-10 * current.abs().max(1e-2) {
            return Ok(current);
        }
        previous = current;
    }
    Err(Error::Quadrature(format!("element ({n},{m}) did not settle: last estimate {previous:e}")))
}

/// The pair E₊, E₋ = I − E₊ on a cavity truncated at `n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfPlanePovm {
    n_max: usize,
    e_plus: DMatrix<C64>,
    e_minus: DMatrix<C64>,
}

impl HalfPlanePovm {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn e_plus(&self) -> &DMatrix<C64> {
        &self.e_plus
    }

    pub fn e_minus(&self) -> &DMatrix<C64> {
        &self.e_minus
    }

    pub fn element(&self, branch: Branch) -> &DMatrix<C64> {
        match branch {
            Branch::Plus => &self.e_plus,
            Branch::Minus => &self.e_minus,
        }
    }
}

pub fn build_halfplane_povm(n_max: usize) -> Result<HalfPlanePovm> {
    if n_max < 1 {
        return Err(Error::invalid("n_max", "must be at least 1"));
    }
    let d = n_max + 1;
    let e_plus = DMatrix::from_fn(d, d, |n, m| C64::new(halfplane_element(n, m), 0.0));
    let e_minus = DMatrix::identity(d, d) - &e_plus;
    Ok(HalfPlanePovm { n_max, e_plus, e_minus })
}

/// tr_C((I ⊗ E_branch) ρ), unnormalized.
pub fn condition_state(rho_full: &DensityMatrix, povm: &HalfPlanePovm, branch: Branch) -> Result<DensityMatrix> {
    let Sector::AtomsCavity { n_atoms, n_max } = rho_full.sector() else {
        return Err(Error::WrongSector { expected: "atoms⊗cavity", found: rho_full.sector().to_string() });
    };
    if n_max != povm.n_max {
        return Err(Error::DimensionMismatch(format!("state cutoff {n_max}, POVM cutoff {}", povm.n_max)));
    }
    let nc = n_max + 1;
    let e = povm.element(branch);
    let rho = rho_full.matrix();
    let out = DMatrix::from_fn(n_atoms + 1, n_atoms + 1, |a, b| {
        let mut s = C64::new(0.0, 0.0);
        for n in 0..nc {
            for m in 0..nc {
                s += e[(n, m)] * rho[(a * nc + m, b * nc + n)];
            }
        }
        s
    });
    DensityMatrix::from_matrix(Sector::Atomic { n_atoms }, out)
}

/// (L₊, L₋) with L_± = tr ρ_{A±}(t) ρ_A(0).
pub fn conditioned_echoes(rho_full_t: &DensityMatrix, povm: &HalfPlanePovm, rho_a0: &DensityMatrix) -> Result<(f64, f64)> {
    let plus = loschmidt_echo(&condition_state(rho_full_t, povm, Branch::Plus)?, rho_a0)?;
    let minus = loschmidt_echo(&condition_state(rho_full_t, povm, Branch::Minus)?, rho_a0)?;
    Ok((plus, minus))
}

/// A sign change of r₊ − r₋ located by linear interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub time: f64,
    /// Spacing of the bracketing grid points.
    pub uncertainty: f64,
    /// Index of the grid point just before the crossing.
    pub index: usize,
}

/// All sign changes of `plus − minus`, earliest first. Points where the
/// difference is exactly zero (or either value is not finite) carry no sign.
pub fn branch_crossings(times: &[f64], plus: &[f64], minus: &[f64]) -> Vec<Crossing> {
    let mut out = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    for i in 0..times.len().min(plus.len()).min(minus.len()) {
        let diff = plus[i] - minus[i];
        if !diff.is_finite() || diff == 0.0 {
            continue;
        }
        if let Some((j, prev)) = last {
            if prev.signum() != diff.signum() {
                let (t0, t1) = (times[j], times[i]);
                let time = t0 + (t1 - t0) * prev / (prev - diff);
                out.push(Crossing { time, uncertainty: times[j + 1] - times[j], index: j });
            }
        }
        last = Some((i, diff));
    }
    out
}

/// Earliest crossing of the two conditioned rate functions.
pub fn detect_branch_crossing(times: &[f64], plus: &[f64], minus: &[f64]) -> Option<Crossing> {
    branch_crossings(times, plus, minus).into_iter().next()
}
