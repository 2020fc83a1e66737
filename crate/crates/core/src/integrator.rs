//! Embedded Dormand–Prince 5(4) integrator with PI step-size control.
//!
//! Output times are hit exactly: steps are clipped so that every requested
//! time is a step boundary, which removes interpolation error from the
//! reported states.

use std::ops::{Add, AddAssign, Mul, Sub};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Scalar types the integrator can advance.
pub trait Field:
    Copy + Default + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + AddAssign
{
    fn modulus(self) -> f64;
}

impl Field for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Field for C64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// A first-order system y' = f(t, y).
pub trait OdeSystem<T: Field> {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[T], dy: &mut [T]);
    /// Applied to every accepted state (e.g. re-symmetrization).
    fn project(&self, _y: &mut [T]) {}
}

/// Returned by an observer to continue or halt an integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Tolerances {
    pub fn new(rel: f64, abs: f64) -> Result<Self> {
        if !(rel > 0.0) || !(abs > 0.0) {
            return Err(Error::invalid("tolerances", format!("rel={rel}, abs={abs} must be positive")));
        }
        Ok(Self { rel, abs })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone)]
pub struct Dopri5 {
    pub tol: Tolerances,
    pub max_steps: usize,
    pub h_max: f64,
    pub initial_step: Option<f64>,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;
const SAFETY: f64 = 0.9;

struct Work<T> {
    k: [Vec<T>; 7],
    ytmp: Vec<T>,
    ynew: Vec<T>,
}

impl Dopri5 {
    pub fn new(tol: Tolerances) -> Self {
        Self { tol, max_steps: 10_000_000, h_max: f64::INFINITY, initial_step: None }
    }

    /// Integrates from `(t0, y0)` through every time in `t_grid` (non-decreasing,
    /// all ≥ t0), calling `observe(index, t, y)` at each.
    pub fn integrate<T, S, F>(&self, sys: &S, t0: f64, y0: &[T], t_grid: &[f64], mut observe: F) -> Result<StepStats>
    where
        T: Field,
        S: OdeSystem<T>,
        F: FnMut(usize, f64, &[T]) -> Result<()>,
    {
        self.integrate_until(sys, t0, y0, t_grid, |i, t, y| observe(i, t, y).map(|_| Flow::Continue))
            .map(|(stats, _)| stats)
    }

    /// Like [`Dopri5::integrate`], but the observer may halt the run. Returns the
    /// index of the output time at which it stopped, if it did.
    pub fn integrate_until<T, S, F>(
        &self,
        sys: &S,
        t0: f64,
        y0: &[T],
        t_grid: &[f64],
        mut observe: F,
    ) -> Result<(StepStats, Option<usize>)>
    where
        T: Field,
        S: OdeSystem<T>,
        F: FnMut(usize, f64, &[T]) -> Result<Flow>,
    {
        let n = sys.dim();
        assert_eq!(y0.len(), n);
        if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid.first().is_some_and(|&t| t < t0) {
            return Err(Error::invalid("t_grid", "output times must be non-decreasing and ≥ t0"));
        }
        let mut stats = StepStats::default();
        let mut y = y0.to_vec();
        let mut t = t0;
        let zero = T::default();
        let mut w = Work {
            k: std::array::from_fn(|_| vec![zero; n]),
            ytmp: vec![zero; n],
            ynew: vec![zero; n],
        };
        sys.rhs(t, &y, &mut w.k[0]);
        stats.rhs_evals += 1;

        let mut h = match self.initial_step {
            Some(h) => h,
            // the guess collapses when the absolute tolerance is far below the solution scale
            None => self.initial_step_guess(sys, t, &y, &mut w, &mut stats).max(1e-8),
        };
        let mut err_old = 1e-4f64;
        let mut last_rejected = false;

        for (idx, &t_out) in t_grid.iter().enumerate() {
            while t < t_out {
                if stats.accepted + stats.rejected >= self.max_steps {
                    return Err(Error::Integration { t, reason: format!("exceeded {} steps", self.max_steps) });
                }
                let remaining = t_out - t;
                let mut step = h.min(self.h_max);
                let clipped = step >= remaining;
                if clipped {
                    step = remaining;
                } else if step > 0.5 * remaining {
                    // avoid leaving a sliver before the output time
                    step = 0.5 * remaining;
                }
                if step < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::Integration { t, reason: format!("step size underflow (h = {step:e})") });
                }
                let err = self.attempt(sys, t, &y, step, &mut w, &mut stats);
                if !err.is_finite() {
                    last_rejected = true;
                    stats.rejected += 1;
                    h = 0.1 * step;
                    continue;
                }
                if err <= 1.0 {
                    stats.accepted += 1;
                    t = if clipped { t_out } else { t + step };
                    std::mem::swap(&mut y, &mut w.ynew);
                    sys.project(&mut y);
                    // projection invalidates FSAL, so f is re-evaluated
                    sys.rhs(t, &y, &mut w.k[0]);
                    stats.rhs_evals += 1;
                    let mut fac = err.max(1e-10).powf(-ALPHA) * err_old.powf(BETA) * SAFETY;
                    fac = fac.clamp(0.2, 10.0);
                    if last_rejected {
                        fac = fac.min(1.0);
                    }
                    // a clipped step says little about the controller's own step
                    h = if clipped { h.max(step * fac) } else { step * fac };
                    err_old = err.max(1e-4);
                    last_rejected = false;
                } else {
                    stats.rejected += 1;
                    let fac = (err.powf(-ALPHA) * SAFETY).clamp(0.2, 1.0);
                    h = step * fac;
                    last_rejected = true;
                }
            }
            if observe(idx, t, &y)? == Flow::Stop {
                return Ok((stats, Some(idx)));
            }
        }
        Ok((stats, None))
    }

    fn initial_step_guess<T: Field, S: OdeSystem<T>>(
        &self,
        sys: &S,
        t: f64,
        y: &[T],
        w: &mut Work<T>,
        stats: &mut StepStats,
    ) -> f64 {
        let sc: Vec<f64> = y.iter().map(|v| self.tol.abs + self.tol.rel * v.modulus()).collect();
        let d0 = rms(y.iter().zip(&sc).map(|(v, s)| v.modulus() / s));
        let d1 = rms(w.k[0].iter().zip(&sc).map(|(v, s)| v.modulus() / s));
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        for i in 0..y.len() {
            w.ytmp[i] = y[i] + w.k[0][i] * h0;
        }
        sys.rhs(t + h0, &w.ytmp, &mut w.k[1]);
        stats.rhs_evals += 1;
        let d2 = rms(w.k[1].iter().zip(&w.k[0]).zip(&sc).map(|((a, b), s)| (*a - *b).modulus() / s)) / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1).min(self.h_max)
    }

    /// One trial step; returns the scaled error norm and leaves the candidate in `w.ynew`.
    fn attempt<T: Field, S: OdeSystem<T>>(
        &self,
        sys: &S,
        t: f64,
        y: &[T],
        h: f64,
        w: &mut Work<T>,
        stats: &mut StepStats,
    ) -> f64 {
        let n = y.len();
        let stage = |w: &mut Work<T>, coeffs: &[(usize, f64)]| {
            for i in 0..n {
                let mut acc = y[i];
                for &(s, a) in coeffs {
                    acc += w.k[s][i] * (h * a);
                }
                w.ytmp[i] = acc;
            }
        };
        stage(w, &[(0, A21)]);
        sys.rhs(t + C2 * h, &w.ytmp, &mut w.k[1]);
        stage(w, &[(0, A31), (1, A32)]);
        sys.rhs(t + C3 * h, &w.ytmp, &mut w.k[2]);
        stage(w, &[(0, A41), (1, A42), (2, A43)]);
        sys.rhs(t + C4 * h, &w.ytmp, &mut w.k[3]);
        stage(w, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        sys.rhs(t + C5 * h, &w.ytmp, &mut w.k[4]);
        stage(w, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        sys.rhs(t + h, &w.ytmp, &mut w.k[5]);
        for i in 0..n {
            w.ynew[i] = y[i]
                + (w.k[0][i] * A71 + w.k[2][i] * A73 + w.k[3][i] * A74 + w.k[4][i] * A75 + w.k[5][i] * A76) * h;
        }
        sys.rhs(t + h, &w.ynew, &mut w.k[6]);
        stats.rhs_evals += 6;
        let mut sum = 0.0;
        for i in 0..n {
            let e = (w.k[0][i] * E1 + w.k[2][i] * E3 + w.k[3][i] * E4 + w.k[4][i] * E5 + w.k[5][i] * E6
                + w.k[6][i] * E7)
                * h;
            let sc = self.tol.abs + self.tol.rel * y[i].modulus().max(w.ynew[i].modulus());
            let r = e.modulus() / sc;
            sum += r * r;
        }
        (sum / n as f64).sqrt()
    }
}

fn rms(it: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = it.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    if c == 0 { 0.0 } else { (s / c as f64).sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Harmonic;
    impl OdeSystem<f64> for Harmonic {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    struct Decay(f64);
    impl OdeSystem<C64> for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[C64], dy: &mut [C64]) {
            dy[0] = y[0] * C64::new(-self.0, 2.0);
        }
    }

    #[test]
    fn harmonic_oscillator_to_tolerance() {
        let solver = Dopri5::new(Tolerances::new(1e-11, 1e-13).unwrap());
        let grid: Vec<f64> = (1..=20).map(|i| i as f64 * 0.5).collect();
        let mut worst = 0.0f64;
        solver
            .integrate(&Harmonic, 0.0, &[1.0, 0.0], &grid, |_, t, y| {
                worst = worst.max((y[0] - t.cos()).abs()).max((y[1] + t.sin()).abs());
                Ok(())
            })
            .unwrap();
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn complex_decay_and_exact_grid_times() {
        let solver = Dopri5::new(Tolerances::new(1e-10, 1e-14).unwrap());
        let grid = [0.0, 0.1, 0.1, 1.0, 3.0];
        let mut seen = Vec::new();
        solver
            .integrate(&Decay(0.7), 0.0, &[C64::new(1.0, 0.0)], &grid, |i, t, y| {
                seen.push((i, t));
                let exact = (C64::new(-0.7, 2.0) * t).exp();
                assert!((y[0] - exact).norm() < 1e-9 * exact.norm().max(1e-3));
                Ok(())
            })
            .unwrap();
        assert_eq!(seen.iter().map(|s| s.1).collect::<Vec<_>>(), grid.to_vec());
    }

    #[test]
    fn zero_time_returns_initial_state() {
        let solver = Dopri5::new(Tolerances::new(1e-8, 1e-10).unwrap());
        let y0 = [0.3, -0.2];
        solver
            .integrate(&Harmonic, 0.0, &y0, &[0.0], |_, _, y| {
                assert_eq!(y, &y0);
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn rejects_bad_tolerances_and_grids() {
        assert!(Tolerances::new(0.0, 1e-9).is_err());
        let solver = Dopri5::new(Tolerances::new(1e-8, 1e-10).unwrap());
        assert!(solver.integrate(&Harmonic, 0.0, &[1.0, 0.0], &[1.0, 0.5], |_, _, _| Ok(())).is_err());
    }
}
