//! Large-N theory of the bad-cavity model: mean-field flow, the Fokker–Planck
//! equation of the spin P-function, weak-noise characteristics, the landscape
//! K = S + W and the asymptotic rate functions it determines.

mod asymptotic;
mod chart;
mod characteristic;
mod landscape;

pub use asymptotic::{
    asymptotic_rate, fan_minimum_rate, finite_n_rate_correction, fock_cusp_line, AsymptoticRate, BranchSample,
    CorrectedRate, CriticalTime, CuspPoint, PrefactorMode, Seeding, TrackOptions, TrackedBranch, TIE_TOL,
};
pub use chart::{
    bloch_to_chart, chart_to_angle_momenta, chart_to_angles, chart_to_bloch, point_to_chart, Chart,
    LatitudeOverlap, PhasePoint, ReducedModel,
};
pub use landscape::{
    evaluate_fan, k_landscape, minimize_k, solve_stationary, symmetry_cut, FanSamples, GridSpec, KLandscape, KPoint,
    KProblem, LandscapeMinimum, LandscapeOptions, MomentumFan, NewtonOptions, SymmetryCut, ACTION_CAP,
};
pub use characteristic::{
    shoot_characteristic, Characteristic, CharacteristicSample, CharacteristicStatus, ShootOptions, SWITCH_RADIUS,
};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::spin_algebra::SpinCoherentPoint;

/// Normalized collective spin ⟨J⟩/(N/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl BlochVector {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Self {
        Self { sx, sy, sz }
    }

    pub fn dark() -> Self {
        Self::new(0.0, 0.0, 1.0)
    }

    pub fn norm(&self) -> f64 {
        (self.sx * self.sx + self.sy * self.sy + self.sz * self.sz).sqrt()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.sx, self.sy, self.sz]
    }

    pub fn from_point(p: SpinCoherentPoint) -> Self {
        let [sx, sy, sz] = p.bloch();
        Self::new(sx, sy, sz)
    }
}

/// Leading-order Heisenberg equations of the bad-cavity model.
pub fn mean_field_rhs(s: BlochVector, model: &ReducedModel) -> BlochVector {
    let (w, k) = (model.omega, model.kappa());
    BlochVector::new(
        -k * s.sz * s.sx,
        -w * s.sz - k * s.sz * s.sy,
        w * s.sy + k * (s.sx * s.sx + s.sy * s.sy),
    )
}

/// Drift and diffusion of the P-function Fokker–Planck equation in (φ, θ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpCoefficients {
    /// (a_φ, a_θ).
    pub drift: [f64; 2],
    /// D in the (φ, θ) basis.
    pub diffusion: [[f64; 2]; 2],
}

/// Distance from a pole below which (φ, θ) coefficients are refused.
pub const POLE_EXCLUSION: f64 = 1e-6;

/// Fokker–Planck coefficients at `point`. With `n_atoms = Some(N)` the drift
/// includes the O(1/N) Itô terms; `None` gives the N → ∞ drift.
pub fn fp_coefficients(point: SpinCoherentPoint, model: &ReducedModel, n_atoms: Option<usize>) -> Result<FpCoefficients> {
    let theta = point.theta();
    if theta < POLE_EXCLUSION || theta > std::f64::consts::PI - POLE_EXCLUSION {
        return Err(Error::ChartSingularity(format!("θ = {theta} is within {POLE_EXCLUSION} of a pole")));
    }
    let chart = Chart::North;
    let z = point_to_chart(chart, point);
    let (phi, half) = (point.phi(), 0.5 * theta);
    let e = C64::from_polar(1.0, phi);
    let dz_dtheta = 0.5 / (half.cos() * half.cos()) * e;
    let dz_dphi = C64::new(0.0, 1.0) * z;
    let project = |v: C64| {
        [
            (dz_dphi.conj() * v).re / dz_dphi.norm_sqr(),
            (dz_dtheta.conj() * v).re / dz_dtheta.norm_sqr(),
        ]
    };
    let mut drift = project(model.drift(chart, z));
    if let Some(n) = n_atoms {
        let n = n as f64;
        let a1 = project(model.drift_correction(chart, z));
        // Itô term d·Δθ of the chart change; φ = arg z is harmonic
        let r = z.norm();
        let u = r * r;
        let (d, _, _) = model.diffusion(chart, u);
        let lap_theta = 2.0 * (1.0 - u) / (r * (1.0 + u) * (1.0 + u));
        drift[0] += a1[0] / n;
        drift[1] += (a1[1] + d * lap_theta) / n;
    }
    let k = model.kappa();
    let d_theta = 2.0 * k * half.sin().powi(2);
    let d_phi = 0.5 * k / half.cos().powi(2);
    Ok(FpCoefficients { drift, diffusion: [[d_phi, 0.0], [0.0, d_theta]] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dark_pole_rotates_without_collective_term() {
        let m = ReducedModel::new(1.0, 1.2).unwrap();
        let d = mean_field_rhs(BlochVector::dark(), &m);
        assert_eq!(d.as_array(), [0.0, -1.0, 0.0]);
    }

    #[test]
    fn drift_matches_mean_field_on_the_sphere() {
        let m = ReducedModel::new(1.0, 1.2).unwrap();
        for (phi, theta) in [(0.3, 0.9), (2.0, 2.5), (5.0, 1.2), (1.0, 0.01)] {
            let p = SpinCoherentPoint::new(phi, theta).unwrap();
            let c = fp_coefficients(p, &m, None).unwrap();
            let (st, ct, sp, cp) = (theta.sin(), theta.cos(), phi.sin(), phi.cos());
            let ds_dphi = [-st * sp, st * cp, 0.0];
            let ds_dtheta = [ct * cp, ct * sp, -st];
            let mf = mean_field_rhs(BlochVector::from_point(p), &m).as_array();
            for i in 0..3 {
                assert_abs_diff_eq!(c.drift[0] * ds_dphi[i] + c.drift[1] * ds_dtheta[i], mf[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pole_is_rejected_and_pure_drive_has_no_diffusion() {
        let m = ReducedModel::new(1.0, 1.2).unwrap();
        assert!(fp_coefficients(SpinCoherentPoint::new(0.0, 0.0).unwrap(), &m, None).is_err());
        let free = ReducedModel::new(1.0, f64::INFINITY).unwrap();
        let c = fp_coefficients(SpinCoherentPoint::new(0.4, 1.0).unwrap(), &free, Some(10)).unwrap();
        assert_eq!(c.diffusion, [[0.0, 0.0], [0.0, 0.0]]);
    }
}
