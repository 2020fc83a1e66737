//! Freidlin–Wentzell characteristics with chart switching, variational
//! equations and the transported prefactor.

use num_complex::Complex64 as C64;

use super::chart::{chart_to_angle_momenta, chart_to_angles, Chart, PhasePoint, ReducedModel};
use crate::error::{Error, Result};
use crate::integrator::{Dopri5, Flow, OdeSystem, StepStats, Tolerances};

/// |ζ| beyond which a characteristic is moved to the other chart.
pub const SWITCH_RADIUS: f64 = 2.0;

const STATE_DIM: usize = 14;
const ACTION: usize = 4;
const LOG_G: usize = 5;
const VAR: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    pub tol: Tolerances,
    /// Spacing of recorded samples and of chart checks.
    pub sample_dt: f64,
    pub record: bool,
    /// Characteristics whose action exceeds this are abandoned as unreachable.
    pub max_action: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self { tol: Tolerances { rel: 1e-11, abs: 1e-13 }, sample_dt: 0.02, record: true, max_action: f64::INFINITY }
    }
}

/// State of a characteristic at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicSample {
    pub t: f64,
    pub point: PhasePoint,
    /// Accumulated action ∫ d|π|² dt.
    pub action: f64,
    /// ln of the transported prefactor without the |det ∂x/∂p₀|^{−1/2} factor.
    pub log_g: f64,
    /// ∂(x, y)/∂p₀ in the current chart.
    pub dx_dp0: [[f64; 2]; 2],
    /// ∂(p_x, p_y)/∂p₀ in the current chart.
    pub dp_dp0: [[f64; 2]; 2],
}

impl CharacteristicSample {
    pub fn angles(&self) -> (f64, f64) {
        chart_to_angles(self.point.chart, self.point.zeta)
    }

    /// (p_φ, p_θ).
    pub fn angle_momenta(&self) -> (f64, f64) {
        chart_to_angle_momenta(self.point.chart, self.point.zeta, self.point.pi)
    }

    pub fn det_dx_dp0(&self) -> f64 {
        det2(&self.dx_dp0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CharacteristicStatus {
    Completed,
    Failed { t: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Characteristic {
    pub samples: Vec<CharacteristicSample>,
    pub status: CharacteristicStatus,
    pub hamiltonian: f64,
    pub max_hamiltonian_drift: f64,
    pub chart_switches: usize,
    pub steps: StepStats,
}

impl Characteristic {
    pub fn last(&self) -> &CharacteristicSample {
        self.samples.last().expect("characteristic always holds its initial sample")
    }

    pub fn completed(&self) -> bool {
        self.status == CharacteristicStatus::Completed
    }
}

struct ChartSystem<'a> {
    model: &'a ReducedModel,
    chart: Chart,
}

impl OdeSystem<f64> for ChartSystem<'_> {
    fn dim(&self) -> usize {
        STATE_DIM
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let point = PhasePoint::new(self.chart, C64::new(y[0], y[1]), C64::new(y[2], y[3]));
        let (zdot, pdot, sdot) = self.model.flow(&point);
        dy[0] = zdot.re;
        dy[1] = zdot.im;
        dy[2] = pdot.re;
        dy[3] = pdot.im;
        dy[ACTION] = sdot;
        let (z, p) = (point.zeta, point.pi);
        let (_, d1, _) = self.model.diffusion(self.chart, z.norm_sqr());
        let div_a = 2.0 * self.model.drift_prime(self.chart, z).re;
        let grad_d_p = 2.0 * d1 * (z.conj() * p).re;
        let a1_p = (p.conj() * self.model.drift_correction(self.chart, z)).re;
        dy[LOG_G] = -0.5 * div_a - grad_d_p + a1_p;
        let m = self.model.flow_jacobian(&point);
        for c in 0..2 {
            for r in 0..4 {
                dy[VAR + 4 * c + r] = (0..4).map(|k| m[r][k] * y[VAR + 4 * c + k]).sum();
            }
        }
    }
}

pub(crate) fn det2(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn sample_from(t: f64, chart: Chart, y: &[f64]) -> CharacteristicSample {
    let v = |r: usize, c: usize| y[VAR + 4 * c + r];
    CharacteristicSample {
        t,
        point: PhasePoint::new(chart, C64::new(y[0], y[1]), C64::new(y[2], y[3])),
        action: y[ACTION],
        log_g: y[LOG_G],
        dx_dp0: [[v(0, 0), v(0, 1)], [v(1, 0), v(1, 1)]],
        dp_dp0: [[v(2, 0), v(2, 1)], [v(3, 0), v(3, 1)]],
    }
}

fn switch_state(chart: Chart, y: &mut [f64]) -> Result<Chart> {
    let point = PhasePoint::new(chart, C64::new(y[0], y[1]), C64::new(y[2], y[3]));
    let next = point.switched()?;
    let jac = point.switch_jacobian();
    y[0] = next.zeta.re;
    y[1] = next.zeta.im;
    y[2] = next.pi.re;
    y[3] = next.pi.im;
    for c in 0..2 {
        let col: Vec<f64> = (0..4).map(|r| y[VAR + 4 * c + r]).collect();
        for r in 0..4 {
            y[VAR + 4 * c + r] = (0..4).map(|k| jac[r][k] * col[k]).sum();
        }
    }
    // density transforms with |dζ′/dζ|² = |ζ|⁻⁴
    y[LOG_G] += 2.0 * point.zeta.norm().ln();
    Ok(next.chart)
}

/// Integrates Hamilton's equations from `(start, p0)` over [0, T].
///
/// `start.pi` is ignored; `p0` is the initial momentum (p_x, p_y) in the chart of `start`.
pub fn shoot_characteristic(
    model: &ReducedModel,
    start: PhasePoint,
    p0: [f64; 2],
    t_final: f64,
    options: &ShootOptions,
) -> Result<Characteristic> {
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::invalid("t_final", format!("{t_final} must be finite and nonnegative")));
    }
    if !(options.sample_dt > 0.0) {
        return Err(Error::invalid("sample_dt", "must be positive"));
    }
    let n_steps = (t_final / options.sample_dt).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=n_steps).map(|i| t_final * i as f64 / n_steps as f64).collect();

    let mut y = vec![0.0; STATE_DIM];
    y[0] = start.zeta.re;
    y[1] = start.zeta.im;
    y[2] = p0[0];
    y[3] = p0[1];
    y[VAR + 2] = 1.0;
    y[VAR + 4 + 3] = 1.0;
    let mut chart = start.chart;
    let h0 = model.hamiltonian(&PhasePoint::new(chart, start.zeta, C64::new(p0[0], p0[1])));

    let mut solver = Dopri5::new(options.tol);
    solver.max_steps = 200_000;
    let mut samples = Vec::new();
    let mut max_drift: f64 = 0.0;
    let mut switches = 0;
    let mut steps = StepStats::default();
    let mut first = 0;
    let mut t = 0.0;
    let mut status = CharacteristicStatus::Completed;
    let mut last = sample_from(0.0, chart, &y);
    while first < grid.len() {
        let sys = ChartSystem { model, chart };
        let mut stop_state: Option<Vec<f64>> = None;
        let run = solver.integrate_until(&sys, t, &y, &grid[first..], |idx, ti, yi| {
            let s = sample_from(ti, chart, yi);
            max_drift = max_drift.max((model.hamiltonian(&s.point) - h0).abs());
            if options.record || first + idx + 1 == grid.len() {
                samples.push(s);
            }
            last = s;
            if s.action > options.max_action {
                return Err(Error::Integration { t: ti, reason: format!("action exceeded {}", options.max_action) });
            }
            if s.point.zeta.norm() > SWITCH_RADIUS {
                stop_state = Some(yi.to_vec());
                return Ok(Flow::Stop);
            }
            Ok(Flow::Continue)
        });
        match run {
            Ok((stats, stopped)) => {
                steps.accepted += stats.accepted;
                steps.rejected += stats.rejected;
                steps.rhs_evals += stats.rhs_evals;
                match (stopped, stop_state) {
                    (Some(idx), Some(state)) => {
                        y = state;
                        t = grid[first + idx];
                        chart = switch_state(chart, &mut y)?;
                        switches += 1;
                        first += idx + 1;
                    }
                    _ => break,
                }
            }
            Err(err) => {
                status = CharacteristicStatus::Failed { t: last.t, reason: err.to_string() };
                if samples.last().map(|s| s.t) != Some(last.t) {
                    samples.push(last);
                }
                break;
            }
        }
    }
    if !options.record && samples.last().map(|s| s.t) != Some(last.t) {
        samples.push(last);
    }
    Ok(Characteristic {
        samples,
        status,
        hamiltonian: h0,
        max_hamiltonian_drift: max_drift,
        chart_switches: switches,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model() -> ReducedModel {
        ReducedModel::new(1.0, 1.2).unwrap()
    }

    fn north_pole() -> PhasePoint {
        PhasePoint::new(Chart::North, C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    #[test]
    fn zero_momentum_follows_mean_field_through_the_south_pole() {
        let m = model();
        let ch = shoot_characteristic(&m, north_pole(), [0.0, 0.0], 12.0, &ShootOptions::default()).unwrap();
        assert!(ch.completed());
        assert!(ch.chart_switches >= 2);
        assert_eq!(ch.last().action, 0.0);
        // ψ̇ = ω − (ω/λ) sin ψ on the great circle s = (0, −sin ψ, cos ψ)
        let period = 2.0 * std::f64::consts::PI / (1.0 - 1.0 / (1.2f64 * 1.2)).sqrt();
        let s_end = ch.samples.iter().min_by(|a, b| (a.t - period).abs().total_cmp(&(b.t - period).abs())).unwrap();
        let b = s_end.point.bloch();
        assert!(b[2] > 1.0 - 1e-3, "{b:?} at {}", s_end.t);
    }

    #[test]
    fn hamiltonian_is_conserved_across_switches() {
        let m = model();
        let ch = shoot_characteristic(&m, north_pole(), [0.02, -0.1], 10.0, &ShootOptions::default()).unwrap();
        assert!(ch.completed(), "{:?}", ch.status);
        assert!(ch.chart_switches >= 2);
        assert!(ch.max_hamiltonian_drift < 1e-8, "{}", ch.max_hamiltonian_drift);
        assert!(ch.samples.windows(2).all(|w| w[1].action >= w[0].action));
    }

    #[test]
    fn variational_matrix_matches_finite_differences() {
        let m = model();
        let opts = ShootOptions { record: false, ..Default::default() };
        let t = 6.0;
        let p0 = [0.3, 0.8];
        let base = shoot_characteristic(&m, north_pole(), p0, t, &opts).unwrap();
        let end = *base.last();
        let h = 1e-6;
        for j in 0..2 {
            let mut a = p0;
            let mut b = p0;
            a[j] += h;
            b[j] -= h;
            let ea = *shoot_characteristic(&m, north_pole(), a, t, &opts).unwrap().last();
            let eb = *shoot_characteristic(&m, north_pole(), b, t, &opts).unwrap().last();
            assert_eq!(ea.point.chart, end.point.chart);
            let dz = (ea.point.zeta - eb.point.zeta) / (2.0 * h);
            let dp = (ea.point.pi - eb.point.pi) / (2.0 * h);
            assert_abs_diff_eq!(end.dx_dp0[0][j], dz.re, epsilon = 1e-5 * (1.0 + dz.norm()));
            assert_abs_diff_eq!(end.dx_dp0[1][j], dz.im, epsilon = 1e-5 * (1.0 + dz.norm()));
            assert_abs_diff_eq!(end.dp_dp0[0][j], dp.re, epsilon = 1e-5 * (1.0 + dp.norm()));
            assert_abs_diff_eq!(end.dp_dp0[1][j], dp.im, epsilon = 1e-5 * (1.0 + dp.norm()));
        }
    }

    #[test]
    fn rejects_negative_time() {
        assert!(shoot_characteristic(&model(), north_pole(), [0.0, 0.0], -1.0, &ShootOptions::default()).is_err());
    }
}
