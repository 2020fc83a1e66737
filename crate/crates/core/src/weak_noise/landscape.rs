//! The exponent K = S + W on the Lagrangian manifold of characteristics
//! leaving a fixed initial point, and its projection onto the sphere.

use std::collections::HashMap;
use std::f64::consts::PI;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::chart::{bloch_to_chart, chart_to_angles, LatitudeOverlap, PhasePoint, ReducedModel};
use super::characteristic::{det2, shoot_characteristic, CharacteristicSample, ShootOptions};
use crate::error::{Error, Result};
use crate::integrator::Tolerances;
use crate::spin_algebra::SpinCoherentPoint;

/// Characteristics are abandoned once their action exceeds this.
pub const ACTION_CAP: f64 = 50.0;

/// Quench data: model, initial point (delta-peaked P-function) and overlap exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KProblem {
    pub model: ReducedModel,
    pub start: PhasePoint,
    pub overlap: LatitudeOverlap,
    pub shoot: ShootOptions,
}

impl KProblem {
    pub fn new(model: ReducedModel, x0: SpinCoherentPoint, overlap: LatitudeOverlap) -> Self {
        let (chart, zeta) = bloch_to_chart(x0.bloch());
        Self {
            model,
            start: PhasePoint::new(chart, zeta, C64::new(0.0, 0.0)),
            overlap,
            shoot: ShootOptions { record: false, max_action: ACTION_CAP, ..ShootOptions::default() },
        }
    }

    /// Initial state |m = +N/2⟩ and the Loschmidt overlap.
    pub fn dark_state_quench(model: ReducedModel) -> Self {
        Self::new(model, SpinCoherentPoint::new(0.0, 0.0).expect("pole is valid"), LatitudeOverlap::dark())
    }

    pub fn with_overlap(mut self, overlap: LatitudeOverlap) -> Self {
        self.overlap = overlap;
        self
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.shoot.tol = tol;
        self
    }

    /// Shoots from the initial point with momentum `p0` and evaluates K at the endpoint.
    pub fn evaluate(&self, p0: [f64; 2], t: f64) -> KPoint {
        let failed = |end: Option<CharacteristicSample>| KPoint {
            t,
            p0,
            end,
            completed: false,
            hamiltonian: f64::NAN,
            action: f64::INFINITY,
            w: f64::INFINITY,
            k: f64::INFINITY,
            residual: [f64::NAN; 2],
            residual_jacobian: [[f64::NAN; 2]; 2],
            hess_w: [[f64::NAN; 2]; 2],
        };
        let Ok(ch) = shoot_characteristic(&self.model, self.start, p0, t, &self.shoot) else {
            return failed(None);
        };
        let end = *ch.last();
        if !ch.completed() {
            return failed(Some(end));
        }
        let (w, grad, hess_w) = self.overlap.derivatives(end.point.chart, end.point.zeta);
        if !w.is_finite() {
            return failed(Some(end));
        }
        let r = end.point.pi + grad;
        let mut jac = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                jac[i][j] = end.dp_dp0[i][j] + (0..2).map(|k| hess_w[i][k] * end.dx_dp0[k][j]).sum::<f64>();
            }
        }
        KPoint {
            t,
            p0,
            end: Some(end),
            completed: true,
            hamiltonian: ch.hamiltonian,
            action: end.action,
            w,
            k: end.action + w,
            residual: [r.re, r.im],
            residual_jacobian: jac,
            hess_w,
        }
    }
}

/// K and its derivatives along one characteristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KPoint {
    pub t: f64,
    pub p0: [f64; 2],
    pub end: Option<CharacteristicSample>,
    pub completed: bool,
    pub hamiltonian: f64,
    pub action: f64,
    pub w: f64,
    pub k: f64,
    /// p(T) + ∇W(x(T)); zero at stationary points of K.
    pub residual: [f64; 2],
    /// ∂ residual / ∂p₀.
    pub residual_jacobian: [[f64; 2]; 2],
    pub hess_w: [[f64; 2]; 2],
}

fn inv2(m: &[[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let d = det2(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    Some([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]])
}

impl KPoint {
    pub fn residual_norm(&self) -> f64 {
        self.residual[0].hypot(self.residual[1])
    }

    pub fn endpoint(&self) -> Option<PhasePoint> {
        self.end.map(|e| e.point)
    }

    /// (φ, θ) of the endpoint.
    pub fn angles(&self) -> Option<(f64, f64)> {
        self.end.map(|e| chart_to_angles(e.point.chart, e.point.zeta))
    }

    pub fn bloch(&self) -> Option<[f64; 3]> {
        self.end.map(|e| e.point.bloch())
    }

    /// Hessian of K = S + W in the chart of the endpoint, with Hess S = (∂p/∂p₀)(∂x/∂p₀)⁻¹.
    pub fn hessian_chart(&self) -> Option<[[f64; 2]; 2]> {
        let end = self.end?;
        let inv = inv2(&end.dx_dp0)?;
        let mut h = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] = (0..2).map(|k| end.dp_dp0[i][k] * inv[k][j]).sum::<f64>() + self.hess_w[i][j];
            }
        }
        let off = 0.5 * (h[0][1] + h[1][0]);
        h[0][1] = off;
        h[1][0] = off;
        Some(h)
    }

    pub fn is_minimum(&self) -> bool {
        self.hessian_chart().is_some_and(|h| h[0][0] > 0.0 && det2(&h) > 0.0)
    }

    /// det K″ with respect to the round metric of the unit sphere.
    pub fn det_hessian_sphere(&self) -> Option<f64> {
        let h = self.hessian_chart()?;
        let u = self.end?.point.zeta.norm_sqr();
        let metric = 4.0 / ((1.0 + u) * (1.0 + u));
        Some(det2(&h) / (metric * metric))
    }

    /// ln of the Gaussian-integrated prefactor with the transported F:
    /// ln[e^G / √|det(∂p/∂p₀ + W″ ∂x/∂p₀)|].
    pub fn log_transported_prefactor(&self) -> Option<f64> {
        let end = self.end?;
        let d = det2(&self.residual_jacobian).abs();
        (d > 0.0).then(|| end.log_g - 0.5 * d.ln())
    }
}

/// Initial momenta on a log-radial × angular lattice around p₀ = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumFan {
    pub radii: Vec<f64>,
    pub n_angles: usize,
}

impl MomentumFan {
    pub fn log_radial(r_min: f64, r_max: f64, n_radii: usize, n_angles: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min) || n_radii < 2 || n_angles < 3 {
            return Err(Error::invalid("fan", "need 0 < r_min < r_max, ≥ 2 radii and ≥ 3 angles"));
        }
        let (a, b) = (r_min.ln(), r_max.ln());
        let radii = (0..n_radii).map(|i| (a + (b - a) * i as f64 / (n_radii - 1) as f64).exp()).collect();
        Ok(Self { radii, n_angles })
    }

    pub fn p0(&self, ir: usize, ia: usize) -> [f64; 2] {
        let a = 2.0 * PI * ia as f64 / self.n_angles as f64;
        [self.radii[ir] * a.cos(), self.radii[ir] * a.sin()]
    }

    pub fn len(&self) -> usize {
        self.radii.len() * self.n_angles + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for MomentumFan {
    fn default() -> Self {
        Self::log_radial(1e-4, 10.0, 33, 32).expect("valid default fan")
    }
}

/// K on every momentum of a fan.
#[derive(Debug, Clone)]
pub struct FanSamples {
    pub fan: MomentumFan,
    pub center: KPoint,
    /// Ring-major: index ir * n_angles + ia.
    pub points: Vec<KPoint>,
}

impl FanSamples {
    pub fn get(&self, ir: usize, ia: usize) -> &KPoint {
        &self.points[ir * self.fan.n_angles + ia % self.fan.n_angles]
    }

    /// Lattice points whose K is below all of their (up to eight) neighbours.
    pub fn local_minima(&self) -> Vec<KPoint> {
        let (nr, na) = (self.fan.radii.len(), self.fan.n_angles);
        let mut out = Vec::new();
        if (0..na).all(|ia| self.get(0, ia).k > self.center.k) && self.center.k.is_finite() {
            out.push(self.center);
        }
        for ir in 0..nr {
            for ia in 0..na {
                let k = self.get(ir, ia).k;
                if !k.is_finite() {
                    continue;
                }
                let mut is_min = true;
                for dr in -1i64..=1 {
                    for da in -1i64..=1 {
                        if dr == 0 && da == 0 {
                            continue;
                        }
                        let r = ir as i64 + dr;
                        if r >= nr as i64 {
                            continue;
                        }
                        let nk = if r < 0 {
                            self.center.k
                        } else {
                            self.get(r as usize, (ia as i64 + da).rem_euclid(na as i64) as usize).k
                        };
                        if nk <= k {
                            is_min = false;
                        }
                    }
                }
                if is_min {
                    out.push(*self.get(ir, ia));
                }
            }
        }
        out
    }
}

pub fn evaluate_fan(problem: &KProblem, fan: &MomentumFan, t: f64) -> FanSamples {
    let na = fan.n_angles;
    let points = (0..fan.radii.len() * na)
        .into_par_iter()
        .map(|i| problem.evaluate(fan.p0(i / na, i % na), t))
        .collect();
    FanSamples { fan: fan.clone(), center: problem.evaluate([0.0, 0.0], t), points }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 40 }
    }
}

/// Newton iteration on the transversality condition p(T) = −∇W(x(T)).
/// Converges to any stationary point of K; callers classify with [`KPoint::is_minimum`].
pub fn solve_stationary(problem: &KProblem, t: f64, seed: [f64; 2], options: &NewtonOptions) -> Option<KPoint> {
    let mut cur = problem.evaluate(seed, t);
    for _ in 0..options.max_iter {
        if !cur.completed {
            return None;
        }
        let norm = cur.residual_norm();
        let scale = 1.0 + cur.end.map_or(0.0, |e| e.point.pi.norm());
        if norm <= options.tol * scale {
            return Some(cur);
        }
        let inv = inv2(&cur.residual_jacobian)?;
        let step = [
            -(inv[0][0] * cur.residual[0] + inv[0][1] * cur.residual[1]),
            -(inv[1][0] * cur.residual[0] + inv[1][1] * cur.residual[1]),
        ];
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial = problem.evaluate([cur.p0[0] + lambda * step[0], cur.p0[1] + lambda * step[1]], t);
            if trial.completed && trial.residual_norm() < (1.0 - 1e-4 * lambda) * norm {
                accepted = Some(trial);
                break;
            }
            lambda *= 0.5;
        }
        cur = accepted?;
    }
    (cur.completed && cur.residual_norm() <= 1e3 * options.tol * (1.0 + cur.end.map_or(0.0, |e| e.point.pi.norm())))
        .then_some(cur)
}

struct KCost<'a> {
    problem: &'a KProblem,
    t: f64,
}

impl CostFunction for KCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.problem.evaluate([p[0], p[1]], self.t).k)
    }
}

/// Derivative-free minimization of K over initial momenta (Nelder–Mead).
pub fn minimize_k(problem: &KProblem, t: f64, seed: [f64; 2], initial_size: f64) -> Option<KPoint> {
    let h = initial_size.max(1e-6);
    let simplex = vec![seed.to_vec(), vec![seed[0] + h, seed[1]], vec![seed[0], seed[1] + h]];
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-14).ok()?;
    let res = Executor::new(KCost { problem, t }, solver).configure(|s| s.max_iters(600)).run().ok()?;
    let best = res.state().get_best_param()?;
    let kp = problem.evaluate([best[0], best[1]], t);
    kp.completed.then_some(kp)
}

/// Regular (φ, θ) grid including both poles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub n_phi: usize,
    pub n_theta: usize,
}

impl GridSpec {
    pub fn phi(&self, i: usize) -> f64 {
        2.0 * PI * i as f64 / self.n_phi as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        PI * j as f64 / (self.n_theta - 1) as f64
    }

    fn validate(&self) -> Result<()> {
        if self.n_phi < 4 || self.n_theta < 3 {
            return Err(Error::invalid("grid", "need n_phi ≥ 4 and n_theta ≥ 3"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapeMinimum {
    pub phi: f64,
    pub theta: f64,
    pub k: f64,
    pub s: f64,
    pub w: f64,
    pub det_hessian_chart: f64,
    pub det_hessian_sphere: f64,
    pub p0: [f64; 2],
    pub point: KPoint,
}

/// S, W and K on a (φ, θ) grid at one time. Unreached cells hold `None`.
#[derive(Debug, Clone)]
pub struct KLandscape {
    pub t: f64,
    pub grid: GridSpec,
    /// Index j * n_phi + i for (φ_i, θ_j).
    pub s: Vec<Option<f64>>,
    pub w: Vec<f64>,
    pub k: Vec<Option<f64>>,
    pub minima: Vec<LandscapeMinimum>,
    /// Endpoint of the zero-momentum characteristic, where S = 0.
    pub mean_field_endpoint: (f64, f64),
    /// S interpolated at the mean-field endpoint.
    pub s_at_mean_field: f64,
    /// Number of characteristics shot, including refinement.
    pub characteristics: usize,
}

impl KLandscape {
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.grid.n_phi + i
    }

    pub fn min_s(&self) -> f64 {
        self.s.iter().flatten().copied().fold(self.s_at_mean_field, f64::min)
    }

    pub fn missing(&self) -> usize {
        self.s.iter().filter(|v| v.is_none()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapeOptions {
    /// Triangles whose endpoints span more than this angle are subdivided.
    pub max_span: f64,
    pub max_depth: usize,
}

impl Default for LandscapeOptions {
    fn default() -> Self {
        Self { max_span: 0.08, max_depth: 3 }
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Barycentric coordinates of the gnomonic projection of `x` onto the plane of the triangle.
fn barycentric(tri: &[[f64; 3]; 3], c: [f64; 3], x: [f64; 3]) -> Option<[f64; 3]> {
    let proj = |v: [f64; 3]| {
        let s = dot(v, c);
        [v[0] / s, v[1] / s, v[2] / s]
    };
    let e1 = normalize(if c[0].abs() < 0.9 { cross(c, [1.0, 0.0, 0.0]) } else { cross(c, [0.0, 1.0, 0.0]) });
    let e2 = cross(c, e1);
    let flat = |v: [f64; 3]| {
        let q = proj(v);
        (dot(q, e1), dot(q, e2))
    };
    let (a, b, d) = (flat(tri[0]), flat(tri[1]), flat(tri[2]));
    let p = flat(x);
    let det = (b.0 - a.0) * (d.1 - a.1) - (d.0 - a.0) * (b.1 - a.1);
    if det.abs() < 1e-300 {
        return None;
    }
    let l1 = ((p.0 - a.0) * (d.1 - a.1) - (d.0 - a.0) * (p.1 - a.1)) / det;
    let l2 = ((b.0 - a.0) * (p.1 - a.1) - (p.0 - a.0) * (b.1 - a.1)) / det;
    Some([1.0 - l1 - l2, l1, l2])
}

struct Rasterizer<'a> {
    grid: GridSpec,
    nodes: Vec<[f64; 3]>,
    s: Vec<f64>,
    seed: Vec<[f64; 2]>,
    mean_field: [f64; 3],
    s_mean_field: f64,
    options: &'a LandscapeOptions,
}

impl Rasterizer<'_> {
    fn add(&mut self, tri: [&KPoint; 3]) {
        let b = [tri[0].bloch().unwrap(), tri[1].bloch().unwrap(), tri[2].bloch().unwrap()];
        let c = normalize([b[0][0] + b[1][0] + b[2][0], b[0][1] + b[1][1] + b[2][1], b[0][2] + b[1][2] + b[2][2]]);
        let span = b.iter().map(|v| dot(*v, c).clamp(-1.0, 1.0).acos()).fold(0.0, f64::max);
        if span > 4.0 * self.options.max_span {
            return;
        }
        let interp = |l: [f64; 3]| (0..3).map(|i| l[i] * tri[i].action).sum::<f64>();
        let seed = |l: [f64; 3]| [0, 1].map(|c| (0..3).map(|i| l[i] * tri[i].p0[c]).sum::<f64>());
        if let Some(l) = barycentric(&b, c, self.mean_field) {
            if dot(self.mean_field, c) > 0.0 && l.iter().all(|&v| v >= -1e-12) {
                self.s_mean_field = self.s_mean_field.min(interp(l).max(0.0));
            }
        }
        let cos_span = (span + 1e-9).min(PI).cos();
        let theta_c = c[2].clamp(-1.0, 1.0).acos();
        let nt = self.grid.n_theta;
        let dtheta = PI / (nt - 1) as f64;
        let j_lo = ((theta_c - span) / dtheta).floor().max(0.0) as usize;
        let j_hi = (((theta_c + span) / dtheta).ceil() as usize).min(nt - 1);
        for j in j_lo..=j_hi {
            for i in 0..self.grid.n_phi {
                let idx = j * self.grid.n_phi + i;
                let x = self.nodes[idx];
                if dot(x, c) < cos_span {
                    continue;
                }
                if let Some(l) = barycentric(&b, c, x) {
                    if l.iter().all(|&v| v >= -1e-12) {
                        let s = interp(l).max(0.0);
                        if s < self.s[idx] {
                            self.s[idx] = s;
                            self.seed[idx] = seed(l);
                        }
                    }
                }
            }
        }
    }
}

struct PointCache<'a> {
    problem: &'a KProblem,
    t: f64,
    map: HashMap<[u64; 2], KPoint>,
}

impl PointCache<'_> {
    fn get(&mut self, p0: [f64; 2]) -> KPoint {
        let key = [p0[0].to_bits(), p0[1].to_bits()];
        let (problem, t) = (self.problem, self.t);
        *self.map.entry(key).or_insert_with(|| problem.evaluate(p0, t))
    }
}

/// Landscape K = S + W at time `t`: shoots the fan, subdivides triangles of the
/// Lagrangian manifold whose images are large, and keeps on every grid node the
/// smallest interpolated action over all triangles covering it (the fold minimum).
pub fn k_landscape(
    problem: &KProblem,
    t: f64,
    fan: &MomentumFan,
    grid: GridSpec,
    options: &LandscapeOptions,
) -> Result<KLandscape> {
    grid.validate()?;
    if !(t > 0.0) {
        return Err(Error::invalid("t", "landscapes are defined for t > 0"));
    }
    let samples = evaluate_fan(problem, fan, t);
    let mut cache = PointCache { problem, t, map: HashMap::new() };
    cache.map.insert([0f64.to_bits(), 0f64.to_bits()], samples.center);
    for p in &samples.points {
        cache.map.insert([p.p0[0].to_bits(), p.p0[1].to_bits()], *p);
    }
    let mut triangles: Vec<[[f64; 2]; 3]> = Vec::new();
    let na = fan.n_angles;
    for ia in 0..na {
        triangles.push([[0.0, 0.0], fan.p0(0, ia), fan.p0(0, (ia + 1) % na)]);
        for ir in 0..fan.radii.len() - 1 {
            let (a, b) = (fan.p0(ir, ia), fan.p0(ir, (ia + 1) % na));
            let (c, d) = (fan.p0(ir + 1, ia), fan.p0(ir + 1, (ia + 1) % na));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    let nodes: Vec<[f64; 3]> = (0..grid.n_theta)
        .flat_map(|j| (0..grid.n_phi).map(move |i| (i, j)))
        .map(|(i, j)| SpinCoherentPoint::new(grid.phi(i), grid.theta(j)).expect("grid point").bloch())
        .collect();
    let mf = samples.center.bloch().ok_or_else(|| Error::invalid("t", "mean-field characteristic failed"))?;
    let mut raster = Rasterizer {
        grid,
        s: vec![f64::INFINITY; nodes.len()],
        seed: vec![[0.0; 2]; nodes.len()],
        nodes,
        mean_field: mf,
        s_mean_field: f64::INFINITY,
        options,
    };
    let mut stack: Vec<([[f64; 2]; 3], usize)> = triangles.into_iter().map(|t| (t, 0)).collect();
    while let Some((tri, depth)) = stack.pop() {
        let pts = tri.map(|p| cache.get(p));
        if pts.iter().any(|p| !p.completed) {
            continue;
        }
        let b = pts.map(|p| p.bloch().unwrap());
        let span = (0..3)
            .map(|i| dot(b[i], b[(i + 1) % 3]).clamp(-1.0, 1.0).acos())
            .fold(0.0, f64::max);
        let dets = pts.map(|p| p.end.unwrap().det_dx_dp0());
        let fold = dets.iter().any(|d| d.signum() != dets[0].signum());
        if depth < options.max_depth && (span > options.max_span || fold) {
            let mid = |a: [f64; 2], b: [f64; 2]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let (m01, m12, m20) = (mid(tri[0], tri[1]), mid(tri[1], tri[2]), mid(tri[2], tri[0]));
            // evaluate the new vertices in parallel before descending
            let fresh: Vec<[f64; 2]> = [m01, m12, m20]
                .into_iter()
                .filter(|p| !cache.map.contains_key(&[p[0].to_bits(), p[1].to_bits()]))
                .collect();
            let evaluated: Vec<KPoint> = fresh.par_iter().map(|p| problem.evaluate(*p, t)).collect();
            for kp in evaluated {
                cache.map.insert([kp.p0[0].to_bits(), kp.p0[1].to_bits()], kp);
            }
            for sub in [[tri[0], m01, m20], [m01, tri[1], m12], [m20, m12, tri[2]], [m01, m12, m20]] {
                stack.push((sub, depth + 1));
            }
            continue;
        }
        raster.add([&pts[0], &pts[1], &pts[2]]);
    }
    let n = raster.nodes.len();
    let mut w = vec![0.0; n];
    let mut s = vec![None; n];
    let mut k = vec![None; n];
    for idx in 0..n {
        let (chart, zeta) = bloch_to_chart(raster.nodes[idx]);
        w[idx] = problem.overlap.value(chart, zeta);
        if raster.s[idx].is_finite() {
            s[idx] = Some(raster.s[idx]);
            k[idx] = Some(raster.s[idx] + w[idx]);
        }
    }
    let minima = landscape_minima(problem, t, &grid, &k, &raster.seed);
    let (mf_chart, mf_zeta) = bloch_to_chart(mf);
    let s_at_mean_field = if raster.s_mean_field.is_finite() { raster.s_mean_field } else { 0.0 };
    Ok(KLandscape {
        t,
        grid,
        s,
        w,
        k,
        minima,
        mean_field_endpoint: chart_to_angles(mf_chart, mf_zeta),
        s_at_mean_field,
        characteristics: cache.map.len(),
    })
}

fn landscape_minima(
    problem: &KProblem,
    t: f64,
    grid: &GridSpec,
    k: &[Option<f64>],
    seed: &[[f64; 2]],
) -> Vec<LandscapeMinimum> {
    let (np, nt) = (grid.n_phi, grid.n_theta);
    let mut candidates = Vec::new();
    for j in 1..nt - 1 {
        for i in 0..np {
            let Some(v) = k[j * np + i] else { continue };
            let mut is_min = true;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let jj = (j as i64 + dj) as usize;
                    let ii = (i as i64 + di).rem_euclid(np as i64) as usize;
                    if let Some(nv) = k[jj * np + ii] {
                        if nv < v {
                            is_min = false;
                        }
                    }
                }
            }
            if is_min {
                candidates.push(seed[j * np + i]);
            }
        }
    }
    let polished: Vec<KPoint> = candidates
        .par_iter()
        .filter_map(|s0| {
            let size = 0.05 * (s0[0].hypot(s0[1])).max(1e-3);
            minimize_k(problem, t, *s0, size)
        })
        .collect();
    let mut out: Vec<LandscapeMinimum> = Vec::new();
    for kp in polished {
        if !kp.is_minimum() {
            continue;
        }
        let b = kp.bloch().unwrap();
        if out.iter().any(|m| dot(m.point.bloch().unwrap(), b) > 1.0 - 1e-8) {
            continue;
        }
        let (phi, theta) = kp.angles().unwrap();
        let h = kp.hessian_chart().unwrap();
        out.push(LandscapeMinimum {
            phi,
            theta,
            k: kp.k,
            s: kp.action,
            w: kp.w,
            det_hessian_chart: det2(&h),
            det_hessian_sphere: kp.det_hessian_sphere().unwrap(),
            p0: kp.p0,
            point: kp,
        });
    }
    out.sort_by(|a, b| a.k.total_cmp(&b.k));
    out
}

/// K restricted to the great circle s_x = 0 through the initial pole.
#[derive(Debug, Clone)]
pub struct SymmetryCut {
    pub t: f64,
    /// Angle along the circle, s = (0, −sin ψ, cos ψ), ψ ∈ (−π, π].
    pub psi: Vec<f64>,
    pub s: Vec<Option<f64>>,
    pub w: Vec<f64>,
    pub k: Vec<Option<f64>>,
}

pub fn cut_point(psi: f64) -> [f64; 3] {
    [0.0, -psi.sin(), psi.cos()]
}

fn cut_angle(b: [f64; 3]) -> f64 {
    (-b[1]).atan2(b[2])
}

impl SymmetryCut {
    /// Interior local minima of `values` along the (periodic) cut.
    pub fn local_minima_of(values: &[Option<f64>]) -> Vec<usize> {
        let n = values.len();
        (0..n)
            .filter(|&i| {
                let Some(v) = values[i] else { return false };
                let l = values[(i + n - 1) % n];
                let r = values[(i + 1) % n];
                l.is_some_and(|l| v < l) && r.is_some_and(|r| v <= r)
            })
            .collect()
    }

    pub fn k_minima(&self) -> Vec<usize> {
        Self::local_minima_of(&self.k)
    }

    pub fn s_minima(&self) -> Vec<usize> {
        Self::local_minima_of(&self.s)
    }

    pub fn phi_theta(&self, i: usize) -> (f64, f64) {
        let (c, z) = bloch_to_chart(cut_point(self.psi[i]));
        chart_to_angles(c, z)
    }
}

/// Profile of S, W, K along the symmetry circle, from characteristics whose
/// initial momentum respects the x → −x symmetry (p₀ = (0, q)).
pub fn symmetry_cut(problem: &KProblem, t: f64, n_psi: usize, q_max: f64) -> Result<SymmetryCut> {
    if problem.start.zeta.re != 0.0 {
        return Err(Error::invalid("x0", "the initial point must lie on the symmetry circle"));
    }
    if n_psi < 8 {
        return Err(Error::invalid("n_psi", "need at least 8 points"));
    }
    let mut qs: Vec<f64> = Vec::new();
    let n_side = 200;
    for i in 0..n_side {
        let r = (1e-5f64.ln() + (q_max.ln() - 1e-5f64.ln()) * i as f64 / (n_side - 1) as f64).exp();
        qs.push(r);
        qs.push(-r);
    }
    qs.push(0.0);
    qs.sort_by(f64::total_cmp);
    let mut pts: Vec<KPoint> = qs.par_iter().map(|&q| problem.evaluate([0.0, q], t)).collect();
    // refine where consecutive endpoints are far apart along the circle
    for _ in 0..5 {
        let mut extra = Vec::new();
        for w in pts.windows(2) {
            if let (Some(a), Some(b)) = (w[0].bloch(), w[1].bloch()) {
                if dot(a, b) < (0.02f64).cos() {
                    extra.push(0.5 * (w[0].p0[1] + w[1].p0[1]));
                }
            }
        }
        if extra.is_empty() {
            break;
        }
        pts.extend(extra.par_iter().map(|&q| problem.evaluate([0.0, q], t)).collect::<Vec<_>>());
        pts.sort_by(|a, b| a.p0[1].total_cmp(&b.p0[1]));
    }
    let psi: Vec<f64> = (0..n_psi).map(|i| -PI + 2.0 * PI * (i + 1) as f64 / n_psi as f64).collect();
    let mut s = vec![f64::INFINITY; n_psi];
    for w in pts.windows(2) {
        let (Some(a), Some(b)) = (w[0].bloch(), w[1].bloch()) else { continue };
        if !(w[0].completed && w[1].completed) || dot(a, b) < (0.05f64).cos() {
            continue;
        }
        let (pa, mut pb) = (cut_angle(a), cut_angle(b));
        if pb - pa > PI {
            pb -= 2.0 * PI;
        } else if pa - pb > PI {
            pb += 2.0 * PI;
        }
        let (lo, hi) = (pa.min(pb), pa.max(pb));
        for (i, &x) in psi.iter().enumerate() {
            for shift in [-2.0 * PI, 0.0, 2.0 * PI] {
                let xs = x + shift;
                if xs >= lo && xs <= hi {
                    let frac = if hi > lo { (xs - pa) / (pb - pa) } else { 0.0 };
                    let v = w[0].action + frac * (w[1].action - w[0].action);
                    s[i] = s[i].min(v.max(0.0));
                }
            }
        }
    }
    let w: Vec<f64> = psi
        .iter()
        .map(|&x| {
            let (c, z) = bloch_to_chart(cut_point(x));
            problem.overlap.value(c, z)
        })
        .collect();
    let s: Vec<Option<f64>> = s.into_iter().map(|v| v.is_finite().then_some(v)).collect();
    let k = s.iter().zip(&w).map(|(s, w)| s.map(|s| s + w)).collect();
    Ok(SymmetryCut { t, psi, s, w, k })
}
