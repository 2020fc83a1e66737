//! Asymptotic rate functions: branches of minima of K tracked in time, the
//! critical times where the global minimum changes branch, Laplace corrections
//! at finite N and the cusp lines of the Fock-overlap rates.

use rayon::prelude::*;

use super::chart::{LatitudeOverlap, ReducedModel};
use super::landscape::{evaluate_fan, minimize_k, solve_stationary, KPoint, KProblem, MomentumFan, NewtonOptions};
use crate::error::{Error, Result};

/// Two branch values closer than this are reported as a tie.
pub const TIE_TOL: f64 = 1e-10;

/// How initial momenta are sampled when looking for new branches.
#[derive(Debug, Clone, PartialEq)]
pub enum Seeding {
    /// Full two-dimensional fan.
    Fan(MomentumFan),
    /// Momenta (0, q) only, which keep characteristics on the symmetry circle
    /// s_x = 0. Valid when the start point and W are symmetric under x → −x.
    Symmetric { q_min: f64, q_max: f64, n: usize },
}

impl Seeding {
    fn seeds(&self, problem: &KProblem, t: f64) -> Vec<[f64; 2]> {
        match self {
            Seeding::Fan(fan) => {
                let samples = evaluate_fan(problem, fan, t);
                samples.local_minima().into_iter().map(|k| k.p0).collect()
            }
            Seeding::Symmetric { q_min, q_max, n } => {
                let (a, b) = (q_min.ln(), q_max.ln());
                let mut qs: Vec<f64> = (0..*n)
                    .flat_map(|i| {
                        let r = (a + (b - a) * i as f64 / (*n - 1).max(1) as f64).exp();
                        [r, -r]
                    })
                    .collect();
                qs.push(0.0);
                qs.sort_by(f64::total_cmp);
                let ks: Vec<f64> = qs.par_iter().map(|&q| problem.evaluate([0.0, q], t).k).collect();
                (0..qs.len())
                    .filter(|&i| {
                        ks[i].is_finite()
                            && (i == 0 || ks[i] < ks[i - 1])
                            && (i + 1 == qs.len() || ks[i] <= ks[i + 1])
                    })
                    .map(|i| [0.0, qs[i]])
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOptions {
    pub seeding: Seeding,
    /// New branches are searched for every this many time steps (and whenever one is lost).
    pub reseed_every: usize,
    pub newton: NewtonOptions,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self { seeding: Seeding::Fan(MomentumFan::default()), reseed_every: 10, newton: NewtonOptions::default() }
    }
}

impl TrackOptions {
    pub fn symmetric() -> Self {
        Self { seeding: Seeding::Symmetric { q_min: 1e-4, q_max: 10.0, n: 300 }, ..Self::default() }
    }
}

/// A local minimum of K at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSample {
    pub t: f64,
    pub k: f64,
    pub p0: [f64; 2],
    /// Value of the characteristic Hamiltonian; dK/dt = −H along a branch.
    pub hamiltonian: f64,
    pub phi: f64,
    pub theta: f64,
    pub bloch: [f64; 3],
    pub det_hessian_sphere: f64,
    pub log_transported_prefactor: f64,
}

impl BranchSample {
    fn from_point(kp: &KPoint) -> Option<Self> {
        if !kp.is_minimum() {
            return None;
        }
        let (phi, theta) = kp.angles()?;
        Some(Self {
            t: kp.t,
            k: kp.k,
            p0: kp.p0,
            hamiltonian: kp.hamiltonian,
            phi,
            theta,
            bloch: kp.bloch()?,
            det_hessian_sphere: kp.det_hessian_sphere()?,
            log_transported_prefactor: kp.log_transported_prefactor()?,
        })
    }

    /// dK/dt along the branch.
    pub fn slope(&self) -> f64 {
        -self.hamiltonian
    }

    fn same_point(&self, other: &BranchSample) -> bool {
        let d: f64 = (0..3).map(|i| (self.bloch[i] - other.bloch[i]).powi(2)).sum::<f64>().sqrt();
        d < 1e-7 && (self.k - other.k).abs() < 1e-8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedBranch {
    pub id: usize,
    /// One entry per time of the grid; `None` where the branch does not exist.
    pub samples: Vec<Option<BranchSample>>,
}

/// Time where the global minimum of K moves from one branch to another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalTime {
    pub t: f64,
    pub k: f64,
    pub from: usize,
    pub to: usize,
    /// Exact branch slopes dK/dt on either side.
    pub slope_left: f64,
    pub slope_right: f64,
    /// One-sided finite-difference slopes of the tabulated rate at the kink.
    pub fd_slope_left: f64,
    pub fd_slope_right: f64,
    /// Variation of finite-difference slopes away from the kink.
    pub noise_floor: f64,
}

impl CriticalTime {
    /// The kink criterion: the one-sided slopes differ by more than ten noise floors.
    pub fn is_significant(&self) -> bool {
        (self.fd_slope_left - self.fd_slope_right).abs() > 10.0 * self.noise_floor
    }
}

/// r(t) = min K together with the branch structure behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticRate {
    pub times: Vec<f64>,
    pub rate: Vec<f64>,
    /// Branch realising the minimum at each time.
    pub argmin: Vec<Option<usize>>,
    pub branches: Vec<TrackedBranch>,
    /// Grid indices where no branch converged.
    pub gaps: Vec<usize>,
    /// Grid indices where the two lowest branches agree within [`TIE_TOL`].
    pub ties: Vec<usize>,
    pub critical: Vec<CriticalTime>,
}

impl AsymptoticRate {
    /// Local minima of K alive at grid index `i`.
    pub fn minima_at(&self, i: usize) -> Vec<BranchSample> {
        self.branches.iter().filter_map(|b| b.samples[i]).collect()
    }

    pub fn significant_kinks(&self) -> Vec<CriticalTime> {
        self.critical.iter().copied().filter(CriticalTime::is_significant).collect()
    }
}

struct Tracker<'a> {
    problem: &'a KProblem,
    options: &'a TrackOptions,
}

impl Tracker<'_> {
    fn solve(&self, t: f64, seed: [f64; 2]) -> Option<BranchSample> {
        solve_stationary(self.problem, t, seed, &self.options.newton).and_then(|kp| BranchSample::from_point(&kp))
    }

    /// Newton from the seed, falling back to a Nelder–Mead descent when Newton fails.
    fn solve_from_seed(&self, t: f64, seed: [f64; 2]) -> Option<BranchSample> {
        self.solve(t, seed).or_else(|| {
            let size = 0.05 * seed[0].hypot(seed[1]).max(1e-3);
            let kp = minimize_k(self.problem, t, seed, size)?;
            self.solve(t, kp.p0)
        })
    }

    fn continue_branch(&self, t: f64, prev: &[BranchSample]) -> Option<BranchSample> {
        let last = prev.last()?;
        let guess = match prev {
            [.., a, b] if b.t > a.t => {
                let f = (t - b.t) / (b.t - a.t);
                [b.p0[0] + f * (b.p0[0] - a.p0[0]), b.p0[1] + f * (b.p0[1] - a.p0[1])]
            }
            _ => last.p0,
        };
        self.solve(t, guess).or_else(|| self.solve(t, last.p0))
    }

    fn search(&self, t: f64) -> Vec<BranchSample> {
        let seeds = self.options.seeding.seeds(self.problem, t);
        let found: Vec<BranchSample> = seeds.par_iter().filter_map(|s| self.solve_from_seed(t, *s)).collect();
        let mut out: Vec<BranchSample> = Vec::new();
        for b in found {
            if !out.iter().any(|o| o.same_point(&b)) {
                out.push(b);
            }
        }
        out
    }
}

/// Tracks the local minima of K over `times` (strictly increasing, t ≥ 0) and
/// returns r(t) = min K. At t = 0 the rate is W at the initial point.
pub fn asymptotic_rate(problem: &KProblem, times: &[f64], options: &TrackOptions) -> Result<AsymptoticRate> {
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
        return Err(Error::invalid("times", "must be nonempty, nonnegative and strictly increasing"));
    }
    if options.reseed_every == 0 {
        return Err(Error::invalid("reseed_every", "must be positive"));
    }
    let tracker = Tracker { problem, options };
    let n = times.len();
    let mut branches: Vec<TrackedBranch> = Vec::new();
    let mut history: Vec<Vec<BranchSample>> = Vec::new();
    let mut rate = vec![f64::NAN; n];
    let mut argmin = vec![None; n];
    let mut gaps = Vec::new();
    let mut ties = Vec::new();
    let w0 = problem.overlap.value(problem.start.chart, problem.start.zeta);
    let mut steps_since_search = usize::MAX;
    for (i, &t) in times.iter().enumerate() {
        if t == 0.0 {
            rate[i] = w0;
            continue;
        }
        let active: Vec<usize> =
            (0..branches.len()).filter(|&b| i > 0 && branches[b].samples[i - 1].is_some()).collect();
        let continued: Vec<(usize, Option<BranchSample>)> =
            active.par_iter().map(|&b| (b, tracker.continue_branch(t, &history[b]))).collect();
        let mut current: Vec<(usize, BranchSample)> = Vec::new();
        let mut lost = false;
        for (b, s) in continued {
            match s {
                Some(s) if !current.iter().any(|(_, c)| c.same_point(&s)) => {
                    branches[b].samples[i] = Some(s);
                    history[b].push(s);
                    current.push((b, s));
                }
                _ => lost = true,
            }
        }
        steps_since_search = steps_since_search.saturating_add(1);
        if lost || current.is_empty() || steps_since_search >= options.reseed_every {
            steps_since_search = 0;
            for s in tracker.search(t) {
                if current.iter().any(|(_, c)| c.same_point(&s)) {
                    continue;
                }
                let id = branches.len();
                let mut samples = vec![None; n];
                samples[i] = Some(s);
                branches.push(TrackedBranch { id, samples });
                history.push(vec![s]);
                current.push((id, s));
            }
        }
        current.sort_by(|a, b| a.1.k.total_cmp(&b.1.k));
        match current.as_slice() {
            [] => gaps.push(i),
            [first, rest @ ..] => {
                rate[i] = first.1.k;
                argmin[i] = Some(first.0);
                if rest.first().is_some_and(|second| second.1.k - first.1.k < TIE_TOL) {
                    ties.push(i);
                }
            }
        }
    }
    let mut result = AsymptoticRate { times: times.to_vec(), rate, argmin, branches, gaps, ties, critical: Vec::new() };
    result.critical = locate_critical_times(problem, &result, options);
    Ok(result)
}

fn fd_slope(times: &[f64], rate: &[f64], i: usize) -> f64 {
    (rate[i + 1] - rate[i]) / (times[i + 1] - times[i])
}

fn locate_critical_times(problem: &KProblem, res: &AsymptoticRate, options: &TrackOptions) -> Vec<CriticalTime> {
    let tracker = Tracker { problem, options };
    let (times, rate) = (&res.times, &res.rate);
    let mut out = Vec::new();
    for i in 0..times.len().saturating_sub(1) {
        let (Some(a), Some(b)) = (res.argmin[i], res.argmin[i + 1]) else { continue };
        if a == b {
            continue;
        }
        let (Some(sa), Some(sb)) = (res.branches[a].samples[i], res.branches[b].samples[i + 1]) else { continue };
        // continue each branch across the interval and bisect K_a − K_b
        let at = |branch: BranchSample, t: f64| tracker.solve(t, branch.p0);
        let (mut lo, mut hi) = (times[i], times[i + 1]);
        let (mut pa, mut pb) = (sa, sb);
        let mut ok = true;
        for _ in 0..60 {
            if hi - lo < 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (Some(ma), Some(mb)) = (at(pa, mid), at(pb, mid)) else {
                ok = false;
                break;
            };
            if (ma.k - mb.k).abs() < TIE_TOL {
                lo = mid;
                hi = mid;
                pa = ma;
                pb = mb;
                break;
            }
            if ma.k < mb.k {
                lo = mid;
            } else {
                hi = mid;
            }
            pa = ma;
            pb = mb;
        }
        let t_c = 0.5 * (lo + hi);
        let (ka, kb) = match (at(pa, t_c), at(pb, t_c)) {
            (Some(x), Some(y)) if ok => (x, y),
            _ => (pa, pb),
        };
        // one-sided finite-difference slopes and their variation away from the kink
        let n = times.len();
        let left = (i >= 1).then(|| fd_slope(times, rate, i - 1));
        let right = (i + 2 < n).then(|| fd_slope(times, rate, i + 1));
        let mut floor: f64 = 0.0;
        if i >= 2 {
            floor = floor.max((fd_slope(times, rate, i - 1) - fd_slope(times, rate, i - 2)).abs());
        }
        if i + 3 < n {
            floor = floor.max((fd_slope(times, rate, i + 2) - fd_slope(times, rate, i + 1)).abs());
        }
        out.push(CriticalTime {
            t: t_c,
            k: 0.5 * (ka.k + kb.k),
            from: a,
            to: b,
            slope_left: ka.slope(),
            slope_right: kb.slope(),
            fd_slope_left: left.unwrap_or(f64::NAN),
            fd_slope_right: right.unwrap_or(f64::NAN),
            noise_floor: floor,
        });
    }
    out
}

/// r(t) from the minima of K over a momentum fan, polished by Nelder–Mead on K(p₀).
/// Independent of the Newton boundary-value route used by [`asymptotic_rate`].
pub fn fan_minimum_rate(problem: &KProblem, t: f64, fan: &MomentumFan) -> Option<(f64, KPoint)> {
    let samples = evaluate_fan(problem, fan, t);
    samples
        .local_minima()
        .par_iter()
        .filter_map(|s| {
            let size = 0.05 * s.p0[0].hypot(s.p0[1]).max(1e-3);
            minimize_k(problem, t, s.p0, size)
        })
        .map(|kp| (kp.k, kp))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefactorMode {
    /// F = 1 with the 2π/(N √det K″) Gaussian factor.
    Unit,
    /// F transported along the characteristic; exact at t = 0.
    Transported,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedRate {
    pub echo: f64,
    pub rate: f64,
    /// Minima left out because their Hessian is not positive definite.
    pub excluded: Vec<usize>,
}

/// Laplace estimate of the finite-N echo from the minima of K at one time.
pub fn finite_n_rate_correction(minima: &[BranchSample], n_atoms: usize, mode: PrefactorMode) -> Result<CorrectedRate> {
    if n_atoms == 0 {
        return Err(Error::invalid("n_atoms", "must be positive"));
    }
    let n = n_atoms as f64;
    let mut logs = Vec::new();
    let mut excluded = Vec::new();
    for (i, m) in minima.iter().enumerate() {
        let log_pref = match mode {
            PrefactorMode::Unit if m.det_hessian_sphere > 0.0 => {
                (2.0 * std::f64::consts::PI / n).ln() - 0.5 * m.det_hessian_sphere.ln()
            }
            PrefactorMode::Transported if m.det_hessian_sphere > 0.0 && m.log_transported_prefactor.is_finite() => {
                m.log_transported_prefactor
            }
            _ => {
                excluded.push(i);
                continue;
            }
        };
        logs.push(log_pref - n * m.k);
    }
    if logs.is_empty() {
        return Err(Error::invalid("minima", "no minimum with a positive-definite Hessian"));
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_l = top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    Ok(CorrectedRate { echo: log_l.exp(), rate: -log_l / n, excluded })
}

/// First critical time of the Fock-overlap rate r_m for m/N + 1/2 = μ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuspPoint {
    pub mu: f64,
    /// m/N.
    pub m_over_n: f64,
    pub t: f64,
    pub k: f64,
}

/// Cusp line of the asymptotic Fock-overlap rates: for each μ the first
/// significant kink of min K with the overlap W_μ, searched on `times`.
pub fn fock_cusp_line(
    model: ReducedModel,
    mus: &[f64],
    times: &[f64],
    options: &TrackOptions,
) -> Result<Vec<Option<CuspPoint>>> {
    mus.iter()
        .map(|&mu| {
            let problem = KProblem::dark_state_quench(model).with_overlap(LatitudeOverlap::new(mu)?);
            let res = asymptotic_rate(&problem, times, options)?;
            Ok(res.significant_kinks().first().map(|c| CuspPoint { mu, m_over_n: mu - 0.5, t: c.t, k: c.k }))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre_interval;
    use approx::assert_relative_eq;

    fn sample(k: f64, det: f64) -> BranchSample {
        BranchSample {
            t: 1.0,
            k,
            p0: [0.0, 0.0],
            hamiltonian: 0.0,
            phi: 0.0,
            theta: 1.0,
            bloch: [0.0, 0.0, 1.0],
            det_hessian_sphere: det,
            log_transported_prefactor: 0.0,
        }
    }

    #[test]
    fn gaussian_integral_is_reproduced() {
        let (k0, a, b, c) = (0.3, 2.0, 0.5, 1.5);
        let n = 40;
        let (x, w) = gauss_legendre_interval(200, -3.0, 3.0);
        let mut integral = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            for (yj, wj) in x.iter().zip(&w) {
                let q = 0.5 * (a * xi * xi + 2.0 * b * xi * yj + c * yj * yj);
                integral += wi * wj * (-(n as f64) * (k0 + q)).exp();
            }
        }
        let est = finite_n_rate_correction(&[sample(k0, a * c - b * b)], n, PrefactorMode::Unit).unwrap();
        assert_relative_eq!(est.echo, integral, max_relative = 1e-10);
    }

    #[test]
    fn indefinite_minima_are_excluded() {
        let est = finite_n_rate_correction(&[sample(0.1, -1.0), sample(0.2, 1.0)], 10, PrefactorMode::Unit).unwrap();
        assert_eq!(est.excluded, vec![0]);
        assert!(finite_n_rate_correction(&[sample(0.1, -1.0)], 10, PrefactorMode::Unit).is_err());
    }

    #[test]
    fn corrected_rate_tends_to_min_k() {
        let m = [sample(0.2, 3.0), sample(0.25, 0.5)];
        let large = finite_n_rate_correction(&m, 100_000, PrefactorMode::Unit).unwrap();
        assert!((large.rate - 0.2).abs() < 2.0 * (100_000f64).ln() / 100_000.0);
    }

    #[test]
    fn early_rate_tracks_a_single_branch() {
        let problem = KProblem::dark_state_quench(ReducedModel::new(1.0, 1.2).unwrap());
        let times = [0.0, 0.5, 1.0, 1.5];
        let res = asymptotic_rate(&problem, &times, &TrackOptions::symmetric()).unwrap();
        assert_eq!(res.rate[0], 0.0);
        assert!(res.gaps.is_empty());
        assert!(res.rate.windows(2).all(|w| w[1] > w[0]));
        assert!(res.critical.is_empty());
    }
}
