//! Stereographic charts of the Bloch sphere and the weak-noise Hamiltonian in them.
//!
//! The north chart uses z = tan(θ/2) e^{iφ} (z = 0 is the dark state), the south
//! chart w = 1/z. In either chart the leading-order Fokker–Planck operator is
//! ∂P = −∂·(aP) + (1/N) ∂∂(d(|ζ|²) P) with a holomorphic drift A(ζ) and
//! isotropic diffusion d, so with π = p_x + i p_y the Hamiltonian is
//! H = Re(π̄ A) + d |π|².

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::spin_algebra::SpinCoherentPoint;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Chart {
    North,
    South,
}

impl Chart {
    pub fn other(self) -> Self {
        match self {
            Chart::North => Chart::South,
            Chart::South => Chart::North,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Chart::North => -1.0,
            Chart::South => 1.0,
        }
    }
}

/// The bad-cavity model: drive ω and collective rate ω/λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedModel {
    pub omega: f64,
    pub lambda: f64,
}

impl ReducedModel {
    /// `lambda = ∞` switches off the collective decay and the dephasing.
    pub fn new(omega: f64, lambda: f64) -> Result<Self> {
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(Error::invalid("omega", "must be finite and nonnegative"));
        }
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda", format!("{lambda} must be positive")));
        }
        Ok(Self { omega, lambda })
    }

    /// ω/λ.
    pub fn kappa(&self) -> f64 {
        self.omega / self.lambda
    }

    /// Leading-order drift A(ζ).
    pub fn drift(&self, chart: Chart, zeta: C64) -> C64 {
        chart.sign() * self.kappa() * zeta + 0.5 * I * self.omega * (zeta * zeta - 1.0)
    }

    pub fn drift_prime(&self, chart: Chart, zeta: C64) -> C64 {
        chart.sign() * self.kappa() + I * self.omega * zeta
    }

    /// O(1/N) part of the drift: a = A + a₁/N.
    pub fn drift_correction(&self, chart: Chart, zeta: C64) -> C64 {
        chart.sign() * self.kappa() * zeta
    }

    /// Diffusion d(u), u = |ζ|², and its first two u-derivatives.
    pub fn diffusion(&self, chart: Chart, u: f64) -> (f64, f64, f64) {
        let k = 0.5 * self.kappa();
        match chart {
            Chart::North => (k * u * (1.0 + u), k * (1.0 + 2.0 * u), 2.0 * k),
            Chart::South => (k * (1.0 + u), k, 0.0),
        }
    }

    pub fn hamiltonian(&self, point: &PhasePoint) -> f64 {
        let a = self.drift(point.chart, point.zeta);
        let (d, _, _) = self.diffusion(point.chart, point.zeta.norm_sqr());
        (point.pi.conj() * a).re + d * point.pi.norm_sqr()
    }

    /// Hamilton's equations (ζ̇, π̇) and the action rate d|π|².
    pub fn flow(&self, point: &PhasePoint) -> (C64, C64, f64) {
        let (chart, z, p) = (point.chart, point.zeta, point.pi);
        let (d, d1, _) = self.diffusion(chart, z.norm_sqr());
        let zdot = self.drift(chart, z) + 2.0 * d * p;
        let pdot = -p * self.drift_prime(chart, z).conj() - 2.0 * p.norm_sqr() * d1 * z;
        (zdot, pdot, d * p.norm_sqr())
    }

    /// Real 4×4 Jacobian of the flow in (x, y, p_x, p_y).
    pub fn flow_jacobian(&self, point: &PhasePoint) -> [[f64; 4]; 4] {
        let (chart, z, p) = (point.chart, point.zeta, point.pi);
        let (d, d1, d2) = self.diffusion(chart, z.norm_sqr());
        let a1 = self.drift_prime(chart, z);
        let p2 = p.norm_sqr();
        // each derivative split into complex-linear and antilinear parts
        let zz = (a1 + 2.0 * d1 * p * z.conj(), 2.0 * d1 * p * z);
        let zp = (C64::new(2.0 * d, 0.0), C64::new(0.0, 0.0));
        let pz = (
            C64::new(-2.0 * p2 * (d2 * z.norm_sqr() + d1), 0.0),
            I * self.omega * p - 2.0 * p2 * d2 * z * z,
        );
        let pp = (-a1.conj() - 2.0 * d1 * z * p.conj(), -2.0 * d1 * z * p);
        let mut m = [[0.0; 4]; 4];
        for (row, blocks) in [(0, [zz, zp]), (2, [pz, pp])] {
            for (bc, (lin, anti)) in blocks.into_iter().enumerate() {
                let b = real_block(lin, anti);
                for i in 0..2 {
                    for j in 0..2 {
                        m[row + i][2 * bc + j] = b[i][j];
                    }
                }
            }
        }
        m
    }
}

/// Real matrix of v ↦ lin·v + anti·v̄.
pub(crate) fn real_block(lin: C64, anti: C64) -> [[f64; 2]; 2] {
    [[lin.re + anti.re, -lin.im + anti.im], [lin.im + anti.im, lin.re - anti.re]]
}

/// A point of phase space in one chart: position ζ and momentum π = p_x + i p_y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub chart: Chart,
    pub zeta: C64,
    pub pi: C64,
}

impl PhasePoint {
    pub fn new(chart: Chart, zeta: C64, pi: C64) -> Self {
        Self { chart, zeta, pi }
    }

    /// The same point expressed in the other chart (ζ′ = 1/ζ, π′ = −π ζ̄²).
    pub fn switched(&self) -> Result<Self> {
        if self.zeta.norm_sqr() == 0.0 {
            return Err(Error::ChartSingularity("cannot switch charts at the chart origin".into()));
        }
        Ok(Self {
            chart: self.chart.other(),
            zeta: 1.0 / self.zeta,
            pi: -self.pi * self.zeta.conj() * self.zeta.conj(),
        })
    }

    /// Real 4×4 Jacobian of [`PhasePoint::switched`].
    pub fn switch_jacobian(&self) -> [[f64; 4]; 4] {
        let z = self.zeta;
        let zc = z.conj();
        let zeta_block = real_block(-1.0 / (z * z), C64::new(0.0, 0.0));
        let pi_z = real_block(C64::new(0.0, 0.0), -2.0 * self.pi * zc);
        let pi_p = real_block(-zc * zc, C64::new(0.0, 0.0));
        let mut m = [[0.0; 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = zeta_block[i][j];
                m[2 + i][j] = pi_z[i][j];
                m[2 + i][2 + j] = pi_p[i][j];
            }
        }
        m
    }

    pub fn bloch(&self) -> [f64; 3] {
        chart_to_bloch(self.chart, self.zeta)
    }
}

pub fn chart_to_bloch(chart: Chart, zeta: C64) -> [f64; 3] {
    let u = zeta.norm_sqr();
    let (sy, sz) = match chart {
        Chart::North => (2.0 * zeta.im, 1.0 - u),
        Chart::South => (-2.0 * zeta.im, u - 1.0),
    };
    [2.0 * zeta.re / (1.0 + u), sy / (1.0 + u), sz / (1.0 + u)]
}

/// Chart coordinate of a Bloch vector, in the chart where |ζ| ≤ 1.
pub fn bloch_to_chart(s: [f64; 3]) -> (Chart, C64) {
    let norm = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
    let [x, y, z] = s.map(|c| c / norm);
    if z >= 0.0 {
        (Chart::North, C64::new(x, y) / (1.0 + z))
    } else {
        (Chart::South, C64::new(x, -y) / (1.0 - z))
    }
}

pub fn point_to_chart(chart: Chart, p: SpinCoherentPoint) -> C64 {
    let (phi, theta) = (p.phi(), p.theta());
    match chart {
        Chart::North => (0.5 * theta).tan() * C64::from_polar(1.0, phi),
        Chart::South => (0.5 * theta).cos() / (0.5 * theta).sin() * C64::from_polar(1.0, -phi),
    }
}

/// (φ, θ) of a chart point; φ in [0, 2π).
pub fn chart_to_angles(chart: Chart, zeta: C64) -> (f64, f64) {
    let r = zeta.norm();
    let (phi, theta) = match chart {
        Chart::North => (zeta.arg(), 2.0 * r.atan()),
        Chart::South => (-zeta.arg(), std::f64::consts::PI - 2.0 * r.atan()),
    };
    (phi.rem_euclid(2.0 * std::f64::consts::PI), theta)
}

/// Momenta conjugate to (φ, θ): p_q = Re(π̄ ∂ζ/∂q).
pub fn chart_to_angle_momenta(chart: Chart, zeta: C64, pi: C64) -> (f64, f64) {
    let (phi, theta) = chart_to_angles(chart, zeta);
    let (dphi, dtheta) = match chart {
        Chart::North => (I * zeta, 0.5 / (0.5 * theta).cos().powi(2) * C64::from_polar(1.0, phi)),
        Chart::South => (-I * zeta, -0.5 / (0.5 * theta).sin().powi(2) * C64::from_polar(1.0, -phi)),
    };
    ((pi.conj() * dphi).re, (pi.conj() * dtheta).re)
}

/// An overlap exponent that depends only on the latitude, W = w(c) with
/// c = cos²(θ/2): the large-N overlap with the Dicke state of fraction μ,
/// W = μ ln(μ/c) + (1−μ) ln((1−μ)/(1−c)). μ = 1 is the dark state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatitudeOverlap {
    mu: f64,
}

impl LatitudeOverlap {
    pub fn new(mu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mu) {
            return Err(Error::invalid("mu", format!("{mu} outside [0, 1]")));
        }
        Ok(Self { mu })
    }

    pub fn dark() -> Self {
        Self { mu: 1.0 }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// (w, dw/dc, d²w/dc²).
    fn of_c(&self, c: f64) -> (f64, f64, f64) {
        let mu = self.mu;
        let mut w = 0.0;
        let mut w1 = 0.0;
        let mut w2 = 0.0;
        if mu > 0.0 {
            w += mu * (mu / c).ln();
            w1 -= mu / c;
            w2 += mu / (c * c);
        }
        if mu < 1.0 {
            let (q, r) = (1.0 - mu, 1.0 - c);
            w += q * (q / r).ln();
            w1 += q / r;
            w2 += q / (r * r);
        }
        (w, w1, w2)
    }

    /// c and its first two derivatives with respect to u = |ζ|².
    fn c_of_u(chart: Chart, u: f64) -> (f64, f64, f64) {
        let s = 1.0 / (1.0 + u);
        match chart {
            Chart::North => (s, -s * s, 2.0 * s * s * s),
            Chart::South => (u * s, s * s, -2.0 * s * s * s),
        }
    }

    pub fn value(&self, chart: Chart, zeta: C64) -> f64 {
        let (c, _, _) = Self::c_of_u(chart, zeta.norm_sqr());
        self.of_c(c).0
    }

    /// W, gradient as a complex covector (∂_x W + i ∂_y W), and the real Hessian.
    pub fn derivatives(&self, chart: Chart, zeta: C64) -> (f64, C64, [[f64; 2]; 2]) {
        let (c, c1, c2) = Self::c_of_u(chart, zeta.norm_sqr());
        let (w, w1, w2) = self.of_c(c);
        let h1 = w1 * c1;
        let h2 = w2 * c1 * c1 + w1 * c2;
        let x = [zeta.re, zeta.im];
        let mut hess = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                hess[i][j] = 4.0 * h2 * x[i] * x[j] + if i == j { 2.0 * h1 } else { 0.0 };
            }
        }
        (w, 2.0 * h1 * zeta, hess)
    }
}
