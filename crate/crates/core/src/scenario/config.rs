use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::master_equation::ModelParams;
use crate::spin_algebra::{DickeState, SpinCoherentPoint};
use crate::weak_noise::{LandscapeOptions, MomentumFan, NewtonOptions, ReducedModel, Seeding, TrackOptions};

/// A scenario read from TOML. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub task: Task,
    /// Only used to shuffle the order of multi-start searches; outputs do not depend on it.
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    #[serde(default)]
    pub initial: InitialState,
    pub time: TimeSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
    #[serde(default)]
    pub asymptotic: Option<AsymptoticSection>,
    #[serde(default)]
    pub landscape: Option<LandscapeSection>,
    #[serde(default)]
    pub fock: Option<FockSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Loschmidt rate functions, finite N and/or asymptotic.
    Loschmidt,
    /// K = S + W on the sphere plus cuts along the symmetry circle.
    Landscape,
    /// Asymptotic Fock-overlap rates and their cusp line.
    Fock,
    /// Homodyne-conditioned echoes of the full model.
    Conditioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Full,
    Reduced,
    Asymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default)]
    pub n_atoms: Vec<usize>,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub g: Option<f64>,
    /// g²/(ωγ); an alternative to `g` for the full model.
    #[serde(default)]
    pub coupling_ratio: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub delta0: f64,
    #[serde(default)]
    pub delta1: f64,
    #[serde(default)]
    pub n_max: Option<usize>,
    /// J_z dephasing of the reduced model.
    #[serde(default)]
    pub dephasing: Option<bool>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialState {
    /// Dicke state |m⟩; m defaults to +N/2.
    Dicke {
        #[serde(default)]
        m: Option<f64>,
    },
    Coherent {
        phi: f64,
        theta: f64,
    },
    /// Maximally mixed atomic state.
    Mixed,
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Dicke { m: None }
    }
}

impl InitialState {
    pub fn is_dark(&self) -> bool {
        match self {
            InitialState::Dicke { m: None } => true,
            InitialState::Coherent { theta, .. } => *theta == 0.0,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_max: f64,
    /// Number of output times, including t = 0.
    pub n_out: usize,
}

impl TimeSection {
    pub fn grid(&self) -> Vec<f64> {
        let d = (self.n_out - 1) as f64;
        (0..self.n_out).map(|i| self.t_max * i as f64 / d).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    #[serde(default = "default_rel")]
    pub rel: f64,
    #[serde(default = "default_abs")]
    pub abs: f64,
}

fn default_rel() -> f64 {
    1e-10
}

fn default_abs() -> f64 {
    1e-14
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self { rel: default_rel(), abs: default_abs() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedingKind {
    Symmetric,
    Fan,
}

/// Branch tracking of the minima of K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticSection {
    #[serde(default = "default_seeding")]
    pub seeding: SeedingKind,
    #[serde(default = "default_q_min")]
    pub q_min: f64,
    #[serde(default = "default_q_max")]
    pub q_max: f64,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_n_angles")]
    pub n_angles: usize,
    #[serde(default = "default_reseed")]
    pub reseed_every: usize,
    /// Also write finite-N estimates from the minima of K.
    #[serde(default)]
    pub corrected: bool,
}

fn default_seeding() -> SeedingKind {
    SeedingKind::Symmetric
}
fn default_q_min() -> f64 {
    1e-4
}
fn default_q_max() -> f64 {
    10.0
}
fn default_n_seeds() -> usize {
    300
}
fn default_n_angles() -> usize {
    32
}
fn default_reseed() -> usize {
    10
}

impl Default for AsymptoticSection {
    fn default() -> Self {
        Self {
            seeding: default_seeding(),
            q_min: default_q_min(),
            q_max: default_q_max(),
            n_seeds: default_n_seeds(),
            n_angles: default_n_angles(),
            reseed_every: default_reseed(),
            corrected: false,
        }
    }
}

impl AsymptoticSection {
    pub fn track_options(&self) -> Result<TrackOptions> {
        let seeding = match self.seeding {
            SeedingKind::Symmetric => Seeding::Symmetric { q_min: self.q_min, q_max: self.q_max, n: self.n_seeds },
            SeedingKind::Fan => {
                Seeding::Fan(MomentumFan::log_radial(self.q_min, self.q_max, self.n_seeds, self.n_angles)?)
            }
        };
        Ok(TrackOptions { seeding, reseed_every: self.reseed_every, newton: NewtonOptions::default() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSection {
    /// Time of the full landscape; defaults to the first significant kink of the rate.
    #[serde(default)]
    pub time: Option<f64>,
    #[serde(default = "default_n_phi")]
    pub n_phi: usize,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    /// Times of the symmetry-circle cuts.
    #[serde(default)]
    pub cut_times: Vec<f64>,
    /// Cut times given relative to the landscape time.
    #[serde(default)]
    pub cut_offsets: Vec<f64>,
    #[serde(default = "default_n_psi")]
    pub n_psi: usize,
    #[serde(default = "default_q_max")]
    pub q_max: f64,
    #[serde(default = "default_fan_r_min")]
    pub fan_r_min: f64,
    #[serde(default = "default_q_max")]
    pub fan_r_max: f64,
    #[serde(default = "default_fan_radii")]
    pub fan_radii: usize,
    #[serde(default = "default_n_angles")]
    pub fan_angles: usize,
    #[serde(default = "default_max_span")]
    pub max_span: f64,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
}

fn default_n_phi() -> usize {
    64
}
fn default_n_theta() -> usize {
    33
}
fn default_n_psi() -> usize {
    721
}
fn default_fan_r_min() -> f64 {
    1e-4
}
fn default_fan_radii() -> usize {
    33
}
fn default_max_span() -> f64 {
    LandscapeOptions::default().max_span
}
fn default_max_depth() -> usize {
    LandscapeOptions::default().max_depth
}

/// Asymptotic Fock-overlap rates on a grid of μ = m/N + 1/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockSection {
    pub mu_min: f64,
    pub n_mu: usize,
}

impl FockSection {
    /// μ values, ascending and ending at 1.
    pub fn mus(&self) -> Vec<f64> {
        if self.n_mu == 1 {
            return vec![1.0];
        }
        let d = (self.n_mu - 1) as f64;
        (0..self.n_mu).map(|i| self.mu_min + (1.0 - self.mu_min) * i as f64 / d).collect()
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| config_err(e.to_string().trim_end().replace('\n', " ")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    /// λ = ωγ/(2g²), or the given λ.
    pub fn lambda(&self) -> Option<f64> {
        let m = &self.model;
        if let Some(l) = m.lambda {
            return Some(l);
        }
        let gamma = m.gamma?;
        match (m.g, m.coupling_ratio) {
            (Some(g), _) => Some(m.omega * gamma / (2.0 * g * g)),
            (None, Some(ratio)) => Some(1.0 / (2.0 * ratio)),
            _ => None,
        }
    }

    fn coupling(&self) -> Option<f64> {
        let m = &self.model;
        m.g.or_else(|| Some((m.coupling_ratio? * m.omega * m.gamma?).sqrt()))
    }

    /// Finite-N model parameters for `n_atoms`.
    pub fn model_params(&self, n_atoms: usize) -> Result<ModelParams> {
        let m = &self.model;
        let mut params = match m.kind {
            ModelKind::Full => {
                let g = self.coupling().ok_or_else(|| config_err("full model needs g or coupling_ratio"))?;
                let gamma = m.gamma.ok_or_else(|| config_err("full model needs gamma"))?;
                let mut p = ModelParams::full(n_atoms, g, gamma, m.delta0);
                p.n_max = m.n_max;
                p.with_dephasing(m.dephasing.unwrap_or(false))
            }
            ModelKind::Reduced => {
                let lambda = self.lambda().ok_or_else(|| config_err("reduced model needs lambda"))?;
                ModelParams::reduced(n_atoms, lambda).with_dephasing(m.dephasing.unwrap_or(true))
            }
            ModelKind::Asymptotic => return Err(config_err("the asymptotic model has no finite-N parameters")),
        };
        params.omega = m.omega;
        params.delta1 = m.delta1;
        params.validate()?;
        Ok(params)
    }

    /// Bad-cavity model used by the weak-noise analysis.
    pub fn reduced_model(&self) -> Result<ReducedModel> {
        let lambda = self.lambda().ok_or_else(|| config_err("cannot determine lambda"))?;
        ReducedModel::new(self.model.omega, lambda)
    }

    /// Checks every field the task will use, before anything is computed.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(config_err(format!("name `{}` must be nonempty ASCII alphanumerics, '-' or '_'", self.name)));
        }
        let m = &self.model;
        positive("model.omega", m.omega)?;
        positive("time.t_max", self.time.t_max)?;
        if self.time.n_out < 2 {
            return Err(config_err("time.n_out must be at least 2"));
        }
        positive("tolerances.rel", self.tolerances.rel)?;
        positive("tolerances.abs", self.tolerances.abs)?;
        if m.g.is_some() && m.coupling_ratio.is_some() {
            return Err(config_err("give at most one of model.g and model.coupling_ratio"));
        }
        if let Some(l) = self.lambda() {
            positive("lambda", l)?;
        }
        let mut seen = m.n_atoms.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != m.n_atoms.len() {
            return Err(config_err("model.n_atoms has duplicates"));
        }
        match m.kind {
            ModelKind::Asymptotic => {
                if !m.n_atoms.is_empty() {
                    return Err(config_err("the asymptotic model takes no n_atoms"));
                }
            }
            _ => {
                if m.n_atoms.is_empty() {
                    return Err(config_err("model.n_atoms is empty"));
                }
                for &n in &m.n_atoms {
                    self.model_params(n)?;
                    self.check_initial(n)?;
                }
            }
        }
        if m.kind == ModelKind::Full && m.dephasing == Some(true) {
            return Err(config_err("J_z dephasing is only available in the reduced model"));
        }
        let needs_asymptotic = matches!(self.task, Task::Landscape | Task::Fock)
            || (self.task == Task::Loschmidt && (m.kind == ModelKind::Asymptotic || self.asymptotic.is_some()));
        if needs_asymptotic {
            self.reduced_model()?;
            if !self.initial.is_dark() {
                return Err(config_err("the weak-noise analysis supports only the dark initial state"));
            }
            let a = self.asymptotic.clone().unwrap_or_default();
            positive("asymptotic.q_min", a.q_min)?;
            if a.q_max <= a.q_min {
                return Err(config_err("asymptotic.q_max must exceed q_min"));
            }
            if a.n_seeds < 2 || a.reseed_every == 0 || a.n_angles == 0 {
                return Err(config_err("asymptotic.n_seeds ≥ 2, n_angles ≥ 1 and reseed_every ≥ 1 are required"));
            }
            if a.corrected && m.n_atoms.is_empty() {
                return Err(config_err("asymptotic.corrected needs model.n_atoms"));
            }
        }
        match self.task {
            Task::Loschmidt => {
                if self.landscape.is_some() || self.fock.is_some() {
                    return Err(config_err("loschmidt task takes no [landscape] or [fock] section"));
                }
            }
            Task::Landscape => {
                let l = self.landscape.as_ref().ok_or_else(|| config_err("landscape task needs [landscape]"))?;
                if m.kind != ModelKind::Asymptotic {
                    return Err(config_err("landscape task needs model.kind = \"asymptotic\""));
                }
                if l.n_phi < 3 || l.n_theta < 3 || l.n_psi < 3 {
                    return Err(config_err("landscape grids need at least 3 points per axis"));
                }
                if l.fan_radii < 2 || l.fan_angles < 3 || l.max_span <= 0.0 {
                    return Err(config_err("landscape fan needs ≥ 2 radii, ≥ 3 angles and max_span > 0"));
                }
                positive("landscape.q_max", l.q_max)?;
                positive("landscape.fan_r_min", l.fan_r_min)?;
                if l.fan_r_max <= l.fan_r_min {
                    return Err(config_err("landscape.fan_r_max must exceed fan_r_min"));
                }
                for &t in l.time.iter().chain(&l.cut_times) {
                    positive("landscape time", t)?;
                }
                if l.cut_times.is_empty() && l.cut_offsets.is_empty() {
                    return Err(config_err("landscape needs cut_times or cut_offsets"));
                }
            }
            Task::Fock => {
                let f = self.fock.as_ref().ok_or_else(|| config_err("fock task needs [fock]"))?;
                if m.kind != ModelKind::Asymptotic {
                    return Err(config_err("fock task needs model.kind = \"asymptotic\""));
                }
                if !(f.mu_min > 0.5 && f.mu_min < 1.0) || f.n_mu < 2 {
                    return Err(config_err("fock.mu_min must lie in (0.5, 1) and n_mu ≥ 2"));
                }
            }
            Task::Conditioned => {
                if m.kind != ModelKind::Full || m.n_atoms.len() != 1 {
                    return Err(config_err("conditioned task needs the full model and exactly one n_atoms"));
                }
                if self.asymptotic.is_some() || self.landscape.is_some() || self.fock.is_some() {
                    return Err(config_err("conditioned task takes no asymptotic, landscape or fock section"));
                }
            }
        }
        Ok(())
    }

    fn check_initial(&self, n: usize) -> Result<()> {
        match &self.initial {
            InitialState::Dicke { m: Some(m) } => DickeState::from_m(n, *m).map(|_| ()),
            InitialState::Coherent { phi, theta } => SpinCoherentPoint::new(*phi, *theta).map(|_| ()),
            _ => Ok(()),
        }
    }
}
