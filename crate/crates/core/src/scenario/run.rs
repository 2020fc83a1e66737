use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{InitialState, ModelKind, ScenarioConfig, Task};
use super::csv::{Cell, CsvTable};
use crate::echoes::{atomic_state, loschmidt_echo, rate_function, ECHO_RESOLUTION};
use crate::error::{Error, Result};
use crate::master_equation::{build_full_generator, build_reduced_generator, evolve, EvolutionResult, ModelParams};
use crate::povm_homodyne::{branch_crossings, build_halfplane_povm, conditioned_echoes};
use crate::spin_algebra::{coherent_state_vector, DickeState, SpinCoherentPoint};
use crate::state::{fock_projector, DensityMatrix, Sector};
use crate::weak_noise::{
    asymptotic_rate, finite_n_rate_correction, k_landscape, symmetry_cut, AsymptoticRate, GridSpec, KProblem,
    LandscapeOptions, LatitudeOverlap, MomentumFan, PrefactorMode,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Name of the summary file written next to the CSVs.
pub const SUMMARY_FILE: &str = "summary.toml";

/// Per-run options that are not part of the scenario itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Overrides the configured seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub description: String,
    pub task: Task,
    pub version: String,
    pub seed: u64,
    /// λ = ωγ/(2g²) of the bad-cavity limit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub files: Vec<String>,
    pub runs: Vec<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asymptotic: Option<AsymptoticSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landscape: Option<LandscapeSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fock: Option<FockSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditioned: Option<ConditionedSummary>,
}

/// Integrator and state diagnostics of one finite-N evolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub n_atoms: usize,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    pub dephasing: bool,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub max_trace_drift: f64,
    pub max_hermiticity_residue: f64,
    pub min_eigenvalue: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_top_fock_population: Option<f64>,
    pub cutoff_warning: bool,
    /// Output times whose echo is below the double-precision resolution.
    pub unresolved_points: usize,
    /// Times of interior local maxima of the rate function.
    pub rate_maxima: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalSummary {
    pub t: f64,
    pub k: f64,
    pub from_branch: usize,
    pub to_branch: usize,
    pub slope_left: f64,
    pub slope_right: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticSummary {
    pub branch_count: usize,
    pub max_simultaneous_minima: usize,
    pub gaps: usize,
    pub ties: usize,
    pub critical_times: Vec<CriticalSummary>,
}

impl AsymptoticSummary {
    fn from_rate(res: &AsymptoticRate) -> Self {
        let max_simultaneous_minima = (0..res.times.len()).map(|i| res.minima_at(i).len()).max().unwrap_or(0);
        Self {
            branch_count: res.branches.len(),
            max_simultaneous_minima,
            gaps: res.gaps.len(),
            ties: res.ties.len(),
            critical_times: res
                .critical
                .iter()
                .map(|c| CriticalSummary {
                    t: c.t,
                    k: c.k,
                    from_branch: c.from,
                    to_branch: c.to,
                    slope_left: c.slope_left,
                    slope_right: c.slope_right,
                    significant: c.is_significant(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutSummary {
    pub t: f64,
    pub file: String,
    pub k_minima: usize,
    pub s_minima: usize,
    pub min_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapeSummary {
    pub t: f64,
    pub minima: usize,
    pub missing_nodes: usize,
    pub characteristics: usize,
    pub s_at_mean_field: f64,
    pub cuts: Vec<CutSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FockSummary {
    pub n_mu: usize,
    pub cusp_points: usize,
    /// The cusp time never decreases as m decreases.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionedSummary {
    pub crossings: Vec<f64>,
    pub max_sum_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Summary,
}

/// Runs a scenario and writes its CSVs and summary into `out_dir`. On failure
/// nothing the run created is left behind.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path, options: &RunOptions) -> Result<ScenarioOutput> {
    let wrap = |e: Error| Error::Scenario { scenario: config.name.clone(), source: Box::new(e) };
    config.validate().map_err(wrap)?;
    let seed = options.seed.unwrap_or(config.seed);
    let (tables, mut summary) = compute(config, seed).map_err(wrap)?;
    summary.files = tables.iter().map(|(name, _)| name.clone()).collect();
    summary.files.push(SUMMARY_FILE.into());
    write_outputs(out_dir, &tables, &summary).map_err(wrap)?;
    let files = summary.files.iter().map(|f| out_dir.join(f)).collect();
    Ok(ScenarioOutput { dir: out_dir.to_path_buf(), files, summary })
}

fn write_outputs(out_dir: &Path, tables: &[(String, CsvTable)], summary: &Summary) -> Result<()> {
    let created_dir = !out_dir.exists();
    fs::create_dir_all(out_dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let mut attempt = || -> Result<()> {
        for (name, table) in tables {
            let path = out_dir.join(name);
            written.push(path.clone());
            fs::write(&path, table.render(VERSION))?;
        }
        let path = out_dir.join(SUMMARY_FILE);
        written.push(path.clone());
        let text = toml::to_string(summary).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&path, text)?;
        Ok(())
    };
    let result = attempt();
    if result.is_err() {
        for path in &written {
            let _ = fs::remove_file(path);
        }
        if created_dir {
            let _ = fs::remove_dir(out_dir);
        }
    }
    result
}

type Tables = Vec<(String, CsvTable)>;

fn compute(config: &ScenarioConfig, seed: u64) -> Result<(Tables, Summary)> {
    let mut summary = Summary {
        scenario: config.name.clone(),
        description: config.description.clone(),
        task: config.task,
        version: VERSION.into(),
        seed,
        lambda: config.lambda(),
        files: Vec::new(),
        runs: Vec::new(),
        asymptotic: None,
        landscape: None,
        fock: None,
        conditioned: None,
    };
    let mut tables = Vec::new();
    let times = config.time.grid();
    match config.task {
        Task::Loschmidt => {
            if config.model.kind != ModelKind::Asymptotic {
                let runs: Vec<(CsvTable, RunSummary)> = config
                    .model
                    .n_atoms
                    .par_iter()
                    .map(|&n| loschmidt_run(config, n, &times))
                    .collect::<Result<_>>()?;
                for (&n, (table, run)) in config.model.n_atoms.iter().zip(runs) {
                    tables.push((format!("rate_function_N{n}.csv"), table));
                    summary.runs.push(run);
                }
            }
            if config.model.kind == ModelKind::Asymptotic || config.asymptotic.is_some() {
                let res = dark_asymptotic(config, &times)?;
                tables.extend(asymptotic_tables(config, &res)?);
                summary.asymptotic = Some(AsymptoticSummary::from_rate(&res));
            }
        }
        Task::Conditioned => {
            let (table, run, cond) = conditioned_run(config, config.model.n_atoms[0], &times)?;
            tables.push(("conditioned.csv".into(), table));
            summary.runs.push(run);
            summary.conditioned = Some(cond);
        }
        Task::Landscape => {
            let res = dark_asymptotic(config, &times)?;
            tables.extend(asymptotic_tables(config, &res)?);
            let (land_tables, land) = landscape_tables(config, &res)?;
            tables.extend(land_tables);
            summary.asymptotic = Some(AsymptoticSummary::from_rate(&res));
            summary.landscape = Some(land);
        }
        Task::Fock => {
            let (fock_tables, fock) = fock_tables(config, &times, seed)?;
            tables.extend(fock_tables);
            summary.fock = Some(fock);
        }
    }
    Ok((tables, summary))
}

fn initial_atomic_state(config: &ScenarioConfig, n: usize) -> Result<DensityMatrix> {
    match &config.initial {
        InitialState::Dicke { m } => match m {
            Some(m) => Ok(DickeState::from_m(n, *m)?.density_matrix()),
            None => Ok(DickeState::dark(n).density_matrix()),
        },
        InitialState::Coherent { phi, theta } => {
            let psi = coherent_state_vector(n, SpinCoherentPoint::new(*phi, *theta)?);
            DensityMatrix::pure(Sector::Atomic { n_atoms: n }, &psi)
        }
        InitialState::Mixed => Ok(DensityMatrix::maximally_mixed(Sector::Atomic { n_atoms: n })),
    }
}

fn run_evolution(config: &ScenarioConfig, n: usize, times: &[f64]) -> Result<(EvolutionResult, ModelParams)> {
    let params = config.model_params(n)?;
    let atoms = initial_atomic_state(config, n)?;
    let (generator, rho0) = match config.model.kind {
        ModelKind::Full => {
            let n_max = params.n_max().ok_or_else(|| Error::invalid("n_max", "cannot derive a cavity cutoff"))?;
            (build_full_generator(&params)?, DensityMatrix::product(&atoms, &fock_projector(n_max, 0))?)
        }
        _ => (build_reduced_generator(&params)?, atoms),
    };
    let tol = &config.tolerances;
    Ok((evolve(&generator, &rho0, times, tol.rel, tol.abs)?, params))
}

fn run_summary(n: usize, params: &ModelParams, evo: &EvolutionResult, rates: &[f64], echoes: &[f64]) -> RunSummary {
    let d = &evo.diagnostics;
    let min_eigenvalue = evo.states.par_iter().map(DensityMatrix::min_eigenvalue).reduce(|| f64::INFINITY, f64::min);
    let rate_maxima = (1..rates.len().saturating_sub(1))
        .filter(|&i| rates[i] > rates[i - 1] && rates[i] >= rates[i + 1])
        .map(|i| evo.times[i])
        .collect();
    RunSummary {
        n_atoms: n,
        dim: evo.states[0].dim(),
        n_max: params.g.and(params.n_max()),
        dephasing: params.include_dephasing,
        accepted_steps: d.steps.accepted,
        rejected_steps: d.steps.rejected,
        max_trace_drift: d.max_trace_drift,
        max_hermiticity_residue: d.max_hermiticity_residue,
        min_eigenvalue,
        max_top_fock_population: d.max_top_fock_population,
        cutoff_warning: d.cutoff_warning,
        unresolved_points: echoes.iter().filter(|&&l| l < ECHO_RESOLUTION).count(),
        rate_maxima,
    }
}

fn loschmidt_run(config: &ScenarioConfig, n: usize, times: &[f64]) -> Result<(CsvTable, RunSummary)> {
    let (evo, params) = run_evolution(config, n, times)?;
    let a0 = atomic_state(&evo.states[0])?;
    let echoes: Vec<f64> =
        evo.states.iter().map(|rho| loschmidt_echo(&atomic_state(rho)?, &a0)).collect::<Result<_>>()?;
    let rates: Vec<f64> = echoes.iter().map(|&l| rate_function(l, n)).collect();
    let mut table = CsvTable::new(["t", "L", "r", "resolved"]);
    for ((&t, &l), &r) in times.iter().zip(&echoes).zip(&rates) {
        table.push(vec![t.into(), l.into(), r.into(), Cell::Int((l >= ECHO_RESOLUTION) as i64)]);
    }
    let summary = run_summary(n, &params, &evo, &rates, &echoes);
    Ok((table, summary))
}

fn conditioned_run(
    config: &ScenarioConfig,
    n: usize,
    times: &[f64],
) -> Result<(CsvTable, RunSummary, ConditionedSummary)> {
    let (evo, params) = run_evolution(config, n, times)?;
    let Sector::AtomsCavity { n_max, .. } = evo.states[0].sector() else {
        return Err(Error::WrongSector { expected: "atoms⊗cavity", found: evo.states[0].sector().to_string() });
    };
    let povm = build_halfplane_povm(n_max)?;
    let a0 = atomic_state(&evo.states[0])?;
    let mut table = CsvTable::new(["t", "L", "L_plus", "L_minus", "r", "r_plus", "r_minus"]);
    let (mut echoes, mut rates, mut plus, mut minus) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut max_sum_residual: f64 = 0.0;
    for (&t, rho) in times.iter().zip(&evo.states) {
        let l = loschmidt_echo(&atomic_state(rho)?, &a0)?;
        let (lp, lm) = conditioned_echoes(rho, &povm, &a0)?;
        max_sum_residual = max_sum_residual.max((lp + lm - l).abs());
        let (r, rp, rm) = (rate_function(l, n), rate_function(lp, n), rate_function(lm, n));
        table.push(vec![t.into(), l.into(), lp.into(), lm.into(), r.into(), rp.into(), rm.into()]);
        echoes.push(l);
        rates.push(r);
        plus.push(rp);
        minus.push(rm);
    }
    let crossings = branch_crossings(times, &plus, &minus).into_iter().map(|c| c.time).collect();
    let run = run_summary(n, &params, &evo, &rates, &echoes);
    Ok((table, run, ConditionedSummary { crossings, max_sum_residual }))
}

fn dark_asymptotic(config: &ScenarioConfig, times: &[f64]) -> Result<AsymptoticRate> {
    let problem = KProblem::dark_state_quench(config.reduced_model()?);
    let options = config.asymptotic.clone().unwrap_or_default().track_options()?;
    asymptotic_rate(&problem, times, &options)
}

fn asymptotic_tables(config: &ScenarioConfig, res: &AsymptoticRate) -> Result<Tables> {
    let mut rate = CsvTable::new(["t", "r", "branch", "minima"]);
    let mut branches = CsvTable::new(["t", "branch", "K", "phi", "theta", "p0_x", "p0_y", "slope", "det_hessian"]);
    for (i, &t) in res.times.iter().enumerate() {
        rate.push(vec![t.into(), res.rate[i].into(), res.argmin[i].into(), res.minima_at(i).len().into()]);
        for b in &res.branches {
            if let Some(s) = b.samples[i] {
                branches.push(vec![
                    t.into(),
                    b.id.into(),
                    s.k.into(),
                    s.phi.into(),
                    s.theta.into(),
                    s.p0[0].into(),
                    s.p0[1].into(),
                    s.slope().into(),
                    s.det_hessian_sphere.into(),
                ]);
            }
        }
    }
    let mut critical = CsvTable::new(["t", "K", "from", "to", "slope_left", "slope_right", "significant"]);
    for c in &res.critical {
        critical.push(vec![
            c.t.into(),
            c.k.into(),
            c.from.into(),
            c.to.into(),
            c.slope_left.into(),
            c.slope_right.into(),
            Cell::Int(c.is_significant() as i64),
        ]);
    }
    let mut out = vec![
        ("rate_function_asymptotic.csv".to_string(), rate),
        ("asymptotic_branches.csv".to_string(), branches),
        ("critical_times.csv".to_string(), critical),
    ];
    if config.asymptotic.as_ref().is_some_and(|a| a.corrected) {
        let mut corrected = CsvTable::new(["t", "N", "r_unit", "r_transported"]);
        for &n in &config.model.n_atoms {
            for (i, &t) in res.times.iter().enumerate() {
                let minima = res.minima_at(i);
                let estimate = |mode| finite_n_rate_correction(&minima, n, mode).ok().map(|c| c.rate);
                let (unit, transported) = if t == 0.0 {
                    (Some(res.rate[i]), Some(res.rate[i]))
                } else {
                    (estimate(PrefactorMode::Unit), estimate(PrefactorMode::Transported))
                };
                corrected.push(vec![t.into(), n.into(), unit.into(), transported.into()]);
            }
        }
        out.push(("rate_function_corrected.csv".to_string(), corrected));
    }
    Ok(out)
}

fn landscape_tables(config: &ScenarioConfig, res: &AsymptoticRate) -> Result<(Tables, LandscapeSummary)> {
    let l = config.landscape.as_ref().ok_or_else(|| Error::Config("missing [landscape]".into()))?;
    let t_land = match l.time {
        Some(t) => t,
        None => res
            .significant_kinks()
            .first()
            .map(|c| c.t)
            .ok_or_else(|| Error::Config("no kink found to place the landscape at; set landscape.time".into()))?,
    };
    let problem = KProblem::dark_state_quench(config.reduced_model()?);
    let fan = MomentumFan::log_radial(l.fan_r_min, l.fan_r_max, l.fan_radii, l.fan_angles)?;
    let grid = GridSpec { n_phi: l.n_phi, n_theta: l.n_theta };
    let options = LandscapeOptions { max_span: l.max_span, max_depth: l.max_depth };
    let land = k_landscape(&problem, t_land, &fan, grid, &options)?;
    let mut table = CsvTable::new(["phi", "theta", "S", "W", "K"]);
    for i in 0..grid.n_phi {
        for j in 0..grid.n_theta {
            let idx = land.index(i, j);
            table.push(vec![grid.phi(i).into(), grid.theta(j).into(), land.s[idx].into(), land.w[idx].into(), land.k[idx].into()]);
        }
    }
    let mut minima = CsvTable::new(["phi", "theta", "K", "S", "W", "det_hessian"]);
    for m in &land.minima {
        minima.push(vec![m.phi.into(), m.theta.into(), m.k.into(), m.s.into(), m.w.into(), m.det_hessian_sphere.into()]);
    }
    let mut tables = vec![("landscape.csv".to_string(), table), ("landscape_minima.csv".to_string(), minima)];
    let mut cut_times: Vec<f64> = l.cut_times.clone();
    cut_times.extend(l.cut_offsets.iter().map(|d| t_land + d));
    let mut cuts = Vec::new();
    for &t in &cut_times {
        if !(t > 0.0) {
            return Err(Error::Config(format!("cut time {t} is not positive")));
        }
        let cut = symmetry_cut(&problem, t, l.n_psi, l.q_max)?;
        let mut table = CsvTable::new(["psi", "phi", "theta", "S", "W", "K"]);
        for i in 0..cut.psi.len() {
            let (phi, theta) = cut.phi_theta(i);
            table.push(vec![cut.psi[i].into(), phi.into(), theta.into(), cut.s[i].into(), cut.w[i].into(), cut.k[i].into()]);
        }
        let file = format!("cut_t{t:.6}.csv");
        cuts.push(CutSummary {
            t,
            file: file.clone(),
            k_minima: cut.k_minima().len(),
            s_minima: cut.s_minima().len(),
            min_s: cut.s.iter().flatten().copied().fold(f64::INFINITY, f64::min),
        });
        tables.push((file, table));
    }
    let summary = LandscapeSummary {
        t: t_land,
        minima: land.minima.len(),
        missing_nodes: land.missing(),
        characteristics: land.characteristics,
        s_at_mean_field: land.s_at_mean_field,
        cuts,
    };
    Ok((tables, summary))
}

fn fock_tables(config: &ScenarioConfig, times: &[f64], seed: u64) -> Result<(Tables, FockSummary)> {
    let f = config.fock.as_ref().ok_or_else(|| Error::Config("missing [fock]".into()))?;
    let mus = f.mus();
    let model = config.reduced_model()?;
    let options = config.asymptotic.clone().unwrap_or_default().track_options()?;
    // the order of the μ searches is shuffled; results are stored by index
    let mut order: Vec<usize> = (0..mus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut results: Vec<Option<AsymptoticRate>> = vec![None; mus.len()];
    let computed: Vec<(usize, AsymptoticRate)> = order
        .par_iter()
        .map(|&i| {
            let problem = KProblem::dark_state_quench(model).with_overlap(LatitudeOverlap::new(mus[i])?);
            Ok((i, asymptotic_rate(&problem, times, &options)?))
        })
        .collect::<Result<_>>()?;
    for (i, r) in computed {
        results[i] = Some(r);
    }
    let results: Vec<AsymptoticRate> = results.into_iter().map(Option::unwrap).collect();
    let mut rates = CsvTable::new(["t", "m", "r_m"]);
    for (i, &t) in times.iter().enumerate() {
        for (mu, res) in mus.iter().zip(&results) {
            rates.push(vec![t.into(), (mu - 0.5).into(), res.rate[i].into()]);
        }
    }
    let mut cusp = CsvTable::new(["m", "mu", "t", "K"]);
    let mut line: Vec<(f64, f64)> = Vec::new();
    for (mu, res) in mus.iter().zip(&results).rev() {
        let kink = res.significant_kinks().first().copied();
        cusp.push(vec![(mu - 0.5).into(), (*mu).into(), kink.map(|c| c.t).into(), kink.map(|c| c.k).into()]);
        if let Some(c) = kink {
            line.push((mu - 0.5, c.t));
        }
    }
    let monotone = line.windows(2).all(|w| w[1].1 >= w[0].1);
    let summary = FockSummary { n_mu: mus.len(), cusp_points: line.len(), monotone };
    Ok((vec![("fock_rates.csv".to_string(), rates), ("cusp_line.csv".to_string(), cusp)], summary))
}
