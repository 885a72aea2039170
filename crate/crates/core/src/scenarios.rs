//! Experiment definitions and their TOML file format.
//!
//! A scenario file has the sections `[grid]`, `[potentials]`, `[time]`,
//! `[gpc]`, `[methods]` and `[expect]`; unknown keys are rejected.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{ReferenceSpec, DEFAULT_SPACE_REFINEMENT, DEFAULT_TIME_REFINEMENT};
use crate::driver::step_count;
use crate::experiments::{Axis, BdsgConfig, Candidate, Problem, SweepPlan};
use crate::lattice::{cell_count, LatticeKind, RandomKind};
use crate::scalar::{lit, Real};

pub const DEFAULT_MC_SAMPLES: usize = 1000;
pub const DEFAULT_SC_NODES: usize = 5;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario encoding: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error("scenario `{name}`: {message}")]
    Invalid { name: String, message: String },
    #[error("no builtin scenario named `{0}`")]
    Unknown(String),
}

/// Grid spacing `Δx = π/n`, written `"pi/n"` in files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Spacing(pub usize);

impl Spacing {
    pub fn value(self) -> f64 {
        std::f64::consts::PI / self.0 as f64
    }

    /// `LR = 2n`.
    pub fn points(self) -> usize {
        2 * self.0
    }
}

impl fmt::Display for Spacing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pi/{}", self.0)
    }
}

impl FromStr for Spacing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n = s
            .trim()
            .strip_prefix("pi/")
            .ok_or_else(|| format!("spacing `{s}` must look like pi/N"))?;
        match n.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Spacing(n)),
            _ => Err(format!("spacing `{s}` needs a positive integer denominator")),
        }
    }
}

impl TryFrom<String> for Spacing {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Spacing> for String {
    fn from(s: Spacing) -> String {
        s.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bdsg,
    TsMc,
    TsSc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bdsg => "bdsg",
            Method::TsMc => "ts-mc",
            Method::TsSc => "ts-sc",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bdsg" => Ok(Method::Bdsg),
            "ts-mc" => Ok(Method::TsMc),
            "ts-sc" => Ok(Method::TsSc),
            other => Err(format!("unknown method `{other}` (bdsg, ts-mc, ts-sc)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub epsilon: f64,
    pub dx: Spacing,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dx_levels: Vec<Spacing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<usize>,
    #[serde(default)]
    pub heavy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub lattice: LatticeKind,
    pub random: RandomKind,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sigma_levels: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dt_levels: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpcSection {
    pub order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub order_levels: Vec<usize>,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Bdsg]
}

fn is_default_methods(m: &[Method]) -> bool {
    m == [Method::Bdsg]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    #[serde(default = "default_methods", skip_serializing_if = "is_default_methods")]
    pub list: Vec<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mc_levels: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sc_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sc_levels: Vec<usize>,
    /// Time step of the TS baselines (defaults to `[time] dt`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_dt: Option<f64>,
    /// Grid of the TS baselines (defaults to `[grid] dx`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_dx: Option<Spacing>,
    /// Reference collocation nodes (at least `2Q+5` is enforced).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_nodes: Option<usize>,
    /// Reference `Δt` is the finest experiment step divided by this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_time_refinement: Option<usize>,
    /// Reference `Δx` is the finest experiment spacing divided by this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_space_refinement: Option<usize>,
}

impl Default for MethodSection {
    fn default() -> Self {
        MethodSection {
            list: default_methods(),
            mc_samples: None,
            mc_levels: Vec::new(),
            seed: 0,
            sc_nodes: None,
            sc_levels: Vec::new(),
            baseline_dt: None,
            baseline_dx: None,
            reference_nodes: None,
            reference_time_refinement: None,
            reference_space_refinement: None,
        }
    }
}

/// One expected error pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedRow {
    pub method: Method,
    /// Value of the swept parameter (`Δt`, `Δx`, `Q`, `K`, nodes) or of the
    /// single configuration for comparisons.
    pub level: f64,
    pub mean: f64,
    pub density: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Axis>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<ExpectedRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub grid: GridSection,
    pub potentials: PotentialSection,
    pub time: TimeSection,
    pub gpc: GpcSection,
    #[serde(default)]
    pub methods: MethodSection,
    #[serde(default)]
    pub expect: ExpectSection,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(self)?)
    }

    fn invalid(&self, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Invalid {
            name: self.name.clone(),
            message: message.into(),
        }
    }

    /// Checks grid consistency and that every time step divides `T`.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let cells = cell_count(self.grid.epsilon).map_err(|e| self.invalid(e.to_string()))?;
        let spacings = std::iter::once(self.grid.dx)
            .chain(self.grid.dx_levels.iter().copied())
            .chain(self.methods.baseline_dx);
        for dx in spacings {
            let n = dx.points();
            if n % cells != 0 || (n / cells) % 2 != 0 || n / cells < 4 {
                return Err(self.invalid(format!(
                    "dx = {dx} gives {n} points, not an even number (at least 4) per each of {cells} cells"
                )));
            }
        }
        let steps = std::iter::once(self.time.dt)
            .chain(self.time.dt_levels.iter().copied())
            .chain(self.methods.baseline_dt);
        for dt in steps {
            step_count(self.time.t_final, dt).map_err(|e| self.invalid(e.to_string()))?;
        }
        if self.methods.list.is_empty() {
            return Err(self.invalid("method list is empty"));
        }
        Ok(())
    }

    pub fn problem<T: Real>(&self) -> Problem<T> {
        Problem {
            lattice: self.potentials.lattice.potential(),
            random: self.potentials.random.potential(self.potentials.sigma),
            epsilon: self.grid.epsilon,
            t_final: self.time.t_final,
        }
    }

    pub fn bdsg_config(&self) -> BdsgConfig {
        BdsgConfig {
            points: self.grid.dx.points(),
            dt: self.time.dt,
            order: self.gpc.order,
            bands: self.grid.bands,
            quadrature_nodes: self.gpc.quadrature_nodes,
        }
    }

    pub fn baseline_dt(&self) -> f64 {
        self.methods.baseline_dt.unwrap_or(self.time.dt)
    }

    pub fn baseline_points(&self) -> usize {
        self.methods.baseline_dx.unwrap_or(self.grid.dx).points()
    }

    /// Levels of `axis` declared by the scenario.
    pub fn levels(&self, axis: Axis) -> Vec<f64> {
        match axis {
            Axis::Dt => self.time.dt_levels.clone(),
            Axis::Dx => self.grid.dx_levels.iter().map(|s| s.value()).collect(),
            Axis::Gpc => self.gpc.order_levels.iter().map(|&q| q as f64).collect(),
            Axis::McK => self.methods.mc_levels.iter().map(|&k| k as f64).collect(),
            Axis::ScN => self.methods.sc_levels.iter().map(|&k| k as f64).collect(),
        }
    }

    /// Reference covering every configuration the scenario runs.
    pub fn reference_spec(&self) -> ReferenceSpec {
        let mut finest_dt = self
            .time
            .dt_levels
            .iter()
            .copied()
            .fold(self.time.dt, f64::min);
        let mut finest_points = self
            .grid
            .dx_levels
            .iter()
            .map(|s| s.points())
            .fold(self.grid.dx.points(), usize::max);
        if self.methods.list.iter().any(|m| *m != Method::Bdsg) || !self.methods.mc_levels.is_empty() || !self.methods.sc_levels.is_empty() {
            finest_dt = finest_dt.min(self.baseline_dt());
            finest_points = finest_points.max(self.baseline_points());
        }
        let max_order = self.gpc.order_levels.iter().copied().fold(self.gpc.order, usize::max);
        let max_sc = self.methods.sc_levels.iter().copied().chain(self.methods.sc_nodes).max().unwrap_or(0);
        let time_ref = self.methods.reference_time_refinement.unwrap_or(DEFAULT_TIME_REFINEMENT);
        let space_ref = self.methods.reference_space_refinement.unwrap_or(DEFAULT_SPACE_REFINEMENT);
        let nodes = (2 * max_order + 5)
            .max(max_sc + 4)
            .max(self.methods.reference_nodes.unwrap_or(0));
        let problem = self.problem::<f64>();
        ReferenceSpec::for_experiment(
            &problem.lattice,
            &problem.random,
            self.grid.epsilon,
            self.time.t_final,
            finest_dt,
            finest_points,
            max_order,
        )
        .with_points(finest_points * space_ref)
        .with_time_step(finest_dt / time_ref as f64)
        .with_nodes(nodes)
    }

    pub fn sweep_plan(&self, axis: Axis) -> Result<SweepPlan, ScenarioError> {
        let levels = self.levels(axis);
        if levels.is_empty() {
            return Err(self.invalid(format!("no levels declared for axis {}", axis.name())));
        }
        Ok(SweepPlan {
            axis,
            levels,
            base: self.bdsg_config(),
            reference: self.reference_spec(),
            seed: self.methods.seed,
            baseline_dt: Some(self.baseline_dt()),
            baseline_points: Some(self.baseline_points()),
        })
    }

    /// Configuration of `method` at the scenario's nominal settings.
    pub fn candidate(&self, method: Method) -> Candidate {
        match method {
            Method::Bdsg => Candidate::Bdsg(self.bdsg_config()),
            Method::TsMc => Candidate::TsMc {
                points: self.baseline_points(),
                dt: self.baseline_dt(),
                samples: self.methods.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES),
                seed: self.methods.seed,
            },
            Method::TsSc => Candidate::TsSc {
                points: self.baseline_points(),
                dt: self.baseline_dt(),
                nodes: self.methods.sc_nodes.unwrap_or(DEFAULT_SC_NODES),
            },
        }
    }

    pub fn candidates(&self) -> Vec<Candidate> {
        self.methods.list.iter().map(|&m| self.candidate(m)).collect()
    }

    pub fn sigma_levels(&self) -> Vec<f64> {
        if self.potentials.sigma_levels.is_empty() {
            vec![self.potentials.sigma]
        } else {
            self.potentials.sigma_levels.clone()
        }
    }

    /// `ε` in working precision.
    pub fn epsilon<T: Real>(&self) -> T {
        lit(self.grid.epsilon)
    }
}

struct Builder(Scenario);

impl Builder {
    fn new(name: &str, description: &str, lattice: LatticeKind, random: RandomKind) -> Self {
        Builder(Scenario {
            name: name.into(),
            description: description.into(),
            grid: GridSection {
                epsilon: 0.25,
                dx: Spacing(128),
                dx_levels: Vec::new(),
                bands: None,
                heavy: false,
            },
            potentials: PotentialSection {
                lattice,
                random,
                sigma: 0.0,
                sigma_levels: Vec::new(),
            },
            time: TimeSection {
                t_final: 1.0,
                dt: 0.01,
                dt_levels: Vec::new(),
                output_every: None,
            },
            gpc: GpcSection {
                order: 4,
                quadrature_nodes: None,
                order_levels: Vec::new(),
            },
            methods: MethodSection::default(),
            expect: ExpectSection::default(),
        })
    }

    fn grid(mut self, epsilon_inverse: usize, dx: usize) -> Self {
        self.0.grid.epsilon = 1.0 / epsilon_inverse as f64;
        self.0.grid.dx = Spacing(dx);
        self.0.grid.heavy = epsilon_inverse >= 512;
        self
    }

    fn time(mut self, t_final: f64, dt: f64) -> Self {
        self.0.time.t_final = t_final;
        self.0.time.dt = dt;
        self
    }

    fn order(mut self, q: usize) -> Self {
        self.0.gpc.order = q;
        self
    }

    fn dt_sweep(mut self, inverses: &[usize], mean: &[f64], density: &[f64]) -> Self {
        let levels: Vec<f64> = inverses.iter().map(|&n| 1.0 / n as f64).collect();
        self.0.time.dt = *levels.last().expect("levels");
        self.0.expect.axis = Some(Axis::Dt);
        self.0.expect.rows = rows(Method::Bdsg, &levels, mean, density);
        self.0.time.dt_levels = levels;
        self
    }

    fn dx_sweep(mut self, denominators: &[usize], mean: &[f64], density: &[f64]) -> Self {
        let spacings: Vec<Spacing> = denominators.iter().map(|&n| Spacing(n)).collect();
        self.0.grid.dx = *spacings.last().expect("levels");
        let levels: Vec<f64> = spacings.iter().map(|s| s.value()).collect();
        self.0.expect.axis = Some(Axis::Dx);
        self.0.expect.rows = rows(Method::Bdsg, &levels, mean, density);
        self.0.grid.dx_levels = spacings;
        self
    }

    fn order_sweep(mut self, max: usize) -> Self {
        self.0.gpc.order_levels = (0..=max).collect();
        self.0.expect.axis = Some(Axis::Gpc);
        self
    }

    fn heavy(mut self) -> Self {
        self.0.grid.heavy = true;
        self
    }

    fn with(mut self, f: impl FnOnce(&mut Scenario)) -> Self {
        f(&mut self.0);
        self
    }

    fn build(self) -> Scenario {
        self.0
    }
}

fn rows(method: Method, levels: &[f64], mean: &[f64], density: &[f64]) -> Vec<ExpectedRow> {
    if mean.is_empty() {
        return Vec::new();
    }
    levels
        .iter()
        .zip(mean)
        .zip(density)
        .map(|((&level, &mean), &density)| ExpectedRow {
            method,
            level,
            mean,
            density,
        })
        .collect()
}

fn row(method: Method, level: f64, mean: f64, density: f64) -> ExpectedRow {
    ExpectedRow {
        method,
        level,
        mean,
        density,
    }
}

/// Every canonical experiment.
pub fn builtin_scenarios() -> Vec<Scenario> {
    use LatticeKind::{KronigPenney, Mathieu, WeakMathieu};
    use RandomKind::{AndersonCosine, HarmonicNoise, LinearForce, StepDecay};
    // Spacing sweeps start at four points per cell.
    vec![
        Builder::new("t1a", "Mathieu lattice, harmonic noise: time-step sweep at eps=1/4", Mathieu, HarmonicNoise)
            .grid(4, 128)
            .time(1.0, 0.03125)
            .order(4)
            .dt_sweep(
                &[2, 4, 8, 16, 32],
                &[1.36e-1, 3.14e-2, 7.70e-3, 1.91e-3, 4.78e-4],
                &[1.16e-1, 2.63e-2, 6.42e-3, 1.60e-3, 3.99e-4],
            )
            .build(),
        Builder::new("t1b", "Mathieu lattice, harmonic noise: time-step sweep at eps=1/64", Mathieu, HarmonicNoise)
            .grid(64, 512)
            .time(0.2, 1.0 / 160.0)
            .order(8)
            .dt_sweep(
                &[10, 20, 40, 80, 160],
                &[1.26e-1, 1.53e-3, 2.50e-4, 6.22e-5, 1.55e-5],
                &[2.22e-2, 1.97e-3, 3.79e-4, 9.40e-5, 2.33e-5],
            )
            .build(),
        Builder::new("t1c", "Mathieu lattice, harmonic noise: time-step sweep at eps=1/512", Mathieu, HarmonicNoise)
            .grid(512, 16384)
            .time(0.02, 1.0 / 800.0)
            .order(8)
            .dt_sweep(
                &[50, 100, 200, 400, 800],
                &[3.30e-3, 1.03e-3, 1.44e-4, 3.13e-5, 7.76e-6],
                &[8.13e-3, 2.65e-3, 2.34e-4, 5.68e-5, 1.40e-5],
            )
            .build(),
        Builder::new("t2a", "Kronig-Penney lattice, harmonic noise: time-step sweep at eps=1/4", KronigPenney, HarmonicNoise)
            .grid(4, 256)
            .time(1.0, 1.0 / 16.0)
            .order(8)
            .dt_sweep(
                &[1, 2, 4, 8, 16],
                &[5.72e-1, 1.05e-1, 2.58e-2, 6.32e-3, 1.74e-3],
                &[3.42e-1, 6.88e-2, 1.65e-2, 4.06e-3, 1.03e-3],
            )
            .build(),
        Builder::new("t2b", "Kronig-Penney lattice, harmonic noise: time-step sweep at eps=1/16", KronigPenney, HarmonicNoise)
            .grid(16, 512)
            .time(0.5, 1.0 / 32.0)
            .order(8)
            .dt_sweep(
                &[2, 4, 8, 16, 32],
                &[1.21e-1, 3.08e-2, 7.02e-3, 1.96e-3, 5.79e-4],
                &[1.54e-1, 3.27e-2, 6.90e-3, 1.72e-3, 4.51e-4],
            )
            .build(),
        Builder::new("t3a", "Mathieu lattice, step-decay potential: spacing sweep at eps=1/512", Mathieu, StepDecay)
            .grid(512, 4096)
            .time(0.02, 1.0 / 500.0)
            .order(8)
            .dx_sweep(
                &[1024, 2048, 4096],
                &[4.21e-1, 4.72e-3, 3.29e-6],
                &[1.99e0, 1.95e-2, 9.51e-6],
            )
            .build(),
        Builder::new("t3b", "Mathieu lattice, step-decay potential: spacing sweep at eps=1/1024", Mathieu, StepDecay)
            .grid(1024, 8192)
            .time(0.01, 1.0 / 1000.0)
            .order(8)
            .dx_sweep(
                &[2048, 4096, 8192],
                &[4.12e-1, 4.83e-3, 4.24e-6],
                &[2.01e0, 2.00e-2, 5.58e-6],
            )
            .build(),
        Builder::new("t4a", "Kronig-Penney lattice, step-decay potential: spacing sweep at eps=1/64", KronigPenney, StepDecay)
            .grid(64, 512)
            .time(0.05, 1.0 / 200.0)
            .order(8)
            .dx_sweep(&[128, 256, 512], &[4.71e0, 3.57e-1, 1.82e-2], &[6.56e0, 6.17e-1, 3.67e-2])
            .build(),
        Builder::new("t4b", "Kronig-Penney lattice, step-decay potential: spacing sweep at eps=1/1024", KronigPenney, StepDecay)
            .grid(1024, 8192)
            .time(0.01, 1.0 / 600.0)
            .order(8)
            .dx_sweep(
                &[2048, 4096, 8192],
                &[4.80e-1, 5.81e-2, 1.98e-3],
                &[1.90e0, 1.88e-1, 5.49e-3],
            )
            .build(),
        Builder::new("f1a", "Mathieu lattice, harmonic noise: gPC order sweep at eps=1/4", Mathieu, HarmonicNoise)
            .grid(4, 128)
            .time(1.0, 0.01)
            .order(8)
            .order_sweep(8)
            .build(),
        Builder::new("f1b", "Mathieu lattice, harmonic noise: gPC order sweep at eps=1/256", Mathieu, HarmonicNoise)
            .grid(256, 4096)
            .time(0.05, 0.0005)
            .order(8)
            .order_sweep(8)
            .build(),
        Builder::new("f2a", "Kronig-Penney lattice, harmonic noise: gPC order sweep at eps=1/4", KronigPenney, HarmonicNoise)
            .grid(4, 256)
            .time(1.0, 0.1)
            .order(8)
            .order_sweep(8)
            .build(),
        Builder::new("f2b", "Kronig-Penney lattice, harmonic noise: gPC order sweep at eps=1/64", KronigPenney, HarmonicNoise)
            .grid(64, 4096)
            .time(0.22, 0.0025)
            .order(8)
            .order_sweep(8)
            .build(),
        Builder::new("t5", "Mathieu lattice, random force: BD-SG against Monte Carlo time splitting", Mathieu, LinearForce)
            .grid(4, 128)
            .time(1.0, 0.01)
            .order(4)
            .with(|s| {
                s.methods.list = vec![Method::Bdsg, Method::TsMc];
                s.methods.mc_samples = Some(1000);
                s.methods.mc_levels = vec![10, 100, 1000, 10000];
                s.methods.seed = 20_240_501;
                s.expect.axis = Some(Axis::McK);
                s.expect.rows = rows(
                    Method::TsMc,
                    &[10.0, 100.0, 1000.0, 10000.0],
                    &[1.36e-1, 4.61e-2, 1.14e-2, 8.91e-3],
                    &[5.87e-3, 2.93e-3, 2.84e-3, 2.84e-3],
                );
                s.expect.rows.push(row(Method::Bdsg, 4.0, 4.25e-3, 2.88e-3));
            })
            .build(),
        Builder::new("t6a", "Mathieu lattice, harmonic noise: BD-SG against collocation time splitting at eps=1/4", Mathieu, HarmonicNoise)
            .grid(4, 128)
            .time(1.0, 0.01)
            .order(4)
            .with(|s| {
                s.methods.list = vec![Method::Bdsg, Method::TsSc];
                s.methods.sc_nodes = Some(5);
                s.methods.sc_levels = vec![5];
                s.expect.rows = vec![row(Method::Bdsg, 4.0, 4.90e-5, 4.08e-5), row(Method::TsSc, 5.0, 1.82e-4, 8.80e-5)];
            })
            .build(),
        Builder::new("t6b", "Mathieu lattice, harmonic noise: BD-SG against collocation time splitting at eps=1/1024", Mathieu, HarmonicNoise)
            .grid(1024, 8192)
            .time(0.01, 0.001)
            .order(4)
            .with(|s| {
                s.methods.list = vec![Method::Bdsg, Method::TsSc];
                s.methods.sc_nodes = Some(5);
                s.methods.sc_levels = vec![5];
                s.methods.baseline_dt = Some(0.000004);
                s.expect.rows = vec![row(Method::Bdsg, 4.0, 1.96e-3, 1.83e-5), row(Method::TsSc, 5.0, 1.96e-3, 4.40e-5)];
            })
            .build(),
        Builder::new("t7a", "Kronig-Penney lattice, random force: BD-SG against collocation time splitting at eps=1/4", KronigPenney, LinearForce)
            .grid(4, 128)
            .time(1.0, 0.1)
            .order(4)
            .with(|s| {
                s.methods.list = vec![Method::Bdsg, Method::TsSc];
                s.methods.sc_nodes = Some(5);
                s.methods.sc_levels = vec![5];
                s.methods.baseline_dt = Some(0.001);
                s.methods.baseline_dx = Some(Spacing(256));
                s.expect.rows = vec![row(Method::Bdsg, 4.0, 1.35e-2, 9.03e-3), row(Method::TsSc, 5.0, 2.83e-2, 1.17e-2)];
            })
            .build(),
        Builder::new("t7b", "Kronig-Penney lattice, random force: BD-SG against collocation time splitting at eps=1/1024", KronigPenney, LinearForce)
            .grid(1024, 8192)
            .time(0.01, 0.001)
            .order(4)
            .with(|s| {
                s.methods.list = vec![Method::Bdsg, Method::TsSc];
                s.methods.sc_nodes = Some(5);
                s.methods.sc_levels = vec![5];
                s.methods.baseline_dt = Some(0.00005);
                s.methods.baseline_dx = Some(Spacing(32768));
                s.expect.rows = vec![row(Method::Bdsg, 4.0, 3.44e-3, 1.74e-2), row(Method::TsSc, 5.0, 3.69e-3, 2.20e-2)];
            })
            .build(),
        Builder::new("f6", "Mathieu lattice, step-decay potential: mass and energy over 200 steps at eps=1/4", Mathieu, StepDecay)
            .grid(4, 128)
            .time(1.0, 0.005)
            .order(4)
            .with(|s| s.time.output_every = Some(1))
            .build(),
        Builder::new("f7", "Kronig-Penney lattice, random force: mass and energy over 200 steps at eps=1/1024", KronigPenney, LinearForce)
            .grid(1024, 8192)
            .time(0.01, 0.00005)
            .order(4)
            .with(|s| s.time.output_every = Some(1))
            .heavy()
            .build(),
        Builder::new("f8", "Weak lattice with disorder sigma|z|cos x: second moment for sigma in {0,3,5}", WeakMathieu, AndersonCosine)
            .grid(4, 128)
            .time(1.5, 0.01)
            .order(8)
            .with(|s| {
                s.potentials.sigma_levels = vec![0.0, 3.0, 5.0];
                s.time.output_every = Some(5);
            })
            .build(),
    ]
}

pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| ScenarioError::Unknown(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_format() {
        assert_eq!("pi/128".parse::<Spacing>().unwrap(), Spacing(128));
        assert_eq!(Spacing(128).points(), 256);
        assert!("pi/0".parse::<Spacing>().is_err());
        assert!("3.14/8".parse::<Spacing>().is_err());
        assert_eq!(Spacing(64).to_string(), "pi/64");
    }

    #[test]
    fn builtins_validate_and_round_trip() {
        let all = builtin_scenarios();
        assert!(all.len() >= 20);
        for s in &all {
            s.validate().unwrap();
            let text = s.to_toml().unwrap();
            let back = Scenario::from_toml(&text).unwrap();
            assert_eq!(&back, s, "{text}");
        }
        let mut names: Vec<&str> = all.iter().map(|s| s.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), all.len());
    }

    #[test]
    fn heavy_flags_follow_epsilon() {
        for s in builtin_scenarios() {
            if s.grid.epsilon <= 1.0 / 512.0 {
                assert!(s.grid.heavy, "{}", s.name);
            } else {
                assert!(!s.grid.heavy, "{}", s.name);
            }
        }
    }

    #[test]
    fn expected_rows_present() {
        let t1a = builtin("t1a").unwrap();
        let mean: Vec<f64> = t1a.expect.rows.iter().map(|r| r.mean).collect();
        assert_eq!(mean, vec![1.36e-1, 3.14e-2, 7.70e-3, 1.91e-3, 4.78e-4]);
        assert_eq!(t1a.levels(Axis::Dt), vec![0.5, 0.25, 0.125, 0.0625, 0.03125]);
        let anderson = builtin("f8").unwrap();
        assert_eq!(anderson.sigma_levels()[0], 0.0);
        assert!(builtin("nope").is_err());
    }

    #[test]
    fn unknown_keys_and_bad_grids_rejected() {
        let text = builtin("t1a").unwrap().to_toml().unwrap();
        let extra = text.replace("[grid]\n", "[grid]\ncolour = 3\n");
        assert!(matches!(Scenario::from_toml(&extra), Err(ScenarioError::Parse(_))));
        let bad = text.replace("dx = \"pi/128\"", "dx = \"pi/4\"");
        assert!(matches!(Scenario::from_toml(&bad), Err(ScenarioError::Invalid { .. })));
        let uneven = text.replace("dt = 0.03125", "dt = 0.3");
        assert!(matches!(Scenario::from_toml(&uneven), Err(ScenarioError::Invalid { .. })));
    }

    #[test]
    fn reference_margins() {
        let t1a = builtin("t1a").unwrap();
        let r = t1a.reference_spec();
        assert_eq!(r.nodes, 13);
        assert_eq!(r.points, 512);
        assert_eq!(r.steps(), 1600);
        let t4a = builtin("t4a").unwrap();
        assert_eq!(t4a.reference_spec().points, 2048);
        let t7a = builtin("t7a").unwrap();
        let r = t7a.reference_spec();
        assert_eq!(r.points, 1024);
        assert!(r.dt <= 0.001 / 50.0 + 1e-15);
        let f1a = builtin("f1a").unwrap();
        assert_eq!(f1a.reference_spec().nodes, 21);
    }
}
