//! Convergence sweeps, method comparisons, conservation monitors and
//! second-moment histories built from the solvers.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{monte_carlo, stochastic_collocation, BaselineError, ReferenceFactory, ReferenceSpec, TsRealizations};
use crate::bloch::BlochError;
use crate::diagnostics::{
    error_metrics, field_energy, field_second_moment, second_moment, total_energy, total_mass, DiagnosticsError, ErrorMetrics,
    Statistics,
};
use crate::driver::{BdsgSolver, DriverError, RunSpec, Trajectory};
use crate::gpc::{mode_norms, GpcBasis, GpcError, GpcState};
use crate::lattice::{initial_gaussian, Grid, LatticeError, PeriodicPotential, RandomPotential};
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Grid(#[from] LatticeError),
    #[error(transparent)]
    Bloch(#[from] BlochError),
    #[error(transparent)]
    Gpc(#[from] GpcError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{0}")]
    Invalid(String),
}

/// Potentials, semiclassical parameter and final time.
#[derive(Clone, Debug)]
pub struct Problem<T: Real> {
    pub lattice: PeriodicPotential<T>,
    pub random: RandomPotential<T>,
    pub epsilon: f64,
    pub t_final: f64,
}

/// Discretization of one BD-SG run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdsgConfig {
    /// Total grid points `LR`.
    pub points: usize,
    pub dt: f64,
    pub order: usize,
    pub bands: Option<usize>,
    pub quadrature_nodes: Option<usize>,
}

impl<T: Real> Problem<T> {
    pub fn grid(&self, points: usize) -> Result<Grid<T>, ExperimentError> {
        Ok(Grid::with_total_points(lit(self.epsilon), points)?)
    }

    pub fn solver(&self, cfg: &BdsgConfig) -> Result<BdsgSolver<T>, ExperimentError> {
        let grid = self.grid(cfg.points)?;
        let basis = match cfg.quadrature_nodes {
            Some(n) => GpcBasis::with_quadrature(cfg.order, n)?,
            None => GpcBasis::new(cfg.order),
        };
        let table = crate::bloch::compute_lattice_table(
            &self.lattice,
            &grid,
            cfg.bands.unwrap_or(grid.points_per_cell()),
        )?;
        Ok(BdsgSolver::with_table(table, &self.random, basis)?)
    }

    pub fn initial_state(&self, solver: &BdsgSolver<T>) -> GpcState<T> {
        GpcState::deterministic(&initial_gaussian(solver.grid()), solver.basis().size())
    }

    /// Final-time BD-SG statistics.
    pub fn bdsg_statistics(&self, cfg: &BdsgConfig) -> Result<Statistics<T>, ExperimentError> {
        let solver = self.solver(cfg)?;
        let state = solver.solve(&self.initial_state(&solver), &RunSpec::new(self.t_final, cfg.dt))?;
        Ok(Statistics::from_gpc(&state))
    }

    pub fn ts_realizations(&self, points: usize, dt: f64) -> Result<TsRealizations<T>, ExperimentError> {
        Ok(TsRealizations::new(&self.grid(points)?, &self.lattice, &self.random, self.t_final, dt)?)
    }
}

/// Which discretization parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Dt,
    Dx,
    Gpc,
    McK,
    ScN,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Dt => "dt",
            Axis::Dx => "dx",
            Axis::Gpc => "gpc",
            Axis::McK => "mc-k",
            Axis::ScN => "sc-n",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dt" => Ok(Axis::Dt),
            "dx" => Ok(Axis::Dx),
            "gpc" => Ok(Axis::Gpc),
            "mc-k" => Ok(Axis::McK),
            "sc-n" => Ok(Axis::ScN),
            other => Err(format!("unknown axis `{other}` (dt, dx, gpc, mc-k, sc-n)")),
        }
    }
}

/// One level of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Value of the swept parameter: `Δt`, `Δx`, `Q`, `K` or node count.
    pub level: f64,
    pub errors: ErrorMetrics,
    /// `log2(e_prev/e)` for the mean and density errors (absent on the
    /// first row).
    pub mean_order: Option<f64>,
    pub density_order: Option<f64>,
    pub seconds: f64,
}

/// `log2(e_prev / e)`: the observed order when the parameter halves.
pub fn log2_ratios(errors: &[f64]) -> Vec<Option<f64>> {
    std::iter::once(None)
        .chain(errors.windows(2).map(|w| Some((w[0] / w[1]).log2())))
        .collect()
}

/// Least-squares slope of `ln e` against `ln level`.
pub fn loglog_slope(levels: &[f64], errors: &[f64]) -> f64 {
    let n = levels.len() as f64;
    let xs: Vec<f64> = levels.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Everything a sweep needs besides the problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub axis: Axis,
    pub levels: Vec<f64>,
    pub base: BdsgConfig,
    pub reference: ReferenceSpec,
    /// Seed of the Monte Carlo axis.
    pub seed: u64,
    /// Time step of the TS baselines on the `mc-k` and `sc-n` axes.
    pub baseline_dt: Option<f64>,
    /// Grid of the TS baselines.
    pub baseline_points: Option<usize>,
}

/// Grid points `LR` for a spacing `Δx = 2π/(LR)`.
pub fn points_for_spacing(dx: f64) -> usize {
    (2.0 * std::f64::consts::PI / dx).round() as usize
}

/// Runs every level and measures errors against the (cached) reference.
pub fn sweep<T: Real>(
    problem: &Problem<T>,
    plan: &SweepPlan,
    factory: &ReferenceFactory,
) -> Result<Vec<SweepRow>, ExperimentError> {
    if plan.levels.is_empty() {
        return Err(ExperimentError::Invalid("sweep has no levels".into()));
    }
    let fine = factory.fine(&plan.reference, &problem.lattice, &problem.random)?;
    let mut rows = Vec::with_capacity(plan.levels.len());
    for &level in &plan.levels {
        let start = Instant::now();
        let mut cfg = plan.base;
        let stats = match plan.axis {
            Axis::Dt => {
                cfg.dt = level;
                problem.bdsg_statistics(&cfg)?
            }
            Axis::Dx => {
                cfg.points = points_for_spacing(level);
                problem.bdsg_statistics(&cfg)?
            }
            Axis::Gpc => {
                cfg.order = level as usize;
                problem.bdsg_statistics(&cfg)?
            }
            Axis::McK => {
                let r = problem.ts_realizations(
                    plan.baseline_points.unwrap_or(cfg.points),
                    plan.baseline_dt.unwrap_or(cfg.dt),
                )?;
                monte_carlo(&r, level as usize, plan.seed)?
            }
            Axis::ScN => {
                let r = problem.ts_realizations(
                    plan.baseline_points.unwrap_or(cfg.points),
                    plan.baseline_dt.unwrap_or(cfg.dt),
                )?;
                stochastic_collocation(&r, level as usize)?.into_statistics()
            }
        };
        let reference = fine.restrict_to(stats.grid()).ok_or(BaselineError::NotNested {
            fine: plan.reference.points,
            coarse: stats.grid().len(),
        })?;
        let errors = error_metrics(&stats, &reference)?;
        log::info!(
            "{}={level}: mean {:.3e} den {:.3e}",
            plan.axis.name(),
            errors.mean,
            errors.density
        );
        rows.push(SweepRow {
            level,
            errors,
            mean_order: None,
            density_order: None,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    let mean: Vec<f64> = rows.iter().map(|r| r.errors.mean).collect();
    let den: Vec<f64> = rows.iter().map(|r| r.errors.density).collect();
    for ((row, m), d) in rows.iter_mut().zip(log2_ratios(&mean)).zip(log2_ratios(&den)) {
        row.mean_order = m;
        row.density_order = d;
    }
    Ok(rows)
}

/// Mass, energy and second moment along a BD-SG trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservedRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub second_moment: f64,
}

pub fn conserved_quantities<T: Real>(
    solver: &BdsgSolver<T>,
    lattice: &PeriodicPotential<T>,
    trajectory: &Trajectory<T>,
) -> Result<Vec<ConservedRow>, ExperimentError> {
    let v = lattice.sample_grid(solver.grid());
    trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .map(|(&t, s)| {
            Ok(ConservedRow {
                t,
                mass: to_f64(total_mass(s)),
                energy: to_f64(total_energy(s, &v, solver.coupling())?),
                second_moment: to_f64(second_moment(s)),
            })
        })
        .collect()
}

/// Largest `|q(t)/q(0) - 1|` over a history.
pub fn max_relative_drift(values: &[f64]) -> f64 {
    let q0 = values[0];
    values.iter().map(|q| (q / q0 - 1.0).abs()).fold(0.0, f64::max)
}

/// `S(t)` histories for several disorder strengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentHistory {
    pub sigma: f64,
    pub times: Vec<f64>,
    pub second_moment: Vec<f64>,
    /// `‖ψ̂_p‖` at the final time.
    pub mode_norms: Vec<f64>,
}

impl MomentHistory {
    /// Least-squares slope of `S` over `t ∈ [t0, t1]`.
    pub fn slope(&self, t0: f64, t1: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.second_moment)
            .filter(|(t, _)| **t >= t0 - 1e-12 && **t <= t1 + 1e-12)
            .map(|(&t, &s)| (t, s))
            .collect();
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ms = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let num: f64 = pts.iter().map(|(t, s)| (t - mt) * (s - ms)).sum();
        let den: f64 = pts.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
        num / den
    }

    pub fn final_value(&self) -> f64 {
        *self.second_moment.last().expect("non-empty history")
    }
}

/// Runs the disorder sweep `U = σ|z| cos x` over `sigmas`.
pub fn localization<T: Real>(
    lattice: &PeriodicPotential<T>,
    epsilon: f64,
    t_final: f64,
    cfg: &BdsgConfig,
    sigmas: &[f64],
    output_every: usize,
) -> Result<Vec<MomentHistory>, ExperimentError> {
    let grid = Grid::with_total_points(lit(epsilon), cfg.points)?;
    let table = crate::bloch::compute_lattice_table(lattice, &grid, cfg.bands.unwrap_or(grid.points_per_cell()))?;
    sigmas
        .iter()
        .map(|&sigma| {
            let random = RandomPotential::AndersonCosine { sigma: lit(sigma) };
            let basis = match cfg.quadrature_nodes {
                Some(n) => GpcBasis::with_quadrature(cfg.order, n)?,
                None => GpcBasis::new(cfg.order),
            };
            let solver = BdsgSolver::with_table(table.clone(), &random, basis)?;
            let init = GpcState::deterministic(&initial_gaussian(&grid), solver.basis().size());
            let traj = solver.run(&init, &RunSpec::new(t_final, cfg.dt).with_output_every(output_every))?;
            Ok(MomentHistory {
                sigma,
                times: traj.times.clone(),
                second_moment: traj.states.iter().map(|s| to_f64(second_moment(s))).collect(),
                mode_norms: mode_norms(traj.final_state()).into_iter().map(to_f64).collect(),
            })
        })
        .collect()
}

/// One method configuration in a comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Candidate {
    Bdsg(BdsgConfig),
    TsMc { points: usize, dt: f64, samples: usize, seed: u64 },
    TsSc { points: usize, dt: f64, nodes: usize },
}

impl Candidate {
    pub fn name(&self) -> &'static str {
        match self {
            Candidate::Bdsg(_) => "bdsg",
            Candidate::TsMc { .. } => "ts-mc",
            Candidate::TsSc { .. } => "ts-sc",
        }
    }

    /// gPC order, sample count or node count.
    pub fn parameter(&self) -> usize {
        match *self {
            Candidate::Bdsg(cfg) => cfg.order,
            Candidate::TsMc { samples, .. } => samples,
            Candidate::TsSc { nodes, .. } => nodes,
        }
    }

    pub fn statistics<T: Real>(&self, problem: &Problem<T>) -> Result<Statistics<T>, ExperimentError> {
        Ok(match *self {
            Candidate::Bdsg(cfg) => problem.bdsg_statistics(&cfg)?,
            Candidate::TsMc {
                points,
                dt,
                samples,
                seed,
            } => monte_carlo(&problem.ts_realizations(points, dt)?, samples, seed)?,
            Candidate::TsSc { points, dt, nodes } => {
                stochastic_collocation(&problem.ts_realizations(points, dt)?, nodes)?.into_statistics()
            }
        })
    }
}

/// Errors of BD-SG and the TS baselines against one reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub parameter: f64,
    pub errors: ErrorMetrics,
    pub seconds: f64,
}

pub fn compare<T: Real>(
    problem: &Problem<T>,
    reference: &ReferenceSpec,
    factory: &ReferenceFactory,
    candidates: &[Candidate],
) -> Result<Vec<ComparisonRow>, ExperimentError> {
    let fine = factory.fine(reference, &problem.lattice, &problem.random)?;
    candidates
        .iter()
        .map(|c| {
            let start = Instant::now();
            let stats = c.statistics(problem)?;
            let on_grid = fine.restrict_to(stats.grid()).ok_or(BaselineError::NotNested {
                fine: reference.points,
                coarse: stats.grid().len(),
            })?;
            let errors = error_metrics(&stats, &on_grid)?;
            log::info!("{} ({}): mean {:.3e} den {:.3e}", c.name(), c.parameter(), errors.mean, errors.density);
            Ok(ComparisonRow {
                method: c.name().to_string(),
                parameter: c.parameter() as f64,
                errors,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Ensemble mass, energy and second moment of TS realizations at `t = 0`
/// and at the final time, weighting draw `z_i` by `w_i`.
pub fn ensemble_conserved<T: Real>(
    realizations: &TsRealizations<T>,
    draws: &[T],
    weights: &[T],
) -> Result<Vec<ConservedRow>, ExperimentError> {
    let solver = realizations.solver();
    let per_draw: Vec<[T; 6]> = draws
        .par_iter()
        .map(|&z| {
            let v = solver.total_potential(realizations.random(), z);
            let start = realizations.initial();
            let end = solver.evolve(start, &v, realizations.steps(), realizations.dt());
            Ok([
                start.mass(),
                field_energy(start, &v)?,
                field_second_moment(start),
                end.mass(),
                field_energy(&end, &v)?,
                field_second_moment(&end),
            ])
        })
        .collect::<Result<_, DiagnosticsError>>()?;
    let mut acc = [T::zero(); 6];
    for (q, &w) in per_draw.iter().zip(weights) {
        for (a, &v) in acc.iter_mut().zip(q) {
            *a += w * v;
        }
    }
    let t_final = to_f64(realizations.dt()) * realizations.steps() as f64;
    Ok(vec![
        ConservedRow {
            t: 0.0,
            mass: to_f64(acc[0]),
            energy: to_f64(acc[1]),
            second_moment: to_f64(acc[2]),
        },
        ConservedRow {
            t: t_final,
            mass: to_f64(acc[3]),
            energy: to_f64(acc[4]),
            second_moment: to_f64(acc[5]),
        },
    ])
}
