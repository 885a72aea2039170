//! Time integration of the stochastic Galerkin system by Bloch-decomposition
//! splitting.

use rayon::prelude::*;
use thiserror::Error;

use crate::bdstep::bd_lattice_step;
use crate::bloch::{compute_lattice_table, BlochError, LatticeTable};
use crate::gpc::{
    apply_random_potential, build_coupling, project_potential, triple_products, CouplingSet, GpcBasis, GpcError,
    GpcState, ProjectedPotential,
};
use crate::lattice::{Grid, PeriodicPotential, RandomPotential};
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("final time {t_final} is not an integer multiple of the step {dt}")]
    NonIntegerStepCount { t_final: f64, dt: f64 },
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("state has {state} modes but the solver was built for {solver}")]
    ModeMismatch { state: usize, solver: usize },
    #[error("state grid does not match the solver grid")]
    GridMismatch,
    #[error(transparent)]
    Bloch(#[from] BlochError),
    #[error(transparent)]
    Gpc(#[from] GpcError),
}

/// Operator ordering of one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Splitting {
    /// Random potential, then lattice.
    PotentialFirst,
    /// Lattice, then random potential.
    LatticeFirst,
    /// Half potential, full lattice, half potential.
    Strang,
}

/// Number of steps `T/Δt`, rejecting non-integer ratios.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize, DriverError> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(DriverError::NonPositiveStep(dt));
    }
    let ratio = t_final / dt;
    let n = ratio.round();
    if n < 0.0 || (ratio - n).abs() > 1e-9 * n.max(1.0) {
        return Err(DriverError::NonIntegerStepCount { t_final, dt });
    }
    Ok(n as usize)
}

/// Parameters of one time integration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub t_final: f64,
    pub dt: f64,
    pub splitting: Splitting,
    /// Snapshot cadence in steps; the initial and final states are always kept.
    pub output_every: Option<usize>,
}

impl RunSpec {
    pub fn new(t_final: f64, dt: f64) -> Self {
        RunSpec {
            t_final,
            dt,
            splitting: Splitting::Strang,
            output_every: None,
        }
    }

    pub fn with_output_every(mut self, every: usize) -> Self {
        self.output_every = Some(every.max(1));
        self
    }

    pub fn with_splitting(mut self, splitting: Splitting) -> Self {
        self.splitting = splitting;
        self
    }

    pub fn steps(&self) -> Result<usize, DriverError> {
        step_count(self.t_final, self.dt)
    }
}

/// Snapshots of a run; each snapshot is an independent copy.
#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub times: Vec<f64>,
    pub states: Vec<GpcState<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn final_state(&self) -> &GpcState<T> {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Precomputed operators of the BD-SG scheme on a fixed grid and gPC order.
#[derive(Clone, Debug)]
pub struct BdsgSolver<T: Real> {
    table: LatticeTable<T>,
    basis: GpcBasis<T>,
    projected: ProjectedPotential<T>,
    coupling: CouplingSet<T>,
}

impl<T: Real> BdsgSolver<T> {
    /// Builds the band table (`bands` defaults to all `R`) and the coupling.
    pub fn new(
        grid: &Grid<T>,
        lattice: &PeriodicPotential<T>,
        random: &RandomPotential<T>,
        order: usize,
        bands: Option<usize>,
    ) -> Result<Self, DriverError> {
        let table = compute_lattice_table(lattice, grid, bands.unwrap_or(grid.points_per_cell()))?;
        Self::with_table(table, random, GpcBasis::new(order))
    }

    /// Reuses an existing band table.
    pub fn with_table(
        table: LatticeTable<T>,
        random: &RandomPotential<T>,
        basis: GpcBasis<T>,
    ) -> Result<Self, DriverError> {
        let projected = project_potential(random, &basis, table.grid());
        let coupling = build_coupling(&projected, &triple_products(&basis))?;
        Ok(BdsgSolver {
            table,
            basis,
            projected,
            coupling,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        self.table.grid()
    }

    pub fn table(&self) -> &LatticeTable<T> {
        &self.table
    }

    pub fn basis(&self) -> &GpcBasis<T> {
        &self.basis
    }

    pub fn projected(&self) -> &ProjectedPotential<T> {
        &self.projected
    }

    pub fn coupling(&self) -> &CouplingSet<T> {
        &self.coupling
    }

    fn check(&self, state: &GpcState<T>) -> Result<(), DriverError> {
        if state.size() != self.basis.size() {
            return Err(DriverError::ModeMismatch {
                state: state.size(),
                solver: self.basis.size(),
            });
        }
        if state.grid() != self.grid() {
            return Err(DriverError::GridMismatch);
        }
        Ok(())
    }

    fn lattice_in_place(&self, state: &mut GpcState<T>, dt: T) {
        state
            .coefficients_mut()
            .par_iter_mut()
            .for_each(|mode| *mode = bd_lattice_step(mode, &self.table, dt));
    }

    /// One step of the chosen splitting.
    pub fn step(&self, state: &GpcState<T>, dt: T, splitting: Splitting) -> Result<GpcState<T>, DriverError> {
        self.check(state)?;
        let mut out = state.clone();
        self.step_in_place(&mut out, dt, splitting);
        Ok(out)
    }

    fn step_in_place(&self, state: &mut GpcState<T>, dt: T, splitting: Splitting) {
        match splitting {
            Splitting::PotentialFirst => {
                apply_random_potential(state, &self.coupling, dt);
                self.lattice_in_place(state, dt);
            }
            Splitting::LatticeFirst => {
                self.lattice_in_place(state, dt);
                apply_random_potential(state, &self.coupling, dt);
            }
            Splitting::Strang => {
                let half = dt / lit(2.0);
                apply_random_potential(state, &self.coupling, half);
                self.lattice_in_place(state, dt);
                apply_random_potential(state, &self.coupling, half);
            }
        }
    }

    /// Integrates from `initial` over `[0, T]`.
    pub fn run(&self, initial: &GpcState<T>, spec: &RunSpec) -> Result<Trajectory<T>, DriverError> {
        self.check(initial)?;
        let steps = spec.steps()?;
        let dt: T = lit(spec.dt);
        let every = spec.output_every.unwrap_or(steps.max(1));
        let mut state = initial.clone();
        let mut times = vec![0.0];
        let mut states = vec![initial.clone()];
        for n in 1..=steps {
            self.step_in_place(&mut state, dt, spec.splitting);
            if n % every == 0 || n == steps {
                times.push(n as f64 * spec.dt);
                states.push(state.clone());
            }
        }
        log::debug!(
            "ran {steps} steps of dt={} on N={} with P={}",
            to_f64(dt),
            self.grid().len(),
            self.basis.size()
        );
        Ok(Trajectory { times, states })
    }

    /// Final state only.
    pub fn solve(&self, initial: &GpcState<T>, spec: &RunSpec) -> Result<GpcState<T>, DriverError> {
        self.check(initial)?;
        let steps = spec.steps()?;
        let dt: T = lit(spec.dt);
        let mut state = initial.clone();
        for _ in 0..steps {
            self.step_in_place(&mut state, dt, spec.splitting);
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bdstep::bd_strang_step;
    use crate::lattice::initial_gaussian;

    fn solver(random: RandomPotential<f64>, order: usize) -> BdsgSolver<f64> {
        let g = Grid::<f64>::new(0.25, 16).unwrap();
        BdsgSolver::new(&g, &PeriodicPotential::Mathieu, &random, order, None).unwrap()
    }

    #[test]
    fn step_count_validation() {
        assert_eq!(step_count(1.0, 0.01).unwrap(), 100);
        assert_eq!(step_count(0.02, 1.0 / 800.0).unwrap(), 16);
        assert_eq!(step_count(0.0, 0.1).unwrap(), 0);
        assert!(matches!(step_count(1.0, 0.3), Err(DriverError::NonIntegerStepCount { .. })));
        assert!(matches!(step_count(1.0, 0.0), Err(DriverError::NonPositiveStep(_))));
        assert!(matches!(step_count(1.0, -0.1), Err(DriverError::NonPositiveStep(_))));
    }

    #[test]
    fn deterministic_potential_reduces_to_scalar_scheme() {
        let u = RandomPotential::custom("cos2", |x: f64, _z| (2.0 * x).cos());
        let s = solver(u.clone(), 3);
        let psi = initial_gaussian(s.grid());
        let mut state = GpcState::deterministic(&psi, 4);
        let mut scalar = psi.clone();
        let samples = u.sample_grid(s.grid(), 0.0);
        for _ in 0..10 {
            state = s.step(&state, 0.05, Splitting::Strang).unwrap();
            scalar = bd_strang_step(&scalar, s.table(), &samples, 0.05);
        }
        assert!(state.coefficients()[0].max_abs_diff(&scalar) <= 1e-12);
        for p in 1..4 {
            assert!(state.coefficients()[p].norm() <= 1e-12);
        }
    }

    #[test]
    fn single_mode_matches_scalar_scheme() {
        let s = solver(RandomPotential::LinearForce, 0);
        let psi = initial_gaussian(s.grid());
        let state = GpcState::deterministic(&psi, 1);
        let samples: Vec<f64> = s.projected().mode(0).to_vec();
        let a = s.step(&state, 0.1, Splitting::Strang).unwrap();
        let b = bd_strang_step(&psi, s.table(), &samples, 0.1);
        assert!(a.coefficients()[0].max_abs_diff(&b) <= 1e-12);
    }

    #[test]
    fn strang_is_reversible() {
        let s = solver(RandomPotential::HarmonicNoise, 4);
        let state = GpcState::deterministic(&initial_gaussian(s.grid()), 5);
        let fwd = s.step(&state, 0.07, Splitting::Strang).unwrap();
        let back = s.step(&fwd, -0.07, Splitting::Strang).unwrap();
        assert!(back.max_abs_diff(&state) <= 1e-12);
    }

    #[test]
    fn strang_is_two_lie_halves() {
        let s = solver(RandomPotential::StepDecay, 3);
        let state = GpcState::deterministic(&initial_gaussian(s.grid()), 4);
        let strang = s.step(&state, 0.1, Splitting::Strang).unwrap();
        let first = s.step(&state, 0.05, Splitting::PotentialFirst).unwrap();
        let second = s.step(&first, 0.05, Splitting::LatticeFirst).unwrap();
        assert!(strang.max_abs_diff(&second) <= 1e-12);
    }

    #[test]
    fn mass_conserved_over_many_steps() {
        let s = solver(RandomPotential::StepDecay, 4);
        let state = GpcState::deterministic(&initial_gaussian(s.grid()), 5);
        let traj = s.run(&state, &RunSpec::new(1.0, 0.01).with_output_every(10)).unwrap();
        assert_eq!(traj.len(), 11);
        assert!((traj.times[10] - 1.0).abs() < 1e-12);
        for st in &traj.states {
            let mass: f64 = st.coefficients().iter().map(|c| c.mass()).sum();
            assert!((mass - 1.0).abs() <= 1e-10);
        }
        // Snapshots are independent copies.
        assert_eq!(traj.states[0], state);
        let direct = s.solve(&state, &RunSpec::new(1.0, 0.01)).unwrap();
        assert_eq!(&direct, traj.final_state());
    }

    #[test]
    fn mismatched_state_rejected() {
        let s = solver(RandomPotential::LinearForce, 2);
        let g = Grid::<f64>::new(0.25, 8).unwrap();
        let wrong_grid = GpcState::deterministic(&initial_gaussian(&g), 3);
        assert!(matches!(s.step(&wrong_grid, 0.1, Splitting::Strang), Err(DriverError::GridMismatch)));
        let wrong_size = GpcState::deterministic(&initial_gaussian(s.grid()), 2);
        assert!(matches!(
            s.step(&wrong_size, 0.1, Splitting::Strang),
            Err(DriverError::ModeMismatch { .. })
        ));
        assert!(s.run(&GpcState::deterministic(&initial_gaussian(s.grid()), 3), &RunSpec::new(1.0, 0.3)).is_err());
    }

    #[test]
    fn single_precision_run() {
        let g = Grid::<f32>::new(0.25, 16).unwrap();
        let s = BdsgSolver::new(&g, &PeriodicPotential::Mathieu, &RandomPotential::LinearForce, 2, None).unwrap();
        let state = GpcState::deterministic(&initial_gaussian(&g), 3);
        let out = s.solve(&state, &RunSpec::new(0.1, 0.01)).unwrap();
        let mass: f32 = out.coefficients().iter().map(|c| c.mass()).sum();
        assert!((mass - 1.0).abs() < 1e-4);
    }
}
