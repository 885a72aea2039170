//! Classical time-splitting spectral solver with Monte Carlo and stochastic
//! collocation wrappers, and the cached reference-solution factory.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{content_key, read_blob, write_blob, CacheError};
use crate::diagnostics::Statistics;
use crate::driver::{step_count, DriverError};
use crate::gpc::GaussLegendre;
use crate::lattice::{initial_gaussian, Grid, LatticeError, PeriodicPotential, RandomPotential, WaveField};
use crate::scalar::{cis, from_usize, lit, to_f64, Complex, Real};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Steps(#[from] DriverError),
    #[error(transparent)]
    Grid(#[from] LatticeError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("need at least one {0}")]
    Empty(&'static str),
    #[error("reference grid with {fine} points does not contain the {coarse}-point grid")]
    NotNested { fine: usize, coarse: usize },
}

fn zero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// One Strang step: half potential phase, exact kinetic flow in Fourier
/// space, half potential phase.
pub fn ts_step<T: Real>(field: &WaveField<T>, total_potential: &[T], dt: T) -> WaveField<T> {
    assert_eq!(total_potential.len(), field.values().len());
    let grid = field.grid();
    let eps = grid.epsilon();
    let half: Vec<Complex<T>> = total_potential
        .iter()
        .map(|&v| cis(-v * dt / (lit::<T>(2.0) * eps)))
        .collect();
    let kinetic = kinetic_phases(grid, dt);
    let mut values = field.values().to_vec();
    for (v, p) in values.iter_mut().zip(&half) {
        *v *= p;
    }
    kinetic_flow(grid, &mut values, &kinetic);
    for (v, p) in values.iter_mut().zip(&half) {
        *v *= p;
    }
    WaveField::from_values(grid, values)
}

/// `e^{-iεξ²dt/2}/N` in FFT order.
fn kinetic_phases<T: Real>(grid: &Grid<T>, dt: T) -> Vec<Complex<T>> {
    let eps = grid.epsilon();
    let inv_n = T::one() / from_usize::<T>(grid.len());
    grid.wavenumbers()
        .into_iter()
        .map(|xi| cis(-eps * xi * xi * dt / lit(2.0)) * inv_n)
        .collect()
}

fn kinetic_flow<T: Real>(grid: &Grid<T>, values: &mut [Complex<T>], phases: &[Complex<T>]) {
    grid.plans().global_forward.process(values);
    for (v, p) in values.iter_mut().zip(phases) {
        *v *= p;
    }
    grid.plans().global_inverse.process(values);
}

/// Deterministic time-splitting solver for a fixed lattice on one grid.
#[derive(Clone, Debug)]
pub struct TsSolver<T: Real> {
    grid: Grid<T>,
    lattice: Vec<T>,
}

impl<T: Real> TsSolver<T> {
    pub fn new(grid: &Grid<T>, lattice: &PeriodicPotential<T>) -> Self {
        TsSolver {
            grid: grid.clone(),
            lattice: lattice.sample_grid(grid),
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    /// `V_Γ(x_j/ε)`.
    pub fn lattice_samples(&self) -> &[T] {
        &self.lattice
    }

    /// `V_Γ(x/ε) + U(x, z)`.
    pub fn total_potential(&self, random: &RandomPotential<T>, z: T) -> Vec<T> {
        self.lattice
            .iter()
            .zip(random.sample_grid(&self.grid, z))
            .map(|(&v, u)| v + u)
            .collect()
    }

    /// `steps` Strang steps of size `dt`; interior half phases are merged.
    pub fn evolve(&self, initial: &WaveField<T>, total_potential: &[T], steps: usize, dt: T) -> WaveField<T> {
        assert!(initial.grid() == &self.grid, "field lives on a different grid");
        if steps == 0 {
            return initial.clone();
        }
        let eps = self.grid.epsilon();
        let half: Vec<Complex<T>> = total_potential
            .iter()
            .map(|&v| cis(-v * dt / (lit::<T>(2.0) * eps)))
            .collect();
        let full: Vec<Complex<T>> = total_potential.iter().map(|&v| cis(-v * dt / eps)).collect();
        let kinetic = kinetic_phases(&self.grid, dt);
        let mut values = initial.values().to_vec();
        for (v, p) in values.iter_mut().zip(&half) {
            *v *= p;
        }
        for n in 0..steps {
            kinetic_flow(&self.grid, &mut values, &kinetic);
            let phase = if n + 1 == steps { &half } else { &full };
            for (v, p) in values.iter_mut().zip(phase) {
                *v *= p;
            }
        }
        WaveField::from_values(&self.grid, values)
    }
}

/// A map `z ↦ ψ(·, T, z)` that can be sampled by the wrappers.
pub trait RealizationSolver<T: Real>: Sync {
    fn grid(&self) -> &Grid<T>;
    fn realization(&self, z: T) -> WaveField<T>;
}

/// Time-splitting run from the Gaussian datum to a final time.
#[derive(Clone, Debug)]
pub struct TsRealizations<T: Real> {
    solver: TsSolver<T>,
    random: RandomPotential<T>,
    initial: WaveField<T>,
    steps: usize,
    dt: T,
}

impl<T: Real> TsRealizations<T> {
    pub fn new(
        grid: &Grid<T>,
        lattice: &PeriodicPotential<T>,
        random: &RandomPotential<T>,
        t_final: f64,
        dt: f64,
    ) -> Result<Self, BaselineError> {
        Ok(TsRealizations {
            solver: TsSolver::new(grid, lattice),
            random: random.clone(),
            initial: initial_gaussian(grid),
            steps: step_count(t_final, dt)?,
            dt: lit(dt),
        })
    }

    pub fn with_initial(mut self, initial: WaveField<T>) -> Self {
        self.initial = initial;
        self
    }

    pub fn solver(&self) -> &TsSolver<T> {
        &self.solver
    }

    pub fn initial(&self) -> &WaveField<T> {
        &self.initial
    }

    pub fn random(&self) -> &RandomPotential<T> {
        &self.random
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> T {
        self.dt
    }
}

impl<T: Real> RealizationSolver<T> for TsRealizations<T> {
    fn grid(&self) -> &Grid<T> {
        self.solver.grid()
    }

    fn realization(&self, z: T) -> WaveField<T> {
        let v = self.solver.total_potential(&self.random, z);
        self.solver.evolve(&self.initial, &v, self.steps, self.dt)
    }
}

/// Draw `k` of `Uniform[-1, 1]` under `seed`; each draw has its own stream,
/// so any draw is reproducible in isolation.
pub fn monte_carlo_sample<T: Real>(seed: u64, k: u64) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    lit(rng.gen_range(-1.0..1.0))
}

const MC_CHUNK: usize = 8;

struct PartialSums<T: Real> {
    mean: Vec<Complex<T>>,
    density: Vec<T>,
}

impl<T: Real> PartialSums<T> {
    fn zeros(n: usize) -> Self {
        PartialSums {
            mean: vec![zero(); n],
            density: vec![T::zero(); n],
        }
    }

    fn add_field(&mut self, field: &WaveField<T>, weight: T) {
        for ((m, d), v) in self.mean.iter_mut().zip(&mut self.density).zip(field.values()) {
            *m += v * weight;
            *d += v.norm_sqr() * weight;
        }
    }

    fn merge(mut self, other: &PartialSums<T>) -> Self {
        for (a, b) in self.mean.iter_mut().zip(&other.mean) {
            *a += b;
        }
        for (a, b) in self.density.iter_mut().zip(&other.density) {
            *a += *b;
        }
        self
    }
}

/// Fixed-shape pairwise reduction; the result does not depend on scheduling.
fn pairwise<T: Real>(mut parts: Vec<PartialSums<T>>) -> PartialSums<T> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(&b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one partial sum")
}

/// Sample mean of `ψ` and `|ψ|²` over `samples` seeded draws.
pub fn monte_carlo<T: Real, S: RealizationSolver<T>>(
    solver: &S,
    samples: usize,
    seed: u64,
) -> Result<Statistics<T>, BaselineError> {
    if samples == 0 {
        return Err(BaselineError::Empty("Monte Carlo sample"));
    }
    let n = solver.grid().len();
    let chunks = samples.div_ceil(MC_CHUNK);
    let parts: Vec<PartialSums<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = PartialSums::zeros(n);
            for k in c * MC_CHUNK..((c + 1) * MC_CHUNK).min(samples) {
                let z = monte_carlo_sample(seed, k as u64);
                acc.add_field(&solver.realization(z), T::one());
            }
            acc
        })
        .collect();
    let total = pairwise(parts);
    let inv = T::one() / from_usize::<T>(samples);
    Ok(Statistics {
        mean: WaveField::from_values(solver.grid(), total.mean.into_iter().map(|v| v * inv).collect()),
        density: total.density.into_iter().map(|v| v * inv).collect(),
    })
}

/// Realizations at Gauss-Legendre nodes with quadrature statistics and a
/// Lagrange interpolant in `z`.
#[derive(Clone, Debug)]
pub struct Collocation<T: Real> {
    rule: GaussLegendre<T>,
    fields: Vec<WaveField<T>>,
    statistics: Statistics<T>,
}

impl<T: Real> Collocation<T> {
    pub fn nodes(&self) -> &[T] {
        self.rule.nodes()
    }

    pub fn weights(&self) -> &[T] {
        self.rule.weights()
    }

    pub fn fields(&self) -> &[WaveField<T>] {
        &self.fields
    }

    pub fn statistics(&self) -> &Statistics<T> {
        &self.statistics
    }

    pub fn into_statistics(self) -> Statistics<T> {
        self.statistics
    }

    /// `Σ_j ψ_j ℓ_j(z)` with the Lagrange basis on the nodes.
    pub fn interpolate(&self, z: T) -> WaveField<T> {
        let nodes = self.rule.nodes();
        let mut out = WaveField::zeros(self.fields[0].grid());
        for (j, f) in self.fields.iter().enumerate() {
            let mut l = T::one();
            for (i, &zi) in nodes.iter().enumerate() {
                if i != j {
                    l *= (z - zi) / (nodes[j] - zi);
                }
            }
            for (o, v) in out.values_mut().iter_mut().zip(f.values()) {
                *o += v * l;
            }
        }
        out
    }
}

pub fn stochastic_collocation<T: Real, S: RealizationSolver<T>>(
    solver: &S,
    nodes: usize,
) -> Result<Collocation<T>, BaselineError> {
    if nodes == 0 {
        return Err(BaselineError::Empty("collocation node"));
    }
    let rule = GaussLegendre::new(nodes);
    let fields: Vec<WaveField<T>> = rule.nodes().par_iter().map(|&z| solver.realization(z)).collect();
    let parts = fields
        .iter()
        .zip(rule.weights())
        .map(|(f, &w)| {
            let mut p = PartialSums::zeros(f.values().len());
            p.add_field(f, w);
            p
        })
        .collect();
    let total = pairwise(parts);
    let statistics = Statistics {
        mean: WaveField::from_values(solver.grid(), total.mean),
        density: total.density,
    };
    Ok(Collocation {
        rule,
        fields,
        statistics,
    })
}

/// Resolution of a reference solution; also its cache key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub epsilon: f64,
    pub lattice: String,
    pub random: String,
    pub t_final: f64,
    pub dt: f64,
    pub points: usize,
    pub nodes: usize,
}

/// Default margins relative to the finest experiment: `2Q+5` nodes,
/// `Δt/50`, `Δx/2`.
pub const DEFAULT_TIME_REFINEMENT: usize = 50;
pub const DEFAULT_SPACE_REFINEMENT: usize = 2;

impl ReferenceSpec {
    /// Reference for experiments up to `finest_dt` and `finest_points` with
    /// gPC orders up to `order`.
    pub fn for_experiment<T: Real>(
        lattice: &PeriodicPotential<T>,
        random: &RandomPotential<T>,
        epsilon: f64,
        t_final: f64,
        finest_dt: f64,
        finest_points: usize,
        order: usize,
    ) -> Self {
        ReferenceSpec {
            epsilon,
            lattice: lattice.id(),
            random: random.id(),
            t_final,
            dt: 0.0,
            points: finest_points * DEFAULT_SPACE_REFINEMENT,
            nodes: 2 * order + 5,
        }
        .with_time_step(finest_dt / DEFAULT_TIME_REFINEMENT as f64)
    }

    /// Largest step `≤ max_dt` that divides `T`.
    pub fn with_time_step(mut self, max_dt: f64) -> Self {
        let steps = (self.t_final / max_dt * (1.0 - 1e-12)).ceil().max(1.0);
        self.dt = self.t_final / steps;
        self
    }

    pub fn with_points(mut self, points: usize) -> Self {
        self.points = points;
        self
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn key(&self) -> String {
        content_key(self)
    }

    /// TS-SC on the fine grid.
    pub fn compute<T: Real>(
        &self,
        lattice: &PeriodicPotential<T>,
        random: &RandomPotential<T>,
    ) -> Result<Statistics<T>, BaselineError> {
        let grid = Grid::with_total_points(lit(self.epsilon), self.points)?;
        let solver = TsRealizations {
            solver: TsSolver::new(&grid, lattice),
            random: random.clone(),
            initial: initial_gaussian(&grid),
            steps: self.steps(),
            dt: lit(self.t_final / self.steps() as f64),
        };
        log::info!(
            "computing reference: N={} dt={:e} nodes={}",
            self.points,
            self.dt,
            self.nodes
        );
        Ok(stochastic_collocation(&solver, self.nodes)?.into_statistics())
    }
}

/// Computes or loads reference statistics and restricts them to coarse grids.
#[derive(Clone, Debug, Default)]
pub struct ReferenceFactory {
    cache: Option<PathBuf>,
}

impl ReferenceFactory {
    pub fn uncached() -> Self {
        ReferenceFactory { cache: None }
    }

    pub fn cached(dir: impl Into<PathBuf>) -> Self {
        ReferenceFactory {
            cache: Some(dir.into()),
        }
    }

    pub fn path(&self, spec: &ReferenceSpec) -> Option<PathBuf> {
        self.cache
            .as_ref()
            .map(|d| d.join(format!("reference-{}.bin", &spec.key()[..24])))
    }

    /// Fine-grid reference statistics.
    pub fn fine<T: Real>(
        &self,
        spec: &ReferenceSpec,
        lattice: &PeriodicPotential<T>,
        random: &RandomPotential<T>,
    ) -> Result<Statistics<T>, BaselineError> {
        let grid = Grid::with_total_points(lit(spec.epsilon), spec.points)?;
        if let Some(path) = self.path(spec) {
            if path.exists() {
                match read_blob::<ReferenceSpec>(&path) {
                    Ok((header, payload)) if &header == spec && payload.len() == 3 * spec.points => {
                        let n = spec.points;
                        let mean = payload[..2 * n]
                            .chunks_exact(2)
                            .map(|c| Complex::new(lit(c[0]), lit(c[1])))
                            .collect();
                        return Ok(Statistics {
                            mean: WaveField::from_values(&grid, mean),
                            density: payload[2 * n..].iter().map(|&d| lit(d)).collect(),
                        });
                    }
                    Ok(_) => log::warn!("reference cache {} does not match, recomputing", path.display()),
                    Err(e) => log::warn!("unreadable reference cache {}: {e}, recomputing", path.display()),
                }
            }
            let stats = spec.compute(lattice, random)?;
            let mut payload = Vec::with_capacity(3 * spec.points);
            for v in stats.mean.values() {
                payload.push(to_f64(v.re));
                payload.push(to_f64(v.im));
            }
            payload.extend(stats.density.iter().map(|&d| to_f64(d)));
            write_blob(&path, spec, &payload)?;
            return Ok(stats);
        }
        spec.compute(lattice, random)
    }

    /// Reference restricted to `coarse`.
    pub fn on_grid<T: Real>(
        &self,
        spec: &ReferenceSpec,
        lattice: &PeriodicPotential<T>,
        random: &RandomPotential<T>,
        coarse: &Grid<T>,
    ) -> Result<Statistics<T>, BaselineError> {
        let fine = self.fine(spec, lattice, random)?;
        fine.restrict_to(coarse).ok_or(BaselineError::NotNested {
            fine: spec.points,
            coarse: coarse.len(),
        })
    }
}
