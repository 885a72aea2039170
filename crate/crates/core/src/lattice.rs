//! Spatial/quasimomentum grids, lattice and random potentials, and discrete
//! wavefields.
//!
//! A [`Grid`] covers the periodic domain `[0, 2π)` with `L` lattice cells of
//! width `2πε`, each sampled at `R` points. The flat index `j = ℓ·R + r`
//! (zero-based) enumerates points in increasing `x`, so `x_j = 2πj/(LR)`.

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{abs, from_usize, lit, to_f64, two_pi, Complex, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("1/epsilon = {inverse} is not an integer cell count")]
    NonIntegerCellCount { inverse: f64 },
    #[error("points per cell must be even and at least 4, got {0}")]
    InvalidResolution(usize),
    #[error("total point count {total} is not divisible by the cell count {cells}")]
    IndivisiblePointCount { total: usize, cells: usize },
}

/// FFT plans for the three transform lengths the solvers use.
pub(crate) struct GridPlans<T: Real> {
    pub cell_forward: Arc<dyn Fft<T>>,
    pub cell_inverse: Arc<dyn Fft<T>>,
    pub local_forward: Arc<dyn Fft<T>>,
    pub local_inverse: Arc<dyn Fft<T>>,
    pub global_forward: Arc<dyn Fft<T>>,
    pub global_inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> GridPlans<T> {
    fn new(cells: usize, points_per_cell: usize) -> Self {
        let mut planner = FftPlanner::new();
        let total = cells * points_per_cell;
        GridPlans {
            cell_forward: planner.plan_fft_forward(cells),
            cell_inverse: planner.plan_fft_inverse(cells),
            local_forward: planner.plan_fft_forward(points_per_cell),
            local_inverse: planner.plan_fft_inverse(points_per_cell),
            global_forward: planner.plan_fft_forward(total),
            global_inverse: planner.plan_fft_inverse(total),
        }
    }
}

/// The coupled spatial/quasimomentum discretization.
#[derive(Clone)]
pub struct Grid<T: Real> {
    epsilon: T,
    cells: usize,
    points_per_cell: usize,
    plans: Arc<GridPlans<T>>,
}

impl<T: Real> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("epsilon", &self.epsilon)
            .field("cells", &self.cells)
            .field("points_per_cell", &self.points_per_cell)
            .finish()
    }
}

impl<T: Real> PartialEq for Grid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.epsilon == other.epsilon
            && self.cells == other.cells
            && self.points_per_cell == other.points_per_cell
    }
}

/// Cell count for a given ε, if `1/ε` is an integer.
pub fn cell_count(epsilon: f64) -> Result<usize, LatticeError> {
    let inverse = 1.0 / epsilon;
    let cells = inverse.round();
    if !(epsilon > 0.0 && epsilon <= 1.0) || (inverse - cells).abs() > 1e-9 || cells < 1.0 {
        return Err(LatticeError::NonIntegerCellCount { inverse });
    }
    Ok(cells as usize)
}

impl<T: Real> Grid<T> {
    /// Builds the grid for semiclassical parameter `epsilon` with
    /// `points_per_cell` samples in every lattice cell.
    pub fn new(epsilon: T, points_per_cell: usize) -> Result<Self, LatticeError> {
        let cells = cell_count(to_f64(epsilon))?;
        if points_per_cell < 4 || !points_per_cell.is_multiple_of(2) {
            return Err(LatticeError::InvalidResolution(points_per_cell));
        }
        Ok(Grid {
            epsilon,
            cells,
            points_per_cell,
            plans: Arc::new(GridPlans::new(cells, points_per_cell)),
        })
    }

    /// Builds the grid from the total number of points `LR` on `[0, 2π)`,
    /// i.e. from the spacing `Δx = 2π/(LR)`.
    pub fn with_total_points(epsilon: T, total: usize) -> Result<Self, LatticeError> {
        let cells = cell_count(to_f64(epsilon))?;
        if !total.is_multiple_of(cells) {
            return Err(LatticeError::IndivisiblePointCount { total, cells });
        }
        Self::new(epsilon, total / cells)
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// Number of lattice cells `L`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Points per cell `R`.
    pub fn points_per_cell(&self) -> usize {
        self.points_per_cell
    }

    /// Total number of points `LR`.
    pub fn len(&self) -> usize {
        self.cells * self.points_per_cell
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Uniform spacing `2π/(LR)`, which is also the quadrature weight.
    pub fn spacing(&self) -> T {
        two_pi::<T>() / from_usize(self.len())
    }

    /// Quasimomentum `k_ℓ = -1/2 + ℓ/L` (zero-based `ℓ`).
    pub fn quasimomentum(&self, cell: usize) -> T {
        lit::<T>(-0.5) + from_usize::<T>(cell) / from_usize(self.cells)
    }

    pub fn quasimomenta(&self) -> Vec<T> {
        (0..self.cells).map(|l| self.quasimomentum(l)).collect()
    }

    /// Fast variable `y_r = 2πr/R` (zero-based `r`).
    pub fn local_coordinate(&self, r: usize) -> T {
        two_pi::<T>() * from_usize(r) / from_usize(self.points_per_cell)
    }

    /// Physical coordinate of flat point `j`.
    pub fn coordinate(&self, j: usize) -> T {
        two_pi::<T>() * from_usize(j) / from_usize(self.len())
    }

    pub fn coordinates(&self) -> Vec<T> {
        (0..self.len()).map(|j| self.coordinate(j)).collect()
    }

    #[inline]
    pub fn index(&self, cell: usize, r: usize) -> usize {
        cell * self.points_per_cell + r
    }

    /// Signed Fourier wavenumbers of the global grid in FFT order.
    pub fn wavenumbers(&self) -> Vec<T> {
        signed_frequencies(self.len())
    }

    /// Whether `fine` samples a superset of this grid's points.
    pub fn refines_to(&self, fine: &Grid<T>) -> Option<usize> {
        if fine.len().is_multiple_of(self.len()) && fine.cells == self.cells {
            Some(fine.len() / self.len())
        } else {
            None
        }
    }

    pub(crate) fn plans(&self) -> &GridPlans<T> {
        &self.plans
    }
}

/// FFT-ordered signed integer frequencies `0, 1, …, n/2-1, -n/2, …, -1`.
pub fn signed_frequencies<T: Real>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            if i < n / 2 {
                from_usize::<T>(i)
            } else {
                -from_usize::<T>(n - i)
            }
        })
        .collect()
}

/// A complex-valued discrete wavefunction on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct WaveField<T: Real> {
    grid: Grid<T>,
    values: Vec<Complex<T>>,
}

impl<T: Real> WaveField<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        WaveField {
            grid: grid.clone(),
            values: vec![Complex::new(T::zero(), T::zero()); grid.len()],
        }
    }

    /// Wraps values laid out in flat `x` order.
    ///
    /// # Panics
    /// If `values.len()` differs from the grid size.
    pub fn from_values(grid: &Grid<T>, values: Vec<Complex<T>>) -> Self {
        assert_eq!(values.len(), grid.len(), "wavefield length mismatch");
        WaveField {
            grid: grid.clone(),
            values,
        }
    }

    /// Samples `f(x)` at every grid point.
    pub fn from_fn(grid: &Grid<T>, f: impl Fn(T) -> Complex<T>) -> Self {
        let values = (0..grid.len()).map(|j| f(grid.coordinate(j))).collect();
        WaveField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    pub fn at(&self, cell: usize, r: usize) -> Complex<T> {
        self.values[self.grid.index(cell, r)]
    }

    /// Discrete mass `(2π/(LR)) Σ|ψ|²`.
    pub fn mass(&self) -> T {
        self.grid.spacing() * sum_norm_sqr(&self.values)
    }

    /// Discrete `L²` norm.
    pub fn norm(&self) -> T {
        self.mass().sqrt()
    }

    pub fn scale(&mut self, c: Complex<T>) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    pub fn scaled(mut self, c: Complex<T>) -> Self {
        self.scale(c);
        self
    }

    /// Pointwise `|ψ|²`.
    pub fn density(&self) -> Vec<T> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Samples this field at the points of a coarser grid it refines.
    pub fn restrict_to(&self, coarse: &Grid<T>) -> Option<WaveField<T>> {
        let stride = coarse.refines_to(&self.grid)?;
        let values = self.values.iter().step_by(stride).copied().collect();
        Some(WaveField {
            grid: coarse.clone(),
            values,
        })
    }

    /// Largest pointwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &WaveField<T>) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .fold(T::zero(), |m, d| if d > m { d } else { m })
            .sqrt()
    }
}

pub(crate) fn sum_norm_sqr<T: Real>(values: &[Complex<T>]) -> T {
    values.iter().fold(T::zero(), |acc, v| acc + v.norm_sqr())
}

/// `sqrt((2π/(LR)) Σ|ψ|²)`.
pub fn discrete_norm<T: Real>(field: &WaveField<T>) -> T {
    field.norm()
}

/// The Gaussian initial datum `(10/π)^{1/4} exp(-5(x-π)²)`, rescaled to unit
/// discrete norm.
pub fn initial_gaussian<T: Real>(grid: &Grid<T>) -> WaveField<T> {
    let mut field = WaveField::from_fn(grid, |x| Complex::new(gaussian_profile(x), T::zero()));
    let norm = field.norm();
    field.scale(Complex::new(T::one() / norm, T::zero()));
    field
}

/// Unnormalized profile `(10/π)^{1/4} exp(-5(x-π)²)`.
pub fn gaussian_profile<T: Real>(x: T) -> T {
    let amplitude = (lit::<T>(10.0) / T::pi()).powf(lit(0.25));
    let d = x - T::pi();
    amplitude * (lit::<T>(-5.0) * d * d).exp()
}

/// Reduces `y` into `[0, 2π)`.
fn wrap<T: Real>(y: T) -> T {
    let period = two_pi::<T>();
    let w = y - period * (y / period).floor();
    if w >= period {
        w - period
    } else {
        w
    }
}

/// Indicator of `(π/2, 3π/2]` at flat index `j` of an `n`-point grid on one
/// period. Integer arithmetic keeps jump points exact.
fn centered_indicator_at(j: usize, n: usize) -> bool {
    let j = j % n;
    4 * j > n && 4 * j <= 3 * n
}

/// Indicator of `(π/2, 3π/2]` for an arbitrary point of `[0, 2π)`.
fn centered_indicator<T: Real>(y: T) -> bool {
    let y = wrap(y);
    y > T::frac_pi_2() && y <= lit::<T>(1.5) * T::pi()
}

pub type PeriodicFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
pub type RandomFn<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

/// Periodic lattice potential `V_Γ(y)`, `y ∈ [0, 2π)`.
#[derive(Clone)]
pub enum PeriodicPotential<T: Real> {
    /// `cos y + 1`.
    Mathieu,
    /// Square barrier: 1 on `(π/2, 3π/2]`, 0 elsewhere.
    KronigPenney,
    /// `0.5 + 0.5 cos y`.
    WeakMathieu,
    /// `V ≡ 0`.
    Free,
    Custom { name: String, sampler: PeriodicFn<T> },
}

impl<T: Real> fmt::Debug for PeriodicPotential<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl<T: Real> PeriodicPotential<T> {
    pub fn id(&self) -> String {
        match self {
            PeriodicPotential::Mathieu => "mathieu".into(),
            PeriodicPotential::KronigPenney => "kronig-penney".into(),
            PeriodicPotential::WeakMathieu => "weak-mathieu".into(),
            PeriodicPotential::Free => "free".into(),
            PeriodicPotential::Custom { name, .. } => format!("custom:{name}"),
        }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        PeriodicPotential::Custom {
            name: name.into(),
            sampler: Arc::new(f),
        }
    }

    /// Value at fast variable `y` (any real; reduced mod 2π).
    pub fn sample(&self, y: T) -> T {
        match self {
            PeriodicPotential::Mathieu => wrap(y).cos() + T::one(),
            PeriodicPotential::KronigPenney => {
                if centered_indicator(y) {
                    T::one()
                } else {
                    T::zero()
                }
            }
            PeriodicPotential::WeakMathieu => lit::<T>(0.5) + lit::<T>(0.5) * wrap(y).cos(),
            PeriodicPotential::Free => T::zero(),
            PeriodicPotential::Custom { sampler, .. } => sampler(wrap(y)),
        }
    }

    /// The `R` samples `V_Γ(y_r)` of one cell.
    pub fn sample_cell(&self, points_per_cell: usize) -> Vec<T> {
        (0..points_per_cell)
            .map(|r| match self {
                PeriodicPotential::KronigPenney => {
                    if centered_indicator_at(r, points_per_cell) {
                        T::one()
                    } else {
                        T::zero()
                    }
                }
                _ => self.sample(two_pi::<T>() * from_usize(r) / from_usize(points_per_cell)),
            })
            .collect()
    }

    /// `V_Γ(x/ε)` at every point of `grid`.
    pub fn sample_grid(&self, grid: &Grid<T>) -> Vec<T> {
        let cell = self.sample_cell(grid.points_per_cell());
        (0..grid.len())
            .map(|j| cell[j % grid.points_per_cell()])
            .collect()
    }
}

/// Random external potential `U(x, z)`, `x ∈ [0, 2π]`, `z ∈ [-1, 1]`.
#[derive(Clone)]
pub enum RandomPotential<T: Real> {
    /// `|x-π|² + 0.5(z cos 2x + 1)`.
    HarmonicNoise,
    /// `1_{(π/2, 3π/2]}(x) + 2(z+1)/(x+1)`.
    StepDecay,
    /// `(1 + 0.1z) x`.
    LinearForce,
    /// `σ|z| cos x`.
    AndersonCosine { sigma: T },
    /// `U ≡ 0`.
    Zero,
    Custom { name: String, evaluator: RandomFn<T> },
}

impl<T: Real> fmt::Debug for RandomPotential<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl<T: Real> RandomPotential<T> {
    pub fn id(&self) -> String {
        match self {
            RandomPotential::HarmonicNoise => "harmonic-noise".into(),
            RandomPotential::StepDecay => "step-decay".into(),
            RandomPotential::LinearForce => "linear-force".into(),
            RandomPotential::AndersonCosine { sigma } => {
                format!("anderson-cosine(sigma={:.17e})", to_f64(*sigma))
            }
            RandomPotential::Zero => "zero".into(),
            RandomPotential::Custom { name, .. } => format!("custom:{name}"),
        }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        RandomPotential::Custom {
            name: name.into(),
            evaluator: Arc::new(f),
        }
    }

    pub fn evaluate(&self, x: T, z: T) -> T {
        self.evaluate_with(x, z, || centered_indicator(x))
    }

    fn evaluate_with(&self, x: T, z: T, indicator: impl Fn() -> bool) -> T {
        match self {
            RandomPotential::HarmonicNoise => {
                let d = x - T::pi();
                d * d + lit::<T>(0.5) * (z * (lit::<T>(2.0) * x).cos() + T::one())
            }
            RandomPotential::StepDecay => {
                let step = if indicator() { T::one() } else { T::zero() };
                step + lit::<T>(2.0) * (z + T::one()) / (x + T::one())
            }
            RandomPotential::LinearForce => (T::one() + lit::<T>(0.1) * z) * x,
            RandomPotential::AndersonCosine { sigma } => *sigma * abs(z) * x.cos(),
            RandomPotential::Zero => T::zero(),
            RandomPotential::Custom { evaluator, .. } => evaluator(x, z),
        }
    }

    /// `U(x_j, z)` at every grid point.
    pub fn sample_grid(&self, grid: &Grid<T>, z: T) -> Vec<T> {
        let n = grid.len();
        (0..n)
            .map(|j| self.evaluate_with(grid.coordinate(j), z, || centered_indicator_at(j, n)))
            .collect()
    }
}

/// Serializable potential identifiers used by scenario files and caches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeKind {
    Mathieu,
    KronigPenney,
    WeakMathieu,
    Free,
}

impl LatticeKind {
    pub fn potential<T: Real>(self) -> PeriodicPotential<T> {
        match self {
            LatticeKind::Mathieu => PeriodicPotential::Mathieu,
            LatticeKind::KronigPenney => PeriodicPotential::KronigPenney,
            LatticeKind::WeakMathieu => PeriodicPotential::WeakMathieu,
            LatticeKind::Free => PeriodicPotential::Free,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomKind {
    HarmonicNoise,
    StepDecay,
    LinearForce,
    AndersonCosine,
    Zero,
}

impl RandomKind {
    pub fn potential<T: Real>(self, sigma: f64) -> RandomPotential<T> {
        match self {
            RandomKind::HarmonicNoise => RandomPotential::HarmonicNoise,
            RandomKind::StepDecay => RandomPotential::StepDecay,
            RandomKind::LinearForce => RandomPotential::LinearForce,
            RandomKind::AndersonCosine => RandomPotential::AndersonCosine { sigma: lit(sigma) },
            RandomKind::Zero => RandomPotential::Zero,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_quarter_epsilon() {
        let g = Grid::<f64>::new(0.25, 32).unwrap();
        assert_eq!(g.cells(), 4);
        assert_eq!(g.len(), 128);
        assert!((g.spacing() - 2.0 * PI / 128.0).abs() < 1e-15);
        // Δx = π/64 here; the π/128 grid of the temporal tests has R = 64.
        let g = Grid::<f64>::with_total_points(0.25, 256).unwrap();
        assert!((g.spacing() - PI / 128.0).abs() < 1e-15);
    }

    #[test]
    fn single_cell_grid() {
        let g = Grid::<f64>::new(1.0, 4).unwrap();
        assert_eq!(g.cells(), 1);
        assert_eq!(g.quasimomenta(), vec![-0.5]);
    }

    #[test]
    fn third_epsilon_quasimomenta() {
        let g = Grid::<f64>::new(1.0 / 3.0, 8).unwrap();
        assert_eq!(g.cells(), 3);
        let k = g.quasimomenta();
        for (a, b) in k.iter().zip([-0.5, -1.0 / 6.0, 1.0 / 6.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_rejects_bad_inputs() {
        assert!(matches!(
            Grid::<f64>::new(0.3, 8),
            Err(LatticeError::NonIntegerCellCount { .. })
        ));
        assert_eq!(
            Grid::<f64>::new(0.25, 7).unwrap_err(),
            LatticeError::InvalidResolution(7)
        );
        assert_eq!(
            Grid::<f64>::new(0.25, 2).unwrap_err(),
            LatticeError::InvalidResolution(2)
        );
    }

    #[test]
    fn coordinates_match_cell_formula() {
        let g = Grid::<f64>::new(0.25, 16).unwrap();
        for l in 0..4 {
            for r in 0..16 {
                let x = 0.25 * (2.0 * PI * l as f64 + g.local_coordinate(r));
                assert!((g.coordinate(g.index(l, r)) - x).abs() < 1e-13);
            }
        }
        for w in g.coordinates().windows(2) {
            assert!((w[1] - w[0] - g.spacing()).abs() < 1e-13);
        }
        let k = g.quasimomenta();
        assert!(k.iter().all(|&k| (-0.5..=0.5 - 0.25).contains(&k)));
    }

    #[test]
    fn norms_of_simple_fields() {
        let g = Grid::<f64>::new(1.0, 4).unwrap();
        let ones = WaveField::from_fn(&g, |_| Complex::new(1.0, 0.0));
        assert!((discrete_norm(&ones) - (2.0 * PI).sqrt()).abs() < 1e-14);
        assert_eq!(discrete_norm(&WaveField::zeros(&g)), 0.0);
    }

    #[test]
    fn gaussian_is_normalized() {
        let g = Grid::<f64>::with_total_points(0.25, 256).unwrap();
        let psi = initial_gaussian(&g);
        assert!((psi.norm() - 1.0).abs() < 1e-13);
        assert!((gaussian_profile(PI) - (10.0 / PI).powf(0.25)).abs() < 1e-15);
    }

    #[test]
    fn gaussian_rescale_factor_tends_to_one() {
        // Continuum mass of the profile by composite Simpson on a fine mesh.
        let n = 200_000;
        let h = 2.0 * PI / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * gaussian_profile(i as f64 * h).powi(2);
        }
        let continuum = s * h / 3.0;
        assert!((continuum - 1.0).abs() < 1e-10);
        let mut previous = f64::INFINITY;
        for total in [16usize, 32, 64, 128] {
            let g = Grid::<f64>::with_total_points(0.25, total).unwrap();
            let raw = WaveField::from_fn(&g, |x| Complex::new(gaussian_profile(x), 0.0));
            let gap = (raw.norm() - continuum.sqrt()).abs();
            assert!(gap <= previous);
            previous = gap;
        }
        assert!(previous < 1e-12);
    }

    #[test]
    fn kronig_penney_samples() {
        let v = PeriodicPotential::<f64>::KronigPenney.sample_cell(8);
        assert_eq!(v, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        let kp = PeriodicPotential::<f64>::KronigPenney;
        assert_eq!(kp.sample(PI), 1.0);
        assert_eq!(kp.sample(0.1), 0.0);
        assert_eq!(kp.sample(PI + 2.0 * PI), 1.0);
    }

    #[test]
    fn periodic_potentials_are_periodic() {
        for v in [
            PeriodicPotential::<f64>::Mathieu,
            PeriodicPotential::WeakMathieu,
            PeriodicPotential::KronigPenney,
        ] {
            for i in 0..50 {
                let y = 0.123 + i as f64 * 0.37;
                assert!((v.sample(y) - v.sample(y + 2.0 * PI)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_potentials_are_finite_on_sample_lattice() {
        let pots = [
            RandomPotential::<f64>::HarmonicNoise,
            RandomPotential::StepDecay,
            RandomPotential::LinearForce,
            RandomPotential::AndersonCosine { sigma: 5.0 },
            RandomPotential::Zero,
        ];
        for u in &pots {
            for i in 0..1000 {
                let x = 2.0 * PI * i as f64 / 999.0;
                for k in 0..21 {
                    let z = -1.0 + 0.1 * k as f64;
                    assert!(u.evaluate(x, z).is_finite(), "{u:?} at ({x}, {z})");
                }
            }
        }
        for v in [
            PeriodicPotential::<f64>::Mathieu,
            PeriodicPotential::KronigPenney,
            PeriodicPotential::WeakMathieu,
        ] {
            assert!((0..1000).all(|i| v.sample(i as f64 * 0.01).is_finite()));
        }
    }

    #[test]
    fn random_potential_values() {
        let u = RandomPotential::<f64>::LinearForce;
        assert!((u.evaluate(2.0, 1.0) - 2.2).abs() < 1e-15);
        let h = RandomPotential::<f64>::HarmonicNoise;
        assert!((h.evaluate(PI, 0.0) - 0.5).abs() < 1e-15);
        let s = RandomPotential::<f64>::StepDecay;
        assert!((s.evaluate(PI, -1.0) - 1.0).abs() < 1e-15);
        assert!((s.evaluate(0.0, 1.0) - 4.0).abs() < 1e-15);
        let g = Grid::<f64>::with_total_points(0.5, 8).unwrap();
        let samples = s.sample_grid(&g, -1.0);
        assert_eq!(samples, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn restriction_picks_coarse_points() {
        let coarse = Grid::<f64>::with_total_points(0.25, 16).unwrap();
        let fine = Grid::<f64>::with_total_points(0.25, 64).unwrap();
        let f = WaveField::from_fn(&fine, |x| Complex::new(x.sin(), x.cos()));
        let r = f.restrict_to(&coarse).unwrap();
        let direct = WaveField::from_fn(&coarse, |x| Complex::new(x.sin(), x.cos()));
        assert!(r.max_abs_diff(&direct) < 1e-14);
        assert!(coarse.refines_to(&Grid::with_total_points(0.5, 64).unwrap()).is_none());
    }

    #[test]
    fn single_precision_grid() {
        let g = Grid::<f32>::with_total_points(0.25, 64).unwrap();
        let psi = initial_gaussian(&g);
        assert!((psi.norm() - 1.0).abs() < 1e-5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn norm_is_absolutely_homogeneous(re in -3.0f64..3.0, im in -3.0f64..3.0, seed in 0u64..1000) {
                let g = Grid::<f64>::new(0.25, 8).unwrap();
                let f = WaveField::from_fn(&g, |x| {
                    let s = seed as f64 * 0.01;
                    Complex::new((x + s).sin(), (2.0 * x - s).cos())
                });
                let c = Complex::new(re, im);
                let lhs = f.clone().scaled(c).norm();
                prop_assert!((lhs - c.norm() * f.norm()).abs() < 1e-13);
            }
        }
    }
}
