//! Conserved quantities, the second spatial moment, and error metrics.

use thiserror::Error;

use crate::gpc::{mean_density, mean_field, CouplingSet, GpcState};
use crate::lattice::{Grid, WaveField};
use crate::scalar::{abs, lit, to_f64, Complex, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("energy has imaginary part {imaginary:e} against real part {real:e}")]
    NonRealEnergy { real: f64, imaginary: f64 },
    #[error("statistics live on different grids")]
    GridMismatch,
    #[error("potential has {given} samples, grid has {expected} points")]
    SampleCount { given: usize, expected: usize },
}

/// Mean field and mean density of a random wave function.
#[derive(Clone, Debug, PartialEq)]
pub struct Statistics<T: Real> {
    pub mean: WaveField<T>,
    pub density: Vec<T>,
}

impl<T: Real> Statistics<T> {
    pub fn from_gpc(state: &GpcState<T>) -> Self {
        Statistics {
            mean: mean_field(state),
            density: mean_density(state),
        }
    }

    /// Statistics of a deterministic field.
    pub fn deterministic(field: &WaveField<T>) -> Self {
        Statistics {
            mean: field.clone(),
            density: field.density(),
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        self.mean.grid()
    }

    /// Restriction to a coarser grid sharing the same points.
    pub fn restrict_to(&self, coarse: &Grid<T>) -> Option<Statistics<T>> {
        let stride = coarse.refines_to(self.grid())?;
        Some(Statistics {
            mean: self.mean.restrict_to(coarse)?,
            density: self.density.iter().step_by(stride).copied().collect(),
        })
    }
}

/// `Δ_mean` and `Δ_den`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorMetrics {
    pub mean: f64,
    pub density: f64,
}

/// `Σ_p ‖ψ̂_p‖²`.
pub fn total_mass<T: Real>(state: &GpcState<T>) -> T {
    state.coefficients().iter().fold(T::zero(), |acc, c| acc + c.mass())
}

/// Spectral derivative `∂_x ψ` on the global grid.
pub fn spectral_derivative<T: Real>(field: &WaveField<T>) -> WaveField<T> {
    let grid = field.grid();
    let n = grid.len();
    let mut buf = field.values().to_vec();
    grid.plans().global_forward.process(&mut buf);
    let scale = T::one() / crate::scalar::from_usize::<T>(n);
    for (v, xi) in buf.iter_mut().zip(grid.wavenumbers()) {
        *v *= Complex::new(T::zero(), xi * scale);
    }
    grid.plans().global_inverse.process(&mut buf);
    WaveField::from_values(grid, buf)
}

/// Weak energy `h Σ_x [(ε²/2)|∂ψ⃗|² + V|ψ⃗|² + ψ⃗ᴴ A_U ψ⃗]`.
pub fn total_energy<T: Real>(
    state: &GpcState<T>,
    lattice: &[T],
    coupling: &CouplingSet<T>,
) -> Result<T, DiagnosticsError> {
    let grid = state.grid();
    let n = grid.len();
    if lattice.len() != n {
        return Err(DiagnosticsError::SampleCount {
            given: lattice.len(),
            expected: n,
        });
    }
    let eps = grid.epsilon();
    let half_eps2 = eps * eps / lit(2.0);
    let mut real = T::zero();
    let mut imag = T::zero();
    for c in state.coefficients() {
        let d = spectral_derivative(c);
        for ((dv, v), &vg) in d.values().iter().zip(c.values()).zip(lattice) {
            real += half_eps2 * dv.norm_sqr() + vg * v.norm_sqr();
        }
    }
    let p = state.size();
    let mut column = vec![Complex::new(T::zero(), T::zero()); p];
    for j in 0..n {
        for (q, c) in state.coefficients().iter().enumerate() {
            column[q] = c.values()[j];
        }
        let form = coupling.quadratic_form(j, &column);
        real += form.re;
        imag += form.im;
    }
    let h = grid.spacing();
    let (real, imag) = (real * h, imag * h);
    if abs(imag) > lit::<T>(1e-8) * abs(real) {
        return Err(DiagnosticsError::NonRealEnergy {
            real: to_f64(real),
            imaginary: to_f64(imag),
        });
    }
    Ok(real)
}

/// Energy `h Σ_x [(ε²/2)|∂ψ|² + V|ψ|²]` of one realization under the total
/// potential `V`.
pub fn field_energy<T: Real>(field: &WaveField<T>, potential: &[T]) -> Result<T, DiagnosticsError> {
    let grid = field.grid();
    if potential.len() != grid.len() {
        return Err(DiagnosticsError::SampleCount {
            given: potential.len(),
            expected: grid.len(),
        });
    }
    let eps = grid.epsilon();
    let half_eps2 = eps * eps / lit(2.0);
    let d = spectral_derivative(field);
    let sum = d
        .values()
        .iter()
        .zip(field.values())
        .zip(potential)
        .fold(T::zero(), |acc, ((dv, v), &u)| acc + half_eps2 * dv.norm_sqr() + u * v.norm_sqr());
    Ok(sum * grid.spacing())
}

/// `h Σ_x x² |ψ(x)|²` of one realization.
pub fn field_second_moment<T: Real>(field: &WaveField<T>) -> T {
    let grid = field.grid();
    let sum = grid
        .coordinates()
        .into_iter()
        .zip(field.values())
        .fold(T::zero(), |acc, (x, v)| acc + x * x * v.norm_sqr());
    sum * grid.spacing()
}

/// `S = h Σ_x x² Σ_p |ψ̂_p(x)|²` in raw coordinates.
pub fn second_moment<T: Real>(state: &GpcState<T>) -> T {
    let grid = state.grid();
    let density = mean_density(state);
    let sum = grid
        .coordinates()
        .into_iter()
        .zip(density)
        .fold(T::zero(), |acc, (x, d)| acc + x * x * d);
    sum * grid.spacing()
}

/// Discrete-norm distances of the means and the root mean densities.
pub fn error_metrics<T: Real>(
    candidate: &Statistics<T>,
    reference: &Statistics<T>,
) -> Result<ErrorMetrics, DiagnosticsError> {
    if candidate.grid() != reference.grid() {
        return Err(DiagnosticsError::GridMismatch);
    }
    let h = to_f64(candidate.grid().spacing());
    let mean: f64 = candidate
        .mean
        .values()
        .iter()
        .zip(reference.mean.values())
        .map(|(a, b)| to_f64((a - b).norm_sqr()))
        .sum();
    let density: f64 = candidate
        .density
        .iter()
        .zip(&reference.density)
        .map(|(&a, &b)| {
            let d = to_f64(a).max(0.0).sqrt() - to_f64(b).max(0.0).sqrt();
            d * d
        })
        .sum();
    Ok(ErrorMetrics {
        mean: (mean * h).sqrt(),
        density: (density * h).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpc::{build_coupling, project_potential, triple_products, GpcBasis};
    use crate::lattice::{initial_gaussian, RandomPotential};
    use crate::scalar::cis;
    use std::f64::consts::PI;

    fn grid() -> Grid<f64> {
        Grid::with_total_points(0.25, 64).unwrap()
    }

    fn zero_coupling(g: &Grid<f64>, order: usize) -> CouplingSet<f64> {
        let b = GpcBasis::new(order);
        build_coupling(&project_potential(&RandomPotential::Zero, &b, g), &triple_products(&b)).unwrap()
    }

    #[test]
    fn mass_examples() {
        let g = grid();
        let psi = initial_gaussian(&g);
        let mut s = GpcState::deterministic(&psi, 3);
        assert!((total_mass(&s) - 1.0).abs() < 1e-14);
        s.scale(Complex::new(0.0, 2.0));
        assert!((total_mass(&s) - 4.0).abs() < 1e-13);
    }

    #[test]
    fn plane_wave_kinetic_energy() {
        let g = grid();
        let zero = vec![0.0; g.len()];
        let coupling = zero_coupling(&g, 0);
        for xi in [-31i32, -7, 0, 1, 5, 31] {
            let wave = WaveField::from_fn(&g, |x| cis(xi as f64 * x));
            let state = GpcState::deterministic(&wave, 1);
            let e = total_energy(&state, &zero, &coupling).unwrap();
            let expected = 0.25 * 0.25 / 2.0 * (xi * xi) as f64 * wave.mass();
            assert!((e - expected).abs() < 1e-10 * expected.max(1.0), "xi={xi}");
        }
        let z = GpcState::deterministic(&WaveField::zeros(&g), 1);
        assert_eq!(total_energy(&z, &zero, &coupling).unwrap(), 0.0);
    }

    #[test]
    fn derivative_of_sine() {
        let g = grid();
        let f = WaveField::from_fn(&g, |x| Complex::new((3.0 * x).sin(), 0.0));
        let d = spectral_derivative(&f);
        let expected = WaveField::from_fn(&g, |x| Complex::new(3.0 * (3.0 * x).cos(), 0.0));
        assert!(d.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn potential_terms_in_energy() {
        let g = grid();
        let psi = initial_gaussian(&g);
        let b = GpcBasis::new(2);
        let coupling = build_coupling(
            &project_potential(&RandomPotential::LinearForce, &b, &g),
            &triple_products(&b),
        )
        .unwrap();
        let state = GpcState::deterministic(&psi, 3);
        let lattice = vec![0.0; g.len()];
        let e = total_energy(&state, &lattice, &coupling).unwrap();
        // ψ̂_0 only: the coupling contributes Û_0 = x.
        let kinetic = 0.25f64.powi(2) / 2.0 * spectral_derivative(&psi).mass();
        let potential: f64 =
            g.coordinates().iter().zip(psi.density()).map(|(x, d)| x * d).sum::<f64>() * g.spacing();
        assert!((e - kinetic - potential).abs() < 1e-12);
        assert!(total_energy(&state, &lattice[1..], &coupling).is_err());
    }

    #[test]
    fn non_real_energy_detected() {
        let g = Grid::with_total_points(0.5, 8).unwrap();
        let mut matrices = Vec::new();
        for _ in 0..8 {
            matrices.extend([1.0, 2.0, -2.0, 1.0]);
        }
        let coupling = CouplingSet::unfactorized(2, 8, matrices);
        let psi = initial_gaussian(&g);
        let mut s = GpcState::deterministic(&psi, 2);
        s.coefficients_mut()[1] = psi.clone().scaled(Complex::new(0.0, 1.0));
        assert!(matches!(
            total_energy(&s, &[0.0; 8], &coupling),
            Err(DiagnosticsError::NonRealEnergy { .. })
        ));
    }

    #[test]
    fn second_moment_examples() {
        let g = Grid::<f64>::with_total_points(0.25, 64).unwrap();
        let mid = 32;
        let mut values = vec![Complex::new(0.0, 0.0); 64];
        values[mid] = Complex::new(1.0, 0.0);
        let f = WaveField::from_values(&g, values);
        let s = GpcState::deterministic(&f, 2);
        assert!((second_moment(&s) - PI * PI * f.mass()).abs() < 1e-12);
        let mut t = GpcState::deterministic(&initial_gaussian(&g), 2);
        let s0 = second_moment(&t);
        t.scale(Complex::new(3.0, 0.0));
        assert!((second_moment(&t) - 9.0 * s0).abs() < 1e-12);
    }

    #[test]
    fn metric_examples() {
        let g = grid();
        let a = Statistics::deterministic(&initial_gaussian(&g));
        let m = error_metrics(&a, &a).unwrap();
        assert_eq!((m.mean, m.density), (0.0, 0.0));
        let rotated = Statistics::deterministic(&initial_gaussian(&g).scaled(cis(0.3)));
        let m = error_metrics(&rotated, &a).unwrap();
        assert!(m.density < 1e-15);
        assert!((m.mean - 2.0 * (0.15f64).sin()).abs() < 1e-12);
        let other = Grid::with_total_points(0.25, 32).unwrap();
        let c = Statistics::deterministic(&initial_gaussian(&other));
        assert_eq!(error_metrics(&c, &a), Err(DiagnosticsError::GridMismatch));
    }

    #[test]
    fn restriction_of_statistics() {
        let fine = Grid::<f64>::with_total_points(0.25, 128).unwrap();
        let coarse = Grid::<f64>::with_total_points(0.25, 32).unwrap();
        let s = Statistics::deterministic(&initial_gaussian(&fine)).restrict_to(&coarse).unwrap();
        let direct = initial_gaussian(&fine).restrict_to(&coarse).unwrap();
        assert_eq!(s.mean, direct);
        assert_eq!(s.density, direct.density());
    }

    proptest::proptest! {
        #[test]
        fn density_metric_is_symmetric(theta in 0.0..6.3f64, amp in 0.1..3.0f64) {
            let g = grid();
            let a = Statistics::deterministic(&initial_gaussian(&g));
            let b = Statistics::deterministic(&WaveField::from_fn(&g, |x| cis(theta * x) * amp * x.sin()));
            let ab = error_metrics(&a, &b).unwrap();
            let ba = error_metrics(&b, &a).unwrap();
            proptest::prop_assert_eq!(ab.density, ba.density);
            proptest::prop_assert_eq!(ab.mean, ba.mean);
        }
    }
}
