//! One Bloch-decomposition splitting step for a single wavefield.
//!
//! The lattice substep solves `iε∂_tψ = -ε²/2 ∂_xxψ + V_Γ(x/ε)ψ` exactly in
//! the discrete band basis:
//!
//! 1. `cell_transform`: DFT across cells, `ψ̃_{ℓ,r} = Σ_j ψ_{j,r} e^{-i2πk_ℓ j}`;
//! 2. `analyze`: `C_{m,ℓ} = (2π/R) Σ_r ψ̃_{ℓ,r} φ̄_m(y_r,k_ℓ)`;
//! 3. `evolve_bands`: `C ← C e^{-iE_m(k_ℓ)Δt/ε}`;
//! 4. `synthesize`: `ψ̃_{ℓ,r} = Σ_m C_{m,ℓ} φ_m(y_r,k_ℓ)`;
//! 5. `inverse_cell_transform`: `ψ_{ℓ,r} = (1/L) Σ_j ψ̃_{j,r} e^{i2πk_j ℓ}`.
//!
//! Steps 2 and 4 run through a length-`R` FFT followed by a dense projection
//! onto the eigenvector matrix `χ̂`.

use rayon::prelude::*;

use crate::bloch::LatticeTable;
use crate::lattice::{Grid, WaveField};
use crate::scalar::{cis, from_usize, Complex, Real};

/// Field after the cell transform, indexed `(ℓ, r)` at `ℓ·R + r`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformedField<T: Real> {
    grid: Grid<T>,
    values: Vec<Complex<T>>,
}

impl<T: Real> TransformedField<T> {
    pub fn from_values(grid: &Grid<T>, values: Vec<Complex<T>>) -> Self {
        assert_eq!(values.len(), grid.len(), "transformed field length mismatch");
        TransformedField {
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

    pub fn cell(&self, cell: usize) -> &[Complex<T>] {
        let r = self.grid.points_per_cell();
        &self.values[cell * r..(cell + 1) * r]
    }

    /// Plain `Σ|ψ̃|²`.
    pub fn sum_norm_sqr(&self) -> T {
        crate::lattice::sum_norm_sqr(&self.values)
    }
}

/// Bloch coefficients `C_{m,ℓ}` at `ℓ·M + m`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlochCoefficients<T: Real> {
    cells: usize,
    bands: usize,
    values: Vec<Complex<T>>,
}

impl<T: Real> BlochCoefficients<T> {
    pub fn from_values(cells: usize, bands: usize, values: Vec<Complex<T>>) -> Self {
        assert_eq!(values.len(), cells * bands);
        BlochCoefficients {
            cells,
            bands,
            values,
        }
    }

    pub fn zeros(cells: usize, bands: usize) -> Self {
        Self::from_values(cells, bands, vec![Complex::new(T::zero(), T::zero()); cells * bands])
    }

    pub fn get(&self, band: usize, cell: usize) -> Complex<T> {
        self.values[cell * self.bands + band]
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn sum_norm_sqr(&self) -> T {
        crate::lattice::sum_norm_sqr(&self.values)
    }
}

fn check_grid<T: Real>(a: &Grid<T>, b: &Grid<T>) {
    assert!(a == b, "field grid {a:?} does not match table grid {b:?}");
}

/// `(-1)^j` as a real factor.
fn alternating<T: Real>(j: usize) -> T {
    if j.is_multiple_of(2) {
        T::one()
    } else {
        -T::one()
    }
}

/// Length-`L` DFT across cells at every fixed `r`.
///
/// With `k_ℓ = -1/2 + ℓ/L`, `e^{-i2πk_ℓ j} = (-1)^j e^{-i2πℓj/L}`, so this is
/// a standard FFT of the alternated column.
pub fn cell_transform<T: Real>(field: &WaveField<T>) -> TransformedField<T> {
    let grid = field.grid();
    let (l, r) = (grid.cells(), grid.points_per_cell());
    let plan = &grid.plans().cell_forward;
    let mut out = vec![Complex::new(T::zero(), T::zero()); grid.len()];
    let mut column = vec![Complex::new(T::zero(), T::zero()); l];
    for ri in 0..r {
        for (j, c) in column.iter_mut().enumerate() {
            *c = field.values()[j * r + ri] * alternating::<T>(j);
        }
        plan.process(&mut column);
        for (cell, c) in column.iter().enumerate() {
            out[cell * r + ri] = *c;
        }
    }
    TransformedField {
        grid: grid.clone(),
        values: out,
    }
}

/// Inverse of [`cell_transform`], including the `1/L` factor.
pub fn inverse_cell_transform<T: Real>(transformed: &TransformedField<T>) -> WaveField<T> {
    let grid = transformed.grid();
    let (l, r) = (grid.cells(), grid.points_per_cell());
    let plan = &grid.plans().cell_inverse;
    let inv_l = T::one() / from_usize(l);
    let mut out = vec![Complex::new(T::zero(), T::zero()); grid.len()];
    let mut column = vec![Complex::new(T::zero(), T::zero()); l];
    for ri in 0..r {
        for (j, c) in column.iter_mut().enumerate() {
            *c = transformed.values[j * r + ri];
        }
        plan.process(&mut column);
        for (cell, c) in column.iter().enumerate() {
            out[cell * r + ri] = *c * (alternating::<T>(cell) * inv_l);
        }
    }
    WaveField::from_values(grid, out)
}

/// Band projection of one cell's `ψ̃(·, k_ℓ)`, written into `coeffs`.
///
/// `C_m = (√(2π)/R) Σ_λ χ̂̄_m(λ) g(λ)` with
/// `g(λ) = Σ_r ψ̃_r e^{-i(k+λ)y_r}`.
fn analyze_cell<T: Real>(
    table: &LatticeTable<T>,
    cell: usize,
    input: &[Complex<T>],
    coeffs: &mut [Complex<T>],
    scratch: &mut [Complex<T>],
) {
    let grid = table.grid();
    let r = grid.points_per_cell();
    let m = table.bands();
    let k = grid.quasimomentum(cell);
    for (ri, s) in scratch.iter_mut().enumerate() {
        *s = input[ri] * cis(-k * grid.local_coordinate(ri));
    }
    grid.plans().local_forward.process(scratch);
    let chi = table.cell_coefficients(cell);
    let scale = T::two_pi().sqrt() / from_usize(r);
    for c in coeffs.iter_mut() {
        *c = Complex::new(T::zero(), T::zero());
    }
    for li in 0..r {
        // Row i of χ̂ holds λ = i - R/2, which sits at FFT bin (λ mod R).
        let g = scratch[(li + r / 2) % r];
        let row = &chi[li * m..(li + 1) * m];
        for (c, x) in coeffs.iter_mut().zip(row) {
            *c += x.conj() * g;
        }
    }
    for c in coeffs.iter_mut() {
        *c *= scale;
    }
}

/// Band synthesis of one cell: `ψ̃_r = Σ_m C_m φ_m(y_r, k_ℓ)`.
fn synthesize_cell<T: Real>(
    table: &LatticeTable<T>,
    cell: usize,
    coeffs: &[Complex<T>],
    output: &mut [Complex<T>],
) {
    let grid = table.grid();
    let r = grid.points_per_cell();
    let m = table.bands();
    let k = grid.quasimomentum(cell);
    let chi = table.cell_coefficients(cell);
    for li in 0..r {
        let row = &chi[li * m..(li + 1) * m];
        let h = row
            .iter()
            .zip(coeffs)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (x, c)| acc + x * c);
        output[(li + r / 2) % r] = h;
    }
    grid.plans().local_inverse.process(output);
    let scale = T::one() / T::two_pi().sqrt();
    for (ri, o) in output.iter_mut().enumerate() {
        *o = *o * cis(k * grid.local_coordinate(ri)) * scale;
    }
}

/// Bloch coefficients of a transformed field.
pub fn analyze<T: Real>(
    transformed: &TransformedField<T>,
    table: &LatticeTable<T>,
) -> BlochCoefficients<T> {
    check_grid(transformed.grid(), table.grid());
    let grid = table.grid();
    let (l, r, m) = (grid.cells(), grid.points_per_cell(), table.bands());
    let mut values = vec![Complex::new(T::zero(), T::zero()); l * m];
    values
        .par_chunks_mut(m)
        .enumerate()
        .for_each_init(
            || vec![Complex::new(T::zero(), T::zero()); r],
            |scratch, (cell, coeffs)| {
                analyze_cell(table, cell, transformed.cell(cell), coeffs, scratch)
            },
        );
    BlochCoefficients::from_values(l, m, values)
}

/// `C_{m,ℓ} e^{-iE_m(k_ℓ)Δt/ε}`.
pub fn evolve_bands<T: Real>(
    coefficients: &BlochCoefficients<T>,
    table: &LatticeTable<T>,
    dt: T,
    epsilon: T,
) -> BlochCoefficients<T> {
    let mut out = coefficients.clone();
    let m = coefficients.bands;
    for (idx, c) in out.values.iter_mut().enumerate() {
        let e = table.energy(idx % m, idx / m);
        *c *= cis(-e * dt / epsilon);
    }
    out
}

/// Field assembled from band contributions.
pub fn synthesize<T: Real>(
    coefficients: &BlochCoefficients<T>,
    table: &LatticeTable<T>,
) -> TransformedField<T> {
    let grid = table.grid();
    let (r, m) = (grid.points_per_cell(), table.bands());
    assert_eq!(coefficients.bands, m, "band count mismatch");
    let mut values = vec![Complex::new(T::zero(), T::zero()); grid.len()];
    values.par_chunks_mut(r).enumerate().for_each(|(cell, out)| {
        synthesize_cell(table, cell, &coefficients.values[cell * m..(cell + 1) * m], out)
    });
    TransformedField {
        grid: grid.clone(),
        values,
    }
}

/// Exact lattice flow over `dt` in the band basis.
pub fn bd_lattice_step<T: Real>(field: &WaveField<T>, table: &LatticeTable<T>, dt: T) -> WaveField<T> {
    check_grid(field.grid(), table.grid());
    let grid = table.grid();
    let epsilon = grid.epsilon();
    let (r, m) = (grid.points_per_cell(), table.bands());
    let mut transformed = cell_transform(field);
    transformed
        .values
        .par_chunks_mut(r)
        .enumerate()
        .for_each_init(
            || {
                (
                    vec![Complex::new(T::zero(), T::zero()); r],
                    vec![Complex::new(T::zero(), T::zero()); m],
                )
            },
            |(scratch, coeffs), (cell, values)| {
                analyze_cell(table, cell, values, coeffs, scratch);
                for (band, c) in coeffs.iter_mut().enumerate() {
                    *c *= cis(-table.energy(band, cell) * dt / epsilon);
                }
                synthesize_cell(table, cell, coeffs, values);
            },
        );
    inverse_cell_transform(&transformed)
}

/// Multiplies by `e^{-iU(x)Δt/ε}` pointwise.
pub fn potential_phase_step<T: Real>(field: &WaveField<T>, potential: &[T], dt: T) -> WaveField<T> {
    let mut out = field.clone();
    apply_potential_phase(&mut out, potential, dt);
    out
}

pub(crate) fn apply_potential_phase<T: Real>(field: &mut WaveField<T>, potential: &[T], dt: T) {
    assert_eq!(potential.len(), field.values().len());
    let epsilon = field.grid().epsilon();
    for (v, &u) in field.values_mut().iter_mut().zip(potential) {
        *v *= cis(-u * dt / epsilon);
    }
}

/// Deterministic Strang step `U/2 · lattice · U/2`.
pub fn bd_strang_step<T: Real>(
    field: &WaveField<T>,
    table: &LatticeTable<T>,
    potential: &[T],
    dt: T,
) -> WaveField<T> {
    let half = dt / crate::scalar::lit(2.0);
    let mut out = potential_phase_step(field, potential, half);
    out = bd_lattice_step(&out, table, dt);
    apply_potential_phase(&mut out, potential, half);
    out
}
