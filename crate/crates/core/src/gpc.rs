//! Legendre polynomial chaos for a uniform random variable `z ∈ [-1, 1]`.
//!
//! Basis functions are zero-indexed: `Φ_0 ≡ 1`, `Φ_p = √(2p+1) P_p(z)`,
//! orthonormal under the probability measure `dμ = dz/2`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::lattice::{Grid, RandomPotential, WaveField};
use crate::scalar::{cis, from_usize, lit, Complex, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpcError {
    #[error("quadrature needs at least {required} nodes, got {given}")]
    TooFewNodes { required: usize, given: usize },
    #[error("symmetric eigensolver failed at grid point {0}")]
    EigensolveFailure(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Gauss-Legendre rule on `[-1, 1]` with weights for `dμ = dz/2` (they sum
/// to one).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre<T: Real> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre_with_derivative<T: Real>(n: usize, z: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = z;
    if n == 0 {
        return (T::one(), T::zero());
    }
    for k in 2..=n {
        let kf = from_usize::<T>(k);
        let p2 = ((lit::<T>(2.0) * kf - T::one()) * z * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = from_usize::<T>(n);
    let dp = nf * (z * p1 - p0) / (z * z - T::one());
    (p1, dp)
}

impl<T: Real> GaussLegendre<T> {
    /// `n`-point rule, exact for polynomials of degree `2n-1`.
    ///
    /// # Panics
    /// If `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Newton from the Chebyshev-like initial guess, in f64 then
            // polished in working precision.
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative::<f64>(n, z);
                let step = p / dp;
                z -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let mut zt: T = lit(z);
            let (p, dp) = legendre_with_derivative::<T>(n, zt);
            zt -= p / dp;
            let (_, dp) = legendre_with_derivative::<T>(n, zt);
            // Standard weight 2/((1-z²)P'²), halved for dμ = dz/2.
            let w = T::one() / ((T::one() - zt * zt) * dp * dp);
            nodes[i] = -zt;
            nodes[n - 1 - i] = zt;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = T::zero();
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `E[f] = ∫ f dμ` by the rule.
    pub fn expectation(&self, f: impl Fn(T) -> T) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&z, &w)| acc + w * f(z))
    }
}

/// Orthonormal Legendre value `Φ_p(z)`.
pub fn orthonormal_legendre<T: Real>(p: usize, z: T) -> T {
    let (v, _) = if p == 0 {
        (T::one(), T::zero())
    } else if p == 1 {
        (z, T::one())
    } else {
        legendre_with_derivative(p, z)
    };
    (lit::<T>(2.0) * from_usize::<T>(p) + T::one()).sqrt() * v
}

/// Legendre gPC basis of maximal degree `Q` (size `P = Q + 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct GpcBasis<T: Real> {
    order: usize,
    quadrature: GaussLegendre<T>,
}

impl<T: Real> GpcBasis<T> {
    /// Default quadrature size `2Q + 2`.
    pub fn new(order: usize) -> Self {
        GpcBasis {
            order,
            quadrature: GaussLegendre::new(2 * order + 2),
        }
    }

    /// Custom quadrature size; needs at least `⌈(3Q+1)/2⌉` nodes so that
    /// triple products are exact.
    pub fn with_quadrature(order: usize, nodes: usize) -> Result<Self, GpcError> {
        let required = (3 * order + 2) / 2;
        if nodes < required.max(1) {
            return Err(GpcError::TooFewNodes {
                required: required.max(1),
                given: nodes,
            });
        }
        Ok(GpcBasis {
            order,
            quadrature: GaussLegendre::new(nodes),
        })
    }

    /// Maximal degree `Q`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Basis size `P`.
    pub fn size(&self) -> usize {
        self.order + 1
    }

    pub fn quadrature(&self) -> &GaussLegendre<T> {
        &self.quadrature
    }

    pub fn evaluate(&self, p: usize, z: T) -> T {
        orthonormal_legendre(p, z)
    }

    /// `Φ_p(z_j)` at `j·P + p`.
    fn node_values(&self) -> Vec<T> {
        let p = self.size();
        let mut out = Vec::with_capacity(self.quadrature.len() * p);
        for &z in self.quadrature.nodes() {
            out.extend((0..p).map(|q| orthonormal_legendre(q, z)));
        }
        out
    }
}

/// `e_{jqp} = E[Φ_j Φ_q Φ_p]` at `(j·P + q)·P + p`.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleProducts<T: Real> {
    size: usize,
    data: Vec<T>,
}

impl<T: Real> TripleProducts<T> {
    pub fn get(&self, j: usize, q: usize, p: usize) -> T {
        self.data[(j * self.size + q) * self.size + p]
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

/// Triple-product tensor by quadrature; entries are computed once for
/// sorted indices and mirrored, so the tensor is exactly symmetric.
pub fn triple_products<T: Real>(basis: &GpcBasis<T>) -> TripleProducts<T> {
    let p = basis.size();
    let values = basis.node_values();
    let weights = basis.quadrature().weights();
    let mut data = vec![T::zero(); p * p * p];
    for a in 0..p {
        for b in a..p {
            for c in b..p {
                let mut s = T::zero();
                for (node, &w) in weights.iter().enumerate() {
                    let row = &values[node * p..(node + 1) * p];
                    s += w * row[a] * row[b] * row[c];
                }
                for (i, j, k) in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
                    data[(i * p + j) * p + k] = s;
                }
            }
        }
    }
    TripleProducts { size: p, data }
}

/// gPC modes `Û_p(x_j)` of a random potential, at `p·N + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedPotential<T: Real> {
    size: usize,
    points: usize,
    modes: Vec<T>,
}

impl<T: Real> ProjectedPotential<T> {
    pub fn from_modes(size: usize, points: usize, modes: Vec<T>) -> Self {
        assert_eq!(modes.len(), size * points);
        ProjectedPotential { size, points, modes }
    }

    pub fn mode(&self, p: usize) -> &[T] {
        &self.modes[p * self.points..(p + 1) * self.points]
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn points(&self) -> usize {
        self.points
    }
}

/// `Û_p(x) = Σ_j w_j U(x, z_j) Φ_p(z_j)` on every grid point.
pub fn project_potential<T: Real>(
    potential: &RandomPotential<T>,
    basis: &GpcBasis<T>,
    grid: &Grid<T>,
) -> ProjectedPotential<T> {
    let p = basis.size();
    let n = grid.len();
    let values = basis.node_values();
    let quad = basis.quadrature();
    let mut modes = vec![T::zero(); p * n];
    for (node, (&z, &w)) in quad.nodes().iter().zip(quad.weights()).enumerate() {
        let samples = potential.sample_grid(grid, z);
        for q in 0..p {
            let weight = w * values[node * p + q];
            let mode = &mut modes[q * n..(q + 1) * n];
            for (m, &u) in mode.iter_mut().zip(&samples) {
                *m += weight * u;
            }
        }
    }
    ProjectedPotential::from_modes(p, n, modes)
}

/// Galerkin coupling matrices `A_U(x)` and their spectral factorizations.
#[derive(Clone, Debug)]
pub struct CouplingSet<T: Real> {
    size: usize,
    points: usize,
    /// Row-major `P×P` blocks of `A_U(x_j)`.
    matrices: Vec<T>,
    eigenvalues: Vec<T>,
    /// Row-major `P×P` blocks; column `i` is the eigenvector of `λ_i`.
    eigenvectors: Vec<T>,
}

impl<T: Real> CouplingSet<T> {
    #[cfg(test)]
    pub(crate) fn unfactorized(size: usize, points: usize, matrices: Vec<T>) -> Self {
        CouplingSet {
            size,
            points,
            matrices,
            eigenvalues: Vec::new(),
            eigenvectors: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn matrix(&self, point: usize) -> &[T] {
        let s = self.size * self.size;
        &self.matrices[point * s..(point + 1) * s]
    }

    pub fn eigenvalues(&self, point: usize) -> &[T] {
        &self.eigenvalues[point * self.size..(point + 1) * self.size]
    }

    pub fn eigenvectors(&self, point: usize) -> &[T] {
        let s = self.size * self.size;
        &self.eigenvectors[point * s..(point + 1) * s]
    }

    /// `ψ⃗ᴴ A_U(x_j) ψ⃗` at one point (complex; real up to rounding).
    pub fn quadratic_form(&self, point: usize, v: &[Complex<T>]) -> Complex<T> {
        let a = self.matrix(point);
        let p = self.size;
        let mut acc = Complex::new(T::zero(), T::zero());
        for i in 0..p {
            let mut row = Complex::new(T::zero(), T::zero());
            for j in 0..p {
                row += v[j] * a[i * p + j];
            }
            acc += v[i].conj() * row;
        }
        acc
    }
}

/// Assembles `a_{pq}(x) = Σ_j Û_j(x) e_{jqp}` and factorizes it per point.
pub fn build_coupling<T: Real>(
    projected: &ProjectedPotential<T>,
    triple: &TripleProducts<T>,
) -> Result<CouplingSet<T>, GpcError> {
    let p = projected.size();
    if triple.size() != p {
        return Err(GpcError::Dimension(format!(
            "projection has {p} modes, tensor has {}",
            triple.size()
        )));
    }
    let n = projected.points();
    let per_point: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..n)
        .into_par_iter()
        .map(|point| {
            let mut a = vec![T::zero(); p * p];
            for row in 0..p {
                for col in row..p {
                    let mut s = T::zero();
                    for j in 0..p {
                        s += projected.mode(j)[point] * triple.get(j, col, row);
                    }
                    a[row * p + col] = s;
                    a[col * p + row] = s;
                }
            }
            let eig = SymmetricEigen::try_new(DMatrix::from_row_slice(p, p, &a), T::default_epsilon(), 0)
                .ok_or(GpcError::EigensolveFailure(point))?;
            let mut vecs = vec![T::zero(); p * p];
            for r in 0..p {
                for c in 0..p {
                    vecs[r * p + c] = eig.eigenvectors[(r, c)];
                }
            }
            Ok((a, eig.eigenvalues.iter().copied().collect(), vecs))
        })
        .collect::<Result<_, GpcError>>()?;
    let mut set = CouplingSet {
        size: p,
        points: n,
        matrices: Vec::with_capacity(n * p * p),
        eigenvalues: Vec::with_capacity(n * p),
        eigenvectors: Vec::with_capacity(n * p * p),
    };
    for (a, l, v) in per_point {
        set.matrices.extend(a);
        set.eigenvalues.extend(l);
        set.eigenvectors.extend(v);
    }
    Ok(set)
}

/// gPC coefficient fields `ψ̂_0, …, ψ̂_{P-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GpcState<T: Real> {
    coeffs: Vec<WaveField<T>>,
}

impl<T: Real> GpcState<T> {
    pub fn from_coefficients(coeffs: Vec<WaveField<T>>) -> Self {
        assert!(!coeffs.is_empty(), "gPC state needs at least one mode");
        let grid = coeffs[0].grid().clone();
        assert!(coeffs.iter().all(|c| c.grid() == &grid), "modes on different grids");
        GpcState { coeffs }
    }

    /// Deterministic initial datum: `ψ̂_0 = ψ`, higher modes zero.
    pub fn deterministic(field: &WaveField<T>, size: usize) -> Self {
        let mut coeffs = vec![WaveField::zeros(field.grid()); size];
        coeffs[0] = field.clone();
        GpcState { coeffs }
    }

    /// Random initial datum: `ψ̂_p(x) = ∫ ψ_in(x,z) Φ_p(z) dμ(z)`.
    pub fn project_initial(
        grid: &Grid<T>,
        basis: &GpcBasis<T>,
        initial: impl Fn(T, T) -> Complex<T>,
    ) -> Self {
        let p = basis.size();
        let quad = basis.quadrature();
        let mut coeffs = vec![WaveField::zeros(grid); p];
        for (&z, &w) in quad.nodes().iter().zip(quad.weights()) {
            let sample = WaveField::from_fn(grid, |x| initial(x, z));
            for (q, c) in coeffs.iter_mut().enumerate() {
                let weight = w * orthonormal_legendre(q, z);
                for (dst, src) in c.values_mut().iter_mut().zip(sample.values()) {
                    *dst += src * weight;
                }
            }
        }
        GpcState { coeffs }
    }

    pub fn grid(&self) -> &Grid<T> {
        self.coeffs[0].grid()
    }

    pub fn size(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coefficients(&self) -> &[WaveField<T>] {
        &self.coeffs
    }

    pub fn coefficients_mut(&mut self) -> &mut [WaveField<T>] {
        &mut self.coeffs
    }

    pub fn scale(&mut self, c: Complex<T>) {
        for f in &mut self.coeffs {
            f.scale(c);
        }
    }

    /// Realization `ψ_Q(x, z) = Σ_p ψ̂_p(x) Φ_p(z)`.
    pub fn realization(&self, z: T) -> WaveField<T> {
        let mut out = WaveField::zeros(self.grid());
        for (p, c) in self.coeffs.iter().enumerate() {
            let phi = orthonormal_legendre(p, z);
            for (o, v) in out.values_mut().iter_mut().zip(c.values()) {
                *o += v * phi;
            }
        }
        out
    }

    /// Largest pointwise difference across all modes.
    pub fn max_abs_diff(&self, other: &GpcState<T>) -> T {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(T::zero(), |m, d| if d > m { d } else { m })
    }
}

/// `E[ψ] = ψ̂_0`.
pub fn mean_field<T: Real>(state: &GpcState<T>) -> WaveField<T> {
    state.coeffs[0].clone()
}

/// `E[|ψ|²](x) = Σ_p |ψ̂_p(x)|²`.
pub fn mean_density<T: Real>(state: &GpcState<T>) -> Vec<T> {
    let mut out = vec![T::zero(); state.grid().len()];
    for c in &state.coeffs {
        for (o, v) in out.iter_mut().zip(c.values()) {
            *o += v.norm_sqr();
        }
    }
    out
}

/// Exact flow of `iε∂_tψ⃗ = A_U(x)ψ⃗` over `dt`:
/// `ψ⃗ ← Q diag(e^{-iλ_i dt/ε}) Qᵀ ψ⃗` at every point.
pub fn random_potential_step<T: Real>(
    state: &GpcState<T>,
    coupling: &CouplingSet<T>,
    dt: T,
) -> GpcState<T> {
    let mut out = state.clone();
    apply_random_potential(&mut out, coupling, dt);
    out
}

pub(crate) fn apply_random_potential<T: Real>(state: &mut GpcState<T>, coupling: &CouplingSet<T>, dt: T) {
    let p = state.size();
    let n = state.grid().len();
    assert_eq!(coupling.size(), p, "coupling size mismatch");
    assert_eq!(coupling.points(), n, "coupling grid mismatch");
    let epsilon = state.grid().epsilon();
    // Gather to point-major layout, propagate, scatter back.
    let mut packed = vec![Complex::new(T::zero(), T::zero()); n * p];
    for (q, c) in state.coeffs.iter().enumerate() {
        for (j, v) in c.values().iter().enumerate() {
            packed[j * p + q] = *v;
        }
    }
    packed.par_chunks_mut(p).enumerate().for_each_init(
        || vec![Complex::new(T::zero(), T::zero()); p],
        |tmp, (point, v)| {
            let q = coupling.eigenvectors(point);
            let lambda = coupling.eigenvalues(point);
            for i in 0..p {
                let mut s = Complex::new(T::zero(), T::zero());
                for r in 0..p {
                    s += v[r] * q[r * p + i];
                }
                tmp[i] = s * cis(-lambda[i] * dt / epsilon);
            }
            for (r, out) in v.iter_mut().enumerate() {
                let mut s = Complex::new(T::zero(), T::zero());
                for i in 0..p {
                    s += tmp[i] * q[r * p + i];
                }
                *out = s;
            }
        },
    );
    for (q, c) in state.coeffs.iter_mut().enumerate() {
        for (j, v) in c.values_mut().iter_mut().enumerate() {
            *v = packed[j * p + q];
        }
    }
}

/// `‖ψ̂_p‖` for every mode.
pub fn mode_norms<T: Real>(state: &GpcState<T>) -> Vec<T> {
    state.coeffs.iter().map(|c| c.norm()).collect()
}
