//! Dense complex linear algebra for small Hilbert spaces: state vectors,
//! operators, density matrices, superoperators, tensor products and
//! exponential propagation.
//!
//! All types are plain immutable values; operations are pure functions, so
//! everything can be shared freely across parallel workers.

pub mod linalg;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::C64;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Pure state: a column of complex amplitudes.
#[derive(Debug, Clone)]
pub struct StateVector {
    amplitudes: Array1<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Self {
        assert!(!amplitudes.is_empty(), "state needs at least one amplitude");
        StateVector {
            amplitudes: Array1::from(amplitudes),
        }
    }

    pub fn from_array(amplitudes: Array1<C64>) -> Self {
        assert!(!amplitudes.is_empty());
        StateVector { amplitudes }
    }

    /// Basis state |k> in a `dim`-dimensional space.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim);
        let mut a = Array1::zeros(dim);
        a[k] = c(1.0);
        StateVector { amplitudes: a }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, k: usize) -> C64 {
        self.amplitudes[k]
    }

    /// Squared Euclidean norm.
    pub fn norm2(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm2() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> StateVector {
        let n = self.norm2().sqrt();
        assert!(n > 0.0, "cannot normalize the zero vector");
        StateVector {
            amplitudes: self.amplitudes.mapv(|z| z / c(n)),
        }
    }

    pub fn scale(&self, z: C64) -> StateVector {
        StateVector {
            amplitudes: self.amplitudes.mapv(|a| a * z),
        }
    }

    /// <self|other>
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn add(&self, other: &StateVector) -> StateVector {
        StateVector {
            amplitudes: &self.amplitudes + &other.amplitudes,
        }
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()))
    }
}

/// Square complex matrix acting on [`StateVector`]s.
#[derive(Debug, Clone)]
pub struct Operator {
    entries: Array2<C64>,
}

impl Operator {
    pub fn new(entries: Array2<C64>) -> Self {
        assert_eq!(entries.nrows(), entries.ncols(), "operator must be square");
        Operator { entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Operator {
            entries: Array2::zeros((dim, dim)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Operator {
            entries: Array2::eye(dim),
        }
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> C64) -> Self {
        Operator {
            entries: Array2::from_shape_fn((dim, dim), |(i, j)| f(i, j)),
        }
    }

    /// |i><j|
    pub fn ketbra(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        m[(i, j)] = c(1.0);
        Operator { entries: m }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.entries[(i, j)]
    }

    pub fn dagger(&self) -> Operator {
        Operator {
            entries: linalg::adjoint(&self.entries),
        }
    }

    pub fn dot(&self, other: &Operator) -> Operator {
        Operator {
            entries: self.entries.dot(&other.entries),
        }
    }

    pub fn add(&self, other: &Operator) -> Operator {
        Operator {
            entries: &self.entries + &other.entries,
        }
    }

    pub fn sub(&self, other: &Operator) -> Operator {
        Operator {
            entries: &self.entries - &other.entries,
        }
    }

    pub fn scale(&self, z: C64) -> Operator {
        Operator {
            entries: self.entries.mapv(|a| a * z),
        }
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        assert_eq!(self.dim(), psi.dim(), "operator/state dimension mismatch");
        StateVector {
            amplitudes: self.entries.dot(psi.amplitudes()),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.entries[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let adj = self.dagger();
        self.max_abs_diff(&adj)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.entries)
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()))
    }

    /// Eigenvalues of a Hermitian operator, ascending.
    pub fn hermitian_eigenvalues(&self) -> Array1<f64> {
        linalg::hermitian_eig(&self.entries).0
    }
}

/// Kronecker product with index convention
/// `(i*dim_b + k, j*dim_b + l) = A(i,j) * B(k,l)`.
pub fn tensor_product(a: &Operator, b: &Operator) -> Operator {
    let (da, db) = (a.dim(), b.dim());
    let mut m = Array2::zeros((da * db, da * db));
    for i in 0..da {
        for j in 0..da {
            let aij = a.entries[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..db {
                for l in 0..db {
                    m[(i * db + k, j * db + l)] = aij * b.entries[(k, l)];
                }
            }
        }
    }
    Operator { entries: m }
}

/// exp(-i A t) |psi>.
///
/// Hermitian `A` goes through an eigendecomposition; anything else through
/// scaling-and-squaring on the dense matrix.
pub fn expm_apply(a: &Operator, t: f64, psi: &StateVector) -> Result<StateVector> {
    if !a.is_finite() {
        return Err(Error::NonFiniteOperator);
    }
    if a.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: psi.dim(),
        });
    }
    if t == 0.0 {
        return Ok(psi.clone());
    }
    let scale = a.max_abs().max(1.0);
    if a.is_hermitian(1e-13 * scale) {
        let (w, v) = linalg::hermitian_eig(&a.entries);
        // psi -> V exp(-i w t) V^H psi
        let vh_psi = linalg::adjoint(&v).dot(psi.amplitudes());
        let rotated = Array1::from_iter(
            vh_psi
                .iter()
                .zip(w.iter())
                .map(|(z, &wk)| z * C64::new(0.0, -wk * t).exp()),
        );
        Ok(StateVector {
            amplitudes: v.dot(&rotated),
        })
    } else {
        let gen = a.entries.mapv(|z| z * C64::new(0.0, -t));
        let u = linalg::expm(&gen);
        Ok(StateVector {
            amplitudes: u.dot(psi.amplitudes()),
        })
    }
}

/// Dense propagator exp(-i A t) as a matrix.
pub fn expm_propagator(a: &Operator, t: f64) -> Operator {
    let gen = a.entries.mapv(|z| z * C64::new(0.0, -t));
    Operator {
        entries: linalg::expm(&gen),
    }
}

/// <psi| A |psi>.
pub fn expectation(a: &Operator, psi: &StateVector) -> Result<C64> {
    if a.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: psi.dim(),
        });
    }
    let apsi = a.entries.dot(psi.amplitudes());
    Ok(psi
        .amplitudes
        .iter()
        .zip(apsi.iter())
        .map(|(p, q)| p.conj() * q)
        .sum())
}

/// Density matrix; also carries generator-modified quasi-densities, for which
/// the normalization invariants are relaxed.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    entries: Array2<C64>,
}

impl DensityMatrix {
    pub fn new(entries: Array2<C64>) -> Self {
        assert_eq!(entries.nrows(), entries.ncols());
        DensityMatrix { entries }
    }

    /// |psi><psi|
    pub fn pure(psi: &StateVector) -> Self {
        let n = psi.dim();
        let m = Array2::from_shape_fn((n, n), |(i, j)| {
            psi.amplitude(i) * psi.amplitude(j).conj()
        });
        DensityMatrix { entries: m }
    }

    pub fn zeros(dim: usize) -> Self {
        DensityMatrix {
            entries: Array2::zeros((dim, dim)),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix {
            entries: Array2::<C64>::eye(dim).mapv(|z| z / c(dim as f64)),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.entries[(i, j)]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.entries[(i, i)]).sum()
    }

    pub fn scale(&self, z: C64) -> DensityMatrix {
        DensityMatrix {
            entries: self.entries.mapv(|a| a * z),
        }
    }

    pub fn add(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            entries: &self.entries + &other.entries,
        }
    }

    pub fn sub(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            entries: &self.entries - &other.entries,
        }
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let (n, m) = (self.dim(), &self.entries);
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Array1<f64> {
        let herm = self.hermitian_part();
        linalg::hermitian_eig(&herm.entries).0
    }

    pub fn hermitian_part(&self) -> DensityMatrix {
        let adjt = linalg::adjoint(&self.entries);
        DensityMatrix {
            entries: (&self.entries + &adjt).mapv(|z| z * c(0.5)),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Tr{A rho}.
    pub fn expectation(&self, a: &Operator) -> C64 {
        assert_eq!(self.dim(), a.dim());
        let mut s = C64::new(0.0, 0.0);
        for i in 0..self.dim() {
            for k in 0..self.dim() {
                s += a.entries[(i, k)] * self.entries[(k, i)];
            }
        }
        s
    }

    /// Half the trace norm of the difference.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = self.sub(other).hermitian_part();
        0.5 * diff.eigenvalues().iter().map(|w| w.abs()).sum::<f64>()
    }

    /// Von Neumann entropy -Tr rho ln rho; tiny negative eigenvalues from
    /// roundoff are clipped.
    pub fn entropy(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .filter(|&&w| w > 1e-15)
            .map(|&w| -w * w.ln())
            .sum()
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()))
    }
}

/// Column-stacked vectorization: vec(rho)[j*dim + i] = rho[i, j].
pub fn vectorize(m: &Array2<C64>) -> Array1<C64> {
    let n = m.nrows();
    let mut v = Array1::zeros(n * n);
    for j in 0..n {
        for i in 0..n {
            v[j * n + i] = m[(i, j)];
        }
    }
    v
}

pub fn unvectorize(v: &Array1<C64>, dim: usize) -> Array2<C64> {
    let mut m = Array2::zeros((dim, dim));
    for j in 0..dim {
        for i in 0..dim {
            m[(i, j)] = v[j * dim + i];
        }
    }
    m
}

/// dim^2 x dim^2 matrix acting on column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct Superoperator {
    dim: usize,
    entries: Array2<C64>,
}

impl Superoperator {
    pub fn new(dim: usize, entries: Array2<C64>) -> Self {
        assert_eq!(entries.nrows(), dim * dim);
        assert_eq!(entries.ncols(), dim * dim);
        Superoperator { dim, entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Superoperator {
            dim,
            entries: Array2::zeros((dim * dim, dim * dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    /// rho -> A rho
    pub fn left_mult(a: &Operator) -> Self {
        let id = Operator::identity(a.dim());
        Superoperator {
            dim: a.dim(),
            entries: kron_raw(&id.entries, &a.entries),
        }
    }

    /// rho -> rho B
    pub fn right_mult(b: &Operator) -> Self {
        let bt = Operator {
            entries: b.entries.t().to_owned(),
        };
        let id = Operator::identity(b.dim());
        Superoperator {
            dim: b.dim(),
            entries: kron_raw(&bt.entries, &id.entries),
        }
    }

    /// rho -> A rho B
    pub fn sandwich(a: &Operator, b: &Operator) -> Self {
        assert_eq!(a.dim(), b.dim());
        let bt = b.entries.t().to_owned();
        Superoperator {
            dim: a.dim(),
            entries: kron_raw(&bt, &a.entries),
        }
    }

    pub fn add(&self, other: &Superoperator) -> Superoperator {
        Superoperator {
            dim: self.dim,
            entries: &self.entries + &other.entries,
        }
    }

    pub fn sub(&self, other: &Superoperator) -> Superoperator {
        Superoperator {
            dim: self.dim,
            entries: &self.entries - &other.entries,
        }
    }

    pub fn scale(&self, z: C64) -> Superoperator {
        Superoperator {
            dim: self.dim,
            entries: self.entries.mapv(|a| a * z),
        }
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            entries: self.apply_matrix(&rho.entries),
        }
    }

    pub fn apply_matrix(&self, m: &Array2<C64>) -> Array2<C64> {
        let v = vectorize(m);
        let out = self.entries.dot(&v);
        unvectorize(&out, self.dim)
    }

    /// exp(self * t) as a superoperator.
    pub fn exp(&self, t: f64) -> Superoperator {
        let gen = self.entries.mapv(|z| z * c(t));
        Superoperator {
            dim: self.dim,
            entries: linalg::expm(&gen),
        }
    }

    pub fn max_abs_diff(&self, other: &Superoperator) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()))
    }
}

fn kron_raw(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut m = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    m[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    m
}
