//! Truncated operator algebra on the extended space.
//!
//! States are `rows x cols` matrices flattened column-major, so
//! `vec(A X B) = (B^T (x) A) vec(X)`. The system factor is the slowest index of a
//! row (or column) label, auxiliary modes follow in declaration order.

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type Sparse = CsrMatrix<Complex64>;

const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub hamiltonian: CMat,
    pub coupling: CMat,
}

impl SystemSpec {
    pub fn new(hamiltonian: CMat, coupling: CMat) -> Result<Self> {
        let d = hamiltonian.nrows();
        if d == 0 || !hamiltonian.is_square() || coupling.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "H_s is {:?}, S is {:?}",
                hamiltonian.shape(),
                coupling.shape()
            )));
        }
        for (name, m) in [("H_s", &hamiltonian), ("S", &coupling)] {
            if hermiticity_deviation(m) > HERMITIAN_TOL {
                return Err(Error::InvalidParams(format!("{name} is not Hermitian")));
            }
        }
        Ok(Self { hamiltonian, coupling })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn is_decoupled(&self) -> bool {
        self.coupling.iter().all(|z| *z == Complex64::ZERO)
    }
}

pub fn hermiticity_deviation(m: &CMat) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn pauli(name: char) -> Option<CMat> {
    let (o, z, i) = (Complex64::ONE, Complex64::ZERO, Complex64::I);
    let v = match name {
        'x' => [z, o, o, z],
        'y' => [z, -i, i, z],
        'z' => [o, z, z, -o],
        'i' => [o, z, z, o],
        _ => return None,
    };
    Some(CMat::from_row_slice(2, 2, &v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FockConvention {
    /// `a|n> = sqrt(n)|n-1>`
    Normalized,
    /// `a|n) = -n|n-1)`, `a^dag|n) = -|n+1)`
    UnnormLeftSign,
    /// `a|n) = n|n-1)`, `a^dag|n) = |n+1)`
    UnnormPlain,
    /// `a|n) = |n-1)`, `a^dag|n) = (n+1)|n+1)`
    UnnormShift,
}

impl FockConvention {
    /// Weight `d_n` with `a_conv = D a_normalized D^{-1}`, `D = diag(d_n)`.
    pub fn frame_weight(self, n: usize) -> Complex64 {
        let sqrt_fact = (1..=n).map(|k| (k as f64).sqrt()).product::<f64>();
        match self {
            Self::Normalized => Complex64::ONE,
            Self::UnnormPlain => Complex64::from(1.0 / sqrt_fact),
            Self::UnnormLeftSign => {
                let s = if n % 2 == 0 { 1.0 } else { -1.0 };
                Complex64::from(s / sqrt_fact)
            }
            Self::UnnormShift => Complex64::from(sqrt_fact),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ladder {
    pub a: CMat,
    pub a_dag: CMat,
}

pub fn ladder(n_f: usize, conv: FockConvention) -> Result<Ladder> {
    if n_f == 0 {
        return Err(Error::TruncationTooSmall("n_F must be at least 1".into()));
    }
    let mut a = CMat::zeros(n_f, n_f);
    let mut a_dag = CMat::zeros(n_f, n_f);
    for n in 1..n_f {
        let nf = n as f64;
        let (lower, raise) = match conv {
            FockConvention::Normalized => (nf.sqrt(), nf.sqrt()),
            FockConvention::UnnormPlain => (nf, 1.0),
            FockConvention::UnnormLeftSign => (-nf, -1.0),
            FockConvention::UnnormShift => (1.0, nf),
        };
        a[(n - 1, n)] = lower.into();
        a_dag[(n, n - 1)] = raise.into();
    }
    Ok(Ladder { a, a_dag })
}

pub fn to_sparse(m: &CMat) -> Sparse {
    let mut coo = CooMatrix::new(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != Complex64::ZERO {
                coo.push(i, j, v);
            }
        }
    }
    Sparse::from(&coo)
}

pub fn to_dense(m: &Sparse) -> CMat {
    let mut d = CMat::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

pub fn sparse_identity(n: usize) -> Sparse {
    Sparse::identity(n)
}

pub fn sparse_zeros(rows: usize, cols: usize) -> Sparse {
    Sparse::zeros(rows, cols)
}

pub fn scale(m: &Sparse, c: Complex64) -> Sparse {
    let mut out = m.clone();
    out.values_mut().iter_mut().for_each(|v| *v *= c);
    out
}

pub fn transpose(m: &Sparse) -> Sparse {
    m.transpose()
}

/// Kronecker product `a (x) b` with `a` the slow index.
pub fn kron(a: &Sparse, b: &Sparse) -> Sparse {
    let (br, bc) = (b.nrows(), b.ncols());
    let mut coo = CooMatrix::new(a.nrows() * br, a.ncols() * bc);
    for (i, j, x) in a.triplet_iter() {
        for (k, l, y) in b.triplet_iter() {
            coo.push(i * br + k, j * bc + l, *x * *y);
        }
    }
    Sparse::from(&coo)
}

pub fn kron_compose(factors: &[CMat]) -> CMat {
    factors
        .iter()
        .fold(CMat::from_element(1, 1, Complex64::ONE), |acc, f| acc.kronecker(f))
}

pub fn kron_compose_sparse(factors: &[Sparse]) -> Sparse {
    factors.iter().fold(sparse_identity(1), |acc, f| kron(&acc, f))
}

/// Shape of the unflattened extended state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateShape {
    pub rows: usize,
    pub cols: usize,
}

impl StateShape {
    pub fn flat(&self) -> usize {
        self.rows * self.cols
    }
}

/// `X -> op X` on the flattened state.
pub fn lift_left(op: &Sparse, shape: StateShape) -> Result<Sparse> {
    if op.nrows() != shape.rows || op.ncols() != shape.rows {
        return Err(Error::DimensionMismatch(format!(
            "left operator {}x{} on {} rows",
            op.nrows(),
            op.ncols(),
            shape.rows
        )));
    }
    Ok(kron(&sparse_identity(shape.cols), op))
}

/// `X -> X op` on the flattened state.
pub fn lift_right(op: &Sparse, shape: StateShape) -> Result<Sparse> {
    if op.nrows() != shape.cols || op.ncols() != shape.cols {
        return Err(Error::DimensionMismatch(format!(
            "right operator {}x{} on {} columns",
            op.nrows(),
            op.ncols(),
            shape.cols
        )));
    }
    Ok(kron(&op.transpose(), &sparse_identity(shape.rows)))
}

/// `L' = D L D^{-1}` with `D = diag(weights)`.
pub fn fock_frame_rescale(l: &Sparse, weights: &[Complex64]) -> Result<Sparse> {
    if l.nrows() != weights.len() || l.ncols() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for a {}x{} generator",
            weights.len(),
            l.nrows(),
            l.ncols()
        )));
    }
    if let Some(k) = weights.iter().position(|w| *w == Complex64::ZERO) {
        return Err(Error::ZeroWeight(k));
    }
    let mut coo = CooMatrix::new(l.nrows(), l.ncols());
    for (i, j, v) in l.triplet_iter() {
        coo.push(i, j, weights[i] * *v / weights[j]);
    }
    Ok(Sparse::from(&coo))
}

/// Classical and quantum system superoperators on `dim_s x dim_s` states.
#[derive(Debug, Clone)]
pub struct SuperOpSet {
    pub sc: Sparse,
    pub sq: Sparse,
}

impl SuperOpSet {
    pub fn new(s: &CMat) -> Result<Self> {
        let shape = StateShape { rows: s.nrows(), cols: s.ncols() };
        let s = to_sparse(s);
        Self::from_lifts(&lift_left(&s, shape)?, &lift_right(&s, shape)?)
    }

    pub fn from_lifts(left: &Sparse, right: &Sparse) -> Result<Self> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        Ok(Self {
            sc: scale(&(left + right), r.into()),
            sq: scale(&(left - right), r.into()),
        })
    }
}

/// Keldysh combinations `(x_+ +- x_-)/sqrt2` of a left and a right lift.
pub fn keldysh_rotate(left: &Sparse, right: &Sparse) -> (Sparse, Sparse) {
    let r = Complex64::from(std::f64::consts::FRAC_1_SQRT_2);
    (scale(&(left + right), r), scale(&(left - right), r))
}

/// Index bookkeeping for system (x) modes on the rows and either the same or the
/// system-only space on the columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub dim_s: usize,
    pub mode_dims: Vec<usize>,
    pub two_sided: bool,
}

impl Layout {
    pub fn mode_space(&self) -> usize {
        self.mode_dims.iter().product()
    }

    pub fn shape(&self) -> StateShape {
        let rows = self.dim_s * self.mode_space();
        let cols = if self.two_sided { rows } else { self.dim_s };
        StateShape { rows, cols }
    }

    pub fn col_mode_space(&self) -> usize {
        if self.two_sided {
            self.mode_space()
        } else {
            1
        }
    }

    /// Digits of a mode-space index in declaration order.
    pub fn mode_digits(&self, mut k: usize) -> Vec<usize> {
        let mut d = vec![0; self.mode_dims.len()];
        for (slot, &n) in d.iter_mut().zip(&self.mode_dims).rev() {
            *slot = k % n;
            k /= n;
        }
        d
    }

    /// `S (x) I_modes` on the row space.
    pub fn sys_op(&self, s: &CMat) -> Sparse {
        kron(&to_sparse(s), &sparse_identity(self.mode_space()))
    }

    /// Mode-space operator with `op` on mode `k` and identities elsewhere.
    pub fn mode_local(&self, k: usize, op: &CMat) -> Sparse {
        let factors: Vec<Sparse> = self
            .mode_dims
            .iter()
            .enumerate()
            .map(|(j, &n)| if j == k { to_sparse(op) } else { sparse_identity(n) })
            .collect();
        kron_compose_sparse(&factors)
    }

    /// `I_s (x) op` on the row space for a full mode-space operator.
    pub fn mode_op(&self, op: &Sparse) -> Sparse {
        kron(&sparse_identity(self.dim_s), op)
    }

    pub fn left(&self, op: &Sparse) -> Result<Sparse> {
        lift_left(op, self.shape())
    }

    pub fn right(&self, op: &Sparse) -> Result<Sparse> {
        lift_right(op, self.shape())
    }

    /// Flat-index weights realizing per-mode Fock conventions on every mode index
    /// (row and, for two-sided layouts, column).
    pub fn convention_weights(&self, conv: &[FockConvention]) -> Result<Vec<Complex64>> {
        if conv.len() != self.mode_dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} conventions for {} modes",
                conv.len(),
                self.mode_dims.len()
            )));
        }
        let m = self.mode_space();
        let mode_w: Vec<Complex64> = (0..m)
            .map(|k| {
                self.mode_digits(k)
                    .iter()
                    .zip(conv)
                    .map(|(&n, c)| c.frame_weight(n))
                    .product()
            })
            .collect();
        let shape = self.shape();
        let mc = self.col_mode_space();
        let mut w = Vec::with_capacity(shape.flat());
        for col in 0..shape.cols {
            let wc = if self.two_sided { mode_w[col % mc] } else { Complex64::ONE };
            for row in 0..shape.rows {
                w.push(mode_w[row % m] * wc);
            }
        }
        Ok(w)
    }

    /// Flat indices whose row or column mode label has a digit at or above
    /// `n_F - margin` in any mode.
    pub fn boundary_mask(&self, margin: usize) -> Vec<bool> {
        let m = self.mode_space();
        let top: Vec<bool> = (0..m)
            .map(|k| {
                self.mode_digits(k)
                    .iter()
                    .zip(&self.mode_dims)
                    .any(|(&d, &n)| d + margin >= n)
            })
            .collect();
        let shape = self.shape();
        let mc = self.col_mode_space();
        let mut out = Vec::with_capacity(shape.flat());
        for col in 0..shape.cols {
            let tc = self.two_sided && top[col % mc];
            for row in 0..shape.rows {
                out.push(tc || top[row % m]);
            }
        }
        out
    }
}

pub fn vec_col_major(m: &CMat) -> Vec<Complex64> {
    m.as_slice().to_vec()
}

pub fn unvec(v: &[Complex64], shape: StateShape) -> CMat {
    CMat::from_column_slice(shape.rows, shape.cols, v)
}
