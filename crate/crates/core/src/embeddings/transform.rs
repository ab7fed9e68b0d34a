use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ExtendedGenerator, ExtractionRule, InjectionRule};
use crate::correlator::BrownianParams;
use crate::error::{Error, Result};
use crate::liouville::{
    ladder, scale, sparse_identity, sparse_zeros, to_dense, to_sparse, CMat, Layout, Sparse,
};

const SINGULAR_COND: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LadderOp {
    A,
    Adag,
    N,
}

/// `coeff * L(P) R(Q)` with `P`, `Q` ordered products of single-mode ladders and
/// `R(Q) X = X Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperTerm {
    pub coeff: Complex64,
    pub left: Vec<(usize, LadderOp)>,
    pub right: Vec<(usize, LadderOp)>,
}

impl SuperTerm {
    pub fn left(coeff: Complex64, ops: &[(usize, LadderOp)]) -> Self {
        Self { coeff, left: ops.to_vec(), right: vec![] }
    }

    pub fn right(coeff: Complex64, ops: &[(usize, LadderOp)]) -> Self {
        Self { coeff, left: vec![], right: ops.to_vec() }
    }
}

/// `exp(sum of terms)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformFactor {
    pub terms: Vec<SuperTerm>,
}

/// `B = F_1 F_2 ... F_n`; the last factor acts first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub name: String,
    pub factors: Vec<TransformFactor>,
}

impl TransformSpec {
    pub fn identity() -> Self {
        Self { name: "identity".into(), factors: vec![] }
    }

    /// `exp(-a_+ a_-^dag) exp(i pi N_-)` per mode, where `a_-^dag X = X a^dag` and
    /// `N_- X = X a^dag a`.
    pub fn thermal_pair_displacement(n_modes: usize) -> Self {
        let mut factors = Vec::new();
        for k in 0..n_modes {
            factors.push(TransformFactor {
                terms: vec![SuperTerm {
                    coeff: (-1.0).into(),
                    left: vec![(k, LadderOp::A)],
                    right: vec![(k, LadderOp::Adag)],
                }],
            });
            factors.push(TransformFactor {
                terms: vec![SuperTerm::right(Complex64::new(0.0, std::f64::consts::PI), &[(k, LadderOp::N)])],
            });
        }
        Self { name: "thermal-pair-displacement".into(), factors }
    }

    /// Maps the pure-state frame with `delta = lambda = d` onto the stable
    /// zero-reference pseudomode frame: the displacement above composed with
    /// `(1/sqrt2)^{N_+} (-1/sqrt2)^{N_-}`.
    pub fn pure_state_to_keldysh(n_modes: usize) -> Self {
        let mut s = Self::thermal_pair_displacement(n_modes);
        let h = -0.5 * 2f64.ln();
        for k in 0..n_modes {
            s.factors.push(TransformFactor {
                terms: vec![
                    SuperTerm::left(h.into(), &[(k, LadderOp::N)]),
                    SuperTerm::right(Complex64::new(h, std::f64::consts::PI), &[(k, LadderOp::N)]),
                ],
            });
        }
        s.name = "pure-state-to-keldysh".into();
        s
    }

    /// `exp(-(a^2 + b^2)/2) exp(r (N_a + N_b)) exp(i pi N_b)` with
    /// `r = ln(beta w0^2 / (2 c0^2)) / 2`, on a two-mode one-sided frame.
    pub fn classical_to_namba(params: &BrownianParams) -> Result<Self> {
        let BrownianParams { c0, omega0, beta, .. } = *params;
        if c0 == 0.0 || !beta.is_finite() {
            return Err(Error::InvalidParams("transform needs c0 > 0 and finite beta".into()));
        }
        let r = 0.5 * (beta * omega0 * omega0 / (2.0 * c0 * c0)).ln();
        use LadderOp::*;
        Ok(Self {
            name: "classical-to-namba".into(),
            factors: vec![
                TransformFactor {
                    terms: vec![
                        SuperTerm::left((-0.5).into(), &[(0, A), (0, A)]),
                        SuperTerm::left((-0.5).into(), &[(1, A), (1, A)]),
                    ],
                },
                TransformFactor {
                    terms: vec![SuperTerm::left(r.into(), &[(0, N)]), SuperTerm::left(r.into(), &[(1, N)])],
                },
                TransformFactor {
                    terms: vec![SuperTerm::left(Complex64::new(0.0, std::f64::consts::PI), &[(1, N)])],
                },
            ],
        })
    }
}

fn mode_product(lay: &Layout, conv: &[crate::liouville::FockConvention], ops: &[(usize, LadderOp)]) -> Result<Sparse> {
    let m = lay.mode_space();
    let mut p = sparse_identity(m);
    for &(k, op) in ops {
        let n = *lay
            .mode_dims
            .get(k)
            .ok_or_else(|| Error::InvalidParams(format!("transform refers to mode {k}")))?;
        let l = ladder(n, conv[k])?;
        let single = match op {
            LadderOp::A => l.a,
            LadderOp::Adag => l.a_dag,
            LadderOp::N => &l.a_dag * &l.a,
        };
        p = &p * &lay.mode_local(k, &single);
    }
    Ok(p)
}

fn factor_generator(lay: &Layout, conv: &[crate::liouville::FockConvention], f: &TransformFactor) -> Result<Sparse> {
    let n = lay.shape().flat();
    let mut x = sparse_zeros(n, n);
    for t in &f.terms {
        let mut term = sparse_identity(n);
        if !t.left.is_empty() {
            term = lay.left(&lay.mode_op(&mode_product(lay, conv, &t.left)?))?;
        }
        if !t.right.is_empty() {
            if !lay.two_sided {
                return Err(Error::InvalidParams("right-acting transform on a one-sided frame".into()));
            }
            term = &term * &lay.right(&lay.mode_op(&mode_product(lay, conv, &t.right)?))?;
        }
        x = &x + &scale(&term, t.coeff);
    }
    Ok(x)
}

fn is_zero(m: &Sparse) -> bool {
    m.values().iter().all(|v| *v == Complex64::ZERO)
}

/// `(exp(x), exp(-x))`, exact for diagonal or nilpotent `x`.
fn exp_pair(x: &Sparse, max_terms: usize) -> (Sparse, Sparse) {
    let n = x.nrows();
    if x.triplet_iter().all(|(i, j, _)| i == j) {
        let mut d = vec![Complex64::ZERO; n];
        for (i, _, v) in x.triplet_iter() {
            d[i] += *v;
        }
        let diag = |sign: f64| {
            let m = CMat::from_diagonal(&DVector::from_iterator(n, d.iter().map(|z| (sign * z).exp())));
            to_sparse(&m)
        };
        return (diag(1.0), diag(-1.0));
    }
    let series = |x: &Sparse| -> Option<Sparse> {
        let mut sum = sparse_identity(n);
        let mut term = sparse_identity(n);
        for k in 1..=max_terms {
            term = scale(&(&term * x), (1.0 / k as f64).into());
            if is_zero(&term) {
                return Some(sum);
            }
            sum = &sum + &term;
        }
        None
    };
    let neg = scale(x, (-1.0).into());
    match (series(x), series(&neg)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let d = to_dense(x);
            (to_sparse(&d.clone().exp()), to_sparse(&(-d).exp()))
        }
    }
}

fn norm1(m: &Sparse) -> f64 {
    let mut col = vec![0.0; m.ncols()];
    for (_, j, v) in m.triplet_iter() {
        col[j] += v.norm();
    }
    col.into_iter().fold(0.0, f64::max)
}

fn transform_matrices(lay: &Layout, conv: &[crate::liouville::FockConvention], spec: &TransformSpec) -> Result<(Sparse, Sparse)> {
    let n = lay.shape().flat();
    let max_terms = 4 * lay.mode_dims.iter().sum::<usize>() + 8;
    let mut b = sparse_identity(n);
    let mut b_inv = sparse_identity(n);
    for f in &spec.factors {
        let (e, e_inv) = exp_pair(&factor_generator(lay, conv, f)?, max_terms);
        b = &b * &e;
        b_inv = &e_inv * &b_inv;
    }
    Ok((b, b_inv))
}

/// `L' = B L B^{-1}` with injection `B Xi` and extraction `E B^{-1}`.
pub fn bogoliubov_transform(gen: &ExtendedGenerator, spec: &TransformSpec) -> Result<ExtendedGenerator> {
    let mut out = gen.clone();
    if spec.factors.is_empty() {
        return Ok(out);
    }
    let (b, b_inv) = transform_matrices(&gen.layout, &gen.conventions, spec)?;
    let cond = norm1(&b) * norm1(&b_inv);
    if !(cond <= SINGULAR_COND) {
        return Err(Error::SingularTransform(cond));
    }
    out.rate = &(&b * &gen.rate) * &b_inv;
    let mode_lay = Layout { dim_s: 1, ..gen.layout.clone() };
    let (bm, bm_inv) = transform_matrices(&mode_lay, &gen.conventions, spec)?;
    let (m, mc) = (gen.xi.nrows(), gen.xi.ncols());
    let xi = to_dense(&bm) * DVector::from_column_slice(gen.xi.as_slice());
    let ext = to_dense(&bm_inv).transpose() * DVector::from_column_slice(gen.ext.as_slice());
    out.xi = CMat::from_column_slice(m, mc, xi.as_slice());
    out.ext = CMat::from_column_slice(m, mc, ext.as_slice());
    out.injection = InjectionRule::Transformed;
    out.extraction = ExtractionRule::Transformed;
    out.frame_tag = format!("{} -> {}", gen.frame_tag, spec.name);
    Ok(out)
}

/// Max entrywise difference of the rate matrices restricted to indices away from
/// the top `margin` Fock levels.
pub fn interior_block_deviation(a: &ExtendedGenerator, b: &ExtendedGenerator, margin: usize) -> Result<f64> {
    if a.layout != b.layout {
        return Err(Error::DimensionMismatch("generators have different layouts".into()));
    }
    let mask = a.boundary_mask(margin);
    let diff = &a.rate - &b.rate;
    Ok(diff
        .triplet_iter()
        .filter(|(i, j, _)| !mask[*i] && !mask[*j])
        .map(|(_, _, v)| v.norm())
        .fold(0.0, f64::max))
}

/// Eigenvalues of the rate matrix restricted to interior indices.
pub fn interior_spectrum(gen: &ExtendedGenerator, margin: usize) -> Vec<Complex64> {
    let mask = gen.boundary_mask(margin);
    let idx: Vec<usize> = (0..mask.len()).filter(|i| !mask[*i]).collect();
    let mut pos = vec![usize::MAX; mask.len()];
    for (k, &i) in idx.iter().enumerate() {
        pos[i] = k;
    }
    let mut sub = CMat::zeros(idx.len(), idx.len());
    for (i, j, v) in gen.rate.triplet_iter() {
        if pos[i] != usize::MAX && pos[j] != usize::MAX {
            sub[(pos[i], pos[j])] += *v;
        }
    }
    nalgebra::Schur::try_new(sub, 1e-14, 10_000)
        .and_then(|s| s.eigenvalues())
        .map(|v| v.iter().cloned().collect())
        .unwrap_or_default()
}
