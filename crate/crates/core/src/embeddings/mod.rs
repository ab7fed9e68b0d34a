//! Extended-space generators for Gaussian environments.
//!
//! Every frame stores a rate matrix `K` on the flattened extended state with
//! `dx/dt = K x`; the Liouvillian in the `dx/dt = -i L x` convention is `L = i K`.
//! A frame also carries an injection matrix `Xi` (mode part of the initial state)
//! and an extraction matrix `E` so that
//! `rho_s[s, s'] = sum_{k,l} E[k,l] X[s M + k, s' Mc + l]`.

mod builders;
mod presets;
mod transform;
mod triplet;

pub use builders::{
    build_hilbert_retarded, build_keldysh_pseudomode, build_namba_keldysh, build_pure_state,
    build_pure_state_sectors, strong_damping_reduce, strong_damping_reduce_sector, PureStateMode,
    Sector,
};
pub use presets::{build_preset, preset_ids, presets, PresetInfo};
pub use transform::{
    bogoliubov_transform, interior_block_deviation, interior_spectrum, LadderOp, SuperTerm,
    TransformFactor, TransformSpec,
};
pub use triplet::{green_advanced, green_retarded, hilbert_factorization_residual, EmbeddingTriplet};

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::correlator::BasisTag;
use crate::error::{Error, Result};
use crate::liouville::{fock_frame_rescale, CMat, FockConvention, Layout, Sparse, StateShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    KeldyshPseudomode,
    PureState,
    HilbertRetarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InjectionRule {
    TensorThermal(Vec<f64>),
    TensorVacuumDM,
    TensorVacuumKet,
    Transformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractionRule {
    PartialTrace,
    VacuumSandwich,
    LeftVacuumProject,
    Transformed,
}

/// Resolved free parameters of a frame, recorded for manifests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub delta: Option<Complex64>,
    pub lambda: Option<Complex64>,
    pub n_ref: Option<f64>,
    pub basis: Option<BasisTag>,
    pub n_f: Vec<usize>,
    pub extra: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct ExtendedGenerator {
    pub variant: Variant,
    pub layout: Layout,
    pub rate: Sparse,
    pub injection: InjectionRule,
    pub extraction: ExtractionRule,
    /// `M x Mc` mode part of the initial state.
    pub xi: CMat,
    /// `M x Mc` extraction weights.
    pub ext: CMat,
    pub conventions: Vec<FockConvention>,
    pub frame_tag: String,
    pub params: FrameParams,
    /// True when the system coupling operator or the bath coefficients vanish.
    pub decoupled: bool,
}

impl ExtendedGenerator {
    pub fn dim_s(&self) -> usize {
        self.layout.dim_s
    }

    pub fn mode_dims(&self) -> &[usize] {
        &self.layout.mode_dims
    }

    pub fn shape(&self) -> StateShape {
        self.layout.shape()
    }

    pub fn flat_dim(&self) -> usize {
        self.shape().flat()
    }

    pub fn liouvillian(&self) -> Sparse {
        crate::liouville::scale(&self.rate, Complex64::I)
    }

    pub fn inject(&self, rho_s: &CMat) -> Result<DVector<Complex64>> {
        let d = self.dim_s();
        if rho_s.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "initial state is {:?}, system dimension {d}",
                rho_s.shape()
            )));
        }
        let x = rho_s.kronecker(&self.xi);
        Ok(DVector::from_column_slice(x.as_slice()))
    }

    pub fn extract(&self, x: &[Complex64]) -> CMat {
        let d = self.dim_s();
        let sh = self.shape();
        let m = self.layout.mode_space();
        let mc = self.layout.col_mode_space();
        let mut rho = CMat::zeros(d, d);
        for sp in 0..d {
            for l in 0..mc {
                let col = sp * mc + l;
                let base = col * sh.rows;
                for k in 0..m {
                    let e = self.ext[(k, l)];
                    if e == Complex64::ZERO {
                        continue;
                    }
                    for s in 0..d {
                        rho[(s, sp)] += e * x[base + s * m + k];
                    }
                }
            }
        }
        rho
    }

    /// The functional `x -> Tr_s[O extract(x)]` as a flat vector `w` with value `w^T x`.
    pub fn observable_functional(&self, o: &CMat) -> Vec<Complex64> {
        let d = self.dim_s();
        let sh = self.shape();
        let m = self.layout.mode_space();
        let mc = self.layout.col_mode_space();
        let mut w = vec![Complex64::ZERO; sh.flat()];
        for sp in 0..d {
            for l in 0..mc {
                let base = (sp * mc + l) * sh.rows;
                for k in 0..m {
                    let e = self.ext[(k, l)];
                    for s in 0..d {
                        w[base + s * m + k] = o[(sp, s)] * e;
                    }
                }
            }
        }
        w
    }

    /// Flat indices touching the top `margin` Fock levels of any mode.
    pub fn boundary_mask(&self, margin: usize) -> Vec<bool> {
        self.layout.boundary_mask(margin)
    }

    /// Expresses the frame in the given per-mode Fock conventions. Above `n_F = 20`
    /// the normalized frame is kept internally and only the recorded conventions change.
    pub fn with_conventions(mut self, conv: &[FockConvention]) -> Result<Self> {
        if conv.len() != self.layout.mode_dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} conventions for {} modes",
                conv.len(),
                self.layout.mode_dims.len()
            )));
        }
        if self.conventions.iter().any(|c| *c != FockConvention::Normalized) {
            return Err(Error::InvalidParams("frame is already in an unnormalized convention".into()));
        }
        if self.layout.mode_dims.iter().any(|&n| n > 20) {
            self.frame_tag.push_str(" [normalized internally]");
            return Ok(self);
        }
        let w = self.layout.convention_weights(conv)?;
        self.rate = fock_frame_rescale(&self.rate, &w)?;
        let mode_layout = Layout { dim_s: 1, ..self.layout.clone() };
        let mw = mode_layout.convention_weights(conv)?;
        let (m, mc) = (self.xi.nrows(), self.xi.ncols());
        for l in 0..mc {
            for k in 0..m {
                let wk = mw[l * m + k];
                self.xi[(k, l)] *= wk;
                self.ext[(k, l)] /= wk;
            }
        }
        self.conventions = conv.to_vec();
        Ok(self)
    }
}

pub(crate) fn thermal_diag(n_f: usize, n: f64) -> Vec<f64> {
    if n == 0.0 {
        let mut p = vec![0.0; n_f];
        p[0] = 1.0;
        return p;
    }
    let q = n / (n + 1.0);
    let raw: Vec<f64> = (0..n_f).map(|k| q.powi(k as i32)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / z).collect()
}

/// Normalized thermal populations of a truncated mode.
pub fn thermal_populations(n_f: usize, n: f64) -> Result<Vec<f64>> {
    check_truncation(n_f)?;
    Ok(thermal_diag(n_f, n))
}

pub(crate) fn tensor_diag(n_f: &[usize], occupations: &[f64]) -> CMat {
    let factors: Vec<CMat> = n_f
        .iter()
        .zip(occupations)
        .map(|(&n, &occ)| {
            let p = thermal_diag(n, occ);
            CMat::from_diagonal(&DVector::from_iterator(n, p.into_iter().map(Complex64::from)))
        })
        .collect();
    crate::liouville::kron_compose(&factors)
}

pub(crate) fn vacuum_dm(m: usize) -> CMat {
    let mut v = CMat::zeros(m, m);
    v[(0, 0)] = Complex64::ONE;
    v
}

pub(crate) fn vacuum_ket(m: usize) -> CMat {
    let mut v = CMat::zeros(m, 1);
    v[(0, 0)] = Complex64::ONE;
    v
}

pub(crate) fn check_truncation(n_f: usize) -> Result<()> {
    if n_f < 2 {
        return Err(Error::TruncationTooSmall(format!("n_F = {n_f}, need at least 2")));
    }
    Ok(())
}

pub(crate) fn check_nonzero(name: &str, z: Complex64) -> Result<()> {
    if z == Complex64::ZERO || !z.is_finite() {
        return Err(Error::InvalidParams(format!("{name} must be finite and nonzero, got {z}")));
    }
    Ok(())
}
