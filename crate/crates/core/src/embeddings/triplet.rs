use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::correlator::{CorrelatorModel, DampedPair, RiDecomposition};
use crate::embeddings::Variant;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn green_retarded(p: &DampedPair, t: f64) -> Complex64 {
    if t >= 0.0 {
        -I * (-p.z1() * t).exp()
    } else {
        Complex64::ZERO
    }
}

/// `conj(G^R(-t))`.
pub fn green_advanced(p: &DampedPair, t: f64) -> Complex64 {
    if t < 0.0 {
        I * (p.z2() * t).exp()
    } else {
        Complex64::ZERO
    }
}

/// Left-right factorization `U^dag G(t) V` of the pair self-energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTriplet {
    pub variant: Variant,
    pub pair: DampedPair,
    pub delta: Complex64,
    pub lambda: Complex64,
    pub n_ref: f64,
    pub u_dagger: Matrix2<Complex64>,
    pub v: Matrix2<Complex64>,
}

impl EmbeddingTriplet {
    /// Rows of `U^dag` are `(q, c)`, its columns `(c, q)`; `V` is the reverse.
    pub fn keldysh(pair: DampedPair, delta: Complex64, lambda: Complex64, n_ref: f64) -> Self {
        let DampedPair { c1, c2, .. } = pair;
        let m = 2.0 * n_ref + 1.0;
        let u_dagger = Matrix2::new(
            delta,
            delta * m - (c1.conj() + c2) / lambda,
            Complex64::ZERO,
            (c1.conj() - c2) / lambda,
        );
        let v = Matrix2::new(
            lambda,
            Complex64::ZERO,
            (c1 + c2.conj()) / delta - lambda * m,
            (c1 - c2.conj()) / delta,
        );
        Self { variant: Variant::KeldyshPseudomode, pair, delta, lambda, n_ref, u_dagger, v }
    }

    pub fn pure_state(pair: DampedPair, delta: Complex64, lambda: Complex64) -> Self {
        let DampedPair { c1, c2, .. } = pair;
        let u_dagger = Matrix2::new(delta, (c1.conj() + c2) / lambda, Complex64::ZERO, (c2 - c1.conj()) / lambda);
        let v = Matrix2::new((c1 + c2.conj()) / delta, (c1 - c2.conj()) / delta, lambda, Complex64::ZERO);
        Self { variant: Variant::PureState, pair, delta, lambda, n_ref: 0.0, u_dagger, v }
    }

    pub fn green(&self, t: f64) -> Matrix2<Complex64> {
        let r = green_retarded(&self.pair, t);
        let a = green_advanced(&self.pair, t);
        match self.variant {
            Variant::KeldyshPseudomode => {
                let k = (2.0 * self.n_ref + 1.0) * (r - a);
                Matrix2::new(k, r, a, Complex64::ZERO)
            }
            _ => Matrix2::new(r, Complex64::ZERO, Complex64::ZERO, -a),
        }
    }

    /// Self-energy of the pair in the retarded/advanced form.
    pub fn sigma(&self, t: f64) -> Matrix2<Complex64> {
        let DampedPair { c1, c2, .. } = self.pair;
        let r = green_retarded(&self.pair, t);
        let a = green_advanced(&self.pair, t);
        Matrix2::new(
            (c1 + c2.conj()) * r - (c1.conj() + c2) * a,
            (c1 - c2.conj()) * r,
            (c1.conj() - c2) * a,
            Complex64::ZERO,
        )
    }

    pub fn factorization_residual(&self, grid: &[f64]) -> f64 {
        grid.iter()
            .map(|&t| {
                let d = self.u_dagger * self.green(t) * self.v - self.sigma(t);
                d.iter().map(|z| z.norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Symmetric grid of 50 points covering five decay times of the pair.
    pub fn residual_grid(&self) -> Vec<f64> {
        let rate = if self.pair.gamma0 > 0.0 {
            self.pair.gamma0
        } else if self.pair.zeta != 0.0 {
            self.pair.zeta.abs()
        } else {
            1.0
        };
        let span = 5.0 / rate;
        (0..50).map(|k| -span + 2.0 * span * k as f64 / 49.0).collect()
    }
}

/// Residual of `[sqrt2 kappa^dag; 0] G(t) [sqrt2 eta, i sqrt2 eta']` against the
/// time-ordered self-energy `-2i theta(t) [[Re C, i Im C], [0, 0]]`.
pub fn hilbert_factorization_residual(d: &RiDecomposition, model: &CorrelatorModel, grid: &[f64]) -> f64 {
    grid.iter()
        .filter(|t| **t >= 0.0)
        .map(|&t| {
            let (re, im) = d.reconstruct(t);
            let c = model.eval(t);
            // U^dag G V entries reduce to -2i times the reconstructed parts
            let lhs = [-2.0 * I * re, -2.0 * I * (I * im)];
            let rhs = [-2.0 * I * c.re, -2.0 * I * (I * c.im)];
            (lhs[0] - rhs[0]).norm().max((lhs[1] - rhs[1]).norm())
        })
        .fold(0.0, f64::max)
}
