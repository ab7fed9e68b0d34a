//! Brownian-oscillator bath correlators.
//!
//! A correlator is a sum of damped pairs
//! `C(t >= 0) = c1 e^{-(gamma0 + i zeta) t} + c2 e^{-(gamma0 - i zeta) t}`,
//! extended to negative times by `C(-t) = conj(C(t))`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Reduced single-oscillator bath parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrownianParams {
    pub c0: f64,
    pub omega0: f64,
    pub gamma0: f64,
    /// Inverse temperature; `f64::INFINITY` means zero temperature.
    pub beta: f64,
}

impl BrownianParams {
    pub fn new(c0: f64, omega0: f64, gamma0: f64, beta: f64) -> Result<Self> {
        let p = Self { c0, omega0, gamma0, beta };
        p.validate()?;
        Ok(p)
    }

    /// Parameters specified through the effective frequency `zeta` instead of `omega0`.
    pub fn from_zeta(c0: f64, zeta: f64, gamma0: f64, beta: f64) -> Result<Self> {
        Self::new(c0, (zeta * zeta + gamma0 * gamma0).sqrt(), gamma0, beta)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c0 >= 0.0
            && self.omega0 > 0.0
            && self.gamma0 >= 0.0
            && self.beta > 0.0
            && self.c0.is_finite()
            && self.omega0.is_finite()
            && self.gamma0.is_finite()
            && !self.beta.is_nan();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "need c0 >= 0, omega0 > 0, gamma0 >= 0, beta > 0; got {self:?}"
            )))
        }
    }

    pub fn is_underdamped(&self) -> bool {
        self.omega0 > self.gamma0
    }

    /// `sqrt(omega0^2 - gamma0^2)`, only for underdamped parameters.
    pub fn zeta(&self) -> Option<f64> {
        self.is_underdamped()
            .then(|| ((self.omega0 - self.gamma0) * (self.omega0 + self.gamma0)).sqrt())
    }
}

/// Bose occupation `1/(e^{beta w} - 1)`, zero at infinite `beta`.
pub fn bose(beta: f64, omega: f64) -> f64 {
    if beta.is_infinite() {
        0.0
    } else {
        1.0 / (beta * omega).exp_m1()
    }
}

fn coth(z: Complex64) -> Complex64 {
    if z.re < 0.0 {
        return -coth(-z);
    }
    let e = (-2.0 * z).exp();
    (1.0 + e) / (1.0 - e)
}

fn cot(x: f64) -> f64 {
    x.cos() / x.sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Classical,
    /// Classical correlator with `coth x -> 1/x`, valid for `beta zeta << 1`.
    ClassicalHighTemperature,
    QuasiThermal,
    Debye,
    /// Exact classical correlator for `omega0 < gamma0`: two purely decaying pairs,
    /// slow rate first.
    OverdampedBrownian,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampedPair {
    pub c1: Complex64,
    pub c2: Complex64,
    pub zeta: f64,
    pub gamma0: f64,
}

impl DampedPair {
    /// Complex rate of the `c1` term; the `c2` term decays with its conjugate.
    pub fn z1(&self) -> Complex64 {
        Complex64::new(self.gamma0, self.zeta)
    }

    pub fn z2(&self) -> Complex64 {
        Complex64::new(self.gamma0, -self.zeta)
    }

    fn forward(&self, t: f64) -> Complex64 {
        self.c1 * (-self.z1() * t).exp() + self.c2 * (-self.z2() * t).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub params: BrownianParams,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorModel {
    pub pairs: Vec<DampedPair>,
    pub provenance: Option<Provenance>,
}

impl CorrelatorModel {
    /// Model from explicit pairs; checks decay rates and `Re C(0) >= 0`.
    pub fn from_pairs(pairs: Vec<DampedPair>) -> Result<Self> {
        let m = Self { pairs, provenance: None };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.pairs {
            if !(p.gamma0 >= 0.0) || !p.zeta.is_finite() || !p.c1.is_finite() || !p.c2.is_finite() {
                return Err(Error::InvalidParams(format!("invalid pair {p:?}")));
            }
        }
        if self.eval(0.0).re < -1e-12 {
            return Err(Error::InvalidParams("Re C(0) < 0".into()));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        eval_correlator(self, t)
    }

    pub fn regime(&self) -> Regime {
        self.provenance.as_ref().map_or(Regime::Custom, |p| p.regime)
    }

    pub fn is_zero(&self) -> bool {
        self.pairs.iter().all(|p| p.c1 == Complex64::ZERO && p.c2 == Complex64::ZERO)
    }

    /// Slowest decay rate, used to size residual-check grids.
    pub fn slowest_rate(&self) -> f64 {
        self.pairs.iter().map(|p| p.gamma0).fold(f64::INFINITY, f64::min)
    }
}

pub fn spectral_density(params: &BrownianParams, omega: f64) -> f64 {
    let BrownianParams { c0, omega0, gamma0, .. } = *params;
    let d = omega * omega - omega0 * omega0;
    let den = d * d + 4.0 * gamma0 * gamma0 * omega * omega;
    if den == 0.0 {
        return 0.0;
    }
    4.0 * c0 * c0 * gamma0 * omega / den
}

/// Debye closed form without the regime threshold.
pub fn debye_pair(params: &BrownianParams) -> Result<DampedPair> {
    let BrownianParams { c0, omega0, gamma0, beta } = *params;
    if gamma0 <= 0.0 {
        return Err(Error::RegimeViolation("Debye form needs gamma0 > 0".into()));
    }
    if beta.is_infinite() {
        return Err(Error::RegimeViolation(
            "Debye form has no zero-temperature limit (cot diverges)".into(),
        ));
    }
    let wd = omega0 * omega0 / (2.0 * gamma0);
    let pref = c0 * c0 / (4.0 * gamma0);
    Ok(DampedPair {
        c1: pref * Complex64::new(cot(beta * wd / 2.0), -1.0),
        c2: Complex64::ZERO,
        zeta: 0.0,
        gamma0: wd,
    })
}

fn high_temperature_bound(params: &BrownianParams, zeta: f64) -> Result<()> {
    if params.beta * zeta > 0.2 {
        return Err(Error::RegimeViolation(format!(
            "high-temperature form needs beta*zeta <= 0.2, got {}",
            params.beta * zeta
        )));
    }
    Ok(())
}

pub fn model_from_regime(params: &BrownianParams, regime: Regime) -> Result<CorrelatorModel> {
    params.validate()?;
    let BrownianParams { c0, omega0, gamma0, beta } = *params;
    let underdamped = || {
        params.zeta().ok_or(Error::OverdampedUnsupported { omega0, gamma0 })
    };
    let pair = match regime {
        Regime::Classical => {
            let zeta = underdamped()?;
            let pref = c0 * c0 / (4.0 * zeta);
            let (ct1, ct2) = if beta.is_infinite() {
                (Complex64::ONE, Complex64::ONE)
            } else {
                (
                    coth(beta * Complex64::new(zeta, -gamma0) / 2.0),
                    coth(beta * Complex64::new(zeta, gamma0) / 2.0),
                )
            };
            DampedPair { c1: pref * (ct1 + 1.0), c2: pref * (ct2 - 1.0), zeta, gamma0 }
        }
        Regime::ClassicalHighTemperature => {
            let zeta = underdamped()?;
            high_temperature_bound(params, zeta)?;
            let a = c0 * c0 / (beta * omega0 * omega0);
            let b = c0 * c0 / (2.0 * omega0);
            let re = Complex64::new(a / 2.0, a * gamma0 / (2.0 * zeta));
            let im = b * omega0 / (2.0 * zeta);
            DampedPair { c1: re + im, c2: re.conj() - im, zeta, gamma0 }
        }
        Regime::QuasiThermal => {
            let zeta = underdamped()?;
            let n = bose(beta, zeta);
            let pref = c0 * c0 / (2.0 * zeta);
            DampedPair {
                c1: Complex64::from(pref * (n + 1.0)),
                c2: Complex64::from(pref * n),
                zeta,
                gamma0,
            }
        }
        Regime::Debye => {
            if gamma0 < 5.0 * omega0 {
                return Err(Error::RegimeViolation(format!(
                    "Debye form needs gamma0 >= 5 omega0, got gamma0/omega0 = {}",
                    gamma0 / omega0
                )));
            }
            debye_pair(params)?
        }
        Regime::OverdampedBrownian => return overdamped_brownian(params),
        Regime::Custom => {
            return Err(Error::InvalidParams("Custom models are built from explicit pairs".into()))
        }
    };
    Ok(CorrelatorModel {
        pairs: vec![pair],
        provenance: Some(Provenance { params: *params, regime }),
    })
}

/// Exact classical correlator for `omega0 < gamma0` as two real-rate pairs.
pub fn overdamped_brownian(params: &BrownianParams) -> Result<CorrelatorModel> {
    params.validate()?;
    let BrownianParams { c0, omega0, gamma0, beta } = *params;
    if omega0 >= gamma0 {
        return Err(Error::RegimeViolation("overdamped form needs omega0 < gamma0".into()));
    }
    if beta.is_infinite() {
        return Err(Error::RegimeViolation("overdamped form needs finite beta".into()));
    }
    let zp = ((gamma0 - omega0) * (gamma0 + omega0)).sqrt();
    let pref = c0 * c0 / (4.0 * zp);
    let slow = gamma0 - zp;
    let fast = gamma0 + zp;
    let pairs = vec![
        DampedPair {
            c1: pref * Complex64::new(cot(beta * slow / 2.0), -1.0),
            c2: Complex64::ZERO,
            zeta: 0.0,
            gamma0: slow,
        },
        DampedPair {
            c1: pref * Complex64::new(-cot(beta * fast / 2.0), 1.0),
            c2: Complex64::ZERO,
            zeta: 0.0,
            gamma0: fast,
        },
    ];
    Ok(CorrelatorModel {
        pairs,
        provenance: Some(Provenance { params: *params, regime: Regime::OverdampedBrownian }),
    })
}

pub fn eval_correlator(model: &CorrelatorModel, t: f64) -> Complex64 {
    if t < 0.0 {
        return eval_correlator(model, -t).conj();
    }
    model.pairs.iter().map(|p| p.forward(t)).sum()
}

/// Fourier transform `int C(t) e^{i w t} dt` of the multi-exponential model.
pub fn power_spectrum(model: &CorrelatorModel, omega: f64) -> f64 {
    let iw = Complex64::new(0.0, omega);
    model
        .pairs
        .iter()
        .map(|p| 2.0 * ((p.c1 / (p.z1() - iw)).re + (p.c2 / (p.z2() - iw)).re))
        .sum()
}

/// `J(w)/(1 - e^{-beta w})`, with its finite limit at `w = 0`.
pub fn fdt_spectrum(params: &BrownianParams, omega: f64) -> f64 {
    let BrownianParams { c0, omega0, gamma0, beta } = *params;
    if omega == 0.0 {
        return if beta.is_infinite() { 0.0 } else { 4.0 * c0 * c0 * gamma0 / (omega0.powi(4) * beta) };
    }
    spectral_density(params, omega) / -(-beta * omega).exp_m1()
}

#[derive(Debug, Clone, Serialize)]
pub struct FdtReport {
    pub omega: Vec<f64>,
    pub model_spectrum: Vec<f64>,
    pub fdt_spectrum: Vec<f64>,
    pub abs_residual: Vec<f64>,
    pub rel_residual: Vec<f64>,
    pub max_abs: f64,
    pub max_rel: f64,
}

pub fn fdt_residual(
    model: &CorrelatorModel,
    params: &BrownianParams,
    omega_grid: &[f64],
) -> Result<FdtReport> {
    let prov = model.provenance.as_ref().ok_or(Error::MissingProvenance)?;
    if prov.params != *params {
        return Err(Error::InvalidParams("params differ from model provenance".into()));
    }
    let model_spectrum: Vec<f64> = omega_grid.iter().map(|&w| power_spectrum(model, w)).collect();
    let target: Vec<f64> = omega_grid.iter().map(|&w| fdt_spectrum(params, w)).collect();
    let abs_residual: Vec<f64> =
        model_spectrum.iter().zip(&target).map(|(a, b)| (a - b).abs()).collect();
    let rel_residual: Vec<f64> = abs_residual
        .iter()
        .zip(&target)
        .map(|(r, b)| if *b == 0.0 { *r } else { r / b.abs() })
        .collect();
    Ok(FdtReport {
        omega: omega_grid.to_vec(),
        model_spectrum,
        fdt_spectrum: target,
        max_abs: abs_residual.iter().cloned().fold(0.0, f64::max),
        max_rel: rel_residual.iter().cloned().fold(0.0, f64::max),
        abs_residual,
        rel_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisTag {
    ExpDiagonal,
    PhaseSpace,
    ClassicalQP,
}

/// `Re C(t) = kappa^† e^{-i E t} eta`, `Im C(t) = kappa^† e^{-i E t} eta'` for `t >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiDecomposition {
    pub kappa: DVector<Complex64>,
    pub e: DMatrix<Complex64>,
    pub eta: DVector<Complex64>,
    pub eta_prime: DVector<Complex64>,
    pub basis_tag: BasisTag,
}

impl RiDecomposition {
    pub fn new(
        kappa: DVector<Complex64>,
        e: DMatrix<Complex64>,
        eta: DVector<Complex64>,
        eta_prime: DVector<Complex64>,
        basis_tag: BasisTag,
    ) -> Result<Self> {
        let k = kappa.len();
        if e.shape() != (k, k) || eta.len() != k || eta_prime.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "kappa has length {k}, E is {:?}, eta {}, eta' {}",
                e.shape(),
                eta.len(),
                eta_prime.len()
            )));
        }
        let d = Self { kappa, e, eta, eta_prime, basis_tag };
        if let Some(ev) = d.propagator_eigenvalues() {
            if ev.iter().any(|z| z.re > 1e-12) {
                return Err(Error::InvalidParams("mode propagator -iE has growing eigenvalues".into()));
            }
        }
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.kappa.len()
    }

    /// Eigenvalues of `-iE`.
    pub fn propagator_eigenvalues(&self) -> Option<Vec<Complex64>> {
        let m = self.e.map(|x| -I * x);
        nalgebra::Schur::try_new(m, 1e-15, 10_000)
            .and_then(|s| s.eigenvalues())
            .map(|v| v.iter().cloned().collect())
    }

    /// `(Re C(t), Im C(t))` for `t >= 0`.
    pub fn reconstruct(&self, t: f64) -> (Complex64, Complex64) {
        let prop = self.e.map(|x| -I * x * t).exp();
        let row = self.kappa.adjoint() * prop;
        ((&row * &self.eta)[0], (&row * &self.eta_prime)[0])
    }

    /// Max over the grid of `|Re C - recon|` and `|Im C - recon|`.
    pub fn reconstruction_residual(&self, model: &CorrelatorModel, t_grid: &[f64]) -> f64 {
        t_grid
            .iter()
            .map(|&t| {
                let c = model.eval(t);
                let (re, im) = self.reconstruct(t);
                (re - c.re).norm().max((im - c.im).norm())
            })
            .fold(0.0, f64::max)
    }
}

pub fn ri_decompose(model: &CorrelatorModel, basis: BasisTag) -> Result<RiDecomposition> {
    let [p] = model.pairs.as_slice() else {
        return Err(Error::BasisUnsupported(format!(
            "{basis:?} needs a single-pair model, got {} pairs",
            model.pairs.len()
        )));
    };
    let (c1, c2, zeta, g) = (p.c1, p.c2, p.zeta, p.gamma0);
    let v = |a: Complex64, b: Complex64| DVector::from_vec(vec![a, b]);
    let m = |a, b, c, d| DMatrix::from_row_slice(2, 2, &[a, b, c, d]);
    let zero = Complex64::ZERO;
    let one = Complex64::ONE;
    match basis {
        BasisTag::ExpDiagonal => RiDecomposition::new(
            v(one, one),
            m(Complex64::new(zeta, -g), zero, zero, Complex64::new(-zeta, -g)),
            v((c1 + c2.conj()) / 2.0, (c1.conj() + c2) / 2.0),
            v((c1 - c2.conj()) / (2.0 * I), (c2 - c1.conj()) / (2.0 * I)),
            basis,
        ),
        BasisTag::PhaseSpace => {
            let s = c1 + c2;
            let d = c1 - c2;
            RiDecomposition::new(
                v(one, zero),
                m(Complex64::new(0.0, -g), zeta.into(), zeta.into(), Complex64::new(0.0, -g)),
                v(s.re.into(), I * d.im),
                v(s.im.into(), -I * d.re),
                basis,
            )
        }
        BasisTag::ClassicalQP => {
            let prov = model.provenance.as_ref().ok_or(Error::MissingProvenance)?;
            if prov.regime != Regime::ClassicalHighTemperature {
                return Err(Error::RegimeViolation(format!(
                    "ClassicalQP needs the high-temperature classical correlator, got {:?}",
                    prov.regime
                )));
            }
            let BrownianParams { c0, omega0, gamma0, beta } = prov.params;
            high_temperature_bound(&prov.params, zeta)?;
            let w = Complex64::from(omega0);
            RiDecomposition::new(
                v(one, zero),
                m(zero, -I * w, I * w, -I * 2.0 * gamma0),
                v((c0 * c0 / (beta * omega0 * omega0)).into(), zero),
                v(zero, (c0 * c0 / (2.0 * omega0)).into()),
                basis,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    /// Independent reference: direct double-precision sum of the two exponentials in
    /// cos/sin form.
    fn correlator_by_trig(p: &DampedPair, t: f64) -> Complex64 {
        let (c, s) = ((p.zeta * t).cos(), (p.zeta * t).sin());
        let decay = (-p.gamma0 * t).exp();
        decay * (p.c1 * Complex64::new(c, -s) + p.c2 * Complex64::new(c, s))
    }

    #[test]
    fn spectral_density_examples() {
        let p = BrownianParams::new(1.0, 1.0, 0.5, 1.0).unwrap();
        assert!((spectral_density(&p, 1.0) - 2.0).abs() < 1e-15);
        assert_eq!(spectral_density(&p, 0.0), 0.0);
        assert!((spectral_density(&p, -1.0) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn quasi_thermal_coefficients() {
        let p = BrownianParams::from_zeta(1.0, 1.0, 0.1, 1.0).unwrap();
        let m = model_from_regime(&p, Regime::QuasiThermal).unwrap();
        let n = 1.0 / (std::f64::consts::E - 1.0);
        let q = m.pairs[0];
        assert!((q.zeta - 1.0).abs() < 1e-14);
        assert!(close(q.c1, (0.5 * (1.0 + n)).into(), 1e-14));
        assert!(close(q.c2, (0.5 * n).into(), 1e-14));
        assert!((q.c1.re - 0.79099).abs() < 1e-5 && (q.c2.re - 0.29099).abs() < 1e-5);
    }

    #[test]
    fn quasi_thermal_zero_temperature() {
        let p = BrownianParams::from_zeta(1.0, 1.0, 0.1, f64::INFINITY).unwrap();
        let m = model_from_regime(&p, Regime::QuasiThermal).unwrap();
        assert_eq!(m.pairs[0].c2, Complex64::ZERO);
    }

    #[test]
    fn quasi_thermal_equal_time_value() {
        let p = BrownianParams::from_zeta(1.0, 1.0, 0.0, 1.0).unwrap();
        let m = model_from_regime(&p, Regime::QuasiThermal).unwrap();
        let n = 1.0 / (std::f64::consts::E - 1.0);
        assert!(close(m.eval(0.0), (0.5 * (2.0 * n + 1.0)).into(), 1e-14));
        assert!((m.eval(0.0).re - 1.08198).abs() < 1e-5);
    }

    #[test]
    fn debye_closed_form() {
        let p = BrownianParams::new(2.0, 2f64.sqrt(), 1.0, 2.0).unwrap();
        let d = debye_pair(&p).unwrap();
        assert!((d.gamma0 - 1.0).abs() < 1e-14);
        assert_eq!(d.zeta, 0.0);
        assert!(close(d.c1, Complex64::new(1f64.tan().recip(), -1.0), 1e-14));
        assert!((d.c1.re - 0.64209).abs() < 1e-5);
        let m = CorrelatorModel::from_pairs(vec![d]).unwrap();
        let expect = Complex64::new(0.64209, -1.0) * (-1f64).exp();
        assert!(close(m.eval(1.0), expect, 1e-5));
        // gamma0/omega0 ~ 0.7 sits outside the Debye validity threshold
        assert!(matches!(model_from_regime(&p, Regime::Debye), Err(Error::RegimeViolation(_))));
        let ok = BrownianParams::new(2.0, 0.2, 1.0, 2.0).unwrap();
        assert_eq!(model_from_regime(&ok, Regime::Debye).unwrap().pairs.len(), 1);
    }

    #[test]
    fn overdamped_rejected_for_underdamped_regimes() {
        let p = BrownianParams::new(1.0, 1.0, 2.0, 1.0).unwrap();
        for r in [Regime::Classical, Regime::QuasiThermal] {
            assert!(matches!(model_from_regime(&p, r), Err(Error::OverdampedUnsupported { .. })));
        }
    }

    #[test]
    fn classical_matches_direct_matsubara_free_form() {
        // Independent route: Re C from the coth of the real/imaginary parts written out.
        let p = BrownianParams::new(0.7, 1.3, 0.2, 0.8).unwrap();
        let m = model_from_regime(&p, Regime::Classical).unwrap();
        let zeta = p.zeta().unwrap();
        let x = p.beta * zeta / 2.0;
        let y = p.beta * p.gamma0 / 2.0;
        // coth(x - iy) = (sinh 2x + i sin 2y) / (cosh 2x - cos 2y)
        let den = (2.0 * x).cosh() - (2.0 * y).cos();
        let ct = Complex64::new((2.0 * x).sinh() / den, (2.0 * y).sin() / den);
        let pref = p.c0 * p.c0 / (4.0 * zeta);
        assert!(close(m.pairs[0].c1, pref * (ct + 1.0), 1e-13));
        assert!(close(m.pairs[0].c2, pref * (ct.conj() - 1.0), 1e-13));
        // the imaginary part of C is temperature independent: -c0^2/(2 zeta) e^{-g t} sin(zeta t)
        for &t in &[0.3, 1.1, 2.9] {
            let im = -p.c0 * p.c0 / (2.0 * zeta) * (-p.gamma0 * t).exp() * (zeta * t).sin();
            assert!((m.eval(t).im - im).abs() < 1e-13);
        }
    }

    #[test]
    fn quasi_thermal_converges_to_classical() {
        for &r in &[1e-2, 1e-3, 1e-4] {
            let p = BrownianParams::from_zeta(1.0, 1.0, r, 0.7).unwrap();
            let c = model_from_regime(&p, Regime::Classical).unwrap().pairs[0];
            let q = model_from_regime(&p, Regime::QuasiThermal).unwrap().pairs[0];
            let dev = ((c.c1 - q.c1).norm() / q.c1.norm()).max((c.c2 - q.c2).norm() / q.c2.norm());
            assert!(dev < 10.0 * r, "gamma/zeta = {r}: dev {dev}");
        }
    }

    #[test]
    fn high_temperature_form_is_limit_of_classical() {
        let p = BrownianParams::new(1.0, 1.0, 0.2, 0.01).unwrap();
        let c = model_from_regime(&p, Regime::Classical).unwrap();
        let h = model_from_regime(&p, Regime::ClassicalHighTemperature).unwrap();
        for &t in &[0.0, 0.5, 2.0] {
            let rel = (c.eval(t) - h.eval(t)).norm() / c.eval(0.0).norm();
            assert!(rel < 1e-4, "{rel}");
        }
        let cold = BrownianParams::new(1.0, 1.0, 0.2, 1.0).unwrap();
        assert!(model_from_regime(&cold, Regime::ClassicalHighTemperature).is_err());
    }

    #[test]
    fn overdamped_continuation_properties() {
        let p = BrownianParams::new(0.1, 1.0, 10.0, 1.0).unwrap();
        let m = overdamped_brownian(&p).unwrap();
        // Im C(0) = 0 and dIm C/dt(0) = -c0^2/2 for the classical family
        assert!(m.eval(0.0).im.abs() < 1e-15);
        let slope = |m: &CorrelatorModel| -> f64 {
            m.pairs.iter().map(|q| -(q.c1 * q.z1() + q.c2 * q.z2()).im).sum()
        };
        assert!((slope(&m) + p.c0 * p.c0 / 2.0).abs() < 1e-15);
        let h = 1e-4;
        let fd = (m.eval(h).im - m.eval(0.0).im) / h;
        assert!((fd - slope(&m)).abs() < 1e-4);
        // underdamped classical has the same two properties
        let u = model_from_regime(&BrownianParams::new(0.1, 1.0, 0.5, 1.0).unwrap(), Regime::Classical)
            .unwrap();
        assert!((slope(&u) + 0.005).abs() < 1e-15);
    }

    #[test]
    fn power_spectrum_matches_fdt_at_high_temperature() {
        let p = BrownianParams::from_zeta(1.0, 1.0, 0.01, 0.1).unwrap();
        let m = model_from_regime(&p, Regime::QuasiThermal).unwrap();
        let zeta = m.pairs[0].zeta;
        // near-peak window: within half the linewidth of each resonance
        let grid: Vec<f64> = (-10..=10)
            .flat_map(|k| {
                let d = 0.0005 * k as f64;
                [zeta + d, -zeta + d]
            })
            .collect();
        let r = fdt_residual(&m, &p, &grid).unwrap();
        assert!(r.max_rel < 1e-2, "{}", r.max_rel);
        assert!(power_spectrum(&m, -1e9).abs() < 1e-12);
    }

    #[test]
    fn power_spectrum_against_quadrature() {
        // Independent route: trapezoid Fourier transform of C(t) over a long window.
        let m = CorrelatorModel::from_pairs(vec![DampedPair {
            c1: Complex64::new(0.6, -0.2),
            c2: Complex64::new(0.1, 0.2),
            zeta: 1.2,
            gamma0: 0.7,
        }])
        .unwrap();
        let w = 0.9;
        let (n, tmax) = (400_000, 60.0);
        let h = 2.0 * tmax / n as f64;
        let mut acc = Complex64::ZERO;
        for k in 0..=n {
            let t = -tmax + h * k as f64;
            let wgt = if k == 0 || k == n { 0.5 } else { 1.0 };
            acc += wgt * m.eval(t) * Complex64::new(0.0, w * t).exp();
        }
        acc *= h;
        assert!((acc.re - power_spectrum(&m, w)).abs() < 1e-6);
        assert!(acc.im.abs() < 1e-6);
    }

    #[test]
    fn fdt_needs_provenance() {
        let m = CorrelatorModel::from_pairs(vec![]).unwrap();
        let p = BrownianParams::new(1.0, 1.0, 0.1, 1.0).unwrap();
        assert_eq!(fdt_residual(&m, &p, &[0.0]).unwrap_err(), Error::MissingProvenance);
    }

    #[test]
    fn debye_spectrum_is_zero_centred_lorentzian() {
        let p = BrownianParams::new(1.0, 0.2, 2.0, 1.0).unwrap();
        let m = model_from_regime(&p, Regime::Debye).unwrap();
        let d = m.pairs[0];
        for &w in &[-1.0, 0.0, 0.3] {
            let expect = 2.0 * (d.c1.re * d.gamma0 - d.c1.im * w) / (w * w + d.gamma0 * d.gamma0);
            assert!((power_spectrum(&m, w) - expect).abs() < 1e-13);
        }
        let r = fdt_residual(&m, &p, &[-1.0, 0.0, 1.0]).unwrap();
        assert!(r.max_abs.is_finite());
    }

    #[test]
    fn decompositions_reconstruct() {
        let grid: Vec<f64> = (0..60).map(|k| 0.1 * k as f64).collect();
        let q = model_from_regime(&BrownianParams::from_zeta(0.5, 1.0, 0.2, 1.0).unwrap(), Regime::QuasiThermal)
            .unwrap();
        for b in [BasisTag::ExpDiagonal, BasisTag::PhaseSpace] {
            let d = ri_decompose(&q, b).unwrap();
            assert!(d.reconstruction_residual(&q, &grid) < 1e-10, "{b:?}");
        }
        let hp = BrownianParams::new(1.0, 1.0, 0.2, 0.1).unwrap();
        let h = model_from_regime(&hp, Regime::ClassicalHighTemperature).unwrap();
        let d = ri_decompose(&h, BasisTag::ClassicalQP).unwrap();
        assert!(d.reconstruction_residual(&h, &grid) < 1e-10);
        let c = model_from_regime(&hp, Regime::Classical).unwrap();
        assert!(matches!(ri_decompose(&c, BasisTag::ClassicalQP), Err(Error::RegimeViolation(_))));
    }

    #[test]
    fn classical_qp_listed_vectors() {
        let hp = BrownianParams::new(1.0, 1.0, 0.2, 0.1).unwrap();
        let h = model_from_regime(&hp, Regime::ClassicalHighTemperature).unwrap();
        let d = ri_decompose(&h, BasisTag::ClassicalQP).unwrap();
        assert_eq!(d.kappa[0], Complex64::ONE);
        assert_eq!(d.kappa[1], Complex64::ZERO);
        assert!(close(d.eta[0], 10.0.into(), 1e-14) && d.eta[1] == Complex64::ZERO);
        assert!(d.eta_prime[0] == Complex64::ZERO && close(d.eta_prime[1], 0.5.into(), 1e-14));
        let ev = d.propagator_eigenvalues().unwrap();
        assert!(ev.iter().all(|z| z.re < 0.0));
    }

    #[test]
    fn exp_diagonal_symmetric_pattern() {
        let m = CorrelatorModel::from_pairs(vec![DampedPair {
            c1: 0.4.into(),
            c2: 0.4.into(),
            zeta: 1.0,
            gamma0: 0.1,
        }])
        .unwrap();
        let d = ri_decompose(&m, BasisTag::ExpDiagonal).unwrap();
        assert_eq!(d.eta_prime[0], Complex64::ZERO);
        assert_eq!(d.eta_prime[1], Complex64::ZERO);
    }

    #[test]
    fn multi_pair_decomposition_rejected() {
        let p = BrownianParams::new(0.1, 1.0, 10.0, 1.0).unwrap();
        let m = overdamped_brownian(&p).unwrap();
        assert!(matches!(ri_decompose(&m, BasisTag::ExpDiagonal), Err(Error::BasisUnsupported(_))));
    }

    fn pair_strategy() -> impl Strategy<Value = DampedPair> {
        (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, 0.0..3.0f64, 0.0..2.0f64).prop_map(
            |(a, b, c, d, zeta, gamma0)| DampedPair {
                c1: Complex64::new(a, b),
                c2: Complex64::new(c, d),
                zeta,
                gamma0,
            },
        )
    }

    proptest! {
        #[test]
        fn hermitian_reflection(p in pair_strategy(), t in 0.0..8.0f64) {
            let m = CorrelatorModel { pairs: vec![p], provenance: None };
            prop_assert_eq!(m.eval(-t), m.eval(t).conj());
            prop_assert!(close(m.eval(t), correlator_by_trig(&p, t), 1e-12));
        }

        #[test]
        fn regime_models_have_positive_equal_time_value(
            c0 in 0.0..2.0f64, w0 in 0.1..3.0f64, ratio in 0.0..0.95f64, beta in 0.05..10.0f64,
        ) {
            let p = BrownianParams::new(c0, w0, ratio * w0, beta).unwrap();
            for r in [Regime::Classical, Regime::QuasiThermal] {
                let m = model_from_regime(&p, r).unwrap();
                prop_assert!(m.eval(0.0).re >= 0.0);
            }
        }

        #[test]
        fn exp_diagonal_reconstructs_any_pair(p in pair_strategy()) {
            let m = CorrelatorModel { pairs: vec![p], provenance: None };
            let grid: Vec<f64> = (0..25).map(|k| 0.2 * k as f64).collect();
            for b in [BasisTag::ExpDiagonal, BasisTag::PhaseSpace] {
                let d = ri_decompose(&m, b).unwrap();
                prop_assert!(d.reconstruction_residual(&m, &grid) < 1e-10);
            }
        }

        #[test]
        fn spectral_density_is_odd(c0 in 0.0..2.0f64, w0 in 0.1..3.0f64, g in 0.0..3.0f64, w in -5.0..5.0f64) {
            let p = BrownianParams::new(c0, w0, g, 1.0).unwrap();
            prop_assert_eq!(spectral_density(&p, -w), -spectral_density(&p, w));
        }
    }
}
