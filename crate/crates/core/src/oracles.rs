//! Independent reference solutions and cross-frame comparison.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::correlator::CorrelatorModel;
use crate::error::{Error, Result};
use crate::liouville::{hermiticity_deviation, ladder, CMat, FockConvention, SystemSpec};
use crate::propagator::{validate_density_matrix, Trajectory};

/// Coefficient of `int_0^t (t - s) Re C(s) ds` in the coherence exponent for a
/// coupling with eigenvalues `+-1`. Calibrated against `single_mode_exact`.
pub const DEPHASING_PREFACTOR: f64 = 4.0;
const QUAD_TOL: f64 = 1e-12;

fn panels(model: &CorrelatorModel, a: f64, b: f64) -> usize {
    let fastest = model
        .pairs
        .iter()
        .map(|p| p.z1().norm().max(p.z2().norm()))
        .fold(1.0, f64::max);
    (((b - a) * fastest).ceil() as usize).clamp(1, 100_000)
}

/// `int_a^b f` on panels no wider than the fastest correlator time scale.
fn integrate_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize, tol: f64) -> Result<f64> {
    let h = (b - a) / n as f64;
    let mut sum = 0.0;
    let mut err = 0.0;
    for k in 0..n {
        let (lo, hi) = (a + k as f64 * h, if k + 1 == n { b } else { a + (k + 1) as f64 * h });
        let out = quadrature::integrate(&f, lo, hi, tol / n as f64);
        if !out.integral.is_finite() {
            return Err(Error::QuadratureFailure { a: lo, b: hi });
        }
        sum += out.integral;
        err += out.error_estimate;
    }
    if !(err <= tol.max(1e-14 * sum.abs()) * 10.0) {
        return Err(Error::QuadratureFailure { a, b });
    }
    Ok(sum)
}

/// `(int_0^t (t-s) Re C(s) ds, int_0^t (t-s) Im C(s) ds)`, the ordered double
/// integrals of a stationary correlator reduced to one dimension.
pub fn ordered_double_integrals(model: &CorrelatorModel, t: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParams(format!("time must be finite and >= 0, got {t}")));
    }
    if t == 0.0 || model.is_zero() {
        return Ok((0.0, 0.0));
    }
    let n = panels(model, 0.0, t);
    let re = integrate_panels(|s| (t - s) * model.eval(s).re, 0.0, t, n, QUAD_TOL)?;
    let im = integrate_panels(|s| (t - s) * model.eval(s).im, 0.0, t, n, QUAD_TOL)?;
    Ok((re, im))
}

/// `rho_ab(t) / rho_ab(0)` for `H_s` commuting with `S`, where `s_a`, `s_b` are the
/// eigenvalues of `S` on the two basis states.
pub fn dephasing_factor(model: &CorrelatorModel, s_a: f64, s_b: f64, t: f64) -> Result<Complex64> {
    let (re, im) = ordered_double_integrals(model, t)?;
    let d = s_a - s_b;
    let gamma = DEPHASING_PREFACTOR / 4.0 * d * d * re;
    let theta = DEPHASING_PREFACTOR / 4.0 * d * (s_a + s_b) * im;
    Ok((-gamma - Complex64::I * theta).exp())
}

/// Coherence `rho_01(t) / rho_01(0)` of a qubit coupled through `S = sigma_z`.
pub fn dephasing_coherence(model: &CorrelatorModel, t: f64) -> Result<Complex64> {
    dephasing_factor(model, 1.0, -1.0, t)
}

fn is_diagonal(m: &CMat) -> bool {
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)].norm() <= 1e-12 * scale))
}

/// Full reduced trajectory for diagonal `H_s` and `S`, built entrywise from
/// `dephasing_factor` and the bare phases.
pub fn dephasing_trajectory(
    sys: &SystemSpec,
    model: &CorrelatorModel,
    rho0: &CMat,
    t_grid: &[f64],
) -> Result<Trajectory> {
    validate_density_matrix(rho0)?;
    let d = sys.dim();
    if rho0.nrows() != d {
        return Err(Error::DimensionMismatch(format!("initial state is {:?}, system dimension {d}", rho0.shape())));
    }
    if !is_diagonal(&sys.hamiltonian) || !is_diagonal(&sys.coupling) {
        return Err(Error::InvalidParams("dephasing oracle needs diagonal H_s and S".into()));
    }
    let h: Vec<f64> = (0..d).map(|i| sys.hamiltonian[(i, i)].re).collect();
    let s: Vec<f64> = (0..d).map(|i| sys.coupling[(i, i)].re).collect();
    let mut reduced = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut r = rho0.clone();
        for a in 0..d {
            for b in 0..d {
                if a != b {
                    let phase = Complex64::from_polar(1.0, -(h[a] - h[b]) * t);
                    r[(a, b)] *= phase * dephasing_factor(model, s[a], s[b], t)?;
                }
            }
        }
        reduced.push(r);
    }
    Ok(Trajectory::new(t_grid.to_vec(), reduced))
}

/// Exact reduced dynamics of `H_s + g S (a + a^dag) + zeta a^dag a` with the mode
/// starting thermal at occupation `n_beta`, by dense diagonalization.
pub fn single_mode_exact(
    sys: &SystemSpec,
    zeta: f64,
    g: f64,
    n_beta: f64,
    n_f: usize,
    rho0: &CMat,
    t_grid: &[f64],
) -> Result<Trajectory> {
    validate_density_matrix(rho0)?;
    let d = sys.dim();
    if rho0.nrows() != d {
        return Err(Error::DimensionMismatch(format!("initial state is {:?}, system dimension {d}", rho0.shape())));
    }
    if !(n_beta >= 0.0) || !n_beta.is_finite() {
        return Err(Error::InvalidParams(format!("thermal occupation must be >= 0, got {n_beta}")));
    }
    let p = crate::embeddings::thermal_populations(n_f, n_beta)?;
    if p[n_f - 1] >= 1e-10 {
        return Err(Error::TruncationTooSmall(format!(
            "top Fock level of the thermal mode holds {:.2e} at n_F = {n_f}",
            p[n_f - 1]
        )));
    }
    let l = ladder(n_f, FockConvention::Normalized)?;
    let id_m = CMat::identity(n_f, n_f);
    let id_s = CMat::identity(d, d);
    let x = &l.a + &l.a_dag;
    let h = sys.hamiltonian.kronecker(&id_m)
        + sys.coupling.kronecker(&x) * Complex64::from(g)
        + id_s.kronecker(&(&l.a_dag * &l.a)) * Complex64::from(zeta);
    let eig = nalgebra::SymmetricEigen::new(h);
    let v = eig.eigenvectors;
    let vd = v.adjoint();
    let th = CMat::from_diagonal(&nalgebra::DVector::from_iterator(n_f, p.iter().map(|x| Complex64::from(*x))));
    let r0 = &vd * rho0.kronecker(&th) * &v;
    let ev = eig.eigenvalues;
    let reduced = t_grid
        .iter()
        .map(|&t| {
            let rt = CMat::from_fn(r0.nrows(), r0.ncols(), |i, j| {
                r0[(i, j)] * Complex64::from_polar(1.0, -(ev[i] - ev[j]) * t)
            });
            let full = &v * rt * &vd;
            let mut rs = CMat::zeros(d, d);
            for s in 0..d {
                for sp in 0..d {
                    rs[(s, sp)] = (0..n_f).map(|k| full[(s * n_f + k, sp * n_f + k)]).sum();
                }
            }
            rs
        })
        .collect();
    Ok(Trajectory::new(t_grid.to_vec(), reduced))
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PairDeviation {
    pub a: String,
    pub b: String,
    pub observable: String,
    pub max_abs: f64,
    /// Root-mean-square deviation over the grid points.
    pub l2: f64,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub t_grid: Vec<f64>,
    pub deviations: Vec<PairDeviation>,
    /// Observable series per trajectory name, then per observable name.
    pub series: BTreeMap<String, BTreeMap<String, Vec<Complex64>>>,
    pub metadata: BTreeMap<String, String>,
    pub threshold: Option<f64>,
}

impl ComparisonReport {
    pub fn all_pass(&self) -> Option<bool> {
        self.threshold.map(|_| self.deviations.iter().all(|d| d.pass == Some(true)))
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().map(|d| d.max_abs).fold(0.0, f64::max)
    }

    /// Recomputes every deviation from the stored series.
    pub fn recompute(&self) -> Vec<PairDeviation> {
        pair_deviations(&self.series, self.threshold)
    }
}

fn pair_deviations(
    series: &BTreeMap<String, BTreeMap<String, Vec<Complex64>>>,
    threshold: Option<f64>,
) -> Vec<PairDeviation> {
    let names: Vec<&String> = series.keys().collect();
    let mut out = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            for (obs, sa) in &series[*a] {
                let sb = &series[*b][obs];
                let diffs: Vec<f64> = sa.iter().zip(sb).map(|(x, y)| (x - y).norm()).collect();
                let max_abs = diffs.iter().cloned().fold(0.0, f64::max);
                let l2 = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len().max(1) as f64).sqrt();
                out.push(PairDeviation {
                    a: (*a).clone(),
                    b: (*b).clone(),
                    observable: obs.clone(),
                    max_abs,
                    l2,
                    pass: threshold.map(|th| max_abs <= th),
                });
            }
        }
    }
    out
}

/// Pairwise deviations of `Tr(O rho_s)` between named trajectories on a shared grid.
pub fn compare(
    trajs: &[(String, Trajectory)],
    observables: &[(String, CMat)],
    threshold: Option<f64>,
    metadata: BTreeMap<String, String>,
) -> Result<ComparisonReport> {
    let Some((first_name, first)) = trajs.first() else {
        return Err(Error::InvalidParams("nothing to compare".into()));
    };
    for (name, t) in &trajs[1..] {
        let same = t.t_grid.len() == first.t_grid.len()
            && t.t_grid.iter().zip(&first.t_grid).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0));
        if !same || t.len() != first.len() {
            return Err(Error::GridMismatch(first_name.clone(), name.clone()));
        }
    }
    let mut series = BTreeMap::new();
    for (name, t) in trajs {
        if series.contains_key(name) {
            return Err(Error::InvalidParams(format!("duplicate trajectory name {name:?}")));
        }
        let mut per = BTreeMap::new();
        for (oname, o) in observables {
            per.insert(oname.clone(), crate::propagator::observable(t, o)?);
        }
        series.insert(name.clone(), per);
    }
    Ok(ComparisonReport {
        t_grid: first.t_grid.clone(),
        deviations: pair_deviations(&series, threshold),
        series,
        metadata,
        threshold,
    })
}

/// Max Hermiticity deviation along a trajectory.
pub fn max_hermiticity_deviation(traj: &Trajectory) -> f64 {
    traj.reduced.iter().map(hermiticity_deviation).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::{bose, model_from_regime, BrownianParams, DampedPair, Regime};
    use crate::liouville::pauli;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn plus_state() -> CMat {
        CMat::from_element(2, 2, c(0.5, 0.0))
    }

    fn dephasing_sys() -> SystemSpec {
        SystemSpec::new(CMat::zeros(2, 2), pauli('z').unwrap()).unwrap()
    }

    fn quasi_thermal(c0: f64, zeta: f64, beta: f64) -> CorrelatorModel {
        model_from_regime(&BrownianParams::from_zeta(c0, zeta, 0.0, beta).unwrap(), Regime::QuasiThermal).unwrap()
    }

    #[test]
    fn trivial_coherences() {
        let zero = CorrelatorModel::from_pairs(vec![]).unwrap();
        for t in [0.0, 1.0, 7.5] {
            assert_eq!(dephasing_coherence(&zero, t).unwrap(), Complex64::ONE);
        }
        let m = quasi_thermal(1.0, 1.0, 1.0);
        assert_eq!(dephasing_coherence(&m, 0.0).unwrap(), Complex64::ONE);
        assert!(dephasing_coherence(&m, -1.0).is_err());
    }

    #[test]
    fn ordered_integrals_match_closed_form() {
        // c e^{-z s}: int_0^t (t-s) e^{-z s} ds = t/z - (1 - e^{-z t})/z^2
        let pair = DampedPair { c1: c(0.3, 0.1), c2: c(0.2, -0.05), zeta: 1.3, gamma0: 0.4 };
        let m = CorrelatorModel::from_pairs(vec![pair]).unwrap();
        let t = 6.0;
        let f = |z: Complex64| t / z - (Complex64::ONE - (-z * t).exp()) / (z * z);
        let exact = pair.c1 * f(pair.z1()) + pair.c2 * f(pair.z2());
        let (re, im) = ordered_double_integrals(&m, t).unwrap();
        assert!((re - exact.re).abs() < 1e-11);
        assert!((im - exact.im).abs() < 1e-11);
    }

    #[test]
    fn simplex_reduction_matches_raw_double_integral() {
        let m = model_from_regime(&BrownianParams::from_zeta(0.5, 1.0, 0.2, 1.0).unwrap(), Regime::Classical).unwrap();
        let t = 4.0;
        let inner = |t1: f64| quadrature::integrate(|t2: f64| m.eval(t1 - t2).re, 0.0, t1, 1e-13).integral;
        let raw: f64 = (0..8)
            .map(|k| {
                let (a, b) = (t * k as f64 / 8.0, t * (k + 1) as f64 / 8.0);
                quadrature::integrate(inner, a, b, 1e-12).integral
            })
            .sum();
        let (re, _) = ordered_double_integrals(&m, t).unwrap();
        assert!((raw - re).abs() < 1e-10, "{raw} vs {re}");
    }

    /// Ratio of the exact exponent to the bare ordered integral at several times.
    fn calibrated_prefactor(m: &CorrelatorModel, g: f64, zeta: f64, n: f64, n_f: usize) -> Vec<f64> {
        let ts: Vec<f64> = vec![0.5, 1.3, 2.2];
        let tr = single_mode_exact(&dephasing_sys(), zeta, g, n, n_f, &plus_state(), &ts).unwrap();
        ts.iter()
            .zip(&tr.reduced)
            .map(|(&t, r)| {
                let coh = r[(0, 1)] / 0.5;
                let (re, _) = ordered_double_integrals(m, t).unwrap();
                -coh.ln().re / re
            })
            .collect()
    }

    #[test]
    fn prefactor_calibration_is_frozen_power_of_two() {
        for (c0, zeta, beta) in [(1.0, 1.0, 1.0), (0.4, 2.0, 0.5), (0.7, 1.0, f64::INFINITY)] {
            let m = quasi_thermal(c0, zeta, beta);
            let g = c0 / (2.0 * zeta).sqrt();
            let n = bose(beta, zeta);
            for k in calibrated_prefactor(&m, g, zeta, n, 60) {
                assert!((k - DEPHASING_PREFACTOR).abs() < 1e-7, "ratio {k} at {c0} {zeta} {beta}");
            }
        }
        assert_eq!(DEPHASING_PREFACTOR.log2().fract(), 0.0);
    }

    #[test]
    fn oracles_agree_on_overlap_domain() {
        let m = quasi_thermal(1.0, 1.0, 1.0);
        let g = 1.0 / 2f64.sqrt();
        let n = bose(1.0, 1.0);
        let t = std::f64::consts::PI;
        let tr = single_mode_exact(&dephasing_sys(), 1.0, g, n, 60, &plus_state(), &[t]).unwrap();
        let exact = tr.reduced[0][(0, 1)] / 0.5;
        let quad = dephasing_coherence(&m, t).unwrap();
        assert!((exact - quad).norm() < 1e-8, "{exact} vs {quad}");
    }

    #[test]
    fn zero_temperature_displacement_factor() {
        // vacuum mode with coupling g sigma_z: exponent 4 g^2/zeta^2 (1 - cos zeta t)
        let (g, zeta) = (0.3f64, 1.5f64);
        let m = quasi_thermal(g * (2.0 * zeta).sqrt(), zeta, f64::INFINITY);
        for t in [0.7, 2.0, 5.0] {
            let expect = (-4.0 * g * g / (zeta * zeta) * (1.0 - (zeta * t).cos())).exp();
            let quad = dephasing_coherence(&m, t).unwrap();
            assert!((quad - expect).norm() < 1e-10);
            let tr = single_mode_exact(&dephasing_sys(), zeta, g, 0.0, 40, &plus_state(), &[t]).unwrap();
            assert!((tr.reduced[0][(0, 1)] / 0.5 - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn uncoupled_mode_leaves_unitary_dynamics() {
        let h = pauli('x').unwrap() * c(0.5, 0.0);
        let sys = SystemSpec::new(h, pauli('z').unwrap()).unwrap();
        let mut r0 = CMat::zeros(2, 2);
        r0[(0, 0)] = Complex64::ONE;
        let ts: Vec<f64> = (0..20).map(|k| k as f64 * 0.5).collect();
        let tr = single_mode_exact(&sys, 1.0, 0.0, 0.5, 40, &r0, &ts).unwrap();
        let sz = crate::propagator::observable(&tr, &pauli('z').unwrap()).unwrap();
        for (t, v) in ts.iter().zip(sz) {
            assert!((v.re - t.cos()).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn dephasing_trajectory_matches_coherence() {
        let m = quasi_thermal(0.5, 1.0, 1.0);
        let h = pauli('z').unwrap() * c(0.3, 0.0);
        let sys = SystemSpec::new(h, pauli('z').unwrap()).unwrap();
        let ts = [0.0, 1.0, 2.5];
        let tr = dephasing_trajectory(&sys, &m, &plus_state(), &ts).unwrap();
        for (k, &t) in ts.iter().enumerate() {
            let expect = Complex64::from_polar(0.5, -0.6 * t) * dephasing_coherence(&m, t).unwrap();
            assert!((tr.reduced[k][(0, 1)] - expect).norm() < 1e-14);
            assert!((tr.reduced[k][(1, 0)] - expect.conj()).norm() < 1e-14);
            assert_eq!(tr.reduced[k][(0, 0)], c(0.5, 0.0));
        }
        let bad = SystemSpec::new(pauli('x').unwrap(), pauli('z').unwrap()).unwrap();
        assert!(dephasing_trajectory(&bad, &m, &plus_state(), &ts).is_err());
    }

    #[test]
    fn tail_check_rejects_small_truncation() {
        let r = single_mode_exact(&dephasing_sys(), 1.0, 0.5, 2.0, 8, &plus_state(), &[0.0]);
        assert!(matches!(r, Err(Error::TruncationTooSmall(_))));
    }

    #[test]
    fn compare_self_and_mismatch() {
        let ts = vec![0.0, 0.5, 1.0];
        let tr = single_mode_exact(&dephasing_sys(), 1.0, 0.3, 0.0, 20, &plus_state(), &ts).unwrap();
        let obs = vec![("sx".to_string(), pauli('x').unwrap())];
        let rep = compare(&[("a".into(), tr.clone()), ("b".into(), tr.clone())], &obs, Some(1e-12), BTreeMap::new()).unwrap();
        assert_eq!(rep.deviations.len(), 1);
        assert_eq!(rep.max_deviation(), 0.0);
        assert_eq!(rep.all_pass(), Some(true));
        assert_eq!(rep.recompute(), rep.deviations);
        let other = single_mode_exact(&dephasing_sys(), 1.0, 0.3, 0.0, 20, &plus_state(), &[0.0, 0.5]).unwrap();
        assert!(matches!(
            compare(&[("a".into(), tr.clone()), ("c".into(), other)], &obs, None, BTreeMap::new()),
            Err(Error::GridMismatch(_, _))
        ));
        let shifted = single_mode_exact(&dephasing_sys(), 1.0, 0.6, 0.0, 20, &plus_state(), &ts).unwrap();
        let rep = compare(&[("a".into(), tr), ("d".into(), shifted)], &obs, Some(1e-12), BTreeMap::new()).unwrap();
        assert_eq!(rep.all_pass(), Some(false));
        assert!(rep.deviations[0].l2 > 0.0 && rep.deviations[0].l2 <= rep.deviations[0].max_abs);
    }
}
