//! Time integration of extended-space generators.

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::{ExtendedGenerator, Variant};
use crate::error::{Error, Result};
use crate::liouville::{hermiticity_deviation, to_dense, CMat, Sparse};

/// Generators below this flat dimension use a dense product.
pub const DENSE_BELOW: usize = 16;
/// Row count above which sparse products are split across threads.
const PARALLEL_ROWS: usize = 1 << 15;
const BLOWUP: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    /// Adaptive Dormand-Prince 5(4).
    Dopri5,
    /// Classical fourth-order Runge-Kutta with step at most `dt`.
    Rk4 { dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub tol: f64,
    pub method: Method,
    /// Stop once `|Tr rho_s - 1|` exceeds this value.
    pub divergence_threshold: Option<f64>,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { tol: 1e-9, method: Method::Dopri5, divergence_threshold: None, max_steps: 50_000_000 }
    }
}

impl EvolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    Diverged { time: f64 },
    NonFinite { time: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub trace_dev: Vec<f64>,
    /// Largest extended-state amplitude on the top Fock level of any mode.
    pub top_level_norm: Vec<f64>,
    pub min_eigenvalue: Vec<f64>,
    pub hermiticity_dev: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t_grid: Vec<f64>,
    pub reduced: Vec<CMat>,
    pub observables: BTreeMap<String, Vec<Complex64>>,
    pub diagnostics: Diagnostics,
    pub termination: Termination,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn new(t_grid: Vec<f64>, reduced: Vec<CMat>) -> Self {
        let mut diagnostics = Diagnostics::default();
        for r in &reduced {
            push_reduced_diagnostics(&mut diagnostics, r);
            diagnostics.top_level_norm.push(0.0);
        }
        Self {
            t_grid,
            reduced,
            observables: BTreeMap::new(),
            diagnostics,
            termination: Termination::Completed,
            stats: StepStats::default(),
        }
    }

    /// Computes and stores `Tr(O rho_s)` under `name`.
    pub fn with_observable(mut self, name: &str, o: &CMat) -> Result<Self> {
        let s = observable(&self, o)?;
        self.observables.insert(name.to_string(), s);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.reduced.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reduced.is_empty()
    }
}

fn push_reduced_diagnostics(d: &mut Diagnostics, rho: &CMat) {
    d.trace_dev.push((rho.trace() - Complex64::ONE).norm());
    d.hermiticity_dev.push(hermiticity_deviation(rho));
    let h = (rho + rho.adjoint()) * Complex64::from(0.5);
    let ev = nalgebra::SymmetricEigen::new(h).eigenvalues;
    d.min_eigenvalue.push(ev.iter().cloned().fold(f64::INFINITY, f64::min));
}

pub fn observable(traj: &Trajectory, o: &CMat) -> Result<Vec<Complex64>> {
    let d = traj.reduced.first().map_or(o.nrows(), |r| r.nrows());
    if o.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!("observable is {:?}, system dimension {d}", o.shape())));
    }
    Ok(traj.reduced.iter().map(|r| (o * r).trace()).collect())
}

/// Matrix-vector backend chosen from size and fill.
enum RateOp {
    Dense(CMat),
    Sparse(Sparse),
}

impl RateOp {
    fn new(m: &Sparse) -> Self {
        let n = m.nrows();
        let fill = m.nnz() as f64 / (n as f64 * n as f64).max(1.0);
        if n < DENSE_BELOW || fill > 0.25 {
            Self::Dense(to_dense(m))
        } else {
            Self::Sparse(m.clone())
        }
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        match self {
            Self::Dense(m) => {
                let n = m.nrows();
                y.iter_mut().for_each(|v| *v = Complex64::ZERO);
                for (j, xj) in x.iter().enumerate() {
                    if *xj == Complex64::ZERO {
                        continue;
                    }
                    let col = &m.as_slice()[j * n..(j + 1) * n];
                    for (yi, mij) in y.iter_mut().zip(col) {
                        *yi += mij * xj;
                    }
                }
            }
            Self::Sparse(m) => {
                let (off, idx, val) = (m.row_offsets(), m.col_indices(), m.values());
                let row = |i: usize| -> Complex64 {
                    let mut acc = Complex64::ZERO;
                    for p in off[i]..off[i + 1] {
                        acc += val[p] * x[idx[p]];
                    }
                    acc
                };
                if y.len() >= PARALLEL_ROWS {
                    y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
                } else {
                    y.iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
                }
            }
        }
    }
}

struct Workspace {
    k: [Vec<Complex64>; 7],
    tmp: Vec<Complex64>,
    y_new: Vec<Complex64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let z = || vec![Complex64::ZERO; n];
        Self { k: [z(), z(), z(), z(), z(), z(), z()], tmp: z(), y_new: z() }
    }
}

fn axpy_combo(out: &mut [Complex64], y: &[Complex64], h: f64, terms: &[(f64, &[Complex64])]) {
    for i in 0..out.len() {
        let mut acc = Complex64::ZERO;
        for (c, k) in terms {
            acc += *c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Integrator<'a> {
    op: RateOp,
    opts: &'a EvolveOptions,
    ws: Workspace,
    h: f64,
    fsal_valid: bool,
    stats: StepStats,
}

impl<'a> Integrator<'a> {
    fn new(rate: &Sparse, opts: &'a EvolveOptions) -> Self {
        Self {
            op: RateOp::new(rate),
            opts,
            ws: Workspace::new(rate.nrows()),
            h: 0.0,
            fsal_valid: false,
            stats: StepStats::default(),
        }
    }

    /// Advances `y` from `t0` to `t1`.
    fn advance(&mut self, y: &mut Vec<Complex64>, t0: f64, t1: f64) -> Result<()> {
        match self.opts.method {
            Method::Dopri5 => self.advance_dopri(y, t0, t1),
            Method::Rk4 { dt } => self.advance_rk4(y, t0, t1, dt),
        }
    }

    fn advance_rk4(&mut self, y: &mut Vec<Complex64>, t0: f64, t1: f64, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParams(format!("RK4 step must be positive, got {dt}")));
        }
        let n = ((t1 - t0) / dt).ceil().max(1.0) as usize;
        let h = (t1 - t0) / n as f64;
        for step in 0..n {
            let ws = &mut self.ws;
            let [k1, k2, k3, k4, ..] = &mut ws.k;
            self.op.apply(y, k1);
            axpy_combo(&mut ws.tmp, y, h, &[(0.5, k1)]);
            self.op.apply(&ws.tmp, k2);
            axpy_combo(&mut ws.tmp, y, h, &[(0.5, k2)]);
            self.op.apply(&ws.tmp, k3);
            axpy_combo(&mut ws.tmp, y, h, &[(1.0, k3)]);
            self.op.apply(&ws.tmp, k4);
            for i in 0..y.len() {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            self.stats.accepted += 1;
            check_finite(y, t0 + h * (step + 1) as f64)?;
        }
        Ok(())
    }

    fn error_norm(&self, y: &[Complex64], terms_h: f64) -> f64 {
        let ws = &self.ws;
        let tol = self.opts.tol;
        let mut acc = 0.0;
        for i in 0..y.len() {
            let e = terms_h
                * (E1 * ws.k[0][i] + E3 * ws.k[2][i] + E4 * ws.k[3][i] + E5 * ws.k[4][i] + E6 * ws.k[5][i] + E7 * ws.k[6][i]);
            let sc = tol + tol * y[i].norm().max(ws.y_new[i].norm());
            acc += (e.norm() / sc).powi(2);
        }
        (acc / y.len().max(1) as f64).sqrt()
    }

    fn initial_step(&mut self, y: &[Complex64], span: f64) -> f64 {
        let ws = &mut self.ws;
        self.op.apply(y, &mut ws.k[0]);
        let tol = self.opts.tol;
        let rms = |v: &[Complex64], w: &[Complex64]| -> f64 {
            let s: f64 = v.iter().zip(w).map(|(a, b)| (a.norm() / (tol + tol * b.norm())).powi(2)).sum();
            (s / v.len().max(1) as f64).sqrt()
        };
        let d0 = rms(y, y);
        let d1 = rms(&ws.k[0], y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0.min(span)
    }

    fn advance_dopri(&mut self, y: &mut Vec<Complex64>, t0: f64, t1: f64) -> Result<()> {
        let mut t = t0;
        if self.h == 0.0 {
            self.h = self.initial_step(y, t1 - t0);
            self.fsal_valid = true;
        }
        while t < t1 {
            if self.stats.accepted + self.stats.rejected >= self.opts.max_steps {
                return Err(Error::StepSizeUnderflow { time: t });
            }
            let last = t + self.h >= t1;
            let h = if last { t1 - t } else { self.h };
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { time: t });
            }
            let ws = &mut self.ws;
            if !self.fsal_valid {
                self.op.apply(y, &mut ws.k[0]);
            }
            let [k1, k2, k3, k4, k5, k6, k7] = &mut ws.k;
            axpy_combo(&mut ws.tmp, y, h, &[(A21, k1)]);
            self.op.apply(&ws.tmp, k2);
            axpy_combo(&mut ws.tmp, y, h, &[(A31, k1), (A32, k2)]);
            self.op.apply(&ws.tmp, k3);
            axpy_combo(&mut ws.tmp, y, h, &[(A41, k1), (A42, k2), (A43, k3)]);
            self.op.apply(&ws.tmp, k4);
            axpy_combo(&mut ws.tmp, y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]);
            self.op.apply(&ws.tmp, k5);
            axpy_combo(&mut ws.tmp, y, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]);
            self.op.apply(&ws.tmp, k6);
            axpy_combo(&mut ws.y_new, y, h, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
            self.op.apply(&ws.y_new, k7);
            let _ = (C2, C3, C4, C5);
            let err = self.error_norm(y, h);
            if err.is_nan() || ws_has_blowup(&self.ws.y_new) {
                return Err(Error::NonFiniteState { time: t + h });
            }
            if err <= 1.0 {
                t = if last { t1 } else { t + h };
                std::mem::swap(y, &mut self.ws.y_new);
                let ws = &mut self.ws;
                ws.k.swap(0, 6);
                self.fsal_valid = true;
                self.stats.accepted += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    self.h = h * fac;
                }
            } else {
                self.stats.rejected += 1;
                self.fsal_valid = true;
                self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        Ok(())
    }
}

fn ws_has_blowup(y: &[Complex64]) -> bool {
    y.iter().any(|z| !z.is_finite() || z.norm() > BLOWUP)
}

fn check_finite(y: &[Complex64], t: f64) -> Result<()> {
    if ws_has_blowup(y) {
        return Err(Error::NonFiniteState { time: t });
    }
    Ok(())
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParams("time grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

pub fn validate_density_matrix(rho: &CMat) -> Result<()> {
    if !rho.is_square() {
        return Err(Error::DimensionMismatch("density matrix must be square".into()));
    }
    if hermiticity_deviation(rho) > 1e-10 {
        return Err(Error::InvalidParams("initial state is not Hermitian".into()));
    }
    if (rho.trace() - Complex64::ONE).norm() > 1e-10 {
        return Err(Error::InvalidParams("initial state does not have unit trace".into()));
    }
    let ev = nalgebra::SymmetricEigen::new(rho.clone()).eigenvalues;
    if ev.iter().any(|e| *e < -1e-10) {
        return Err(Error::InvalidParams("initial state is not positive semidefinite".into()));
    }
    Ok(())
}

/// Evolution of a flat state with an arbitrary per-grid-point callback.
/// Returns the accepted-step statistics and the termination record.
fn propagate<F>(
    rate: &Sparse,
    x0: DVector<Complex64>,
    t_grid: &[f64],
    opts: &EvolveOptions,
    mut at_grid: F,
) -> Result<(StepStats, Termination, Option<Error>)>
where
    F: FnMut(usize, &[Complex64]) -> bool,
{
    check_grid(t_grid)?;
    let mut y: Vec<Complex64> = x0.as_slice().to_vec();
    let mut integ = Integrator::new(rate, opts);
    if !at_grid(0, &y) {
        return Ok((integ.stats, Termination::Diverged { time: t_grid[0] }, None));
    }
    for k in 1..t_grid.len() {
        match integ.advance(&mut y, t_grid[k - 1], t_grid[k]) {
            Ok(()) => {}
            Err(Error::NonFiniteState { time }) => {
                return Ok((integ.stats, Termination::NonFinite { time }, Some(Error::NonFiniteState { time })))
            }
            Err(e) => return Err(e),
        }
        if !at_grid(k, &y) {
            return Ok((integ.stats, Termination::Diverged { time: t_grid[k] }, None));
        }
    }
    Ok((integ.stats, Termination::Completed, None))
}

/// Evolution that records non-finite blow-up as a termination instead of an error.
pub fn evolve_monitored(
    gen: &ExtendedGenerator,
    rho0: &CMat,
    t_grid: &[f64],
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    validate_density_matrix(rho0)?;
    let x0 = gen.inject(rho0)?;
    let top = gen.boundary_mask(1);
    let mut reduced = Vec::new();
    let mut diag = Diagnostics::default();
    let threshold = opts.divergence_threshold;
    let (stats, termination, _) = propagate(&gen.rate, x0, t_grid, opts, |_, x| {
        let rho = gen.extract(x);
        push_reduced_diagnostics(&mut diag, &rho);
        let tl = x.iter().zip(&top).filter(|(_, m)| **m).map(|(z, _)| z.norm()).fold(0.0, f64::max);
        diag.top_level_norm.push(tl);
        let dev = *diag.trace_dev.last().unwrap();
        reduced.push(rho);
        threshold.map_or(true, |th| dev <= th)
    })?;
    let n = reduced.len();
    Ok(Trajectory {
        t_grid: t_grid[..n].to_vec(),
        reduced,
        observables: BTreeMap::new(),
        diagnostics: diag,
        termination,
        stats,
    })
}

pub fn evolve(gen: &ExtendedGenerator, rho0: &CMat, t_grid: &[f64], opts: &EvolveOptions) -> Result<Trajectory> {
    let traj = evolve_monitored(gen, rho0, t_grid, opts)?;
    if let Termination::NonFinite { time } = traj.termination {
        return Err(Error::NonFiniteState { time });
    }
    Ok(traj)
}

/// Values `w^T x(t)` of a linear functional along the flat evolution from `x0`.
pub fn propagate_functional(
    gen: &ExtendedGenerator,
    x0: DVector<Complex64>,
    functional: &[Complex64],
    t_grid: &[f64],
    opts: &EvolveOptions,
) -> Result<Vec<Complex64>> {
    if x0.len() != gen.flat_dim() || functional.len() != gen.flat_dim() {
        return Err(Error::DimensionMismatch("state or functional length differs from flat dimension".into()));
    }
    let mut out = Vec::with_capacity(t_grid.len());
    let (_, _, err) = propagate(&gen.rate, x0, t_grid, opts, |_, x| {
        out.push(functional.iter().zip(x).map(|(w, v)| w * v).sum());
        true
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// `<B(t) B(0)> = Tr[B e^{Lt} (B rho_ss)]` for a mode-space operator `B` in the
/// pseudomode frame of a decoupled system, with `rho_ss` the thermal reference state.
pub fn embedded_bath_correlation(
    gen: &ExtendedGenerator,
    b_op: &CMat,
    t_grid: &[f64],
    opts: &EvolveOptions,
) -> Result<Vec<Complex64>> {
    two_time_mode_correlation(gen, b_op, b_op, t_grid, opts)
}

/// `<A(t) B(0)> = Tr[A e^{Lt} (B rho_ss)]` for mode-space operators.
pub fn two_time_mode_correlation(
    gen: &ExtendedGenerator,
    a_op: &CMat,
    b_op: &CMat,
    t_grid: &[f64],
    opts: &EvolveOptions,
) -> Result<Vec<Complex64>> {
    if gen.variant != Variant::KeldyshPseudomode {
        return Err(Error::NoStationaryState(gen.frame_tag.clone()));
    }
    if !gen.decoupled {
        return Err(Error::InvalidParams("regression needs a frame with a decoupled system".into()));
    }
    let m = gen.layout.mode_space();
    if a_op.shape() != (m, m) || b_op.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!("mode operators must be {m}x{m}")));
    }
    let d = gen.dim_s();
    let rho_s = CMat::identity(d, d) / Complex64::from(d as f64);
    let x0 = rho_s.kronecker(&(b_op * &gen.xi));
    let rows = gen.shape().rows;
    let mut w = vec![Complex64::ZERO; gen.flat_dim()];
    for s in 0..d {
        for l in 0..m {
            for k in 0..m {
                // Tr[(I (x) A) X] = sum A[l,k] X[(s,k),(s,l)]
                w[(s * m + l) * rows + s * m + k] = a_op[(l, k)];
            }
        }
    }
    propagate_functional(gen, DVector::from_column_slice(x0.as_slice()), &w, t_grid, opts)
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub n_f: usize,
    pub max_trace_dev: f64,
    pub max_top_level_norm: f64,
    pub first_divergence_time: Option<f64>,
    /// Largest observable deviation from the largest-`n_F` run on the common grid.
    pub max_observable_deviation: Option<f64>,
    pub termination: Termination,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub divergence_threshold: f64,
}

/// Runs `builder(n_F)` for every truncation concurrently and summarizes health.
/// A run diverges once `|Tr rho_s - 1| > divergence_threshold` or the state blows up.
pub fn stability_scan<B>(
    builder: B,
    n_f_list: &[usize],
    rho0: &CMat,
    t_grid: &[f64],
    obs: &CMat,
    opts: &EvolveOptions,
    divergence_threshold: f64,
) -> Result<StabilityReport>
where
    B: Fn(usize) -> Result<ExtendedGenerator> + Sync,
{
    if n_f_list.is_empty() {
        return Err(Error::InvalidParams("empty n_F list".into()));
    }
    let run_opts = EvolveOptions { divergence_threshold: Some(divergence_threshold), ..*opts };
    let runs: Vec<Result<(usize, Trajectory)>> = n_f_list
        .par_iter()
        .map(|&n| {
            let g = builder(n)?;
            Ok((n, evolve_monitored(&g, rho0, t_grid, &run_opts)?))
        })
        .collect();
    let runs: Vec<(usize, Trajectory)> = runs.into_iter().collect::<Result<_>>()?;
    let series: Vec<Vec<Complex64>> = runs.iter().map(|(_, t)| observable(t, obs)).collect::<Result<_>>()?;
    let ref_idx = (0..runs.len()).max_by_key(|&i| runs[i].0).unwrap();
    let rows = runs
        .iter()
        .enumerate()
        .map(|(i, (n, t))| {
            let d = &t.diagnostics;
            let first_div = match t.termination {
                Termination::Completed => None,
                Termination::Diverged { time } | Termination::NonFinite { time } => Some(time),
            };
            let dev = (runs.len() > 1).then(|| {
                series[i]
                    .iter()
                    .zip(&series[ref_idx])
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max)
            });
            StabilityRow {
                n_f: *n,
                max_trace_dev: d.trace_dev.iter().cloned().fold(0.0, f64::max),
                max_top_level_norm: d.top_level_norm.iter().cloned().fold(0.0, f64::max),
                first_divergence_time: first_div,
                max_observable_deviation: dev,
                termination: t.termination,
                points: t.len(),
            }
        })
        .collect();
    Ok(StabilityReport { rows, divergence_threshold })
}
