//! Resolution of a parsed config into core objects. Everything here runs before
//! any time evolution, so failures map to the config-invalid exit code.

use std::collections::BTreeSet;
use std::path::Path;

use markovian_embed::correlator::{
    bose, model_from_regime, ri_decompose, BasisTag, BrownianParams, CorrelatorModel, DampedPair, Regime,
};
use markovian_embed::embeddings::{
    build_hilbert_retarded, build_keldysh_pseudomode, build_preset, build_pure_state, presets,
    strong_damping_reduce, ExtendedGenerator, PresetInfo,
};
use markovian_embed::liouville::{pauli, CMat, SystemSpec};
use markovian_embed::propagator::{validate_density_matrix, EvolveOptions, Method};
use num_complex::Complex64;

use crate::config::{
    BasisName, BathConfig, EmbeddingConfig, IntegratorConfig, MatrixConfig, MethodName, OracleConfig,
    OracleKind, RegimeName, ScenarioConfig, VariantName,
};
use crate::CliError;

const DEFAULT_ORACLE_NF: usize = 40;

#[derive(Debug, Clone)]
pub enum Source {
    Preset(&'static PresetInfo),
    Variant(VariantName),
}

/// One embedding with every free parameter resolved.
#[derive(Debug, Clone)]
pub struct EmbeddingSpec {
    pub name: String,
    pub source: Source,
    pub n_f: usize,
    pub delta: Option<Complex64>,
    pub lambda: Option<Complex64>,
    pub n_ref: Option<f64>,
    pub basis: Option<BasisTag>,
}

impl EmbeddingSpec {
    pub fn build(&self, sys: &SystemSpec, model: &CorrelatorModel, n_f: usize) -> markovian_embed::Result<ExtendedGenerator> {
        match &self.source {
            Source::Preset(p) => build_preset(p.id, sys, model, n_f),
            Source::Variant(VariantName::KeldyshPseudomode) => build_keldysh_pseudomode(
                sys,
                model,
                self.n_ref.unwrap_or(0.0),
                self.delta.unwrap_or(Complex64::ONE),
                self.lambda.unwrap_or(Complex64::ONE),
                n_f,
            ),
            Source::Variant(VariantName::PureState) => build_pure_state(
                sys,
                model,
                self.delta.unwrap_or(Complex64::ONE),
                self.lambda.unwrap_or(Complex64::ONE),
                n_f,
            ),
            Source::Variant(VariantName::HilbertRetarded) => {
                let d = ri_decompose(model, self.basis.unwrap_or(BasisTag::ExpDiagonal))?;
                let k = d.dim();
                build_hilbert_retarded(sys, &d, &vec![n_f; k])
            }
            Source::Variant(VariantName::StrongDamping) => {
                strong_damping_reduce(sys, model, self.delta.unwrap_or(Complex64::ONE), n_f)
            }
        }
    }

    pub fn source_label(&self) -> String {
        match &self.source {
            Source::Preset(p) => format!("preset:{}", p.id),
            Source::Variant(v) => format!("variant:{}", variant_id(*v)),
        }
    }
}

#[derive(Debug, Clone)]
pub enum OracleSpec {
    SingleMode { zeta: f64, g: f64, n_beta: f64, n_f: usize },
    Dephasing,
}

impl OracleSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OracleSpec::SingleMode { .. } => "oracle-single-mode-exact",
            OracleSpec::Dephasing => "oracle-dephasing",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub system: SystemSpec,
    pub model: CorrelatorModel,
    pub rho0: CMat,
    pub t_grid: Vec<f64>,
    pub opts: EvolveOptions,
    pub observables: Vec<(String, CMat)>,
    pub embeddings: Vec<EmbeddingSpec>,
    pub oracle: Option<OracleSpec>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn variant_id(v: VariantName) -> &'static str {
    match v {
        VariantName::KeldyshPseudomode => "keldysh-pseudomode",
        VariantName::PureState => "pure-state",
        VariantName::HilbertRetarded => "hilbert-retarded",
        VariantName::StrongDamping => "strong-damping",
    }
}

pub fn load(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

pub fn matrix(m: &MatrixConfig, d: usize, what: &str) -> Result<CMat, CliError> {
    let check = |rows: &Vec<Vec<f64>>, part: &str| -> Result<(), CliError> {
        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
            return Err(invalid(format!("{what}.{part} must be {d}x{d}")));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid(format!("{what}.{part} has non-finite entries")));
        }
        Ok(())
    };
    check(&m.re, "re")?;
    if let Some(im) = &m.im {
        check(im, "im")?;
    }
    Ok(CMat::from_fn(d, d, |i, j| {
        Complex64::new(m.re[i][j], m.im.as_ref().map_or(0.0, |im| im[i][j]))
    }))
}

fn regime(r: RegimeName) -> Regime {
    match r {
        RegimeName::Classical => Regime::Classical,
        RegimeName::ClassicalHighTemperature => Regime::ClassicalHighTemperature,
        RegimeName::QuasiThermal => Regime::QuasiThermal,
        RegimeName::Debye => Regime::Debye,
        RegimeName::OverdampedBrownian => Regime::OverdampedBrownian,
    }
}

pub fn bath_model(b: &BathConfig) -> Result<CorrelatorModel, CliError> {
    let c = |z: [f64; 2]| Complex64::new(z[0], z[1]);
    if let Some(pairs) = &b.pairs {
        let extra = b.regime.is_some()
            || b.c0.is_some()
            || b.omega0.is_some()
            || b.zeta.is_some()
            || b.gamma0.is_some()
            || b.beta.is_some()
            || b.zero_temperature;
        if extra {
            return Err(invalid("bath: `pairs` excludes the Brownian fields"));
        }
        if pairs.is_empty() {
            return Err(invalid("bath.pairs is empty"));
        }
        let pairs = pairs
            .iter()
            .map(|p| DampedPair { c1: c(p.c1), c2: c(p.c2), zeta: p.zeta, gamma0: p.gamma0 })
            .collect();
        return CorrelatorModel::from_pairs(pairs).map_err(|e| invalid(format!("bath: {e}")));
    }
    let regime_name = b.regime.ok_or_else(|| invalid("bath: give `regime` or `pairs`"))?;
    let c0 = b.c0.ok_or_else(|| invalid("bath.c0 is required"))?;
    let gamma0 = b.gamma0.ok_or_else(|| invalid("bath.gamma0 is required"))?;
    let beta = match (b.beta, b.zero_temperature) {
        (Some(beta), false) => beta,
        (None, true) => f64::INFINITY,
        (Some(_), true) => return Err(invalid("bath: `beta` and `zero_temperature` are exclusive")),
        (None, false) => return Err(invalid("bath.beta is required (or zero_temperature: true)")),
    };
    let params = match (b.omega0, b.zeta) {
        (Some(w), None) => BrownianParams::new(c0, w, gamma0, beta),
        (None, Some(z)) => BrownianParams::from_zeta(c0, z, gamma0, beta),
        _ => return Err(invalid("bath: give exactly one of `omega0` and `zeta`")),
    }
    .map_err(|e| invalid(format!("bath: {e}")))?;
    model_from_regime(&params, regime(regime_name)).map_err(|e| invalid(format!("bath: {e}")))
}

pub fn integrator(c: &IntegratorConfig) -> Result<EvolveOptions, CliError> {
    if !(c.tol > 0.0 && c.tol.is_finite()) {
        return Err(invalid(format!("integrator.tol must be positive, got {}", c.tol)));
    }
    let method = match (c.method, c.dt) {
        (MethodName::Dopri5, None) => Method::Dopri5,
        (MethodName::Dopri5, Some(_)) => return Err(invalid("integrator.dt applies to rk4 only")),
        (MethodName::Rk4, Some(dt)) if dt > 0.0 && dt.is_finite() => Method::Rk4 { dt },
        (MethodName::Rk4, _) => return Err(invalid("integrator: rk4 needs a positive dt")),
    };
    Ok(EvolveOptions { tol: c.tol, method, ..EvolveOptions::default() })
}

pub fn time_grid(t_max: f64, n_points: usize) -> Result<Vec<f64>, CliError> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(invalid(format!("grid.t_max must be positive, got {t_max}")));
    }
    if n_points < 2 {
        return Err(invalid("grid.n_points must be at least 2"));
    }
    let h = t_max / (n_points - 1) as f64;
    Ok((0..n_points).map(|i| if i + 1 == n_points { t_max } else { i as f64 * h }).collect())
}

fn safe_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

fn observables(cfg: &ScenarioConfig, d: usize) -> Result<Vec<(String, CMat)>, CliError> {
    if cfg.outputs.observables.is_empty() {
        return Err(invalid("outputs.observables is empty"));
    }
    let mut seen = BTreeSet::new();
    cfg.outputs
        .observables
        .iter()
        .map(|o| {
            if !safe_name(&o.name) {
                return Err(invalid(format!("observable name {:?} must match [A-Za-z0-9_.-]+", o.name)));
            }
            if !seen.insert(o.name.clone()) {
                return Err(invalid(format!("duplicate observable {:?}", o.name)));
            }
            let m = match (&o.pauli, &o.matrix) {
                (Some(p), None) => {
                    if d != 2 {
                        return Err(invalid(format!("observable {:?}: Pauli operators need dim_s = 2", o.name)));
                    }
                    let mut chars = p.chars();
                    match (chars.next(), chars.next()) {
                        (Some(c), None) => pauli(c).ok_or_else(|| invalid(format!("unknown Pauli {p:?}")))?,
                        _ => return Err(invalid(format!("unknown Pauli {p:?}"))),
                    }
                }
                (None, Some(m)) => matrix(m, d, &format!("observable {}", o.name))?,
                _ => return Err(invalid(format!("observable {:?}: give exactly one of pauli, matrix", o.name))),
            };
            Ok((o.name.clone(), m))
        })
        .collect()
}

fn complex(z: Option<[f64; 2]>) -> Option<Complex64> {
    z.map(|z| Complex64::new(z[0], z[1]))
}

fn first_pair(model: &CorrelatorModel) -> DampedPair {
    model.pairs[0]
}

/// Fills unset free parameters. Keldysh: `n_ref = 0`, `delta lambda (2 n_ref + 1) = c1* + c2`
/// with `delta = lambda` when neither is given. Pure-state: `delta = lambda = sqrt|c1 - c2|`.
/// Strong damping: `delta = sqrt 2`. The first pair sets the scale for multi-pair baths.
fn embedding(e: &EmbeddingConfig, model: &CorrelatorModel, index: usize) -> Result<EmbeddingSpec, CliError> {
    let label = e.name.clone().unwrap_or_else(|| format!("embeddings[{index}]"));
    if e.n_f == 0 {
        return Err(invalid(format!("{label}: n_f must be positive")));
    }
    let (delta, lambda) = (complex(e.delta), complex(e.lambda));
    for (k, z) in [("delta", delta), ("lambda", lambda)] {
        if let Some(z) = z {
            if !z.is_finite() || z == Complex64::ZERO {
                return Err(invalid(format!("{label}: {k} must be finite and nonzero")));
            }
        }
    }
    if let Some(n) = e.n_ref {
        if !(n >= 0.0 && n.is_finite()) {
            return Err(invalid(format!("{label}: n_ref must be >= 0")));
        }
    }
    let spec = |source, delta, lambda, n_ref, basis| EmbeddingSpec {
        name: String::new(),
        source,
        n_f: e.n_f,
        delta,
        lambda,
        n_ref,
        basis,
    };
    let reject = |fields: &[(&str, bool)]| -> Result<(), CliError> {
        match fields.iter().find(|(_, set)| *set) {
            Some((f, _)) => Err(invalid(format!("{label}: `{f}` does not apply here"))),
            None => Ok(()),
        }
    };
    let mut out = match (&e.preset, e.variant) {
        (Some(id), None) => {
            let info = presets()
                .iter()
                .find(|p| p.id == id)
                .ok_or_else(|| invalid(format!("{label}: unknown preset {id:?}")))?;
            reject(&[
                ("delta", delta.is_some()),
                ("lambda", lambda.is_some()),
                ("n_ref", e.n_ref.is_some()),
                ("basis", e.basis.is_some()),
            ])?;
            spec(Source::Preset(info), None, None, None, None)
        }
        (None, Some(v)) => {
            let p = first_pair(model);
            match v {
                VariantName::KeldyshPseudomode => {
                    reject(&[("basis", e.basis.is_some())])?;
                    let n_ref = e.n_ref.unwrap_or(0.0);
                    let x = (p.c1.conj() + p.c2) / (2.0 * n_ref + 1.0);
                    let x = if x.norm() > 0.0 { x } else { Complex64::ONE };
                    let (d, l) = match (delta, lambda) {
                        (Some(d), Some(l)) => (d, l),
                        (Some(d), None) => (d, x / d),
                        (None, Some(l)) => (x / l, l),
                        (None, None) => (x.sqrt(), x.sqrt()),
                    };
                    spec(Source::Variant(v), Some(d), Some(l), Some(n_ref), None)
                }
                VariantName::PureState => {
                    reject(&[("basis", e.basis.is_some()), ("n_ref", e.n_ref.is_some())])?;
                    let m = (p.c1 - p.c2).norm().sqrt();
                    let m = Complex64::from(if m > 0.0 { m } else { 1.0 });
                    spec(Source::Variant(v), Some(delta.unwrap_or(m)), Some(lambda.unwrap_or(m)), None, None)
                }
                VariantName::HilbertRetarded => {
                    reject(&[
                        ("delta", delta.is_some()),
                        ("lambda", lambda.is_some()),
                        ("n_ref", e.n_ref.is_some()),
                    ])?;
                    let basis = match e.basis.unwrap_or(BasisName::ExpDiagonal) {
                        BasisName::ExpDiagonal => BasisTag::ExpDiagonal,
                        BasisName::PhaseSpace => BasisTag::PhaseSpace,
                        BasisName::ClassicalQP => BasisTag::ClassicalQP,
                    };
                    spec(Source::Variant(v), None, None, None, Some(basis))
                }
                VariantName::StrongDamping => {
                    reject(&[
                        ("lambda", lambda.is_some()),
                        ("n_ref", e.n_ref.is_some()),
                        ("basis", e.basis.is_some()),
                    ])?;
                    let d = delta.unwrap_or(Complex64::from(2f64.sqrt()));
                    spec(Source::Variant(v), Some(d), None, None, None)
                }
            }
        }
        _ => return Err(invalid(format!("{label}: give exactly one of `preset` and `variant`"))),
    };
    out.name = match &e.name {
        Some(n) if safe_name(n) => n.clone(),
        Some(n) => return Err(invalid(format!("embedding name {n:?} must match [A-Za-z0-9_.-]+"))),
        None => match &out.source {
            Source::Preset(p) => p.id.to_string(),
            Source::Variant(v) => variant_id(*v).to_string(),
        },
    };
    Ok(out)
}

fn is_diagonal(m: &CMat) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == Complex64::ZERO))
}

fn oracle(o: &OracleConfig, sys: &SystemSpec, model: &CorrelatorModel) -> Result<OracleSpec, CliError> {
    match o.kind {
        OracleKind::SingleModeExact => {
            let prov = model
                .provenance
                .as_ref()
                .filter(|p| matches!(p.regime, Regime::QuasiThermal | Regime::Classical))
                .ok_or_else(|| invalid("single-mode-exact oracle needs a quasi-thermal or classical Brownian bath"))?;
            let p = first_pair(model);
            if p.gamma0 != 0.0 {
                return Err(invalid("single-mode-exact oracle needs gamma0 = 0"));
            }
            let n_f = o.n_f.unwrap_or(DEFAULT_ORACLE_NF);
            if n_f < 2 {
                return Err(invalid("oracle.n_f must be at least 2"));
            }
            let c0 = prov.params.c0;
            Ok(OracleSpec::SingleMode {
                zeta: p.zeta,
                g: c0 / (2.0 * p.zeta).sqrt(),
                n_beta: bose(prov.params.beta, p.zeta),
                n_f,
            })
        }
        OracleKind::Dephasing => {
            if o.n_f.is_some() {
                return Err(invalid("oracle.n_f applies to single-mode-exact only"));
            }
            if !is_diagonal(&sys.hamiltonian) || !is_diagonal(&sys.coupling) {
                return Err(invalid("dephasing oracle needs diagonal H_s and S"));
            }
            Ok(OracleSpec::Dephasing)
        }
    }
}

pub fn resolve(config: ScenarioConfig) -> Result<Scenario, CliError> {
    let d = config.system.dim_s;
    if d == 0 {
        return Err(invalid("system.dim_s must be positive"));
    }
    let h = matrix(&config.system.h_s, d, "system.h_s")?;
    let s = matrix(&config.system.s, d, "system.s")?;
    let system = SystemSpec::new(h, s).map_err(|e| invalid(format!("system: {e}")))?;
    let rho0 = match &config.system.rho0 {
        Some(m) => matrix(m, d, "system.rho0")?,
        None => {
            let mut r = CMat::zeros(d, d);
            r[(0, 0)] = Complex64::ONE;
            r
        }
    };
    validate_density_matrix(&rho0).map_err(|e| invalid(format!("system.rho0: {e}")))?;
    let model = bath_model(&config.bath)?;
    let t_grid = time_grid(config.grid.t_max, config.grid.n_points)?;
    let opts = integrator(&config.integrator)?;
    let observables = observables(&config, d)?;
    if config.embeddings.is_empty() {
        return Err(invalid("embeddings is empty"));
    }
    let mut embeddings = Vec::new();
    let mut names = BTreeSet::new();
    for (i, e) in config.embeddings.iter().enumerate() {
        let mut spec = embedding(e, &model, i)?;
        if !names.insert(spec.name.clone()) {
            if e.name.is_some() {
                return Err(invalid(format!("duplicate embedding name {:?}", spec.name)));
            }
            spec.name = format!("{}-{i}", spec.name);
            if !names.insert(spec.name.clone()) {
                return Err(invalid(format!("duplicate embedding name {:?}", spec.name)));
            }
        }
        spec.build(&system, &model, spec.n_f)
            .map_err(|err| invalid(format!("embedding {:?}: {err}", spec.name)))?;
        embeddings.push(spec);
    }
    let oracle = config.oracle.as_ref().map(|o| oracle(o, &system, &model)).transpose()?;
    if let Some(o) = &oracle {
        if names.contains(o.name()) {
            return Err(invalid(format!("embedding name {:?} is reserved", o.name())));
        }
    }
    if let Some(c) = &config.compare {
        if let Some(th) = c.threshold {
            if !(th >= 0.0 && th.is_finite()) {
                return Err(invalid("compare.threshold must be >= 0"));
            }
        }
    }
    Ok(Scenario { config, system, model, rho0, t_grid, opts, observables, embeddings, oracle })
}

/// Checks the sweep and builds every frame of it once so that a bad `n_F` fails early.
pub fn validate_sweep(sc: &Scenario) -> Result<(&[usize], f64, usize), CliError> {
    let st = sc.config.stability.as_ref().ok_or_else(|| invalid("stability section is required"))?;
    if st.n_f.is_empty() {
        return Err(invalid("stability.n_f is empty"));
    }
    if st.n_f.contains(&0) {
        return Err(invalid("stability.n_f entries must be positive"));
    }
    let unique: BTreeSet<_> = st.n_f.iter().collect();
    if unique.len() != st.n_f.len() {
        return Err(invalid("stability.n_f has duplicates"));
    }
    if !(st.divergence_threshold > 0.0 && st.divergence_threshold.is_finite()) {
        return Err(invalid("stability.divergence_threshold must be positive"));
    }
    let obs = match &st.observable {
        Some(name) => sc
            .observables
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| invalid(format!("stability.observable {name:?} is not listed in outputs")))?,
        None => 0,
    };
    for e in &sc.embeddings {
        for &n in &st.n_f {
            e.build(&sc.system, &sc.model, n)
                .map_err(|err| invalid(format!("embedding {:?} at n_f = {n}: {err}", e.name)))?;
        }
    }
    Ok((&st.n_f, st.divergence_threshold, obs))
}
