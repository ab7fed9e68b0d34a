//! Scenario configuration. Every struct rejects unknown keys.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemConfig,
    pub bath: BathConfig,
    pub embeddings: Vec<EmbeddingConfig>,
    pub grid: GridConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub outputs: OutputsConfig,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
    #[serde(default)]
    pub stability: Option<StabilityConfig>,
}

/// Complex matrix as row-major nested arrays; `im` defaults to zero.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dim_s: usize,
    pub h_s: MatrixConfig,
    pub s: MatrixConfig,
    /// Defaults to the first basis state.
    #[serde(default)]
    pub rho0: Option<MatrixConfig>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, JsonSchema, PartialEq)]
pub enum RegimeName {
    Classical,
    ClassicalHighTemperature,
    QuasiThermal,
    Debye,
    OverdampedBrownian,
}

/// Either a Brownian bath `{regime, c0, omega0 | zeta, gamma0, beta}` or explicit `pairs`.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    #[serde(default)]
    pub regime: Option<RegimeName>,
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default)]
    pub omega0: Option<f64>,
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default)]
    pub gamma0: Option<f64>,
    /// Inverse temperature; omit together with `zero_temperature: true` for beta = infinity.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub zero_temperature: bool,
    #[serde(default)]
    pub pairs: Option<Vec<PairConfig>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    /// `[re, im]`
    pub c1: [f64; 2],
    pub c2: [f64; 2],
    pub zeta: f64,
    pub gamma0: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, JsonSchema, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    KeldyshPseudomode,
    PureState,
    HilbertRetarded,
    StrongDamping,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, JsonSchema, PartialEq, Eq)]
pub enum BasisName {
    ExpDiagonal,
    PhaseSpace,
    ClassicalQP,
}

/// A preset id or an explicit variant with optional free parameters.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub variant: Option<VariantName>,
    pub n_f: usize,
    /// `[re, im]`
    #[serde(default)]
    pub delta: Option<[f64; 2]>,
    #[serde(default)]
    pub lambda: Option<[f64; 2]>,
    #[serde(default)]
    pub n_ref: Option<f64>,
    #[serde(default)]
    pub basis: Option<BasisName>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, JsonSchema, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Dopri5,
    Rk4,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_method")]
    pub method: MethodName,
    /// Step for `rk4`.
    #[serde(default)]
    pub dt: Option<f64>,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_method() -> MethodName {
    MethodName::Dopri5
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { tol: default_tol(), method: default_method(), dt: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub name: String,
    /// One of `x`, `y`, `z`, `i` for a qubit.
    #[serde(default)]
    pub pauli: Option<String>,
    #[serde(default)]
    pub matrix: Option<MatrixConfig>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, JsonSchema, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum FormatName {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub observables: Vec<ObservableConfig>,
    /// Output directory; `MEMBED_OUTPUT_DIR` overrides it. Defaults to `membed-out`.
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<FormatName>,
}

fn default_formats() -> Vec<FormatName> {
    vec![FormatName::Csv]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, JsonSchema, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    /// Thermal single mode at `gamma0 = 0`, exact diagonalization.
    SingleModeExact,
    /// Gaussian dephasing for diagonal `H_s` and `S`.
    Dephasing,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub kind: OracleKind,
    /// Fock truncation of the exact single-mode reference.
    #[serde(default)]
    pub n_f: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub n_f: Vec<usize>,
    #[serde(default = "default_divergence")]
    pub divergence_threshold: f64,
    /// Observable used for the deviation column; defaults to the first listed.
    #[serde(default)]
    pub observable: Option<String>,
}

fn default_divergence() -> f64 {
    1.0
}

pub fn schema_json() -> String {
    let schema = schemars::schema_for!(ScenarioConfig);
    serde_json::to_string_pretty(&schema).expect("schema serializes") + "\n"
}
