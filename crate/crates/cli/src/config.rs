//! TOML problem configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub coefficient: Coefficient,
    pub motion: Motion,
    #[serde(default)]
    pub nonlinearity: NonlinearitySpec,
    pub geometry: Geometry,
    #[serde(default)]
    pub discretization: Discretization,
    #[serde(default)]
    pub control: Control,
    #[serde(default)]
    pub initial: Initial,
    #[serde(default)]
    pub fixed_point: FixedPoint,
    #[serde(default)]
    pub probe: Probe,
    #[serde(default)]
    pub output: Output,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficient {
    pub alpha: f64,
    /// Admit `alpha = 0` (constant diffusion).
    #[serde(default)]
    pub allow_nondegenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    /// `ℓ = ℓ₀ + rate·t`
    #[default]
    Affine,
    /// `ℓ = ℓ₀ e^{rate·t}`
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Motion {
    #[serde(default)]
    pub kind: MotionKind,
    #[serde(default = "one")]
    pub ell0: f64,
    pub rate: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySpec {
    #[serde(default = "default_nl")]
    pub name: String,
    /// Coefficient of the `linear` nonlinearity.
    #[serde(default)]
    pub c: f64,
}

impl Default for NonlinearitySpec {
    fn default() -> Self {
        Self {
            name: default_nl(),
            c: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub omega: [f64; 2],
    pub omega1: [f64; 2],
    pub omega_prime: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    BackwardEuler,
    CrankNicolson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_samples")]
    pub validation_samples: usize,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            n: default_n(),
            m: default_m(),
            scheme: Scheme::default(),
            validation_samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SMode {
    /// `s` is the exponent of `ρ₀` at `T/2`.
    #[default]
    Normalized,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerSpec {
    None,
    Jacobi,
    #[default]
    TimeBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Control {
    #[serde(default = "one")]
    pub s: f64,
    #[serde(default)]
    pub s_mode: SMode,
    /// Chosen automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_margin: Option<f64>,
    #[serde(default)]
    pub preconditioner: PreconditionerSpec,
    #[serde(default)]
    pub tikhonov: f64,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_max")]
    pub cg_max_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_tol: Option<f64>,
}

impl Default for Control {
    fn default() -> Self {
        Self {
            s: 1.0,
            s_mode: SMode::default(),
            lambda: None,
            m_margin: None,
            preconditioner: PreconditionerSpec::default(),
            tikhonov: 0.0,
            cg_tol: default_cg_tol(),
            cg_max_iter: default_cg_max(),
            terminal_tol: None,
        }
    }
}

/// `u(x̄) = scale·(offset + Σ_k modes[k]·sin((k+1)π x̄/ℓ(0)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub modes: Vec<f64>,
    #[serde(default = "one")]
    pub scale: f64,
}

impl Profile {
    pub fn eval(&self, xi: f64) -> f64 {
        let s: f64 = self
            .modes
            .iter()
            .enumerate()
            .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * xi).sin())
            .sum();
        self.scale * (self.offset + s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    #[serde(default = "default_u0")]
    pub u0: Profile,
    /// Initial datum of the target trajectory; the null trajectory if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Profile>,
}

impl Default for Initial {
    fn default() -> Self {
        Self {
            u0: default_u0(),
            trajectory: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPoint {
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_tol_fp")]
    pub tol_fp: f64,
    #[serde(default = "one")]
    pub damping: f64,
    #[serde(default = "default_retry", skip_serializing_if = "Option::is_none")]
    pub retry_damping: Option<f64>,
    #[serde(default = "default_floor")]
    pub floor: f64,
    /// Run the smallness bisection on the shape of `u0 - trajectory`.
    #[serde(default)]
    pub smallness_search: bool,
    #[serde(default = "default_bisection")]
    pub bisection_steps: usize,
}

impl Default for FixedPoint {
    fn default() -> Self {
        Self {
            max_outer: default_max_outer(),
            tol_fp: default_tol_fp(),
            damping: 1.0,
            retry_damping: default_retry(),
            floor: default_floor(),
            smallness_search: false,
            bisection_steps: default_bisection(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "one")]
    pub data_scale: f64,
}

impl Default for Probe {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            data_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    /// Also write `DGC1` binary dumps of the state fields.
    #[serde(default)]
    pub binary: bool,
    #[serde(default = "default_table")]
    pub table_samples: usize,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            binary: false,
            table_samples: default_table(),
        }
    }
}

/// Axes of a parameter sweep; an empty axis keeps the base value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub m: Vec<usize>,
    #[serde(default)]
    pub alpha: Vec<f64>,
}

fn one() -> f64 {
    1.0
}
fn default_nl() -> String {
    "linear".into()
}
fn default_n() -> usize {
    128
}
fn default_m() -> usize {
    256
}
fn default_samples() -> usize {
    degctrl::model::DEFAULT_SAMPLES
}
fn default_cg_tol() -> f64 {
    1e-10
}
fn default_cg_max() -> usize {
    3000
}
fn default_u0() -> Profile {
    Profile {
        offset: 0.0,
        modes: vec![1.0],
        scale: 1.0,
    }
}
fn default_max_outer() -> usize {
    50
}
fn default_tol_fp() -> f64 {
    1e-8
}
fn default_retry() -> Option<f64> {
    Some(0.5)
}
fn default_floor() -> f64 {
    1e-6
}
fn default_bisection() -> usize {
    8
}
fn default_trials() -> usize {
    100
}
fn default_table() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| text[..s.start].matches('\n').count() + 1),
            message: e.message().trim().to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 64 bits of the SHA-256 of the canonical serialization.
    pub fn hash(&self) -> u64 {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        u64::from_be_bytes(digest[..8].try_into().unwrap())
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[coefficient]
alpha = 0.5

[motion]
rate = 1.0
horizon = 1.0

[geometry]
omega = [0.3, 0.7]
omega1 = [0.35, 0.65]
omega_prime = [0.4, 0.6]
"#;

    #[test]
    fn defaults_fill_in() {
        let c = Config::parse(MINIMAL).unwrap();
        assert_eq!(c.discretization.n, 128);
        assert_eq!(c.control.preconditioner, PreconditionerSpec::TimeBlock);
        assert_eq!(c.initial.u0.modes, vec![1.0]);
        assert_eq!(Config::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_field_reports_line() {
        let text = MINIMAL.replace("rate = 1.0", "rate = 1.0\nspeed = 2.0");
        let e = Config::parse(&text).unwrap_err();
        assert_eq!(e.line, Some(7));
        assert!(e.message.contains("speed"), "{}", e.message);
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.control.s = 2.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), Config::parse(MINIMAL).unwrap().hash());
    }
}
