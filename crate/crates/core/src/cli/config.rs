use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::levy::LevyModel;
use crate::mc::{Estimator, McConfig};
use crate::omega::{BankruptcyRate, Piece};
use crate::volterra::SolverConfig;

pub const PRESETS: &[&str] = &["paper-parisian", "paper-step", "paper-affine"];

fn default_phi() -> f64 {
    1.5
}

fn default_a() -> f64 {
    -1.0
}

/// A single bankruptcy rate function.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum OmegaSpec {
    Parisian {
        #[serde(default = "default_phi")]
        phi: f64,
        #[serde(default = "default_a")]
        a: f64,
    },
    Step {
        n: usize,
        #[serde(default = "default_phi")]
        phi: f64,
        #[serde(default = "default_a")]
        a: f64,
    },
    Affine {
        m: f64,
        #[serde(default = "default_phi")]
        phi: f64,
        #[serde(default = "default_a")]
        a: f64,
    },
    Pieces {
        breakpoints: Vec<f64>,
        pieces: Vec<Piece>,
        phi: f64,
    },
}

impl Default for OmegaSpec {
    fn default() -> Self {
        OmegaSpec::Parisian {
            phi: default_phi(),
            a: default_a(),
        }
    }
}

impl OmegaSpec {
    pub fn build(&self) -> Result<BankruptcyRate> {
        match self {
            OmegaSpec::Parisian { phi, a } => BankruptcyRate::parisian_from(*a, *phi),
            OmegaSpec::Step { n, phi, a } => BankruptcyRate::step_family(*n, *a, *phi),
            OmegaSpec::Affine { m, phi, a } => BankruptcyRate::affine_family(*m, *a, *phi),
            OmegaSpec::Pieces {
                breakpoints,
                pieces,
                phi,
            } => BankruptcyRate::new(breakpoints.clone(), pieces.clone(), *phi, 0.0),
        }
    }

    pub fn label(&self) -> String {
        match self {
            OmegaSpec::Parisian { .. } => "parisian".into(),
            OmegaSpec::Step { n, .. } => format!("step_n={n}"),
            OmegaSpec::Affine { m, .. } => format!("affine_m={m}"),
            OmegaSpec::Pieces { .. } => "pieces".into(),
        }
    }

    /// The family parameter, when there is one.
    pub fn param(&self) -> Option<f64> {
        match self {
            OmegaSpec::Step { n, .. } => Some(*n as f64),
            OmegaSpec::Affine { m, .. } => Some(*m),
            _ => None,
        }
    }
}

/// A family of rate functions swept over one parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepSpec {
    Step {
        n: Vec<usize>,
        #[serde(default = "default_phi")]
        phi: f64,
        #[serde(default = "default_a")]
        a: f64,
    },
    Affine {
        m: Vec<f64>,
        #[serde(default = "default_phi")]
        phi: f64,
        #[serde(default = "default_a")]
        a: f64,
    },
}

impl SweepSpec {
    pub fn entries(&self) -> Vec<OmegaSpec> {
        match self {
            SweepSpec::Step { n, phi, a } => n
                .iter()
                .map(|&n| OmegaSpec::Step { n, phi: *phi, a: *a })
                .collect(),
            SweepSpec::Affine { m, phi, a } => m
                .iter()
                .map(|&m| OmegaSpec::Affine { m, phi: *phi, a: *a })
                .collect(),
        }
    }

    /// Expected direction of `b*` along the sweep: `true` for
    /// nonincreasing.
    pub fn expects_nonincreasing(&self) -> bool {
        matches!(self, SweepSpec::Step { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub dt: f64,
    pub n_paths: usize,
    pub weight_floor: f64,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    /// Starting points; the optimal barrier is always appended.
    pub x0: Vec<f64>,
}

impl Default for McSection {
    fn default() -> Self {
        let base = McConfig::default();
        McSection {
            dt: base.dt,
            n_paths: base.n_paths,
            weight_floor: base.weight_floor,
            seed: base.seed,
            estimators: vec![Estimator::Discounted],
            x0: vec![0.0, 0.5],
        }
    }
}

impl McSection {
    pub fn config(&self, estimator: Estimator) -> McConfig {
        McConfig {
            dt: self.dt,
            n_paths: self.n_paths,
            weight_floor: self.weight_floor,
            seed: self.seed,
            estimator,
        }
    }
}

/// Sampling of the emitted curves.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub step: f64,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub prefix: Option<String>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            step: 0.01,
            x_min: None,
            x_max: None,
            prefix: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: LevyModel,
    pub q: f64,
    pub omega: OmegaSpec,
    pub sweep: Option<SweepSpec>,
    pub solver: SolverConfig,
    pub mc: McSection,
    pub output: OutputSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: LevyModel::reference(),
            q: 0.05,
            omega: OmegaSpec::default(),
            sweep: None,
            solver: SolverConfig::default(),
            mc: McSection::default(),
            output: OutputSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Option<RunConfig> {
        let base = RunConfig::default();
        match name {
            "paper-parisian" => Some(base),
            "paper-step" => Some(RunConfig {
                sweep: Some(SweepSpec::Step {
                    n: (0..=5).collect(),
                    phi: default_phi(),
                    a: default_a(),
                }),
                ..base
            }),
            "paper-affine" => Some(RunConfig {
                sweep: Some(SweepSpec::Affine {
                    m: vec![-1.5, -1.0, -0.5, 0.0],
                    phi: default_phi(),
                    a: default_a(),
                }),
                ..base
            }),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> std::result::Result<RunConfig, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Rate functions to process, in output order.
    pub fn entries(&self) -> Vec<OmegaSpec> {
        match &self.sweep {
            Some(s) => s.entries(),
            None => vec![self.omega.clone()],
        }
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// 64-bit FNV-1a of the canonical JSON form.
    pub fn hash(&self) -> u64 {
        fnv1a(self.canonical_json().as_bytes())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
