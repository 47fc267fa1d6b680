//! Flat TOML configuration. Every key has a default; a report echoes the
//! fully resolved table, and replay demands every key back.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use hyperlab::graph::{TorusSpec, WeightedGraph};
use hyperlab::merminwagner::{Sampler, ScanSpec, SpectralBudget, SpinModel};
use hyperlab::tchain::McmcParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    SimulateVrjp,
    SampleHn,
    SampleH22,
    VerifySusy,
    VerifyDynkin,
    VerifyMw,
    ScanH,
}

impl Kind {
    pub const ALL: [Kind; 7] =
        [Kind::SimulateVrjp, Kind::SampleHn, Kind::SampleH22, Kind::VerifySusy, Kind::VerifyDynkin, Kind::VerifyMw, Kind::ScanH];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::SimulateVrjp => "simulate-vrjp",
            Kind::SampleHn => "sample-hn",
            Kind::SampleH22 => "sample-h22",
            Kind::VerifySusy => "verify-susy",
            Kind::VerifyDynkin => "verify-dynkin",
            Kind::VerifyMw => "verify-mw",
            Kind::ScanH => "scan-h",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Kind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Kind::ALL.iter().map(|k| k.as_str()).collect();
            format!("unknown experiment kind `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Single,
    TwoVertex,
    Path,
    Torus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    H22,
    Hn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Exact,
    Chain,
}

/// One flat table for every experiment kind; each kind reads the keys it
/// needs. Key order here is the order of the echo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub graph: GraphKind,
    /// Path length for `graph = "path"`.
    pub vertices: usize,
    pub beta: f64,
    pub h: f64,
    pub dim: usize,
    pub side: usize,
    pub model: ModelKind,
    /// Target dimension of `H^n`.
    pub n: usize,
    /// Two-point source and target vertices.
    pub a: usize,
    pub b: usize,
    /// Local-time decay of `g(b, l) = 1{b} e^{-<decay, l>}`; empty for `g = 1`.
    pub decay: Vec<f64>,
    pub sampler: SamplerKind,
    pub samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub replicas: usize,
    pub batches: usize,
    pub y_draws: usize,
    pub vrjp_samples: u64,
    pub inner_replicas: usize,
    /// Probe points of the geometry checks.
    pub points: usize,
    pub hs: Vec<f64>,
    pub sides: Vec<usize>,
    /// Largest scan side; 0 keeps the default cap for the dimension.
    pub max_side: usize,
    pub plateau_sigmas: f64,
    pub growth_sigmas: f64,
    /// `[h_hi, h_lo]` for the transience contrast; empty disables it.
    pub contrast: Vec<f64>,
    pub contrast_tol: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            graph: GraphKind::TwoVertex,
            vertices: 3,
            beta: 1.0,
            h: 1.0,
            dim: 2,
            side: 8,
            model: ModelKind::H22,
            n: 2,
            a: 0,
            b: 0,
            decay: Vec::new(),
            sampler: SamplerKind::Exact,
            samples: 4000,
            burn_in: 2000,
            thin: 4,
            replicas: 4,
            batches: 25,
            y_draws: 1,
            vrjp_samples: 200_000,
            inner_replicas: 8,
            points: 20,
            hs: vec![1.0, 0.3, 0.1, 0.03],
            sides: vec![8, 16, 32],
            max_side: 0,
            plateau_sigmas: 2.0,
            growth_sigmas: 4.0,
            contrast: Vec::new(),
            contrast_tol: 0.2,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(String),
    #[error("config: missing key `{0}` (a replayed config must list every key)")]
    Missing(String),
    #[error("config: {0}")]
    Invalid(String),
}

impl Config {
    /// Parse a user config: absent keys take defaults, unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))
    }

    /// Parse an echoed config: every key must be present.
    pub fn parse_strict(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
        let full = toml::Table::try_from(Config::default()).expect("config serializes");
        if let Some(k) = full.keys().find(|k| !table.contains_key(*k)) {
            return Err(ConfigError::Missing(k.clone()));
        }
        Self::parse(text)
    }

    /// The fully resolved table as TOML.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Shrink every budget for a smoke run.
    pub fn quick(&mut self) {
        self.samples = (self.samples / 10).max(400);
        self.burn_in /= 10;
        self.vrjp_samples = (self.vrjp_samples / 10).max(2000);
        self.inner_replicas = self.inner_replicas.min(4);
        self.points = self.points.min(5);
        self.sides.truncate(2);
    }

    pub fn validate(&self, kind: Kind) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("beta = {} must be finite and >= 0", self.beta));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return bad(format!("h = {} must be positive", self.h));
        }
        if self.samples == 0 || self.thin == 0 || self.replicas == 0 || self.batches == 0 || self.y_draws == 0 {
            return bad("samples, thin, replicas, batches and y_draws must be positive".into());
        }
        if self.vrjp_samples == 0 || self.inner_replicas == 0 || self.points == 0 {
            return bad("vrjp_samples, inner_replicas and points must be positive".into());
        }
        if self.model == ModelKind::Hn && self.n < 2 {
            return bad(format!("n = {} must be at least 2", self.n));
        }
        match kind {
            Kind::VerifySusy => {
                if !matches!(self.graph, GraphKind::Single | GraphKind::TwoVertex) {
                    return bad("verify-susy runs on graph = \"single\" or \"two_vertex\"".into());
                }
            }
            // Both always run on the torus keys; `graph` is ignored.
            Kind::VerifyMw | Kind::ScanH => {
                if kind == Kind::ScanH {
                    self.scan_spec().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                    if !(self.contrast.is_empty() || self.contrast.len() == 2) {
                        return bad("contrast takes [h_hi, h_lo] or []".into());
                    }
                } else {
                    self.torus().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                }
                self.budget().validate(self.spin_model()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
            _ => {
                let g = self.weighted_graph().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                let nv = g.n_vertices();
                if self.a >= nv || self.b >= nv {
                    return bad(format!("a = {}, b = {} out of range for {nv} vertices", self.a, self.b));
                }
                if !(self.decay.is_empty() || self.decay.len() == nv) {
                    return bad(format!("decay has {} entries for {nv} vertices", self.decay.len()));
                }
                if kind == Kind::SampleHn && self.model != ModelKind::Hn {
                    return bad("sample-hn needs model = \"hn\"".into());
                }
            }
        }
        self.mcmc().validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn weighted_graph(&self) -> hyperlab::Result<WeightedGraph> {
        match self.graph {
            GraphKind::Single => WeightedGraph::single_vertex(self.h),
            GraphKind::TwoVertex => WeightedGraph::two_vertex(self.beta, self.h),
            GraphKind::Path => WeightedGraph::path(self.vertices, self.beta, self.h),
            GraphKind::Torus => hyperlab::graph::build_torus(&self.torus()),
        }
    }

    pub fn torus(&self) -> TorusSpec {
        TorusSpec::nearest_neighbour(self.dim, self.side, self.beta, self.h)
    }

    pub fn mcmc(&self) -> McmcParams {
        McmcParams { burn_in_sweeps: self.burn_in, samples: self.samples, thin: self.thin, ..McmcParams::default() }
    }

    pub fn spin_model(&self) -> SpinModel {
        match self.model {
            ModelKind::H22 => SpinModel::H22,
            ModelKind::Hn => SpinModel::Hn(self.n),
        }
    }

    pub fn budget(&self) -> SpectralBudget {
        let sampler = match self.sampler {
            SamplerKind::Exact => Sampler::Exact,
            SamplerKind::Chain => Sampler::Chain { params: self.mcmc() },
        };
        SpectralBudget {
            sampler,
            samples: self.samples,
            y_draws: self.y_draws,
            replicas: self.replicas,
            batches_per_replica: self.batches,
        }
    }

    pub fn scan_spec(&self) -> hyperlab::Result<ScanSpec> {
        let spec = ScanSpec {
            plateau_sigmas: self.plateau_sigmas,
            max_side: (self.max_side > 0).then_some(self.max_side),
            ..ScanSpec::new(self.dim, self.beta, self.spin_model(), self.hs.clone(), self.sides.clone(), self.budget())
        };
        spec.validate()?;
        Ok(spec)
    }
}
