//! Zeno stability certificates: feasibility programs over the hybrid data,
//! the verification driver with sampling checks, and parameter studies.

mod program;
mod sample;
mod study;
mod verify;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::hybrid::{HybridSystem, SystemError};
use crate::sdp::SdpOptions;
use crate::sos::{PolyRecord, SosCertificate, SosError};
use crate::Polynomial;

pub use program::{build_fp1, build_fp2, state_scale, FeasibilityProgram};
pub use sample::{parameter_box, post_verify, CheckSummary, EdgeSampling, ModeSampling, SamplingOptions, SamplingReport};
pub use study::{
    bisect, grid_points, monte_carlo_points, sweep, BisectResult, Direction, Probe, SweepResult, SweepRow,
};
pub use verify::{verify, Attempt, AttemptOutcome, Outcome, Verification};

/// Which feasibility problem to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Formulation {
    /// FP2 when the system declares parameters, FP1 otherwise.
    #[default]
    Auto,
    Nominal,
    Parametric,
}

/// How the contraction constants `r_q` of the reset constraints are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum RSearch {
    /// Each value is tried in order for one mode at a time, with every other
    /// mode at `r = 1`.
    Grid(Vec<f64>),
    /// One value per mode.
    Fixed(Vec<f64>),
    /// Not supported: `r_q V_q` would be bilinear.
    Decision,
}

impl Default for RSearch {
    fn default() -> Self {
        RSearch::Grid(vec![0.99, 0.9, 0.75, 0.5, 0.25])
    }
}

impl RSearch {
    /// Every `r` vector the search visits for a system with `modes` modes.
    pub fn combinations(&self, modes: usize) -> Result<Vec<Vec<f64>>, ZenoError> {
        let check = |v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(ZenoError::Config(format!("r = {v} is outside (0, 1]")))
            }
        };
        match self {
            RSearch::Decision => Err(ZenoError::Bilinear),
            RSearch::Fixed(r) => {
                if r.len() != modes {
                    return Err(ZenoError::Config(format!("{} r values for {modes} modes", r.len())));
                }
                r.iter().try_for_each(|&v| check(v))?;
                if r.iter().all(|&v| v >= 1.0) {
                    return Err(ZenoError::Config("some mode needs r < 1".into()));
                }
                Ok(vec![r.clone()])
            }
            RSearch::Grid(values) => {
                let mut out = Vec::new();
                for &v in values {
                    check(v)?;
                    if v >= 1.0 {
                        continue;
                    }
                    for q in 0..modes {
                        let mut r = vec![1.0; modes];
                        r[q] = v;
                        out.push(r);
                    }
                }
                if out.is_empty() {
                    return Err(ZenoError::Config("the r grid has no value below 1".into()));
                }
                Ok(out)
            }
        }
    }
}

/// Degrees of the multipliers attached to constraint polynomials.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MultiplierPolicy {
    /// Upper bound on every multiplier degree; `None` fills up to the
    /// degree of the constrained expression.
    pub max_degree: Option<u32>,
    /// Also multiply pairwise products of constraints in the same group.
    pub schmudgen: bool,
}

#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    /// Degree of every `V_q` unless overridden in `mode_degrees`.
    pub degree: u32,
    pub mode_degrees: BTreeMap<String, u32>,
    pub multipliers: MultiplierPolicy,
    pub r: RSearch,
    pub alpha_floor: f64,
    pub gamma_floor: f64,
    pub sdp: SdpOptions<f64>,
    /// Retry at `degree + 2` after a failed search, up to `max_degree`.
    pub escalate: bool,
    pub max_degree: u32,
    pub samples: usize,
    pub cert_margin: f64,
    pub seed: u64,
    pub formulation: Formulation,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            degree: 4,
            mode_degrees: BTreeMap::new(),
            multipliers: MultiplierPolicy::default(),
            r: RSearch::default(),
            alpha_floor: 1e-4,
            gamma_floor: 0.0,
            sdp: SdpOptions::default(),
            escalate: false,
            max_degree: 12,
            samples: 2000,
            cert_margin: 1e-6,
            seed: 0,
            formulation: Formulation::Auto,
        }
    }
}

impl SynthesisConfig {
    pub fn with_degree(degree: u32) -> Self {
        SynthesisConfig {
            degree,
            ..Default::default()
        }
    }

    /// Lyapunov degree of each mode, in mode order.
    pub fn degrees_for(&self, system: &HybridSystem) -> Result<Vec<u32>, ZenoError> {
        for id in self.mode_degrees.keys() {
            if system.mode_index(id).is_none() {
                return Err(ZenoError::System(SystemError::UnknownMode(id.clone())));
            }
        }
        system
            .modes
            .iter()
            .map(|m| {
                let d = self.mode_degrees.get(&m.id).copied().unwrap_or(self.degree);
                if d < 2 || d % 2 == 1 {
                    Err(ZenoError::Config(format!("mode {}: degree {d} is not even and >= 2", m.id)))
                } else {
                    Ok(d)
                }
            })
            .collect()
    }

    pub fn sampling(&self) -> SamplingOptions {
        SamplingOptions {
            samples: self.samples,
            cert_margin: self.cert_margin,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum ZenoError {
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("the transition graph has no cycle, so no execution is Zeno")]
    Acyclic,
    #[error("no Zeno equilibrium is given")]
    MissingEquilibrium,
    #[error("the nominal problem needs a system without parameters")]
    HasParameters,
    #[error("r_q as a decision variable makes the reset constraint bilinear in (r_q, V_q)")]
    Bilinear,
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("feasibility is not monotone in `{name}`: {}", describe_probes(.probes))]
    NonMonotone { name: String, probes: Vec<Probe> },
}

fn describe_probes(probes: &[Probe]) -> String {
    probes
        .iter()
        .map(|p| format!("{}={}", p.value, p.outcome.as_str()))
        .collect::<Vec<_>>()
        .join(", ")
}

impl From<crate::poly::PolyError> for ZenoError {
    fn from(e: crate::poly::PolyError) -> Self {
        ZenoError::Sos(SosError::Poly(e))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SdpDiagnostics {
    pub status: String,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub rows: usize,
    pub solve_seconds: f64,
}

/// A solved and sampled feasibility program.
#[derive(Debug, Clone, Serialize)]
pub struct ZenoCertificate {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub formulation: &'static str,
    pub variables: Vec<String>,
    pub degrees: BTreeMap<String, u32>,
    /// `V_q` in the coordinates of the system file.
    pub lyapunov: BTreeMap<String, PolyRecord>,
    pub alpha: f64,
    pub gamma: f64,
    /// Whether `gamma` is positive beyond the solver tolerance.
    pub strict_decrease: bool,
    pub r: BTreeMap<String, f64>,
    /// States enter the program as `x = scale * y`; `multipliers` are in `y`.
    pub scale: f64,
    pub multipliers: SosCertificate,
    pub sdp: SdpDiagnostics,
    pub sampling: SamplingReport,
    #[serde(skip)]
    pub functions: Vec<Polynomial>,
    #[serde(skip)]
    pub r_values: Vec<f64>,
}

impl ZenoCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}
