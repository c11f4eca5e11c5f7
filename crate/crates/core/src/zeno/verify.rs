use std::time::Instant;

use log::{debug, info};
use serde::Serialize;

use super::program::assemble;
use super::{post_verify, Formulation, SynthesisConfig, ZenoCertificate, ZenoError};
use crate::hybrid::HybridSystem;
use crate::sos::SosOutcome;

/// Identity residual above which a solver optimum is not trusted.
pub const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Certified,
    NoCertificate,
    Inconclusive,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Certified => "certified",
            Outcome::NoCertificate => "no-certificate",
            Outcome::Inconclusive => "inconclusive",
        }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Certified => 0,
            Outcome::NoCertificate => 2,
            Outcome::Inconclusive => 3,
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttemptOutcome {
    Feasible,
    Infeasible,
    Inconclusive,
    /// The solver returned a solution that failed the residual or sampling
    /// checks.
    Rejected,
}

#[derive(Debug, Clone, Serialize)]
pub struct Attempt {
    pub degrees: Vec<u32>,
    pub r: Vec<f64>,
    pub outcome: AttemptOutcome,
    pub status: String,
    pub iterations: usize,
    pub solve_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub outcome: Outcome,
    pub formulation: &'static str,
    pub attempts: Vec<Attempt>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<ZenoCertificate>,
}

impl Verification {
    pub fn solve_seconds(&self) -> f64 {
        self.attempts.iter().map(|a| a.solve_seconds).sum()
    }

    pub fn iterations(&self) -> usize {
        self.attempts.iter().map(|a| a.iterations).sum()
    }
}

/// Searches for a certificate over the `r` grid (and optionally increasing
/// degrees). A solution is only returned once its residuals and the
/// sampling checks pass.
pub fn verify(system: &HybridSystem, config: &SynthesisConfig) -> Result<Verification, ZenoError> {
    let parametric = match config.formulation {
        Formulation::Auto => system.has_parameters(),
        Formulation::Nominal if system.has_parameters() => return Err(ZenoError::HasParameters),
        Formulation::Nominal => false,
        Formulation::Parametric => true,
    };
    let formulation = if parametric { "fp2" } else { "fp1" };
    let combos = config.r.combinations(system.modes.len())?;
    let mut degrees = config.degrees_for(system)?;
    let mut attempts = Vec::new();
    let mut all_infeasible = true;
    loop {
        for r in &combos {
            let fp = assemble(system, config, &degrees, r, parametric)?;
            let start = Instant::now();
            let outcome = fp.program.compile_and_solve(&config.sdp)?;
            let elapsed = start.elapsed();
            let sdp = outcome.sdp();
            let mut attempt = Attempt {
                degrees: degrees.clone(),
                r: r.clone(),
                outcome: AttemptOutcome::Inconclusive,
                status: format!("{:?}", sdp.status),
                iterations: sdp.iterations,
                solve_seconds: elapsed.as_secs_f64(),
                note: None,
            };
            debug!(
                "degrees {degrees:?} r {r:?}: {} after {} iterations ({:.2}s, {} rows)",
                attempt.status,
                attempt.iterations,
                attempt.solve_seconds,
                fp.program.row_count()
            );
            match outcome {
                SosOutcome::Feasible(sol) => {
                    let mut cert = fp.certificate(system, &sol, elapsed);
                    cert.sampling = post_verify(system, &cert, &config.sampling());
                    let residual = cert.multipliers.max_identity_residual;
                    if residual > RESIDUAL_TOL {
                        attempt.outcome = AttemptOutcome::Rejected;
                        attempt.note = Some(format!("identity residual {residual:.3e}"));
                    } else if !cert.sampling.passed() {
                        attempt.outcome = AttemptOutcome::Rejected;
                        attempt.note = Some(format!("{} sampled violations", cert.sampling.violations()));
                    } else {
                        attempt.outcome = AttemptOutcome::Feasible;
                        attempts.push(attempt);
                        info!("certified with r {r:?} at degrees {degrees:?}");
                        return Ok(Verification {
                            outcome: Outcome::Certified,
                            formulation,
                            attempts,
                            certificate: Some(cert),
                        });
                    }
                    all_infeasible = false;
                }
                SosOutcome::Infeasible { .. } => attempt.outcome = AttemptOutcome::Infeasible,
                SosOutcome::Inconclusive { .. } => all_infeasible = false,
            }
            attempts.push(attempt);
        }
        let top = degrees.iter().copied().max().unwrap_or(0);
        if !config.escalate || top + 2 > config.max_degree {
            break;
        }
        degrees.iter_mut().for_each(|d| *d += 2);
        info!("escalating to degrees {degrees:?}");
    }
    Ok(Verification {
        outcome: if all_infeasible {
            Outcome::NoCertificate
        } else {
            Outcome::Inconclusive
        },
        formulation,
        attempts,
        certificate: None,
    })
}
