use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{verify, Outcome, SynthesisConfig, Verification, ZenoError};
use crate::hybrid::SystemFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub value: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct BisectResult {
    pub name: String,
    pub direction: Direction,
    pub bracket: (f64, f64),
    /// Best certified value, if any end of the bracket was certified.
    pub bound: Option<f64>,
    /// Final `(certified, not certified)` pair.
    pub final_bracket: Option<(f64, f64)>,
    pub probes: Vec<Probe>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub values: Vec<f64>,
    pub outcome: Outcome,
    pub solve_seconds: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub names: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.names.clone();
        header.extend(["verdict", "solve_time_seconds", "sdp_iterations"].map(String::from));
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec: Vec<String> = row.values.iter().map(|v| v.to_string()).collect();
            rec.push(row.outcome.as_str().into());
            rec.push(format!("{:.6}", row.solve_seconds));
            rec.push(row.iterations.to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn count(&self, outcome: Outcome) -> usize {
        self.rows.iter().filter(|r| r.outcome == outcome).count()
    }
}

/// Builds the system at `point`: names that are constants of the file are
/// overridden, names that are parameters are fixed numerically.
fn run_point(file: &SystemFile, point: &[(String, f64)], config: &SynthesisConfig) -> Result<Verification, ZenoError> {
    let (params, consts): (Vec<_>, Vec<_>) = point.iter().cloned().partition(|(n, _)| file.parameters.contains(n));
    let mut system = file.build(&consts)?;
    if !params.is_empty() {
        system = system.instantiate(&params)?;
    }
    verify(&system, config)
}

/// Runs [`verify`] at every point concurrently; rows keep the point order.
pub fn sweep(file: &SystemFile, config: &SynthesisConfig, points: &[Vec<(String, f64)>]) -> SweepResult {
    let names = points
        .first()
        .map(|p| p.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();
    let rows = points
        .par_iter()
        .map(|point| {
            let values = point.iter().map(|&(_, v)| v).collect();
            match run_point(file, point, config) {
                Ok(v) => SweepRow {
                    values,
                    outcome: v.outcome,
                    solve_seconds: v.solve_seconds(),
                    iterations: v.iterations(),
                    note: None,
                },
                Err(e) => {
                    warn!("sweep point {point:?}: {e}");
                    SweepRow {
                        values,
                        outcome: Outcome::Inconclusive,
                        solve_seconds: 0.0,
                        iterations: 0,
                        note: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    SweepResult { names, rows }
}

/// Cartesian product of the axes; the last axis varies fastest.
pub fn grid_points(axes: &[(String, Vec<f64>)]) -> Vec<Vec<(String, f64)>> {
    let mut out: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for (name, values) in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push((name.clone(), v));
                    p
                })
            })
            .collect();
    }
    out
}

/// `count` points drawn uniformly from the given ranges.
pub fn monte_carlo_points(ranges: &[(String, f64, f64)], count: usize, seed: u64) -> Vec<Vec<(String, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            ranges
                .iter()
                .map(|(n, lo, hi)| (n.clone(), if hi > lo { rng.gen_range(*lo..=*hi) } else { *lo }))
                .collect()
        })
        .collect()
}

fn probe(file: &SystemFile, name: &str, value: f64, config: &SynthesisConfig) -> Result<Probe, ZenoError> {
    let system = file.build(&[(name.to_string(), value)])?;
    let outcome = verify(&system, config)?.outcome;
    info!("{name} = {value}: {outcome}");
    Ok(Probe { value, outcome })
}

/// Bisection on the constant `name` over `bracket = (low, high)`, assuming
/// certificates exist on one side of a threshold.
pub fn bisect(
    file: &SystemFile,
    name: &str,
    config: &SynthesisConfig,
    bracket: (f64, f64),
    direction: Direction,
    tol: f64,
) -> Result<BisectResult, ZenoError> {
    let (lo, hi) = bracket;
    if !(lo < hi) || !(tol > 0.0) {
        return Err(ZenoError::Config(format!("bad bracket ({lo}, {hi}) or tolerance {tol}")));
    }
    let (mut good, mut bad) = match direction {
        Direction::Maximize => (lo, hi),
        Direction::Minimize => (hi, lo),
    };
    let mut result = BisectResult {
        name: name.to_string(),
        direction,
        bracket,
        bound: None,
        final_bracket: None,
        probes: vec![probe(file, name, good, config)?],
        note: None,
    };
    if result.probes[0].outcome != Outcome::Certified {
        result.note = Some(format!("no certificate at the {} end {good}", side(direction)));
        return Ok(result);
    }
    result.probes.push(probe(file, name, bad, config)?);
    if result.probes[1].outcome == Outcome::Certified {
        result.note = Some("degenerate bracket: both ends certified".into());
        result.bound = Some(bad);
        return Ok(result);
    }
    let mut probes = std::mem::take(&mut result.probes);
    while (good - bad).abs() > tol {
        let mid = 0.5 * (good + bad);
        let p = probe(file, name, mid, config)?;
        if p.outcome == Outcome::Certified {
            good = mid;
        } else {
            bad = mid;
        }
        probes.push(p);
    }
    check_monotone(name, &probes, direction)?;
    result.bound = Some(good);
    result.final_bracket = Some((good, bad));
    if probes.iter().any(|p| p.outcome == Outcome::Inconclusive) {
        result.note = Some("inconclusive probes were treated as not certified".into());
    }
    result.probes = probes;
    Ok(result)
}

fn side(direction: Direction) -> &'static str {
    match direction {
        Direction::Maximize => "lower",
        Direction::Minimize => "upper",
    }
}

/// No certified probe may lie beyond a refuted one in the search direction.
fn check_monotone(name: &str, probes: &[Probe], direction: Direction) -> Result<(), ZenoError> {
    let beyond = |a: f64, b: f64| match direction {
        Direction::Maximize => a > b,
        Direction::Minimize => a < b,
    };
    let offending: Vec<Probe> = probes
        .iter()
        .filter(|c| c.outcome == Outcome::Certified)
        .flat_map(|c| {
            probes
                .iter()
                .filter(|n| n.outcome == Outcome::NoCertificate && beyond(c.value, n.value))
                .flat_map(move |n| [c.clone(), n.clone()])
        })
        .collect();
    if offending.is_empty() {
        Ok(())
    } else {
        Err(ZenoError::NonMonotone {
            name: name.to_string(),
            probes: offending,
        })
    }
}
