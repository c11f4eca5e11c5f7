use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::program::equilibrium;
use super::ZenoCertificate;
use crate::hybrid::{HybridSystem, SemialgebraicSet, MEMBERSHIP_TOL};

/// Bounds of the scan used to find the extent of an unbounded parameter set.
const PARAM_SCAN: f64 = 20.0;
/// Width kept on the bounded side of a half-infinite parameter range.
const PARAM_SPAN: f64 = 10.0;
/// Tolerance of `V_q(z_q) = 0`.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingOptions {
    pub samples: usize,
    pub cert_margin: f64,
    pub seed: u64,
}

/// Worst value of one sampled condition; `>= -margin` passes.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CheckSummary {
    pub worst: f64,
    pub at: Vec<f64>,
    pub violations: usize,
}

impl CheckSummary {
    fn new() -> Self {
        CheckSummary {
            worst: f64::INFINITY,
            ..Default::default()
        }
    }

    fn record(&mut self, value: f64, point: &[f64], margin: f64) {
        if value < self.worst || !value.is_finite() {
            self.worst = value;
            self.at = point.to_vec();
        }
        if !(value >= -margin) {
            self.violations += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSampling {
    pub mode: String,
    pub accepted: usize,
    pub attempts: usize,
    pub starved: bool,
    /// `V_q - alpha |x - z_q|^2`
    pub positivity: CheckSummary,
    /// `-grad V_q . f_q - gamma`
    pub decrease: CheckSummary,
    /// Largest `|V_q(z_q)|` over the sampled parameters.
    pub equilibrium_value: f64,
    pub equilibrium_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeSampling {
    pub edge: usize,
    pub source: String,
    pub target: String,
    pub accepted: usize,
    pub lines: usize,
    pub starved: bool,
    /// `r_q V_q - V_q' o phi_e` on the guard.
    pub reset: CheckSummary,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SamplingReport {
    pub samples: usize,
    pub cert_margin: f64,
    pub modes: Vec<ModeSampling>,
    pub edges: Vec<EdgeSampling>,
}

impl SamplingReport {
    pub fn violations(&self) -> usize {
        self.modes
            .iter()
            .map(|m| m.positivity.violations + m.decrease.violations + m.equilibrium_violations)
            .sum::<usize>()
            + self.edges.iter().map(|e| e.reset.violations).sum::<usize>()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }

    pub fn starved(&self) -> bool {
        self.modes.iter().any(|m| m.starved) || self.edges.iter().any(|e| e.starved)
    }
}

/// First `t > 0` at which `z + sign * t * e_i` leaves `set`, if any within
/// `1e3`.
pub(crate) fn axis_extent(set: &SemialgebraicSet, z: &[f64], params: &[f64], i: usize, sign: f64) -> Option<f64> {
    let inside = |t: f64| {
        let mut x = z.to_vec();
        x[i] += sign * t;
        x.extend_from_slice(params);
        set.inequalities.iter().all(|g| g.eval(&x) >= 0.0)
    };
    let mut lo = 0.0;
    let mut t = 1e-2;
    while t <= 1e3 {
        if !inside(t) {
            let mut hi = t;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if inside(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(hi);
        }
        lo = t;
        t *= 1.25;
    }
    None
}

/// A box around the parameter set, one `(low, high)` per parameter, found
/// by scanning each parameter with the others at zero. Half-infinite ranges
/// are cut to a finite width.
pub fn parameter_box(system: &HybridSystem) -> Vec<(f64, f64)> {
    let n = system.state_dim();
    let np = system.parameters.len();
    let steps = 800;
    (0..np)
        .map(|j| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for k in 0..=steps {
                let v = -PARAM_SCAN + 2.0 * PARAM_SCAN * k as f64 / steps as f64;
                let mut x = vec![0.0; n + np];
                x[n + j] = v;
                if system.parameter_set.contains(&x, 0.0) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if lo > hi {
                return (-1.0, 1.0);
            }
            // refine the scan edges where the set is bounded
            let inside = |v: f64| {
                let mut x = vec![0.0; n + np];
                x[n + j] = v;
                system.parameter_set.contains(&x, 0.0)
            };
            let step = 2.0 * PARAM_SCAN / steps as f64;
            let edge = |mut a: f64, mut b: f64| {
                // a inside, b outside
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if inside(m) {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                a
            };
            let open_lo = lo <= -PARAM_SCAN;
            let open_hi = hi >= PARAM_SCAN;
            if !open_lo {
                lo = edge(lo, lo - step);
            }
            if !open_hi {
                hi = edge(hi, hi + step);
            }
            match (open_lo, open_hi) {
                (true, false) => (hi - PARAM_SPAN, hi),
                (false, true) => (lo, lo + PARAM_SPAN),
                _ => (lo, hi),
            }
        })
        .collect()
}

fn sample_box(system: &HybridSystem, q: usize, params: &[f64], fallback: f64) -> Vec<(f64, f64)> {
    let z = equilibrium(system, q);
    let set = &system.modes[q].neighborhood;
    (0..system.state_dim())
        .map(|i| {
            let lo = axis_extent(set, &z, params, i, -1.0).unwrap_or(fallback);
            let hi = axis_extent(set, &z, params, i, 1.0).unwrap_or(fallback);
            (z[i] - lo, z[i] + hi)
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, b: &[(f64, f64)]) -> Vec<f64> {
    b.iter()
        .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
        .collect()
}

fn in_parameter_set(system: &HybridSystem, full: &[f64]) -> bool {
    system.parameter_set.contains(full, 0.0)
}

/// Draws a parameter vector from `P` by rejection from its box.
pub(crate) fn draw_parameters(system: &HybridSystem, rng: &mut ChaCha8Rng, pbox: &[(f64, f64)]) -> Option<Vec<f64>> {
    let n = system.state_dim();
    for _ in 0..1000 {
        let p = uniform(rng, pbox);
        let mut full = vec![0.0; n];
        full.extend_from_slice(&p);
        if in_parameter_set(system, &full) {
            return Some(p);
        }
    }
    None
}

/// Checks a certificate at random points of each `W_q` (times `P`) and on
/// the guard surfaces.
pub fn post_verify(system: &HybridSystem, cert: &ZenoCertificate, opts: &SamplingOptions) -> SamplingReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = system.state_dim();
    let margin = opts.cert_margin;
    let pbox = parameter_box(system);
    let mid: Vec<f64> = pbox.iter().map(|&(a, b)| 0.5 * (a + b)).collect();
    let fallback = cert.scale;
    let v = &cert.functions;
    let r = &cert.r_values;
    let mut report = SamplingReport {
        samples: opts.samples,
        cert_margin: margin,
        ..Default::default()
    };

    for (q, mode) in system.modes.iter().enumerate() {
        let z = equilibrium(system, q);
        let bx = sample_box(system, q, &mid, fallback);
        let grad = v[q].gradient();
        let mut pos = CheckSummary::new();
        let mut dec = CheckSummary::new();
        let mut eq_worst: f64 = 0.0;
        let mut eq_bad = 0;
        let mut accepted = 0;
        let mut attempts = 0;
        let mut point = vec![0.0; n + pbox.len()];

        let eq_checks = if pbox.is_empty() { 1 } else { 16 };
        for _ in 0..eq_checks {
            let Some(p) = draw_parameters(system, &mut rng, &pbox) else {
                break;
            };
            point[..n].copy_from_slice(&z);
            point[n..].copy_from_slice(&p);
            let val = v[q].eval(&point).abs();
            eq_worst = eq_worst.max(val);
            if !(val <= EQUILIBRIUM_TOL) {
                eq_bad += 1;
            }
        }

        while accepted < opts.samples && attempts < opts.samples.saturating_mul(200) {
            attempts += 1;
            let x = uniform(&mut rng, &bx);
            let Some(p) = draw_parameters(system, &mut rng, &pbox) else {
                break;
            };
            point[..n].copy_from_slice(&x);
            point[n..].copy_from_slice(&p);
            if !mode.in_neighborhood(&point, 0.0) {
                continue;
            }
            accepted += 1;
            let d2: f64 = x.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
            pos.record(v[q].eval(&point) - cert.alpha * d2, &point, margin);
            let f = mode.field.eval(&point);
            let vdot: f64 = (0..n).map(|i| grad.get(i).eval(&point) * f[i]).sum();
            dec.record(-vdot - cert.gamma, &point, margin);
        }
        report.modes.push(ModeSampling {
            mode: mode.id.clone(),
            accepted,
            attempts,
            starved: accepted < opts.samples,
            positivity: pos,
            decrease: dec,
            equilibrium_value: eq_worst,
            equilibrium_violations: eq_bad,
        });
    }

    for (ei, e) in system.edges.iter().enumerate() {
        let q = e.source;
        let mode = &system.modes[q];
        let bx = sample_box(system, q, &mid, fallback);
        let diag = bx.iter().map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        let mut check = CheckSummary::new();
        let mut accepted = 0;
        let mut lines = 0;
        let budget = opts.samples.saturating_mul(50);
        let mut point = vec![0.0; n + pbox.len()];
        while accepted < opts.samples && lines < budget {
            lines += 1;
            let a = uniform(&mut rng, &bx);
            let Some(p) = draw_parameters(system, &mut rng, &pbox) else {
                break;
            };
            let mut d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let norm = d.iter().map(|t| t * t).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            d.iter_mut().for_each(|t| *t /= norm);
            point[n..].copy_from_slice(&p);
            let h_at = |t: f64, point: &mut Vec<f64>| {
                for i in 0..n {
                    point[i] = a[i] + t * d[i];
                }
                e.guard_equality.eval(point)
            };
            let segments = 64;
            let mut t0 = -diag;
            let mut h0 = h_at(t0, &mut point);
            for k in 1..=segments {
                let t1 = -diag + 2.0 * diag * k as f64 / segments as f64;
                let h1 = h_at(t1, &mut point);
                if h0 == 0.0 || h0.signum() != h1.signum() {
                    let (mut lo, mut hi, hlo) = (t0, t1, h0);
                    if h0 != 0.0 {
                        for _ in 0..200 {
                            let m = 0.5 * (lo + hi);
                            if m <= lo || m >= hi {
                                break;
                            }
                            let hm = h_at(m, &mut point);
                            if hm == 0.0 {
                                lo = m;
                                hi = m;
                                break;
                            }
                            if hm.signum() == hlo.signum() {
                                lo = m;
                            } else {
                                hi = m;
                            }
                        }
                    }
                    h_at(0.5 * (lo + hi), &mut point);
                    let ok = e.guard_inequalities.iter().all(|g| g.eval(&point) >= -MEMBERSHIP_TOL)
                        && mode.in_neighborhood(&point, MEMBERSHIP_TOL);
                    if ok {
                        accepted += 1;
                        let mut img = e.reset.eval(&point);
                        img.extend_from_slice(&point[n..]);
                        let val = r[q] * v[q].eval(&point) - v[e.target].eval(&img);
                        check.record(val, &point, margin);
                    }
                }
                t0 = t1;
                h0 = h1;
            }
        }
        report.edges.push(EdgeSampling {
            edge: ei,
            source: mode.id.clone(),
            target: system.modes[e.target].id.clone(),
            accepted,
            lines,
            starved: accepted < opts.samples,
            reset: check,
        });
    }
    report
}
