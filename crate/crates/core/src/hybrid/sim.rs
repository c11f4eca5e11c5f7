//! Event-detecting simulation of hybrid executions.
//!
//! Flows are integrated with the Dormand-Prince 5(4) pair and its dense
//! output. Every accepted step is sampled on a uniform grid and each outgoing
//! guard surface `h_{e,0}` is watched for a sign change in an oriented sense;
//! a change is refined by bisection on the interpolant. Transitions are
//! urgent: the first accepted crossing fires.

use log::warn;
use thiserror::Error;

use super::{HybridSystem, Mode, MEMBERSHIP_TOL};
use crate::poly::{Poly, PolyVec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Final time.
    pub horizon: f64,
    pub max_transitions: usize,
    /// Total accepted plus rejected integration steps.
    pub max_steps: usize,
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub event_tol: f64,
    pub membership_tol: f64,
    pub zeno_gap_tol: f64,
    /// Consecutive small gaps needed to declare Zeno behavior.
    pub zeno_window: usize,
    pub divergence_radius: f64,
    /// Interpolant samples per step used to bracket guard crossings.
    pub samples_per_step: usize,
    /// Stop with `LeftNeighborhood` once the state leaves `W_q`.
    pub stop_outside_neighborhood: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            horizon: 50.0,
            max_transitions: 100_000,
            max_steps: 5_000_000,
            rtol: 1e-10,
            atol: 1e-12,
            max_step: 0.1,
            event_tol: 1e-10,
            membership_tol: MEMBERSHIP_TOL,
            zeno_gap_tol: 1e-6,
            zeno_window: 8,
            divergence_radius: 1e6,
            samples_per_step: 16,
            stop_outside_neighborhood: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    ZenoDetected,
    Diverged,
    LeftNeighborhood,
    HorizonReached,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::ZenoDetected => "zeno-detected",
            Verdict::Diverged => "diverged",
            Verdict::LeftNeighborhood => "left-neighborhood",
            Verdict::HorizonReached => "horizon-reached",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One flow segment `[start, end]` in a single mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval<T> {
    pub mode: String,
    pub start: T,
    pub end: T,
    /// Step endpoints, including both interval ends.
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub edge: usize,
    pub time: T,
    /// State on the guard, before the reset.
    pub pre: Vec<T>,
    pub post: Vec<T>,
}

/// A simulated execution. Transition times are nondecreasing; a zero gap
/// occurs only when a mode is entered on a guard it cannot flow away from.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution<T> {
    pub intervals: Vec<Interval<T>>,
    pub transitions: Vec<Transition<T>>,
    pub verdict: Verdict,
    pub zeno_time: Option<T>,
    /// Gap window used for Zeno detection.
    pub zeno_window: usize,
}

impl<T: Scalar> Execution<T> {
    pub fn transition_times(&self) -> Vec<T> {
        self.transitions.iter().map(|t| t.time).collect()
    }

    /// `tau_{i+1} - tau_i` over consecutive transitions.
    pub fn gaps(&self) -> Vec<T> {
        self.transitions.windows(2).map(|w| w[1].time - w[0].time).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("initial state has {got} components, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("initial state is outside the domain of mode `{0}`")]
    InitialOutsideDomain(String),
    #[error("parameters: {0}")]
    Parameters(String),
    #[error("step size underflow at t = {t:e} (stiff or singular flow)")]
    StepUnderflow { t: f64 },
    #[error("step budget of {0} exhausted")]
    StepBudget(usize),
}

/// Accumulation time extrapolated from the last `window` gaps: the ratio
/// `rho` is their geometric-mean ratio and the tail is `g rho / (1 - rho)`.
/// `None` without enough transitions.
pub fn zeno_time<T: Scalar>(exec: &Execution<T>) -> Option<T> {
    if exec.verdict != Verdict::ZenoDetected {
        return None;
    }
    extrapolate(&exec.transition_times(), exec.zeno_window)
}

fn extrapolate<T: Scalar>(times: &[T], window: usize) -> Option<T> {
    let window = window.max(2);
    if times.len() < window + 1 {
        return None;
    }
    let last = *times.last()?;
    let gaps: Vec<T> = times[times.len() - window - 1..]
        .windows(2)
        .map(|w| w[1] - w[0])
        .collect();
    let first = gaps[0];
    let g = *gaps.last()?;
    if first <= T::zero() || g <= T::zero() {
        return Some(last);
    }
    let rho = (g / first).powf(T::one() / T::lit((window - 1) as f64));
    if rho < T::one() {
        Some(last + g * rho / (T::one() - rho))
    } else {
        Some(last)
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// A completed step with its continuous extension.
struct Step<T> {
    t0: T,
    h: T,
    y1: Vec<T>,
    k7: Vec<T>,
    r: [Vec<T>; 5],
}

impl<T: Scalar> Step<T> {
    fn at(&self, theta: T) -> Vec<T> {
        let one = T::one();
        let [r1, r2, r3, r4, r5] = &self.r;
        (0..r1.len())
            .map(|i| {
                r1[i] + theta * (r2[i] + (one - theta) * (r3[i] + theta * (r4[i] + (one - theta) * r5[i])))
            })
            .collect()
    }

    fn time(&self, theta: T) -> T {
        self.t0 + theta * self.h
    }
}

struct Integrator<'a, T: Scalar> {
    field: &'a PolyVec<T>,
    rtol: T,
    atol: T,
}

impl<T: Scalar> Integrator<'_, T> {
    fn f(&self, y: &[T]) -> Vec<T> {
        self.field.eval(y)
    }

    /// One trial step; returns the step and its scaled error norm.
    fn step(&self, t0: T, y0: &[T], k1: &[T], h: T) -> (Step<T>, T) {
        let n = y0.len();
        let mut k: Vec<Vec<T>> = vec![k1.to_vec()];
        for s in 1..7 {
            let y: Vec<T> = (0..n)
                .map(|i| {
                    let mut acc = T::zero();
                    for (j, kj) in k.iter().enumerate() {
                        acc = acc + T::lit(A[s][j]) * kj[i];
                    }
                    y0[i] + h * acc
                })
                .collect();
            k.push(self.f(&y));
        }
        // y1 is the stage-7 argument (FSAL)
        let y1: Vec<T> = (0..n)
            .map(|i| {
                let mut acc = T::zero();
                for (j, kj) in k.iter().take(6).enumerate() {
                    acc = acc + T::lit(A[6][j]) * kj[i];
                }
                y0[i] + h * acc
            })
            .collect();
        let mut err2 = T::zero();
        for i in 0..n {
            let mut e = T::zero();
            for (j, kj) in k.iter().enumerate() {
                e = e + T::lit(E[j]) * kj[i];
            }
            let sc = self.atol + self.rtol * y0[i].abs().max(y1[i].abs());
            let r = h * e / sc;
            err2 = err2 + r * r;
        }
        let err = (err2 / T::lit(n.max(1) as f64)).sqrt();
        let r1 = y0.to_vec();
        let r2: Vec<T> = (0..n).map(|i| y1[i] - y0[i]).collect();
        let r3: Vec<T> = (0..n).map(|i| h * k[0][i] - r2[i]).collect();
        let r4: Vec<T> = (0..n).map(|i| r2[i] - h * k[6][i] - r3[i]).collect();
        let r5: Vec<T> = (0..n)
            .map(|i| {
                let mut acc = T::zero();
                for (j, kj) in k.iter().enumerate() {
                    acc = acc + T::lit(D[j]) * kj[i];
                }
                h * acc
            })
            .collect();
        let k7 = k.pop().expect("seven stages");
        (
            Step {
                t0,
                h,
                y1,
                k7,
                r: [r1, r2, r3, r4, r5],
            },
            err,
        )
    }
}

/// Guard surface data for one outgoing edge.
struct Watch<T: Scalar> {
    edge: usize,
    h: Poly<T>,
    /// Orientation: the side the trajectory is on is `orient * h > 0`.
    orient: T,
    prev: T,
    /// Started on the surface, orientation taken from derivatives.
    on_surface: bool,
    /// Bound on the first step after entry.
    cap: Option<T>,
    inequalities: Vec<Poly<f64>>,
}

enum Flow<T> {
    Guard { watch: usize, time: T, state: Vec<T> },
    DomainExit,
    NeighborhoodExit,
    Diverged,
    Horizon,
}

struct Compiled<T: Scalar> {
    fields: Vec<PolyVec<T>>,
    guards: Vec<Poly<T>>,
    lie1: Vec<Poly<T>>,
    lie2: Vec<Poly<T>>,
    resets: Vec<PolyVec<T>>,
}

fn cast_vec<T: Scalar>(v: &PolyVec<f64>) -> PolyVec<T> {
    PolyVec::new(v.components().iter().map(|p| p.cast()).collect())
}

fn to_f64<T: Scalar>(x: &[T]) -> Vec<f64> {
    x.iter().map(|v| v.to_f64_lossy()).collect()
}

/// Simulates from `(mode, x0)` at time zero. `params` must assign every
/// parameter of a parameterized system.
pub fn simulate<T: Scalar>(
    system: &HybridSystem,
    mode: &str,
    x0: &[T],
    params: &[(String, f64)],
    opts: &SimOptions,
) -> Result<Execution<T>, SimError> {
    let sys = system
        .instantiate(params)
        .map_err(|e| SimError::Parameters(e.to_string()))?;
    if !sys.parameters.is_empty() {
        return Err(SimError::Parameters(format!(
            "no value for {}",
            sys.parameters.join(", ")
        )));
    }
    if !params.is_empty() {
        let mut point = vec![0.0; system.state_dim()];
        point.extend(
            system
                .parameters
                .iter()
                .map(|p| params.iter().find(|(n, _)| n == p).map_or(0.0, |v| v.1)),
        );
        if !system.parameter_set.contains(&point, opts.membership_tol) {
            warn!("parameter values lie outside the admissible parameter set");
        }
    }
    let n = sys.state_dim();
    if x0.len() != n {
        return Err(SimError::Dimension {
            expected: n,
            got: x0.len(),
        });
    }
    let q0 = sys
        .mode_index(mode)
        .ok_or_else(|| SimError::UnknownMode(mode.to_string()))?;
    if !sys.modes[q0].in_domain(&to_f64(x0), opts.membership_tol) {
        return Err(SimError::InitialOutsideDomain(mode.to_string()));
    }

    let fields: Vec<PolyVec<T>> = sys.modes.iter().map(|m| cast_vec(&m.field)).collect();
    let mut c = Compiled {
        guards: Vec::new(),
        lie1: Vec::new(),
        lie2: Vec::new(),
        resets: Vec::new(),
        fields,
    };
    for e in &sys.edges {
        let f = &sys.modes[e.source].field;
        let l1 = e.guard_equality.gradient().dot(f);
        let l2 = l1.gradient().dot(f);
        c.guards.push(e.guard_equality.cast());
        c.lie1.push(l1.cast());
        c.lie2.push(l2.cast());
        c.resets.push(cast_vec(&e.reset));
    }

    let mut exec = Execution {
        intervals: Vec::new(),
        transitions: Vec::new(),
        verdict: Verdict::HorizonReached,
        zeno_time: None,
        zeno_window: opts.zeno_window,
    };
    let mut budget = opts.max_steps;
    let mut small_gaps = 0usize;
    let mut q = q0;
    let mut t = T::zero();
    let mut x = x0.to_vec();
    let horizon = T::lit(opts.horizon);

    loop {
        let mut watches = entry_watches(&sys, &c, q, &x, opts);
        let entry_guard = entry_guard(&sys, &watches, &x, opts);
        let mut interval = Interval {
            mode: sys.modes[q].id.clone(),
            start: t,
            end: t,
            times: vec![t],
            states: vec![x.clone()],
        };
        let flow = integrate(
            &sys.modes[q],
            &c.fields[q],
            &mut watches,
            t,
            &x,
            horizon,
            opts,
            &mut budget,
            &mut interval,
        )?;
        let fired = match flow {
            Flow::Guard { watch, time, state } => Some((watches[watch].edge, time, state)),
            Flow::DomainExit => match entry_guard {
                Some(edge) => {
                    interval.times.truncate(1);
                    interval.states.truncate(1);
                    Some((edge, t, x.clone()))
                }
                None => {
                    exec.verdict = Verdict::LeftNeighborhood;
                    None
                }
            },
            Flow::NeighborhoodExit => {
                exec.verdict = Verdict::LeftNeighborhood;
                None
            }
            Flow::Diverged => {
                exec.verdict = Verdict::Diverged;
                None
            }
            Flow::Horizon => {
                exec.verdict = Verdict::HorizonReached;
                None
            }
        };
        let Some((edge, time, pre)) = fired else {
            interval.end = *interval.times.last().expect("nonempty");
            exec.intervals.push(interval);
            break;
        };
        if interval.times.last() != Some(&time) {
            interval.times.push(time);
            interval.states.push(pre.clone());
        }
        interval.end = time;
        exec.intervals.push(interval);

        let post = c.resets[edge].eval(&pre);
        if let Some(prev) = exec.transitions.last() {
            let gap = time - prev.time;
            if gap.to_f64_lossy() < opts.zeno_gap_tol {
                small_gaps += 1;
            } else {
                small_gaps = 0;
            }
        }
        exec.transitions.push(Transition {
            edge,
            time,
            pre,
            post: post.clone(),
        });
        q = sys.edges[edge].target;
        t = time;
        x = post;
        if small_gaps >= opts.zeno_window {
            exec.verdict = Verdict::ZenoDetected;
            break;
        }
        if exec.transitions.len() >= opts.max_transitions {
            exec.verdict = Verdict::HorizonReached;
            break;
        }
        if !x.iter().all(|v| v.is_finite()) || norm(&x) > T::lit(opts.divergence_radius) {
            exec.verdict = Verdict::Diverged;
            break;
        }
    }
    exec.zeno_time = zeno_time(&exec);
    Ok(exec)
}

fn norm<T: Scalar>(x: &[T]) -> T {
    x.iter().map(|v| *v * *v).sum::<T>().sqrt()
}

fn sign_of<T: Scalar>(v: T, tol: T) -> Option<T> {
    if v > tol {
        Some(T::one())
    } else if v < -tol {
        Some(-T::one())
    } else {
        None
    }
}

fn entry_watches<T: Scalar>(
    sys: &HybridSystem,
    c: &Compiled<T>,
    q: usize,
    x: &[T],
    opts: &SimOptions,
) -> Vec<Watch<T>> {
    let tiny = T::lit(1e-12);
    let etol = T::lit(opts.event_tol);
    sys.outgoing(q)
        .map(|(e, edge)| {
            let h0 = c.guards[e].eval(x);
            let l1 = c.lie1[e].eval(x);
            let l2 = c.lie2[e].eval(x);
            let (orient, on_surface) = match sign_of(h0, etol) {
                Some(s) => (s, false),
                None => {
                    let o = sign_of(l1, tiny).or_else(|| sign_of(l2, tiny)).unwrap_or(T::one());
                    (o, true)
                }
            };
            // leave the surface before the quadratic term can bring it back
            let cap = (on_surface && l1.abs() > tiny && l2.abs() > tiny).then(|| T::lit(0.1) * (l1 / l2).abs());
            Watch {
                edge: e,
                h: c.guards[e].clone(),
                orient,
                prev: if on_surface { T::zero() } else { orient * h0 },
                on_surface,
                cap,
                inequalities: edge.guard_inequalities.clone(),
            }
        })
        .collect()
}

/// First outgoing edge whose guard holds at the entry state.
fn entry_guard<T: Scalar>(sys: &HybridSystem, watches: &[Watch<T>], x: &[T], opts: &SimOptions) -> Option<usize> {
    let xf = to_f64(x);
    watches
        .iter()
        .map(|w| w.edge)
        .find(|&e| sys.edges[e].guard_set().contains(&xf, opts.membership_tol))
}

#[allow(clippy::too_many_arguments)]
fn integrate<T: Scalar>(
    mode: &Mode,
    field: &PolyVec<T>,
    watches: &mut [Watch<T>],
    t_start: T,
    x_start: &[T],
    horizon: T,
    opts: &SimOptions,
    budget: &mut usize,
    interval: &mut Interval<T>,
) -> Result<Flow<T>, SimError> {
    let integ = Integrator {
        field,
        rtol: T::lit(opts.rtol),
        atol: T::lit(opts.atol),
    };
    let mut t = t_start;
    let mut y = x_start.to_vec();
    let mut k1 = integ.f(&y);
    let max_step = T::lit(opts.max_step);
    let radius = T::lit(opts.divergence_radius);

    let mut h = {
        let d0 = norm(&y);
        let d1 = norm(&k1);
        let guess = if d0 > T::lit(1e-5) && d1 > T::lit(1e-5) {
            T::lit(0.01) * d0 / d1
        } else {
            T::lit(1e-6)
        };
        guess.min(max_step)
    };
    if let Some(cap) = watches.iter().filter_map(|w| w.cap).reduce(|a, b| a.min(b)) {
        h = cap.min(max_step);
    }
    let mut first = true;
    let samples = opts.samples_per_step.max(1);
    let mtol = opts.membership_tol;

    loop {
        if t >= horizon {
            return Ok(Flow::Horizon);
        }
        let remaining = horizon - t;
        let mut hh = h.min(remaining);
        let (step, err) = loop {
            if *budget == 0 {
                return Err(SimError::StepBudget(opts.max_steps));
            }
            *budget -= 1;
            let min_step = T::epsilon() * T::lit(16.0) * t.abs().max(T::one());
            if hh < min_step {
                return Err(SimError::StepUnderflow { t: t.to_f64_lossy() });
            }
            let (step, err) = integ.step(t, &y, &k1, hh);
            if !err.is_finite() || err > T::one() {
                let fac = if err.is_finite() {
                    (T::lit(0.9) * err.powf(T::lit(-0.2))).max(T::lit(0.2))
                } else {
                    T::lit(0.2)
                };
                hh = hh * fac;
                continue;
            }
            if first {
                // a surface-started watch must be on its positive side first
                let theta = T::one() / T::lit(samples as f64);
                let ys = step.at(theta);
                if watches
                    .iter()
                    .any(|w| w.on_surface && w.orient * w.h.eval(&ys) < T::zero())
                {
                    hh = hh * T::lit(0.5);
                    continue;
                }
            }
            break (step, err);
        };
        first = false;

        // scan the interpolant
        let mut prev_theta = T::zero();
        for j in 1..=samples {
            let theta = T::lit(j as f64) / T::lit(samples as f64);
            let ys = if j == samples { step.y1.clone() } else { step.at(theta) };
            let mut hits: Vec<(T, usize, Vec<T>)> = Vec::new();
            for (wi, w) in watches.iter().enumerate() {
                let cur = w.orient * w.h.eval(&ys);
                if w.prev > T::zero() && cur <= T::zero() {
                    let (tc, xc) = locate(&step, w, prev_theta, theta);
                    hits.push((tc, wi, xc));
                }
            }
            hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
            let mut accepted: Option<(T, usize, Vec<T>)> = None;
            for (tc, wi, xc) in hits {
                if let Some((ta, wa, _)) = &accepted {
                    let close = (tc - *ta).abs() <= T::lit(1e-12) * T::one().max(ta.abs());
                    if close {
                        warn!(
                            "simultaneous guard crossings at t = {:e}; taking edge {} over edge {}",
                            ta.to_f64_lossy(),
                            watches[*wa].edge,
                            watches[wi].edge
                        );
                    }
                    continue;
                }
                let xf = to_f64(&xc);
                if watches[wi].inequalities.iter().all(|g| g.eval(&xf) >= -mtol) {
                    accepted = Some((tc, wi, xc));
                } else {
                    watches[wi].orient = -watches[wi].orient;
                }
            }
            if let Some((time, watch, state)) = accepted {
                return Ok(Flow::Guard { watch, time, state });
            }
            for w in watches.iter_mut() {
                w.prev = w.orient * w.h.eval(&ys);
            }
            if !ys.iter().all(|v| v.is_finite()) || norm(&ys) > radius {
                return Ok(Flow::Diverged);
            }
            let yf = to_f64(&ys);
            if !mode.in_domain(&yf, opts.membership_tol) {
                return Ok(Flow::DomainExit);
            }
            if opts.stop_outside_neighborhood && !mode.neighborhood.contains(&yf, opts.membership_tol) {
                return Ok(Flow::NeighborhoodExit);
            }
            prev_theta = theta;
        }

        t = if step.h >= remaining { horizon } else { step.time(T::one()) };
        y = step.y1.clone();
        k1 = step.k7;
        interval.times.push(t);
        interval.states.push(y.clone());
        let fac = if err > T::zero() {
            T::lit(0.9) * err.powf(T::lit(-0.2))
        } else {
            T::lit(5.0)
        };
        h = (step.h * fac.max(T::lit(0.2)).min(T::lit(5.0))).min(max_step);
    }
}

/// Bisects the interpolant on `[a, b]` (in step fractions) for the oriented
/// sign change, to machine resolution.
fn locate<T: Scalar>(step: &Step<T>, w: &Watch<T>, a: T, b: T) -> (T, Vec<T>) {
    let val = |theta: T| w.orient * w.h.eval(&step.at(theta));
    let (mut a, mut b) = (a, b);
    let (mut va, mut vb) = (val(a), val(b));
    for _ in 0..200 {
        let mid = (a + b) * T::lit(0.5);
        if mid <= a || mid >= b {
            break;
        }
        let vm = val(mid);
        if vm > T::zero() {
            a = mid;
            va = vm;
        } else {
            b = mid;
            vb = vm;
            if vm == T::zero() {
                break;
            }
        }
    }
    let theta = if va.abs() < vb.abs() { a } else { b };
    (step.time(theta), step.at(theta))
}
