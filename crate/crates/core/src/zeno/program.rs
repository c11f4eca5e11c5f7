use std::collections::BTreeMap;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sample::{axis_extent, draw_parameters, parameter_box};
use super::{MultiplierPolicy, SamplingReport, SdpDiagnostics, SynthesisConfig, ZenoCertificate, ZenoError};
use crate::hybrid::{HybridSystem, Mode, SemialgebraicSet};
use crate::poly::PolyVec;
use crate::sos::{
    free_multiplier_degree, generators, sos_multiplier_degree, LinPoly, MonomialBasis, PolyRecord, PolyVariable,
    ScalarVariable, SosProgram, SosSolution,
};
use crate::Polynomial;

/// An assembled program with the handles needed to read a certificate back.
#[derive(Debug, Clone)]
pub struct FeasibilityProgram {
    pub program: SosProgram,
    pub lyapunov: Vec<PolyVariable>,
    pub alpha: ScalarVariable,
    pub gamma: ScalarVariable,
    pub r: Vec<f64>,
    pub degrees: Vec<u32>,
    /// States enter the program as `x = scale * y`.
    pub scale: f64,
    pub parametric: bool,
}

/// Nominal problem for the first `r` combination of `config`.
pub fn build_fp1(system: &HybridSystem, config: &SynthesisConfig) -> Result<FeasibilityProgram, ZenoError> {
    if system.has_parameters() {
        return Err(ZenoError::HasParameters);
    }
    let r = first_combination(system, config)?;
    assemble(system, config, &config.degrees_for(system)?, &r, false)
}

/// Parametric problem for the first `r` combination of `config`.
pub fn build_fp2(system: &HybridSystem, config: &SynthesisConfig) -> Result<FeasibilityProgram, ZenoError> {
    let r = first_combination(system, config)?;
    assemble(system, config, &config.degrees_for(system)?, &r, true)
}

fn first_combination(system: &HybridSystem, config: &SynthesisConfig) -> Result<Vec<f64>, ZenoError> {
    Ok(config.r.combinations(system.modes.len())?.swap_remove(0))
}

fn check(system: &HybridSystem) -> Result<(), ZenoError> {
    let report = system.validate();
    if !report.cyclic {
        return Err(ZenoError::Acyclic);
    }
    if !report.is_valid() {
        return Err(ZenoError::Invalid(report.violations.join("; ")));
    }
    match &system.zeno_equilibrium {
        None => Err(ZenoError::MissingEquilibrium),
        Some(z) if z.iter().any(|p| p.len() != system.state_dim()) => Err(ZenoError::MissingEquilibrium),
        Some(_) => Ok(()),
    }
}

/// A length scale of the neighborhoods: the largest finite axis extent
/// around the equilibria, or 1.
pub fn state_scale(system: &HybridSystem) -> f64 {
    let pbox = parameter_box(system);
    let p: Vec<f64> = pbox.iter().map(|&(a, b)| 0.5 * (a + b)).collect();
    let mut best: f64 = 0.0;
    for (q, mode) in system.modes.iter().enumerate() {
        let z = equilibrium(system, q);
        for i in 0..system.state_dim() {
            for sign in [-1.0, 1.0] {
                if let Some(t) = axis_extent(&mode.neighborhood, &z, &p, i, sign) {
                    best = best.max(t);
                }
            }
        }
    }
    if best > 0.0 {
        best
    } else {
        1.0
    }
}

pub(crate) fn equilibrium(system: &HybridSystem, q: usize) -> Vec<f64> {
    system
        .zeno_equilibrium
        .as_ref()
        .and_then(|z| z.get(q).cloned())
        .filter(|z| z.len() == system.state_dim())
        .unwrap_or_else(|| vec![0.0; system.state_dim()])
}

fn normalized(p: Polynomial) -> Polynomial {
    let m = p.max_abs_coeff();
    if m > 0.0 {
        p.scale(1.0 / m)
    } else {
        p
    }
}

/// The system in coordinates `y = x / s`; constraint polynomials are
/// normalized to unit largest coefficient.
fn rescale(system: &HybridSystem, s: f64) -> HybridSystem {
    let vars = system.all_variables();
    let n = system.state_dim();
    let subst = PolyVec::new(
        (0..vars.len())
            .map(|i| {
                let v = Polynomial::var(&vars, i);
                if i < n {
                    v.scale(s)
                } else {
                    v
                }
            })
            .collect(),
    );
    let at = |p: &Polynomial| p.compose(&subst).expect("same variables");
    let set = |x: &SemialgebraicSet| SemialgebraicSet {
        inequalities: x.inequalities.iter().map(|p| normalized(at(p))).collect(),
        equalities: x.equalities.iter().map(|p| normalized(at(p))).collect(),
    };
    let vector = |v: &PolyVec<f64>| v.map(|p| at(p).scale(1.0 / s));
    let mut out = system.clone();
    out.parameter_set = set(&system.parameter_set);
    out.modes = system
        .modes
        .iter()
        .map(|m| Mode {
            id: m.id.clone(),
            domain: set(&m.domain),
            domain_pieces: m.domain_pieces.iter().map(set).collect(),
            field: vector(&m.field),
            neighborhood: set(&m.neighborhood),
        })
        .collect();
    for (e, orig) in out.edges.iter_mut().zip(&system.edges) {
        e.guard_equality = normalized(at(&orig.guard_equality));
        e.guard_inequalities = orig.guard_inequalities.iter().map(|p| normalized(at(p))).collect();
        e.reset = vector(&orig.reset);
    }
    out.zeno_equilibrium = system
        .zeno_equilibrium
        .as_ref()
        .map(|z| z.iter().map(|p| p.iter().map(|v| v / s).collect()).collect());
    out
}

/// A named group of constraints sharing one multiplier letter.
struct Group {
    letter: &'static str,
    set: SemialgebraicSet,
}

/// Sample points `(0, p)` with `p` drawn from the parameter set, used to
/// detect Gram rows that every solution must leave at zero.
struct Origin {
    states: usize,
    points: Vec<Vec<f64>>,
}

const ORIGIN_TOL: f64 = 1e-12;

impl Origin {
    fn new(sys: &HybridSystem, parametric: bool) -> Self {
        let n = sys.state_dim();
        let points = if parametric && sys.has_parameters() {
            let pbox = parameter_box(sys);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            (0..8)
                .filter_map(|_| draw_parameters(sys, &mut rng, &pbox))
                .map(|p| {
                    let mut x = vec![0.0; n];
                    x.extend(p);
                    x
                })
                .collect()
        } else {
            vec![vec![0.0; sys.all_variables().len()]]
        };
        Origin { states: n, points }
    }

    fn all(&self, f: impl Fn(&[f64]) -> bool) -> bool {
        !self.points.is_empty() && self.points.iter().all(|x| f(x))
    }

    fn inside(&self, groups: &[Group]) -> bool {
        self.all(|x| groups.iter().all(|g| g.set.contains(x, ORIGIN_TOL)))
    }

    /// Half-degree basis without the monomials that are constant in the states.
    fn reduced(&self, vars: &[String], degree: u32) -> MonomialBasis {
        let full = MonomialBasis::new(vars, degree / 2);
        let keep = full
            .entries()
            .iter()
            .filter(|m| m.pairs().any(|(v, _)| v < self.states))
            .cloned()
            .collect();
        MonomialBasis::from_monomials(vars, keep)
    }
}

/// Adds `expr - sum(multipliers * constraints) - sigma == 0` with SOS
/// multipliers on inequalities, free ones on equalities and SOS `sigma`.
///
/// With `origin`, the caller asserts that `expr <= 0` at the origin for
/// every solution while the origin lies in the region. Then `sigma` and the
/// multipliers of constraints positive there vanish at the origin and their
/// bases drop the monomials that are constant in the states.
fn nonnegative_on(
    prog: &mut SosProgram,
    label: &str,
    expr: LinPoly,
    groups: &[Group],
    policy: &MultiplierPolicy,
    origin: Option<&Origin>,
) -> Result<(), ZenoError> {
    let vars = prog.variables().to_vec();
    let deg = expr.degree();
    let target = (deg + deg % 2).max(2);
    let cap = |d: u32| policy.max_degree.map_or(d, |c| d.min(c));
    let origin = origin.filter(|o| o.inside(groups));
    let mut rest = expr;
    for g in groups {
        for (k, p) in generators(&g.set.inequalities, policy.schmudgen).iter().enumerate() {
            if p.degree() > target {
                continue;
            }
            let d = cap(sos_multiplier_degree(target, p.degree()));
            let name = format!("{}{k}[{label}]", g.letter);
            let s = match origin {
                Some(o) if o.all(|x| p.eval(x) > ORIGIN_TOL) => {
                    let basis = o.reduced(&vars, d);
                    if basis.is_empty() {
                        continue;
                    }
                    prog.new_sos_var_with_basis(&name, basis)
                }
                _ => prog.new_sos_var(&name, d),
            };
            rest = rest.sub(&s.lin().mul_poly(p)?)?;
        }
        for (k, h) in g.set.equalities.iter().enumerate() {
            if h.degree() > target {
                continue;
            }
            let d = cap(free_multiplier_degree(target, h.degree()));
            let m = prog.new_poly_var(&format!("{}{k}=[{label}]", g.letter), d);
            rest = rest.sub(&m.lin().mul_poly(h)?)?;
        }
    }
    let name = format!("sigma[{label}]");
    let sigma = match origin {
        Some(o) => prog.new_sos_var_with_basis(&name, o.reduced(&vars, target)),
        None => prog.new_sos_var(&name, target),
    };
    rest = rest.sub(&sigma.lin())?;
    prog.add_identity(label, rest)?;
    Ok(())
}

pub(crate) fn assemble(
    system: &HybridSystem,
    config: &SynthesisConfig,
    degrees: &[u32],
    r: &[f64],
    parametric: bool,
) -> Result<FeasibilityProgram, ZenoError> {
    check(system)?;
    if !parametric && system.has_parameters() {
        return Err(ZenoError::HasParameters);
    }
    if r.len() != system.modes.len() || r.iter().all(|&v| v >= 1.0) {
        return Err(ZenoError::Config("some mode needs r < 1".into()));
    }
    let scale = state_scale(system);
    let sys = rescale(system, scale);
    let vars = sys.all_variables();
    let z = sys.zeno_equilibrium.clone().expect("checked");
    let policy = &config.multipliers;
    let pi = if parametric {
        sys.parameter_set.clone()
    } else {
        SemialgebraicSet::default()
    };

    let mut prog = SosProgram::new(&vars);
    let alpha = prog.new_scalar("alpha", Some(config.alpha_floor));
    let gamma = prog.new_scalar("gamma", Some(config.gamma_floor));
    let lyapunov: Vec<PolyVariable> = sys
        .modes
        .iter()
        .zip(degrees)
        .map(|(m, &d)| prog.new_poly_var(&format!("V_{}", m.id), d))
        .collect();
    let one = Polynomial::constant(&vars, 1.0);
    let origin = Origin::new(&sys, parametric);

    for (q, mode) in sys.modes.iter().enumerate() {
        let v = lyapunov[q].lin();
        let mut dist = Polynomial::zero(&vars);
        for (i, zi) in z[q].iter().enumerate() {
            let d = Polynomial::var(&vars, i).sub_poly(&Polynomial::constant(&vars, *zi));
            dist = dist.add_poly(&d.mul_poly(&d));
        }
        let pos = v.sub(&prog.scaled(&alpha.expr, &dist)?)?;
        let dec = v
            .lie_derivative(&mode.field)?
            .scale(-1.0)
            .sub(&prog.scaled(&gamma.expr, &one)?)?;
        let pieces = mode.pieces();
        for (k, piece) in pieces.iter().enumerate() {
            let suffix = if pieces.len() == 1 {
                mode.id.clone()
            } else {
                format!("{}.{k}", mode.id)
            };
            let region = |w: &'static str, g: &'static str, p: &'static str| {
                vec![
                    Group {
                        letter: w,
                        set: mode.neighborhood.clone(),
                    },
                    Group {
                        letter: g,
                        set: piece.clone(),
                    },
                    Group {
                        letter: p,
                        set: pi.clone(),
                    },
                ]
            };
            let at_origin = z[q].iter().all(|&c| c == 0.0);
            let pos_groups = region("a", "b", "eta");
            let o = at_origin.then_some(&origin);
            nonnegative_on(&mut prog, &format!("positivity_{suffix}"), pos.clone(), &pos_groups, policy, o)?;
            // V_q >= 0 near the origin along the flow, so the decrease vanishes there
            let flows_inside = origin.all(|x| {
                let f = mode.field.eval(x);
                if f.iter().all(|v| v.abs() <= ORIGIN_TOL) {
                    return true;
                }
                let mut y = x.to_vec();
                y.iter_mut().zip(&f).for_each(|(a, b)| *a += 1e-6 * b);
                mode.neighborhood.contains(&y, 0.0) && piece.contains(&y, 0.0)
            });
            let o = (at_origin && flows_inside).then_some(&origin);
            nonnegative_on(&mut prog, &format!("decrease_{suffix}"), dec.clone(), &region("c", "d", "beta"), policy, o)?;
            for (ei, e) in sys.outgoing(q) {
                let image = lyapunov[e.target].lin().compose(&e.reset)?;
                let expr = v.scale(r[q]).sub(&image)?;
                let mut groups = region("i", "j", "zeta");
                groups.push(Group {
                    letter: "m",
                    set: e.guard_set(),
                });
                // V_q' >= 0 at the image of the origin
                let lands = origin.all(|x| {
                    let mut y = e.reset.eval(x);
                    y.extend_from_slice(&x[y.len()..]);
                    sys.modes[e.target].in_neighborhood(&y, ORIGIN_TOL)
                });
                let o = (at_origin && lands).then_some(&origin);
                nonnegative_on(&mut prog, &format!("reset_e{ei}_{suffix}"), expr, &groups, policy, o)?;
            }
        }
        let at_z = PolyVec::new(z[q].iter().map(|&c| Polynomial::constant(&vars, c)).collect());
        prog.add_identity(&format!("equilibrium_{}", mode.id), v.compose(&at_z)?)?;
    }
    Ok(FeasibilityProgram {
        program: prog,
        lyapunov,
        alpha,
        gamma,
        r: r.to_vec(),
        degrees: degrees.to_vec(),
        scale,
        parametric,
    })
}

impl FeasibilityProgram {
    /// Reads the solution back into the coordinates of `system`. The
    /// sampling report is left empty.
    pub fn certificate(&self, system: &HybridSystem, sol: &SosSolution, elapsed: Duration) -> ZenoCertificate {
        let vars = system.all_variables();
        let n = system.state_dim();
        let back = PolyVec::new(
            (0..vars.len())
                .map(|i| {
                    let v = Polynomial::var(&vars, i);
                    if i < n {
                        v.scale(1.0 / self.scale)
                    } else {
                        v
                    }
                })
                .collect(),
        );
        let functions: Vec<Polynomial> = self
            .lyapunov
            .iter()
            .map(|v| sol.poly(v).compose(&back).expect("same variables"))
            .collect();
        let ids = system.modes.iter().map(|m| m.id.clone());
        let alpha = sol.scalar(&self.alpha) / (self.scale * self.scale);
        let gamma = sol.scalar(&self.gamma);
        let sdp = &sol.sdp;
        ZenoCertificate {
            system: system.name.clone(),
            formulation: if self.parametric { "fp2" } else { "fp1" },
            variables: vars.clone(),
            degrees: ids.clone().zip(self.degrees.iter().copied()).collect(),
            lyapunov: ids
                .clone()
                .zip(&functions)
                .map(|(id, p)| (id, PolyRecord::new(p, None)))
                .collect(),
            alpha,
            gamma,
            strict_decrease: gamma > 1e-6,
            r: ids.zip(self.r.iter().copied()).collect::<BTreeMap<_, _>>(),
            scale: self.scale,
            multipliers: sol.certificate(),
            sdp: SdpDiagnostics {
                status: format!("{:?}", sdp.status),
                iterations: sdp.iterations,
                primal_residual: sdp.primal_residual,
                dual_residual: sdp.dual_residual,
                gap: sdp.gap,
                rows: self.program.row_count(),
                solve_seconds: elapsed.as_secs_f64(),
            },
            sampling: SamplingReport::default(),
            functions,
            r_values: self.r.clone(),
        }
    }
}
