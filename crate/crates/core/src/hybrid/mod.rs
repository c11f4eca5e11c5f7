//! Polynomial hybrid automata: data model, system files, validation and an
//! event-detecting simulator.

mod file;
mod sim;

use thiserror::Error;

use crate::poly::{PolyError, PolyVec};
use crate::{PolyVector, Polynomial};

pub use file::{EdgeSpec, GuardSpec, ModeSpec, SetSpec, SystemFile};
pub use sim::{simulate, zeno_time, Execution, Interval, SimError, SimOptions, Transition, Verdict};

/// Default tolerance for set membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("invalid system file: {0}")]
    Json(String),
    #[error("in {context}: {source}")]
    Expr {
        context: String,
        #[source]
        source: PolyError,
    },
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("duplicate mode id `{0}`")]
    DuplicateMode(String),
    #[error("unknown constant `{0}`")]
    UnknownConstant(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("{0}")]
    Shape(String),
}

/// `{x : g_i(x) >= 0, h_j(x) = 0}`
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SemialgebraicSet {
    pub inequalities: Vec<Polynomial>,
    pub equalities: Vec<Polynomial>,
}

impl SemialgebraicSet {
    pub fn new(inequalities: Vec<Polynomial>, equalities: Vec<Polynomial>) -> Self {
        SemialgebraicSet {
            inequalities,
            equalities,
        }
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        self.inequalities.iter().all(|g| g.eval(point) >= -tol)
            && self.equalities.iter().all(|h| h.eval(point).abs() <= tol)
    }

    /// Smallest constraint slack at `point` (negative outside).
    pub fn margin(&self, point: &[f64]) -> f64 {
        let a = self.inequalities.iter().map(|g| g.eval(point)).fold(f64::INFINITY, f64::min);
        let b = self
            .equalities
            .iter()
            .map(|h| -h.eval(point).abs())
            .fold(f64::INFINITY, f64::min);
        a.min(b)
    }

    pub fn intersect(&self, other: &SemialgebraicSet) -> SemialgebraicSet {
        let mut s = self.clone();
        s.inequalities.extend(other.inequalities.iter().cloned());
        s.equalities.extend(other.equalities.iter().cloned());
        s
    }

    pub fn is_empty_description(&self) -> bool {
        self.inequalities.is_empty() && self.equalities.is_empty()
    }

    fn map(&self, f: impl Fn(&Polynomial) -> Polynomial) -> Self {
        SemialgebraicSet {
            inequalities: self.inequalities.iter().map(&f).collect(),
            equalities: self.equalities.iter().map(&f).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub id: String,
    pub domain: SemialgebraicSet,
    /// Union pieces of the domain; empty means the domain is basic.
    pub domain_pieces: Vec<SemialgebraicSet>,
    pub field: PolyVector,
    pub neighborhood: SemialgebraicSet,
}

impl Mode {
    /// Basic semialgebraic pieces whose union is the domain.
    pub fn pieces(&self) -> Vec<SemialgebraicSet> {
        if self.domain_pieces.is_empty() {
            vec![self.domain.clone()]
        } else {
            self.domain_pieces.iter().map(|p| self.domain.intersect(p)).collect()
        }
    }

    pub fn in_domain(&self, point: &[f64], tol: f64) -> bool {
        if self.domain_pieces.is_empty() {
            self.domain.contains(point, tol)
        } else {
            self.domain.contains(point, tol) && self.domain_pieces.iter().any(|p| p.contains(point, tol))
        }
    }

    /// Membership in `W_q`, the neighborhood intersected with the domain.
    pub fn in_neighborhood(&self, point: &[f64], tol: f64) -> bool {
        self.neighborhood.contains(point, tol) && self.in_domain(point, tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    /// The distinguished guard equality `h_{e,0}`.
    pub guard_equality: Polynomial,
    /// Guard inequalities `h_{e,k} >= 0`.
    pub guard_inequalities: Vec<Polynomial>,
    pub reset: PolyVector,
}

impl Edge {
    pub fn guard_set(&self) -> SemialgebraicSet {
        SemialgebraicSet::new(self.guard_inequalities.clone(), vec![self.guard_equality.clone()])
    }
}

/// A hybrid automaton whose polynomials live over `states ++ parameters`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridSystem {
    pub name: Option<String>,
    pub states: Vec<String>,
    pub parameters: Vec<String>,
    /// Admissible parameter set `P` (inequalities in the parameters).
    pub parameter_set: SemialgebraicSet,
    pub modes: Vec<Mode>,
    pub edges: Vec<Edge>,
    /// Zeno equilibrium `z_q` per mode.
    pub zeno_equilibrium: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub cyclic: bool,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl HybridSystem {
    pub fn state_dim(&self) -> usize {
        self.states.len()
    }

    /// `states ++ parameters`, the variable list of every polynomial.
    pub fn all_variables(&self) -> Vec<String> {
        let mut v = self.states.clone();
        v.extend(self.parameters.iter().cloned());
        v
    }

    pub fn mode_index(&self, id: &str) -> Option<usize> {
        self.modes.iter().position(|m| m.id == id)
    }

    pub fn outgoing(&self, mode: usize) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.source == mode)
    }

    pub fn has_parameters(&self) -> bool {
        !self.parameters.is_empty()
    }

    /// Substitutes numeric values for some or all parameters.
    pub fn instantiate(&self, values: &[(String, f64)]) -> Result<HybridSystem, SystemError> {
        for (name, _) in values {
            if !self.parameters.contains(name) {
                return Err(SystemError::UnknownParameter(name.clone()));
            }
        }
        let parameters: Vec<String> = self
            .parameters
            .iter()
            .filter(|p| !values.iter().any(|(n, _)| n == *p))
            .cloned()
            .collect();
        let mut vars = self.states.clone();
        vars.extend(parameters.iter().cloned());
        let sub = |p: &Polynomial| {
            p.substitute_values(values)
                .with_variables(&vars)
                .expect("substituted parameters no longer occur")
        };
        let subv = |v: &PolyVector| {
            PolyVec::new(v.components().iter().map(sub).collect::<Vec<_>>())
        };
        let vars_only = |v: PolyVector| -> PolyVector {
            PolyVec::new(
                v.components()
                    .iter()
                    .map(|p| p.with_variables(&vars).expect("same variables"))
                    .collect(),
            )
        };
        let modes = self
            .modes
            .iter()
            .map(|m| Mode {
                id: m.id.clone(),
                domain: m.domain.map(sub),
                domain_pieces: m.domain_pieces.iter().map(|p| p.map(sub)).collect(),
                field: vars_only(subv(&m.field)),
                neighborhood: m.neighborhood.map(sub),
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                source: e.source,
                target: e.target,
                guard_equality: sub(&e.guard_equality),
                guard_inequalities: e.guard_inequalities.iter().map(sub).collect(),
                reset: vars_only(subv(&e.reset)),
            })
            .collect();
        // parameter constraints that became constants are dropped
        let parameter_set = SemialgebraicSet {
            inequalities: self
                .parameter_set
                .inequalities
                .iter()
                .map(sub)
                .filter(|p| p.degree() > 0 || p.is_zero())
                .collect(),
            equalities: self
                .parameter_set
                .equalities
                .iter()
                .map(sub)
                .filter(|p| p.degree() > 0)
                .collect(),
        };
        Ok(HybridSystem {
            name: self.name.clone(),
            states: self.states.clone(),
            parameters,
            parameter_set,
            modes,
            edges,
            zeno_equilibrium: self.zeno_equilibrium.clone(),
        })
    }

    /// Each mode is the source of exactly one edge and the target of exactly
    /// one edge, and the edges form a single cycle.
    pub fn is_cyclic(&self) -> bool {
        let n = self.modes.len();
        if n == 0 || self.edges.len() != n {
            return false;
        }
        let mut next = vec![usize::MAX; n];
        let mut indeg = vec![0; n];
        for e in &self.edges {
            if next[e.source] != usize::MAX {
                return false;
            }
            next[e.source] = e.target;
            indeg[e.target] += 1;
        }
        if indeg.iter().any(|&d| d != 1) {
            return false;
        }
        let mut seen = 1;
        let mut q = next[0];
        while q != 0 {
            seen += 1;
            q = next[q];
            if seen > n {
                return false;
            }
        }
        seen == n
    }

    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport {
            cyclic: self.is_cyclic(),
            ..Default::default()
        };
        if !r.cyclic {
            r.violations.push("edges do not form a single cycle over all modes".into());
        }
        let n = self.state_dim();
        for m in &self.modes {
            if m.field.len() != n {
                r.violations.push(format!(
                    "mode {}: field has {} components, expected {n}",
                    m.id,
                    m.field.len()
                ));
            }
        }
        for e in &self.edges {
            if e.reset.len() != n {
                r.violations.push(format!(
                    "edge {}->{}: reset has {} components, expected {n}",
                    self.modes[e.source].id,
                    self.modes[e.target].id,
                    e.reset.len()
                ));
            }
        }
        if let Some(z) = &self.zeno_equilibrium {
            self.check_equilibrium(z, &mut r);
        }
        r
    }

    fn check_equilibrium(&self, z: &[Vec<f64>], r: &mut ValidationReport) {
        let n = self.state_dim();
        if z.len() != self.modes.len() || z.iter().any(|p| p.len() != n) {
            r.violations.push("zeno equilibrium must give one point per mode".into());
            return;
        }
        let tol = MEMBERSHIP_TOL;
        let at = |p: &Polynomial, q: usize| -> Polynomial {
            let vals: Vec<(String, f64)> =
                self.states.iter().cloned().zip(z[q].iter().copied()).collect();
            p.substitute_values(&vals)
        };
        for e in &self.edges {
            let (q, q2) = (e.source, e.target);
            let label = format!("edge {}->{}", self.modes[q].id, self.modes[q2].id);
            for (i, phi) in e.reset.components().iter().enumerate() {
                let d = at(phi, q).sub_poly(&Polynomial::constant(&self.all_variables(), z[q2][i]));
                if d.max_abs_coeff() > tol {
                    r.violations.push(format!("{label}: reset does not map z to z (component {i})"));
                }
            }
            if at(&e.guard_equality, q).max_abs_coeff() > tol {
                r.violations.push(format!("{label}: z is not on the guard surface"));
            }
            for h in &e.guard_inequalities {
                let v = at(h, q);
                if v.degree() == 0 && v.coeff(&crate::poly::Monomial::one()) < -tol {
                    r.violations.push(format!("{label}: z violates a guard inequality"));
                }
            }
        }
        for (q, m) in self.modes.iter().enumerate() {
            let fz: Vec<Polynomial> = m.field.components().iter().map(|f| at(f, q)).collect();
            if fz.iter().all(|p| p.max_abs_coeff() <= tol) {
                r.warnings.push(format!("mode {}: field vanishes at z (a true equilibrium)", m.id));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BALL: &str = r#"{
        "variables": ["x1", "x2"],
        "constants": {"g": 1.0, "c": 0.5},
        "modes": [{"id": "1", "domain": {"inequalities": ["x1"]},
                   "field": ["x2", "-g"]}],
        "edges": [{"source": "1", "target": "1",
                   "guard": {"equality": "x1", "inequalities": ["-x2"]},
                   "reset": ["0", "-c*x2"]}],
        "zeno_equilibrium": {"1": [0, 0]}
    }"#;

    #[test]
    fn ball_is_valid_and_cyclic() {
        let sys = SystemFile::from_json(BALL).unwrap().build(&[]).unwrap();
        let r = sys.validate();
        assert!(r.cyclic && r.is_valid(), "{r:?}");
        // default neighborhood is the radius-5 ball
        assert_eq!(sys.modes[0].neighborhood.inequalities.len(), 1);
        assert!(sys.modes[0].in_neighborhood(&[4.0, 2.9], 0.0));
        assert!(!sys.modes[0].in_neighborhood(&[4.0, 3.1], 0.0));
    }

    #[test]
    fn bad_reset_is_flagged() {
        let text = BALL.replace("\"0\", \"-c*x2\"", "\"1\", \"-c*x2\"");
        let sys = SystemFile::from_json(&text).unwrap().build(&[]).unwrap();
        let r = sys.validate();
        assert!(!r.is_valid());
        assert!(r.violations[0].contains("reset"));
    }

    #[test]
    fn three_cycle() {
        let text = r#"{
            "variables": ["x"],
            "modes": [{"id": "1", "field": ["1"]}, {"id": "2", "field": ["1"]}, {"id": "3", "field": ["1"]}],
            "edges": [
                {"source": "1", "target": "2", "guard": {"equality": "x"}, "reset": ["x"]},
                {"source": "2", "target": "3", "guard": {"equality": "x"}, "reset": ["x"]},
                {"source": "3", "target": "1", "guard": {"equality": "x"}, "reset": ["x"]}
            ]
        }"#;
        let sys = SystemFile::from_json(text).unwrap().build(&[]).unwrap();
        assert!(sys.is_cyclic());
        let two_cycles = text.replace(
            r#"{"source": "3", "target": "1""#,
            r#"{"source": "3", "target": "3""#,
        );
        let sys = SystemFile::from_json(&two_cycles).unwrap().build(&[]).unwrap();
        assert!(!sys.is_cyclic());
    }

    #[test]
    fn constants_and_parameters() {
        let text = r#"{
            "variables": ["x1", "x2"],
            "parameters": ["p"],
            "parameter_set": {"inequalities": ["p*(C - p)"]},
            "constants": {"C": 0.9},
            "modes": [{"id": "1", "domain": {"inequalities": ["x1"]}, "field": ["x2", "-1"]}],
            "edges": [{"source": "1", "target": "1",
                       "guard": {"equality": "x1", "inequalities": ["-x2"]},
                       "reset": ["0", "-p*x2"]}],
            "zeno_equilibrium": {"1": [0, 0]}
        }"#;
        let file = SystemFile::from_json(text).unwrap();
        let sys = file.build(&[("C".into(), 0.5)]).unwrap();
        assert_eq!(sys.all_variables(), vec!["x1", "x2", "p"]);
        assert!(sys.validate().is_valid());
        let pset = &sys.parameter_set.inequalities[0];
        assert!((pset.eval(&[0.0, 0.0, 0.25]) - 0.0625).abs() < 1e-15);
        let inst = sys.instantiate(&[("p".into(), 0.5)]).unwrap();
        assert!(!inst.has_parameters());
        assert_eq!(inst.edges[0].reset.eval(&[0.0, -2.0]), vec![0.0, 1.0]);
        assert!(matches!(
            file.build(&[("nope".into(), 1.0)]),
            Err(SystemError::UnknownConstant(_))
        ));
    }
}
