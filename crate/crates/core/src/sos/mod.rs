//! Sum-of-squares programming on top of the SDP solver.
//!
//! An [`SosProgram`] collects unknown polynomials (free coefficients), SOS
//! polynomials (Gram matrices `Z^T Q Z` with `Q` PSD), bounded scalars and
//! polynomial identities that are affine in all of them. Compiling matches
//! coefficients monomial by monomial and yields one [`SdpProblem`].

mod linpoly;

use std::collections::BTreeMap;
use std::sync::Arc;

use log::info;
use serde::Serialize;
use thiserror::Error;

use crate::poly::{monomials_up_to, Monomial, PolyError};
use crate::sdp::dense::{sym_eigenvalues, Mat};
use crate::sdp::{self, LinearForm, SdpConstraint, SdpOptions, SdpProblem, SdpSolution, SdpStatus};
use crate::Polynomial;

pub use linpoly::{LinExpr, LinPoly, Var};

/// Gram eigenvalues below this are counted as numerically zero.
pub const GRAM_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SosError {
    #[error("identity multiplies two unknowns")]
    Bilinear,
    #[error("polynomials live over different variable lists")]
    VariableMismatch,
    #[error("program has no constraints")]
    Empty,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sdp(#[from] sdp::SdpError),
}

/// Ordered monomials of total degree at most `degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    vars: Arc<[String]>,
    entries: Vec<Monomial>,
}

impl MonomialBasis {
    pub fn new(vars: &[String], degree: u32) -> Self {
        MonomialBasis {
            vars: vars.into(),
            entries: monomials_up_to(vars.len(), degree),
        }
    }

    /// Basis from an explicit monomial list (kept in the given order).
    pub fn from_monomials(vars: &[String], entries: Vec<Monomial>) -> Self {
        MonomialBasis {
            vars: vars.into(),
            entries,
        }
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn entries(&self) -> &[Monomial] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.entries.iter().map(Monomial::degree).max().unwrap_or(0)
    }
}

/// Unknown polynomial with one free coefficient per basis monomial.
#[derive(Debug, Clone)]
pub struct PolyVariable {
    pub name: String,
    pub basis: MonomialBasis,
    pub slots: Vec<usize>,
}

impl PolyVariable {
    pub fn lin(&self) -> LinPoly {
        let terms = self
            .basis
            .entries
            .iter()
            .zip(&self.slots)
            .map(|(m, &s)| (m.clone(), LinExpr::var(Var::Free(s))))
            .collect();
        LinPoly::from_terms(self.basis.vars.clone(), terms)
    }
}

/// SOS polynomial `Z^T Q Z` over a half-degree basis `Z`.
#[derive(Debug, Clone)]
pub struct SosVariable {
    pub name: String,
    pub basis: MonomialBasis,
    pub block: usize,
}

impl SosVariable {
    pub fn lin(&self) -> LinPoly {
        let z = &self.basis.entries;
        let mut terms: BTreeMap<Monomial, LinExpr> = BTreeMap::new();
        for i in 0..z.len() {
            for j in i..z.len() {
                let k = if i == j { 1.0 } else { 2.0 };
                terms
                    .entry(z[i].mul(&z[j]))
                    .or_default()
                    .add_term(Var::gram(self.block, i, j), k);
            }
        }
        LinPoly::from_terms(self.basis.vars.clone(), terms)
    }

    pub fn degree(&self) -> u32 {
        2 * self.basis.degree()
    }
}

/// Scalar unknown, optionally bounded below.
#[derive(Debug, Clone)]
pub struct ScalarVariable {
    pub name: String,
    pub lower: Option<f64>,
    pub expr: LinExpr,
}

#[derive(Debug, Clone)]
pub struct SosProgram {
    vars: Arc<[String]>,
    free_count: usize,
    blocks: Vec<usize>,
    poly_vars: Vec<PolyVariable>,
    sos_vars: Vec<SosVariable>,
    scalars: Vec<ScalarVariable>,
    identities: Vec<(String, LinPoly)>,
    objective: Option<LinExpr>,
}

impl SosProgram {
    pub fn new(vars: &[String]) -> Self {
        SosProgram {
            vars: vars.into(),
            free_count: 0,
            blocks: Vec::new(),
            poly_vars: Vec::new(),
            sos_vars: Vec::new(),
            scalars: Vec::new(),
            identities: Vec::new(),
            objective: None,
        }
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn free_count(&self) -> usize {
        self.free_count
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.blocks
    }

    pub fn poly_vars(&self) -> &[PolyVariable] {
        &self.poly_vars
    }

    pub fn sos_vars(&self) -> &[SosVariable] {
        &self.sos_vars
    }

    pub fn scalars(&self) -> &[ScalarVariable] {
        &self.scalars
    }

    pub fn identities(&self) -> &[(String, LinPoly)] {
        &self.identities
    }

    /// Unknown polynomial of total degree `degree` over the program variables.
    pub fn new_poly_var(&mut self, name: &str, degree: u32) -> PolyVariable {
        self.new_poly_var_with_basis(name, MonomialBasis::new(&self.vars, degree))
    }

    pub fn new_poly_var_with_basis(&mut self, name: &str, basis: MonomialBasis) -> PolyVariable {
        let slots = (self.free_count..self.free_count + basis.len()).collect();
        self.free_count += basis.len();
        let v = PolyVariable {
            name: name.to_string(),
            basis,
            slots,
        };
        self.poly_vars.push(v.clone());
        v
    }

    /// SOS polynomial of degree `degree`; odd degrees are rounded up.
    pub fn new_sos_var(&mut self, name: &str, degree: u32) -> SosVariable {
        let d = if degree % 2 == 1 {
            info!("sos variable {name}: degree {degree} rounded up to {}", degree + 1);
            degree + 1
        } else {
            degree
        };
        self.new_sos_var_with_basis(name, MonomialBasis::new(&self.vars, d / 2))
    }

    pub fn new_sos_var_with_basis(&mut self, name: &str, basis: MonomialBasis) -> SosVariable {
        let block = self.blocks.len();
        self.blocks.push(basis.len());
        let v = SosVariable {
            name: name.to_string(),
            basis,
            block,
        };
        self.sos_vars.push(v.clone());
        v
    }

    /// Scalar unknown; with `lower = Some(l)` it is `l + s` for a 1x1 PSD `s`.
    pub fn new_scalar(&mut self, name: &str, lower: Option<f64>) -> ScalarVariable {
        let expr = match lower {
            Some(l) => {
                let block = self.blocks.len();
                self.blocks.push(1);
                let mut e = LinExpr::constant(l);
                e.add_term(Var::gram(block, 0, 0), 1.0);
                e
            }
            None => {
                let s = self.free_count;
                self.free_count += 1;
                LinExpr::var(Var::Free(s))
            }
        };
        let v = ScalarVariable {
            name: name.to_string(),
            lower,
            expr,
        };
        self.scalars.push(v.clone());
        v
    }

    /// Lifts a known polynomial onto the program variables.
    pub fn lift(&self, p: &Polynomial) -> Result<LinPoly, SosError> {
        Ok(LinPoly::from_poly(&self.vars, p)?)
    }

    /// `e * p` for a scalar expression and a known polynomial.
    pub fn scaled(&self, e: &LinExpr, p: &Polynomial) -> Result<LinPoly, SosError> {
        Ok(LinPoly::expr_times(&self.vars, e, p)?)
    }

    /// Requires `expr == 0` identically.
    pub fn add_identity(&mut self, label: &str, expr: LinPoly) -> Result<(), SosError> {
        if *expr.variables() != *self.vars {
            return Err(SosError::VariableMismatch);
        }
        self.identities.push((label.to_string(), expr));
        Ok(())
    }

    /// Minimizes `e` instead of solving a pure feasibility problem.
    pub fn minimize(&mut self, e: LinExpr) {
        self.objective = Some(e);
    }

    /// Number of SDP equality rows the identities compile to.
    pub fn row_count(&self) -> usize {
        self.identities.iter().map(|(_, p)| p.num_terms()).sum()
    }

    fn form_of(&self, e: &LinExpr) -> LinearForm<f64> {
        let mut form = LinearForm::new();
        for (v, c) in e.linear_terms() {
            match v {
                Var::Free(i) => form = form.free_coef(i, c),
                // entry (i, j) with i != j stands for 2 Q_ij
                Var::Gram { block, row, col } => {
                    let k = if row == col { c } else { 0.5 * c };
                    form.push_entry(block, row, col, k);
                }
                Var::One => {}
            }
        }
        form
    }

    pub fn compile(&self) -> Result<SdpProblem<f64>, SosError> {
        if self.identities.is_empty() {
            return Err(SosError::Empty);
        }
        let mut constraints = Vec::with_capacity(self.row_count());
        for (_, p) in &self.identities {
            for (_, e) in p.terms() {
                constraints.push(SdpConstraint {
                    form: self.form_of(e),
                    rhs: -e.constant_part(),
                });
            }
        }
        let objective = match &self.objective {
            Some(e) => self.form_of(e),
            None => LinearForm::new(),
        };
        Ok(SdpProblem::new(self.blocks.clone(), self.free_count, constraints, objective)?)
    }

    pub fn compile_and_solve(&self, opts: &SdpOptions<f64>) -> Result<SosOutcome, SosError> {
        let problem = self.compile()?;
        let sol = sdp::solve_with_reduction(&problem, opts);
        Ok(match sol.status {
            SdpStatus::Optimal => SosOutcome::Feasible(SosSolution::new(self, sol)),
            SdpStatus::InfeasibleCertificate => SosOutcome::Infeasible { ray: sol.y.clone(), sdp: sol },
            _ => SosOutcome::Inconclusive { sdp: sol },
        })
    }
}

#[derive(Debug, Clone)]
pub enum SosOutcome {
    Feasible(SosSolution),
    /// Primal infeasible; `ray` is the verified improving ray.
    Infeasible { ray: Vec<f64>, sdp: SdpSolution<f64> },
    Inconclusive { sdp: SdpSolution<f64> },
}

impl SosOutcome {
    pub fn sdp(&self) -> &SdpSolution<f64> {
        match self {
            SosOutcome::Feasible(s) => &s.sdp,
            SosOutcome::Infeasible { sdp, .. } | SosOutcome::Inconclusive { sdp } => sdp,
        }
    }
}

/// Numerical values of every decision variable.
#[derive(Debug, Clone)]
pub struct SosSolution {
    pub sdp: SdpSolution<f64>,
    program: SosProgram,
}

impl SosSolution {
    fn new(program: &SosProgram, sdp: SdpSolution<f64>) -> Self {
        SosSolution {
            sdp,
            program: program.clone(),
        }
    }

    pub fn program(&self) -> &SosProgram {
        &self.program
    }

    pub fn value_of(&self, v: Var) -> f64 {
        match v {
            Var::One => 1.0,
            Var::Free(i) => self.sdp.free[i],
            Var::Gram { block, row, col } => self.sdp.x[block][(row, col)],
        }
    }

    pub fn eval(&self, p: &LinPoly) -> Polynomial {
        p.eval(&|v| self.value_of(v))
    }

    pub fn scalar(&self, s: &ScalarVariable) -> f64 {
        s.expr.eval(&|v| self.value_of(v))
    }

    pub fn poly(&self, v: &PolyVariable) -> Polynomial {
        self.eval(&v.lin())
    }

    pub fn sos(&self, v: &SosVariable) -> Polynomial {
        self.eval(&v.lin())
    }

    pub fn gram(&self, v: &SosVariable) -> &Mat<f64> {
        &self.sdp.x[v.block]
    }

    /// Largest coefficient of every identity evaluated at the solution.
    pub fn identity_residuals(&self) -> Vec<(String, f64)> {
        self.program
            .identities
            .iter()
            .map(|(l, p)| (l.clone(), self.eval(p).max_abs_coeff()))
            .collect()
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.identity_residuals()
            .into_iter()
            .map(|r| r.1)
            .fold(0.0, f64::max)
    }

    pub fn certificate(&self) -> SosCertificate {
        let mut polys = BTreeMap::new();
        for v in &self.program.poly_vars {
            polys.insert(v.name.clone(), PolyRecord::new(&self.poly(v), None));
        }
        for v in &self.program.sos_vars {
            let g = GramSummary::of(self.gram(v));
            polys.insert(v.name.clone(), PolyRecord::new(&self.sos(v), Some(g)));
        }
        let scalars = self
            .program
            .scalars
            .iter()
            .map(|s| (s.name.clone(), self.scalar(s)))
            .collect();
        SosCertificate {
            variables: self.program.vars.to_vec(),
            polynomials: polys,
            scalars,
            max_identity_residual: self.max_identity_residual(),
        }
    }
}

/// Eigenvalue summary of a Gram matrix.
#[derive(Debug, Clone, Serialize)]
pub struct GramSummary {
    pub size: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Eigenvalues below [`GRAM_RANK_TOL`].
    pub near_zero: usize,
    pub numerical_rank: usize,
}

impl GramSummary {
    pub fn of(q: &Mat<f64>) -> Self {
        let ev = sym_eigenvalues(q);
        let near_zero = ev.iter().filter(|&&l| l < GRAM_RANK_TOL).count();
        GramSummary {
            size: ev.len(),
            min_eigenvalue: ev.first().copied().unwrap_or(0.0),
            max_eigenvalue: ev.last().copied().unwrap_or(0.0),
            near_zero,
            numerical_rank: ev.len() - near_zero,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PolyRecord {
    pub exponents: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gram: Option<GramSummary>,
}

impl PolyRecord {
    pub fn new(p: &Polynomial, gram: Option<GramSummary>) -> Self {
        let (exponents, coefficients) = p
            .terms()
            .map(|(m, c)| (m.exponents(p.nvars()), c))
            .unzip();
        PolyRecord {
            exponents,
            coefficients,
            text: p.to_string(),
            gram,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SosCertificate {
    pub variables: Vec<String>,
    pub polynomials: BTreeMap<String, PolyRecord>,
    pub scalars: BTreeMap<String, f64>,
    pub max_identity_residual: f64,
}

/// Result of [`check_sos`].
#[derive(Debug, Clone)]
pub enum SosCheck {
    Sos { basis: MonomialBasis, gram: Mat<f64> },
    /// Not SOS; `ray` is `None` when the degree is odd (no SDP needed).
    NotSos { ray: Option<Vec<f64>> },
    Inconclusive { status: SdpStatus },
}

/// Decides whether `p` is a sum of squares by searching for a PSD Gram matrix.
pub fn check_sos(p: &Polynomial, opts: &SdpOptions<f64>) -> Result<SosCheck, SosError> {
    if p.is_zero() {
        let basis = MonomialBasis::new(p.variables(), 0);
        return Ok(SosCheck::Sos {
            basis,
            gram: Mat::zeros(1, 1),
        });
    }
    let d = p.degree();
    if d % 2 == 1 {
        return Ok(SosCheck::NotSos { ray: None });
    }
    let mut prog = SosProgram::new(p.variables());
    let s = prog.new_sos_var("s", d);
    let lhs = s.lin().sub(&prog.lift(p)?)?;
    prog.add_identity("gram", lhs)?;
    Ok(match prog.compile_and_solve(opts)? {
        SosOutcome::Feasible(sol) => SosCheck::Sos {
            gram: sol.gram(&s).clone(),
            basis: s.basis,
        },
        SosOutcome::Infeasible { ray, .. } => SosCheck::NotSos { ray: Some(ray) },
        SosOutcome::Inconclusive { sdp } => SosCheck::Inconclusive { status: sdp.status },
    })
}

/// `Z^T Q Z` for a basis and a symmetric matrix.
pub fn gram_polynomial(basis: &MonomialBasis, q: &Mat<f64>) -> Polynomial {
    let z = basis.entries();
    let mut terms = Vec::with_capacity(z.len() * z.len());
    for i in 0..z.len() {
        for j in 0..z.len() {
            terms.push((z[i].mul(&z[j]), q[(i, j)]));
        }
    }
    Polynomial::from_terms(basis.variables(), terms)
}

/// Default SOS multiplier degree: the largest even degree keeping
/// `deg(multiplier) + constraint_degree <= target`.
pub fn sos_multiplier_degree(target: u32, constraint_degree: u32) -> u32 {
    let d = target.saturating_sub(constraint_degree);
    d - d % 2
}

/// Default degree for a free (equality) multiplier.
pub fn free_multiplier_degree(target: u32, constraint_degree: u32) -> u32 {
    target.saturating_sub(constraint_degree)
}

/// Products used as multiplier generators: the constraints themselves and,
/// with `schmudgen`, all pairwise products as well.
pub fn generators(constraints: &[Polynomial], schmudgen: bool) -> Vec<Polynomial> {
    let mut out = constraints.to_vec();
    if schmudgen {
        for i in 0..constraints.len() {
            for j in i + 1..constraints.len() {
                out.push(constraints[i].mul_poly(&constraints[j]));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn variable_sizes() {
        let mut prog = SosProgram::new(&vars(&["x1", "x2"]));
        assert_eq!(prog.new_poly_var("c", 0).slots.len(), 1);
        assert_eq!(prog.new_poly_var("v", 6).slots.len(), 28);
        assert_eq!(prog.new_sos_var("a", 2).basis.len(), 3);
        assert_eq!(prog.new_sos_var("b", 0).basis.len(), 1);
        assert_eq!(prog.new_sos_var("c", 4).basis.len(), 6);
        assert_eq!(prog.new_sos_var("odd", 3).basis.len(), 6);
        let mut p3 = SosProgram::new(&vars(&["x", "y", "z"]));
        assert_eq!(p3.new_poly_var("v", 4).slots.len(), 35);
        // slots are disjoint
        let a = p3.new_poly_var("a", 1);
        assert_eq!(a.slots, vec![35, 36, 37, 38]);
    }

    #[test]
    fn perfect_square_is_sos() {
        let v = vars(&["x1", "x2"]);
        let p = parse("x1^2 - 2*x1*x2 + x2^2", &v).unwrap();
        match check_sos(&p, &SdpOptions::default()).unwrap() {
            SosCheck::Sos { basis, gram } => {
                let back = gram_polynomial(&basis, &gram);
                assert!(back.sub_poly(&p).max_abs_coeff() <= 1e-7);
            }
            other => panic!("{other:?}"),
        }
        let q = parse("x1^2 + 1", &v).unwrap();
        assert!(matches!(check_sos(&q, &SdpOptions::default()).unwrap(), SosCheck::Sos { .. }));
        let odd = parse("x1^3 + 1", &v).unwrap();
        assert!(matches!(
            check_sos(&odd, &SdpOptions::default()).unwrap(),
            SosCheck::NotSos { ray: None }
        ));
    }

    #[test]
    fn pinned_scalar() {
        let v = vars(&["x"]);
        let mut prog = SosProgram::new(&v);
        let s = prog.new_scalar("s", None);
        let e = prog.scaled(&s.expr, &Polynomial::constant(&v, 1.0)).unwrap();
        let one = prog.lift(&Polynomial::constant(&v, 1.0)).unwrap();
        prog.add_identity("pin", e.sub(&one).unwrap()).unwrap();
        assert_eq!(prog.row_count(), 1);
        match prog.compile_and_solve(&SdpOptions::default()).unwrap() {
            SosOutcome::Feasible(sol) => assert!((sol.scalar(&s) - 1.0).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_constant_with_bounded_scalar_is_infeasible() {
        // s == x^2 - gamma with gamma >= 0.1 and s SOS
        let v = vars(&["x"]);
        let mut prog = SosProgram::new(&v);
        let s = prog.new_sos_var("s", 2);
        let g = prog.new_scalar("gamma", Some(0.1));
        let x2 = prog.lift(&parse("x^2", &v).unwrap()).unwrap();
        let gp = prog.scaled(&g.expr, &Polynomial::constant(&v, 1.0)).unwrap();
        let rhs = x2.sub(&gp).unwrap();
        prog.add_identity("id", s.lin().sub(&rhs).unwrap()).unwrap();
        let out = prog.compile_and_solve(&SdpOptions::default()).unwrap();
        assert!(matches!(out, SosOutcome::Infeasible { .. }), "{out:?}");
    }

    #[test]
    fn materialized_identity_matches() {
        let v = vars(&["x"]);
        let mut prog = SosProgram::new(&v);
        let s = prog.new_sos_var("s", 2);
        let p = parse("x^2 + 1", &v).unwrap();
        prog.add_identity("id", s.lin().sub(&prog.lift(&p).unwrap()).unwrap())
            .unwrap();
        let SosOutcome::Feasible(sol) = prog.compile_and_solve(&SdpOptions::default()).unwrap() else {
            panic!("expected feasible");
        };
        assert!(sol.sos(&s).sub_poly(&p).max_abs_coeff() < 1e-7);
        assert!(sol.max_identity_residual() < 1e-7);
        let cert = sol.certificate();
        let json = serde_json::to_string(&cert).unwrap();
        assert!(json.contains("\"s\""));
        assert_eq!(cert.polynomials["s"].gram.as_ref().unwrap().size, 2);
    }

    #[test]
    fn multiplier_degree_heuristic() {
        assert_eq!(sos_multiplier_degree(6, 2), 4);
        assert_eq!(sos_multiplier_degree(6, 3), 2);
        assert_eq!(sos_multiplier_degree(2, 4), 0);
        assert_eq!(free_multiplier_degree(6, 1), 5);
        let v = vars(&["x"]);
        let g = generators(&[parse("x", &v).unwrap(), parse("1 - x", &v).unwrap()], true);
        assert_eq!(g.len(), 3);
    }
}
