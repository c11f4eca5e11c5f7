//! Polynomials whose coefficients are affine expressions in decision variables.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::poly::{Monomial, PolyError, PolyVec};
use crate::Polynomial;

use super::SosError;

/// A scalar decision variable of the compiled SDP.
///
/// `Gram { block, row, col }` is the matrix entry `Q[row, col]` itself
/// (`row <= col`); `One` is the constant term of an affine expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    One,
    Free(usize),
    Gram { block: usize, row: usize, col: usize },
}

impl Var {
    pub fn gram(block: usize, row: usize, col: usize) -> Self {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        Var::Gram { block, row, col }
    }
}

/// `c_0 + sum_k c_k v_k`
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    terms: BTreeMap<Var, f64>,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut e = Self::zero();
        e.add_term(Var::One, c);
        e
    }

    pub fn var(v: Var) -> Self {
        let mut e = Self::zero();
        e.add_term(v, 1.0);
        e
    }

    pub fn add_term(&mut self, v: Var, c: f64) {
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry(v).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.terms.remove(&v);
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, k: f64) {
        for (&v, &c) in &other.terms {
            self.add_term(v, c * k);
        }
    }

    pub fn scale(&self, k: f64) -> LinExpr {
        let mut out = LinExpr::zero();
        out.add_scaled(self, k);
        out
    }

    pub fn constant_part(&self) -> f64 {
        self.terms.get(&Var::One).copied().unwrap_or(0.0)
    }

    /// Terms other than the constant.
    pub fn linear_terms(&self) -> impl Iterator<Item = (Var, f64)> + '_ {
        self.terms
            .iter()
            .filter(|(v, _)| **v != Var::One)
            .map(|(&v, &c)| (v, c))
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|v| *v == Var::One)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, value: &impl Fn(Var) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|(&v, &c)| if v == Var::One { c } else { c * value(v) })
            .sum()
    }
}

/// A polynomial with [`LinExpr`] coefficients over a fixed variable list.
#[derive(Debug, Clone, PartialEq)]
pub struct LinPoly {
    vars: Arc<[String]>,
    terms: BTreeMap<Monomial, LinExpr>,
}

impl LinPoly {
    pub fn zero(vars: &[String]) -> Self {
        LinPoly {
            vars: vars.into(),
            terms: BTreeMap::new(),
        }
    }

    /// Lifts a known polynomial, rewriting it over `vars`.
    pub fn from_poly(vars: &[String], p: &Polynomial) -> Result<Self, PolyError> {
        let p = p.with_variables(vars)?;
        let mut out = LinPoly::zero(vars);
        for (m, c) in p.terms() {
            out.add_at(m.clone(), &LinExpr::constant(c), 1.0);
        }
        Ok(out)
    }

    /// `e * p` for an affine scalar `e` and known polynomial `p`.
    pub fn expr_times(vars: &[String], e: &LinExpr, p: &Polynomial) -> Result<Self, PolyError> {
        let p = p.with_variables(vars)?;
        let mut out = LinPoly::zero(vars);
        for (m, c) in p.terms() {
            out.add_at(m.clone(), e, c);
        }
        Ok(out)
    }

    pub(crate) fn from_terms(vars: Arc<[String]>, terms: BTreeMap<Monomial, LinExpr>) -> Self {
        LinPoly { vars, terms }
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &LinExpr)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> LinExpr {
        self.terms.get(m).cloned().unwrap_or_default()
    }

    fn add_at(&mut self, m: Monomial, e: &LinExpr, k: f64) {
        let slot = self.terms.entry(m.clone()).or_default();
        slot.add_scaled(e, k);
        if slot.is_zero() {
            self.terms.remove(&m);
        }
    }

    fn check_vars(&self, other: &LinPoly) -> Result<(), SosError> {
        if *self.vars != *other.vars {
            return Err(SosError::VariableMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &LinPoly) -> Result<LinPoly, SosError> {
        self.check_vars(other)?;
        let mut out = self.clone();
        for (m, e) in &other.terms {
            out.add_at(m.clone(), e, 1.0);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &LinPoly) -> Result<LinPoly, SosError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> LinPoly {
        let mut out = LinPoly::zero(&self.vars);
        for (m, e) in &self.terms {
            out.add_at(m.clone(), e, k);
        }
        out
    }

    /// Product with a known polynomial.
    pub fn mul_poly(&self, p: &Polynomial) -> Result<LinPoly, SosError> {
        let p = p.with_variables(&self.vars).map_err(SosError::Poly)?;
        let mut out = LinPoly::zero(&self.vars);
        for (ma, e) in &self.terms {
            for (mb, c) in p.terms() {
                out.add_at(ma.mul(mb), e, c);
            }
        }
        Ok(out)
    }

    /// Product of two affine polynomials; fails unless one side is known.
    pub fn mul(&self, other: &LinPoly) -> Result<LinPoly, SosError> {
        self.check_vars(other)?;
        if let Some(p) = other.as_known() {
            return self.mul_poly(&p);
        }
        if let Some(p) = self.as_known() {
            return other.mul_poly(&p);
        }
        Err(SosError::Bilinear)
    }

    /// The polynomial itself when no decision variable occurs.
    pub fn as_known(&self) -> Option<Polynomial> {
        if self.terms.values().all(LinExpr::is_constant) {
            Some(Polynomial::from_terms(
                &self.vars,
                self.terms.iter().map(|(m, e)| (m.clone(), e.constant_part())),
            ))
        } else {
            None
        }
    }

    pub fn derivative(&self, var: usize) -> LinPoly {
        let mut out = LinPoly::zero(&self.vars);
        for (m, e) in &self.terms {
            if let Some((k, dm)) = m.differentiate(var) {
                out.add_at(dm, e, k as f64);
            }
        }
        out
    }

    /// `grad(self) . f` for a known vector field `f`.
    pub fn lie_derivative(&self, f: &PolyVec<f64>) -> Result<LinPoly, SosError> {
        if f.len() > self.vars.len() {
            return Err(SosError::Poly(PolyError::DimensionMismatch {
                expected: self.vars.len(),
                got: f.len(),
            }));
        }
        let mut out = LinPoly::zero(&self.vars);
        for (i, fi) in f.components().iter().enumerate() {
            out = out.add(&self.derivative(i).mul_poly(fi)?)?;
        }
        Ok(out)
    }

    /// Substitutes variable `i` by `subst[i]` for the first `subst.len()`
    /// variables; the remaining ones are kept. The known components must be
    /// over the same variable list.
    pub fn compose(&self, subst: &PolyVec<f64>) -> Result<LinPoly, SosError> {
        let k = subst.len();
        if k > self.vars.len() {
            return Err(SosError::Poly(PolyError::DimensionMismatch {
                expected: self.vars.len(),
                got: k,
            }));
        }
        let comps: Vec<Polynomial> = subst
            .components()
            .iter()
            .map(|c| c.with_variables(&self.vars))
            .collect::<Result<_, _>>()
            .map_err(SosError::Poly)?;
        let mut powers: Vec<Vec<Polynomial>> = comps
            .iter()
            .map(|c| vec![Polynomial::constant(&self.vars, 1.0), c.clone()])
            .collect();
        let mut out = LinPoly::zero(&self.vars);
        for (m, e) in &self.terms {
            let mut img = Polynomial::constant(&self.vars, 1.0);
            let mut rest = Vec::new();
            for (v, p) in m.pairs() {
                if v < k {
                    let pw = &mut powers[v];
                    while pw.len() <= p as usize {
                        let next = pw.last().expect("nonempty").mul_poly(&comps[v]);
                        pw.push(next);
                    }
                    img = img.mul_poly(&pw[p as usize]);
                } else {
                    rest.push((v, p));
                }
            }
            let tail = Monomial::from_pairs(rest);
            for (mi, c) in img.terms() {
                out.add_at(mi.mul(&tail), e, c);
            }
        }
        Ok(out)
    }

    /// Evaluates every coefficient expression.
    pub fn eval(&self, value: &impl Fn(Var) -> f64) -> Polynomial {
        Polynomial::from_terms(
            &self.vars,
            self.terms.iter().map(|(m, e)| (m.clone(), e.eval(value))),
        )
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse;

    fn v2() -> Vec<String> {
        vec!["x1".into(), "x2".into()]
    }

    #[test]
    fn bilinear_product_is_rejected() {
        let vars = v2();
        let a = LinPoly::expr_times(&vars, &LinExpr::var(Var::Free(0)), &parse("x1", &vars).unwrap()).unwrap();
        let b = LinPoly::expr_times(&vars, &LinExpr::var(Var::Free(1)), &parse("x2", &vars).unwrap()).unwrap();
        assert!(matches!(a.mul(&b), Err(SosError::Bilinear)));
        let k = LinPoly::from_poly(&vars, &parse("x1 + 1", &vars).unwrap()).unwrap();
        let ab = a.mul(&k).unwrap();
        assert_eq!(ab.num_terms(), 2);
    }

    #[test]
    fn compose_matches_known_polynomial() {
        let vars = v2();
        let p: Polynomial = parse("x1^2*x2 - 3*x2 + 2", &vars).unwrap();
        let r = PolyVec::new(vec![parse("x1 + x2", &vars).unwrap(), parse("-x1", &vars).unwrap()]);
        let lp = LinPoly::from_poly(&vars, &p).unwrap();
        let got = lp.compose(&r).unwrap().as_known().unwrap();
        assert_eq!(got, p.compose(&r).unwrap());
        let f = PolyVec::new(vec![parse("x2", &vars).unwrap(), parse("-x1", &vars).unwrap()]);
        let lie = lp.lie_derivative(&f).unwrap().as_known().unwrap();
        assert_eq!(lie, p.gradient().dot(&f));
    }
}
