//! Sparse multivariate polynomials over named variables.
//!
//! Exponents are exact; coefficients are a generic floating-point [`Scalar`].
//! Terms are kept in graded order and terms whose magnitude falls below
//! [`CANON_EPS`] are dropped after every arithmetic operation.

mod parse;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use parse::parse;

/// Coefficients with magnitude below this are removed by canonicalization.
pub const CANON_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("undeclared variable `{name}` at position {pos}")]
    UndeclaredVariable { name: String, pos: usize },
    #[error("invalid exponent at position {pos}: exponents must be nonnegative integer literals")]
    BadExponent { pos: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A monomial as a sorted list of `(variable index, exponent)` pairs with no
/// zero exponents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Monomial(Vec<(u32, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    /// The monomial `x_var`.
    pub fn var(var: usize) -> Self {
        Monomial(vec![(var as u32, 1)])
    }

    /// Builds a monomial from a dense exponent vector.
    pub fn from_exponents(exps: &[u32]) -> Self {
        Monomial(
            exps.iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| (i as u32, e))
                .collect(),
        )
    }

    /// Builds a monomial from arbitrary `(var, exp)` pairs, merging repeats.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut map: BTreeMap<u32, u32> = BTreeMap::new();
        for (v, e) in pairs {
            *map.entry(v as u32).or_insert(0) += e;
        }
        Monomial(map.into_iter().filter(|&(_, e)| e > 0).collect())
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent(&self, var: usize) -> u32 {
        self.0
            .iter()
            .find(|&&(v, _)| v as usize == var)
            .map_or(0, |&(_, e)| e)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.0.iter().map(|&(v, e)| (v as usize, e))
    }

    /// Dense exponent vector of length `nvars`.
    pub fn exponents(&self, nvars: usize) -> Vec<u32> {
        let mut out = vec![0; nvars];
        for (v, e) in self.pairs() {
            out[v] = e;
        }
        out
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    /// Partial derivative: returns the exponent that came down and the
    /// reduced monomial, or `None` when the variable is absent.
    pub fn differentiate(&self, var: usize) -> Option<(u32, Monomial)> {
        let pos = self.0.iter().position(|&(v, _)| v as usize == var)?;
        let e = self.0[pos].1;
        let mut out = self.0.clone();
        if e == 1 {
            out.remove(pos);
        } else {
            out[pos].1 = e - 1;
        }
        Some((e, Monomial(out)))
    }

    pub fn eval<T: Scalar>(&self, point: &[T]) -> T {
        self.0
            .iter()
            .fold(T::one(), |acc, &(v, e)| acc * point[v as usize].powi(e as i32))
    }

    /// Re-indexes variables through `map` (old index -> new index).
    pub fn remap(&self, map: &[usize]) -> Monomial {
        Monomial::from_pairs(self.pairs().map(|(v, e)| (map[v], e)))
    }
}

impl Ord for Monomial {
    /// Graded order: total degree first, then by exponent of the lowest
    /// variable index (larger exponent first), so the degree-2 block in two
    /// variables reads `x1^2, x1*x2, x2^2`.
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            let (a, b) = (&self.0, &other.0);
            for k in 0..a.len().min(b.len()) {
                let (va, ea) = a[k];
                let (vb, eb) = b[k];
                if va != vb {
                    // the monomial carrying the earlier variable sorts first
                    return va.cmp(&vb);
                }
                if ea != eb {
                    return eb.cmp(&ea);
                }
            }
            a.len().cmp(&b.len())
        })
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials in `nvars` variables of total degree `<= degree`, in graded order.
pub fn monomials_up_to(nvars: usize, degree: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    for d in 0..=degree {
        monomials_of_degree(nvars, d, &mut out);
    }
    out
}

/// All monomials in `nvars` variables of total degree exactly `degree`.
pub fn monomials_of_degree(nvars: usize, degree: u32, out: &mut Vec<Monomial>) {
    fn rec(var: usize, nvars: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
        if var + 1 == nvars {
            cur[var] = left;
            out.push(Monomial::from_exponents(cur));
            cur[var] = 0;
            return;
        }
        for e in (0..=left).rev() {
            cur[var] = e;
            rec(var + 1, nvars, left - e, cur, out);
        }
        cur[var] = 0;
    }
    if nvars == 0 {
        if degree == 0 {
            out.push(Monomial::one());
        }
        return;
    }
    let mut cur = vec![0; nvars];
    rec(0, nvars, degree, &mut cur, out);
}

/// A sparse polynomial over an ordered list of named variables.
#[derive(Clone, PartialEq)]
pub struct Poly<T: Scalar> {
    vars: Arc<[String]>,
    terms: BTreeMap<Monomial, T>,
}

impl<T: Scalar> fmt::Debug for Poly<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly[{}]({})", self.vars.join(","), self)
    }
}

impl<T: Scalar> Poly<T> {
    pub fn zero(vars: &[String]) -> Self {
        Poly {
            vars: vars.into(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: &[String], c: T) -> Self {
        Self::from_terms(vars, [(Monomial::one(), c)])
    }

    /// The polynomial `x_i` where `i` indexes `vars`.
    pub fn var(vars: &[String], i: usize) -> Self {
        Self::from_terms(vars, [(Monomial::var(i), T::one())])
    }

    pub fn from_terms(vars: &[String], terms: impl IntoIterator<Item = (Monomial, T)>) -> Self {
        let mut p = Poly {
            vars: vars.into(),
            terms: BTreeMap::new(),
        };
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p.canonicalize();
        p
    }

    pub(crate) fn from_parts(vars: Arc<[String]>, terms: BTreeMap<Monomial, T>) -> Self {
        let mut p = Poly { vars, terms };
        p.canonicalize();
        p
    }

    fn add_term(&mut self, m: Monomial, c: T) {
        let e = self.terms.entry(m).or_insert_with(T::zero);
        *e = *e + c;
    }

    fn canonicalize(&mut self) {
        let eps = T::lit(CANON_EPS);
        self.terms.retain(|_, c| c.abs() >= eps);
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, T)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn term_map(&self) -> &BTreeMap<Monomial, T> {
        &self.terms
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> T {
        self.terms.get(m).copied().unwrap_or_else(T::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Degree in the subset of variables selected by `mask`.
    pub fn degree_in(&self, mask: &[bool]) -> u32 {
        self.terms
            .keys()
            .map(|m| m.pairs().filter(|&(v, _)| mask[v]).map(|(_, e)| e).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> T {
        self.terms.values().fold(T::zero(), |a, c| a.max(c.abs()))
    }

    pub fn evaluate(&self, point: &[T]) -> Result<T, PolyError> {
        if point.len() != self.vars.len() {
            return Err(PolyError::DimensionMismatch {
                expected: self.vars.len(),
                got: point.len(),
            });
        }
        Ok(self.eval(point))
    }

    /// Evaluation without the dimension check.
    pub fn eval(&self, point: &[T]) -> T {
        self.terms
            .iter()
            .fold(T::zero(), |acc, (m, &c)| acc + c * m.eval(point))
    }

    /// Rewrites this polynomial over `vars`, which must contain every
    /// variable that actually occurs in a term.
    pub fn with_variables(&self, vars: &[String]) -> Result<Self, PolyError> {
        if *self.vars == *vars {
            return Ok(self.clone());
        }
        let mut map = Vec::with_capacity(self.vars.len());
        for name in self.vars.iter() {
            map.push(vars.iter().position(|v| v == name));
        }
        let mut terms = BTreeMap::new();
        for (m, &c) in &self.terms {
            let mut pairs = Vec::new();
            for (v, e) in m.pairs() {
                match map[v] {
                    Some(nv) => pairs.push((nv, e)),
                    None => {
                        return Err(PolyError::UndeclaredVariable {
                            name: self.vars[v].clone(),
                            pos: 0,
                        })
                    }
                }
            }
            terms.insert(Monomial::from_pairs(pairs), c);
        }
        Ok(Poly {
            vars: vars.into(),
            terms,
        })
    }

    /// Brings `self` and `other` onto a common variable list: the variables
    /// of `self` followed by those of `other` that are new.
    fn unify(&self, other: &Self) -> (Self, Self) {
        if Arc::ptr_eq(&self.vars, &other.vars) || *self.vars == *other.vars {
            let mut b = other.clone();
            b.vars = self.vars.clone();
            return (self.clone(), b);
        }
        let mut vars: Vec<String> = self.vars.to_vec();
        for v in other.vars.iter() {
            if !vars.contains(v) {
                vars.push(v.clone());
            }
        }
        let a = self.with_variables(&vars).expect("superset");
        let b = other.with_variables(&vars).expect("superset");
        (a, b)
    }

    pub fn scale(&self, k: T) -> Self {
        Poly::from_parts(
            self.vars.clone(),
            self.terms.iter().map(|(m, &c)| (m.clone(), c * k)).collect(),
        )
    }

    pub fn add_poly(&self, other: &Self) -> Self {
        let (mut a, b) = self.unify(other);
        for (m, c) in b.terms {
            a.add_term(m, c);
        }
        a.canonicalize();
        a
    }

    pub fn sub_poly(&self, other: &Self) -> Self {
        self.add_poly(&other.scale(-T::one()))
    }

    pub fn mul_poly(&self, other: &Self) -> Self {
        let (a, b) = self.unify(other);
        let mut terms: BTreeMap<Monomial, T> = BTreeMap::new();
        for (ma, &ca) in &a.terms {
            for (mb, &cb) in &b.terms {
                let e = terms.entry(ma.mul(mb)).or_insert_with(T::zero);
                *e = *e + ca * cb;
            }
        }
        Poly::from_parts(a.vars, terms)
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Poly::constant(&self.vars, T::one());
        let mut base = self.clone();
        let mut k = e;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul_poly(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul_poly(&base);
            }
        }
        acc
    }

    /// Partial derivative with respect to variable index `var`.
    pub fn derivative(&self, var: usize) -> Self {
        let mut terms = BTreeMap::new();
        for (m, &c) in &self.terms {
            if let Some((e, dm)) = m.differentiate(var) {
                let t = terms.entry(dm).or_insert_with(T::zero);
                *t = *t + c * T::lit(e as f64);
            }
        }
        Poly::from_parts(self.vars.clone(), terms)
    }

    pub fn gradient(&self) -> PolyVec<T> {
        PolyVec::new((0..self.nvars()).map(|i| self.derivative(i)).collect())
    }

    /// Substitutes every variable by the matching component of `subst`.
    ///
    /// The result lives over the variable list of the substituted components.
    pub fn compose(&self, subst: &PolyVec<T>) -> Result<Self, PolyError> {
        if subst.len() != self.nvars() {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars(),
                got: subst.len(),
            });
        }
        let vars: Vec<String> = match subst.components().first() {
            Some(p) => p.variables().to_vec(),
            None => Vec::new(),
        };
        let comps: Vec<Poly<T>> = subst
            .components()
            .iter()
            .map(|p| p.with_variables_union(&vars))
            .collect();
        let vars = comps.first().map(|p| p.vars.clone()).unwrap_or_else(|| vars.into());
        let mut cache = PowerCache::new(&comps);
        let mut out: BTreeMap<Monomial, T> = BTreeMap::new();
        for (m, &c) in &self.terms {
            let mut prod = Poly::constant(&vars, c);
            for (v, e) in m.pairs() {
                prod = prod.mul_poly(cache.power(v, e));
            }
            for (pm, pc) in prod.terms {
                let t = out.entry(pm).or_insert_with(T::zero);
                *t = *t + pc;
            }
        }
        Ok(Poly::from_parts(vars, out))
    }

    fn with_variables_union(&self, vars: &[String]) -> Self {
        let mut all: Vec<String> = vars.to_vec();
        for v in self.vars.iter() {
            if !all.contains(v) {
                all.push(v.clone());
            }
        }
        self.with_variables(&all).expect("superset")
    }

    /// Replaces the named variables by numeric values; other variables stay.
    pub fn substitute_values(&self, values: &[(String, T)]) -> Self {
        let fixed: Vec<Option<T>> = self
            .vars
            .iter()
            .map(|v| values.iter().find(|(n, _)| n == v).map(|&(_, x)| x))
            .collect();
        let mut terms = BTreeMap::new();
        for (m, &c) in &self.terms {
            let mut k = c;
            let mut pairs = Vec::new();
            for (v, e) in m.pairs() {
                match fixed[v] {
                    Some(x) => k = k * x.powi(e as i32),
                    None => pairs.push((v, e)),
                }
            }
            let t = terms.entry(Monomial::from_pairs(pairs)).or_insert_with(T::zero);
            *t = *t + k;
        }
        Poly::from_parts(self.vars.clone(), terms)
    }

    /// Converts coefficients to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Poly<U> {
        Poly::from_parts(
            self.vars.clone(),
            self.terms
                .iter()
                .map(|(m, &c)| (m.clone(), U::lit(c.to_f64_lossy())))
                .collect(),
        )
    }
}

struct PowerCache<'a, T: Scalar> {
    base: &'a [Poly<T>],
    powers: BTreeMap<(usize, u32), Poly<T>>,
}

impl<'a, T: Scalar> PowerCache<'a, T> {
    fn new(base: &'a [Poly<T>]) -> Self {
        PowerCache {
            base,
            powers: BTreeMap::new(),
        }
    }

    fn power(&mut self, v: usize, e: u32) -> &Poly<T> {
        if !self.powers.contains_key(&(v, e)) {
            let p = if e == 1 {
                self.base[v].clone()
            } else {
                let prev = self.power(v, e - 1).clone();
                prev.mul_poly(&self.base[v])
            };
            self.powers.insert((v, e), p);
        }
        &self.powers[&(v, e)]
    }
}

impl<T: Scalar> fmt::Display for Poly<T> {
    /// Prints in the expression grammar accepted by [`parse`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, &c)) in self.terms.iter().enumerate() {
            let neg = c < T::zero();
            let mag = c.abs();
            if k == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            let factors: Vec<String> = m
                .pairs()
                .map(|(v, e)| {
                    if e == 1 {
                        self.vars[v].clone()
                    } else {
                        format!("{}^{}", self.vars[v], e)
                    }
                })
                .collect();
            if factors.is_empty() {
                write!(f, "{}", mag)?;
            } else if mag == T::one() {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{}*{}", mag, factors.join("*"))?;
            }
        }
        Ok(())
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident, $inner:ident) => {
        impl<'a, T: Scalar> $tr<&'a Poly<T>> for &'a Poly<T> {
            type Output = Poly<T>;
            fn $method(self, rhs: &'a Poly<T>) -> Poly<T> {
                self.$inner(rhs)
            }
        }
        impl<T: Scalar> $tr<Poly<T>> for Poly<T> {
            type Output = Poly<T>;
            fn $method(self, rhs: Poly<T>) -> Poly<T> {
                self.$inner(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, add_poly);
forward_binop!(Sub, sub, sub_poly);
forward_binop!(Mul, mul, mul_poly);

impl<T: Scalar> Neg for &Poly<T> {
    type Output = Poly<T>;
    fn neg(self) -> Poly<T> {
        self.scale(-T::one())
    }
}

impl<T: Scalar> Neg for Poly<T> {
    type Output = Poly<T>;
    fn neg(self) -> Poly<T> {
        self.scale(-T::one())
    }
}

/// A vector of polynomials over a shared variable list, e.g. a vector field
/// or a reset map.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyVec<T: Scalar> {
    comps: Vec<Poly<T>>,
}

impl<T: Scalar> PolyVec<T> {
    /// Builds the vector, moving all components onto the union of their
    /// variable lists.
    pub fn new(comps: Vec<Poly<T>>) -> Self {
        let mut vars: Vec<String> = Vec::new();
        for p in &comps {
            for v in p.variables() {
                if !vars.contains(v) {
                    vars.push(v.clone());
                }
            }
        }
        let comps = comps
            .into_iter()
            .map(|p| p.with_variables(&vars).expect("superset"))
            .collect();
        PolyVec { comps }
    }

    /// The identity map `x -> x` over `vars`.
    pub fn identity(vars: &[String]) -> Self {
        PolyVec {
            comps: (0..vars.len()).map(|i| Poly::var(vars, i)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn components(&self) -> &[Poly<T>] {
        &self.comps
    }

    pub fn get(&self, i: usize) -> &Poly<T> {
        &self.comps[i]
    }

    pub fn eval(&self, point: &[T]) -> Vec<T> {
        self.comps.iter().map(|p| p.eval(point)).collect()
    }

    pub fn evaluate(&self, point: &[T]) -> Result<Vec<T>, PolyError> {
        self.comps.iter().map(|p| p.evaluate(point)).collect()
    }

    pub fn max_degree(&self) -> u32 {
        self.comps.iter().map(Poly::degree).max().unwrap_or(0)
    }

    /// Inner product `sum_i self_i * other_i`.
    pub fn dot(&self, other: &PolyVec<T>) -> Poly<T> {
        let mut acc: Option<Poly<T>> = None;
        for (a, b) in self.comps.iter().zip(&other.comps) {
            let t = a.mul_poly(b);
            acc = Some(match acc {
                None => t,
                Some(s) => s.add_poly(&t),
            });
        }
        acc.unwrap_or_else(|| Poly::zero(&[]))
    }

    pub fn map(&self, f: impl Fn(&Poly<T>) -> Poly<T>) -> Self {
        PolyVec::new(self.comps.iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn graded_order_and_basis_count() {
        let b = monomials_up_to(2, 2);
        let v = vars(&["x1", "x2"]);
        let names: Vec<String> = b
            .iter()
            .map(|m| Poly::<f64>::from_terms(&v, [(m.clone(), 1.0)]).to_string())
            .collect();
        assert_eq!(names, ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]);
        assert_eq!(monomials_up_to(2, 6).len(), 28);
        assert_eq!(monomials_up_to(3, 4).len(), 35);
        let mut sorted = monomials_up_to(3, 5);
        let orig = sorted.clone();
        sorted.sort();
        assert_eq!(sorted, orig);
    }

    #[test]
    fn difference_of_squares() {
        let v = vars(&["x1", "x2"]);
        let a = parse::<f64>("x1 + x2", &v).unwrap();
        let b = parse::<f64>("x1 - x2", &v).unwrap();
        let expect = parse::<f64>("x1^2 - x2^2", &v).unwrap();
        assert_eq!(&a * &b, expect);
    }

    #[test]
    fn additive_inverse_is_zero() {
        let v = vars(&["x1", "x2"]);
        let p = parse::<f64>("3*x1^3 - 0.25*x1*x2 + 7", &v).unwrap();
        assert!((&p + &p.scale(-1.0)).is_zero());
    }

    #[test]
    fn binomial_cube() {
        let v = vars(&["x1", "x2"]);
        let s = parse::<f64>("x1 + x2", &v).unwrap();
        let cube = &(&s * &s) * &s;
        let exps = [[3, 0], [2, 1], [1, 2], [0, 3]];
        let coeffs = [1.0, 3.0, 3.0, 1.0];
        assert_eq!(cube.num_terms(), 4);
        for (e, c) in exps.iter().zip(coeffs) {
            assert_eq!(cube.coeff(&Monomial::from_exponents(e)), c);
        }
        assert_eq!(cube.degree(), 3);
    }

    #[test]
    fn evaluation_examples() {
        let v = vars(&["x1", "x2"]);
        let p = parse::<f64>("x1^2 + x2^2", &v).unwrap();
        assert_eq!(p.evaluate(&[3.0, 4.0]).unwrap(), 25.0);
        assert_eq!(Poly::<f64>::zero(&v).evaluate(&[1.5, -2.0]).unwrap(), 0.0);
        let field = parse::<f64>("-9.8 + 0.5*x2^2", &v).unwrap();
        assert!((field.evaluate(&[0.0, 2.0]).unwrap() + 7.8).abs() < 1e-12);
        assert_eq!(
            p.evaluate(&[1.0]),
            Err(PolyError::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn gradient_examples() {
        let v = vars(&["x1", "x2"]);
        let p = parse::<f64>("x1^2 + x2^2", &v).unwrap();
        let g = p.gradient();
        assert_eq!(g.get(0), &parse::<f64>("2*x1", &v).unwrap());
        assert_eq!(g.get(1), &parse::<f64>("2*x2", &v).unwrap());
        let c = Poly::<f64>::constant(&v, 4.0).gradient();
        assert!(c.components().iter().all(Poly::is_zero));
    }

    #[test]
    fn compose_examples() {
        let v = vars(&["x1", "x2"]);
        let p = parse::<f64>("x2^2", &v).unwrap();
        let reset = PolyVec::new(vec![
            Poly::zero(&v),
            parse::<f64>("-0.7*x2", &v).unwrap(),
        ]);
        let out = p.compose(&reset).unwrap();
        assert!((out.coeff(&Monomial::from_exponents(&[0, 2])) - 0.49).abs() < 1e-15);
        assert_eq!(out.num_terms(), 1);

        let q = parse::<f64>("x1^3 - 2*x1*x2 + 5", &v).unwrap();
        assert_eq!(q.compose(&PolyVec::identity(&v)).unwrap(), q);

        let x2 = parse::<f64>("x2", &v).unwrap();
        let drag_reset = PolyVec::new(vec![
            Poly::zero(&v),
            parse::<f64>("-0.8*x2*(1 - 0.001*x2^2)", &v).unwrap(),
        ]);
        let out = x2.compose(&drag_reset).unwrap();
        assert!((out.coeff(&Monomial::from_exponents(&[0, 1])) + 0.8).abs() < 1e-15);
        assert!((out.coeff(&Monomial::from_exponents(&[0, 3])) - 0.0008).abs() < 1e-15);
        assert_eq!(out.num_terms(), 2);

        assert!(matches!(
            q.compose(&PolyVec::identity(&vars(&["x1"]))),
            Err(PolyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn variable_union_is_order_stable() {
        let a = parse::<f64>("x + 1", &vars(&["x"])).unwrap();
        let b = parse::<f64>("y", &vars(&["y"])).unwrap();
        let s = &a + &b;
        assert_eq!(s.variables(), &vars(&["x", "y"])[..]);
        assert_eq!(s.evaluate(&[2.0, 3.0]).unwrap(), 6.0);
    }

    #[test]
    fn canonicalization_drops_tiny_terms() {
        let v = vars(&["x"]);
        let p = Poly::<f64>::from_terms(&v, [(Monomial::var(0), 1e-15), (Monomial::one(), 1.0)]);
        assert_eq!(p.num_terms(), 1);
    }

    #[test]
    fn substitute_parameter_values() {
        let v = vars(&["x1", "x2", "p"]);
        let p = parse::<f64>("p*x1 - x2 + p^2", &v).unwrap();
        let q = p.substitute_values(&[("p".to_string(), 2.0)]);
        assert_eq!(q.evaluate(&[1.0, 1.0, 99.0]).unwrap(), 5.0);
    }

    #[test]
    fn generic_over_f32() {
        let v = vars(&["x1", "x2"]);
        let p = parse::<f32>("(x1 + x2)^2", &v).unwrap();
        assert_eq!(p.evaluate(&[1.0f32, 2.0]).unwrap(), 9.0f32);
    }
}
