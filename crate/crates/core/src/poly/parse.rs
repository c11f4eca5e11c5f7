//! Recursive-descent parser for polynomial expressions.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := unary (('*'|'/') unary)*
//! unary  := '-' unary | factor
//! factor := base ('^' uint)?
//! base   := name | number | '(' expr ')'
//! ```
//!
//! Numbers are decimal literals with an optional exponent part (`2.5e-3`).
//! Names must be declared in the variable list passed to [`parse`]. A divisor
//! must be a nonzero constant.

use super::{Monomial, Poly, PolyError};
use crate::scalar::Scalar;

/// Parses `text` into a canonical polynomial over `vars`.
pub fn parse<T: Scalar>(text: &str, vars: &[String]) -> Result<Poly<T>, PolyError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        vars,
    };
    p.skip_ws();
    let out = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    vars: &'a [String],
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> PolyError {
        PolyError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expr<T: Scalar>(&mut self) -> Result<Poly<T>, PolyError> {
        let mut acc = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    self.skip_ws();
                    acc = acc.add_poly(&self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    self.skip_ws();
                    acc = acc.sub_poly(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term<T: Scalar>(&mut self) -> Result<Poly<T>, PolyError> {
        let mut acc = self.unary()?;
        loop {
            self.skip_ws();
            if self.peek() == Some(b'*') {
                self.pos += 1;
                self.skip_ws();
                acc = acc.mul_poly(&self.unary()?);
            } else if self.peek() == Some(b'/') {
                self.pos += 1;
                self.skip_ws();
                let at = self.pos;
                let d: Poly<T> = self.unary()?;
                let c = d.coeff(&Monomial::one());
                if d.degree() > 0 || c == T::zero() {
                    return Err(PolyError::Syntax {
                        pos: at,
                        msg: "divisor must be a nonzero constant".into(),
                    });
                }
                acc = acc.scale(T::one() / c);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary<T: Scalar>(&mut self) -> Result<Poly<T>, PolyError> {
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(self.unary::<T>()?.scale(-T::one()));
        }
        if self.peek() == Some(b'+') {
            self.pos += 1;
            return self.unary();
        }
        self.factor()
    }

    fn factor<T: Scalar>(&mut self) -> Result<Poly<T>, PolyError> {
        let base = self.base()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
            // reject "-2", "1.5" and friends
            if start == self.pos || matches!(self.peek(), Some(b'.') | Some(b'e') | Some(b'E')) {
                return Err(PolyError::BadExponent { pos: start });
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
            let e: u32 = text.parse().map_err(|_| PolyError::BadExponent { pos: start })?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn base<T: Scalar>(&mut self) -> Result<Poly<T>, PolyError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.name(),
            Some(_) => Err(self.err("expected a name, number or `(`")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn number<T: Scalar>(&mut self) -> Result<Poly<T>, PolyError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let v: f64 = text.parse().map_err(|_| PolyError::Syntax {
            pos: start,
            msg: format!("malformed number `{text}`"),
        })?;
        Ok(Poly::constant(self.vars, T::lit(v)))
    }

    fn name<T: Scalar>(&mut self) -> Result<Poly<T>, PolyError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match self.vars.iter().position(|v| v == name) {
            Some(i) => Ok(Poly::from_terms(self.vars, [(Monomial::var(i), T::one())])),
            None => Err(PolyError::UndeclaredVariable {
                name: name.to_string(),
                pos: start,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v2() -> Vec<String> {
        vec!["x1".into(), "x2".into()]
    }

    #[test]
    fn constant_division() {
        let p = parse::<f64>("x1/2 - x2^2/(2*2) + 1/4", &v2()).unwrap();
        let q = parse::<f64>("0.5*x1 - 0.25*x2^2 + 0.25", &v2()).unwrap();
        assert_eq!(p, q);
        assert!(parse::<f64>("1/x1", &v2()).is_err());
        assert!(parse::<f64>("x1/(x2 - x2)", &v2()).is_err());
    }

    #[test]
    fn reads_expanded_square() {
        let p = parse::<f64>("x1^2 + 2*x1*x2 + x2^2", &v2()).unwrap();
        assert_eq!(p.num_terms(), 3);
        assert_eq!(p.coeff(&Monomial::from_exponents(&[1, 1])), 2.0);
        let q = parse::<f64>("(x1+x2)^2", &v2()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn undeclared_name() {
        let e = parse::<f64>("-g + 0.5*x2^2", &v2()).unwrap_err();
        assert_eq!(
            e,
            PolyError::UndeclaredVariable {
                name: "g".into(),
                pos: 1
            }
        );
    }

    #[test]
    fn exponent_errors() {
        assert!(matches!(
            parse::<f64>("x1^-2", &v2()),
            Err(PolyError::BadExponent { .. })
        ));
        assert!(matches!(
            parse::<f64>("x1^1.5", &v2()),
            Err(PolyError::BadExponent { .. })
        ));
    }

    #[test]
    fn syntax_error_positions() {
        assert_eq!(
            parse::<f64>("x1 + * x2", &v2()),
            Err(PolyError::Syntax {
                pos: 5,
                msg: "expected a name, number or `(`".into()
            })
        );
        assert!(matches!(
            parse::<f64>("(x1 + x2", &v2()),
            Err(PolyError::Syntax { pos: 8, .. })
        ));
        assert!(matches!(
            parse::<f64>("x1 x2", &v2()),
            Err(PolyError::Syntax { pos: 3, .. })
        ));
    }

    #[test]
    fn unary_minus_and_scientific_literals() {
        let p = parse::<f64>("-(x1 - 2.5e-1) * -x2", &v2()).unwrap();
        let q = parse::<f64>("x1*x2 - 0.25*x2", &v2()).unwrap();
        assert_eq!(p, q);
    }
}
