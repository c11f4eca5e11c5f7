//! JSON system files.
//!
//! ```json
//! {
//!   "variables": ["x1", "x2"],
//!   "parameters": ["p"],
//!   "parameter_set": {"inequalities": ["p*(C - p)"]},
//!   "constants": {"C": 0.9},
//!   "modes": [{"id": "1", "domain": {"inequalities": ["x1"]},
//!              "field": ["x2", "-1"], "neighborhood": {"inequalities": ["25 - x1^2"]}}],
//!   "edges": [{"source": "1", "target": "1",
//!              "guard": {"equality": "x1", "inequalities": ["-x2"]},
//!              "reset": ["0", "-p*x2"]}],
//!   "zeno_equilibrium": {"1": [0, 0]}
//! }
//! ```
//!
//! `constants` are named numbers substituted when the system is built and
//! may be overridden per build (sweeps, bisection). `parameters` stay
//! symbolic. A missing neighborhood defaults to `25 - x^T x >= 0`.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Deserializer, Serialize};

use super::{Edge, HybridSystem, Mode, SemialgebraicSet, SystemError};
use crate::poly::{parse, PolyVec};
use crate::Polynomial;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSpec {
    #[serde(default)]
    pub inequalities: Vec<String>,
    #[serde(default)]
    pub equalities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardSpec {
    pub equality: String,
    #[serde(default)]
    pub inequalities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    #[serde(deserialize_with = "id_string")]
    pub id: String,
    #[serde(default)]
    pub domain: SetSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub domain_pieces: Vec<SetSpec>,
    pub field: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighborhood: Option<SetSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    #[serde(deserialize_with = "id_string")]
    pub source: String,
    #[serde(deserialize_with = "id_string")]
    pub target: String,
    pub guard: GuardSpec,
    pub reset: Vec<String>,
}

/// A system file as written on disk, before constants are substituted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub variables: Vec<String>,
    #[serde(default)]
    pub parameters: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_set: Option<SetSpec>,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    pub modes: Vec<ModeSpec>,
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeno_equilibrium: Option<BTreeMap<String, Vec<f64>>>,
}

fn id_string<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        N(i64),
    }
    Ok(match Id::deserialize(d)? {
        Id::S(s) => s,
        Id::N(n) => n.to_string(),
    })
}

impl SystemFile {
    pub fn from_json(text: &str) -> Result<Self, SystemError> {
        serde_json::from_str(text).map_err(|e| SystemError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// Constant values after applying `overrides`.
    pub fn constant_values(&self, overrides: &[(String, f64)]) -> Result<BTreeMap<String, f64>, SystemError> {
        let mut c = self.constants.clone();
        for (k, v) in overrides {
            match c.get_mut(k) {
                Some(slot) => *slot = *v,
                None => return Err(SystemError::UnknownConstant(k.clone())),
            }
        }
        Ok(c)
    }

    /// Parses every expression and substitutes constants.
    pub fn build(&self, overrides: &[(String, f64)]) -> Result<HybridSystem, SystemError> {
        let constants = self.constant_values(overrides)?;
        let mut seen = HashSet::new();
        for name in self
            .variables
            .iter()
            .chain(&self.parameters)
            .chain(constants.keys())
        {
            if !seen.insert(name.as_str()) {
                return Err(SystemError::Shape(format!("name `{name}` declared twice")));
            }
        }
        let mut vars = self.variables.clone();
        vars.extend(self.parameters.iter().cloned());
        let mut parse_vars = vars.clone();
        parse_vars.extend(constants.keys().cloned());
        let values: Vec<(String, f64)> = constants.into_iter().collect();

        let expr = |text: &str, context: &str| -> Result<Polynomial, SystemError> {
            let p: Polynomial = parse(text, &parse_vars).map_err(|source| SystemError::Expr {
                context: format!("{context}: `{text}`"),
                source,
            })?;
            Ok(p.substitute_values(&values)
                .with_variables(&vars)
                .expect("constants substituted"))
        };
        let set = |s: &SetSpec, context: &str| -> Result<SemialgebraicSet, SystemError> {
            Ok(SemialgebraicSet {
                inequalities: s
                    .inequalities
                    .iter()
                    .map(|t| expr(t, context))
                    .collect::<Result<_, _>>()?,
                equalities: s
                    .equalities
                    .iter()
                    .map(|t| expr(t, context))
                    .collect::<Result<_, _>>()?,
            })
        };
        let vector = |v: &[String], context: &str| -> Result<PolyVec<f64>, SystemError> {
            if v.len() != self.variables.len() {
                return Err(SystemError::Shape(format!(
                    "{context}: {} components for {} state variables",
                    v.len(),
                    self.variables.len()
                )));
            }
            let comps = v.iter().map(|t| expr(t, context)).collect::<Result<Vec<_>, _>>()?;
            Ok(PolyVec::new(comps))
        };

        let default_nbhd = {
            let mut w = Polynomial::constant(&vars, 25.0);
            for i in 0..self.variables.len() {
                let xi = Polynomial::var(&vars, i);
                w = w.sub_poly(&xi.mul_poly(&xi));
            }
            SemialgebraicSet::new(vec![w], vec![])
        };

        let mut modes = Vec::with_capacity(self.modes.len());
        for m in &self.modes {
            if modes.iter().any(|x: &Mode| x.id == m.id) {
                return Err(SystemError::DuplicateMode(m.id.clone()));
            }
            let ctx = format!("mode {}", m.id);
            modes.push(Mode {
                id: m.id.clone(),
                domain: set(&m.domain, &ctx)?,
                domain_pieces: m
                    .domain_pieces
                    .iter()
                    .map(|p| set(p, &ctx))
                    .collect::<Result<_, _>>()?,
                field: vector(&m.field, &format!("{ctx} field"))?,
                neighborhood: match &m.neighborhood {
                    Some(s) => set(s, &format!("{ctx} neighborhood"))?,
                    None => default_nbhd.clone(),
                },
            });
        }
        let index = |id: &str| {
            modes
                .iter()
                .position(|m| m.id == id)
                .ok_or_else(|| SystemError::UnknownMode(id.to_string()))
        };
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let ctx = format!("edge {}->{}", e.source, e.target);
            edges.push(Edge {
                source: index(&e.source)?,
                target: index(&e.target)?,
                guard_equality: expr(&e.guard.equality, &ctx)?,
                guard_inequalities: e
                    .guard
                    .inequalities
                    .iter()
                    .map(|t| expr(t, &ctx))
                    .collect::<Result<_, _>>()?,
                reset: vector(&e.reset, &format!("{ctx} reset"))?,
            });
        }
        let zeno_equilibrium = match &self.zeno_equilibrium {
            None => None,
            Some(map) => {
                let mut z = vec![Vec::new(); modes.len()];
                for (id, point) in map {
                    z[index(id)?] = point.clone();
                }
                Some(z)
            }
        };
        let parameter_set = match &self.parameter_set {
            Some(s) => set(s, "parameter set")?,
            None => SemialgebraicSet::default(),
        };
        Ok(HybridSystem {
            name: self.name.clone(),
            states: self.variables.clone(),
            parameters: self.parameters.clone(),
            parameter_set,
            modes,
            edges,
            zeno_equilibrium,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_ids_and_errors() {
        let text = r#"{"variables": ["x"], "modes": [{"id": 1, "field": ["-x"]}],
                       "edges": [{"source": 1, "target": 1, "guard": {"equality": "x"}, "reset": ["x"]}]}"#;
        let f = SystemFile::from_json(text).unwrap();
        assert_eq!(f.modes[0].id, "1");
        let sys = f.build(&[]).unwrap();
        assert_eq!(sys.edges[0].target, 0);

        let bad = text.replace("\"-x\"", "\"-y\"");
        let err = SystemFile::from_json(&bad).unwrap().build(&[]).unwrap_err();
        assert!(matches!(err, SystemError::Expr { .. }), "{err}");
        let bad = text.replace("\"target\": 1", "\"target\": 2");
        assert!(matches!(
            SystemFile::from_json(&bad).unwrap().build(&[]),
            Err(SystemError::UnknownMode(_))
        ));
        assert!(SystemFile::from_json("{\"variables\": 3}").is_err());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"variables": ["x"], "constants": {"k": 2}, "modes": [{"id": "a", "field": ["-k*x"]}],
                       "edges": [{"source": "a", "target": "a", "guard": {"equality": "x"}, "reset": ["x"]}]}"#;
        let f = SystemFile::from_json(text).unwrap();
        let g = SystemFile::from_json(&f.to_json()).unwrap();
        assert_eq!(f, g);
        let sys = g.build(&[("k".into(), 3.0)]).unwrap();
        assert_eq!(sys.modes[0].field.eval(&[1.0]), vec![-3.0]);
    }
}
