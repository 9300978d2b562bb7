//! Search spaces and concrete parameter assignments.
//!
//! Text form, one parameter per line:
//!
//! ```text
//! learning_rate loguniform 1e-4 1e-1
//! embedding_size choice 16 32 64
//! dropout uniform 0.0 0.5
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use super::TuneError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl ParamValue {
    /// Integers, then floats, then text.
    pub fn parse(token: &str) -> Self {
        if let Ok(i) = token.parse::<i64>() {
            ParamValue::Int(i)
        } else if let Ok(x) = token.parse::<f64>() {
            ParamValue::Float(x)
        } else {
            ParamValue::Text(token.to_string())
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(x) => Some(*x),
            ParamValue::Text(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x:?}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Choice(Vec<ParamValue>),
    Uniform(f64, f64),
    LogUniform(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchSpace {
    params: Vec<Param>,
}

impl SearchSpace {
    pub fn new(params: Vec<Param>) -> Result<Self, TuneError> {
        for (k, p) in params.iter().enumerate() {
            if params[..k].iter().any(|q| q.name == p.name) {
                return Err(TuneError::InvalidSpace(format!("duplicate parameter `{}`", p.name)));
            }
            match &p.domain {
                Domain::Choice(v) if v.is_empty() => {
                    return Err(TuneError::InvalidSpace(format!("`{}` has no choices", p.name)))
                }
                Domain::Uniform(lo, hi) if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                    return Err(TuneError::InvalidSpace(format!("`{}` needs lo < hi", p.name)))
                }
                Domain::LogUniform(lo, hi) if !(*lo > 0.0 && lo < hi && hi.is_finite()) => {
                    return Err(TuneError::InvalidSpace(format!(
                        "`{}` needs 0 < lo < hi",
                        p.name
                    )))
                }
                _ => {}
            }
        }
        Ok(SearchSpace { params })
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn parse(text: &str) -> Result<Self, TuneError> {
        let mut params = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |why: &str| TuneError::InvalidSpace(format!("line {}: {why}", n + 1));
            let words: Vec<&str> = line.split_whitespace().collect();
            let [name, kind, args @ ..] = &words[..] else {
                return Err(bad("expected `name <domain> args...`"));
            };
            let bounds = || -> Result<(f64, f64), TuneError> {
                match args {
                    [lo, hi] => Ok((
                        lo.parse().map_err(|_| bad("bad lower bound"))?,
                        hi.parse().map_err(|_| bad("bad upper bound"))?,
                    )),
                    _ => Err(bad("expected two bounds")),
                }
            };
            let domain = match *kind {
                "choice" => Domain::Choice(args.iter().map(|a| ParamValue::parse(a)).collect()),
                "uniform" => {
                    let (lo, hi) = bounds()?;
                    Domain::Uniform(lo, hi)
                }
                "loguniform" => {
                    let (lo, hi) = bounds()?;
                    Domain::LogUniform(lo, hi)
                }
                other => return Err(bad(&format!("unknown domain `{other}`"))),
            };
            params.push(Param {
                name: name.to_string(),
                domain,
            });
        }
        SearchSpace::new(params)
    }
}

/// Concrete values in parameter declaration order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Assignment(pub Vec<(String, ParamValue)>);

impl Assignment {
    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamValue)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v))
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (name, value)) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{name}={value}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_domains() {
        let s = SearchSpace::parse(
            "# tuning range\nlearning_rate loguniform 1e-4 1e-1\n\nembedding_size choice 16 32 64\nopt choice adam sgd\nw uniform 0 0.5 # trailing\n",
        )
        .unwrap();
        assert_eq!(s.params().len(), 4);
        assert_eq!(s.params()[0].domain, Domain::LogUniform(1e-4, 1e-1));
        assert_eq!(
            s.params()[1].domain,
            Domain::Choice(vec![ParamValue::Int(16), ParamValue::Int(32), ParamValue::Int(64)])
        );
        assert_eq!(s.params()[2].domain, Domain::Choice(vec![
            ParamValue::Text("adam".into()),
            ParamValue::Text("sgd".into())
        ]));
        assert_eq!(s.params()[3].domain, Domain::Uniform(0.0, 0.5));
    }

    #[test]
    fn rejects_bad_spaces() {
        for text in [
            "a choice",
            "a uniform 1 1",
            "a loguniform 0 1",
            "a gaussian 0 1",
            "a uniform 0",
            "a choice 1\na choice 2",
            "lonely",
        ] {
            assert!(SearchSpace::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn assignment_display_and_lookup() {
        let a = Assignment(vec![
            ("lr".into(), ParamValue::Float(0.01)),
            ("d".into(), ParamValue::Int(8)),
        ]);
        assert_eq!(a.to_string(), "lr=0.01, d=8");
        assert_eq!(a.get("d"), Some(&ParamValue::Int(8)));
        assert_eq!(a.get("x"), None);
    }
}
