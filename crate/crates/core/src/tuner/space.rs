use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TunerError;

/// A hyperparameter value. JSON integers read as `Int`, other numbers as
/// `Real` and strings as `Cat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl ParamValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Real(v) => Some(*v),
            ParamValue::Cat(_) => None,
        }
    }
}

pub type ParamValues = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamDomain {
    Continuous { lo: f64, hi: f64 },
    LogContinuous { lo: f64, hi: f64 },
    Integer { lo: i64, hi: i64 },
    Categorical { options: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDim {
    pub name: String,
    pub domain: ParamDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpace {
    pub dims: Vec<ParamDim>,
}

impl ParamSpace {
    pub fn new(dims: Vec<ParamDim>) -> Self {
        Self { dims }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn validate(&self) -> Result<(), TunerError> {
        if self.dims.is_empty() {
            return Err(TunerError::BadSpace("space has no dimensions".into()));
        }
        for (i, d) in self.dims.iter().enumerate() {
            if d.name.is_empty() {
                return Err(TunerError::BadSpace("empty dimension name".into()));
            }
            if self.dims[..i].iter().any(|o| o.name == d.name) {
                return Err(TunerError::BadSpace(format!("duplicate dimension {:?}", d.name)));
            }
            let ok = match &d.domain {
                ParamDomain::Continuous { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
                ParamDomain::LogContinuous { lo, hi } => *lo > 0.0 && hi.is_finite() && lo < hi,
                ParamDomain::Integer { lo, hi } => lo < hi,
                ParamDomain::Categorical { options } => !options.is_empty(),
            };
            if !ok {
                return Err(TunerError::BadSpace(format!("invalid domain for {:?}", d.name)));
            }
        }
        Ok(())
    }
}

/// Unit-cube coordinates of `params`, one per dimension.
pub fn encode(params: &ParamValues, space: &ParamSpace) -> Result<Vec<f64>, TunerError> {
    space
        .dims
        .iter()
        .map(|d| {
            let out = || TunerError::OutOfDomain(d.name.clone());
            let v = params.get(&d.name).ok_or_else(out)?;
            let u = match (&d.domain, v) {
                (ParamDomain::Continuous { lo, hi }, _) => {
                    let x = v.as_real().ok_or_else(out)?;
                    (x - lo) / (hi - lo)
                }
                (ParamDomain::LogContinuous { lo, hi }, _) => {
                    let x = v.as_real().ok_or_else(out)?;
                    if x <= 0.0 {
                        return Err(out());
                    }
                    (x.ln() - lo.ln()) / (hi.ln() - lo.ln())
                }
                (ParamDomain::Integer { lo, hi }, ParamValue::Int(x)) => (x - lo) as f64 / (hi - lo) as f64,
                (ParamDomain::Categorical { options }, ParamValue::Cat(s)) => {
                    let i = options.iter().position(|o| o == s).ok_or_else(out)?;
                    if options.len() == 1 {
                        0.0
                    } else {
                        i as f64 / (options.len() - 1) as f64
                    }
                }
                _ => return Err(out()),
            };
            if (0.0..=1.0).contains(&u) {
                Ok(u)
            } else {
                Err(out())
            }
        })
        .collect()
}

/// Parameters at unit-cube point `u` (clamped into the cube). Integer and
/// categorical coordinates round to the nearest admissible value.
pub fn decode(u: &[f64], space: &ParamSpace) -> ParamValues {
    space
        .dims
        .iter()
        .zip(u)
        .map(|(d, &raw)| {
            let u = if raw.is_nan() { 0.0 } else { raw.clamp(0.0, 1.0) };
            let v = match &d.domain {
                ParamDomain::Continuous { lo, hi } => ParamValue::Real((lo + u * (hi - lo)).clamp(*lo, *hi)),
                ParamDomain::LogContinuous { lo, hi } => {
                    ParamValue::Real((lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(*lo, *hi))
                }
                ParamDomain::Integer { lo, hi } => {
                    let x = (*lo as f64 + u * (hi - lo) as f64).round() as i64;
                    ParamValue::Int(x.clamp(*lo, *hi))
                }
                ParamDomain::Categorical { options } => {
                    let i = (u * (options.len() - 1) as f64).round() as usize;
                    ParamValue::Cat(options[i.min(options.len() - 1)].clone())
                }
            };
            (d.name.clone(), v)
        })
        .collect()
}

pub fn continuous(name: &str, lo: f64, hi: f64) -> ParamDim {
    ParamDim {
        name: name.into(),
        domain: ParamDomain::Continuous { lo, hi },
    }
}

pub fn log_continuous(name: &str, lo: f64, hi: f64) -> ParamDim {
    ParamDim {
        name: name.into(),
        domain: ParamDomain::LogContinuous { lo, hi },
    }
}

pub fn integer(name: &str, lo: i64, hi: i64) -> ParamDim {
    ParamDim {
        name: name.into(),
        domain: ParamDomain::Integer { lo, hi },
    }
}

pub fn categorical(name: &str, options: &[&str]) -> ParamDim {
    ParamDim {
        name: name.into(),
        domain: ParamDomain::Categorical {
            options: options.iter().map(|s| s.to_string()).collect(),
        },
    }
}

/// Forest search space: size, depth (or unlimited) and feature sampling.
pub fn default_forest_space() -> ParamSpace {
    ParamSpace::new(vec![
        integer("n_estimators", 50, 500),
        integer("max_depth", 2, 32),
        categorical("max_depth_mode", &["limited", "none"]),
        categorical("max_features", &["all", "sqrt"]),
    ])
}

pub fn default_boosted_space() -> ParamSpace {
    ParamSpace::new(vec![
        integer("n_rounds", 50, 500),
        log_continuous("learning_rate", 1e-3, 0.5),
        integer("max_depth", 2, 10),
        log_continuous("l2_leaf", 1e-2, 10.0),
    ])
}

pub fn default_mlp_space() -> ParamSpace {
    ParamSpace::new(vec![
        log_continuous("learning_rate", 1e-4, 1e-2),
        log_continuous("alpha_l2", 1e-6, 1e-2),
        integer("batch_size", 32, 512),
    ])
}
