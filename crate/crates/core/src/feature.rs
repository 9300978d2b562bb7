//! Continuous features in the unified `(discrete id, scale)` protocol.
//!
//! Field embedding keeps the raw value as the scale and uses one shared id;
//! discretization fixes the scale to one and picks a bucket id.

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot fit a range on an empty column")]
    EmptyColumn,
    #[error("NaN value at row {row}")]
    NaNValue { row: usize },
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("value {0} is not positive after shifting")]
    NonPositiveAfterShift(f64),
    #[error("invalid discretizer: {0}")]
    InvalidSpec(String),
    #[error("malformed feature spec line `{0}`")]
    MalformedSpecLine(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FieldEmbedding,
    EqualDistance,
    Logarithm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::FieldEmbedding => "field_embedding",
            Method::EqualDistance => "equal_distance",
            Method::Logarithm => "logarithm",
        }
    }
}

impl FromStr for Method {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "field_embedding" => Ok(Method::FieldEmbedding),
            "equal_distance" => Ok(Method::EqualDistance),
            "logarithm" => Ok(Method::Logarithm),
            other => Err(FeatureError::InvalidSpec(format!("unknown method `{other}`"))),
        }
    }
}

/// One encoded value: the embedding id and the multiplier applied to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureTuple {
    pub discrete: u64,
    pub scale: f64,
}

/// Fitted encoder for one numerical field.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizerSpec {
    pub method: Method,
    pub x_min: f64,
    pub x_max: f64,
    /// Bucket count; only meaningful for equal-distance.
    pub buckets: u64,
    /// Added before taking the logarithm; zero unless the column reached 0.
    pub shift: f64,
}

impl DiscretizerSpec {
    pub fn equal_distance(x_min: f64, x_max: f64, buckets: u64) -> Result<Self, FeatureError> {
        let spec = DiscretizerSpec {
            method: Method::EqualDistance,
            x_min,
            x_max,
            buckets,
            shift: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Fits range (and logarithm shift) on a training column.
    pub fn fit(method: Method, column: &[f64], buckets: u64) -> Result<Self, FeatureError> {
        let (x_min, x_max) = fit_range(column)?;
        let shift = match method {
            Method::Logarithm if x_min <= 0.0 => 1.0 - x_min,
            _ => 0.0,
        };
        let spec = DiscretizerSpec {
            method,
            x_min,
            x_max,
            buckets,
            shift,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.method == Method::EqualDistance {
            if !(self.x_max > self.x_min && self.x_min.is_finite() && self.x_max.is_finite()) {
                return Err(FeatureError::InvalidSpec(format!(
                    "equal-distance range [{}, {}] is empty",
                    self.x_min, self.x_max
                )));
            }
            if self.buckets == 0 {
                return Err(FeatureError::InvalidSpec("zero buckets".into()));
            }
        }
        Ok(())
    }

    pub fn encode(&self, x: f64) -> Result<FeatureTuple, FeatureError> {
        match self.method {
            Method::FieldEmbedding => field_embedding(x),
            Method::EqualDistance => equal_distance(x, self),
            Method::Logarithm => {
                if x.is_nan() {
                    return Err(FeatureError::NaNValue { row: 0 });
                }
                logarithm(x + self.shift)
            }
        }
    }

    pub fn encode_column(&self, column: &[f64]) -> Result<Vec<FeatureTuple>, FeatureError> {
        column
            .iter()
            .enumerate()
            .map(|(row, &x)| {
                self.encode(x).map_err(|e| match e {
                    FeatureError::NaNValue { .. } => FeatureError::NaNValue { row },
                    other => other,
                })
            })
            .collect()
    }
}

/// `method\tx_min\tx_max\tbuckets\tshift`, floats in shortest round-trip form.
impl fmt::Display for DiscretizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:?}\t{:?}\t{}\t{:?}",
            self.method.name(),
            self.x_min,
            self.x_max,
            self.buckets,
            self.shift
        )
    }
}

impl FromStr for DiscretizerSpec {
    type Err = FeatureError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let bad = || FeatureError::MalformedSpecLine(line.to_string());
        let parts: Vec<&str> = line.split('\t').collect();
        let [method, x_min, x_max, buckets, shift] = parts[..] else {
            return Err(bad());
        };
        Ok(DiscretizerSpec {
            method: method.parse()?,
            x_min: x_min.parse().map_err(|_| bad())?,
            x_max: x_max.parse().map_err(|_| bad())?,
            buckets: buckets.parse().map_err(|_| bad())?,
            shift: shift.parse().map_err(|_| bad())?,
        })
    }
}

/// Observed minimum and maximum of a column.
pub fn fit_range(values: &[f64]) -> Result<(f64, f64), FeatureError> {
    if values.is_empty() {
        return Err(FeatureError::EmptyColumn);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (row, &x) in values.iter().enumerate() {
        if x.is_nan() {
            return Err(FeatureError::NaNValue { row });
        }
        lo = lo.min(x);
        hi = hi.max(x);
    }
    Ok((lo, hi))
}

/// Equal-width bucket of `x`, clamped into `[0, buckets - 1]`.
pub fn equal_distance(x: f64, spec: &DiscretizerSpec) -> Result<FeatureTuple, FeatureError> {
    if x.is_nan() {
        return Err(FeatureError::NaNValue { row: 0 });
    }
    if spec.method != Method::EqualDistance {
        return Err(FeatureError::InvalidSpec(format!(
            "expected equal_distance, got {}",
            spec.method.name()
        )));
    }
    spec.validate()?;
    let x = x.clamp(spec.x_min, spec.x_max);
    let position = (x - spec.x_min) / (spec.x_max - spec.x_min) * spec.buckets as f64;
    // Each rounding step is relative, so only positions this close to an
    // integer can floor to the wrong side.
    let bucket = if (position - position.round()).abs() <= 1e-9 * position.max(1.0) {
        exact_bucket(x, spec)
    } else {
        position.floor() as u64
    };
    let bucket = bucket.min(spec.buckets - 1);
    Ok(FeatureTuple {
        discrete: bucket,
        scale: 1.0,
    })
}

/// `floor((x - x_min) / (x_max - x_min) * buckets)` in rational arithmetic.
fn exact_bucket(x: f64, spec: &DiscretizerSpec) -> u64 {
    let exact = |v: f64| BigRational::from_float(v).expect("finite bound");
    let lo = exact(spec.x_min);
    let ratio = (exact(x) - &lo) / (exact(spec.x_max) - lo) * BigRational::from_integer(spec.buckets.into());
    ratio.floor().to_integer().to_u64().unwrap_or(u64::MAX)
}

/// Base of the logarithm discretization.
fn log_base(x: f64) -> f64 {
    x.ln()
}

/// `floor(ln(x)^2)`; callers apply the column shift first.
pub fn logarithm(x: f64) -> Result<FeatureTuple, FeatureError> {
    if x.is_nan() {
        return Err(FeatureError::NaNValue { row: 0 });
    }
    if !(x > 0.0) || x.is_infinite() {
        return Err(FeatureError::NonPositiveAfterShift(x));
    }
    let l = log_base(x);
    Ok(FeatureTuple {
        discrete: (l * l).floor() as u64,
        scale: 1.0,
    })
}

pub fn field_embedding(x: f64) -> Result<FeatureTuple, FeatureError> {
    if x.is_nan() {
        return Err(FeatureError::NaNValue { row: 0 });
    }
    if !x.is_finite() {
        return Err(FeatureError::NonFinite(x));
    }
    Ok(FeatureTuple {
        discrete: 1,
        scale: x,
    })
}
