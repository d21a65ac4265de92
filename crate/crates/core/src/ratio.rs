use serde::{Deserialize, Serialize};

/// A ratio whose denominator may be empty.
///
/// Serializes as a plain number, or `null` when undefined, so reports never
/// carry NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "Option<f64>", into = "Option<f64>")]
pub enum Ratio {
    Defined(f64),
    Undefined,
}

impl Ratio {
    pub fn of(num: f64, den: f64) -> Self {
        if den == 0.0 {
            Ratio::Undefined
        } else {
            Ratio::Defined(num / den)
        }
    }

    pub fn from_counts(num: u64, den: u64) -> Self {
        Self::of(num as f64, den as f64)
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Defined(v) => Some(v),
            Ratio::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Ratio::Defined(_))
    }
}

impl From<Option<f64>> for Ratio {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Ratio::Undefined, Ratio::Defined)
    }
}

impl From<Ratio> for Option<f64> {
    fn from(r: Ratio) -> Self {
        r.value()
    }
}
