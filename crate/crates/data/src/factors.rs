use crate::DataError;

/// One causal factor: a name, its raw value range, and the affine map that
/// normalization uses to put raw values into (−1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpec {
    name: String,
    lo: f64,
    hi: f64,
}

impl FactorSpec {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64) -> Result<Self, DataError> {
        let name = name.into();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(DataError::Param(format!(
                "factor {name:?}: need finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        if name.is_empty() || name.contains(',') || name.contains('\n') || name.contains('=') {
            return Err(DataError::Param(format!("factor name {name:?} is not serializable")));
        }
        Ok(FactorSpec { name, lo, hi })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Map a raw value into the normalized range; `lo ↦ −1`, `hi ↦ +1`.
    pub fn normalize(&self, raw: f64) -> f64 {
        2.0 * (raw - self.lo) / (self.hi - self.lo) - 1.0
    }

    /// Inverse of [`normalize`](Self::normalize).
    pub fn denormalize(&self, norm: f64) -> f64 {
        self.lo + (norm + 1.0) * 0.5 * (self.hi - self.lo)
    }

    /// Serialized form used by the metadata sidecar: `name,lo,hi`.
    pub(crate) fn to_line(&self) -> String {
        format!("{},{},{}", self.name, self.lo, self.hi)
    }

    pub(crate) fn from_line(line: &str) -> Result<Self, DataError> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(DataError::Metadata(format!("bad factor line {line:?}")));
        }
        let lo: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| DataError::Metadata(format!("bad factor lo in {line:?}")))?;
        let hi: f64 = parts[2]
            .trim()
            .parse()
            .map_err(|_| DataError::Metadata(format!("bad factor hi in {line:?}")))?;
        FactorSpec::new(parts[0].trim(), lo, hi)
    }
}
