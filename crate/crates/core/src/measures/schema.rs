//! JSON descriptions of measures, `{"variant": ..., "dim": n, "params":
//! {...}}` like the body schema. Variants are `standard_gaussian`,
//! `uniform_on_body` (nesting a body spec), `product_law` (a list of 1-D
//! laws), and the wrappers `linear_image` and `marginal` nesting a measure
//! spec under `params.measure`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Law1D, LogConcaveMeasure};
use crate::bodies::schema::{matrix, BodySpec};
use crate::bodies::Subspace;
use crate::error::GeomError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    /// `gaussian` (σ), `symmetric_exponential` (λ), or `uniform`
    /// (half-width).
    pub law: String,
    pub param: f64,
}

impl LawSpec {
    fn build(&self) -> Result<Law1D, GeomError> {
        match self.law.as_str() {
            "gaussian" => Ok(Law1D::Gaussian { sigma: self.param }),
            "symmetric_exponential" => Ok(Law1D::SymmetricExponential { lambda: self.param }),
            "uniform" => Ok(Law1D::Uniform { half_width: self.param }),
            other => Err(GeomError::InvalidConfig(format!("unknown 1-D law \"{other}\""))),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<BodySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub laws: Option<Vec<LawSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<Box<MeasureSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<Vec<Vec<f64>>>,
    /// Coordinate axes for `marginal`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<usize>>,
    /// Orthonormal basis columns (given row-major) for `marginal`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub variant: String,
    pub dim: usize,
    #[serde(default)]
    pub params: MeasureParams,
}

impl MeasureSpec {
    pub fn from_json(text: &str) -> Result<Self, GeomError> {
        serde_json::from_str(text)
            .map_err(|e| GeomError::InvalidConfig(format!("measure spec: {e}")))
    }

    pub fn build(&self) -> Result<LogConcaveMeasure, GeomError> {
        let n = self.dim;
        let p = &self.params;
        let need = |opt: bool, field: &str| -> Result<(), GeomError> {
            if opt {
                Ok(())
            } else {
                Err(GeomError::InvalidConfig(format!(
                    "variant \"{}\" requires params.{field}",
                    self.variant
                )))
            }
        };
        let inner = || -> Result<LogConcaveMeasure, GeomError> {
            need(p.measure.is_some(), "measure")?;
            p.measure.as_ref().unwrap().build()
        };
        let measure = match self.variant.as_str() {
            "standard_gaussian" => LogConcaveMeasure::standard_gaussian(n)?,
            "uniform_on_body" => {
                need(p.body.is_some(), "body")?;
                LogConcaveMeasure::uniform_on_body(p.body.as_ref().unwrap().build()?)
            }
            "product_law" => {
                need(p.laws.is_some(), "laws")?;
                let laws: Result<Vec<Law1D>, GeomError> =
                    p.laws.as_ref().unwrap().iter().map(LawSpec::build).collect();
                LogConcaveMeasure::product_law(laws?)?
            }
            "linear_image" => {
                need(p.map.is_some(), "map")?;
                inner()?.linear_image(matrix(p.map.as_ref().unwrap(), "linear map")?)?
            }
            "marginal" => {
                let operand = inner()?;
                let sub = if let Some(axes) = &p.axes {
                    Subspace::from_axes(operand.dim(), axes)?
                } else {
                    need(p.basis.is_some(), "basis (or axes)")?;
                    Subspace::new(matrix(p.basis.as_ref().unwrap(), "subspace basis")?)?
                };
                operand.marginal(&sub)?
            }
            other => {
                return Err(GeomError::InvalidConfig(format!(
                    "unknown measure variant \"{other}\""
                )))
            }
        };
        // For marginals `dim` is the subspace dimension.
        if measure.dim() != n {
            return Err(GeomError::InvalidConfig(format!(
                "spec dim {n} does not match constructed dimension {}",
                measure.dim()
            )));
        }
        Ok(measure)
    }

    /// Stable short digest of the canonical JSON form; identifies the
    /// subject in report records.
    pub fn digest(&self) -> String {
        let canon = serde_json::to_string(self).expect("measure spec serializes");
        let hash = Sha256::digest(canon.as_bytes());
        let mut out = String::with_capacity(16);
        for byte in hash.iter().take(8) {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_base_variants() {
        let g: MeasureSpec =
            serde_json::from_str(r#"{"variant":"standard_gaussian","dim":5,"params":{}}"#)
                .unwrap();
        assert_eq!(g.build().unwrap().variant_name(), "standard_gaussian");

        let text = r#"{
            "variant": "product_law",
            "dim": 2,
            "params": {"laws": [
                {"law": "uniform", "param": 0.5},
                {"law": "symmetric_exponential", "param": 2.0}
            ]}
        }"#;
        let m = MeasureSpec::from_json(text).unwrap().build().unwrap();
        assert_eq!(m.variant_name(), "product_law");

        let text = r#"{
            "variant": "uniform_on_body",
            "dim": 3,
            "params": {"body": {"variant": "cube", "dim": 3, "params": {}}}
        }"#;
        let m = MeasureSpec::from_json(text).unwrap().build().unwrap();
        assert_eq!(m.variant_name(), "uniform_on_body");
    }

    #[test]
    fn wrappers_nest_and_check_dimensions() {
        let text = r#"{
            "variant": "marginal",
            "dim": 1,
            "params": {
                "axes": [2],
                "measure": {"variant": "standard_gaussian", "dim": 3, "params": {}}
            }
        }"#;
        let m = MeasureSpec::from_json(text).unwrap().build().unwrap();
        // The Gaussian shortcut kicks in.
        assert_eq!(m.variant_name(), "standard_gaussian");
        assert_eq!(m.dim(), 1);

        let bad = r#"{
            "variant": "linear_image",
            "dim": 2,
            "params": {
                "map": [[1.0, 0.0], [0.0, 0.0]],
                "measure": {"variant": "standard_gaussian", "dim": 2, "params": {}}
            }
        }"#;
        assert!(MeasureSpec::from_json(bad).unwrap().build().is_err());
    }

    #[test]
    fn digest_distinguishes_variants() {
        let a = MeasureSpec::from_json(r#"{"variant":"standard_gaussian","dim":3,"params":{}}"#)
            .unwrap();
        let b = MeasureSpec::from_json(r#"{"variant":"standard_gaussian","dim":4,"params":{}}"#)
            .unwrap();
        assert_eq!(a.digest().len(), 16);
        assert_ne!(a.digest(), b.digest());
    }
}
