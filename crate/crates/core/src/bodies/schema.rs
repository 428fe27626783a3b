//! JSON descriptions of bodies: `{"variant": ..., "dim": n, "params": {...}}`
//! with matrices row-major. Base variants are `euclidean_ball`, `lp_ball`,
//! `ellipsoid`, `h_polytope`, `v_polytope`; convenience variants (`cube`,
//! `cross_polytope`) and transform variants (`scaled`, `polar`,
//! `linear_image`, `section`, `projection`) nest an operand spec under
//! `params.body`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Body, Subspace};
use crate::error::GeomError;

/// `p` exponent that reads from JSON as a number or the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpExponent(pub f64);

impl Serialize for LpExponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for LpExponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(LpExponent(p)),
            Raw::Word(w) if w.eq_ignore_ascii_case("inf") || w.eq_ignore_ascii_case("infinity") => {
                Ok(LpExponent(f64::INFINITY))
            }
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "exponent must be a number or \"inf\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<LpExponent>,
    /// Full shape matrix (row-major) for `ellipsoid`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<Vec<f64>>>,
    /// Diagonal shape shortcut for `ellipsoid`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diag: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verts: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<Vec<Vec<f64>>>,
    /// Coordinate axes for `section`/`projection`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<usize>>,
    /// Orthonormal basis columns (given row-major as a matrix) for
    /// `section`/`projection`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<Box<BodySpec>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    pub variant: String,
    pub dim: usize,
    #[serde(default)]
    pub params: BodyParams,
}

pub(crate) fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, GeomError> {
    if rows.is_empty() {
        return Err(GeomError::InvalidConfig(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(GeomError::InvalidConfig(format!("{what}: ragged or empty rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl BodySpec {
    pub fn from_json(text: &str) -> Result<Self, GeomError> {
        serde_json::from_str(text)
            .map_err(|e| GeomError::InvalidConfig(format!("body spec: {e}")))
    }

    pub fn build(&self) -> Result<Body, GeomError> {
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
        let inner = || -> Result<Body, GeomError> {
            need(p.body.is_some(), "body")?;
            p.body.as_ref().unwrap().build()
        };
        let body = match self.variant.as_str() {
            "euclidean_ball" => Body::euclidean_ball(n, p.radius.unwrap_or(1.0))?,
            "lp_ball" => {
                need(p.p.is_some(), "p")?;
                Body::lp_ball(n, p.p.unwrap().0, p.radius.unwrap_or(1.0))?
            }
            "ellipsoid" => {
                let shape = if let Some(d) = &p.diag {
                    DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(d))
                } else {
                    need(p.shape.is_some(), "shape (or diag)")?;
                    matrix(p.shape.as_ref().unwrap(), "ellipsoid shape")?
                };
                Body::ellipsoid(shape)?
            }
            "h_polytope" => {
                need(p.rows.is_some(), "rows")?;
                Body::h_polytope(matrix(p.rows.as_ref().unwrap(), "facet rows")?)?
            }
            "v_polytope" => {
                need(p.verts.is_some(), "verts")?;
                Body::v_polytope(matrix(p.verts.as_ref().unwrap(), "vertex rows")?)?
            }
            "cube" => Body::cube(n),
            "cross_polytope" => Body::cross_polytope(n),
            "scaled" => {
                need(p.factor.is_some(), "factor")?;
                inner()?.scaled(p.factor.unwrap())?
            }
            "polar" => inner()?.polar(),
            "linear_image" => {
                need(p.map.is_some(), "map")?;
                inner()?.linear_image(matrix(p.map.as_ref().unwrap(), "linear map")?)?
            }
            "section" | "projection" => {
                let operand = inner()?;
                let sub = if let Some(axes) = &p.axes {
                    Subspace::from_axes(operand.dim(), axes)?
                } else {
                    need(p.basis.is_some(), "basis (or axes)")?;
                    Subspace::new(matrix(p.basis.as_ref().unwrap(), "subspace basis")?)?
                };
                if self.variant == "section" {
                    operand.section(&sub)?
                } else {
                    operand.project(&sub)?
                }
            }
            other => {
                return Err(GeomError::InvalidConfig(format!("unknown body variant \"{other}\"")))
            }
        };
        // For sections/projections `dim` is the subspace dimension.
        if body.dim() != n {
            return Err(GeomError::InvalidConfig(format!(
                "spec dim {n} does not match constructed dimension {}",
                body.dim()
            )));
        }
        Ok(body)
    }

    /// Stable short digest of the canonical JSON form; identifies the
    /// subject in report records.
    pub fn digest(&self) -> String {
        let canon = serde_json::to_string(self).expect("body spec serializes");
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
        let ball: BodySpec =
            serde_json::from_str(r#"{"variant":"euclidean_ball","dim":4,"params":{"radius":2.0}}"#)
                .unwrap();
        assert_eq!(ball.build().unwrap().variant_name(), "euclidean_ball");

        let linf: BodySpec =
            serde_json::from_str(r#"{"variant":"lp_ball","dim":3,"params":{"p":"inf"}}"#).unwrap();
        let b = linf.build().unwrap();
        let x = nalgebra::DVector::from_row_slice(&[0.5, -1.0, 0.25]);
        assert_eq!(b.gauge(&x), 1.0);

        let ell: BodySpec =
            serde_json::from_str(r#"{"variant":"ellipsoid","dim":2,"params":{"diag":[16.0,1.0]}}"#)
                .unwrap();
        assert_eq!(ell.build().unwrap().variant_name(), "ellipsoid");
    }

    #[test]
    fn transform_variants_nest() {
        let text = r#"{
            "variant": "section",
            "dim": 2,
            "params": {
                "axes": [0, 1],
                "body": {"variant": "cube", "dim": 3, "params": {}}
            }
        }"#;
        let spec = BodySpec::from_json(text).unwrap();
        let b = spec.build().unwrap();
        assert_eq!(b.dim(), 2);
        assert_eq!(b.variant_name(), "h_polytope");
    }

    #[test]
    fn digest_is_stable_and_distinguishes() {
        let a = BodySpec::from_json(r#"{"variant":"cube","dim":3,"params":{}}"#).unwrap();
        let b = BodySpec::from_json(r#"{"variant":"cube","dim":4,"params":{}}"#).unwrap();
        assert_eq!(a.digest(), a.digest());
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 16);
    }

    #[test]
    fn unknown_variant_is_a_config_error() {
        let spec = BodySpec::from_json(r#"{"variant":"simplex","dim":3,"params":{}}"#).unwrap();
        let err = spec.build().unwrap_err();
        assert_eq!(err.class(), crate::error::ErrorClass::Config);
    }
}
