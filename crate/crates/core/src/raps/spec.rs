use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

/// Recognised preset names for [`tcheby_spec`].
pub const SPEC_PRESETS: [&str; 3] = ["lane-level-paper", "lane-level-paper-literal", "zero"];

/// Lower bounds on selected diagonal entries of the posterior information.
///
/// `components[j]` is the state index bounded by `bounds[j]`. For the
/// navigation filters the state is expressed in the local frame so the
/// default components are east, north, up position then east, north, up
/// velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSpec {
    pub bounds: Vec<f64>,
    pub components: Vec<usize>,
}

impl PerformanceSpec {
    /// Position and velocity bounds over state indices 0..6.
    pub fn position_velocity(bounds: [f64; 6]) -> Result<Self> {
        Self::custom(bounds.to_vec(), (0..6).collect())
    }

    pub fn custom(bounds: Vec<f64>, components: Vec<usize>) -> Result<Self> {
        let spec = PerformanceSpec { bounds, components };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zero(n: usize) -> Self {
        PerformanceSpec { bounds: vec![0.0; n], components: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn bounds_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.bounds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.len() != self.components.len() {
            return Err(NavError::Dimension(format!(
                "{} bounds for {} components",
                self.bounds.len(),
                self.components.len()
            )));
        }
        if let Some(v) = self.bounds.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(NavError::invalid(format!("information bound {v} must be finite and non-negative")));
        }
        let mut seen = self.components.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.components.len() {
            return Err(NavError::invalid("performance spec lists a component twice"));
        }
        Ok(())
    }
}

/// Lane-level information bounds from the Tchebycheff inequality.
///
/// `lane-level-paper` bounds velocity by `1/0.025, 1/0.025, 1/0.225`;
/// `lane-level-paper-literal` uses `0.025` as the second entry. Both are
/// symmetric in the horizontal entries, so north-east and east-north order
/// give the same bounds.
pub fn tcheby_spec(preset: &str) -> Result<PerformanceSpec> {
    let jp = [1.0 / 0.05, 1.0 / 0.05, 1.0 / 0.45];
    match preset {
        "lane-level-paper" => {
            PerformanceSpec::position_velocity([jp[0], jp[1], jp[2], 1.0 / 0.025, 1.0 / 0.025, 1.0 / 0.225])
        }
        "lane-level-paper-literal" => {
            PerformanceSpec::position_velocity([jp[0], jp[1], jp[2], 1.0 / 0.025, 0.025, 1.0 / 0.225])
        }
        "zero" => Ok(PerformanceSpec::zero(6)),
        other => Err(NavError::invalid(format!(
            "unknown spec preset '{other}' (expected one of {})",
            SPEC_PRESETS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lane_level_values() {
        let s = tcheby_spec("lane-level-paper").unwrap();
        assert_eq!(s.components, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(&s.bounds[..2], &[20.0, 20.0]);
        assert!((s.bounds[2] - 2.2222222222222223).abs() < 1e-12);
        assert_eq!(s.bounds[3], 40.0);
        assert_eq!(s.bounds[4], 40.0);
        let lit = tcheby_spec("lane-level-paper-literal").unwrap();
        assert_eq!(lit.bounds[4], 0.025);
    }

    #[test]
    fn rejects_negative_and_unknown() {
        assert!(PerformanceSpec::position_velocity([1.0, -1.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(tcheby_spec("sae").is_err());
        assert!(PerformanceSpec::custom(vec![1.0], vec![0, 1]).is_err());
    }
}
