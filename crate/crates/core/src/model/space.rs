use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Bindings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("parameter `{name}`: lower bound {lower} is not below upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("parameter `{name}`: log scale needs positive bounds, got [{lower}, {upper}]")]
    NonPositiveLogBound { name: String, lower: f64, upper: f64 },
    #[error("parameter `{name}` = {value} lies outside [{lower}, {upper}]")]
    OutOfBounds { name: String, value: f64, lower: f64, upper: f64 },
    #[error("duplicate parameter `{0}` in search space")]
    Duplicate(String),
    #[error("missing value for `{0}`")]
    Missing(String),
    #[error("expected a vector of length {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
}

/// One searched coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl Axis {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, scale: Scale) -> Result<Self, SpaceError> {
        let name = name.into();
        if !(lower < upper) {
            return Err(SpaceError::InvertedBounds { name, lower, upper });
        }
        if scale == Scale::Log && lower <= 0.0 {
            return Err(SpaceError::NonPositiveLogBound { name, lower, upper });
        }
        Ok(Axis { name, lower, upper, scale })
    }

    fn warp(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Log => v.ln(),
            Scale::Linear => v,
        }
    }

    fn unwarp(&self, w: f64) -> f64 {
        match self.scale {
            Scale::Log => w.exp(),
            Scale::Linear => w,
        }
    }

    pub fn normalize(&self, value: f64) -> Result<f64, SpaceError> {
        if !(value >= self.lower && value <= self.upper) {
            return Err(SpaceError::OutOfBounds {
                name: self.name.clone(),
                value,
                lower: self.lower,
                upper: self.upper,
            });
        }
        let (a, b) = (self.warp(self.lower), self.warp(self.upper));
        Ok((2.0 * (self.warp(value) - a) / (b - a) - 1.0).clamp(-1.0, 1.0))
    }

    /// Inverse of [`Axis::normalize`]; inputs are clamped to `[-1, 1]`.
    pub fn denormalize(&self, u: f64) -> f64 {
        let u = u.clamp(-1.0, 1.0);
        let (a, b) = (self.warp(self.lower), self.warp(self.upper));
        let v = self.unwarp(a + (u + 1.0) * 0.5 * (b - a));
        v.clamp(self.lower, self.upper)
    }

    /// d(raw value) / d(normalized coordinate) at `u`.
    pub fn jacobian(&self, u: f64) -> f64 {
        let (a, b) = (self.warp(self.lower), self.warp(self.upper));
        match self.scale {
            Scale::Log => self.denormalize(u) * 0.5 * (b - a),
            Scale::Linear => 0.5 * (b - a),
        }
    }
}

/// Box of searched parameters plus the values of the parameters held fixed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub axes: Vec<Axis>,
    pub fixed: Vec<(String, f64)>,
}

impl ParameterSpace {
    pub fn new(axes: Vec<Axis>, fixed: Vec<(String, f64)>) -> Result<Self, SpaceError> {
        let mut seen: Vec<&str> = Vec::new();
        for name in axes.iter().map(|a| a.name.as_str()).chain(fixed.iter().map(|f| f.0.as_str())) {
            if seen.contains(&name) {
                return Err(SpaceError::Duplicate(name.to_string()));
            }
            seen.push(name);
        }
        Ok(ParameterSpace { axes, fixed })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.axes.iter().map(|a| a.name.as_str()).collect()
    }

    /// Maps raw coordinates (in axis order) into `[-1, 1]^d`.
    pub fn normalize(&self, raw: &[f64]) -> Result<Vec<f64>, SpaceError> {
        if raw.len() != self.dim() {
            return Err(SpaceError::Dimension { expected: self.dim(), found: raw.len() });
        }
        self.axes.iter().zip(raw).map(|(a, &v)| a.normalize(v)).collect()
    }

    pub fn denormalize(&self, unit: &[f64]) -> Vec<f64> {
        self.axes.iter().zip(unit).map(|(a, &u)| a.denormalize(u)).collect()
    }

    /// Diagonal Jacobian of [`ParameterSpace::denormalize`] at `unit`.
    pub fn jacobian(&self, unit: &[f64]) -> Vec<f64> {
        self.axes.iter().zip(unit).map(|(a, &u)| a.jacobian(u)).collect()
    }

    /// Full parameter assignment for a raw point: searched axes plus fixed values.
    pub fn bindings(&self, raw: &[f64]) -> Bindings {
        let mut b: Bindings = self.fixed.iter().cloned().collect();
        for (a, &v) in self.axes.iter().zip(raw) {
            b.insert(a.name.clone(), v);
        }
        b
    }

    /// Reads the searched coordinates out of a full assignment.
    pub fn raw_from_bindings(&self, values: &Bindings) -> Result<Vec<f64>, SpaceError> {
        self.axes
            .iter()
            .map(|a| values.get(&a.name).copied().ok_or_else(|| SpaceError::Missing(a.name.clone())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use proptest::strategy::ValueTree;

    fn log_axis(lo: f64, hi: f64) -> Axis {
        Axis::new("k", lo, hi, Scale::Log).unwrap()
    }

    #[test]
    fn geometric_midpoint_maps_to_zero() {
        assert!(log_axis(0.1, 10.0).normalize(1.0).unwrap().abs() < 1e-15);
        assert_eq!(log_axis(0.1, 10.0).normalize(0.1).unwrap(), -1.0);
        assert!(log_axis(0.08, 8.0).normalize(0.8).unwrap().abs() < 1e-15);
    }

    #[test]
    fn linear_axis_is_affine() {
        let a = Axis::new("x", 0.0, 1.0, Scale::Linear).unwrap();
        assert_eq!(a.normalize(0.25).unwrap(), -0.5);
        assert_eq!(a.denormalize(0.5), 0.75);
        assert_eq!(a.jacobian(0.3), 0.5);
    }

    #[test]
    fn rejects_bad_axes_and_points() {
        assert!(matches!(Axis::new("x", 5.0, 2.0, Scale::Linear), Err(SpaceError::InvertedBounds { .. })));
        assert!(matches!(Axis::new("x", 0.0, 2.0, Scale::Log), Err(SpaceError::NonPositiveLogBound { .. })));
        assert!(Axis::new("x", -3.0, 2.0, Scale::Linear).is_ok());
        assert!(matches!(log_axis(0.1, 10.0).normalize(11.0), Err(SpaceError::OutOfBounds { .. })));
        let dup = ParameterSpace::new(vec![log_axis(0.1, 1.0)], vec![("k".into(), 1.0)]);
        assert!(matches!(dup, Err(SpaceError::Duplicate(_))));
    }

    #[test]
    fn log_jacobian_matches_finite_difference() {
        let a = log_axis(0.08, 8.0);
        let u = 0.3;
        let h = 1e-6;
        let fd = (a.denormalize(u + h) - a.denormalize(u - h)) / (2.0 * h);
        assert!((a.jacobian(u) - fd).abs() < 1e-6 * fd.abs());
    }

    #[test]
    fn round_trip_thousand_points() {
        let space = ParameterSpace::new(
            vec![
                log_axis(0.1, 10.0),
                Axis::new("kr", 0.08, 8.0, Scale::Log).unwrap(),
                Axis::new("x", -2.0, 3.0, Scale::Linear).unwrap(),
            ],
            vec![],
        )
        .unwrap();
        let mut runner = proptest::test_runner::TestRunner::deterministic();
        let strat = (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0);
        for _ in 0..1000 {
            let (a, b, c) = strat.new_tree(&mut runner).unwrap().current();
            let raw = [
                (0.1f64.ln() + a * (100f64).ln()).exp().clamp(0.1, 10.0),
                (0.08f64.ln() + b * (100f64).ln()).exp().clamp(0.08, 8.0),
                -2.0 + 5.0 * c,
            ];
            let back = space.denormalize(&space.normalize(&raw).unwrap());
            for (x, y) in raw.iter().zip(&back) {
                assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-300), "{x} vs {y}");
            }
        }
    }

    proptest! {
        #[test]
        fn normalized_points_stay_in_unit_box(t in 0.1f64..10.0) {
            let u = log_axis(0.1, 10.0).normalize(t).unwrap();
            prop_assert!((-1.0..=1.0).contains(&u));
        }
    }
}
