//! Admissible boundary profiles, the slip-boundary geometry of the channel
//! domain, and structured meshes of it.
//!
//! The domain is the region between the graph of a profile `alpha` on (0, 1)
//! and the horizontal lid at height `omega`. The slip boundary S is the
//! graph; the remaining three sides form the no-slip boundary.

mod mesh;
mod spline;

pub use mesh::{build_mesh, BoundaryEdge, BoundaryTag, Mesh};
pub use spline::CubicSpline;

use std::sync::Arc;

use crate::error::{ConstraintKind, GeometryError};

/// Number of uniform samples used by admissibility checks and C1 distances.
pub const CHECK_GRID: usize = 1000;

/// Bounds defining the admissible profile class: values in
/// `[alpha_min, alpha_max]`, slope bounded by `c1`, curvature by `c2`,
/// channel lid at `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibleSetParams {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub c1: f64,
    pub c2: f64,
    pub omega: f64,
}

impl Default for AdmissibleSetParams {
    fn default() -> Self {
        AdmissibleSetParams {
            alpha_min: 0.1,
            alpha_max: 0.9,
            c1: 2.0,
            c2: 10.0,
            omega: 1.5,
        }
    }
}

impl AdmissibleSetParams {
    pub fn validated(self) -> Result<Self, GeometryError> {
        if !(self.alpha_min > 0.0 && self.alpha_min < self.alpha_max && self.alpha_max < self.omega)
        {
            return Err(GeometryError::InvalidParams(format!(
                "need 0 < alpha_min < alpha_max < omega, got ({}, {}, {})",
                self.alpha_min, self.alpha_max, self.omega
            )));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(GeometryError::InvalidParams(format!(
                "derivative bounds must be positive, got C1 = {}, C2 = {}",
                self.c1, self.c2
            )));
        }
        Ok(self)
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A candidate profile with two derivatives, before admissibility checks.
#[derive(Clone)]
pub enum ShapeProfile {
    Analytic {
        value: ScalarFn,
        slope: ScalarFn,
        curvature: ScalarFn,
    },
    Spline(CubicSpline),
}

impl ShapeProfile {
    pub fn analytic(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        slope: impl Fn(f64) -> f64 + Send + Sync + 'static,
        curvature: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ShapeProfile::Analytic {
            value: Arc::new(value),
            slope: Arc::new(slope),
            curvature: Arc::new(curvature),
        }
    }

    /// alpha(x) = c
    pub fn constant(c: f64) -> Self {
        Self::analytic(move |_| c, |_| 0.0, |_| 0.0)
    }

    /// alpha(x) = base + amp * sin(2 pi freq x)
    pub fn sine(base: f64, amp: f64, freq: f64) -> Self {
        let k = 2.0 * std::f64::consts::PI * freq;
        Self::analytic(
            move |x| base + amp * (k * x).sin(),
            move |x| amp * k * (k * x).cos(),
            move |x| -amp * k * k * (k * x).sin(),
        )
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            ShapeProfile::Analytic { value, .. } => value(x),
            ShapeProfile::Spline(s) => s.value(x),
        }
    }

    pub fn slope(&self, x: f64) -> f64 {
        match self {
            ShapeProfile::Analytic { slope, .. } => slope(x),
            ShapeProfile::Spline(s) => s.slope(x),
        }
    }

    pub fn curvature(&self, x: f64) -> f64 {
        match self {
            ShapeProfile::Analytic { curvature, .. } => curvature(x),
            ShapeProfile::Spline(s) => s.curvature(x),
        }
    }

    fn extra_check_points(&self) -> Vec<f64> {
        match self {
            ShapeProfile::Analytic { .. } => Vec::new(),
            ShapeProfile::Spline(s) => s.knots().to_vec(),
        }
    }
}

impl std::fmt::Debug for ShapeProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShapeProfile::Analytic { .. } => f.write_str("ShapeProfile::Analytic"),
            ShapeProfile::Spline(s) => write!(f, "ShapeProfile::Spline({} knots)", s.knots().len()),
        }
    }
}

/// A validated admissible profile together with its parameter set.
#[derive(Debug, Clone)]
pub struct BoundaryShape {
    profile: ShapeProfile,
    params: AdmissibleSetParams,
}

impl BoundaryShape {
    pub fn alpha(&self, x: f64) -> f64 {
        self.profile.value(x)
    }

    pub fn alpha_prime(&self, x: f64) -> f64 {
        self.profile.slope(x)
    }

    pub fn alpha_second(&self, x: f64) -> f64 {
        self.profile.curvature(x)
    }

    pub fn omega(&self) -> f64 {
        self.params.omega
    }

    pub fn params(&self) -> &AdmissibleSetParams {
        &self.params
    }

    pub fn profile(&self) -> &ShapeProfile {
        &self.profile
    }
}

/// Points where admissibility is checked: the uniform grid plus any spline
/// knots (curvature is piecewise linear there, so knots and grid points
/// bound the piecewise extrema of the relevant quantities well enough for
/// cubic pieces).
fn check_points(profile: &ShapeProfile, grid: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..=grid).map(|i| i as f64 / grid as f64).collect();
    pts.extend(profile.extra_check_points());
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts
}

fn validate_on_grid(
    profile: &ShapeProfile,
    params: &AdmissibleSetParams,
    grid: usize,
) -> Result<(), GeometryError> {
    // absolute slack for pure roundoff; genuine overshoots are far larger
    let eps = 1e-12;
    for &x in &check_points(profile, grid) {
        let v = profile.value(x);
        if v < params.alpha_min - eps {
            return Err(GeometryError::ConstraintViolation {
                which: ConstraintKind::ValueLow,
                x1: x,
                value: v,
            });
        }
        if v > params.alpha_max + eps {
            return Err(GeometryError::ConstraintViolation {
                which: ConstraintKind::ValueHigh,
                x1: x,
                value: v,
            });
        }
        let d = profile.slope(x);
        if d.abs() > params.c1 + eps {
            return Err(GeometryError::ConstraintViolation {
                which: ConstraintKind::SlopeBound,
                x1: x,
                value: d,
            });
        }
        let dd = profile.curvature(x);
        if dd.abs() > params.c2 + eps {
            return Err(GeometryError::ConstraintViolation {
                which: ConstraintKind::CurvatureBound,
                x1: x,
                value: dd,
            });
        }
    }
    Ok(())
}

/// Checks all admissibility constraints on the dense grid and returns the
/// validated shape, or the first violation found (scanning left to right).
pub fn validate_shape(
    profile: ShapeProfile,
    params: &AdmissibleSetParams,
) -> Result<BoundaryShape, GeometryError> {
    let params = params.validated()?;
    validate_on_grid(&profile, &params, CHECK_GRID)?;
    Ok(BoundaryShape { profile, params })
}

/// Same check on an arbitrary grid density; used by robustness tests.
pub fn validate_shape_with_grid(
    profile: ShapeProfile,
    params: &AdmissibleSetParams,
    grid: usize,
) -> Result<BoundaryShape, GeometryError> {
    let params = params.validated()?;
    validate_on_grid(&profile, &params, grid)?;
    Ok(BoundaryShape { profile, params })
}

/// C1 distance `max|a - b| + max|a' - b'|`, both maxima taken over the
/// dense check grid (plus spline knots of either shape).
pub fn c1_distance(a: &BoundaryShape, b: &BoundaryShape) -> f64 {
    debug_assert_eq!(a.params, b.params);
    let mut pts = check_points(&a.profile, CHECK_GRID);
    pts.extend(b.profile.extra_check_points());
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let mut dv: f64 = 0.0;
    let mut ds: f64 = 0.0;
    for &x in &pts {
        dv = dv.max((a.alpha(x) - b.alpha(x)).abs());
        ds = ds.max((a.alpha_prime(x) - b.alpha_prime(x)).abs());
    }
    dv + ds
}

/// Unit outward normal, unit tangent, and arclength weight at a point of S.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
    pub weight: f64,
}

/// Frame at parameter `x1` of the slip boundary, from the exact slope:
/// `nu = (a', -1)/w`, `tau = (1, a')/w`, `w = sqrt(1 + a'^2)`. The normal
/// points out of the domain (which lies above the graph).
pub fn boundary_frame(shape: &BoundaryShape, x1: f64) -> Frame {
    frame_from_slope(shape.alpha_prime(x1))
}

pub fn frame_from_slope(slope: f64) -> Frame {
    let w = (1.0 + slope * slope).sqrt();
    Frame {
        normal: [slope / w, -1.0 / w],
        tangent: [1.0 / w, slope / w],
        weight: w,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> AdmissibleSetParams {
        AdmissibleSetParams::default()
    }

    #[test]
    fn constant_profile_is_admissible() {
        let s = validate_shape(ShapeProfile::constant(0.5), &params()).unwrap();
        assert_eq!(s.alpha(0.3), 0.5);
        assert_eq!(s.alpha_prime(0.7), 0.0);
        assert_eq!(s.alpha_second(0.2), 0.0);
    }

    #[test]
    fn sine_profile_is_admissible() {
        let s = validate_shape(ShapeProfile::sine(0.5, 0.05, 1.0), &params()).unwrap();
        // max slope is 0.1 pi, well below the bound of 2
        let mut max_slope: f64 = 0.0;
        for i in 0..=1000 {
            max_slope = max_slope.max(s.alpha_prime(i as f64 / 1000.0).abs());
        }
        assert!(max_slope <= 0.1 * std::f64::consts::PI + 1e-12);
    }

    #[test]
    fn low_value_reports_first_violation() {
        let profile = ShapeProfile::analytic(|x| 0.05 * x + 0.05, |_| 0.05, |_| 0.0);
        match validate_shape(profile, &params()) {
            Err(GeometryError::ConstraintViolation { which, x1, value }) => {
                assert_eq!(which, ConstraintKind::ValueLow);
                assert_eq!(x1, 0.0);
                assert!((value - 0.05).abs() < 1e-15);
            }
            other => panic!("expected ConstraintViolation, got {other:?}"),
        }
    }

    #[test]
    fn slope_violation_detected() {
        let profile = ShapeProfile::sine(0.5, 0.35, 1.0); // slope peaks at 0.7 pi > 2
        match validate_shape(profile, &params()) {
            Err(GeometryError::ConstraintViolation { which, .. }) => {
                assert_eq!(which, ConstraintKind::SlopeBound);
            }
            other => panic!("expected slope violation, got {other:?}"),
        }
    }

    #[test]
    fn c1_distance_of_constants() {
        let a = validate_shape(ShapeProfile::constant(0.5), &params()).unwrap();
        let b = validate_shape(ShapeProfile::constant(0.6), &params()).unwrap();
        assert!((c1_distance(&a, &b) - 0.1).abs() < 1e-14);
        assert_eq!(c1_distance(&a, &a), 0.0);
    }

    #[test]
    fn c1_distance_constant_vs_sine() {
        let a = validate_shape(ShapeProfile::constant(0.5), &params()).unwrap();
        let b = validate_shape(ShapeProfile::sine(0.5, 0.01, 1.0), &params()).unwrap();
        let expected = 0.01 + 0.02 * std::f64::consts::PI;
        assert!((c1_distance(&a, &b) - expected).abs() < 1e-3);
    }

    #[test]
    fn frames_flat_and_diagonal() {
        let f = frame_from_slope(0.0);
        assert_eq!(f.normal, [0.0, -1.0]);
        assert_eq!(f.tangent, [1.0, 0.0]);
        assert_eq!(f.weight, 1.0);
        let g = frame_from_slope(1.0);
        let s = 1.0 / 2.0_f64.sqrt();
        assert!((g.normal[0] - s).abs() < 1e-15 && (g.normal[1] + s).abs() < 1e-15);
        assert!((g.tangent[0] - s).abs() < 1e-15 && (g.tangent[1] - s).abs() < 1e-15);
        assert!((g.weight - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn finer_grid_agrees_on_smooth_corpus() {
        let profiles = [
            ShapeProfile::constant(0.5),
            ShapeProfile::sine(0.5, 0.05, 1.0),
            ShapeProfile::analytic(
                |x| 0.45 + 0.1 * x * x * (3.0 - 2.0 * x),
                |x| 0.6 * x * (1.0 - x),
                |x| 0.6 * (1.0 - 2.0 * x),
            ),
        ];
        for p in profiles {
            let coarse = validate_shape_with_grid(p.clone(), &params(), CHECK_GRID).is_ok();
            let fine = validate_shape_with_grid(p, &params(), 10 * CHECK_GRID).is_ok();
            assert_eq!(coarse, fine);
        }
    }

    proptest! {
        #[test]
        fn frame_is_orthonormal(slope in -5.0f64..5.0) {
            let f = frame_from_slope(slope);
            let n2 = f.normal[0] * f.normal[0] + f.normal[1] * f.normal[1];
            let t2 = f.tangent[0] * f.tangent[0] + f.tangent[1] * f.tangent[1];
            let ndt = f.normal[0] * f.tangent[0] + f.normal[1] * f.tangent[1];
            prop_assert!((n2 - 1.0).abs() < 1e-14);
            prop_assert!((t2 - 1.0).abs() < 1e-14);
            prop_assert!(ndt.abs() < 1e-14);
            prop_assert!(f.weight >= 1.0);
            // w * tau = (1, slope) exactly up to roundoff
            prop_assert!((f.weight * f.tangent[0] - 1.0).abs() < 1e-14);
            prop_assert!((f.weight * f.tangent[1] - slope).abs() < 1e-13);
        }
    }
}
