//! Shared planar-motion primitives: states, leash tension samples, the control
//! timebase, angle helpers, finite differences, smoothing, and seeded RNG
//! streams.
//!
//! Conventions used across the crate:
//!
//! * All kinematic vectors are 3-component with the z entry fixed at `0.0`
//!   while operating in the plane.
//! * The leash direction `e_l` is the unit vector from the robot toward the
//!   human, so `x_h = x_r + l * e_l` composes the human position and the
//!   tension of magnitude `F` acts as `-F * e_l` on the human (pulling the
//!   human toward the robot) and `+F * e_l` on the robot.
//! * Yaw angles are normalized to `(-pi, pi]`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Planar vectors carry a third component pinned to zero.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Errors from the primitive constructors and kinematic helpers.
#[derive(Debug, Error, PartialEq)]
pub enum BaseError {
    #[error("tension magnitude must be finite and >= 0, got {0}")]
    BadMagnitude(f64),
    #[error("leash direction must be a unit vector, norm was {0}")]
    BadDirection(f64),
    #[error("leash length must be finite and > 0, got {0}")]
    BadLength(f64),
    #[error("need at least 2 positions to differentiate, got {0}")]
    TooFewPositions(usize),
    #[error("timebase period must be finite and > 0, got {0}")]
    BadPeriod(f64),
    #[error("smoothing window must be odd and >= 1, got {0}")]
    BadWindow(usize),
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::TAU);
    if r > std::f64::consts::PI {
        r - std::f64::consts::TAU
    } else {
        r
    }
}

/// Magnitude of the wrapped difference between two angles, in `[0, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b).abs()
}

/// Position, velocity, and yaw of one body in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarState {
    pub x: Vec3,
    pub v: Vec3,
    /// Yaw in `(-pi, pi]`.
    pub theta: f64,
}

impl PlanarState {
    /// Builds a state, wrapping `theta` into `(-pi, pi]`.
    pub fn new(x: Vec3, v: Vec3, theta: f64) -> Self {
        debug_assert_eq!(x.z, 0.0, "planar position must have z = 0");
        debug_assert_eq!(v.z, 0.0, "planar velocity must have z = 0");
        Self { x, v, theta: normalize_angle(theta) }
    }

    /// State at rest at `(x, y)` facing `theta`.
    pub fn at_rest(x: f64, y: f64, theta: f64) -> Self {
        Self::new(Vec3::new(x, y, 0.0), Vec3::zeros(), theta)
    }

    pub fn speed(&self) -> f64 {
        self.v.norm()
    }
}

/// One leash measurement: tension magnitude and the unit direction `e_l`
/// pointing from the robot toward the human.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensionSample {
    magnitude: f64,
    direction: Vec3,
}

/// Which end of the leash a force acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeashEnd {
    Human,
    Robot,
}

impl TensionSample {
    /// Validates that the magnitude is finite and non-negative, and the
    /// direction is a unit vector within 1e-9.
    pub fn new(magnitude: f64, direction: Vec3) -> Result<Self, BaseError> {
        if !magnitude.is_finite() || magnitude < 0.0 {
            return Err(BaseError::BadMagnitude(magnitude));
        }
        let norm = direction.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(BaseError::BadDirection(norm));
        }
        Ok(Self { magnitude, direction })
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    /// Force vector exerted on the given end: `-F * e_l` on the human,
    /// `+F * e_l` on the robot. The two ends are exact negations.
    pub fn force_on(&self, end: LeashEnd) -> Vec3 {
        let f = self.magnitude * self.direction;
        match end {
            LeashEnd::Human => -f,
            LeashEnd::Robot => f,
        }
    }
}

/// Splits a tension sample into the force vector on one leash end.
pub fn decompose_tension(sample: &TensionSample, end: LeashEnd) -> Vec3 {
    sample.force_on(end)
}

/// Human position from robot position, leash length, and leash direction:
/// `x_h = x_r + l * e_l`.
pub fn compose_human_position(robot_x: Vec3, l: f64, e_l: Vec3) -> Result<Vec3, BaseError> {
    if !l.is_finite() || l <= 0.0 {
        return Err(BaseError::BadLength(l));
    }
    let norm = e_l.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
        return Err(BaseError::BadDirection(norm));
    }
    Ok(robot_x + l * e_l)
}

/// Fixed control period shared by logging, prediction, and planning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timebase {
    period: f64,
}

impl Timebase {
    pub fn new(period: f64) -> Result<Self, BaseError> {
        if !period.is_finite() || period <= 0.0 {
            return Err(BaseError::BadPeriod(period));
        }
        Ok(Self { period })
    }

    /// Seconds per control step.
    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn rate_hz(&self) -> f64 {
        1.0 / self.period
    }

    /// Number of whole steps covering `duration` seconds.
    pub fn steps_for(&self, duration: f64) -> usize {
        (duration / self.period).round() as usize
    }
}

impl Default for Timebase {
    /// 50 Hz control period.
    fn default() -> Self {
        Self { period: 0.02 }
    }
}

/// A yaw angle viewed as a planar unit vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVecYaw {
    yaw: f64,
}

impl UnitVecYaw {
    pub fn new(yaw: f64) -> Self {
        Self { yaw: normalize_angle(yaw) }
    }

    /// Yaw of a planar vector; zero-length input maps to yaw 0.
    pub fn from_vector(v: Vec3) -> Self {
        Self::new(v.y.atan2(v.x))
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    /// `(cos yaw, sin yaw, 0)`, unit norm by construction.
    pub fn as_vector(&self) -> Vec3 {
        Vec3::new(self.yaw.cos(), self.yaw.sin(), 0.0)
    }
}

/// Per-sample velocities from a position series sampled at the timebase
/// period: central differences in the interior, second-order one-sided
/// stencils at the ends (exact for quadratic position profiles). With exactly
/// two samples both entries fall back to the first-order difference.
pub fn finite_difference_velocity(
    positions: &[Vec3],
    timebase: &Timebase,
) -> Result<Vec<Vec3>, BaseError> {
    let n = positions.len();
    if n < 2 {
        return Err(BaseError::TooFewPositions(n));
    }
    let t = timebase.period();
    if n == 2 {
        let v = (positions[1] - positions[0]) / t;
        return Ok(vec![v, v]);
    }
    let mut out = Vec::with_capacity(n);
    out.push((-3.0 * positions[0] + 4.0 * positions[1] - positions[2]) / (2.0 * t));
    for i in 1..n - 1 {
        out.push((positions[i + 1] - positions[i - 1]) / (2.0 * t));
    }
    out.push((3.0 * positions[n - 1] - 4.0 * positions[n - 2] + positions[n - 3]) / (2.0 * t));
    Ok(out)
}

/// Centered moving average with an odd window; near the edges the window
/// shrinks to the samples that exist, so constant series pass through
/// unchanged.
pub fn moving_average(values: &[f64], window: usize) -> Result<Vec<f64>, BaseError> {
    if window == 0 || window % 2 == 0 {
        return Err(BaseError::BadWindow(window));
    }
    let half = window / 2;
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        let sum: f64 = values[lo..hi].iter().sum();
        out.push(sum / (hi - lo) as f64);
    }
    Ok(out)
}

/// Component-wise centered moving average over a vector series.
pub fn moving_average_vec3(values: &[Vec3], window: usize) -> Result<Vec<Vec3>, BaseError> {
    let xs: Vec<f64> = values.iter().map(|v| v.x).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.y).collect();
    let sx = moving_average(&xs, window)?;
    let sy = moving_average(&ys, window)?;
    Ok(sx.iter().zip(&sy).map(|(&x, &y)| Vec3::new(x, y, 0.0)).collect())
}

/// FNV-1a over a byte string; stable across platforms, used only to derive
/// named RNG substreams.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic RNG for a root seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent deterministic substream identified by a label, so that e.g.
/// data generation and solver sampling never share draws.
pub fn stream_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let mut bytes = Vec::with_capacity(8 + label.len());
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(label.as_bytes());
    ChaCha8Rng::seed_from_u64(fnv1a64(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn compose_places_human_along_leash() {
        let x = compose_human_position(Vec3::zeros(), 1.5, Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert_eq!(x, Vec3::new(0.0, 1.5, 0.0));
    }

    #[test]
    fn compose_rejects_nonpositive_length() {
        assert!(compose_human_position(Vec3::zeros(), 0.0, Vec3::x()).is_err());
        assert!(compose_human_position(Vec3::zeros(), -1.0, Vec3::x()).is_err());
    }

    #[test]
    fn decompose_splits_ten_newtons() {
        let s = TensionSample::new(10.0, Vec3::x()).unwrap();
        assert_eq!(decompose_tension(&s, LeashEnd::Human), Vec3::new(-10.0, 0.0, 0.0));
        assert_eq!(decompose_tension(&s, LeashEnd::Robot), Vec3::new(10.0, 0.0, 0.0));
    }

    #[test]
    fn tension_sample_validates_inputs() {
        assert_eq!(
            TensionSample::new(-1.0, Vec3::x()).unwrap_err(),
            BaseError::BadMagnitude(-1.0)
        );
        assert!(TensionSample::new(f64::NAN, Vec3::x()).is_err());
        assert!(TensionSample::new(1.0, Vec3::new(0.5, 0.5, 0.0)).is_err());
    }

    #[test]
    fn finite_difference_linear_motion_is_exact() {
        let tb = Timebase::default();
        let v = Vec3::new(0.7, -0.3, 0.0);
        let xs: Vec<Vec3> = (0..20).map(|i| v * (i as f64 * tb.period())).collect();
        let vs = finite_difference_velocity(&xs, &tb).unwrap();
        for got in vs {
            assert_abs_diff_eq!(got.x, v.x, epsilon = 1e-12);
            assert_abs_diff_eq!(got.y, v.y, epsilon = 1e-12);
        }
    }

    // Oracle: x(t) = t^2 has velocity 2t. Central differences are exact on
    // quadratics and the one-sided end stencils are second order, so every
    // sample must match within T^2.
    #[test]
    fn finite_difference_quadratic_stays_within_period_squared() {
        let tb = Timebase::default();
        let t_step = tb.period();
        let xs: Vec<Vec3> = (0..50)
            .map(|i| {
                let t = i as f64 * t_step;
                Vec3::new(t * t, 0.0, 0.0)
            })
            .collect();
        let vs = finite_difference_velocity(&xs, &tb).unwrap();
        let max_err = vs
            .iter()
            .enumerate()
            .map(|(i, v)| (v.x - 2.0 * (i as f64 * t_step)).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= t_step * t_step, "max error {max_err}");
    }

    #[test]
    fn finite_difference_needs_two_positions() {
        let tb = Timebase::default();
        assert_eq!(
            finite_difference_velocity(&[Vec3::zeros()], &tb).unwrap_err(),
            BaseError::TooFewPositions(1)
        );
    }

    #[test]
    fn default_timebase_is_fifty_hertz() {
        let tb = Timebase::default();
        assert_eq!(tb.period(), 0.02);
        assert_eq!(tb.rate_hz(), 50.0);
        assert_eq!(tb.steps_for(60.0), 3000);
    }

    #[test]
    fn moving_average_keeps_constants_and_requires_odd_window() {
        let c = vec![2.5; 12];
        assert_eq!(moving_average(&c, 5).unwrap(), c);
        assert!(moving_average(&c, 4).is_err());
        let ramp = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let sm = moving_average(&ramp, 3).unwrap();
        assert_eq!(sm, vec![0.5, 1.0, 2.0, 3.0, 3.5]);
    }

    #[test]
    fn yaw_vector_roundtrip() {
        let y = UnitVecYaw::new(2.0);
        assert_abs_diff_eq!(y.as_vector().norm(), 1.0, epsilon = 1e-12);
        let back = UnitVecYaw::from_vector(y.as_vector());
        assert_abs_diff_eq!(back.yaw(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn stream_rngs_are_stable_and_distinct() {
        use rand::Rng;
        let a: f64 = stream_rng(7, "walk").gen();
        let b: f64 = stream_rng(7, "walk").gen();
        let c: f64 = stream_rng(7, "plan").gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn angles_normalize_into_half_open_range(a in -50.0f64..50.0) {
            let r = normalize_angle(a);
            prop_assert!(r > -std::f64::consts::PI && r <= std::f64::consts::PI);
            prop_assert!(((r - a) / std::f64::consts::TAU).round() * std::f64::consts::TAU + a - r < 1e-9);
        }

        // Composing a human position and reading the leash geometry back must
        // recover length and direction.
        #[test]
        fn leash_composition_roundtrip(
            rx in -10.0f64..10.0, ry in -10.0f64..10.0,
            l in 0.1f64..5.0, yaw in -3.0f64..3.0,
        ) {
            let e = UnitVecYaw::new(yaw).as_vector();
            let xr = Vec3::new(rx, ry, 0.0);
            let xh = compose_human_position(xr, l, e).unwrap();
            let d = xh - xr;
            prop_assert!((d.norm() - l).abs() < 1e-9);
            prop_assert!((d / d.norm() - e).norm() < 1e-9);
        }

        // The two leash ends always see exactly opposite forces.
        #[test]
        fn tension_ends_are_negations(mag in 0.0f64..50.0, yaw in -3.0f64..3.0) {
            let s = TensionSample::new(mag, UnitVecYaw::new(yaw).as_vector()).unwrap();
            let h = s.force_on(LeashEnd::Human);
            let r = s.force_on(LeashEnd::Robot);
            prop_assert_eq!(h, -r);
        }

        // Affine position sequences differentiate exactly (up to roundoff).
        #[test]
        fn finite_difference_exact_on_affine(
            ax in -5.0f64..5.0, bx in -5.0f64..5.0,
            ay in -5.0f64..5.0, by in -5.0f64..5.0,
            n in 2usize..40,
        ) {
            let tb = Timebase::default();
            let xs: Vec<Vec3> = (0..n)
                .map(|i| {
                    let t = i as f64 * tb.period();
                    Vec3::new(ax + bx * t, ay + by * t, 0.0)
                })
                .collect();
            let vs = finite_difference_velocity(&xs, &tb).unwrap();
            for v in vs {
                prop_assert!((v.x - bx).abs() < 1e-9);
                prop_assert!((v.y - by).abs() < 1e-9);
            }
        }
    }
}
