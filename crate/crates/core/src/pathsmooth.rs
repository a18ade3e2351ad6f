//! Turns discrete grid paths into smooth, arclength-parameterized routes and
//! selects speed-adaptive waypoints along them.
//!
//! The pipeline is: line-of-sight pruning ([`lops_prune`]) drops grid points
//! that a straight segment can skip, turning-angle pruning ([`wrps_prune`])
//! drops near-collinear survivors, and [`spline_interpolate`] fits a natural
//! cubic spline through what remains, reparameterized by arc length so that
//! [`select_waypoints`] can place targets at equal arclength increments
//! `speed * period` apart.

use crate::base::{Timebase, Vec3};
use crate::worldmap::{DiscretePath, GridMap};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("need at least 2 control points, got {0}")]
    TooFewPoints(usize),
    #[error("control points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),
    #[error("arclength {s} outside [0, {len}]")]
    ArcOutOfRange { s: f64, len: f64 },
    #[error("predicted speed must be finite and >= 0, got {0}")]
    BadSpeed(f64),
    #[error("waypoint horizon must be >= 1")]
    BadHorizon,
    #[error("turning-angle threshold must be finite and >= 0, got {0}")]
    BadThreshold(f64),
    #[error("circular arc needs radius > 0 and nonzero sweep")]
    BadArc,
}

/// Anything that can be evaluated by arc length from its start.
pub trait ArcLengthPath {
    fn total_length(&self) -> f64;
    /// Point at arclength `s`; `s` may exceed `[0, total_length]` by at most
    /// 1e-9 and is clamped.
    fn point_at(&self, s: f64) -> Result<Vec3, PathError>;
}

fn check_arc_range(s: f64, len: f64) -> Result<f64, PathError> {
    if !s.is_finite() || s < -1e-9 || s > len + 1e-9 {
        return Err(PathError::ArcOutOfRange { s, len });
    }
    Ok(s.clamp(0.0, len))
}

// ---------------------------------------------------------------------------
// Pruning passes
// ---------------------------------------------------------------------------

/// True when the open segment `a -> b` passes through an occupied cell or
/// leaves the map. The segment is cut at every grid line it crosses and each
/// sliver is attributed to the cell containing its midpoint, so cells merely
/// grazed at a corner do not block.
pub fn segment_blocked(map: &GridMap, a: Vec3, b: Vec3) -> bool {
    let cell_of = |p: Vec3| map.world_to_cell(p);
    if cell_of(a).is_none() || cell_of(b).is_none() {
        return true;
    }
    let res = map.resolution();
    let origin = map.origin();
    let mut ts = vec![0.0, 1.0];
    for (p0, p1, o) in [(a.x, b.x, origin.x), (a.y, b.y, origin.y)] {
        let d = p1 - p0;
        if d.abs() < 1e-15 {
            continue;
        }
        let (lo, hi) = if p0 < p1 { (p0, p1) } else { (p1, p0) };
        let mut k = ((lo - o) / res).ceil() as i64;
        loop {
            let line = o + k as f64 * res;
            if line > hi {
                break;
            }
            if line > lo {
                ts.push((line - p0) / d);
            }
            k += 1;
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    for w in ts.windows(2) {
        let mid = a + (b - a) * (0.5 * (w[0] + w[1]));
        match map.world_to_cell(mid) {
            Some((x, y)) if !map.is_occupied(x, y) => {}
            _ => return true,
        }
    }
    false
}

/// Line-of-sight pruning: walks the discrete path keeping a point only when
/// the straight segment from the last kept point to the point after it would
/// cross an occupied cell. Endpoints are always kept. Consecutive kept points
/// are guaranteed mutually visible.
pub fn lops_prune(path: &DiscretePath, map: &GridMap) -> Vec<Vec3> {
    let pts = &path.world_points;
    if pts.len() <= 2 {
        return pts.clone();
    }
    let mut kept = vec![pts[0]];
    let mut anchor = pts[0];
    for i in 1..pts.len() - 1 {
        if segment_blocked(map, anchor, pts[i + 1]) {
            kept.push(pts[i]);
            anchor = pts[i];
        }
    }
    kept.push(*pts.last().unwrap());
    kept
}

fn heading(v: Vec3) -> f64 {
    v.y.atan2(v.x)
}

/// Turning-angle pruning: drops an interior point when the direction change
/// from the incoming segment (measured from the last kept point) to the
/// outgoing segment stays below `angle_threshold` radians. Endpoints are
/// always kept; exact duplicates of the running anchor are dropped.
pub fn wrps_prune(points: &[Vec3], angle_threshold: f64) -> Result<Vec<Vec3>, PathError> {
    if !angle_threshold.is_finite() || angle_threshold < 0.0 {
        return Err(PathError::BadThreshold(angle_threshold));
    }
    if points.len() <= 2 {
        return Ok(points.to_vec());
    }
    let mut kept = vec![points[0]];
    for i in 1..points.len() - 1 {
        let anchor = *kept.last().unwrap();
        let incoming = points[i] - anchor;
        let outgoing = points[i + 1] - points[i];
        if incoming.norm() < 1e-12 {
            continue;
        }
        let turn = crate::base::angle_diff(heading(outgoing), heading(incoming));
        if turn >= angle_threshold {
            kept.push(points[i]);
        }
    }
    kept.push(*points.last().unwrap());
    Ok(kept)
}

/// Default turning-angle threshold in radians.
pub const WRPS_DEFAULT_THRESHOLD: f64 = 0.05;

// ---------------------------------------------------------------------------
// Natural cubic spline with arclength parameterization
// ---------------------------------------------------------------------------

/// One cubic segment `p(dt) = a + b dt + c dt^2 + d dt^3` on `t in [t0, t1]`.
#[derive(Debug, Clone, PartialEq)]
struct Segment {
    t0: f64,
    t1: f64,
    ax: [f64; 4],
    ay: [f64; 4],
}

impl Segment {
    fn eval(&self, t: f64) -> Vec3 {
        let dt = t - self.t0;
        let horner = |c: &[f64; 4]| c[0] + dt * (c[1] + dt * (c[2] + dt * c[3]));
        Vec3::new(horner(&self.ax), horner(&self.ay), 0.0)
    }

    fn speed(&self, t: f64) -> f64 {
        let dt = t - self.t0;
        let d = |c: &[f64; 4]| c[1] + dt * (2.0 * c[2] + dt * 3.0 * c[3]);
        d(&self.ax).hypot(d(&self.ay))
    }
}

/// Natural-cubic second derivatives for knots `t` and values `y` (Thomas
/// algorithm on the standard tridiagonal system).
fn natural_second_derivatives(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let h: Vec<f64> = (0..n - 1).map(|i| t[i + 1] - t[i]).collect();
    let rows = n - 2;
    let mut diag = vec![0.0; rows];
    let mut upper = vec![0.0; rows];
    let mut rhs = vec![0.0; rows];
    for i in 0..rows {
        diag[i] = 2.0 * (h[i] + h[i + 1]);
        upper[i] = h[i + 1];
        rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
    }
    for i in 1..rows {
        let w = h[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m[rows] = rhs[rows - 1] / diag[rows - 1];
    for i in (0..rows - 1).rev() {
        m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
    }
    m
}

fn spline_coeffs(t: &[f64], y: &[f64], m: &[f64]) -> Vec<[f64; 4]> {
    (0..t.len() - 1)
        .map(|i| {
            let h = t[i + 1] - t[i];
            [
                y[i],
                (y[i + 1] - y[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0,
                m[i] / 2.0,
                (m[i + 1] - m[i]) / (6.0 * h),
            ]
        })
        .collect()
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, eps * 0.5, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, eps * 0.5, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), eps, 40)
}

/// Sub-knots per spline segment in the arclength lookup table.
const TABLE_SUBDIV: usize = 16;
/// Relative quadrature tolerance for arclength integration.
const QUAD_REL_TOL: f64 = 1e-6;

/// Smooth path through control points: per-segment cubic polynomials in the
/// chord-length parameter plus a monotone `(t, s)` table mapping arc length
/// back to parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPath {
    control_points: Vec<Vec3>,
    segments: Vec<Segment>,
    /// Monotone `(t, s)` rows; segment boundaries appear exactly once.
    table: Vec<(f64, f64)>,
    /// Arc length at each control point.
    knot_arclengths: Vec<f64>,
    total_length: f64,
}

/// Fits a natural cubic spline through `points`, parameterized by cumulative
/// chord length and reparameterized to arc length by adaptive quadrature.
/// Two points yield a straight segment.
pub fn spline_interpolate(points: &[Vec3]) -> Result<AnalyticPath, PathError> {
    let n = points.len();
    if n < 2 {
        return Err(PathError::TooFewPoints(n));
    }
    let mut knots = vec![0.0];
    for i in 1..n {
        let chord = (points[i] - points[i - 1]).norm();
        if chord < 1e-12 {
            return Err(PathError::DuplicatePoint(i - 1, i));
        }
        knots.push(knots[i - 1] + chord);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    let mx = natural_second_derivatives(&knots, &xs);
    let my = natural_second_derivatives(&knots, &ys);
    let cx = spline_coeffs(&knots, &xs, &mx);
    let cy = spline_coeffs(&knots, &ys, &my);
    let segments: Vec<Segment> = (0..n - 1)
        .map(|i| Segment { t0: knots[i], t1: knots[i + 1], ax: cx[i], ay: cy[i] })
        .collect();

    let mut table = vec![(0.0, 0.0)];
    let mut knot_arclengths = vec![0.0];
    let mut s = 0.0;
    for seg in &segments {
        let speed = |t: f64| seg.speed(t);
        let h = (seg.t1 - seg.t0) / TABLE_SUBDIV as f64;
        let eps = QUAD_REL_TOL * (seg.t1 - seg.t0) / TABLE_SUBDIV as f64 * 1e-3;
        for j in 0..TABLE_SUBDIV {
            let a = seg.t0 + j as f64 * h;
            let b = if j + 1 == TABLE_SUBDIV { seg.t1 } else { a + h };
            s += adaptive_simpson(&speed, a, b, eps);
            table.push((b, s));
        }
        knot_arclengths.push(s);
    }
    Ok(AnalyticPath {
        control_points: points.to_vec(),
        segments,
        table,
        knot_arclengths,
        total_length: s,
    })
}

impl AnalyticPath {
    pub fn control_points(&self) -> &[Vec3] {
        &self.control_points
    }

    /// Arc length at each control point (first entry 0, last `total_length`).
    pub fn knot_arclengths(&self) -> &[f64] {
        &self.knot_arclengths
    }

    fn segment_for(&self, t: f64) -> &Segment {
        let i = self
            .segments
            .partition_point(|seg| seg.t1 < t)
            .min(self.segments.len() - 1);
        &self.segments[i]
    }

    /// Parameter value at arclength `s` via table lookup plus a bracketed
    /// Newton solve on the segment quadrature.
    fn param_at(&self, s: f64) -> f64 {
        let row = self.table.partition_point(|&(_, rs)| rs < s);
        if row == 0 {
            return self.table[0].0;
        }
        if row >= self.table.len() {
            return self.table[self.table.len() - 1].0;
        }
        let (t_lo, s_lo) = self.table[row - 1];
        let (t_hi, s_hi) = self.table[row];
        if s_hi - s_lo < 1e-15 {
            return t_lo;
        }
        let seg = self.segment_for(0.5 * (t_lo + t_hi));
        let target = s - s_lo;
        let tol = 1e-12 * (1.0 + self.total_length);
        let eps = tol * 0.1;
        let (mut lo, mut hi) = (t_lo, t_hi);
        let mut t = t_lo + (t_hi - t_lo) * target / (s_hi - s_lo);
        for _ in 0..60 {
            let g = adaptive_simpson(&|u| seg.speed(u), t_lo, t, eps) - target;
            if g.abs() <= tol {
                break;
            }
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let sp = seg.speed(t);
            let mut next = if sp > 1e-12 { t - g / sp } else { 0.5 * (lo + hi) };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            t = next;
        }
        t
    }

    /// Nearest arclength to a world point. With `hint` the search is local
    /// around the hinted arclength (for tracking forward progress);
    /// otherwise the whole path is scanned.
    pub fn project(&self, p: Vec3, hint: Option<f64>) -> f64 {
        let (lo, hi) = match hint {
            Some(h) => ((h - 1.0).max(0.0), (h + 2.0).min(self.total_length)),
            None => (0.0, self.total_length),
        };
        let steps = 256;
        let ds = (hi - lo) / steps as f64;
        let mut best_s = lo;
        let mut best_d = f64::INFINITY;
        for i in 0..=steps {
            let s = lo + i as f64 * ds;
            let d = (self.point_at(s).unwrap() - p).norm_squared();
            if d < best_d {
                best_d = d;
                best_s = s;
            }
        }
        let (mut a, mut b) = ((best_s - ds).max(0.0), (best_s + ds).min(self.total_length));
        for _ in 0..50 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            let d1 = (self.point_at(m1).unwrap() - p).norm_squared();
            let d2 = (self.point_at(m2).unwrap() - p).norm_squared();
            if d1 < d2 {
                b = m2;
            } else {
                a = m1;
            }
        }
        0.5 * (a + b)
    }

    /// Samples `(s, x, y)` rows every `ds` meters (plus the final point) as
    /// CSV with an `s,x,y` header.
    pub fn to_csv(&self, ds: f64) -> String {
        let mut out = String::from("s,x,y\n");
        let mut s = 0.0;
        while s < self.total_length {
            let p = self.point_at(s).unwrap();
            out.push_str(&format!("{:.9},{:.9},{:.9}\n", s, p.x, p.y));
            s += ds;
        }
        let p = self.point_at(self.total_length).unwrap();
        out.push_str(&format!("{:.9},{:.9},{:.9}\n", self.total_length, p.x, p.y));
        out
    }
}

impl ArcLengthPath for AnalyticPath {
    fn total_length(&self) -> f64 {
        self.total_length
    }

    fn point_at(&self, s: f64) -> Result<Vec3, PathError> {
        let s = check_arc_range(s, self.total_length)?;
        let t = self.param_at(s);
        Ok(self.segment_for(t).eval(t))
    }
}

/// Exact circular arc, mostly for synthetic scenarios and geometric checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularArc {
    center: Vec3,
    radius: f64,
    start_angle: f64,
    /// Signed sweep in radians; positive is counterclockwise.
    sweep: f64,
}

impl CircularArc {
    pub fn new(center: Vec3, radius: f64, start_angle: f64, sweep: f64) -> Result<Self, PathError> {
        if !(radius.is_finite() && radius > 0.0) || sweep == 0.0 || !sweep.is_finite() {
            return Err(PathError::BadArc);
        }
        Ok(Self { center, radius, start_angle, sweep })
    }
}

impl ArcLengthPath for CircularArc {
    fn total_length(&self) -> f64 {
        self.sweep.abs() * self.radius
    }

    fn point_at(&self, s: f64) -> Result<Vec3, PathError> {
        let s = check_arc_range(s, self.total_length())?;
        let angle = self.start_angle + self.sweep.signum() * s / self.radius;
        Ok(self.center + self.radius * Vec3::new(angle.cos(), angle.sin(), 0.0))
    }
}

// ---------------------------------------------------------------------------
// Speed-adaptive waypoint selection
// ---------------------------------------------------------------------------

/// Waypoints placed along a path at equal arclength increments.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPlan {
    /// Target positions, one per horizon step.
    pub points: Vec<Vec3>,
    /// Euclidean distances between consecutive points (`horizon - 1` entries).
    pub spacings: Vec<f64>,
    /// Number of points.
    pub horizon: usize,
}

/// Places `horizon` waypoints at arclengths `s0 + k * speed * T` for
/// `k = 1..=horizon`, clamped at the path end, so a follower moving at
/// `predicted_speed` passes one waypoint per control period.
pub fn select_waypoints<P: ArcLengthPath + ?Sized>(
    path: &P,
    s0: f64,
    predicted_speed: f64,
    horizon: usize,
    timebase: &Timebase,
) -> Result<WaypointPlan, PathError> {
    if horizon == 0 {
        return Err(PathError::BadHorizon);
    }
    if !predicted_speed.is_finite() || predicted_speed < 0.0 {
        return Err(PathError::BadSpeed(predicted_speed));
    }
    let len = path.total_length();
    let s0 = check_arc_range(s0, len)?;
    let step = predicted_speed * timebase.period();
    let mut points = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let s = (s0 + k as f64 * step).min(len);
        points.push(path.point_at(s)?);
    }
    let spacings = points.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    Ok(WaypointPlan { points, spacings, horizon })
}

/// Full geometric pipeline: grid plan -> line-of-sight prune -> turning-angle
/// prune -> spline. The map should already be inflated for clearance.
pub fn plan_smooth_path(
    map: &GridMap,
    path: &DiscretePath,
    wrps_threshold: f64,
) -> Result<AnalyticPath, PathError> {
    let kept = lops_prune(path, map);
    let kept = wrps_prune(&kept, wrps_threshold)?;
    spline_interpolate(&kept)
}
