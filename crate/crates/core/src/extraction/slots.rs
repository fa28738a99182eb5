use crate::dataset::SlotOrientation;
use crate::geometry::PsvFrame;

use super::lines::angle_between;
use super::{LineSegment, P};

#[derive(Debug, Clone, PartialEq)]
pub struct SlotParams {
    pub frame: PsvFrame,
    pub min_width_m: f64,
    pub max_width_m: f64,
    pub angle_tol_deg: f64,
    /// Separator angles to the entrance besides 90°.
    pub oblique_deg: Vec<f64>,
    /// How far a separator end may sit from the entrance line, pixels.
    pub join_tol: f64,
    pub min_separator_m: f64,
}

impl SlotParams {
    pub fn for_frame(frame: PsvFrame) -> Self {
        Self {
            frame,
            min_width_m: 2.0,
            max_width_m: 3.5,
            angle_tol_deg: 8.0,
            oblique_deg: vec![45.0, 135.0],
            join_tol: 0.35 / frame.meters_per_px,
            min_separator_m: 1.5,
        }
    }
}

/// Corners in pixels and in vehicle-frame meters; the entrance is the
/// edge from corner `entrance_idx` to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct ParkingSlot {
    pub corners_px: [P; 4],
    pub corners_m: [P; 4],
    pub entrance_idx: usize,
    pub orientation: SlotOrientation,
}

fn sub(a: P, b: P) -> P {
    (a.0 - b.0, a.1 - b.1)
}

fn cross(a: P, b: P) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

fn dist(a: P, b: P) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn intersect(a: &LineSegment, b: &LineSegment) -> Option<P> {
    let (da, db) = (a.direction(), b.direction());
    let den = cross(da, db);
    if den.abs() < 1e-9 {
        return None;
    }
    let t = cross(sub(b.p0, a.p0), db) / den;
    Some((a.p0.0 + t * da.0, a.p0.1 + t * da.1))
}

fn segments_cross(a: P, b: P, c: P, d: P) -> bool {
    let o = |p: P, q: P, r: P| cross(sub(q, p), sub(r, p));
    o(a, b, c) * o(a, b, d) < 0.0 && o(c, d, a) * o(c, d, b) < 0.0
}

/// Non-self-intersecting with opposite sides of similar length.
pub fn is_valid_quad(q: &[P; 4]) -> bool {
    if segments_cross(q[0], q[1], q[2], q[3]) || segments_cross(q[1], q[2], q[3], q[0]) {
        return false;
    }
    let ratio_ok = |a: f64, b: f64| b > 0.0 && (0.8..=1.25).contains(&(a / b));
    ratio_ok(dist(q[0], q[1]), dist(q[2], q[3])) && ratio_ok(dist(q[1], q[2]), dist(q[3], q[0]))
}

struct Separator<'a> {
    line: &'a LineSegment,
    foot: P,
    far: P,
    along: f64,
    side: f64,
}

fn separators<'a>(entrance: &LineSegment, lines: &'a [LineSegment], angle: f64, p: &SlotParams) -> Vec<Separator<'a>> {
    let tol = p.angle_tol_deg.to_radians();
    let d = entrance.direction();
    let len = entrance.length();
    let min_len = p.min_separator_m / p.frame.meters_per_px;
    let mut out = Vec::new();
    for s in lines {
        if (angle_between(entrance, s) - angle).abs() > tol {
            continue;
        }
        let Some(x) = intersect(entrance, s) else { continue };
        let along = (x.0 - entrance.p0.0) * d.0 + (x.1 - entrance.p0.1) * d.1;
        if along < -p.join_tol || along > len + p.join_tol {
            continue;
        }
        let (near, far) = if dist(s.p0, x) <= dist(s.p1, x) { (s.p0, s.p1) } else { (s.p1, s.p0) };
        if dist(near, x) > p.join_tol || dist(far, x) < min_len {
            continue;
        }
        out.push(Separator { line: s, foot: x, far, along, side: cross(d, sub(far, x)).signum() });
    }
    out.sort_by(|a, b| a.along.total_cmp(&b.along));
    out
}

/// Back edge where a line parallel to the entrance crosses both separators
/// near their far ends.
fn back_corners(entrance: &LineSegment, a: &Separator, b: &Separator, lines: &[LineSegment], p: &SlotParams) -> Option<(P, P)> {
    let tol = p.angle_tol_deg.to_radians();
    let mut best: Option<(f64, P, P)> = None;
    for l in lines {
        if std::ptr::eq(l, entrance) || angle_between(l, entrance) > tol {
            continue;
        }
        let (Some(ya), Some(yb)) = (intersect(a.line, l), intersect(b.line, l)) else { continue };
        let err = dist(ya, a.far).max(dist(yb, b.far));
        if err > 2.0 * p.join_tol {
            continue;
        }
        let on_line = |y: P| {
            let t = (y.0 - l.p0.0) * l.direction().0 + (y.1 - l.p0.1) * l.direction().1;
            t >= -p.join_tol && t <= l.length() + p.join_tol
        };
        if on_line(ya) && on_line(yb) && best.is_none_or(|bst| err < bst.0) {
            best = Some((err, ya, yb));
        }
    }
    best.map(|(_, ya, yb)| (ya, yb))
}

fn matches(a: &[P; 4], b: &[P; 4], tol: f64) -> bool {
    a.iter().all(|p| b.iter().any(|q| dist(*p, *q) <= tol))
}

/// Pairs adjacent separators meeting an entrance line at 90° or a
/// configured oblique angle, one slot per pair whose spacing is a valid
/// entrance width.
pub fn build_slots(lines: &[LineSegment], params: &SlotParams) -> Vec<ParkingSlot> {
    let mut order: Vec<&LineSegment> = lines.iter().collect();
    order.sort_by(|a, b| b.length().total_cmp(&a.length()));
    let mut angles = vec![std::f64::consts::FRAC_PI_2];
    for &a in &params.oblique_deg {
        let u = a.min(180.0 - a).to_radians();
        if !angles.iter().any(|x: &f64| (x - u).abs() < 1e-9) {
            angles.push(u);
        }
    }
    let mpp = params.frame.meters_per_px;
    let mut slots: Vec<ParkingSlot> = Vec::new();
    for entrance in order {
        for &angle in &angles {
            let seps = separators(entrance, lines, angle, params);
            for side in [-1.0, 1.0] {
                let row: Vec<&Separator> = seps.iter().filter(|s| s.side == side).collect();
                for pair in row.windows(2) {
                    let (a, b) = (pair[0], pair[1]);
                    if angle_between(a.line, b.line) > 2.0 * params.angle_tol_deg.to_radians() {
                        continue;
                    }
                    let width = (b.along - a.along) * angle.sin() * mpp;
                    if !(params.min_width_m..=params.max_width_m).contains(&width) {
                        continue;
                    }
                    let (c, d) = match back_corners(entrance, a, b, lines, params) {
                        Some((ya, yb)) => (yb, ya),
                        None => {
                            // A paired separator broken or cut short takes the length of its partner.
                            let reach = |s: &Separator, len: f64| {
                                let l = dist(s.foot, s.far);
                                (s.foot.0 + (s.far.0 - s.foot.0) * len / l, s.foot.1 + (s.far.1 - s.foot.1) * len / l)
                            };
                            let len = dist(a.foot, a.far).max(dist(b.foot, b.far));
                            (reach(b, len), reach(a, len))
                        }
                    };
                    let corners_px = [a.foot, b.foot, c, d];
                    if !is_valid_quad(&corners_px) || slots.iter().any(|s| matches(&s.corners_px, &corners_px, params.join_tol)) {
                        continue;
                    }
                    let sd = a.line.direction();
                    let orientation = if (angle - std::f64::consts::FRAC_PI_2).abs() > 1e-9 {
                        SlotOrientation::Diagonal
                    } else if sd.1.abs() >= sd.0.abs() {
                        SlotOrientation::Vertical
                    } else {
                        SlotOrientation::Horizontal
                    };
                    let corners_m = corners_px.map(|q| params.frame.pixel_to_world(q.0, q.1));
                    slots.push(ParkingSlot { corners_px, corners_m, entrance_idx: 0, orientation });
                }
            }
        }
    }
    slots
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SlotParams {
        SlotParams::for_frame(PsvFrame::with_size(256))
    }

    fn seg(a: P, b: P) -> LineSegment {
        LineSegment::from_endpoints(a, b)
    }

    #[test]
    fn no_perpendicular_pairs_no_slots() {
        let lines = [seg((10.0, 10.0), (200.0, 10.0)), seg((10.0, 50.0), (200.0, 52.0))];
        assert!(build_slots(&lines, &params()).is_empty());
    }

    #[test]
    fn three_separators_two_slots() {
        let px = 2.5 / params().frame.meters_per_px;
        let mut lines = vec![seg((20.0, 30.0), (20.0 + 2.0 * px, 30.0))];
        for i in 0..3 {
            let x = 20.0 + i as f64 * px;
            lines.push(seg((x, 30.0), (x, 30.0 + 2.0 * px)));
        }
        let slots = build_slots(&lines, &params());
        assert_eq!(slots.len(), 2);
        assert!(slots.iter().all(|s| s.orientation == SlotOrientation::Vertical));
    }

    #[test]
    fn invalid_quads() {
        assert!(!is_valid_quad(&[(0.0, 0.0), (10.0, 10.0), (10.0, 0.0), (0.0, 10.0)]));
        assert!(!is_valid_quad(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 30.0)]));
        assert!(is_valid_quad(&[(0.0, 0.0), (10.0, 0.0), (10.0, 20.0), (0.0, 20.0)]));
    }
}
