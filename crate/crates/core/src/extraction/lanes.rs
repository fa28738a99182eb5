use crate::geometry::PsvFrame;
use crate::label::Category;

use super::lines::angle_between;
use super::{LineSegment, P};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneParams {
    pub frame: PsvFrame,
    pub angle_tol_deg: f64,
    /// Lateral offset allowed between chained pieces, pixels.
    pub dist_tol: f64,
    /// End-to-end gap bridged between pieces, pixels.
    pub gap_tol: f64,
    pub min_length: f64,
}

impl LaneParams {
    pub fn for_frame(frame: PsvFrame) -> Self {
        let px = |m: f64| m / frame.meters_per_px;
        Self { frame, angle_tol_deg: 5.0, dist_tol: px(0.3), gap_tol: px(2.5), min_length: px(1.5) }
    }
}

/// Ordered polyline in pixels and vehicle-frame meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub points_px: Vec<P>,
    pub points_m: Vec<P>,
    pub category: Category,
}

impl Lane {
    pub fn length_px(&self) -> f64 {
        self.points_px.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum()
    }
}

fn dist(a: P, b: P) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Chains near-collinear lines end to end; every chain becomes one lane.
pub fn build_lanes(lines: &[LineSegment], category: Category, params: &LaneParams) -> Vec<Lane> {
    let mut order: Vec<usize> = (0..lines.len()).collect();
    order.sort_by(|&a, &b| lines[b].length().total_cmp(&lines[a].length()));
    let mut used = vec![false; lines.len()];
    let tol = params.angle_tol_deg.to_radians();
    let mut lanes = Vec::new();
    for &seed in &order {
        if used[seed] {
            continue;
        }
        used[seed] = true;
        let base = &lines[seed];
        let d = base.direction();
        let along = |p: P| (p.0 - base.p0.0) * d.0 + (p.1 - base.p0.1) * d.1;
        let mut pieces = vec![seed];
        loop {
            let lo = pieces.iter().map(|&i| along(lines[i].p0).min(along(lines[i].p1))).fold(f64::INFINITY, f64::min);
            let hi = pieces.iter().map(|&i| along(lines[i].p0).max(along(lines[i].p1))).fold(f64::NEG_INFINITY, f64::max);
            let next = order.iter().copied().find(|&j| {
                if used[j] {
                    return false;
                }
                let l = &lines[j];
                if angle_between(l, base) > tol || base.distance_to_line(l.midpoint()) > params.dist_tol {
                    return false;
                }
                let (a, b) = (along(l.p0), along(l.p1));
                let (s, e) = (a.min(b), a.max(b));
                s <= hi + params.gap_tol && e >= lo - params.gap_tol
            });
            match next {
                Some(j) => {
                    used[j] = true;
                    pieces.push(j);
                }
                None => break,
            }
        }
        let mut pts: Vec<P> = pieces.iter().flat_map(|&i| [lines[i].p0, lines[i].p1]).collect();
        pts.sort_by(|a, b| along(*a).total_cmp(&along(*b)));
        pts.dedup_by(|a, b| dist(*a, *b) < 1.0);
        let lane = Lane {
            points_m: pts.iter().map(|p| params.frame.pixel_to_world(p.0, p.1)).collect(),
            points_px: pts,
            category,
        };
        if lane.points_px.len() >= 2 && lane.length_px() >= params.min_length {
            lanes.push(lane);
        }
    }
    lanes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_pieces_chain() {
        let p = LaneParams::for_frame(PsvFrame::with_size(256));
        let lines = [
            LineSegment::from_endpoints((0.0, 100.0), (80.0, 100.0)),
            LineSegment::from_endpoints((120.0, 100.5), (256.0, 101.0)),
        ];
        let lanes = build_lanes(&lines, Category::WhiteDashed, &p);
        assert_eq!(lanes.len(), 1);
        assert_eq!(lanes[0].points_px.len(), 4);
        assert!(lanes[0].points_px.windows(2).all(|w| w[1].0 > w[0].0));
    }

    #[test]
    fn empty_input() {
        let p = LaneParams::for_frame(PsvFrame::with_size(256));
        assert!(build_lanes(&[], Category::WhiteSolid, &p).is_empty());
    }
}
