//! Geometric read-out of a segmentation: per-category skeletons, Hough
//! lines, merged line sets, and the parking slots and lanes built from
//! them.

mod hough;
mod lanes;
mod lines;
mod skeleton;
mod slots;

pub use hough::{hough_lines, Accumulator, HoughParams};
pub use lanes::{build_lanes, Lane, LaneParams};
pub use lines::{angle_between, merge_lines, MergeParams};
pub use skeleton::{binarize, skeletonize, BinaryImage, SkeletonImage};
pub use slots::{build_slots, is_valid_quad, ParkingSlot, SlotParams};

use std::fmt::Write;

use image::{Rgb, RgbImage};

use crate::geometry::PsvFrame;
use crate::kv::{KvDoc, KvError};
use crate::label::{Category, LabelMask};

pub(crate) type P = (f64, f64);

/// Straight segment in continuous pixel coordinates, where pixel `(x, y)`
/// covers `[x, x+1) × [y, y+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSegment {
    pub p0: P,
    pub p1: P,
    /// Normal form `x cos θ + y sin θ = ρ` with `θ ∈ [0, π)`.
    pub rho: f64,
    pub theta: f64,
    /// Count of the accumulator cell that produced the line.
    pub votes: u32,
    /// Pixels backing this segment.
    pub support: usize,
    /// `(ρ, θ)` of that accumulator cell.
    pub peak: (f64, f64),
    pub category: Option<Category>,
}

impl LineSegment {
    pub fn from_endpoints(p0: P, p1: P) -> Self {
        let len = (p1.0 - p0.0).hypot(p1.1 - p0.1);
        let d = if len > 0.0 { ((p1.0 - p0.0) / len, (p1.1 - p0.1) / len) } else { (1.0, 0.0) };
        let mut n = (-d.1, d.0);
        let mut theta = n.1.atan2(n.0);
        if theta < 0.0 {
            theta += std::f64::consts::PI;
            n = (-n.0, -n.1);
        }
        if theta >= std::f64::consts::PI {
            theta -= std::f64::consts::PI;
            n = (-n.0, -n.1);
        }
        let rho = n.0 * p0.0 + n.1 * p0.1;
        Self { p0, p1, rho, theta, votes: 0, support: 0, peak: (rho, theta), category: None }
    }

    /// Least-squares segment spanning `pts`.
    pub(crate) fn fit(pts: &[P], votes: u32, peak: (f64, f64)) -> Self {
        let (c, d) = hough::fit_line(pts);
        let ts = pts.iter().map(|p| (p.0 - c.0) * d.0 + (p.1 - c.1) * d.1);
        let (lo, hi) = ts.fold((f64::INFINITY, f64::NEG_INFINITY), |a, t| (a.0.min(t), a.1.max(t)));
        let mut s = Self::from_endpoints((c.0 + lo * d.0, c.1 + lo * d.1), (c.0 + hi * d.0, c.1 + hi * d.1));
        s.votes = votes;
        s.support = pts.len();
        s.peak = peak;
        s
    }

    pub fn length(&self) -> f64 {
        (self.p1.0 - self.p0.0).hypot(self.p1.1 - self.p0.1)
    }

    pub fn direction(&self) -> P {
        let l = self.length();
        if l == 0.0 {
            return (1.0, 0.0);
        }
        ((self.p1.0 - self.p0.0) / l, (self.p1.1 - self.p0.1) / l)
    }

    pub fn midpoint(&self) -> P {
        ((self.p0.0 + self.p1.0) / 2.0, (self.p0.1 + self.p1.1) / 2.0)
    }

    /// Distance from `p` to the infinite line.
    pub fn distance_to_line(&self, p: P) -> f64 {
        (p.0 * self.theta.cos() + p.1 * self.theta.sin() - self.rho).abs()
    }
}

/// All thresholds of the read-out, in pixels of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractParams {
    pub hough: HoughParams,
    pub merge: MergeParams,
    pub slots: SlotParams,
    pub lanes: LaneParams,
}

impl ExtractParams {
    /// Defaults scaled to the frame; the vote threshold is 0.4 of a
    /// 2.5 m line.
    pub fn for_frame(frame: PsvFrame) -> Self {
        let px = |m: f64| m / frame.meters_per_px;
        Self {
            hough: HoughParams {
                rho_res: 1.0,
                theta_res_deg: 1.0,
                vote_threshold: (0.4 * px(2.5)).round() as u32,
                max_gap: px(0.3),
                support_tol: 1.5,
                min_length: px(0.5),
            },
            merge: MergeParams { angle_tol_deg: 3.0, dist_tol: px(0.12).max(2.0), gap_tol: px(0.6) },
            slots: SlotParams::for_frame(frame),
            lanes: LaneParams::for_frame(frame),
        }
    }

    /// Overrides from `extract.*` keys; absent keys keep their values.
    pub fn apply_kv(&mut self, doc: &KvDoc) -> Result<(), KvError> {
        macro_rules! take {
            ($($key:literal => $field:expr),* $(,)?) => {$(
                if let Some(v) = doc.parse_value($key)? {
                    $field = v;
                }
            )*};
        }
        take! {
            "extract.hough.rho_res" => self.hough.rho_res,
            "extract.hough.theta_res_deg" => self.hough.theta_res_deg,
            "extract.hough.vote_threshold" => self.hough.vote_threshold,
            "extract.hough.max_gap" => self.hough.max_gap,
            "extract.hough.support_tol" => self.hough.support_tol,
            "extract.hough.min_length" => self.hough.min_length,
            "extract.merge.angle_tol_deg" => self.merge.angle_tol_deg,
            "extract.merge.dist_tol" => self.merge.dist_tol,
            "extract.merge.gap_tol" => self.merge.gap_tol,
            "extract.slots.min_width_m" => self.slots.min_width_m,
            "extract.slots.max_width_m" => self.slots.max_width_m,
            "extract.slots.angle_tol_deg" => self.slots.angle_tol_deg,
            "extract.slots.join_tol" => self.slots.join_tol,
            "extract.slots.min_separator_m" => self.slots.min_separator_m,
            "extract.lanes.angle_tol_deg" => self.lanes.angle_tol_deg,
            "extract.lanes.dist_tol" => self.lanes.dist_tol,
            "extract.lanes.gap_tol" => self.lanes.gap_tol,
            "extract.lanes.min_length" => self.lanes.min_length,
        }
        if doc.get("extract.slots.oblique_deg").is_some() {
            self.slots.oblique_deg = doc.numbers("extract.slots.oblique_deg")?;
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvDoc {
        let (h, m, s, l) = (&self.hough, &self.merge, &self.slots, &self.lanes);
        let mut doc = KvDoc::default();
        doc.set("extract.hough.rho_res", h.rho_res);
        doc.set("extract.hough.theta_res_deg", h.theta_res_deg);
        doc.set("extract.hough.vote_threshold", h.vote_threshold);
        doc.set("extract.hough.max_gap", h.max_gap);
        doc.set("extract.hough.support_tol", h.support_tol);
        doc.set("extract.hough.min_length", h.min_length);
        doc.set("extract.merge.angle_tol_deg", m.angle_tol_deg);
        doc.set("extract.merge.dist_tol", m.dist_tol);
        doc.set("extract.merge.gap_tol", m.gap_tol);
        doc.set("extract.slots.min_width_m", s.min_width_m);
        doc.set("extract.slots.max_width_m", s.max_width_m);
        doc.set("extract.slots.angle_tol_deg", s.angle_tol_deg);
        doc.set("extract.slots.oblique_deg", s.oblique_deg.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        doc.set("extract.slots.join_tol", s.join_tol);
        doc.set("extract.slots.min_separator_m", s.min_separator_m);
        doc.set("extract.lanes.angle_tol_deg", l.angle_tol_deg);
        doc.set("extract.lanes.dist_tol", l.dist_tol);
        doc.set("extract.lanes.gap_tol", l.gap_tol);
        doc.set("extract.lanes.min_length", l.min_length);
        doc
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub slots: Vec<ParkingSlot>,
    pub lanes: Vec<Lane>,
}

/// Skeleton, Hough lines and merged lines of one category.
pub fn extract_lines(mask: &LabelMask, category: Category, params: &ExtractParams) -> Vec<LineSegment> {
    let skel = skeletonize(&binarize(mask, category));
    let mut lines = merge_lines(&hough_lines(&skel, &params.hough), &params.merge);
    for l in &mut lines {
        l.category = Some(category);
    }
    lines
}

pub fn extract(mask: &LabelMask, params: &ExtractParams) -> Extraction {
    let slots = build_slots(&extract_lines(mask, Category::Parking, params), &params.slots);
    let lanes = Category::LANES
        .iter()
        .flat_map(|&c| build_lanes(&extract_lines(mask, c, params), c, &params.lanes))
        .collect();
    Extraction { slots, lanes }
}

impl Extraction {
    /// `SLOT x1 y1 … x4 y4 entrance_idx orientation` and
    /// `LANE category n x1 y1 … xn yn`, vehicle-frame meters.
    pub fn to_records(&self) -> String {
        let mut s = String::new();
        for slot in &self.slots {
            s.push_str("SLOT");
            for (x, y) in slot.corners_m {
                let _ = write!(s, " {x:.3} {y:.3}");
            }
            let _ = writeln!(s, " {} {}", slot.entrance_idx, slot.orientation.name());
        }
        for lane in &self.lanes {
            let _ = write!(s, "LANE {} {}", lane.category.name(), lane.points_m.len());
            for (x, y) in &lane.points_m {
                let _ = write!(s, " {x:.3} {y:.3}");
            }
            s.push('\n');
        }
        s
    }
}

fn draw_line(img: &mut RgbImage, a: P, b: P, color: Rgb<u8>) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = a.0 + t * (b.0 - a.0);
        let y = a.1 + t * (b.1 - a.1);
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Slot outlines (entrance in red, other edges green) and lanes (blue)
/// drawn over `base`.
pub fn render_overlay(base: &RgbImage, ex: &Extraction) -> RgbImage {
    let mut img = base.clone();
    for slot in &ex.slots {
        for i in 0..4 {
            let color = if i == slot.entrance_idx { Rgb([255, 0, 0]) } else { Rgb([0, 255, 0]) };
            draw_line(&mut img, slot.corners_px[i], slot.corners_px[(i + 1) % 4], color);
        }
    }
    for lane in &ex.lanes {
        for w in lane.points_px.windows(2) {
            draw_line(&mut img, w[0], w[1], Rgb([0, 128, 255]));
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_round_trip_through_kv() {
        let d = ExtractParams::for_frame(PsvFrame::with_size(256));
        let mut p = d.clone();
        p.apply_kv(&d.to_kv()).unwrap();
        assert_eq!(p, d);
        let doc = KvDoc::parse("extract.hough.vote_threshold = 7\nextract.slots.oblique_deg = 60, 120").unwrap();
        p.apply_kv(&doc).unwrap();
        assert_eq!((p.hough.vote_threshold, p.slots.oblique_deg.clone()), (7, vec![60.0, 120.0]));
        assert!(p.apply_kv(&KvDoc::parse("extract.merge.gap_tol = wide").unwrap()).is_err());
    }

    #[test]
    fn normal_form_range() {
        for (a, b) in [((0.0, 0.0), (10.0, 0.0)), ((0.0, 0.0), (0.0, 10.0)), ((5.0, 5.0), (0.0, 10.0)), ((3.0, 0.0), (0.0, -4.0))] {
            let s = LineSegment::from_endpoints(a, b);
            assert!((0.0..std::f64::consts::PI).contains(&s.theta));
            assert!(s.distance_to_line(a) < 1e-9 && s.distance_to_line(b) < 1e-9);
        }
    }

    #[test]
    fn records_format() {
        let frame = PsvFrame::with_size(100);
        let lane = Lane { points_px: vec![(0.0, 50.0), (100.0, 50.0)], points_m: vec![(0.0, 5.0), (0.0, -5.0)], category: Category::YellowSolid };
        let ex = Extraction { slots: vec![], lanes: vec![lane] };
        assert_eq!(ex.to_records(), "LANE yellow-solid 2 0.000 5.000 0.000 -5.000\n");
        let _ = frame;
    }
}
