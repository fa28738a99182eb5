use image::{Rgb, RgbImage};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::label::{Category, LabelMask};

use super::{DatasetError, Sample};

/// Side length of the square ground patch every canvas covers, meters.
pub const FIELD_OF_VIEW_M: f64 = 10.0;

const SUPERSAMPLE: usize = 4;
const MIN_LINE_PX: f64 = 2.0;

type P = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotOrientation {
    /// Separators run vertically in the image.
    Vertical,
    /// Separators run horizontally in the image.
    Horizontal,
    /// Separators meet the entrance at an oblique angle.
    Diagonal,
}

impl SlotOrientation {
    pub fn name(self) -> &'static str {
        match self {
            SlotOrientation::Vertical => "vertical",
            SlotOrientation::Horizontal => "horizontal",
            SlotOrientation::Diagonal => "diagonal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaintColor {
    White,
    Yellow,
}

impl PaintColor {
    fn rgb(self) -> [f64; 3] {
        match self {
            PaintColor::White => [235.0, 235.0, 228.0],
            PaintColor::Yellow => [226.0, 184.0, 48.0],
        }
    }
}

/// A row of adjacent slots sharing one entrance line. Canvas coordinates
/// are meters, x right and y down from the top-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRow {
    pub orientation: SlotOrientation,
    pub color: PaintColor,
    /// Closed slots also paint the back line.
    pub closed: bool,
    pub count: usize,
    /// Perpendicular distance between adjacent separator centerlines.
    pub width_m: f64,
    /// Perpendicular distance from the entrance to the back edge.
    pub depth_m: f64,
    /// Angle from the entrance direction to the separators.
    pub separator_angle_deg: f64,
    /// Entrance start point.
    pub origin_m: P,
    /// Direction of the entrance line; separators extend to its right-hand
    /// side in image coordinates.
    pub direction_deg: f64,
    pub line_width_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DashPattern {
    pub dash_m: f64,
    pub gap_m: f64,
    pub phase_m: f64,
}

/// A straight lane marking crossing the whole canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneSpec {
    pub category: Category,
    pub point_m: P,
    pub angle_deg: f64,
    pub width_m: f64,
    /// Required exactly for the dashed categories.
    pub dash: Option<DashPattern>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureWave {
    pub kx: f64,
    pub ky: f64,
    pub phase: f64,
    pub amplitude: f64,
}

/// Darkens the half-plane to the right of the line through `point_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shadow {
    pub point_m: P,
    pub angle_deg: f64,
    pub factor: f64,
    pub softness_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Illumination {
    pub brightness: f64,
    pub ground_level: f64,
    pub texture: Vec<TextureWave>,
    pub shadow: Option<Shadow>,
    /// Paint opacity in `(0, 1]`.
    pub paint_alpha: f64,
}

impl Default for Illumination {
    fn default() -> Self {
        Self { brightness: 1.0, ground_level: 90.0, texture: Vec::new(), shadow: None, paint_alpha: 1.0 }
    }
}

/// Full description of one synthetic scene; painting and labels are both
/// derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub size: usize,
    pub slots: Option<SlotRow>,
    pub lanes: Vec<LaneSpec>,
    pub illumination: Illumination,
    /// Standard deviation of additive pixel noise, intensity levels.
    pub noise: f64,
}

fn dir(deg: f64) -> P {
    let r = deg.to_radians();
    (r.cos(), r.sin())
}

fn add(a: P, b: P) -> P {
    (a.0 + b.0, a.1 + b.1)
}

fn mul(a: P, k: f64) -> P {
    (a.0 * k, a.1 * k)
}

fn cross(a: P, b: P) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

#[derive(Debug, Clone, Copy)]
struct Quad([P; 4]);

impl Quad {
    /// Rectangle of `width` around the segment `a→b`, lengthened by `ext`
    /// at both ends.
    fn stroke(a: P, b: P, width: f64, ext: f64) -> Quad {
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let d = ((b.0 - a.0) / len, (b.1 - a.1) / len);
        let n = (-d.1 * width / 2.0, d.0 * width / 2.0);
        let a = add(a, mul(d, -ext));
        let b = add(b, mul(d, ext));
        Quad([add(a, n), add(b, n), add(b, mul(n, -1.0)), add(a, mul(n, -1.0))])
    }

    fn scaled(&self, k: f64) -> Quad {
        Quad(self.0.map(|p| mul(p, k)))
    }

    fn contains(&self, p: P) -> bool {
        let mut sign = 0.0f64;
        for i in 0..4 {
            let a = self.0[i];
            let b = self.0[(i + 1) % 4];
            let c = cross((b.0 - a.0, b.1 - a.1), (p.0 - a.0, p.1 - a.1));
            if c == 0.0 {
                continue;
            }
            if sign == 0.0 {
                sign = c.signum();
            } else if c.signum() != sign {
                return false;
            }
        }
        true
    }

    fn bbox(&self, size: usize) -> Option<(usize, usize, usize, usize)> {
        let xs = self.0.map(|p| p.0);
        let ys = self.0.map(|p| p.1);
        let fold = |v: [f64; 4], f: fn(f64, f64) -> f64, init: f64| v.into_iter().fold(init, f);
        let x0 = fold(xs, f64::min, f64::INFINITY).floor().max(0.0);
        let x1 = fold(xs, f64::max, f64::NEG_INFINITY).ceil().min(size as f64);
        let y0 = fold(ys, f64::min, f64::INFINITY).floor().max(0.0);
        let y1 = fold(ys, f64::max, f64::NEG_INFINITY).ceil().min(size as f64);
        (x0 < x1 && y0 < y1).then_some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }
}

/// Paint and label primitives in meters.
struct Layout {
    paint: Vec<(Quad, PaintColor)>,
    label: Vec<(Quad, Category)>,
}

impl SlotRow {
    fn spacing(&self) -> f64 {
        self.width_m / self.separator_angle_deg.to_radians().sin()
    }

    fn separator_dir(&self) -> P {
        dir(self.direction_deg + self.separator_angle_deg)
    }

    fn separator_len(&self) -> f64 {
        self.depth_m / self.separator_angle_deg.to_radians().sin()
    }

    /// Centerline corners per slot in meters: two entrance corners, then
    /// the far back corners, traversed as a simple polygon.
    pub fn corners_m(&self) -> Vec<[P; 4]> {
        let e = dir(self.direction_deg);
        let s = mul(self.separator_dir(), self.separator_len());
        let step = self.spacing();
        (0..self.count)
            .map(|i| {
                let a = add(self.origin_m, mul(e, step * i as f64));
                let b = add(self.origin_m, mul(e, step * (i + 1) as f64));
                [a, b, add(b, s), add(a, s)]
            })
            .collect()
    }

    /// Corners in pixel coordinates of a `size` canvas.
    pub fn corners_px(&self, size: usize) -> Vec<[P; 4]> {
        let k = size as f64 / FIELD_OF_VIEW_M;
        self.corners_m().into_iter().map(|q| q.map(|p| mul(p, k))).collect()
    }

    fn strokes(&self, width: f64) -> Vec<Quad> {
        let e = dir(self.direction_deg);
        let s = mul(self.separator_dir(), self.separator_len());
        let run = self.spacing() * self.count as f64;
        let entrance_end = add(self.origin_m, mul(e, run));
        let mut out = vec![Quad::stroke(self.origin_m, entrance_end, width, width / 2.0)];
        for i in 0..=self.count {
            let a = add(self.origin_m, mul(e, self.spacing() * i as f64));
            out.push(Quad::stroke(a, add(a, s), width, 0.0));
        }
        if self.closed {
            out.push(Quad::stroke(add(self.origin_m, s), add(entrance_end, s), width, width / 2.0));
        }
        out
    }

    /// Direction the row was drawn toward from its entrance.
    fn inward(&self) -> P {
        let e = dir(self.direction_deg);
        (-e.1, e.0)
    }
}

impl LaneSpec {
    /// Endpoints where the lane axis crosses the canvas border, meters.
    pub fn chord_m(&self) -> Option<(P, P)> {
        clip_line(self.point_m, dir(self.angle_deg), FIELD_OF_VIEW_M)
    }

    pub fn chord_px(&self, size: usize) -> Option<(P, P)> {
        let k = size as f64 / FIELD_OF_VIEW_M;
        self.chord_m().map(|(a, b)| (mul(a, k), mul(b, k)))
    }

    fn color(&self) -> PaintColor {
        match self.category {
            Category::YellowSolid | Category::YellowDashed => PaintColor::Yellow,
            _ => PaintColor::White,
        }
    }
}

/// Parametric clip of the infinite line `p + t·d` to `[0, side]²`.
fn clip_line(p: P, d: P, side: f64) -> Option<(P, P)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (pc, dc) in [(p.0, d.0), (p.1, d.1)] {
        if dc.abs() < 1e-12 {
            if !(0.0..=side).contains(&pc) {
                return None;
            }
            continue;
        }
        let t0 = (0.0 - pc) / dc;
        let t1 = (side - pc) / dc;
        lo = lo.max(t0.min(t1));
        hi = hi.min(t0.max(t1));
    }
    (hi > lo).then(|| (add(p, mul(d, lo)), add(p, mul(d, hi))))
}

impl SceneSpec {
    pub fn meters_per_px(&self) -> f64 {
        FIELD_OF_VIEW_M / self.size as f64
    }

    fn stroke_width(&self, w: f64) -> f64 {
        w.max(MIN_LINE_PX * self.meters_per_px())
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::Scene(m));
        if self.size < 16 {
            return bad(format!("canvas of {} px is too small", self.size));
        }
        let inside = |p: P| (0.0..=FIELD_OF_VIEW_M).contains(&p.0) && (0.0..=FIELD_OF_VIEW_M).contains(&p.1);
        if let Some(row) = &self.slots {
            if row.count == 0 || !(row.width_m > 0.0 && row.depth_m > 0.0) {
                return bad("slot row needs positive count, width and depth".into());
            }
            let a = row.separator_angle_deg;
            if !(10.0..=170.0).contains(&a) {
                return bad(format!("separator angle {a} is degenerate"));
            }
            let sep = row.separator_dir();
            let oblique = (a - 90.0).abs() > 1e-9;
            let expected = if oblique {
                SlotOrientation::Diagonal
            } else if sep.1.abs() >= sep.0.abs() {
                SlotOrientation::Vertical
            } else {
                SlotOrientation::Horizontal
            };
            if row.orientation != expected {
                return bad(format!("slot row is {} but its separators make it {}", row.orientation.name(), expected.name()));
            }
            if row.line_width_m + 1e-12 < MIN_LINE_PX * self.meters_per_px() {
                return bad(format!("slot lines of {} m are under {MIN_LINE_PX} px", row.line_width_m));
            }
            let w = self.stroke_width(row.line_width_m);
            for q in row.strokes(w) {
                if let Some(p) = q.0.iter().find(|p| !inside(**p)) {
                    return bad(format!("slot geometry leaves the canvas at ({:.3}, {:.3}) m", p.0, p.1));
                }
            }
        }
        for lane in &self.lanes {
            if !Category::LANES.contains(&lane.category) {
                return bad(format!("{} is not a lane category", lane.category.name()));
            }
            if lane.category.is_dashed() != lane.dash.is_some() {
                return bad(format!("{} lane needs a dash pattern exactly when dashed", lane.category.name()));
            }
            if let Some(d) = lane.dash {
                if !(d.dash_m > 0.0 && d.gap_m > 0.0) {
                    return bad("dash and gap lengths must be positive".into());
                }
            }
            if !inside(lane.point_m) || lane.chord_m().is_none() {
                return bad(format!("lane through ({:.3}, {:.3}) m misses the canvas", lane.point_m.0, lane.point_m.1));
            }
            if lane.width_m + 1e-12 < MIN_LINE_PX * self.meters_per_px() {
                return bad(format!("lane width {} m is under {MIN_LINE_PX} px", lane.width_m));
            }
        }
        let il = &self.illumination;
        if !(il.brightness > 0.0 && il.paint_alpha > 0.0 && il.paint_alpha <= 1.0 && self.noise >= 0.0) {
            return bad("illumination parameters out of range".into());
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let mut paint = Vec::new();
        let mut label = Vec::new();
        if let Some(row) = &self.slots {
            for q in row.strokes(self.stroke_width(row.line_width_m)) {
                paint.push((q, row.color));
                label.push((q, Category::Parking));
            }
        }
        for lane in &self.lanes {
            let Some((a, b)) = lane.chord_m() else { continue };
            let w = self.stroke_width(lane.width_m);
            let strip = Quad::stroke(a, b, w, w);
            label.push((strip, lane.category));
            match lane.dash {
                None => paint.push((strip, lane.color())),
                Some(d) => {
                    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
                    let u = mul((b.0 - a.0, b.1 - a.1), 1.0 / len);
                    let period = d.dash_m + d.gap_m;
                    let mut t = -(d.phase_m.rem_euclid(period));
                    while t < len {
                        let t0 = t.max(0.0);
                        let t1 = (t + d.dash_m).min(len);
                        if t1 > t0 {
                            paint.push((Quad::stroke(add(a, mul(u, t0)), add(a, mul(u, t1)), w, 0.0), lane.color()));
                        }
                        t += period;
                    }
                }
            }
        }
        Layout { paint, label }
    }

    /// Draws a scene with one slot row and up to two lanes on the other side
    /// of its entrance.
    pub fn random<R: Rng + ?Sized>(size: usize, rng: &mut R) -> SceneSpec {
        let mpp = FIELD_OF_VIEW_M / size as f64;
        loop {
            let spec = Self::draw(size, mpp, rng);
            if spec.validate().is_ok() {
                return spec;
            }
        }
    }

    fn draw<R: Rng + ?Sized>(size: usize, mpp: f64, rng: &mut R) -> SceneSpec {
        let line_w = |rng: &mut R| rng.random_range(0.10..0.15f64).max(MIN_LINE_PX * mpp);
        let orientation = match rng.random_range(0..3) {
            0 => SlotOrientation::Vertical,
            1 => SlotOrientation::Horizontal,
            _ => SlotOrientation::Diagonal,
        };
        let quarter = rng.random_range(0..4) as f64 * 90.0;
        let (sep_angle, base_dir, count) = match orientation {
            SlotOrientation::Vertical => (90.0, if rng.random_bool(0.5) { 0.0 } else { 180.0 }, rng.random_range(2..=3)),
            SlotOrientation::Horizontal => (90.0, if rng.random_bool(0.5) { 90.0 } else { 270.0 }, rng.random_range(2..=3)),
            SlotOrientation::Diagonal => (if rng.random_bool(0.5) { 45.0 } else { 135.0 }, quarter, 1),
        };
        let mut row = SlotRow {
            orientation,
            color: if rng.random_bool(0.7) { PaintColor::White } else { PaintColor::Yellow },
            closed: rng.random_bool(0.5),
            count,
            width_m: rng.random_range(2.2..3.0),
            depth_m: rng.random_range(4.5..5.5),
            separator_angle_deg: sep_angle,
            origin_m: (0.0, 0.0),
            direction_deg: base_dir + rng.random_range(-4.0..4.0),
            line_width_m: line_w(rng),
        };
        // Push the row against the canvas border it faces.
        let margin = 0.3;
        let pts: Vec<P> = row.corners_m().into_iter().flatten().collect();
        let (min_x, max_x) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
        let (min_y, max_y) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
        let lo = (margin - min_x, margin - min_y);
        let hi = (FIELD_OF_VIEW_M - margin - max_x, FIELD_OF_VIEW_M - margin - max_y);
        let n = row.inward();
        let pick = |l: f64, h: f64, nc: f64, rng: &mut R| {
            if h < l {
                l
            } else if nc > 0.5 {
                h
            } else if nc < -0.5 {
                l
            } else {
                rng.random_range(l..=h)
            }
        };
        row.origin_m = (pick(lo.0, hi.0, n.0, rng), pick(lo.1, hi.1, n.1, rng));

        // Lanes run along the entrance on the open side.
        let e = dir(row.direction_deg);
        let mid = add(row.origin_m, mul(e, row.spacing() * row.count as f64 / 2.0));
        let away = mul(n, -1.0);
        let room = {
            let t = |pc: f64, dc: f64| {
                if dc > 1e-9 {
                    (FIELD_OF_VIEW_M - pc) / dc
                } else if dc < -1e-9 {
                    -pc / dc
                } else {
                    f64::INFINITY
                }
            };
            t(mid.0, away.0).min(t(mid.1, away.1))
        };
        let mut lanes = Vec::new();
        let n_lanes = if rng.random_bool(0.6) { 1 } else { 2 };
        let mut dist = rng.random_range(1.3..2.3);
        for _ in 0..n_lanes {
            if dist > room - 0.5 {
                break;
            }
            let category = Category::LANES[rng.random_range(0..Category::LANES.len())];
            let dash = category.is_dashed().then(|| DashPattern {
                dash_m: rng.random_range(0.8..1.5),
                gap_m: rng.random_range(0.6..1.2),
                phase_m: rng.random_range(0.0..2.0),
            });
            lanes.push(LaneSpec {
                category,
                point_m: add(mid, mul(away, dist)),
                angle_deg: row.direction_deg + rng.random_range(-3.0..3.0),
                width_m: line_w(rng),
                dash,
            });
            dist += rng.random_range(2.4..3.4);
        }

        let texture = (0..3)
            .map(|_| TextureWave {
                kx: rng.random_range(-1.5..1.5),
                ky: rng.random_range(-1.5..1.5),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                amplitude: rng.random_range(2.0..7.0),
            })
            .collect();
        let shadow = rng.random_bool(0.4).then(|| Shadow {
            point_m: (rng.random_range(2.0..8.0), rng.random_range(2.0..8.0)),
            angle_deg: rng.random_range(0.0..360.0),
            factor: rng.random_range(0.45..0.8),
            softness_m: rng.random_range(0.1..0.6),
        });
        SceneSpec {
            size,
            slots: Some(row),
            lanes,
            illumination: Illumination {
                brightness: rng.random_range(0.65..1.25),
                ground_level: rng.random_range(60.0..110.0),
                texture,
                shadow,
                paint_alpha: rng.random_range(0.8..1.0),
            },
            noise: rng.random_range(1.0..6.0),
        }
    }
}

/// Renders the scene and its label from the same primitives. Paint is
/// antialiased by supersampling; labels take the pixel center.
pub fn generate_scene<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Result<Sample, DatasetError> {
    spec.validate()?;
    let size = spec.size;
    let k = 1.0 / spec.meters_per_px();
    let layout = spec.layout();
    let il = &spec.illumination;

    let mut rgb = vec![[0.0f64; 3]; size * size];
    for y in 0..size {
        for x in 0..size {
            let (mx, my) = ((x as f64 + 0.5) / k, (y as f64 + 0.5) / k);
            let tex: f64 = il.texture.iter().map(|t| t.amplitude * (t.kx * mx + t.ky * my + t.phase).sin()).sum();
            let g = il.ground_level + tex;
            rgb[y * size + x] = [g, g, g * 0.98];
        }
    }

    let sub = SUPERSAMPLE as f64;
    for (quad_m, color) in &layout.paint {
        let quad = quad_m.scaled(k);
        let Some((x0, y0, x1, y1)) = quad.bbox(size) else { continue };
        let paint = color.rgb();
        for y in y0..y1 {
            for x in x0..x1 {
                let mut hits = 0usize;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let p = (x as f64 + (sx as f64 + 0.5) / sub, y as f64 + (sy as f64 + 0.5) / sub);
                        hits += usize::from(quad.contains(p));
                    }
                }
                if hits == 0 {
                    continue;
                }
                let a = il.paint_alpha * hits as f64 / (sub * sub);
                let px = &mut rgb[y * size + x];
                for c in 0..3 {
                    px[c] = px[c] * (1.0 - a) + paint[c] * a;
                }
            }
        }
    }

    let mut label = LabelMask::new(size, size);
    for (quad_m, cat) in &layout.label {
        let quad = quad_m.scaled(k);
        let Some((x0, y0, x1, y1)) = quad.bbox(size) else { continue };
        for y in y0..y1 {
            for x in x0..x1 {
                if quad.contains((x as f64 + 0.5, y as f64 + 0.5)) {
                    label.set(x, y, *cat);
                }
            }
        }
    }

    let noise = Normal::new(0.0, spec.noise.max(1e-12)).expect("finite noise level");
    let mut image = RgbImage::new(size as u32, size as u32);
    for y in 0..size {
        for x in 0..size {
            let mut m = il.brightness;
            if let Some(s) = &il.shadow {
                let d = dir(s.angle_deg);
                let p = ((x as f64 + 0.5) / k - s.point_m.0, (y as f64 + 0.5) / k - s.point_m.1);
                let side = cross(d, p) / s.softness_m.max(1e-6);
                let t = (0.5 + side).clamp(0.0, 1.0);
                m *= 1.0 - (1.0 - s.factor) * t;
            }
            let px = rgb[y * size + x];
            let v: [u8; 3] = std::array::from_fn(|c| {
                let n = if spec.noise > 0.0 { noise.sample(rng) } else { 0.0 };
                (px[c] * m + n).round().clamp(0.0, 255.0) as u8
            });
            image.put_pixel(x as u32, y as u32, Rgb(v));
        }
    }
    Sample::new(image, label)
}
