//! Independent oracles and fixtures shared by the integration tests and
//! the acceptance run.
#![allow(dead_code)]

use std::collections::VecDeque;

use image::{Rgb, RgbImage};
use psv_core::extraction::{Accumulator, BinaryImage};
use psv_core::geometry::{Calibration, CameraCalibration, CameraIntrinsics, Homography, CAPTURE_SIZE, DEFAULT_FEATHER_PX, PSV_SIZE};
use psv_core::label::{Category, LabelMask, NUM_CATEGORIES};
use psv_core::network::{ForwardOutputs, STAGES};
use psv_core::tensor::{Shape, Tensor};
use psv_core::training::ClassWeights;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type P = (f64, f64);

pub fn dist(a: P, b: P) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

// ---- loss ----

/// Skewed so that some categories are rare or absent.
pub fn random_label(w: usize, h: usize, rng: &mut ChaCha8Rng) -> LabelMask {
    let data = (0..w * h)
        .map(|_| {
            let r: f64 = rng.random();
            match r {
                r if r < 0.7 => 0,
                r if r < 0.85 => 1,
                r if r < 0.95 => rng.random_range(2..4),
                _ => rng.random_range(4..NUM_CATEGORIES as u8),
            }
        })
        .collect();
    LabelMask::from_raw(w, h, data).unwrap()
}

pub fn random_outputs(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ForwardOutputs<f64> {
    let s = Shape::new(1, NUM_CATEGORIES, h, w);
    ForwardOutputs {
        final_output: Tensor::randn(s, 1.0, rng),
        pre_outputs: (0..STAGES).map(|_| Tensor::randn(s, 1.0, rng)).collect(),
        encoder_feats: Vec::new(),
    }
}

/// Weighted squared error of one output against the one-hot label, by a
/// direct per-pixel scan.
pub fn loss_term(t: &Tensor<f64>, label: &LabelMask, weights: &ClassWeights) -> f64 {
    let (w, h) = label.dims();
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            let c = label.get(x, y) as usize;
            for k in 0..NUM_CATEGORIES {
                let target = if k == c { 1.0 } else { 0.0 };
                s += weights.get(c) * (t.get(0, k, y, x) - target).powi(2);
            }
        }
    }
    s / (w * h) as f64
}

// ---- metrics ----

/// Per-pixel scan that never builds a matrix.
pub struct MetricsOracle {
    pub cells: [[u64; NUM_CATEGORIES]; NUM_CATEGORIES],
    pub pacc: f64,
    pub macc: f64,
    pub iou: [Option<f64>; NUM_CATEGORIES],
    pub miou: f64,
}

pub fn metrics_oracle(pred: &LabelMask, gt: &LabelMask) -> MetricsOracle {
    let mut cells = [[0u64; NUM_CATEGORIES]; NUM_CATEGORIES];
    let (mut tp, mut in_gt, mut in_pred) = ([0u64; NUM_CATEGORIES], [0u64; NUM_CATEGORIES], [0u64; NUM_CATEGORIES]);
    let mut correct = 0u64;
    let (w, h) = gt.dims();
    for y in 0..h {
        for x in 0..w {
            let (g, p) = (gt.get(x, y) as usize, pred.get(x, y) as usize);
            cells[g][p] += 1;
            in_gt[g] += 1;
            in_pred[p] += 1;
            if g == p {
                tp[g] += 1;
                correct += 1;
            }
        }
    }
    let mut iou = [None; NUM_CATEGORIES];
    let (mut acc_sum, mut iou_sum, mut present) = (0.0, 0.0, 0usize);
    for c in 0..NUM_CATEGORIES {
        let union = in_gt[c] + in_pred[c] - tp[c];
        if union == 0 {
            continue;
        }
        present += 1;
        let v = tp[c] as f64 / union as f64;
        iou[c] = Some(v);
        iou_sum += v;
        acc_sum += if in_gt[c] == 0 { 0.0 } else { tp[c] as f64 / in_gt[c] as f64 };
    }
    MetricsOracle { cells, pacc: correct as f64 / (w * h) as f64, macc: acc_sum / present as f64, iou, miou: iou_sum / present as f64 }
}

pub fn random_pair(rng: &mut ChaCha8Rng) -> (LabelMask, LabelMask) {
    let (w, h) = (rng.random_range(1..48), rng.random_range(1..48));
    // Restricting each mask to a random subset of categories exercises
    // categories that are absent, predicted only, or ground truth only.
    let allowed = |rng: &mut ChaCha8Rng| -> Vec<u8> {
        let v: Vec<u8> = (0..NUM_CATEGORIES as u8).filter(|_| rng.random_bool(0.6)).collect();
        if v.is_empty() {
            vec![0]
        } else {
            v
        }
    };
    let (ag, ap) = (allowed(rng), allowed(rng));
    let gt: Vec<u8> = (0..w * h).map(|_| ag[rng.random_range(0..ag.len())]).collect();
    let pred: Vec<u8> = gt
        .iter()
        .map(|&g| if rng.random_bool(0.5) && ap.contains(&g) { g } else { ap[rng.random_range(0..ap.len())] })
        .collect();
    (LabelMask::from_raw(w, h, pred).unwrap(), LabelMask::from_raw(w, h, gt).unwrap())
}

pub fn random_permutation(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut perm: Vec<u8> = (0..NUM_CATEGORIES as u8).collect();
    for i in (1..perm.len()).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    perm
}

pub fn relabel(m: &LabelMask, perm: &[u8]) -> LabelMask {
    LabelMask::from_raw(m.width(), m.height(), m.as_raw().iter().map(|&v| perm[v as usize]).collect()).unwrap()
}

// ---- extraction ----

/// Largest corner distance under the best cyclic or reversed alignment.
pub fn corner_error(a: &[P; 4], b: &[P; 4]) -> f64 {
    let mut best = f64::INFINITY;
    for shift in 0..4 {
        for rev in [false, true] {
            let e = (0..4)
                .map(|i| {
                    let j = if rev { (shift + 4 - i) % 4 } else { (shift + i) % 4 };
                    dist(a[i], b[j])
                })
                .fold(0.0, f64::max);
            best = best.min(e);
        }
    }
    best
}

/// Paints every pixel whose centre lies within `half` of segment `ab`.
pub fn paint(mask: &mut LabelMask, a: P, b: P, half: f64, c: Category) {
    let (w, h) = mask.dims();
    let d = (b.0 - a.0, b.1 - a.1);
    let l2 = d.0 * d.0 + d.1 * d.1;
    for y in 0..h {
        for x in 0..w {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let t = (((p.0 - a.0) * d.0 + (p.1 - a.1) * d.1) / l2).clamp(0.0, 1.0);
            if dist(p, (a.0 + t * d.0, a.1 + t * d.1)) <= half {
                mask.set(x, y, c);
            }
        }
    }
}

/// 8-connected components by breadth-first search.
pub fn components(img: &BinaryImage) -> usize {
    let w = img.width();
    let mut seen = vec![false; w * img.height()];
    let mut n = 0;
    for (x0, y0) in img.points() {
        if seen[y0 * w + x0] {
            continue;
        }
        n += 1;
        seen[y0 * w + x0] = true;
        let mut queue = VecDeque::from([(x0, y0)]);
        while let Some((x, y)) = queue.pop_front() {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if img.get(nx, ny) && !seen[ny as usize * w + nx as usize] {
                        seen[ny as usize * w + nx as usize] = true;
                        queue.push_back((nx as usize, ny as usize));
                    }
                }
            }
        }
    }
    n
}

pub fn has_full_2x2_block(img: &BinaryImage) -> bool {
    (0..img.height() as isize - 1).any(|y| {
        (0..img.width() as isize - 1).any(|x| img.get(x, y) && img.get(x + 1, y) && img.get(x, y + 1) && img.get(x + 1, y + 1))
    })
}

/// Union of random ellipses on a `size` square.
pub fn random_blobs(size: usize, rng: &mut ChaCha8Rng) -> BinaryImage {
    let s = size as f64;
    let mut data = vec![0u8; size * size];
    for _ in 0..rng.random_range(1..5) {
        let (cx, cy, r) = (rng.random_range(0.12 * s..0.88 * s), rng.random_range(0.12 * s..0.88 * s), rng.random_range(2.0..0.14 * s));
        let (rx, ry): (f64, f64) = (r * rng.random_range(0.4..1.6), r * rng.random_range(0.4..1.6));
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                if dx * dx + dy * dy <= 1.0 {
                    data[y * size + x] = 1;
                }
            }
        }
    }
    BinaryImage::from_raw(size, size, data).unwrap()
}

pub fn random_points(rng: &mut ChaCha8Rng) -> BinaryImage {
    let (w, h) = (rng.random_range(8..=128), rng.random_range(8..=128));
    let mut data = vec![0u8; w * h];
    for _ in 0..rng.random_range(1..60) {
        data[rng.random_range(0..h) * w + rng.random_range(0..w)] = 1;
    }
    BinaryImage::from_raw(w, h, data).unwrap()
}

/// First `(rho_bin, theta_bin)` whose vote differs from a per-bin count
/// of the pixel centres within half a bin of that line, at 1 px × 1°.
pub fn hough_mismatch(img: &BinaryImage) -> Option<(usize, usize)> {
    let acc = Accumulator::from_image(img, 1.0, 1.0);
    let half = (img.width() as f64).hypot(img.height() as f64).ceil();
    if (acc.n_theta, acc.n_rho) != (180, 2 * half as usize + 1) {
        return Some((acc.n_rho, acc.n_theta));
    }
    for t in 0..180 {
        let th = (t as f64).to_radians();
        for r in 0..acc.n_rho {
            let centre = r as f64 - half;
            // Ties at half a bin round up.
            let expect = img
                .points()
                .filter(|&(x, y)| (-0.5..0.5).contains(&((x as f64 + 0.5) * th.cos() + (y as f64 + 0.5) * th.sin() - centre)))
                .count() as u32;
            if acc.at(r, t) != expect {
                return Some((r, t));
            }
        }
    }
    None
}

// ---- geometry ----

pub fn random_homography(rng: &mut ChaCha8Rng) -> Homography {
    let m = [
        rng.random_range(0.8..1.2),
        rng.random_range(-0.2..0.2),
        rng.random_range(-20.0..20.0),
        rng.random_range(-0.2..0.2),
        rng.random_range(0.8..1.2),
        rng.random_range(-20.0..20.0),
        rng.random_range(-1e-3..1e-3),
        rng.random_range(-1e-3..1e-3),
        1.0,
    ];
    Homography::from_matrix(m).unwrap()
}

/// Largest deviation of `h · h⁻¹` from the identity.
pub fn inverse_residual(h: &Homography) -> f64 {
    let id = h.compose(&h.inverse().unwrap()).unwrap().matrix();
    id.iter().enumerate().map(|(j, v)| (v - if j % 4 == 0 { 1.0 } else { 0.0 }).abs()).fold(0.0, f64::max)
}

pub fn lens(distortion: [f64; 4]) -> CameraIntrinsics {
    CameraIntrinsics::new((260.0, 255.0), (321.5, 238.0), distortion).unwrap()
}

pub fn smooth_texture(w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        let (x, y) = (x as f64, y as f64);
        let v = |a: f64, b: f64, c: f64| (128.0 + 60.0 * (x / a).sin() * (y / b).cos() + 30.0 * ((x + y) / c).sin()) as u8;
        Rgb([v(23.0, 31.0, 47.0), v(29.0, 19.0, 53.0), v(37.0, 41.0, 29.0)])
    })
}

/// Smooth ground texture in PSV pixels, seen by each camera with its own
/// exposure gain.
pub fn ground(u: f64, v: f64) -> f64 {
    120.0 + 40.0 * (u / 90.0).sin() * (v / 70.0).cos() + 20.0 * ((u - v) / 150.0).sin()
}

pub const GAINS: [f64; 4] = [1.0, 0.94, 1.08, 0.96];

/// Undistorted-image → PSV homographies that give each camera a band of
/// the canvas wide enough to cover its mask.
pub fn synthetic_rig() -> Calibration {
    let k = lens(CameraIntrinsics::EQUIDISTANT);
    let s = PSV_SIZE as f64;
    let (w, h) = (CAPTURE_SIZE.0 as f64, CAPTURE_SIZE.1 as f64);
    let band = s / 2.0 + 40.0;
    let hs = [
        [s / w, 0.0, 0.0, 0.0, band / h, 0.0, 0.0, 0.0, 1.0],
        [-s / w, 0.0, s, 0.0, -band / h, s, 0.0, 0.0, 1.0],
        [0.0, band / h, 0.0, -s / w, 0.0, s, 0.0, 0.0, 1.0],
        [0.0, -band / h, s, s / w, 0.0, 0.0, 0.0, 0.0, 1.0],
    ];
    Calibration {
        cameras: hs.map(|m| CameraCalibration { intrinsics: k, homography: Homography::from_matrix(m).unwrap() }),
        psv_size: PSV_SIZE,
        feather_px: DEFAULT_FEATHER_PX,
    }
}

/// Raw fisheye captures of [`ground`] through the rig.
pub fn render_raws(cal: &Calibration) -> Vec<RgbImage> {
    cal.cameras
        .iter()
        .zip(GAINS)
        .map(|(cam, gain)| {
            RgbImage::from_fn(CAPTURE_SIZE.0, CAPTURE_SIZE.1, |u, v| {
                let Some(p) = cam.intrinsics.undistorted_pixel(u as f64, v as f64) else { return Rgb([0; 3]) };
                let g = cam.homography.apply(p).unwrap();
                let val = (gain * ground(g.0, g.1)).round().clamp(0.0, 255.0) as u8;
                Rgb([val; 3])
            })
        })
        .collect()
}

/// Largest step between horizontal neighbours that straddle a diagonal
/// seam band, after removing the ground's own variation.
pub fn seam_step(psv: &RgbImage) -> f64 {
    let c = psv.width() as f64 / 2.0;
    let mut worst = 0.0f64;
    for y in 40..psv.height() - 40 {
        for x in 40..psv.width() - 41 {
            let (dx, dy) = (x as f64 + 0.5 - c, y as f64 + 0.5 - c);
            // The vehicle body hides the canvas center, where all four seams meet.
            if (dx.abs() - dy.abs()).abs() > 2.0 * DEFAULT_FEATHER_PX || dx.abs().max(dy.abs()) < 50.0 {
                continue;
            }
            let a = psv.get_pixel(x, y)[0] as f64 - ground(x as f64, y as f64);
            let b = psv.get_pixel(x + 1, y)[0] as f64 - ground(x as f64 + 1.0, y as f64);
            worst = worst.max((a - b).abs());
        }
    }
    worst
}
