use image::RgbImage;

use super::{to_rgb8, GeometryError, PsvImage};

pub const DEFAULT_FEATHER_PX: f64 = 20.0;

const PARTITION_TOL: f64 = 1e-6;

/// Per-pixel blending weight of one camera, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StitchMask {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl StitchMask {
    pub fn from_weights(width: usize, height: usize, weights: Vec<f64>) -> Result<Self, GeometryError> {
        if weights.len() != width * height {
            return Err(GeometryError::Mask(format!("{} weights for a {width}x{height} mask", weights.len())));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(GeometryError::Mask(format!("weight {w} outside [0, 1]")));
        }
        Ok(Self { width, height, weights })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.width + x]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Front, rear, left, right masks split along the canvas diagonals with a
/// linear ramp `feather` pixels wide across each seam. Front is the top
/// of the canvas and left its left side.
pub fn default_masks(size: usize, feather: f64) -> [StitchMask; 4] {
    let c = size as f64 / 2.0;
    let mut w: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; size * size]);
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 + 0.5 - c;
            let dy = y as f64 + 0.5 - c;
            let g = if feather > 0.0 {
                (0.5 + (dy.abs() - dx.abs()) / (std::f64::consts::SQRT_2 * feather)).clamp(0.0, 1.0)
            } else if dy.abs() >= dx.abs() {
                1.0
            } else {
                0.0
            };
            let i = y * size + x;
            w[if dy < 0.0 { 0 } else { 1 }][i] = g;
            w[if dx < 0.0 { 2 } else { 3 }][i] = 1.0 - g;
        }
    }
    w.map(|weights| StitchMask { width: size, height: size, weights })
}

/// Every pixel's weights must sum to 0 or to 1.
pub fn validate_masks(masks: &[StitchMask; 4]) -> Result<(), GeometryError> {
    let dims = masks[0].dims();
    if masks.iter().any(|m| m.dims() != dims) {
        return Err(GeometryError::Mask("masks differ in size".into()));
    }
    for i in 0..dims.0 * dims.1 {
        let s: f64 = masks.iter().map(|m| m.weights[i]).sum();
        if s > PARTITION_TOL && (s - 1.0).abs() > PARTITION_TOL {
            let (x, y) = (i % dims.0, i / dims.0);
            return Err(GeometryError::Mask(format!("weights at ({x}, {y}) sum to {s}")));
        }
    }
    Ok(())
}

/// Per-pixel weighted sum of four top-down views.
pub fn stitch(views: [&RgbImage; 4], masks: &[StitchMask; 4]) -> Result<PsvImage, GeometryError> {
    validate_masks(masks)?;
    let (w, h) = masks[0].dims();
    for v in views {
        if v.dimensions() != (w as u32, h as u32) {
            return Err(GeometryError::Dimension { expected: (w as u32, h as u32), got: v.dimensions() });
        }
    }
    let mut out = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (view, mask) in views.iter().zip(masks) {
                let k = mask.get(x, y);
                if k == 0.0 {
                    continue;
                }
                let p = view.get_pixel(x as u32, y as u32).0;
                for c in 0..3 {
                    acc[c] += k * p[c] as f64;
                }
            }
            out.put_pixel(x as u32, y as u32, to_rgb8(acc));
        }
    }
    Ok(out)
}
