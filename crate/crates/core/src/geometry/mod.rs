//! Surround-view image formation: fisheye undistortion, ground-plane
//! homographies, mask stitching, and the metric PSV pixel frame.

mod calib;
mod camera;
mod homography;
mod stitch;

pub use calib::{Calibration, CameraCalibration, CAMERA_NAMES};
pub use camera::{undistort_fisheye, CameraIntrinsics, CAPTURE_SIZE};
pub use homography::{estimate_homography, warp_topdown, warp_topdown_with_coverage, Homography};
pub use stitch::{default_masks, stitch, validate_masks, StitchMask, DEFAULT_FEATHER_PX};

use image::RgbImage;

/// Side length of the full-scale PSV canvas, pixels.
pub const PSV_SIZE: usize = 1000;
/// Ground distance per pixel on the full-scale canvas, meters.
pub const PSV_METERS_PER_PX: f64 = 0.01;

/// A stitched top-down RGB image.
pub type PsvImage = RgbImage;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("image is {got:?}, expected {expected:?}")]
    Dimension { expected: (u32, u32), got: (u32, u32) },
    #[error("invalid camera intrinsics: {0}")]
    Intrinsics(String),
    #[error("degenerate correspondences: {0}")]
    RankDeficient(String),
    #[error("homography is singular (|det| = {0:e})")]
    Singular(f64),
    #[error("invalid stitch masks: {0}")]
    Mask(String),
    #[error("invalid calibration: {0}")]
    Calibration(String),
}

/// Vehicle-centred metric frame: x forward (up in the image), y left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsvFrame {
    pub size: usize,
    pub meters_per_px: f64,
}

impl PsvFrame {
    /// 1000×1000 pixels at 1 cm per pixel.
    pub const fn full() -> Self {
        Self { size: PSV_SIZE, meters_per_px: PSV_METERS_PER_PX }
    }

    /// The same 10 m field of view on a `size`-pixel canvas.
    pub fn with_size(size: usize) -> Self {
        Self { size, meters_per_px: PSV_SIZE as f64 * PSV_METERS_PER_PX / size as f64 }
    }

    pub fn center(&self) -> f64 {
        self.size as f64 / 2.0
    }

    pub fn extent_m(&self) -> f64 {
        self.size as f64 * self.meters_per_px
    }

    /// `(u, v)` = (column, row). Out-of-canvas results are returned as is.
    pub fn world_to_pixel(&self, x_m: f64, y_m: f64) -> (f64, f64) {
        let c = self.center();
        (c - y_m / self.meters_per_px, c - x_m / self.meters_per_px)
    }

    pub fn pixel_to_world(&self, u: f64, v: f64) -> (f64, f64) {
        let c = self.center();
        ((c - v) * self.meters_per_px, (c - u) * self.meters_per_px)
    }
}

/// Bilinear sample at integer-centred coordinates; `None` outside the
/// image.
pub(crate) fn sample_bilinear(img: &RgbImage, x: f64, y: f64) -> Option<[f64; 3]> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    if !(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0) {
        return None;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as u32, y0 as u32);
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let p = |xx, yy| img.get_pixel(xx, yy).0;
    let (a, b, c, d) = (p(x0, y0), p(x1, y0), p(x0, y1), p(x1, y1));
    Some(std::array::from_fn(|i| {
        let top = a[i] as f64 * (1.0 - fx) + b[i] as f64 * fx;
        let bot = c[i] as f64 * (1.0 - fx) + d[i] as f64 * fx;
        top * (1.0 - fy) + bot * fy
    }))
}

pub(crate) fn to_rgb8(v: [f64; 3]) -> image::Rgb<u8> {
    image::Rgb(v.map(|c| c.round().clamp(0.0, 255.0) as u8))
}
