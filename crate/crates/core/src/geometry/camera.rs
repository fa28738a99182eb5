use image::RgbImage;

use super::{sample_bilinear, to_rgb8, GeometryError};

/// Raw fisheye capture resolution.
pub const CAPTURE_SIZE: (u32, u32) = (640, 480);

/// Fisheye intrinsics. A ray at angle `θ` from the optical axis lands at
/// normalized radius `tan θ · (1 + k1 θ² + k2 θ⁴ + k3 θ⁶ + k4 θ⁸)`, so zero
/// coefficients are the pinhole model of the undistorted output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub focal_x: f64,
    pub focal_y: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub skew: f64,
    pub distortion: [f64; 4],
    pub image_size: (u32, u32),
}

impl CameraIntrinsics {
    pub fn new(focal: (f64, f64), center: (f64, f64), distortion: [f64; 4]) -> Result<Self, GeometryError> {
        let k = Self {
            focal_x: focal.0,
            focal_y: focal.1,
            center_x: center.0,
            center_y: center.1,
            skew: 0.0,
            distortion,
            image_size: CAPTURE_SIZE,
        };
        k.validate()?;
        Ok(k)
    }

    /// Coefficients approximating the equidistant lens `r = θ`
    /// (the series of `θ / tan θ`).
    pub const EQUIDISTANT: [f64; 4] = [-1.0 / 3.0, -1.0 / 45.0, -2.0 / 945.0, -1.0 / 4725.0];

    /// Parameters in file order: `fx fy cx cy skew k1 k2 k3 k4`.
    pub fn to_array(&self) -> [f64; 9] {
        let d = self.distortion;
        [self.focal_x, self.focal_y, self.center_x, self.center_y, self.skew, d[0], d[1], d[2], d[3]]
    }

    pub fn from_array(v: [f64; 9]) -> Result<Self, GeometryError> {
        let k = Self {
            focal_x: v[0],
            focal_y: v[1],
            center_x: v[2],
            center_y: v[3],
            skew: v[4],
            distortion: [v[5], v[6], v[7], v[8]],
            image_size: CAPTURE_SIZE,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: String| Err(GeometryError::Intrinsics(m));
        if !(self.focal_x > 0.0 && self.focal_y > 0.0) {
            return bad(format!("focal lengths must be positive, got ({}, {})", self.focal_x, self.focal_y));
        }
        if self.image_size != CAPTURE_SIZE {
            return bad(format!("image size {:?} differs from the capture size {CAPTURE_SIZE:?}", self.image_size));
        }
        let (w, h) = (self.image_size.0 as f64, self.image_size.1 as f64);
        if !((0.0..w).contains(&self.center_x) && (0.0..h).contains(&self.center_y)) {
            return bad(format!("principal point ({}, {}) outside the image", self.center_x, self.center_y));
        }
        if !self.skew.is_finite() || self.distortion.iter().any(|d| !d.is_finite()) {
            return bad("non-finite skew or distortion".into());
        }
        Ok(())
    }

    fn radial_factor(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        let [k1, k2, k3, k4] = self.distortion;
        1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4)))
    }

    /// Pinhole-normalized point to distorted normalized point.
    pub fn distort_normalized(&self, a: f64, b: f64) -> (f64, f64) {
        let r = a.hypot(b);
        if r == 0.0 {
            return (a, b);
        }
        let f = self.radial_factor(r.atan());
        (a * f, b * f)
    }

    /// Inverse of [`CameraIntrinsics::distort_normalized`] by bisection on
    /// `θ`; `None` when the distorted radius is unreachable.
    pub fn undistort_normalized(&self, xd: f64, yd: f64) -> Option<(f64, f64)> {
        let rd = xd.hypot(yd);
        if rd == 0.0 {
            return Some((xd, yd));
        }
        let g = |t: f64| t.tan() * self.radial_factor(t);
        let (mut lo, mut hi) = (0.0f64, std::f64::consts::FRAC_PI_2 - 1e-6);
        if g(hi) < rd {
            return None;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < rd {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = (0.5 * (lo + hi)).tan();
        Some((xd * r / rd, yd * r / rd))
    }

    pub fn pixel_to_normalized(&self, u: f64, v: f64) -> (f64, f64) {
        let b = (v - self.center_y) / self.focal_y;
        let a = (u - self.center_x) / self.focal_x - self.skew * b;
        (a, b)
    }

    pub fn normalized_to_pixel(&self, a: f64, b: f64) -> (f64, f64) {
        (self.focal_x * (a + self.skew * b) + self.center_x, self.focal_y * b + self.center_y)
    }

    /// Raw-image location seen through undistorted pixel `(u, v)`.
    pub fn distorted_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        let (a, b) = self.pixel_to_normalized(u, v);
        let (xd, yd) = self.distort_normalized(a, b);
        self.normalized_to_pixel(xd, yd)
    }

    /// Undistorted-image location of raw pixel `(u, v)`.
    pub fn undistorted_pixel(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let (xd, yd) = self.pixel_to_normalized(u, v);
        let (a, b) = self.undistort_normalized(xd, yd)?;
        Some(self.normalized_to_pixel(a, b))
    }
}

/// Pinhole view with the same intrinsics: every output pixel is sampled
/// bilinearly at its distorted location; misses are black.
pub fn undistort_fisheye(img: &RgbImage, k: &CameraIntrinsics) -> Result<RgbImage, GeometryError> {
    k.validate()?;
    if img.dimensions() != k.image_size {
        return Err(GeometryError::Dimension { expected: k.image_size, got: img.dimensions() });
    }
    let mut out = RgbImage::new(img.width(), img.height());
    for v in 0..img.height() {
        for u in 0..img.width() {
            let (x, y) = k.distorted_pixel(u as f64, v as f64);
            if let Some(px) = sample_bilinear(img, x, y) {
                out.put_pixel(u, v, to_rgb8(px));
            }
        }
    }
    Ok(out)
}
