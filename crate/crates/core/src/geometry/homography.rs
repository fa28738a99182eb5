use image::{GrayImage, RgbImage};
use nalgebra::{DMatrix, Matrix3, Vector3};

use super::{sample_bilinear, to_rgb8, GeometryError};

type P = (f64, f64);

const SINGULAR_DET: f64 = 1e-9;

/// Projective map of the plane, row-major, bottom-right entry 1 when it is
/// nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [f64; 9],
}

impl Homography {
    pub fn identity() -> Self {
        Self { m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0] }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self { m: [1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0] }
    }

    pub fn from_matrix(m: [f64; 9]) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::Singular(f64::NAN));
        }
        let scale = if m[8].abs() > 1e-12 {
            m[8]
        } else {
            m.iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        if scale == 0.0 {
            return Err(GeometryError::Singular(0.0));
        }
        let h = Self { m: m.map(|v| v / scale) };
        let det = h.det();
        if det.abs() <= SINGULAR_DET {
            return Err(GeometryError::Singular(det.abs()));
        }
        Ok(h)
    }

    pub fn matrix(&self) -> [f64; 9] {
        self.m
    }

    fn na(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.m)
    }

    pub fn det(&self) -> f64 {
        self.na().determinant()
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self.na().try_inverse().ok_or(GeometryError::Singular(self.det().abs()))?;
        let mut m = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                m[3 * r + c] = inv[(r, c)];
            }
        }
        Self::from_matrix(m)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Homography) -> Result<Self, GeometryError> {
        let p = self.na() * other.na();
        let mut m = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                m[3 * r + c] = p[(r, c)];
            }
        }
        Self::from_matrix(m)
    }

    /// `None` for points mapped to infinity.
    pub fn apply(&self, p: P) -> Option<P> {
        let m = &self.m;
        let w = m[6] * p.0 + m[7] * p.1 + m[8];
        if w.abs() < 1e-12 {
            return None;
        }
        Some(((m[0] * p.0 + m[1] * p.1 + m[2]) / w, (m[3] * p.0 + m[4] * p.1 + m[5]) / w))
    }
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizer(pts: &[P]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mean = pts.iter().map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / n;
    let s = if mean > 0.0 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn apply_na(t: &Matrix3<f64>, p: P) -> P {
    let v = t * Vector3::new(p.0, p.1, 1.0);
    (v.x / v.z, v.y / v.z)
}

/// Normalized DLT design matrix (two rows per pair) and the normalizers of
/// both point sets.
pub(crate) fn dlt_system(pairs: &[(P, P)]) -> (DMatrix<f64>, Matrix3<f64>, Matrix3<f64>) {
    let src: Vec<P> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<P> = pairs.iter().map(|p| p.1).collect();
    let ts = normalizer(&src);
    let td = normalizer(&dst);
    let mut a = DMatrix::zeros(2 * pairs.len(), 9);
    for (i, (s, d)) in pairs.iter().enumerate() {
        let (x, y) = apply_na(&ts, *s);
        let (u, v) = apply_na(&td, *d);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for c in 0..9 {
            a[(2 * i, c)] = r0[c];
            a[(2 * i + 1, c)] = r1[c];
        }
    }
    (a, ts, td)
}

/// Undoes the normalizers around a solution `h` of the normalized system.
pub(crate) fn denormalize(h: &[f64], ts: &Matrix3<f64>, td: &Matrix3<f64>) -> Result<Homography, GeometryError> {
    let hn = Matrix3::from_row_slice(h);
    let td_inv = td.try_inverse().ok_or(GeometryError::Singular(0.0))?;
    let full = td_inv * hn * ts;
    let mut m = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            m[3 * r + c] = full[(r, c)];
        }
    }
    Homography::from_matrix(m)
}

/// Direct linear transform with point normalization; minimizes algebraic
/// error over `pairs` of (image point, ground point).
pub fn estimate_homography(pairs: &[(P, P)]) -> Result<Homography, GeometryError> {
    if pairs.len() < 4 {
        return Err(GeometryError::RankDeficient(format!("{} correspondences, need at least 4", pairs.len())));
    }
    if pairs.iter().any(|(s, d)| !(s.0.is_finite() && s.1.is_finite() && d.0.is_finite() && d.1.is_finite())) {
        return Err(GeometryError::RankDeficient("non-finite correspondence".into()));
    }
    let (mut a, ts, td) = dlt_system(pairs);
    if a.nrows() < 9 {
        // Pad so the SVD exposes the full right singular basis.
        let rows = a.nrows();
        a = a.insert_rows(rows, 9 - rows, 0.0);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let largest = svd.singular_values[order[order.len() - 1]];
    let second = svd.singular_values[order[1]];
    if second <= 1e-10 * largest {
        return Err(GeometryError::RankDeficient("solution is not unique (collinear or repeated points)".into()));
    }
    let h: Vec<f64> = v_t.row(order[0]).iter().copied().collect();
    denormalize(&h, &ts, &td)
}

/// Inverse-mapping warp: output pixel `p` samples `img` at `h⁻¹·p`.
/// Returns the image and the mask of covered pixels.
pub fn warp_topdown_with_coverage(
    img: &RgbImage,
    h: &Homography,
    out_size: (u32, u32),
) -> Result<(RgbImage, GrayImage), GeometryError> {
    let inv = h.inverse()?;
    let mut out = RgbImage::new(out_size.0, out_size.1);
    let mut cover = GrayImage::new(out_size.0, out_size.1);
    for v in 0..out_size.1 {
        for u in 0..out_size.0 {
            let Some((x, y)) = inv.apply((u as f64, v as f64)) else { continue };
            if let Some(px) = sample_bilinear(img, x, y) {
                out.put_pixel(u, v, to_rgb8(px));
                cover.put_pixel(u, v, image::Luma([255]));
            }
        }
    }
    Ok((out, cover))
}

pub fn warp_topdown(img: &RgbImage, h: &Homography, out_size: (u32, u32)) -> Result<RgbImage, GeometryError> {
    Ok(warp_topdown_with_coverage(img, h, out_size)?.0)
}
