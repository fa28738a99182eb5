use crate::kv::KvDoc;

use image::RgbImage;

use super::{
    default_masks, stitch, undistort_fisheye, warp_topdown, CameraIntrinsics, GeometryError, Homography, PsvImage,
    DEFAULT_FEATHER_PX, PSV_SIZE,
};

/// Camera order used by masks, views and the calibration file.
pub const CAMERA_NAMES: [&str; 4] = ["front", "rear", "left", "right"];

/// Intrinsics plus the homography from the undistorted image to the PSV
/// canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    pub intrinsics: CameraIntrinsics,
    pub homography: Homography,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub cameras: [CameraCalibration; 4],
    pub psv_size: usize,
    pub feather_px: f64,
}

fn nine(doc: &KvDoc, key: &str) -> Result<[f64; 9], GeometryError> {
    let v: Vec<f64> = doc.numbers(key).map_err(|e| GeometryError::Calibration(e.to_string()))?;
    v.try_into().map_err(|v: Vec<f64>| GeometryError::Calibration(format!("{key}: expected 9 numbers, found {}", v.len())))
}

impl Calibration {
    /// Keys: `psv.size`, `psv.feather`, and per camera
    /// `<name>.intrinsics` (fx fy cx cy skew k1 k2 k3 k4) and
    /// `<name>.homography` (row-major).
    pub fn parse(text: &str) -> Result<Self, GeometryError> {
        let doc = KvDoc::parse(text).map_err(|e| GeometryError::Calibration(e.to_string()))?;
        let cfg = |e: crate::kv::KvError| GeometryError::Calibration(e.to_string());
        let psv_size = doc.parse_value::<usize>("psv.size").map_err(cfg)?.unwrap_or(PSV_SIZE);
        let feather_px = doc.parse_value::<f64>("psv.feather").map_err(cfg)?.unwrap_or(DEFAULT_FEATHER_PX);
        if psv_size == 0 || !(feather_px >= 0.0 && feather_px.is_finite()) {
            return Err(GeometryError::Calibration("psv.size must be positive and psv.feather non-negative".into()));
        }
        let mut cams = Vec::with_capacity(4);
        for name in CAMERA_NAMES {
            let intrinsics = CameraIntrinsics::from_array(nine(&doc, &format!("{name}.intrinsics"))?)
                .map_err(|e| GeometryError::Calibration(format!("{name}: {e}")))?;
            let homography = Homography::from_matrix(nine(&doc, &format!("{name}.homography"))?)
                .map_err(|e| GeometryError::Calibration(format!("{name}: {e}")))?;
            cams.push(CameraCalibration { intrinsics, homography });
        }
        let cameras: [CameraCalibration; 4] = cams.try_into().expect("four cameras");
        Ok(Self { cameras, psv_size, feather_px })
    }

    /// Undistorts, warps, and stitches four raw captures given in
    /// [`CAMERA_NAMES`] order.
    pub fn compose_psv(&self, raws: [&RgbImage; 4]) -> Result<PsvImage, GeometryError> {
        let n = self.psv_size as u32;
        let mut tops = Vec::with_capacity(4);
        for (raw, cam) in raws.iter().zip(&self.cameras) {
            let flat = undistort_fisheye(raw, &cam.intrinsics)?;
            tops.push(warp_topdown(&flat, &cam.homography, (n, n))?);
        }
        let masks = default_masks(self.psv_size, self.feather_px);
        stitch([&tops[0], &tops[1], &tops[2], &tops[3]], &masks)
    }

    pub fn to_text(&self) -> String {
        let mut doc = KvDoc::default();
        doc.set("psv.size", self.psv_size);
        doc.set("psv.feather", self.feather_px);
        let join = |v: [f64; 9]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        for (name, cam) in CAMERA_NAMES.iter().zip(&self.cameras) {
            doc.set(format!("{name}.intrinsics"), join(cam.intrinsics.to_array()));
            doc.set(format!("{name}.homography"), join(cam.homography.matrix()));
        }
        doc.to_text()
    }
}
