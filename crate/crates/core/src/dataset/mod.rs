//! Paired PSV images and label masks: directory ingestion, the seeded
//! 6:1:3 split, and a synthetic top-down scene generator.

mod io;
mod scene;
mod split;

pub use io::{generate_dataset, load_dataset, load_samples, read_label_png, read_rgb_png, save_sample, write_label_png, write_rgb_png, SPLIT_FILE};
pub use scene::{
    generate_scene, DashPattern, Illumination, LaneSpec, PaintColor, SceneSpec, Shadow, SlotOrientation, SlotRow,
    TextureWave, FIELD_OF_VIEW_M,
};
pub use split::{split, split_counts, DatasetIndex, Split};

use image::RgbImage;

use crate::label::{LabelError, LabelMask};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset ingestion failed for: {}", .0.join(", "))]
    Ingestion(Vec<String>),
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("invalid split file: {0}")]
    SplitFile(String),
    #[error("image {name}: {source}")]
    Image { name: String, source: image::ImageError },
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A top-down image with its per-pixel categories.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: RgbImage,
    pub label: LabelMask,
}

impl Sample {
    pub fn new(image: RgbImage, label: LabelMask) -> Result<Self, DatasetError> {
        if (image.width() as usize, image.height() as usize) != label.dims() {
            return Err(DatasetError::Mismatch(format!(
                "image {}x{} vs label {}x{}",
                image.width(),
                image.height(),
                label.width(),
                label.height()
            )));
        }
        Ok(Self { image, label })
    }
}

/// Fraction of non-background pixels.
pub fn marking_ratio(label: &LabelMask) -> f64 {
    if label.is_empty() {
        return 0.0;
    }
    let marked = label.as_raw().iter().filter(|&&v| v != 0).count();
    marked as f64 / label.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Category;

    #[test]
    fn ratio_examples() {
        let mut m = LabelMask::new(4, 4);
        assert_eq!(marking_ratio(&m), 0.0);
        for x in 0..4 {
            for y in 0..2 {
                m.set(x, y, Category::WhiteDashed);
            }
        }
        assert_eq!(marking_ratio(&m), 0.5);
    }

    #[test]
    fn sample_dims_must_agree() {
        assert!(Sample::new(RgbImage::new(4, 4), LabelMask::new(4, 3)).is_err());
        assert!(Sample::new(RgbImage::new(4, 3), LabelMask::new(4, 3)).is_ok());
    }
}
