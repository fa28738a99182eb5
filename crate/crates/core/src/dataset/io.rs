use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use image::{GrayImage, RgbImage};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::label::LabelMask;

use super::scene::{generate_scene, SceneSpec};
use super::split::{split, DatasetIndex};
use super::{DatasetError, Sample};

/// Split file name under the dataset root.
pub const SPLIT_FILE: &str = "split.tsv";

fn image_err(path: &Path, source: image::ImageError) -> DatasetError {
    DatasetError::Image { name: path.display().to_string(), source }
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage, DatasetError> {
    Ok(image::open(path).map_err(|e| image_err(path, e))?.into_rgb8())
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<(), DatasetError> {
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| image_err(path, e))
}

/// Reads a single-channel PNG of raw category indices.
pub fn read_label_png(path: &Path) -> Result<LabelMask, DatasetError> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    if !matches!(img, image::DynamicImage::ImageLuma8(_)) {
        return Err(DatasetError::Mismatch(format!("{} is not an 8-bit grayscale PNG", path.display())));
    }
    let g = img.into_luma8();
    let (w, h) = (g.width() as usize, g.height() as usize);
    Ok(LabelMask::from_raw(w, h, g.into_raw())?)
}

pub fn write_label_png(path: &Path, label: &LabelMask) -> Result<(), DatasetError> {
    let g = GrayImage::from_raw(label.width() as u32, label.height() as u32, label.as_raw().to_vec())
        .expect("label buffer matches its dimensions");
    g.save_with_format(path, image::ImageFormat::Png).map_err(|e| image_err(path, e))
}

/// Writes `root/images/{name}.png` and `root/labels/{name}.png`.
pub fn save_sample(root: &Path, name: &str, sample: &Sample) -> Result<(), DatasetError> {
    fs::create_dir_all(root.join("images"))?;
    fs::create_dir_all(root.join("labels"))?;
    write_rgb_png(&root.join("images").join(format!("{name}.png")), &sample.image)?;
    write_label_png(&root.join("labels").join(format!("{name}.png")), &sample.label)
}

fn png_stems(dir: &Path) -> Result<BTreeSet<String>, DatasetError> {
    let mut out = BTreeSet::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string());
            }
        }
    }
    Ok(out)
}

fn load_pair(root: &Path, name: &str) -> Result<Sample, DatasetError> {
    let image = read_rgb_png(&root.join("images").join(format!("{name}.png")))?;
    let label = read_label_png(&root.join("labels").join(format!("{name}.png")))?;
    Sample::new(image, label)
}

/// Validates every image/label pair under `root` and returns the split.
/// Uses the split file when present, otherwise a seed-0 split.
pub fn load_dataset(root: &Path) -> Result<DatasetIndex, DatasetError> {
    let images = png_stems(&root.join("images"))?;
    let labels = png_stems(&root.join("labels"))?;
    let mut offenders = Vec::new();
    for name in images.symmetric_difference(&labels) {
        let side = if images.contains(name) { "label" } else { "image" };
        offenders.push(format!("{name}.png (missing {side})"));
    }
    for name in images.intersection(&labels) {
        if let Err(e) = load_pair(root, name) {
            offenders.push(format!("{name}.png ({e})"));
        }
    }
    if !offenders.is_empty() {
        return Err(DatasetError::Ingestion(offenders));
    }
    let names: Vec<String> = images.into_iter().collect();
    let split_path = root.join(SPLIT_FILE);
    if !split_path.exists() {
        return Ok(split(&names, 0));
    }
    let index = DatasetIndex::parse(&fs::read_to_string(&split_path)?).map_err(DatasetError::SplitFile)?;
    let listed: BTreeSet<&String> = index.train.iter().chain(&index.val).chain(&index.test).collect();
    let present: BTreeSet<&String> = names.iter().collect();
    if listed != present {
        let diff: Vec<String> = listed.symmetric_difference(&present).map(|s| s.to_string()).collect();
        return Err(DatasetError::SplitFile(format!("split file and directory disagree on: {}", diff.join(", "))));
    }
    Ok(index)
}

pub fn load_samples(root: &Path, names: &[String]) -> Result<Vec<Sample>, DatasetError> {
    names.iter().map(|n| load_pair(root, n)).collect()
}

/// Renders `n` random `size`×`size` scenes under `root` with a split file.
/// Everything written depends only on `(n, size, seed)`.
pub fn generate_dataset(root: &Path, n: usize, size: usize, seed: u64) -> Result<DatasetIndex, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = Vec::with_capacity(n);
    for i in 0..n {
        let spec = SceneSpec::random(size, &mut rng);
        let sample = generate_scene(&spec, &mut rng)?;
        let name = format!("scene_{i:05}");
        save_sample(root, &name, &sample)?;
        names.push(name);
    }
    let index = split(&names, seed);
    fs::write(root.join(SPLIT_FILE), index.to_text())?;
    Ok(index)
}
