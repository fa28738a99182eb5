//! Confusion-matrix segmentation metrics: pixel accuracy, mean per-class
//! accuracy, and (mean) intersection over union.
//!
//! Means skip categories with neither ground-truth nor predicted pixels.

use std::fmt::Write;
use std::ops::{Add, AddAssign};

use crate::label::{Category, LabelMask, NUM_CATEGORIES};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction is {pred:?}, ground truth is {gt:?}")]
    Size { pred: (usize, usize), gt: (usize, usize) },
    #[error("label value {0} out of range")]
    Label(u8),
    #[error("metric undefined on an empty confusion matrix")]
    Empty,
}

/// `counts[g][p]`: pixels with ground truth `g` predicted as `p`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CATEGORIES]; NUM_CATEGORIES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationReport {
    pub per_class_iou: [Option<f64>; NUM_CATEGORIES],
    pub pixel_acc: f64,
    pub mean_pixel_acc: f64,
    pub mean_iou: f64,
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; NUM_CATEGORIES]; NUM_CATEGORIES]) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[[u64; NUM_CATEGORIES]; NUM_CATEGORIES] {
        &self.counts
    }

    pub fn get(&self, gt: Category, pred: Category) -> u64 {
        self.counts[gt.index()][pred.index()]
    }

    pub fn accumulate(&mut self, pred: &LabelMask, gt: &LabelMask) -> Result<(), MetricsError> {
        if pred.dims() != gt.dims() {
            return Err(MetricsError::Size { pred: pred.dims(), gt: gt.dims() });
        }
        let mut local = [[0u64; NUM_CATEGORIES]; NUM_CATEGORIES];
        for (&p, &g) in pred.as_raw().iter().zip(gt.as_raw()) {
            if p as usize >= NUM_CATEGORIES {
                return Err(MetricsError::Label(p));
            }
            if g as usize >= NUM_CATEGORIES {
                return Err(MetricsError::Label(g));
            }
            local[g as usize][p as usize] += 1;
        }
        *self += ConfusionMatrix { counts: local };
        Ok(())
    }

    pub fn from_pair(pred: &LabelMask, gt: &LabelMask) -> Result<Self, MetricsError> {
        let mut cm = Self::new();
        cm.accumulate(pred, gt)?;
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    fn present(&self, c: usize) -> bool {
        self.row_sum(c) + self.col_sum(c) > 0
    }

    fn non_empty(&self) -> Result<(), MetricsError> {
        if self.total() == 0 {
            Err(MetricsError::Empty)
        } else {
            Ok(())
        }
    }

    pub fn pixel_acc(&self) -> Result<f64, MetricsError> {
        self.non_empty()?;
        let trace: u64 = (0..NUM_CATEGORIES).map(|c| self.counts[c][c]).sum();
        Ok(trace as f64 / self.total() as f64)
    }

    /// Per-class accuracy `diag / row_sum`; `None` for classes without
    /// ground-truth pixels.
    pub fn per_class_acc(&self) -> [Option<f64>; NUM_CATEGORIES] {
        std::array::from_fn(|c| {
            let row = self.row_sum(c);
            (row > 0).then(|| self.counts[c][c] as f64 / row as f64)
        })
    }

    /// Mean of per-class accuracies over present classes. A class predicted
    /// but absent from the ground truth contributes accuracy 0.
    pub fn mean_pixel_acc(&self) -> Result<f64, MetricsError> {
        self.non_empty()?;
        let accs = self.per_class_acc();
        let vals: Vec<f64> = (0..NUM_CATEGORIES).filter(|&c| self.present(c)).map(|c| accs[c].unwrap_or(0.0)).collect();
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// `diag / (row + col - diag)`; `None` for absent classes.
    pub fn per_class_iou(&self) -> [Option<f64>; NUM_CATEGORIES] {
        std::array::from_fn(|c| {
            let d = self.counts[c][c];
            let union = self.row_sum(c) + self.col_sum(c) - d;
            (union > 0).then(|| d as f64 / union as f64)
        })
    }

    pub fn mean_iou(&self) -> Result<f64, MetricsError> {
        self.non_empty()?;
        let vals: Vec<f64> = self.per_class_iou().into_iter().flatten().collect();
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn report(&self) -> Result<SegmentationReport, MetricsError> {
        Ok(SegmentationReport {
            per_class_iou: self.per_class_iou(),
            pixel_acc: self.pixel_acc()?,
            mean_pixel_acc: self.mean_pixel_acc()?,
            mean_iou: self.mean_iou()?,
        })
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.counts.iter_mut().flatten().zip(rhs.counts.iter().flatten()) {
            *a += b;
        }
    }
}

impl SegmentationReport {
    /// Column header of [`SegmentationReport::table_row`].
    pub fn table_header() -> String {
        let mut s = format!("{:<12}", "model");
        for c in Category::ALL {
            let _ = write!(s, " {:>13}", c.name());
        }
        let _ = write!(s, " {:>8} {:>8}", "pacc", "mIoU");
        s
    }

    /// Percentages; absent classes print as `-`.
    pub fn table_row(&self, model: &str) -> String {
        let mut s = format!("{model:<12}");
        for iou in self.per_class_iou {
            match iou {
                Some(v) => {
                    let _ = write!(s, " {:>13.2}", 100.0 * v);
                }
                None => {
                    let _ = write!(s, " {:>13}", "-");
                }
            }
        }
        let _ = write!(s, " {:>8.2} {:>8.2}", 100.0 * self.pixel_acc, 100.0 * self.mean_iou);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, v: &[u8]) -> LabelMask {
        LabelMask::from_raw(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction_is_diagonal() {
        let gt = mask(3, 2, &[0, 1, 2, 3, 4, 5]);
        let cm = ConfusionMatrix::from_pair(&gt, &gt).unwrap();
        for g in 0..6 {
            for p in 0..6 {
                assert_eq!(cm.counts()[g][p], u64::from(g == p));
            }
        }
        assert_eq!(cm.pixel_acc().unwrap(), 1.0);
        assert_eq!(cm.mean_pixel_acc().unwrap(), 1.0);
        assert_eq!(cm.mean_iou().unwrap(), 1.0);
    }

    #[test]
    fn disjoint_constant_masks() {
        let gt = LabelMask::filled(4, 5, Category::Background);
        let pred = LabelMask::filled(4, 5, Category::Parking);
        let cm = ConfusionMatrix::from_pair(&pred, &gt).unwrap();
        assert_eq!(cm.get(Category::Background, Category::Parking), 20);
        assert_eq!(cm.total(), 20);
        assert_eq!(cm.pixel_acc().unwrap(), 0.0);
    }

    #[test]
    fn two_class_toy() {
        let mut counts = [[0u64; 6]; 6];
        counts[0] = [3, 1, 0, 0, 0, 0];
        counts[1] = [1, 3, 0, 0, 0, 0];
        let cm = ConfusionMatrix::from_counts(counts);
        let iou = cm.per_class_iou();
        assert_eq!(iou[0], Some(0.6));
        assert_eq!(iou[1], Some(0.6));
        assert!(iou[2..].iter().all(Option::is_none));
        assert!((cm.mean_iou().unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(cm.pixel_acc().unwrap(), 0.75);
    }

    #[test]
    fn empty_matrix_is_undefined() {
        let cm = ConfusionMatrix::new();
        assert_eq!(cm.pixel_acc(), Err(MetricsError::Empty));
        assert_eq!(cm.mean_iou(), Err(MetricsError::Empty));
        assert_eq!(cm.mean_pixel_acc(), Err(MetricsError::Empty));
    }

    #[test]
    fn size_mismatch_is_error() {
        let a = LabelMask::new(2, 2);
        let b = LabelMask::new(2, 3);
        assert!(ConfusionMatrix::from_pair(&a, &b).is_err());
    }

    #[test]
    fn report_row_formats_percentages() {
        let gt = mask(2, 1, &[0, 1]);
        let r = ConfusionMatrix::from_pair(&gt, &gt).unwrap().report().unwrap();
        let row = r.table_row("ours");
        assert!(row.starts_with("ours"));
        assert!(row.contains("100.00"));
        assert_eq!(row.matches(" -").count(), 4);
        assert_eq!(SegmentationReport::table_header().split_whitespace().count(), 9);
    }
}
