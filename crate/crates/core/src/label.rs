//! Per-pixel category maps.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Category {
    Background = 0,
    Parking = 1,
    WhiteSolid = 2,
    WhiteDashed = 3,
    YellowSolid = 4,
    YellowDashed = 5,
}

pub const NUM_CATEGORIES: usize = 6;

impl Category {
    pub const ALL: [Category; NUM_CATEGORIES] = [
        Category::Background,
        Category::Parking,
        Category::WhiteSolid,
        Category::WhiteDashed,
        Category::YellowSolid,
        Category::YellowDashed,
    ];

    pub const LANES: [Category; 4] =
        [Category::WhiteSolid, Category::WhiteDashed, Category::YellowSolid, Category::YellowDashed];

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Background => "background",
            Category::Parking => "parking",
            Category::WhiteSolid => "white-solid",
            Category::WhiteDashed => "white-dashed",
            Category::YellowSolid => "yellow-solid",
            Category::YellowDashed => "yellow-dashed",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn is_dashed(self) -> bool {
        matches!(self, Category::WhiteDashed | Category::YellowDashed)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("label value {value} at ({x}, {y}) outside 0..{NUM_CATEGORIES}")]
    OutOfRange { x: usize, y: usize, value: u8 },
    #[error("{got} label values for a {width}x{height} mask")]
    Size { width: usize, height: usize, got: usize },
}

/// Row-major category indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    pub fn filled(width: usize, height: usize, c: Category) -> Self {
        Self { width, height, data: vec![c as u8; width * height] }
    }

    /// Validates that every value is a category index.
    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, LabelError> {
        if data.len() != width * height {
            return Err(LabelError::Size { width, height, got: data.len() });
        }
        if let Some(i) = data.iter().position(|&v| v as usize >= NUM_CATEGORIES) {
            return Err(LabelError::OutOfRange { x: i % width, y: i / width, value: data[i] });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Category) {
        self.data[y * self.width + x] = c as u8;
    }

    /// Pixel count per category.
    pub fn histogram(&self) -> [usize; NUM_CATEGORIES] {
        let mut h = [0; NUM_CATEGORIES];
        for &v in &self.data {
            h[v as usize] += 1;
        }
        h
    }

    pub fn categories_present(&self) -> Vec<Category> {
        let h = self.histogram();
        Category::ALL.into_iter().filter(|c| h[c.index()] > 0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert_eq!(
            LabelMask::from_raw(2, 2, vec![0, 1, 7, 0]),
            Err(LabelError::OutOfRange { x: 0, y: 1, value: 7 })
        );
        assert!(LabelMask::from_raw(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn names_round_trip() {
        for c in Category::ALL {
            assert_eq!(Category::from_name(c.name()), Some(c));
            assert_eq!(Category::from_index(c as u8), Some(c));
        }
        assert_eq!(Category::from_index(6), None);
    }
}
