use crate::label::{Category, LabelMask};

/// Row-major 0/1 image. Reads outside the bounds are background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// A thinned [`BinaryImage`].
pub type SkeletonImage = BinaryImage;

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    /// Nonzero bytes are foreground.
    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        (data.len() == width * height).then(|| Self { width, height, data: data.into_iter().map(|v| u8::from(v != 0)).collect() })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.data[y as usize * self.width + x as usize] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = u8::from(v);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| (i % self.width, i / self.width))
    }

    /// Clockwise ring from north: `P2..P9` of the thinning literature.
    fn ring(&self, x: usize, y: usize) -> [bool; 8] {
        let (x, y) = (x as isize, y as isize);
        [
            self.get(x, y - 1),
            self.get(x + 1, y - 1),
            self.get(x + 1, y),
            self.get(x + 1, y + 1),
            self.get(x, y + 1),
            self.get(x - 1, y + 1),
            self.get(x - 1, y),
            self.get(x - 1, y - 1),
        ]
    }
}

pub fn binarize(mask: &LabelMask, category: Category) -> BinaryImage {
    let c = category as u8;
    BinaryImage {
        width: mask.width(),
        height: mask.height(),
        data: mask.as_raw().iter().map(|&v| u8::from(v == c)).collect(),
    }
}

fn neighbours(r: &[bool; 8]) -> usize {
    r.iter().filter(|&&v| v).count()
}

/// 0→1 transitions around the ring.
fn transitions(r: &[bool; 8]) -> usize {
    (0..8).filter(|&i| !r[i] && r[(i + 1) % 8]).count()
}

/// Yokoi connectivity number for 8-connected foreground.
fn connectivity8(r: &[bool; 8]) -> usize {
    let nb = |i: usize| usize::from(!r[i % 8]);
    [0, 2, 4, 6].iter().map(|&k| nb(k) - nb(k) * nb(k + 1) * nb(k + 2)).sum()
}

/// Removing the point keeps every component and hole, and it is not an
/// end point.
fn deletable(img: &BinaryImage, x: usize, y: usize) -> bool {
    let r = img.ring(x, y);
    neighbours(&r) >= 2 && connectivity8(&r) == 1
}

fn zs_candidate(r: &[bool; 8], first: bool) -> bool {
    let b = neighbours(r);
    if !(2..=6).contains(&b) || transitions(r) != 1 {
        return false;
    }
    let [p2, _, p4, _, p6, _, p8, _] = *r;
    if first {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

/// Zhang–Suen thinning to a fixpoint. Marked points are removed one at a
/// time and only while still deletable, which keeps 8-connectivity; a
/// final pass breaks any remaining 2×2 blocks.
pub fn skeletonize(bin: &BinaryImage) -> SkeletonImage {
    let mut img = bin.clone();
    loop {
        let mut changed = false;
        for first in [true, false] {
            let marked: Vec<(usize, usize)> =
                img.points().filter(|&(x, y)| zs_candidate(&img.ring(x, y), first)).collect();
            for (x, y) in marked {
                if deletable(&img, x, y) {
                    img.set(x, y, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    loop {
        let mut changed = false;
        for y in 0..img.height.saturating_sub(1) {
            for x in 0..img.width.saturating_sub(1) {
                let block = [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)];
                if !block.iter().all(|&(bx, by)| img.get(bx as isize, by as isize)) {
                    continue;
                }
                if let Some(&(bx, by)) = block.iter().find(|&&(bx, by)| deletable(&img, bx, by)) {
                    img.set(bx, by, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    img
}
