use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Disjoint train/val/test name lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetIndex {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// `name<TAB>split` lines, train then val then test.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for split in [Split::Train, Split::Val, Split::Test] {
            for name in self.names(split) {
                s.push_str(&format!("{name}\t{split}\n"));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut index = DatasetIndex::default();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (name, split) = line.split_once('\t').ok_or_else(|| format!("line {}: expected name<TAB>split", i + 1))?;
            let split: Split = split.trim().parse().map_err(|e| format!("line {}: {e}", i + 1))?;
            if !seen.insert(name.to_string()) {
                return Err(format!("line {}: {name:?} listed twice", i + 1));
            }
            match split {
                Split::Train => index.train.push(name.to_string()),
                Split::Val => index.val.push(name.to_string()),
                Split::Test => index.test.push(name.to_string()),
            }
        }
        Ok(index)
    }
}

/// `(train, val, test)` sizes for `n` items: test is `⌊3n/10⌋`, val is
/// `n/10` rounded to nearest, train takes the remainder.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let test = 3 * n / 10;
    let val = (n + 5) / 10;
    (n - test - val, val, test)
}

/// Seeded shuffle followed by a contiguous train/val/test cut.
pub fn split(items: &[String], seed: u64) -> DatasetIndex {
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, val, _) = split_counts(items.len());
    let test = shuffled.split_off(train + val);
    let val = shuffled.split_off(train);
    DatasetIndex { train: shuffled, val, test }
}
