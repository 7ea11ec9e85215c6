use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::ManifestEntry;
use crate::error::{Error, Result};
use crate::rng::{stream, STREAM_SPLIT};

/// Train / validation / test shares of one dataset tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Fractions {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Fractions> {
        let f = Fractions { train, validation, test };
        if [train, validation, test].iter().any(|v| !(0.0..=1.0).contains(v)) || train + validation + test > 1.0 + 1e-9 {
            return Err(Error::Config(format!("split fractions {f:?} must be in [0,1] and sum to at most 1")));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub default: Fractions,
    pub per_dataset: BTreeMap<String, Fractions>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn uniform(fractions: Fractions, seed: u64) -> SplitSpec {
        SplitSpec {
            default: fractions,
            per_dataset: BTreeMap::new(),
            seed,
        }
    }

    fn fractions(&self, tag: &str) -> Fractions {
        self.per_dataset.get(tag).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<ManifestEntry>,
    pub validation: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

/// Seeded shuffle per dataset tag, then `floor(n * f)` entries each to
/// validation and test; the remainder of the tag's share goes to train.
/// Entries beyond `train + validation + test < 1` are left out.
pub fn split(entries: &[ManifestEntry], spec: &SplitSpec) -> Split {
    let mut groups: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in entries {
        groups.entry(e.dataset.as_str()).or_default().push(e);
    }
    let mut out = Split::default();
    for (tag_index, (tag, mut group)) in groups.into_iter().enumerate() {
        group.shuffle(&mut stream(spec.seed, &[STREAM_SPLIT, tag_index as u64]));
        let f = spec.fractions(tag);
        let n = group.len();
        // the epsilon keeps e.g. 0.29 * 100 = 28.999999999999996 at 29
        let share_of = |f: f64| (n as f64 * f + 1e-9).floor() as usize;
        let n_val = share_of(f.validation);
        let n_test = share_of(f.test);
        let share = f.train + f.validation + f.test;
        let n_used = if share >= 1.0 - 1e-9 { n } else { share_of(share).max(n_val + n_test) };
        let mut it = group.into_iter().cloned();
        out.validation.extend(it.by_ref().take(n_val));
        out.test.extend(it.by_ref().take(n_test));
        out.train.extend(it.take(n_used - n_val - n_test));
    }
    out
}
