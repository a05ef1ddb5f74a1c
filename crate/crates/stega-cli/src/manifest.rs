//! Dataset manifests: one cover/stego pair per line, tab-separated, with
//! an optional change-map path, plus the seeded pair-preserving split.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use stega_core::rng::{self, Stream};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub cover: PathBuf,
    pub stego: PathBuf,
    pub change_map: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub split_seed: u64,
    /// (train, validation, test) fractions; must sum to 1.
    pub split: (f64, f64, f64),
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("line {line}: expected 2 or 3 tab-separated paths, got {got}")]
    BadLine { line: usize, got: usize },
    #[error("manifest has no entries")]
    Empty,
    #[error("split fractions {0}+{1}+{2} do not sum to 1")]
    BadFractions(f64, f64, f64),
}

impl DatasetManifest {
    pub fn read(path: &Path, split_seed: u64, split: (f64, f64, f64)) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                [cover, stego] => entries.push(ManifestEntry {
                    cover: PathBuf::from(cover),
                    stego: PathBuf::from(stego),
                    change_map: None,
                }),
                [cover, stego, change] => entries.push(ManifestEntry {
                    cover: PathBuf::from(cover),
                    stego: PathBuf::from(stego),
                    change_map: Some(PathBuf::from(change)),
                }),
                other => {
                    return Err(ManifestError::BadLine {
                        line: i + 1,
                        got: other.len(),
                    })
                }
            }
        }
        Ok(DatasetManifest {
            entries,
            split_seed,
            split,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), ManifestError> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.cover.to_string_lossy());
            out.push('\t');
            out.push_str(&e.stego.to_string_lossy());
            if let Some(c) = &e.change_map {
                out.push('\t');
                out.push_str(&c.to_string_lossy());
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Seeded, pair-preserving 3-way partition. Entries are shuffled, then
    /// cut at round(f_train*n) and round((f_train+f_val)*n), so the three
    /// parts are exhaustive and disjoint by construction.
    pub fn split_three(
        &self,
    ) -> Result<(DatasetManifest, DatasetManifest, DatasetManifest), ManifestError> {
        if self.entries.is_empty() {
            return Err(ManifestError::Empty);
        }
        let (ft, fv, fe) = self.split;
        if (ft + fv + fe - 1.0).abs() > 1e-9 || ft < 0.0 || fv < 0.0 || fe < 0.0 {
            return Err(ManifestError::BadFractions(ft, fv, fe));
        }
        let n = self.entries.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut r = rng::stream_rng(self.split_seed, Stream::SplitShuffle, 0);
        rng::shuffle(&mut r, &mut order);
        let cut1 = ((ft * n as f64).round() as usize).min(n);
        let cut2 = (((ft + fv) * n as f64).round() as usize).clamp(cut1, n);
        let part = |idx: &[usize]| DatasetManifest {
            entries: idx.iter().map(|&i| self.entries[i].clone()).collect(),
            split_seed: self.split_seed,
            split: self.split,
        };
        Ok((
            part(&order[..cut1]),
            part(&order[cut1..cut2]),
            part(&order[cut2..]),
        ))
    }

    /// Order-sensitive FNV-1a over the entry paths; stamped into model
    /// provenance so a model names the data it was fitted on.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |s: &str| {
            for b in s.as_bytes() {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100_0000_01b3);
            }
            h ^= 0x1e;
            h = h.wrapping_mul(0x100_0000_01b3);
        };
        for e in &self.entries {
            eat(&e.cover.to_string_lossy());
            eat(&e.stego.to_string_lossy());
            if let Some(c) = &e.change_map {
                eat(&c.to_string_lossy());
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> DatasetManifest {
        DatasetManifest {
            entries: (0..n)
                .map(|i| ManifestEntry {
                    cover: PathBuf::from(format!("c{i}.pgm")),
                    stego: PathBuf::from(format!("s{i}.pgm")),
                    change_map: Some(PathBuf::from(format!("m{i}.pgm"))),
                })
                .collect(),
            split_seed: 1,
            split: (0.4, 0.1, 0.5),
        }
    }

    #[test]
    fn even_split_of_ten_thousand() {
        let mut m = toy(10_000);
        m.split = (0.5, 0.0, 0.5);
        let (train, val, test) = m.split_three().unwrap();
        assert_eq!(train.entries.len(), 5_000);
        assert_eq!(val.entries.len(), 0);
        assert_eq!(test.entries.len(), 5_000);
    }

    #[test]
    fn split_is_an_exhaustive_disjoint_pair_preserving_partition() {
        let m = toy(103);
        let (train, val, test) = m.split_three().unwrap();
        assert_eq!(
            train.entries.len() + val.entries.len() + test.entries.len(),
            103
        );
        let mut all: Vec<&ManifestEntry> = train
            .entries
            .iter()
            .chain(&val.entries)
            .chain(&test.entries)
            .collect();
        all.sort_by_key(|e| e.cover.clone());
        let mut orig: Vec<&ManifestEntry> = m.entries.iter().collect();
        orig.sort_by_key(|e| e.cover.clone());
        assert_eq!(all, orig); // exhaustive, disjoint, and each pair intact
    }

    #[test]
    fn seeds_change_the_partition_deterministically() {
        let mut a = toy(10);
        a.split = (0.8, 0.2, 0.0);
        let mut b = a.clone();
        b.split_seed = 2;
        let (ta, va, _) = a.split_three().unwrap();
        let (tb, vb, _) = b.split_three().unwrap();
        assert_eq!(ta.entries.len(), 8);
        assert_eq!(va.entries.len(), 2);
        assert_ne!((ta.entries, va.entries), (tb.entries.clone(), vb.entries.clone()));
        let (ta2, va2, _) = a.split_three().unwrap();
        let (tb2, vb2, _) = b.split_three().unwrap();
        assert_eq!((tb.entries, vb.entries), (tb2.entries, vb2.entries));
        let _ = (ta2, va2);
    }

    #[test]
    fn bad_fractions_and_empty_are_rejected() {
        let mut m = toy(5);
        m.split = (0.5, 0.2, 0.5);
        assert!(matches!(m.split_three(), Err(ManifestError::BadFractions(..))));
        let mut empty = toy(0);
        empty.split = (0.4, 0.1, 0.5);
        assert!(matches!(empty.split_three(), Err(ManifestError::Empty)));
    }

    #[test]
    fn file_round_trip_and_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.tsv");
        let m = toy(4);
        m.write(&path).unwrap();
        let back = DatasetManifest::read(&path, m.split_seed, m.split).unwrap();
        assert_eq!(back, m);

        std::fs::write(&path, "only_one_field\n").unwrap();
        assert!(matches!(
            DatasetManifest::read(&path, 0, (0.4, 0.1, 0.5)),
            Err(ManifestError::BadLine { line: 1, got: 1 })
        ));
    }

    #[test]
    fn fingerprint_tracks_order_and_content() {
        let m = toy(6);
        let mut swapped = m.clone();
        swapped.entries.swap(0, 1);
        assert_ne!(m.fingerprint(), swapped.fingerprint());
        assert_eq!(m.fingerprint(), toy(6).fingerprint());
    }
}
