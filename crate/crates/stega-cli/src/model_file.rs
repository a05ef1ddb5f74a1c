//! Versioned binary model container.
//!
//! Layout: magic `GSMD`, little-endian u32 format version, then five
//! length-prefixed sections in fixed order (meta, group spec, module-1
//! groups, module-2 groups, fusion). All floats are 64-bit little-endian;
//! trees are stored in preorder. A version mismatch is a hard error.

use std::fs;
use std::path::Path;

use stega_core::anomaly::{Group1Model, Group1Slot, GroupSpec, Round2Slot, SCORE_BINS};
use stega_core::cost::Scheme;
use stega_core::fusion::FusionModel;
use stega_core::gbdt::{GbdtConfig, GbdtModel, TreeNode};
use stega_core::model::{GsModel, Preprocessing, Provenance, FORMAT_VERSION};
use stega_core::saab::{SaabBank, SaabTriple};
use stega_core::spots::{Group2Model, Group2Slot, MatchedFilter};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"GSMD";

/// Guard against unbounded recursion on corrupt tree payloads.
const MAX_TREE_DEPTH: usize = 64;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("model format version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    Corrupt(&'static str),
}

// ---- writing ----------------------------------------------------------

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }
    fn bytes(&mut self, vs: &[u8]) {
        self.u64(vs.len() as u64);
        self.buf.extend_from_slice(vs);
    }
}

fn write_tree(w: &mut Writer, node: &TreeNode) {
    match node {
        TreeNode::Leaf { score } => {
            w.u8(0);
            w.f64(*score);
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            w.u8(1);
            w.u32(*feature);
            w.f64(*threshold);
            write_tree(w, left);
            write_tree(w, right);
        }
    }
}

fn write_gbdt(w: &mut Writer, m: &GbdtModel) {
    w.f64(m.base_score);
    w.f64(m.learning_rate);
    w.u64(m.feature_dim as u64);
    w.u64(m.max_depth as u64);
    w.u64(m.trees.len() as u64);
    for t in &m.trees {
        write_tree(w, t);
    }
}

fn write_bank(w: &mut Writer, b: &SaabBank) {
    w.u32(b.kernel_size as u32);
    w.f64s(&b.kernels);
    w.f64s(&b.eigenvalues);
}

fn write_group1(w: &mut Writer, m: &Group1Model) {
    for bank in &m.saab.banks {
        write_bank(w, bank);
    }
    w.u64(m.selected.len() as u64);
    for &idx in &m.selected {
        w.u32(idx as u32);
    }
    w.f64s(&m.dft_losses);
    write_gbdt(w, &m.round1);
    w.u64(m.round2.len() as u64);
    for slot in &m.round2 {
        match slot {
            Round2Slot::ReuseRound1 => w.u8(0),
            Round2Slot::Trained(g) => {
                w.u8(1);
                write_gbdt(w, g);
            }
        }
    }
}

fn write_group2(w: &mut Writer, m: &Group2Model) {
    w.u8(m.group_id);
    w.u8(m.filter.group_id);
    for &t in &m.filter.taps {
        w.f64(t);
    }
    write_gbdt(w, &m.classifier);
    w.f64(m.threshold);
}

fn section(out: &mut Vec<u8>, body: Writer) {
    out.extend_from_slice(&(body.buf.len() as u64).to_le_bytes());
    out.extend_from_slice(&body.buf);
}

pub fn serialize_model(model: &GsModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&model.format_version.to_le_bytes());

    // meta
    let mut w = Writer::new();
    w.u8(match model.preprocessing {
        Preprocessing::None => 0,
        Preprocessing::HalfSize => 1,
    });
    w.u8(match model.scheme {
        Scheme::Hill => 0,
        Scheme::Suniward => 1,
    });
    w.u64(model.gbdt_config.n_trees as u64);
    w.u64(model.gbdt_config.max_depth as u64);
    w.f64(model.gbdt_config.learning_rate);
    w.f64(model.gbdt_config.lambda);
    w.u64(model.gbdt_config.seed);
    w.u64(model.provenance.seed);
    w.u64(model.provenance.dataset_fingerprint);
    w.bytes(model.provenance.config_snapshot.as_bytes());
    section(&mut out, w);

    // group spec
    let mut w = Writer::new();
    w.u64(model.group_spec.group_count as u64);
    w.u64(model.group_spec.cost_window as u64);
    w.f64s(&model.group_spec.boundaries);
    section(&mut out, w);

    // module 1
    let mut w = Writer::new();
    w.u64(model.group1.len() as u64);
    for slot in &model.group1 {
        match slot {
            Group1Slot::Untrainable => w.u8(0),
            Group1Slot::Trained(m) => {
                w.u8(1);
                write_group1(&mut w, m);
            }
        }
    }
    section(&mut out, w);

    // module 2
    let mut w = Writer::new();
    w.u64(model.group2.len() as u64);
    for slot in &model.group2 {
        match slot {
            Group2Slot::Disabled => w.u8(0),
            Group2Slot::Trained(m) => {
                w.u8(1);
                write_group2(&mut w, m);
            }
        }
    }
    section(&mut out, w);

    // fusion
    let mut w = Writer::new();
    w.u64(model.fusion.m_values.len() as u64);
    for &m in &model.fusion.m_values {
        w.u64(m as u64);
    }
    w.u64(model.fusion.classifiers.len() as u64);
    for c in &model.fusion.classifiers {
        write_gbdt(&mut w, c);
    }
    section(&mut out, w);

    out
}

// ---- reading ----------------------------------------------------------

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelFileError::Corrupt("unexpected end of data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize64(&mut self) -> Result<usize, ModelFileError> {
        usize::try_from(self.u64()?).map_err(|_| ModelFileError::Corrupt("count overflows usize"))
    }
    fn f64(&mut self) -> Result<f64, ModelFileError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    /// Length-checked element count: each element needs at least
    /// `min_bytes` more bytes, which rules out absurd counts early.
    fn count(&mut self, min_bytes: usize) -> Result<usize, ModelFileError> {
        let n = self.usize64()?;
        if n.saturating_mul(min_bytes) > self.bytes.len() - self.pos {
            return Err(ModelFileError::Corrupt("count exceeds remaining data"));
        }
        Ok(n)
    }
    fn f64s(&mut self) -> Result<Vec<f64>, ModelFileError> {
        let n = self.count(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn read_tree(r: &mut Reader, depth: usize) -> Result<TreeNode, ModelFileError> {
    if depth > MAX_TREE_DEPTH {
        return Err(ModelFileError::Corrupt("tree deeper than the format allows"));
    }
    match r.u8()? {
        0 => Ok(TreeNode::Leaf { score: r.f64()? }),
        1 => {
            let feature = r.u32()?;
            let threshold = r.f64()?;
            let left = Box::new(read_tree(r, depth + 1)?);
            let right = Box::new(read_tree(r, depth + 1)?);
            Ok(TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            })
        }
        _ => Err(ModelFileError::Corrupt("unknown tree node tag")),
    }
}

fn read_gbdt(r: &mut Reader) -> Result<GbdtModel, ModelFileError> {
    let base_score = r.f64()?;
    let learning_rate = r.f64()?;
    let feature_dim = r.usize64()?;
    let max_depth = r.usize64()?;
    let n = r.count(9)?; // leaf-only tree = tag + f64
    let trees = (0..n)
        .map(|_| read_tree(r, 0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GbdtModel {
        trees,
        learning_rate,
        base_score,
        feature_dim,
        max_depth,
    })
}

fn read_bank(r: &mut Reader) -> Result<SaabBank, ModelFileError> {
    let kernel_size = r.u32()? as usize;
    if !matches!(kernel_size, 3 | 5 | 7) {
        return Err(ModelFileError::Corrupt("bank kernel size not in {3,5,7}"));
    }
    let kernels = r.f64s()?;
    let eigenvalues = r.f64s()?;
    let d = kernel_size * kernel_size;
    if kernels.len() != d * d || eigenvalues.len() != d - 1 {
        return Err(ModelFileError::Corrupt("bank shape inconsistent"));
    }
    Ok(SaabBank {
        kernel_size,
        kernels,
        eigenvalues,
    })
}

fn read_group1(r: &mut Reader) -> Result<Group1Model, ModelFileError> {
    let banks = [read_bank(r)?, read_bank(r)?, read_bank(r)?];
    let n = r.count(4)?;
    let selected = (0..n)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let dft_losses = r.f64s()?;
    let round1 = read_gbdt(r)?;
    let slots = r.count(1)?;
    if slots != SCORE_BINS {
        return Err(ModelFileError::Corrupt("round-2 slot count"));
    }
    let mut round2 = Vec::with_capacity(slots);
    for _ in 0..slots {
        round2.push(match r.u8()? {
            0 => Round2Slot::ReuseRound1,
            1 => Round2Slot::Trained(read_gbdt(r)?),
            _ => return Err(ModelFileError::Corrupt("unknown round-2 tag")),
        });
    }
    Ok(Group1Model {
        saab: SaabTriple { banks },
        selected,
        dft_losses,
        round1,
        round2,
    })
}

fn read_group2(r: &mut Reader) -> Result<Group2Model, ModelFileError> {
    let group_id = r.u8()?;
    let filter_group = r.u8()?;
    let mut taps = [0.0; 9];
    for t in &mut taps {
        *t = r.f64()?;
    }
    let classifier = read_gbdt(r)?;
    let threshold = r.f64()?;
    Ok(Group2Model {
        group_id,
        filter: MatchedFilter {
            group_id: filter_group,
            taps,
        },
        classifier,
        threshold,
    })
}

pub fn deserialize_model(bytes: &[u8]) -> Result<GsModel, ModelFileError> {
    if bytes.len() < 8 {
        return Err(ModelFileError::Corrupt("shorter than the header"));
    }
    if bytes[..4] != MAGIC {
        return Err(ModelFileError::BadMagic(bytes[..4].try_into().unwrap()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ModelFileError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let mut top = Reader {
        bytes: &bytes[8..],
        pos: 0,
    };
    let mut sections = Vec::with_capacity(5);
    for _ in 0..5 {
        let len = top.usize64()?;
        sections.push(Reader {
            bytes: top.take(len)?,
            pos: 0,
        });
    }
    if !top.done() {
        return Err(ModelFileError::Corrupt("trailing bytes after last section"));
    }
    let [mut meta, mut spec, mut g1, mut g2, mut fus] = <[Reader; 5]>::try_from(sections)
        .map_err(|_| ModelFileError::Corrupt("section count"))
        .unwrap();

    let preprocessing = match meta.u8()? {
        0 => Preprocessing::None,
        1 => Preprocessing::HalfSize,
        _ => return Err(ModelFileError::Corrupt("unknown preprocessing tag")),
    };
    let scheme = match meta.u8()? {
        0 => Scheme::Hill,
        1 => Scheme::Suniward,
        _ => return Err(ModelFileError::Corrupt("unknown scheme tag")),
    };
    let gbdt_config = GbdtConfig {
        n_trees: meta.usize64()?,
        max_depth: meta.usize64()?,
        learning_rate: meta.f64()?,
        lambda: meta.f64()?,
        seed: meta.u64()?,
    };
    let prov_seed = meta.u64()?;
    let fingerprint = meta.u64()?;
    let snap_len = meta.count(1)?;
    let config_snapshot = String::from_utf8(meta.take(snap_len)?.to_vec())
        .map_err(|_| ModelFileError::Corrupt("config snapshot is not UTF-8"))?;

    let group_count = spec.usize64()?;
    let cost_window = spec.usize64()?;
    let boundaries = spec.f64s()?;
    if group_count > 0 && boundaries.len() != group_count + 1 {
        return Err(ModelFileError::Corrupt("boundary count"));
    }
    let group_spec = GroupSpec {
        group_count,
        boundaries,
        cost_window,
    };

    let n1 = g1.count(1)?;
    let mut group1 = Vec::with_capacity(n1);
    for _ in 0..n1 {
        group1.push(match g1.u8()? {
            0 => Group1Slot::Untrainable,
            1 => Group1Slot::Trained(read_group1(&mut g1)?),
            _ => return Err(ModelFileError::Corrupt("unknown module-1 slot tag")),
        });
    }

    let n2 = g2.count(1)?;
    let mut group2 = Vec::with_capacity(n2);
    for _ in 0..n2 {
        group2.push(match g2.u8()? {
            0 => Group2Slot::Disabled,
            1 => Group2Slot::Trained(read_group2(&mut g2)?),
            _ => return Err(ModelFileError::Corrupt("unknown module-2 slot tag")),
        });
    }

    let nm = fus.count(8)?;
    let m_values = (0..nm)
        .map(|_| fus.usize64())
        .collect::<Result<Vec<_>, _>>()?;
    let nc = fus.count(1)?;
    let classifiers = (0..nc)
        .map(|_| read_gbdt(&mut fus))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(GsModel {
        format_version: version,
        preprocessing,
        scheme,
        group_spec,
        group1,
        group2,
        fusion: FusionModel {
            m_values,
            classifiers,
        },
        gbdt_config,
        provenance: Provenance {
            seed: prov_seed,
            dataset_fingerprint: fingerprint,
            config_snapshot,
        },
    })
}

pub fn save_model(path: &Path, model: &GsModel) -> Result<(), ModelFileError> {
    fs::write(path, serialize_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<GsModel, ModelFileError> {
    deserialize_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use stega_core::gbdt;

    /// Two-group model with genuinely fitted (non-trivial) trees.
    fn sample_model() -> GsModel {
        // Five-dimensional so the GBDT matches the slot's five selected
        // features below.
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..240 {
            let x = i as f64 / 240.0;
            features.extend_from_slice(&[x, 1.0 - x, x * x, 0.5, (i % 7) as f64]);
            labels.push(i % 3 != 0);
        }
        let config = GbdtConfig {
            n_trees: 12,
            ..GbdtConfig::default()
        };
        let fitted = gbdt::fit(&features, &labels, 5, &config).unwrap();
        assert!(fitted.trees.iter().any(|t| t.internal_count() > 0));

        let bank = |n: usize| SaabBank {
            kernel_size: n,
            kernels: (0..(n * n) * (n * n)).map(|i| i as f64 * 0.25).collect(),
            eigenvalues: (0..n * n - 1).map(|i| 1.0 / (i + 1) as f64).collect(),
        };
        let group1 = Group1Model {
            saab: SaabTriple {
                banks: [bank(3), bank(5), bank(7)],
            },
            selected: vec![0, 4, 9, 34, 80],
            dft_losses: (0..83).map(|i| i as f64 * 0.01).collect(),
            round1: fitted.clone(),
            round2: (0..SCORE_BINS)
                .map(|i| {
                    if i % 2 == 0 {
                        Round2Slot::Trained(fitted.clone())
                    } else {
                        Round2Slot::ReuseRound1
                    }
                })
                .collect(),
        };
        let group2 = Group2Model {
            group_id: 1,
            filter: MatchedFilter {
                group_id: 1,
                taps: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            },
            classifier: {
                let mut c = fitted.clone();
                c.feature_dim = 18;
                c
            },
            threshold: 0.37,
        };
        GsModel {
            format_version: FORMAT_VERSION,
            preprocessing: Preprocessing::HalfSize,
            scheme: Scheme::Suniward,
            group_spec: GroupSpec {
                group_count: 2,
                boundaries: vec![0.0, 1.5, f64::INFINITY],
                cost_window: 3,
            },
            group1: vec![Group1Slot::Trained(group1), Group1Slot::Untrainable],
            group2: vec![Group2Slot::Disabled, Group2Slot::Trained(group2)],
            fusion: FusionModel {
                m_values: vec![5, 10, 15, 20, 25],
                classifiers: (1..=5)
                    .map(|d| {
                        let mut c = fitted.clone();
                        c.feature_dim = d * 5;
                        c
                    })
                    .collect(),
            },
            gbdt_config: GbdtConfig::default(),
            provenance: Provenance {
                seed: 777,
                dataset_fingerprint: 0xdead_beef,
                config_snapshot: "seed=777\n".into(),
            },
        }
    }

    #[test]
    fn round_trip_preserves_the_model_exactly() {
        let model = sample_model();
        let bytes = serialize_model(&model);
        let back = deserialize_model(&bytes).unwrap();
        assert_eq!(back, model);
        // Canonical form: re-serializing yields the same bytes.
        assert_eq!(serialize_model(&back), bytes);
    }

    #[test]
    fn header_errors_are_specific() {
        let model = sample_model();
        let bytes = serialize_model(&model);

        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(
            deserialize_model(&wrong_magic),
            Err(ModelFileError::BadMagic(_))
        ));

        let mut wrong_version = bytes.clone();
        wrong_version[4] = FORMAT_VERSION as u8 + 1;
        assert!(matches!(
            deserialize_model(&wrong_version),
            Err(ModelFileError::VersionMismatch { found, expected })
                if found == FORMAT_VERSION + 1 && expected == FORMAT_VERSION
        ));

        assert!(matches!(
            deserialize_model(&bytes[..bytes.len() - 3]),
            Err(ModelFileError::Corrupt(_))
        ));
        assert!(matches!(
            deserialize_model(b"GS"),
            Err(ModelFileError::Corrupt(_))
        ));
    }

    #[test]
    fn predictions_survive_the_round_trip_bitwise() {
        let model = sample_model();
        let back = deserialize_model(&serialize_model(&model)).unwrap();
        let (Group1Slot::Trained(a), Group1Slot::Trained(b)) = (&model.group1[0], &back.group1[0])
        else {
            panic!("slot 0 should be trained");
        };
        for i in 0..100 {
            let patch: Vec<f64> = (0..49).map(|j| ((i * 49 + j) % 251) as f64).collect();
            let (a1, a2) = a.score_patch_rounds(&patch);
            let (b1, b2) = b.score_patch_rounds(&patch);
            assert!(a1 == b1 && a2 == b2);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.gsmd");
        let model = sample_model();
        save_model(&path, &model).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }
}
