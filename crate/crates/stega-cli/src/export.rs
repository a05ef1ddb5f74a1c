//! Artifact exports: raw score planes, heatmap previews, and the CSVs
//! behind the loss/accuracy figures.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use stega_core::anomaly::{AnomalyScoreMap, Group1Slot};
use stega_core::fusion::GridPoint;
use stega_core::image::GrayImage;
use stega_core::model::GsModel;
use stega_core::spots::SpotList;

use crate::pgm;

/// Raw plane: u32 LE width, u32 LE height, then row-major f32 LE scores.
pub fn encode_score_plane(map: &AnomalyScoreMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + map.scores.len() * 4);
    out.extend_from_slice(&(map.width as u32).to_le_bytes());
    out.extend_from_slice(&(map.height as u32).to_le_bytes());
    for &s in &map.scores {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    out
}

pub fn write_score_plane(path: &Path, map: &AnomalyScoreMap) -> io::Result<()> {
    fs::write(path, encode_score_plane(map))
}

/// PGM preview with scores scaled onto 0..=255.
pub fn write_heatmap(path: &Path, map: &AnomalyScoreMap) -> Result<(), pgm::PgmError> {
    let pixels = map
        .scores
        .iter()
        .map(|&s| (s.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    pgm::write_pgm(
        path,
        &GrayImage {
            width: map.width,
            height: map.height,
            pixels,
        },
    )
}

pub fn spot_csv(spots: &SpotList) -> String {
    let mut s = String::from("row,col,group_id,spot_score,anomaly_score\n");
    for spot in spots {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            spot.row, spot.col, spot.group_id, spot.spot_score, spot.center_anomaly_score
        );
    }
    s
}

pub fn write_spot_csv(path: &Path, spots: &SpotList) -> io::Result<()> {
    fs::write(path, spot_csv(spots))
}

pub fn m_curve_csv(curve: &[GridPoint]) -> String {
    let mut s = String::from("m,accuracy\n");
    for p in curve {
        let _ = writeln!(s, "{},{}", p.m, p.accuracy);
    }
    s
}

pub fn write_m_curve_csv(path: &Path, curve: &[GridPoint]) -> io::Result<()> {
    fs::write(path, m_curve_csv(curve))
}

/// Per-group, per-feature selection losses of the trained groups.
pub fn dft_loss_csv(model: &GsModel) -> String {
    let mut s = String::from("group,feature,loss,selected\n");
    for (g, slot) in model.group1.iter().enumerate() {
        if let Group1Slot::Trained(m) = slot {
            for (feature, &loss) in m.dft_losses.iter().enumerate() {
                let picked = m.selected.contains(&feature) as u8;
                let _ = writeln!(s, "{g},{feature},{loss},{picked}");
            }
        }
    }
    s
}

pub fn write_dft_loss_csv(path: &Path, model: &GsModel) -> io::Result<()> {
    fs::write(path, dft_loss_csv(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use stega_core::spots::Spot;

    fn tiny_map() -> AnomalyScoreMap {
        AnomalyScoreMap {
            width: 2,
            height: 2,
            scores: vec![0.0, 0.25, 0.5, 1.0],
            groups: vec![0, 1, 2, 3],
        }
    }

    #[test]
    fn score_plane_layout_is_exact() {
        let bytes = encode_score_plane(&tiny_map());
        assert_eq!(&bytes[..4], &2u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &0.0f32.to_le_bytes());
        assert_eq!(&bytes[12..16], &0.25f32.to_le_bytes());
        assert_eq!(bytes.len(), 8 + 4 * 4);
    }

    #[test]
    fn heatmap_scales_scores() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("heat.pgm");
        write_heatmap(&path, &tiny_map()).unwrap();
        let img = pgm::read_pgm(&path).unwrap();
        assert_eq!(img.pixels, vec![0, 64, 128, 255]);
    }

    #[test]
    fn csv_bodies_match_expectations() {
        let spots = vec![Spot {
            row: 3,
            col: 4,
            group_id: 2,
            spot_score: 0.75,
            center_anomaly_score: 0.5,
        }];
        assert_eq!(
            spot_csv(&spots),
            "row,col,group_id,spot_score,anomaly_score\n3,4,2,0.75,0.5\n"
        );
        let curve = vec![
            GridPoint { m: 5, accuracy: 1.0 },
            GridPoint { m: 10, accuracy: 0.875 },
        ];
        assert_eq!(m_curve_csv(&curve), "m,accuracy\n5,1\n10,0.875\n");
    }
}
