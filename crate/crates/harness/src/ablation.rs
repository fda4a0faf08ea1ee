//! Cumulative augmentation ablation: retrain the same configuration seven
//! times, switching on one augmentation per row, and evaluate each run on
//! the held-out split. Row order is fixed; all rows share the base config's
//! seed so differences come from the augmentation set alone.

use std::path::Path;

use skyhook_scenegen::AugOp;

use crate::config::TrainConfig;
use crate::eval::{evaluate_on, write_csv, MetricRow};
use crate::train::train;
use crate::Result;
use skyhook_scenegen::Split;

/// The seven cumulative rows: a label and the augmentation set it enables.
pub fn ablation_rows() -> Vec<(&'static str, Vec<AugOp>)> {
    let mut rows = vec![("none", Vec::new())];
    let labels = [
        "+colour",
        "+scale",
        "+mirror",
        "+blur",
        "+rotate",
        "+synthetic_scenes",
    ];
    for (i, label) in labels.iter().enumerate() {
        rows.push((*label, AugOp::ALL[..=i].to_vec()));
    }
    rows
}

/// Run the full ablation. Each row trains from scratch with the base
/// config's seed and hyperparameters, differing only in augmentations.
/// Writes a CSV when `out_csv` is given.
pub fn ablate(base: &TrainConfig, data_dir: &Path, out_csv: Option<&Path>) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::with_capacity(7);
    for (label, ops) in ablation_rows() {
        let cfg = TrainConfig {
            augment: ops,
            ..base.clone()
        };
        let out = train(&cfg, data_dir)?;
        log::info!("ablation row `{label}` trained, evaluating");
        let row = evaluate_on(&out.model, data_dir, Split::Test, label)?;
        rows.push(row);
    }
    if let Some(path) = out_csv {
        write_csv(&rows, path)?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use skyhook_scenegen::{build_all, DatasetSpec};

    #[test]
    fn row_structure_is_the_cumulative_ladder() {
        let rows = ablation_rows();
        assert_eq!(rows.len(), 7);
        assert_eq!(rows[0], ("none", vec![]));
        assert_eq!(rows[1].1, vec![AugOp::Colour]);
        assert_eq!(rows[6].1, AugOp::ALL.to_vec());
        assert_eq!(rows[6].0, "+synthetic_scenes");
        for w in rows.windows(2) {
            assert_eq!(w[0].1.len() + 1, w[1].1.len());
            assert!(w[1].1.starts_with(&w[0].1));
        }
    }

    #[test]
    fn ablate_emits_seven_labeled_rows_and_a_csv() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            detection: 2,
            tracking_seqs: 1,
            tracking_frames: 2,
            grasp_per_kind: 3,
        };
        build_all(3, dir.path(), &spec).unwrap();
        let base = TrainConfig {
            steps: 1,
            grasp_steps: 1,
            batch: 1,
            ..TrainConfig::default()
        };
        let csv = dir.path().join("ablation.csv");
        let rows = ablate(&base, dir.path(), Some(&csv)).unwrap();
        assert_eq!(rows.len(), 7);
        let labels: Vec<&str> = rows.iter().map(|r| r.config.as_str()).collect();
        assert_eq!(
            labels,
            [
                "none",
                "+colour",
                "+scale",
                "+mirror",
                "+blur",
                "+rotate",
                "+synthetic_scenes"
            ]
        );
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 8);
    }
}
