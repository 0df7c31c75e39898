//! Stage-wise separation test: mean predicted vote share of each model on
//! fresh random maps and on curated user maps.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{experiment_epoch, ExperimentError, ExperimentReport};
use crate::apm::{build_apm, load_latest, ApmError, ApmModel};
use crate::corpus::random_map;
use crate::tilemap::TileMap;
use crate::util::{derive_seed, mean};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidateConfig {
    pub random_maps: usize,
    pub seed: u64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig { random_maps: 50, seed: 0 }
    }
}

/// A named set of per-tileset models, e.g. one checkpoint root.
#[derive(Debug, Clone)]
pub struct ValidationStage {
    pub name: String,
    pub models: BTreeMap<String, ApmModel>,
}

impl ValidationStage {
    /// Freshly initialised models.
    pub fn untrained<'a>(name: &str, tilesets: impl IntoIterator<Item = &'a str>, seed: u64) -> Self {
        ValidationStage {
            name: name.to_string(),
            models: tilesets
                .into_iter()
                .map(|t| (t.to_string(), build_apm(t, seed)))
                .collect(),
        }
    }

    /// Latest checkpoint of every tileset under `root`.
    pub fn load<'a>(name: &str, root: &Path, tilesets: impl IntoIterator<Item = &'a str>) -> Result<Self, ExperimentError> {
        let mut models = BTreeMap::new();
        for t in tilesets {
            let model = load_latest(root, t).map_err(|e| match e {
                ApmError::MissingCheckpoint(p) => ExperimentError::MissingCheckpoint(p),
                other => other.into(),
            })?;
            models.insert(t.to_string(), model);
        }
        Ok(ValidationStage {
            name: name.to_string(),
            models,
        })
    }
}

/// `n` uniformly random maps for a tileset, reproducible from `seed`.
pub fn random_eval_maps(tileset_id: &str, n: usize, seed: u64) -> Vec<TileMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| random_map(tileset_id, &format!("eval-random-{i}"), experiment_epoch(), &mut rng))
        .collect()
}

/// Mean APM score over `maps`.
pub fn mean_score(model: &ApmModel, maps: &[TileMap]) -> Result<Option<f64>, ExperimentError> {
    let scores = maps.iter().map(|m| model.score_map(m)).collect::<Result<Vec<_>, _>>()?;
    Ok(mean(&scores))
}

/// Rows (stage, tileset) with columns `random` and `user`. The random set is
/// regenerated per tileset from `cfg.seed`, identically for every stage.
pub fn validate(
    stages: &[ValidationStage],
    curated: &BTreeMap<String, Vec<TileMap>>,
    cfg: &ValidateConfig,
) -> Result<ExperimentReport, ExperimentError> {
    let started = Instant::now();
    let mut report = ExperimentReport::new(
        "validate",
        cfg.seed,
        serde_json::json!({
            "validate": cfg,
            "stages": stages.iter().map(|s| &s.name).collect::<Vec<_>>(),
            "curated_maps": curated.iter().map(|(k, v)| (k.clone(), v.len())).collect::<BTreeMap<_, _>>(),
        }),
        &["stage", "tileset"],
        &["random", "user"],
    );
    for stage in stages {
        for (tileset, model) in &stage.models {
            let random = random_eval_maps(tileset, cfg.random_maps, derive_seed(cfg.seed, tileset_tag(tileset)));
            let r = mean_score(model, &random)?;
            let u = match curated.get(tileset) {
                Some(maps) => mean_score(model, maps)?,
                None => None,
            };
            report.push(&[&stage.name, tileset], vec![r, u]);
        }
    }
    report.runtime_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

fn tileset_tag(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn untrained_rows_near_half() {
        let stage = ValidationStage::untrained("untrained", ["maze", "crew"], 4);
        let report = validate(&[stage], &BTreeMap::new(), &ValidateConfig { random_maps: 10, seed: 1 }).unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            let r = row.values[0].unwrap();
            assert!((r - 0.5).abs() < 0.1, "{r}");
            assert_eq!(row.values[1], None);
        }
    }

    #[test]
    fn random_eval_set_is_seeded() {
        assert_eq!(random_eval_maps("maze", 5, 9), random_eval_maps("maze", 5, 9));
        assert_ne!(random_eval_maps("maze", 5, 9), random_eval_maps("maze", 5, 10));
    }
}
