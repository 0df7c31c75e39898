//! Pretrains one tileset's scorer on the shipped seed corpus and reports
//! mean predicted vote share on random and curated maps before and after.
//!
//! ```text
//! cargo run --release -p aesthevo-core --example pretrain_and_validate -- [TILESET]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use aesthevo::corpus::load_map_dir;
use aesthevo::experiments::{pretrain, validate, PretrainConfig, ValidateConfig, ValidationStage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t = std::env::args().nth(1).unwrap_or_else(|| "dungeon".to_string());
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets");
    let corpus = load_map_dir(&assets.join("corpus").join(&t))?;
    let curated = load_map_dir(&assets.join("curated").join(&t))?;
    let outcome = pretrain(&t, &corpus, &PretrainConfig::default())?;
    print!("{}", outcome.report.to_table());
    let before = ValidationStage::untrained("untrained", [t.as_str()], 0);
    let after = ValidationStage {
        name: "pretrained".to_string(),
        models: BTreeMap::from([(t.clone(), outcome.model)]),
    };
    let report = validate(&[before, after], &BTreeMap::from([(t.clone(), curated)]), &ValidateConfig::default())?;
    print!("{}", report.to_table());
    Ok(())
}
