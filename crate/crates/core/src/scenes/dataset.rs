//! Synthetic datasets on disk: one scene PLY and one scan PLY per case, a
//! tab-separated manifest, and a JSON file with the generator settings and
//! every case's scene layout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::{PointBudget, SceneCase, SceneFamily, SceneSpec};
use super::io::{read_cloud, read_manifest, write_cloud, write_manifest, CloudFormat, ManifestEntry};
use super::scan::{build_case, ScanSpec};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rng::derive_seed;

pub const SPECS_FILE: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub cases: usize,
    pub seed: u64,
    pub family: SceneFamily,
    pub scan: ScanSpec,
    pub budget: PointBudget,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            cases: 8,
            seed: 0,
            family: SceneFamily::default(),
            scan: ScanSpec::default(),
            budget: PointBudget::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        self.scan.validate()?;
        self.budget.validate()
    }

    pub fn case_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, index as u64)
    }
}

pub fn case_id(index: usize) -> String {
    format!("case_{index:04}")
}

/// Builds case `index` of the dataset.
pub fn make_case(config: &DatasetConfig, index: usize) -> Result<SceneCase> {
    let seed = config.case_seed(index);
    let spec = config.family.sample(seed)?;
    build_case(&spec, &config.scan, &config.budget, seed)
}

pub fn make_cases(config: &DatasetConfig) -> Result<Vec<SceneCase>> {
    config.validate()?;
    (0..config.cases).map(|i| make_case(config, i)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecsFile {
    config: DatasetConfig,
    scenes: Vec<CaseSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseSpec {
    case_id: String,
    scene: SceneSpec,
}

/// Writes every case as `<id>_scene.ply` and `<id>_scan.ply`, then the
/// manifest and the settings file. Returns the manifest rows.
pub fn write_dataset(dir: &Path, config: &DatasetConfig, cases: &[SceneCase]) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(cases.len());
    let mut scenes = Vec::with_capacity(cases.len());
    for (i, case) in cases.iter().enumerate() {
        let id = case_id(i);
        let entry = ManifestEntry {
            scene_path: PathBuf::from(format!("{id}_scene.ply")),
            scan_path: PathBuf::from(format!("{id}_scan.ply")),
            case_id: id.clone(),
            seed: case.seed,
        };
        write_cloud(&case.scene, &dir.join(&entry.scene_path), CloudFormat::PlyBinary)?;
        write_cloud(&case.scan, &dir.join(&entry.scan_path), CloudFormat::PlyBinary)?;
        scenes.push(CaseSpec {
            case_id: id,
            scene: case.spec.clone(),
        });
        entries.push(entry);
    }
    write_manifest(dir, &entries)?;
    let specs = SpecsFile {
        config: config.clone(),
        scenes,
    };
    let text = serde_json::to_string_pretty(&specs).map_err(|e| Error::invalid(e.to_string()))?;
    let path = dir.join(SPECS_FILE);
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

/// A case read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredCase {
    pub entry: ManifestEntry,
    pub scene: PointCloud,
    pub scan: PointCloud,
}

pub fn load_dataset(dir: &Path) -> Result<Vec<StoredCase>> {
    read_manifest(dir)?
        .into_iter()
        .map(|entry| {
            let scene = read_cloud(&dir.join(&entry.scene_path), CloudFormat::PlyBinary)?;
            let scan = read_cloud(&dir.join(&entry.scan_path), CloudFormat::PlyBinary)?;
            Ok(StoredCase { entry, scene, scan })
        })
        .collect()
}
