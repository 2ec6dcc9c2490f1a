//! Synthetic scenes: analytic primitives, surface sampling, a ray-cast range
//! sensor, and the files they are stored in.

mod dataset;
mod generate;
mod io;
mod primitives;
mod scan;

pub use dataset::{case_id, load_dataset, make_case, make_cases, write_dataset, DatasetConfig, StoredCase, SPECS_FILE};
pub use generate::{apply_budget, generate_scene, PointBudget, SceneCase, SceneFamily, SceneSpec};
pub use io::{
    encode_cloud, format_manifest, format_sig9, parse_manifest, parse_ply, parse_xyz, read_cloud, read_cloud_auto,
    read_manifest, write_cloud, write_manifest, CloudFormat, ManifestEntry, MANIFEST_FILE,
};
pub use primitives::{Primitive, Surface};
pub use scan::{build_case, simulate_scan, ScanSpec};
