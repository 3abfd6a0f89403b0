use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quarter::Quarter;

/// One row of a scene manifest: `tile_id,quarter,scene_path`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRow {
    pub tile_id: String,
    pub quarter: Quarter,
    pub scene_path: PathBuf,
}

/// Read a scene manifest. Relative paths resolve against its directory.
pub fn read_scene_manifest(path: impl AsRef<Path>) -> Result<Vec<SceneRow>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let mut row: SceneRow = rec.map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        row.scene_path = base.join(&row.scene_path);
        rows.push(row);
    }
    Ok(rows)
}

/// Group scene paths by (tile, quarter); paths keep manifest order.
pub fn group_scenes(rows: &[SceneRow]) -> BTreeMap<(String, Quarter), Vec<PathBuf>> {
    let mut m: BTreeMap<(String, Quarter), Vec<PathBuf>> = BTreeMap::new();
    for r in rows {
        m.entry((r.tile_id.clone(), r.quarter)).or_default().push(r.scene_path.clone());
    }
    m
}
