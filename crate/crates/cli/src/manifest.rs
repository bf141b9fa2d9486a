//! Dataset manifests: CSV with header
//! `image_id,task_tag,image_path,mask_path,boxes_path`. Empty cells mean
//! "absent"; relative paths resolve against the manifest's directory.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskTag {
    Det,
    Seg,
}

impl fmt::Display for TaskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskTag::Det => "det",
            TaskTag::Seg => "seg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub image_id: String,
    pub task: TaskTag,
    pub image_path: Option<PathBuf>,
    pub mask_path: Option<PathBuf>,
    pub boxes_path: Option<PathBuf>,
}

#[derive(Deserialize)]
struct Row {
    image_id: String,
    task_tag: TaskTag,
    image_path: Option<String>,
    mask_path: Option<String>,
    boxes_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub records: Vec<Record>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::data(path, e.to_string()))?;
        let resolve = |cell: Option<String>| {
            cell.filter(|s| !s.is_empty()).map(|s| {
                let p = PathBuf::from(s);
                if p.is_absolute() {
                    p
                } else {
                    base.join(p)
                }
            })
        };
        let mut records = Vec::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| CliError::data(path, format!("record {i}: {e}")))?;
            records.push(Record {
                image_id: row.image_id,
                task: row.task_tag,
                image_path: resolve(row.image_path),
                mask_path: resolve(row.mask_path),
                boxes_path: resolve(row.boxes_path),
            });
        }
        let manifest = Self { records };
        manifest.validate().map_err(|m| CliError::data(path, m))?;
        Ok(manifest)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut ids = BTreeSet::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.image_id.is_empty() {
                return Err(format!("record {i}: empty image_id"));
            }
            if !ids.insert(&r.image_id) {
                return Err(format!("record {i}: duplicate image_id {:?}", r.image_id));
            }
            match r.task {
                TaskTag::Seg if r.mask_path.is_none() => {
                    return Err(format!("record {i} ({}): seg record without mask_path", r.image_id));
                }
                TaskTag::Det if r.boxes_path.is_none() => {
                    return Err(format!("record {i} ({}): det record without boxes_path", r.image_id));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn tagged(&self, task: TaskTag) -> impl Iterator<Item = &Record> + '_ {
        self.records.iter().filter(move |r| r.task == task)
    }
}
