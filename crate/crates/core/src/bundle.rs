//! On-disk bundle directory.
//!
//! | file              | contents                                   |
//! |-------------------|--------------------------------------------|
//! | `meta.json`       | `num_nodes`, `num_edges`, `num_features`, `num_classes`, `format_version` |
//! | `csr_offsets.u64` | `N + 1` little-endian u64                   |
//! | `csr_targets.u32` | `M` little-endian u32                       |
//! | `features.f32`    | `N x F` row-major little-endian binary32    |
//! | `labels.u32`      | `N` little-endian u32                       |
//! | `*_mask.u8`       | `N` bytes, 0 or 1                           |

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphBundle, RawGraph};
use crate::io;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub format_version: u32,
}

pub fn load_bundle(dir: &Path) -> Result<GraphBundle> {
    let meta_path = dir.join("meta.json");
    let meta_bytes = io::read_file(&meta_path)?;
    let meta: BundleMeta = serde_json::from_slice(&meta_bytes).map_err(|e| {
        Error::format(
            "meta.json",
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::format(
            "meta.json",
            "key format_version",
            format!("unsupported version {}, expected {FORMAT_VERSION}", meta.format_version),
        ));
    }
    let n = meta.num_nodes;
    let raw = RawGraph {
        num_features: meta.num_features,
        num_classes: meta.num_classes,
        csr_offsets: io::read_u64s(&dir.join("csr_offsets.u64"), Some(n + 1))?,
        csr_targets: io::read_u32s(&dir.join("csr_targets.u32"), Some(meta.num_edges))?,
        features: io::read_f32s(&dir.join("features.f32"), Some(n * meta.num_features))?,
        labels: io::read_u32s(&dir.join("labels.u32"), Some(n))?,
        train_mask: io::read_flags(&dir.join("train_mask.u8"), n)?,
        val_mask: io::read_flags(&dir.join("val_mask.u8"), n)?,
        test_mask: io::read_flags(&dir.join("test_mask.u8"), n)?,
    };
    GraphBundle::new(raw)
}

pub fn bundle_meta(g: &GraphBundle) -> BundleMeta {
    BundleMeta {
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        num_features: g.num_features(),
        num_classes: g.num_classes(),
        format_version: FORMAT_VERSION,
    }
}

/// Writes the bundle files into an existing directory.
pub fn write_bundle_files(g: &GraphBundle, dir: &Path) -> Result<()> {
    let raw = g.raw();
    let mut meta = serde_json::to_vec_pretty(&bundle_meta(g)).expect("meta serializes");
    meta.push(b'\n');
    io::write_plain(&dir.join("meta.json"), &meta)?;
    io::write_plain(&dir.join("csr_offsets.u64"), &io::u64_bytes(&raw.csr_offsets))?;
    io::write_plain(&dir.join("csr_targets.u32"), &io::u32_bytes(&raw.csr_targets))?;
    io::write_plain(&dir.join("features.f32"), &io::f32_bytes(&raw.features))?;
    io::write_plain(&dir.join("labels.u32"), &io::u32_bytes(&raw.labels))?;
    io::write_plain(&dir.join("train_mask.u8"), &io::flag_bytes(&raw.train_mask))?;
    io::write_plain(&dir.join("val_mask.u8"), &io::flag_bytes(&raw.val_mask))?;
    io::write_plain(&dir.join("test_mask.u8"), &io::flag_bytes(&raw.test_mask))?;
    Ok(())
}

/// Writes a bundle directory atomically, replacing any previous contents.
pub fn save_bundle(g: &GraphBundle, dir: &Path) -> Result<()> {
    io::write_dir_atomic(dir, |tmp| write_bundle_files(g, tmp))
}
