//! Little-endian binary arrays and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn check_len(path: &Path, bytes: &[u8], width: usize, expected: Option<usize>) -> Result<usize> {
    if !bytes.len().is_multiple_of(width) {
        return Err(Error::format(
            file_name(path),
            format!("byte {}", bytes.len() - bytes.len() % width),
            format!("trailing partial {width}-byte record"),
        ));
    }
    let count = bytes.len() / width;
    if let Some(want) = expected {
        if count != want {
            return Err(Error::format(
                file_name(path),
                format!("byte {}", bytes.len().min(want * width)),
                format!("expected {want} records ({} bytes), found {count}", want * width),
            ));
        }
    }
    Ok(count)
}

pub fn read_u64s(path: &Path, expected: Option<usize>) -> Result<Vec<u64>> {
    let bytes = read_file(path)?;
    check_len(path, &bytes, 8, expected)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_u32s(path: &Path, expected: Option<usize>) -> Result<Vec<u32>> {
    let bytes = read_file(path)?;
    check_len(path, &bytes, 4, expected)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_f32s(path: &Path, expected: Option<usize>) -> Result<Vec<f32>> {
    let bytes = read_file(path)?;
    check_len(path, &bytes, 4, expected)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_flags(path: &Path, expected: usize) -> Result<Vec<bool>> {
    let bytes = read_file(path)?;
    check_len(path, &bytes, 1, Some(expected))?;
    bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::format(
                file_name(path),
                format!("byte {i}"),
                format!("flag value {b}, expected 0 or 1"),
            )),
        })
        .collect()
}

pub fn u64_bytes(values: &[u64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn u32_bytes(values: &[u32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn flag_bytes(values: &[bool]) -> Vec<u8> {
    values.iter().map(|&b| b as u8).collect()
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp.{}", std::process::id()))
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = temp_sibling(path);
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(contents)
        .and_then(|_| file.sync_all())
        .map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Populates a fresh directory through `fill`, then swaps it into place.
pub fn write_dir_atomic(dir: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = temp_sibling(dir);
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir(&tmp).map_err(|e| Error::io(&tmp, e))?;
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dir.exists() {
        let old = dir.with_file_name(format!(
            ".{}.old.{}",
            dir.file_name().unwrap_or_default().to_string_lossy(),
            std::process::id()
        ));
        fs::rename(dir, &old).map_err(|e| Error::io(dir, e))?;
        fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
        fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    } else {
        fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Plain write used inside a directory that is already being built atomically.
pub(crate) fn write_plain(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
