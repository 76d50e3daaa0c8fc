//! File helpers: PNG rasters, JSON and JSON-lines, content hashes.

use std::fs;
use std::path::Path;

use image::{GrayImage, RgbImage, RgbaImage};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

pub fn save_rgb(image: &RgbImage, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    image.save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

pub fn save_rgba(image: &RgbaImage, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    image.save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

pub fn save_gray(image: &GrayImage, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    image.save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.into(),
            source,
        },
    })
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(open(path)?.into_rgb8())
}

pub fn load_rgba(path: &Path) -> Result<RgbaImage> {
    Ok(open(path)?.into_rgba8())
}

pub fn load_gray(path: &Path) -> Result<GrayImage> {
    Ok(open(path)?.into_luma8())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// One compact JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    ensure_parent(path)?;
    let mut text = String::new();
    for row in rows {
        let line =
            serde_json::to_string(row).map_err(|e| Error::json(path.display().to_string(), e))?;
        text.push_str(&line);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e))
        })
        .collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash over every file below `dir`: relative paths and contents, in sorted
/// path order. `skip` names top-level files left out of the hash.
pub fn hash_tree(dir: &Path, skip: &[&str]) -> Result<String> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        if skip.contains(&rel.as_str()) {
            continue;
        }
        let bytes = fs::read(dir.join(&rel)).map_err(|e| Error::io(dir.join(&rel), e))?;
        hasher.update((rel.len() as u64).to_le_bytes());
        hasher.update(rel.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("walked below root")
                .to_string_lossy()
                .replace('\\', "/");
            out.push(rel);
        }
    }
    Ok(())
}
