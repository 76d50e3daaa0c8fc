//! Versioned model container: a JSON header followed by parameter blobs.
//!
//! Layout: `DFCK`, format version (u32 LE), header length (u32 LE), header
//! JSON, then for each named store its name length (u32 LE), name and the
//! store's own binary encoding.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use defilter_nn::ParamStore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DFCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header<M> {
    kind: String,
    format_version: u32,
    meta: M,
    stores: Vec<String>,
}

/// Writes `meta` and `stores` to `path` via a temporary file and rename.
pub fn save<M: Serialize>(
    path: &Path,
    kind: &str,
    meta: &M,
    stores: &[(&str, &ParamStore<f32>)],
) -> Result<()> {
    let header = Header {
        kind: kind.to_string(),
        format_version: FORMAT_VERSION,
        meta,
        stores: stores.iter().map(|(n, _)| n.to_string()).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::json("checkpoint header", e))?;
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(&tmp)?);
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u32).to_le_bytes())?;
        out.write_all(&json)?;
        for (name, store) in stores {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            store.write_to(&mut out).map_err(std::io::Error::other)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub struct Loaded<M> {
    pub meta: M,
    pub stores: Vec<(String, ParamStore<f32>)>,
}

impl<M> Loaded<M> {
    pub fn take(&mut self, name: &str) -> Result<ParamStore<f32>> {
        let i = self
            .stores
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("no parameter set `{name}`")))?;
        Ok(self.stores.remove(i).1)
    }
}

pub fn load<M: DeserializeOwned>(path: &Path, kind: &str) -> Result<Loaded<M>> {
    let mut input = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));
    let mut word = [0u8; 4];
    input.read_exact(&mut word).map_err(|e| Error::io(path, e))?;
    if &word != MAGIC {
        return Err(bad("not a checkpoint".into()));
    }
    let read_u32 = |input: &mut BufReader<File>| -> Result<u32> {
        let mut b = [0u8; 4];
        input.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
        Ok(u32::from_le_bytes(b))
    };
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    let len = read_u32(&mut input)? as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json).map_err(|e| Error::io(path, e))?;
    let header: Header<M> = serde_json::from_slice(&json).map_err(|e| Error::json("checkpoint header", e))?;
    if header.kind != kind {
        return Err(bad(format!("holds a {} model, expected {kind}", header.kind)));
    }
    let mut stores = Vec::new();
    for expected in &header.stores {
        let n = read_u32(&mut input)? as usize;
        let mut name = vec![0u8; n];
        input.read_exact(&mut name).map_err(|e| Error::io(path, e))?;
        if name != expected.as_bytes() {
            return Err(bad("parameter set names disagree with the header".into()));
        }
        stores.push((expected.clone(), ParamStore::read_from(&mut input)?));
    }
    Ok(Loaded {
        meta: header.meta,
        stores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use defilter_nn::Tensor;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut a = ParamStore::<f32>::new();
        a.add("w", Tensor::new(&[2], vec![1.5, -2.0]).unwrap()).unwrap();
        save(&path, "toy", &vec![3u32, 4], &[("a", &a)]).unwrap();
        let mut got = load::<Vec<u32>>(&path, "toy").unwrap();
        assert_eq!(got.meta, vec![3, 4]);
        let b = got.take("a").unwrap();
        assert_eq!(b.get(b.id("w").unwrap()).data(), &[1.5, -2.0]);
        assert!(matches!(load::<Vec<u32>>(&path, "other"), Err(Error::Checkpoint(_))));
    }
}
