use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    n: usize,
    m: usize,
    domains: Vec<usize>,
    provenance: String,
    layout: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Writes column-major little-endian `u32` values to `path` and the
/// manifest to `path` + `.json`.
pub fn write_cache(ds: &Dataset, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(ds.n() * ds.m() * 4);
    for col in &ds.columns {
        for &v in col {
            let v = u32::try_from(v).map_err(|_| Error::InputDomain(format!("{v} exceeds u32")))?;
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = Sidecar {
        n: ds.n(),
        m: ds.m(),
        domains: ds.domains.clone(),
        provenance: ds.provenance.clone(),
        layout: "column-major u32le".into(),
    };
    let sp = sidecar_path(path);
    fs::write(&sp, serde_json::to_vec_pretty(&side)?).map_err(|e| Error::io(&sp, e))
}

pub fn read_cache(path: &Path) -> Result<Dataset> {
    let sp = sidecar_path(path);
    let side: Sidecar = serde_json::from_slice(&fs::read(&sp).map_err(|e| Error::io(&sp, e))?)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != side.n * side.m * 4 {
        return Err(Error::Ragged {
            expected: side.n * side.m * 4,
            found: bytes.len(),
            index: 0,
        });
    }
    let columns = bytes
        .chunks_exact(side.n * 4)
        .map(|col| {
            col.chunks_exact(4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
                .collect()
        })
        .collect();
    Dataset::new(side.domains, columns, side.provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ds.bin");
        let ds = Dataset::new(vec![4, 9], vec![vec![1, 4, 2], vec![9, 1, 5]], "t".into()).unwrap();
        write_cache(&ds, &p).unwrap();
        assert_eq!(read_cache(&p).unwrap(), ds);
        assert!(read_cache(&dir.path().join("missing")).is_err());
    }
}
