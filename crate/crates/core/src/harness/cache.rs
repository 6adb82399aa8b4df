//! On-disk matrix cache.
//!
//! One file per matrix: a JSON header line (shape, symmetry flag, key echo)
//! followed by the row-major little-endian f64 payload. Files are written to
//! a temporary name and atomically renamed, so concurrent writers of the same
//! key are safe. Keys are content hashes of the media, mesh, basis mode, and
//! velocity orders.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use faer::Mat;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assembly::SpatialSystem;
use crate::error::{Error, Result};
use crate::msfem::{BasisMode, BasisSet};

/// Content-hash fingerprint of the canonical description strings.
pub fn fingerprint(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    name: String,
    rows: usize,
    cols: usize,
    symmetric: bool,
    key: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleManifest {
    key: String,
    dim: usize,
    basis_mode: String,
    matrices: Vec<String>,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct MatrixCache {
    dir: PathBuf,
}

impl MatrixCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(MatrixCache { dir })
    }

    fn entry_path(&self, key: &str, name: &str) -> PathBuf {
        self.dir.join(format!("{key}-{name}.mtx"))
    }

    fn manifest_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}-manifest.json"))
    }

    /// Atomically write `write` to `path` via a unique temporary file.
    fn atomic_write(&self, path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let tmp = self.dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut writer = BufWriter::new(file);
        write(&mut writer)
            .and_then(|_| writer.flush())
            .map_err(|e| Error::io(&tmp, e))?;
        drop(writer);
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn store_matrix(&self, key: &str, name: &str, mat: &Mat<f64>, symmetric: bool) -> Result<()> {
        let header = Header {
            name: name.to_string(),
            rows: mat.nrows(),
            cols: mat.ncols(),
            symmetric,
            key: key.to_string(),
        };
        let path = self.entry_path(key, name);
        self.atomic_write(&path, |w| {
            serde_json::to_writer(&mut *w, &header)?;
            w.write_all(b"\n")?;
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    w.write_all(&mat[(i, j)].to_le_bytes())?;
                }
            }
            Ok(())
        })
    }

    pub fn load_matrix(&self, key: &str, name: &str) -> Result<Option<Mat<f64>>> {
        let path = self.entry_path(key, name);
        if !path.exists() {
            return Ok(None);
        }
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut reader = BufReader::new(file);
        let mut header_bytes = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            reader.read_exact(&mut byte).map_err(|e| Error::io(&path, e))?;
            if byte[0] == b'\n' {
                break;
            }
            header_bytes.push(byte[0]);
        }
        let header: Header = serde_json::from_slice(&header_bytes)
            .map_err(|e| Error::Config(format!("corrupt cache header in {}: {e}", path.display())))?;
        if header.key != key || header.name != name {
            return Ok(None);
        }
        let mut payload = vec![0u8; header.rows * header.cols * 8];
        reader
            .read_exact(&mut payload)
            .map_err(|e| Error::io(&path, e))?;
        let mat = Mat::<f64>::from_fn(header.rows, header.cols, |i, j| {
            let off = (i * header.cols + j) * 8;
            f64::from_le_bytes(payload[off..off + 8].try_into().unwrap())
        });
        Ok(Some(mat))
    }

    /// Persist a spatial system plus (optionally) the basis that produced it.
    pub fn store_spatial(
        &self,
        key: &str,
        sys: &SpatialSystem,
        basis: Option<&BasisSet>,
    ) -> Result<()> {
        let mut names = Vec::new();
        let mut store = |name: &str, mat: &Mat<f64>, symmetric: bool| -> Result<()> {
            names.push(name.to_string());
            self.store_matrix(key, name, mat, symmetric)
        };
        store("mass", &sys.mass, true)?;
        store("grad_x", &sys.grad_x, false)?;
        store("media_grad_x", &sys.media_grad_x, false)?;
        store("stiffness", &sys.stiffness, true)?;
        if let Some(m) = &sys.grad_y {
            store("grad_y", m, false)?;
        }
        if let Some(m) = &sys.media_grad_y {
            store("media_grad_y", m, false)?;
        }
        if let Some(m) = &sys.media_mass {
            store("media_mass", m, true)?;
        }
        if let Some(m) = &sys.inv_media_mass {
            store("inv_media_mass", m, true)?;
        }
        if let Some(basis) = basis {
            let (rows, cols, flat) = basis.to_flat();
            let mat = Mat::<f64>::from_fn(rows, cols, |i, j| flat[i * cols + j]);
            store("basis", &mat, false)?;
        }
        let manifest = BundleManifest {
            key: key.to_string(),
            dim: sys.dim,
            basis_mode: sys.basis_mode.tag().to_string(),
            matrices: names,
        };
        self.atomic_write(&self.manifest_path(key), |w| {
            serde_json::to_writer(&mut *w, &manifest)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    /// Load a previously stored spatial system; `None` on any missing piece.
    pub fn load_spatial(&self, key: &str) -> Result<Option<(SpatialSystem, Option<BasisSet>)>> {
        let path = self.manifest_path(key);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BundleManifest = serde_json::from_str(text.trim())
            .map_err(|e| Error::Config(format!("corrupt cache manifest {}: {e}", path.display())))?;
        if manifest.key != key {
            return Ok(None);
        }
        let load = |name: &str| -> Result<Option<Mat<f64>>> {
            if manifest.matrices.iter().any(|n| n == name) {
                self.load_matrix(key, name)
            } else {
                Ok(None)
            }
        };
        let (Some(mass), Some(grad_x), Some(media_grad_x), Some(stiffness)) = (
            load("mass")?,
            load("grad_x")?,
            load("media_grad_x")?,
            load("stiffness")?,
        ) else {
            return Ok(None);
        };
        let basis_mode = if manifest.basis_mode == "multiscale" {
            BasisMode::Multiscale
        } else {
            BasisMode::Affine
        };
        let sys = SpatialSystem {
            dim: manifest.dim,
            basis_mode,
            mass,
            grad_x,
            grad_y: load("grad_y")?,
            media_grad_x,
            media_grad_y: load("media_grad_y")?,
            stiffness,
            media_mass: load("media_mass")?,
            inv_media_mass: load("inv_media_mass")?,
        };
        let basis = match load("basis")? {
            Some(mat) => {
                let (rows, cols) = (mat.nrows(), mat.ncols());
                let mut flat = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    for j in 0..cols {
                        flat.push(mat[(i, j)]);
                    }
                }
                Some(BasisSet::from_flat(basis_mode, manifest.dim, rows, cols, flat)?)
            }
            None => None,
        };
        Ok(Some((sys, basis)))
    }
}
