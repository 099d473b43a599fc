//! On-disk cache of Gram matrices.
//!
//! Container layout (little endian): magic `BGRM`, `u32` version, 32-byte
//! SHA-256 key, `u64` size `N`, `2N²` `f64` values (row-major, re/im
//! interleaved), `u64` metadata length, metadata JSON.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::basis::{BasisDescriptor, MonomialBasis};
use crate::bergman::{assemble_matrix, GramSystem};
use crate::domain::{DomainSpec, Region};
use crate::linalg::CMatrix;
use crate::quadrature::{QuadratureMeta, QuadratureSet};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BGRM";
pub const CONTAINER_VERSION: u32 = 1;
/// Environment variable overriding the cache directory.
pub const CACHE_ENV: &str = "BERGMAN_LOCALIZE_CACHE";

#[derive(Serialize)]
struct KeyMaterial<'a> {
    format_version: u32,
    spec: &'a DomainSpec,
    region: &'a Region,
    basis: BasisDescriptor,
    quad_count: usize,
    seed: u64,
}

/// Hex SHA-256 of the canonical JSON of the inputs that determine a Gram matrix.
pub fn cache_key(spec: &DomainSpec, region: &Region, basis: &MonomialBasis, quad_count: usize, seed: u64) -> String {
    let material = KeyMaterial {
        format_version: CONTAINER_VERSION,
        spec,
        region,
        basis: basis.descriptor(),
        quad_count,
        seed,
    };
    let json = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone)]
pub struct GramCache {
    dir: PathBuf,
}

impl GramCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<GramCache> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(GramCache { dir })
    }

    /// Cache at `$BERGMAN_LOCALIZE_CACHE`, if set.
    pub fn from_env() -> Result<Option<GramCache>> {
        match std::env::var_os(CACHE_ENV) {
            Some(dir) if !dir.is_empty() => GramCache::new(PathBuf::from(dir)).map(Some),
            _ => Ok(None),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bgrm"))
    }

    /// Loads the matrix stored under `key`, if present and intact.
    pub fn load(&self, key: &str, size: usize) -> Result<Option<CMatrix>> {
        let path = self.path(key);
        let mut bytes = Vec::new();
        match fs::File::open(&path) {
            Ok(mut f) => {
                f.read_to_end(&mut bytes)?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        decode(&bytes, key, size).map(Some)
    }

    /// Writes atomically (temporary file in the cache directory, then rename).
    pub fn store(&self, key: &str, matrix: &CMatrix, meta: &QuadratureMeta) -> Result<()> {
        let bytes = encode(key, matrix, meta)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.path(key)).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }
}

fn encode(key: &str, matrix: &CMatrix, meta: &QuadratureMeta) -> Result<Vec<u8>> {
    let key_bytes = hex::decode(key).map_err(|e| Error::CacheFormat(format!("bad key: {e}")))?;
    let n = matrix.rows();
    let mut out = Vec::with_capacity(64 + 16 * n * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&key_bytes);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for v in matrix.data() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    let meta = serde_json::to_vec(meta).map_err(|e| Error::CacheFormat(e.to_string()))?;
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    Ok(out)
}

fn decode(bytes: &[u8], key: &str, size: usize) -> Result<CMatrix> {
    let bad = |what: &str| Error::CacheFormat(what.to_string());
    let mut pos = 0;
    let mut take = |k: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + k).ok_or_else(|| bad("truncated container"))?;
        pos += k;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != CONTAINER_VERSION {
        return Err(bad("unsupported container version"));
    }
    if hex::encode(take(32)?) != key {
        return Err(bad("key mismatch"));
    }
    let n = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    if n != size {
        return Err(bad("matrix size mismatch"));
    }
    let mut data = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        let re = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        let im = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        data.push(Complex64::new(re, im));
    }
    let meta_len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let meta = take(meta_len)?;
    serde_json::from_slice::<QuadratureMeta>(meta).map_err(|e| bad(&e.to_string()))?;
    Ok(CMatrix::from_vec(n, n, data))
}

/// Gram system over `quad`, reading and filling `cache` when given.
pub fn assemble_cached(
    cache: Option<&GramCache>,
    spec: &DomainSpec,
    quad: Arc<QuadratureSet>,
    basis: &MonomialBasis,
) -> Result<GramSystem> {
    let Some(cache) = cache else {
        return GramSystem::from_quadrature(spec, quad, basis);
    };
    let meta = quad.meta();
    let key = cache_key(spec, &meta.region, basis, meta.requested, meta.seed);
    let gram = match cache.load(&key, basis.len()) {
        Ok(Some(m)) => m,
        Ok(None) | Err(Error::CacheFormat(_)) => {
            let m = assemble_matrix(basis, &quad);
            cache.store(&key, &m, meta)?;
            m
        }
        Err(e) => return Err(e),
    };
    GramSystem::from_matrix(spec, quad, basis, gram)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = GramCache::new(dir.path()).unwrap();
        let spec = DomainSpec::ellipsoid(&[1.0, 1.5]).unwrap();
        let basis = MonomialBasis::new(2, 3);
        let quad = Arc::new(spec.sample_interior(&Region::Full, 20_000, 5).unwrap());
        let cold = assemble_cached(Some(&cache), &spec, quad.clone(), &basis).unwrap();
        let warm = assemble_cached(Some(&cache), &spec, quad.clone(), &basis).unwrap();
        let plain = GramSystem::from_quadrature(&spec, quad, &basis).unwrap();
        assert_eq!(cold.gram(), warm.gram());
        assert_eq!(cold.gram(), plain.gram());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn keys_separate_inputs() {
        let spec = DomainSpec::disc();
        let b = MonomialBasis::new(1, 4);
        let k1 = cache_key(&spec, &Region::Full, &b, 1000, 1);
        assert_eq!(k1, cache_key(&spec, &Region::Full, &b, 1000, 1));
        assert_ne!(k1, cache_key(&spec, &Region::Full, &b, 1000, 2));
        assert_ne!(k1, cache_key(&spec, &Region::Full, &MonomialBasis::new(1, 5), 1000, 1));
        assert_ne!(k1, cache_key(&spec.clone().with_t(0.5), &Region::Full, &b, 1000, 1));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cache = GramCache::new(dir.path()).unwrap();
        let key = cache_key(&DomainSpec::disc(), &Region::Full, &MonomialBasis::new(1, 1), 100, 1);
        fs::write(cache.path(&key), b"BGRM\x07").unwrap();
        assert!(matches!(cache.load(&key, 2), Err(Error::CacheFormat(_))));
    }
}
