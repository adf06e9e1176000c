//! On-disk cache of typical sets and panel sets.
//!
//! Entries live in the directory named by `INTERCELL_CACHE_DIR`, one file per
//! SHA-256 content key. Every file starts with a magic tag and a format
//! version; entries with another version are ignored and recomputed.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mcp::PanelSet;
use crate::typical_set::{build_typical_set, PartitionSpec, TypicalSet};

pub const CACHE_DIR_ENV: &str = "INTERCELL_CACHE_DIR";
pub const FORMAT_VERSION: u32 = 1;

const TYPICAL_MAGIC: &[u8; 4] = b"ICTS";
const PANEL_MAGIC: &[u8; 4] = b"ICPS";

/// Hex SHA-256 of a canonical description string.
pub fn content_key(description: &str) -> String {
    Sha256::digest(description.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Key of a typical set.
pub fn typical_set_key(sigma_db: f64, partition: PartitionSpec) -> String {
    content_key(&format!(
        "typical-set v{FORMAT_VERSION} sigma_dB={:016x} J={} P={}",
        sigma_db.to_bits(),
        partition.intervals,
        partition.points
    ))
}

/// Key of a panel set, from a canonical description of the run producing it.
pub fn panel_set_key(description: &str) -> String {
    content_key(&format!("panel-set v{FORMAT_VERSION} {description}"))
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    /// Cache rooted at `$INTERCELL_CACHE_DIR`, if set.
    pub fn from_env() -> Result<Option<Self>> {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::new(PathBuf::from(dir)).map(Some),
            _ => Ok(None),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bin"))
    }

    pub fn get(&self, key: &str) -> Result<Option<Vec<u8>>> {
        match fs::read(self.path(key)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes through a temporary file so readers never see partial data.
    pub fn put(&self, key: &str, blob: &[u8]) -> Result<()> {
        let tmp = self.dir.join(format!("{key}.tmp{}", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(blob)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.path(key))?;
        Ok(())
    }

    pub fn load_typical_set(
        &self,
        sigma_db: f64,
        partition: PartitionSpec,
    ) -> Result<Option<TypicalSet>> {
        let Some(bytes) = self.get(&typical_set_key(sigma_db, partition))? else {
            return Ok(None);
        };
        match decode_typical_set(&bytes) {
            Ok(set) if set.sigma_db() == sigma_db && set.partition() == partition => Ok(Some(set)),
            Ok(_) => Ok(None),
            Err(e) => {
                log::warn!("ignoring cache entry: {e}");
                Ok(None)
            }
        }
    }

    pub fn store_typical_set(&self, set: &TypicalSet) -> Result<()> {
        self.put(
            &typical_set_key(set.sigma_db(), set.partition()),
            &encode_typical_set(set),
        )
    }

    pub fn load_panel_set(&self, key: &str) -> Result<Option<PanelSet>> {
        let Some(bytes) = self.get(key)? else {
            return Ok(None);
        };
        match decode_panel_set(&bytes) {
            Ok(panel) => Ok(Some(panel)),
            Err(e) => {
                log::warn!("ignoring cache entry: {e}");
                Ok(None)
            }
        }
    }

    pub fn store_panel_set(&self, key: &str, panel: &PanelSet) -> Result<()> {
        self.put(key, &encode_panel_set(panel))
    }
}

/// Loads the typical set from `cache` or builds and stores it.
pub fn typical_set_cached(
    cache: Option<&Cache>,
    sigma_db: f64,
    partition: PartitionSpec,
) -> Result<TypicalSet> {
    if let Some(c) = cache {
        if let Some(set) = c.load_typical_set(sigma_db, partition)? {
            log::info!("typical set for sigma_dB = {sigma_db} loaded from cache");
            return Ok(set);
        }
    }
    let set = build_typical_set(sigma_db, partition)?;
    if let Some(c) = cache {
        c.store_typical_set(&set)?;
    }
    Ok(set)
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(Error::Cache("truncated entry".into()));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Cache("bad length".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::Cache("wrong magic tag".into()));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Cache(format!(
                "format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(Error::Cache("trailing bytes".into()))
        }
    }
}

fn push_header(out: &mut Vec<u8>, magic: &[u8; 4]) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Header (magic, version, J, P, σ_dB) followed by the J·P amplitudes.
pub fn encode_typical_set(set: &TypicalSet) -> Vec<u8> {
    let spec = set.partition();
    let mut out = Vec::with_capacity(32 + 8 * set.len());
    push_header(&mut out, TYPICAL_MAGIC);
    out.extend_from_slice(&(spec.intervals as u64).to_le_bytes());
    out.extend_from_slice(&(spec.points as u64).to_le_bytes());
    out.extend_from_slice(&set.sigma_db().to_le_bytes());
    push_f64s(&mut out, set.amplitudes());
    out
}

pub fn decode_typical_set(bytes: &[u8]) -> Result<TypicalSet> {
    let mut r = Reader { bytes };
    r.header(TYPICAL_MAGIC)?;
    let spec = PartitionSpec::new(r.u64()? as usize, r.u64()? as usize)?;
    let sigma_db = r.f64()?;
    let amplitudes = r.f64s(spec.len())?;
    r.finish()?;
    TypicalSet::from_parts(sigma_db, spec, amplitudes)
}

/// Header (magic, version, J, P, M) followed by block weights and
/// amplitudes.
pub fn encode_panel_set(panel: &PanelSet) -> Vec<u8> {
    let spec = panel.partition();
    let mut out = Vec::with_capacity(32 + 8 * (panel.len() + panel.block_count()));
    push_header(&mut out, PANEL_MAGIC);
    out.extend_from_slice(&(spec.intervals as u64).to_le_bytes());
    out.extend_from_slice(&(spec.points as u64).to_le_bytes());
    out.extend_from_slice(&(panel.compelled() as u64).to_le_bytes());
    push_f64s(&mut out, panel.weights());
    push_f64s(&mut out, panel.amplitudes());
    out
}

pub fn decode_panel_set(bytes: &[u8]) -> Result<PanelSet> {
    let mut r = Reader { bytes };
    r.header(PANEL_MAGIC)?;
    let spec = PartitionSpec::new(r.u64()? as usize, r.u64()? as usize)?;
    let compelled = r.u64()? as u32;
    let blocks = spec
        .intervals
        .checked_pow(compelled)
        .ok_or_else(|| Error::Cache("block count overflows".into()))?;
    let weights = r.f64s(blocks)?;
    let amplitudes = r.f64s(blocks * spec.points)?;
    r.finish()?;
    PanelSet::from_parts(spec, compelled as usize, weights, amplitudes)
}
