use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vvkrein::catalog::CatalogConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Inclusive range of cut-set indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KRange {
    pub min: u32,
    pub max: u32,
}

impl Default for KRange {
    fn default() -> Self {
        KRange { min: 1, max: 3 }
    }
}

/// Geometric grid from `x_lo` to `x_hi` with `count` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_lo: f64,
    pub x_hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub catalog: CatalogConfig,
    #[serde(default = "one")]
    pub v: usize,
    #[serde(default)]
    pub seed: u64,
    /// Tree depth and discretization level.
    pub level: usize,
    #[serde(default = "one")]
    pub splits: usize,
    #[serde(default)]
    pub k: KRange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_type: Option<usize>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn one() -> usize {
    1
}

fn default_blocks() -> usize {
    10_000
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.check()?;
        Ok(config)
    }

    /// Field-level checks; catalog validity is checked separately.
    pub fn check(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        if self.v == 0 {
            bail!("v must be positive");
        }
        if self.level == 0 {
            bail!("level must be positive");
        }
        if self.splits == 0 {
            bail!("splits must be positive");
        }
        if self.blocks < 2 {
            bail!("blocks must be at least 2");
        }
        if self.k.min > self.k.max {
            bail!("k.min {} exceeds k.max {}", self.k.min, self.k.max);
        }
        if let Some(g) = self.grid {
            if g.count < 2 {
                bail!("grid.count must be at least 2");
            }
            if !(g.x_lo > 0.0 && g.x_hi > g.x_lo && g.x_hi.is_finite()) {
                bail!("grid needs 0 < x_lo < x_hi");
            }
        }
        if let Some(t) = self.root_type {
            if t >= self.v {
                bail!("root_type {t} must be below v = {}", self.v);
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical (sorted-key) JSON of the effective config.
    /// The output directory is excluded: it does not affect any result.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        let bytes = serde_json::to_vec(&value).expect("value serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
