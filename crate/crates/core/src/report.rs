//! The single JSON report shared by every command, plus the key-value
//! configuration format.
//!
//! A report file has two top-level members: `header`, which holds volatile
//! data (generation time), and `body`, which is a pure function of inputs,
//! parameters and seeds. Re-running a command on identical inputs yields a
//! byte-identical `body`.

use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::distance::DistanceReport;
use crate::error::{Error, Result};
use crate::roof::{AreaEstimate, OccupancyEstimate};
use crate::stitching::{AffineTransform, PairStats};

pub const SCHEMA_VERSION: &str = "1.0";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// 64-bit FNV-1a of `bytes`, as 16 lowercase hex digits.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub role: String,
    pub path: String,
    pub bytes: u64,
    pub fnv1a64: String,
}

impl ManifestEntry {
    pub fn from_file(role: &str, path: &Path) -> Result<ManifestEntry> {
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(ManifestEntry {
            role: role.to_string(),
            path: path.display().to_string(),
            bytes: data.len() as u64,
            fnv1a64: content_hash(&data),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSection {
    pub source: String,
    pub scale: f64,
    pub synced_pairs: Option<usize>,
    pub time_offset_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoofAreaSection {
    #[serde(flatten)]
    pub estimate: AreaEstimate,
    /// Which pixel count fed `C` and how the alternative was measured.
    pub pixel_count_method: String,
    pub contour_method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchSection {
    pub frames: usize,
    pub canvas_path: String,
    pub transforms_path: String,
    pub canvas_size: (usize, usize),
    pub origin: (i64, i64),
    pub transforms: Vec<AffineTransform>,
    pub pairs: Vec<PairStats>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Sections {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<ScaleSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distances: Option<DistanceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roof_area: Option<RoofAreaSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stitching: Option<StitchSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub occupancy: Option<OccupancyEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub schema_version: String,
    pub tool_version: String,
    pub command: String,
    pub manifest: Vec<ManifestEntry>,
    /// Every parameter the command used, defaults resolved.
    pub parameters: BTreeMap<String, Value>,
    pub sections: Sections,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub generated_unix_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionReport {
    pub header: ReportHeader,
    pub body: ReportBody,
}

impl InspectionReport {
    pub fn new(command: &str) -> InspectionReport {
        InspectionReport {
            header: ReportHeader {
                generated_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            },
            body: ReportBody {
                schema_version: SCHEMA_VERSION.to_string(),
                tool_version: TOOL_VERSION.to_string(),
                command: command.to_string(),
                manifest: Vec::new(),
                parameters: BTreeMap::new(),
                sections: Sections::default(),
                notes: Vec::new(),
            },
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.body.manifest.push(ManifestEntry::from_file(role, path)?);
        Ok(())
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.body.parameters.insert(key.to_string(), v);
    }

    pub fn body_json(&self) -> String {
        serde_json::to_string_pretty(&self.body).expect("report body serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn from_json(text: &str) -> Result<InspectionReport> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("report: {e}")))
    }
}

/// Error object printed by the CLI on failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub code: String,
    pub class: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failing_pair: Option<usize>,
}

impl ErrorReport {
    pub fn from_error(e: &Error) -> ErrorReport {
        let failing_pair = match e {
            Error::Stitch(s) => s.failing_pair(),
            _ => None,
        };
        ErrorReport {
            code: e.code(),
            class: format!("{:?}", e.class()).to_lowercase(),
            message: e.to_string(),
            failing_pair,
        }
    }
}

/// `key = value` lines; `#` starts a comment, blank lines are ignored,
/// later keys override earlier ones. Keys are the long CLI flag names with
/// `-` or `_` accepted interchangeably.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('-', "_").to_ascii_lowercase()
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<KvConfig> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected 'key = value'", n + 1)));
            };
            let key = normalize_key(k);
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            entries.insert(key, v.trim().to_string());
        }
        Ok(KvConfig { entries })
    }

    pub fn load(path: &Path) -> Result<KvConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        KvConfig::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(normalize_key(key), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Config(format!("{key} = '{v}': {e}"))),
        }
    }

    /// Flag value if given, else the file value, else `default`.
    pub fn resolve<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(content_hash(b""), "cbf29ce484222325");
        assert_eq!(content_hash(b"a"), "af63dc4c8601ec8c");
        assert_eq!(content_hash(b"foobar"), "85944171f73967e8");
    }

    #[test]
    fn config_parsing() {
        let c =
            KvConfig::parse("# comment\nseed = 7\nmin-cluster-size=40 # trailing\n\nmode = roof\nseed = 9\n").unwrap();
        assert_eq!(c.get::<u64>("seed").unwrap(), Some(9));
        assert_eq!(c.get::<usize>("min_cluster_size").unwrap(), Some(40));
        assert_eq!(c.resolve("mode", None, "x".to_string()).unwrap(), "roof");
        assert_eq!(
            c.resolve("mode", Some("frontal".to_string()), "x".to_string()).unwrap(),
            "frontal"
        );
        assert_eq!(c.resolve("absent", None, 3.5).unwrap(), 3.5);
        assert!(c.get::<f64>("mode").is_err());
        assert!(KvConfig::parse("novalue\n").is_err());
        assert!(KvConfig::parse(" = 3\n").is_err());
    }

    #[test]
    fn body_excludes_header() {
        let mut a = InspectionReport::new("roof-area");
        a.param("depth_m", 50.0);
        let mut b = a.clone();
        b.header.generated_unix_s += 100;
        assert_eq!(a.body_json(), b.body_json());
        assert_ne!(a.to_json(), b.to_json());
        let back = InspectionReport::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }
}
