use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use uav_inspect::report::KvConfig;
use uav_inspect::{Error, Result};

/// Command-line values layered over an optional config file.
pub struct Settings {
    file: KvConfig,
    used: RefCell<BTreeSet<String>>,
}

fn norm(key: &str) -> String {
    key.replace('-', "_")
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Settings> {
        let file = match path {
            Some(p) => KvConfig::load(p)?,
            None => KvConfig::default(),
        };
        Ok(Settings {
            file,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    pub fn opt<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.used.borrow_mut().insert(norm(key));
        if flag.is_some() {
            return Ok(flag);
        }
        self.file.get(key)
    }

    pub fn get<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.opt(key, flag)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<T>
    where
        T::Err: Display,
    {
        self.opt(key, flag)?.ok_or_else(|| {
            Error::Config(format!(
                "missing required --{} (or '{}' in the config file)",
                key.replace('_', "-"),
                norm(key)
            ))
        })
    }

    /// Comma-separated list from the file, or the repeated flag.
    pub fn list<T: FromStr>(&self, key: &str, flag: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        self.used.borrow_mut().insert(norm(key));
        if !flag.is_empty() {
            return Ok(flag);
        }
        match self.file.raw(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<T>().map_err(|e| Error::Config(format!("{key}: '{s}': {e}"))))
                .collect(),
        }
    }

    pub fn unused_keys(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.file
            .keys()
            .filter(|k| !used.contains(*k))
            .map(str::to_string)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "iterations = 10\nmask = a.png, b.png\nstray = 1\n").unwrap();
        let s = Settings::load(Some(&p)).unwrap();
        assert_eq!(s.get("iterations", None, 500usize).unwrap(), 10);
        assert_eq!(s.get("iterations", Some(20usize), 500).unwrap(), 20);
        assert_eq!(s.get("min-inliers", None, 8usize).unwrap(), 8);
        assert_eq!(s.list::<String>("mask", vec![]).unwrap(), vec!["a.png", "b.png"]);
        assert!(s.require::<f64>("focal", None).is_err());
        assert_eq!(s.unused_keys(), vec!["stray".to_string()]);
    }
}
