use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::verify::Suite;
use crate::{Error, Result};

/// Record of which verification suites passed for one build of the tools.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationStamp {
    pub build_id: String,
    pub suites: BTreeMap<String, bool>,
}

impl VerificationStamp {
    pub fn load(path: &Path) -> Result<Option<Self>> {
        match std::fs::read_to_string(path) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Record a suite outcome, discarding results from other builds.
    pub fn record(path: &Path, build_id: &str, suite: Suite, passed: bool) -> Result<Self> {
        let mut stamp = match Self::load(path)? {
            Some(s) if s.build_id == build_id => s,
            _ => VerificationStamp {
                build_id: build_id.to_string(),
                suites: BTreeMap::new(),
            },
        };
        stamp.suites.insert(suite.name().to_string(), passed);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, serde_json::to_string_pretty(&stamp)?).map_err(|e| Error::io(path, e))?;
        Ok(stamp)
    }

    /// Succeeds only when every suite passed for `build_id`.
    pub fn require(path: &Path, build_id: &str) -> Result<()> {
        let hint = "run `diffnet verify` (all suites) first";
        let stamp = Self::load(path)?
            .ok_or_else(|| Error::Config(format!("no verification stamp at {}; {hint}", path.display())))?;
        if stamp.build_id != build_id {
            return Err(Error::Config(format!(
                "verification stamp at {} belongs to another build; {hint}",
                path.display()
            )));
        }
        let missing: Vec<&str> = Suite::ALL
            .iter()
            .map(|s| s.name())
            .filter(|n| stamp.suites.get(*n) != Some(&true))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "verification suites not green for this build: {}; {hint}",
                missing.join(", ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stamp_requires_every_suite_for_the_same_build() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stamp.json");
        assert!(VerificationStamp::require(&p, "b1").is_err());
        for s in Suite::ALL {
            VerificationStamp::record(&p, "b1", s, true).unwrap();
        }
        VerificationStamp::require(&p, "b1").unwrap();
        assert!(VerificationStamp::require(&p, "b2").is_err());
        VerificationStamp::record(&p, "b1", Suite::Eigen, false).unwrap();
        assert!(VerificationStamp::require(&p, "b1").is_err());
        VerificationStamp::record(&p, "b2", Suite::Eigen, true).unwrap();
        assert!(VerificationStamp::require(&p, "b2").is_err());
    }
}
