//! Service settings, read from a JSON file and overridden by `serve` flags.

use std::path::Path;

use occq::cli::ServeArgs;
use occq::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// Concurrent compute jobs.
    pub workers: usize,
    /// Sessions kept before least-recently-used eviction.
    pub capacity: usize,
    /// Allowed CORS origins; `*` allows any.
    pub cors_origins: Vec<String>,
    /// Seconds a request may wait for a free worker.
    pub queue_timeout_secs: u64,
    /// Seconds a synchronous computation may take.
    pub request_budget_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            workers: 4,
            capacity: 64,
            cors_origins: vec!["*".into()],
            queue_timeout_secs: 5,
            request_budget_secs: 30,
        }
    }
}

impl ServiceConfig {
    pub fn load(path: Option<&Path>, args: &ServeArgs) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Parse {
                    line: e.line() as u64,
                    column: e.column() as u64,
                    message: format!("{}: {e}", p.display()),
                })?
            }
            None => Self::default(),
        };
        if let Some(b) = &args.bind {
            cfg.bind = b.clone();
        }
        if let Some(w) = args.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.capacity == 0 {
            return Err(Error::Config("capacity must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("serve.json");
        std::fs::write(&p, r#"{"bind": "0.0.0.0:9000", "workers": 2}"#).unwrap();
        let cfg = ServiceConfig::load(Some(&p), &ServeArgs { bind: None, workers: Some(6) }).unwrap();
        assert_eq!(cfg.bind, "0.0.0.0:9000");
        assert_eq!(cfg.workers, 6);
        assert_eq!(cfg.capacity, 64);
    }

    #[test]
    fn zero_workers_rejected() {
        let args = ServeArgs { bind: None, workers: Some(0) };
        assert!(matches!(ServiceConfig::load(None, &args), Err(Error::Config(_))));
    }
}
