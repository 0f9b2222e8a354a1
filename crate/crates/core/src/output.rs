//! CSV emission. Every file carries a comment header with the scenario,
//! seed and config digest; no timestamps, so outputs are byte-identical
//! for identical (config, seed).

use crate::config::RunConfig;
use crate::Result;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub struct CsvFile {
    buf: String,
    path: PathBuf,
}

impl CsvFile {
    pub fn new(dir: &Path, name: &str, cfg: &RunConfig, columns: &[&str]) -> CsvFile {
        let mut buf = String::new();
        let _ = writeln!(
            buf,
            "# muxsim v{} scenario={} seed={} config_sha256={}",
            env!("CARGO_PKG_VERSION"),
            cfg.scenario.name(),
            cfg.master_seed,
            cfg.digest()
        );
        let _ = writeln!(buf, "{}", columns.join(","));
        CsvFile { buf, path: dir.join(name) }
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.buf, "{}", fields.join(","));
    }

    pub fn finish(self) -> Result<PathBuf> {
        std::fs::write(&self.path, self.buf.as_bytes())?;
        Ok(self.path)
    }
}

/// Compact float formatting: shortest round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".to_string() } else { "-inf".to_string() };
    }
    format!("{v}")
}
