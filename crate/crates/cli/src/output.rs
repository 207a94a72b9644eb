//! Output files. CSVs start with two comment lines: tool version, command
//! line and seed, then the effective configuration. Floats use Rust's
//! shortest round-trip formatting.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

#[derive(Debug, Clone)]
pub struct Provenance {
    pub command_line: String,
    pub seed: u64,
    pub config: String,
}

impl Provenance {
    pub fn header(&self) -> String {
        format!(
            "# reprobe {}; command: {}; seed: {}\n# config: {}\n",
            env!("CARGO_PKG_VERSION"),
            self.command_line,
            self.seed,
            self.config
        )
    }
}

/// Quotes arguments containing whitespace so the echoed line can be re-run.
pub fn command_line(args: &[String]) -> String {
    args.iter()
        .map(|a| {
            if a.is_empty() || a.contains(char::is_whitespace) {
                format!("'{a}'")
            } else {
                a.clone()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub struct OutDir {
    root: PathBuf,
    prov: Provenance,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path, prov: Provenance) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            prov,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.written.push(p);
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut buf = self.prov.header().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        self.write_bytes(name, &buf)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}
