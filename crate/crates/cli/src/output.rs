//! Table formatting and crash-safe file emission.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use crate::config::RunConfig;

/// One output file, fully rendered in memory before anything touches disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Comment line that opens every emitted table.
pub fn provenance(cfg: &RunConfig) -> String {
    format!("# config={} seed={} scheme={}\n", cfg.hash(), cfg.seed, cfg.weighting)
}

pub fn num(x: f64) -> String {
    format!("{x:.6}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// A delimited table with the provenance line on top.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self, cfg: &RunConfig) -> String {
        let mut buf = provenance(cfg).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.header).expect("in-memory write");
            for r in &self.rows {
                w.write_record(r).expect("in-memory write");
            }
            w.flush().expect("in-memory write");
        }
        String::from_utf8(buf).expect("utf-8 table")
    }

    pub fn artifact(&self, name: &str, cfg: &RunConfig) -> Artifact {
        Artifact {
            name: name.to_string(),
            contents: self.render(cfg),
        }
    }
}

/// Writes every artifact to a temporary name inside `out`, then renames
/// them into place. On failure the temporaries are removed and no final
/// file is created.
pub fn emit(out: &Path, artifacts: &[Artifact]) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut staged = Vec::with_capacity(artifacts.len());
    let cleanup = |staged: &[(std::path::PathBuf, std::path::PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for a in artifacts {
        let tmp = out.join(format!(".{}.tmp", a.name));
        let result = fs::File::create(&tmp).and_then(|mut f| {
            f.write_all(a.contents.as_bytes())?;
            f.sync_all()
        });
        staged.push((tmp.clone(), out.join(&a.name)));
        if let Err(e) = result {
            cleanup(&staged);
            return Err(e).with_context(|| format!("writing {}", tmp.display()));
        }
    }
    for (tmp, dest) in &staged {
        if let Err(e) = fs::rename(tmp, dest) {
            cleanup(&staged);
            return Err(e).with_context(|| format!("renaming into {}", dest.display()));
        }
    }
    Ok(())
}
