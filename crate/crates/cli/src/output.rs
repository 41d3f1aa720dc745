//! File emission. Every file carries the effective configuration: CSV files
//! as leading `#` lines, JSON under `"config"`, SVG in a comment, weight
//! files as `#` lines after the format header.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub fn config_map(config: &RunConfig) -> BTreeMap<&'static str, String> {
    config.entries().into_iter().collect()
}

/// `# splitig <command>` followed by `# key = value` lines.
pub fn comment_block(command: &str, config: &RunConfig) -> String {
    let mut out = format!("# splitig {command}\n");
    for line in config.render().lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Collects written files under one output directory.
pub struct Emitter {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Emitter {
    pub fn new(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| {
            CliError::Config(format!("cannot create output directory `{}`: {e}", dir.display()))
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::Input(format!("cannot write `{}`: {e}", path.display())))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Pretty JSON with a trailing newline.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Input(format!("cannot serialize `{name}`: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// CSV preceded by the config comment block. `fill` writes the records.
    pub fn csv(
        &mut self,
        name: &str,
        command: &str,
        config: &RunConfig,
        fill: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
    ) -> CliResult<PathBuf> {
        let mut buf = comment_block(command, config).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            fill(&mut w).map_err(|e| CliError::Input(format!("cannot write `{name}`: {e}")))?;
            w.flush()?;
        }
        self.write(name, &buf)
    }
}

/// Shortest round-trip text of a value; empty for `None`.
pub fn num(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Reads a CSV written by [`Emitter::csv`], skipping the comment block.
pub fn read_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Input(format!("`{}`: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| CliError::Input(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<csv::Result<_>>()
        .map_err(|e| CliError::Input(e.to_string()))?;
    Ok((header, rows))
}
