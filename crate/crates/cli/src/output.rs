use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::args::Format;

/// Findings were reported; the command ran but the input is not valid.
#[derive(Debug)]
pub struct Findings(pub usize);

impl fmt::Display for Findings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            1 => f.write_str("1 finding"),
            n => write!(f, "{n} findings"),
        }
    }
}

impl std::error::Error for Findings {}

/// Bad flag combination that clap cannot express.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub struct Output {
    pub format: Format,
    pub out: Option<PathBuf>,
}

impl Output {
    fn write(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
            None => {
                let mut stdout = io::stdout().lock();
                stdout.write_all(text.as_bytes())?;
                stdout.flush()?;
                Ok(())
            }
        }
    }

    /// A report: JSON of `value`, or the rendered table.
    pub fn report<T: Serialize>(&self, value: &T, table: impl FnOnce() -> String) -> Result<()> {
        let text = match self.format {
            Format::Json => json(value),
            Format::Table => ensure_newline(table()),
        };
        self.write(&text)
    }

    /// A data file (info file, registry, config). It goes to `--out` when
    /// given, with `summary` on stdout; otherwise the data itself is printed.
    pub fn data(&self, text: &str, summary: impl FnOnce() -> String) -> Result<()> {
        self.write(text)?;
        if self.out.is_some() && self.format == Format::Table {
            println!("{}", summary());
        }
        Ok(())
    }
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn ensure_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}
