use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

/// CSV sink (file or stdout) that starts with `#` metadata lines.
pub struct Output {
    inner: Box<dyn Write>,
}

impl Output {
    pub fn create(path: Option<&Path>, version: &str, command: &str, flags: &str) -> Result<Self> {
        let inner: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        let mut out = Self { inner };
        out.line(&format!("# kl-legendre {version}"))?;
        out.line(&format!("# command: {command}"))?;
        out.line(&format!("# flags: {flags}"))?;
        Ok(out)
    }

    pub fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.inner, "{s}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}
