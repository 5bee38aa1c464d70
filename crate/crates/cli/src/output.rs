//! Output directory handling: pattern files, JSON summaries, reports and
//! the run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use rfactor::io::{write_marked_csv, write_pattern_csv};
use rfactor::patterns::{MarkedPointPattern, PointPattern};
use rfactor::verify::VerificationReport;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

pub struct Output {
    dir: PathBuf,
    format: Format,
}

impl Output {
    pub fn create(dir: &Path, format: Format) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            format,
        })
    }

    fn file(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn text(&self, name: &str, text: &str) -> Result<()> {
        let mut w = self.file(name)?;
        w.write_all(text.as_bytes())?;
        if !text.ends_with('\n') {
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One CSV per replication (`{stem}-{i}.csv`) or a single JSON array.
    pub fn marked_patterns(&self, stem: &str, patterns: &[MarkedPointPattern]) -> Result<()> {
        match self.format {
            Format::Json => self.json(&format!("{stem}.json"), patterns),
            Format::Csv => {
                for (i, p) in patterns.iter().enumerate() {
                    let mut w = self.file(&format!("{stem}-{i:05}.csv"))?;
                    write_marked_csv(p, &mut w)?;
                    w.flush()?;
                }
                Ok(())
            }
        }
    }

    pub fn patterns(&self, stem: &str, patterns: &[PointPattern]) -> Result<()> {
        match self.format {
            Format::Json => self.json(&format!("{stem}.json"), patterns),
            Format::Csv => {
                for (i, p) in patterns.iter().enumerate() {
                    let mut w = self.file(&format!("{stem}-{i:05}.csv"))?;
                    write_pattern_csv(p, &mut w)?;
                    w.flush()?;
                }
                Ok(())
            }
        }
    }

    /// Plain numeric table with a header row.
    pub fn table(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let mut w = self.file(name)?;
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    /// `report.json` and the aligned-text `report.txt`.
    pub fn report(&self, report: &VerificationReport) -> Result<()> {
        self.json("report.json", report)?;
        self.text("report.txt", &report.to_string())
    }
}
