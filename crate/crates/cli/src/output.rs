//! File formats written and read by the pipeline.

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use tsi_core::analysis::TsiSample;
use tsi_core::dataset::SubsetLabel;
use tsi_core::influence::ScoreKind;
use tsi_core::metrics::{TsiFlag, TsiScores, TsiValue};

/// Format like C's `%.6g`.
pub fn fmt_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn write_provenance<W: Write>(w: &mut W, config: &PipelineConfig) -> CliResult<()> {
    writeln!(w, "{}", config.provenance_json())?;
    Ok(())
}

/// CSV table preceded by a `# config_hash=` comment line.
pub fn write_csv(path: &Path, config: &PipelineConfig, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut out = create(path)?;
    writeln!(out, "# config_hash={}", config.hash())?;
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| CliError::input(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    w.flush()?;
    Ok(())
}

/// One line of the per-image spuriosity output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsiRow {
    pub image_id: String,
    pub model_id: String,
    pub kind: ScoreKind,
    pub region: String,
    pub class_label: String,
    pub subset: SubsetLabel,
    pub coverage: usize,
    pub confidence: f64,
    pub correct: bool,
    pub a_tsi: Option<f64>,
    pub a_flag: TsiFlag,
    pub m_tsi: Option<f64>,
    pub m_flag: TsiFlag,
}

fn to_value(v: Option<f64>, flag: TsiFlag) -> Result<TsiValue, String> {
    match (flag, v) {
        (TsiFlag::Finite, Some(x)) if x.is_finite() && x >= 0.0 => Ok(TsiValue::Finite(x)),
        (TsiFlag::Infinite, None) => Ok(TsiValue::Infinite),
        (TsiFlag::Undefined, None) => Ok(TsiValue::Undefined),
        _ => Err(format!("value {v:?} inconsistent with flag {}", flag.as_str())),
    }
}

impl TsiRow {
    pub fn new(sample: &TsiSample, correct: bool) -> Self {
        let s = sample.scores;
        Self {
            image_id: sample.image_id.clone(),
            model_id: sample.model_id.clone(),
            kind: sample.kind,
            region: sample.region.clone(),
            class_label: sample.class_label.clone(),
            subset: sample.subset,
            coverage: sample.coverage,
            confidence: sample.confidence,
            correct,
            a_tsi: s.a_tsi.finite(),
            a_flag: s.a_tsi.flag(),
            m_tsi: s.m_tsi.finite(),
            m_flag: s.m_tsi.flag(),
        }
    }

    pub fn to_sample(&self) -> Result<TsiSample, String> {
        Ok(TsiSample {
            image_id: self.image_id.clone(),
            model_id: self.model_id.clone(),
            kind: self.kind,
            region: self.region.clone(),
            class_label: self.class_label.clone(),
            subset: self.subset,
            coverage: self.coverage,
            confidence: self.confidence,
            scores: TsiScores {
                a_tsi: to_value(self.a_tsi, self.a_flag)?,
                m_tsi: to_value(self.m_tsi, self.m_flag)?,
            },
        })
    }
}

/// Read TSI rows; any malformed line is an input error naming the line.
pub fn load_tsi_rows(path: &Path) -> CliResult<Vec<TsiSample>> {
    let mut samples = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| CliError::input(format!("{}:{}: {m}", path.display(), i + 1));
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if value.get("provenance").is_some() {
            continue;
        }
        let row: TsiRow = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
        samples.push(row.to_sample().map_err(bad)?);
    }
    Ok(samples)
}
