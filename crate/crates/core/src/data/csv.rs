use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::Path;

use crate::config::Mode;
use crate::error::{Error, Result};
use crate::flows::FlowKind;
use crate::norms::NormKind;

pub const METRICS_HEADER: &str = "iteration,mode,flow_kind,norm_kind,seed,proxy_fid,d_loss,g_loss,wall_ms";
const VARIANT_COLUMN: &str = "variant";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub iteration: u64,
    pub mode: Mode,
    pub flow_kind: FlowKind,
    pub norm_kind: NormKind,
    pub seed: u64,
    pub proxy_fid: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub wall_ms: u64,
}

fn float(v: f64) -> String {
    format!("{v:.11e}")
}

impl MetricRow {
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.mode,
            self.flow_kind,
            self.norm_kind,
            self.seed,
            float(self.proxy_fid),
            float(self.d_loss),
            float(self.g_loss),
            self.wall_ms
        )
    }
}

/// Line-per-row CSV writer, flushed after every row.
pub struct MetricsWriter {
    file: File,
    variant: bool,
}

impl MetricsWriter {
    /// Creates (truncating) a metrics file and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        Self::create_with(path, false)
    }

    /// Like [`create`](Self::create) with a leading `variant` column.
    pub fn create_merged(path: &Path) -> Result<Self> {
        Self::create_with(path, true)
    }

    fn create_with(path: &Path, variant: bool) -> Result<Self> {
        let mut file = File::create(path)?;
        file.write_all(header(variant).as_bytes())?;
        file.write_all(b"\n")?;
        file.flush()?;
        Ok(Self { file, variant })
    }

    /// Appends to an existing metrics file, or creates it when missing or empty.
    pub fn append(path: &Path) -> Result<Self> {
        let existing = match fs::read_to_string(path) {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        if existing.is_empty() {
            return Self::create(path);
        }
        let variant = parse_header(existing.lines().next().unwrap_or(""))?;
        if !existing.ends_with('\n') {
            return Err(Error::format(existing.len() as u64, "metrics file ends mid-line"));
        }
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self { file, variant })
    }

    pub fn write(&mut self, row: &MetricRow) -> Result<()> {
        if self.variant {
            return Err(Error::State("merged metrics file needs a variant label".into()));
        }
        self.emit(row.to_line())
    }

    pub fn write_variant(&mut self, variant: &str, row: &MetricRow) -> Result<()> {
        if !self.variant {
            return Err(Error::State("metrics file has no variant column".into()));
        }
        if variant.contains([',', '\n', '\r']) {
            return Err(Error::Argument(format!("variant label `{variant}` contains a separator")));
        }
        self.emit(format!("{variant},{}", row.to_line()))
    }

    fn emit(&mut self, mut line: String) -> Result<()> {
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

fn header(variant: bool) -> String {
    if variant {
        format!("{VARIANT_COLUMN},{METRICS_HEADER}")
    } else {
        METRICS_HEADER.to_string()
    }
}

/// Returns whether the header carries a leading variant column.
fn parse_header(line: &str) -> Result<bool> {
    let got: Vec<&str> = line.split(',').collect();
    let variant = got.first() == Some(&VARIANT_COLUMN);
    let expected = header(variant);
    for (i, want) in expected.split(',').enumerate() {
        match got.get(i) {
            Some(g) if *g == want => {}
            Some(g) => return Err(Error::format(0, format!("unexpected column `{g}`, expected `{want}`"))),
            None => return Err(Error::format(0, format!("missing column `{want}`"))),
        }
    }
    if let Some(extra) = got.get(expected.split(',').count()) {
        return Err(Error::format(0, format!("unexpected column `{extra}`")));
    }
    Ok(variant)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsTable {
    pub has_variant: bool,
    pub rows: Vec<(Option<String>, MetricRow)>,
}

pub fn read_metrics(path: &Path) -> Result<MetricsTable> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.split_inclusive('\n');
    let first = lines.next().ok_or_else(|| Error::format(0, "missing header"))?;
    let has_variant = parse_header(first.trim_end_matches(['\n', '\r']))?;
    let mut offset = first.len() as u64;
    let mut rows = Vec::new();
    for raw in lines {
        let line = raw.trim_end_matches(['\n', '\r']);
        if !line.is_empty() {
            rows.push(parse_row(line, has_variant).map_err(|m| Error::format(offset, m))?);
        }
        offset += raw.len() as u64;
    }
    Ok(MetricsTable { has_variant, rows })
}

fn parse_row(line: &str, has_variant: bool) -> std::result::Result<(Option<String>, MetricRow), String> {
    let mut fields: Vec<&str> = line.split(',').collect();
    let variant = if has_variant && !fields.is_empty() { Some(fields.remove(0).to_string()) } else { None };
    let names: Vec<&str> = METRICS_HEADER.split(',').collect();
    if fields.len() != names.len() {
        return Err(format!("expected {} fields, found {}", names.len(), fields.len()));
    }
    fn num<T: std::str::FromStr>(s: &str, col: &str) -> std::result::Result<T, String> {
        s.parse().map_err(|_| format!("bad value `{s}` in column `{col}`"))
    }
    fn enm<T: std::str::FromStr>(s: &str, col: &str) -> std::result::Result<T, String> {
        s.parse().map_err(|_| format!("bad value `{s}` in column `{col}`"))
    }
    let row = MetricRow {
        iteration: num(fields[0], names[0])?,
        mode: enm(fields[1], names[1])?,
        flow_kind: enm(fields[2], names[2])?,
        norm_kind: enm(fields[3], names[3])?,
        seed: num(fields[4], names[4])?,
        proxy_fid: num(fields[5], names[5])?,
        d_loss: num(fields[6], names[6])?,
        g_loss: num(fields[7], names[7])?,
        wall_ms: num(fields[8], names[8])?,
    };
    Ok((variant, row))
}
