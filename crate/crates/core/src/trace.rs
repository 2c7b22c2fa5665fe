//! Simulation traces and their CSV / metadata-sidecar format.
//!
//! CSV header: `t,x1,...,xn,u,V,Lambda,kappa,Gamma,mode`. Floats are written
//! in shortest round-trip form; `mode` is `reaching` or `barrier`. The
//! sidecar `<basename>.meta.toml` holds the law, plant, config and `T1`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::BoundReport;
use crate::controller::{ControlLaw, Mode};
use crate::error::{Error, Result};
use crate::plant::PlantModel;
use crate::sim::SimConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: f64,
    pub v: f64,
    pub lambda: f64,
    pub kappa: f64,
    /// Adaptive gain `Γ`.
    pub gain: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub config: SimConfig,
    pub law: ControlLaw,
    pub plant: PlantModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundReport>,
}

impl TraceMeta {
    pub fn new(plant: &PlantModel, law: &ControlLaw, config: &SimConfig) -> Self {
        Self {
            t1: None,
            label: None,
            config: config.clone(),
            law: law.clone(),
            plant: plant.clone(),
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub n: usize,
    pub rows: Vec<TraceRow>,
    pub meta: TraceMeta,
}

impl Trace {
    pub fn new(n: usize, meta: TraceMeta) -> Self {
        Self {
            n,
            rows: Vec::new(),
            meta,
        }
    }

    pub fn push(&mut self, row: TraceRow) {
        debug_assert_eq!(row.x.len(), self.n);
        self.rows.push(row);
    }

    pub fn t1(&self) -> Option<f64> {
        self.meta.t1
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, f: impl Fn(&TraceRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Rows at or after the switch instant (empty if no switch).
    pub fn barrier_rows(&self) -> &[TraceRow] {
        let idx = self.rows.partition_point(|r| r.mode == Mode::Reaching);
        match self.meta.t1 {
            Some(_) => &self.rows[idx..],
            None => &[],
        }
    }

    /// Rows strictly before the switch instant.
    pub fn reaching_rows(&self) -> &[TraceRow] {
        let idx = self.rows.partition_point(|r| r.mode == Mode::Reaching);
        &self.rows[..idx]
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((1..=self.n).map(|i| format!("x{i}")));
        h.extend(["u", "V", "Lambda", "kappa", "Gamma", "mode"].map(String::from));
        h
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = Vec::with_capacity(self.n + 7);
            rec.push(fmt_f64(r.t));
            rec.extend(r.x.iter().map(|v| fmt_f64(*v)));
            for v in [r.u, r.v, r.lambda, r.kappa, r.gain] {
                rec.push(fmt_f64(v));
            }
            rec.push(r.mode.as_str().to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii csv")
    }

    /// Writes `path` and its metadata sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        self.write_csv(fs::File::create(path)?)?;
        let meta = toml::to_string(&self.meta).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(sidecar_path(path), meta)?;
        Ok(())
    }

    /// Reads a CSV trace and its sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let meta_text = fs::read_to_string(sidecar_path(path))?;
        let meta: TraceMeta =
            toml::from_str(&meta_text).map_err(|e| Error::Parse(e.to_string()))?;
        let rows = read_rows(fs::File::open(path)?)?;
        let n = meta.plant.order();
        if let Some(r) = rows.first() {
            if r.x.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: r.x.len(),
                });
            }
        }
        Ok(Self { n, rows, meta })
    }
}

/// `run.csv` -> `run.meta.toml`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.toml")
}

fn fmt_f64(v: f64) -> String {
    // Debug formatting is the shortest string that parses back bit-exactly.
    format!("{v:?}")
}

/// Parses CSV rows written by [`Trace::write_csv`].
pub fn read_rows<R: std::io::Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let cols = headers.len();
    if cols < 8 || &headers[0] != "t" || &headers[cols - 1] != "mode" {
        return Err(Error::Parse(format!(
            "unexpected trace header: {headers:?}"
        )));
    }
    let n = cols - 7;
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("bad number '{s}': {e}")))
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let x = (1..=n)
            .map(|i| parse(&rec[i]))
            .collect::<Result<Vec<_>>>()?;
        rows.push(TraceRow {
            t: parse(&rec[0])?,
            x,
            u: parse(&rec[n + 1])?,
            v: parse(&rec[n + 2])?,
            lambda: parse(&rec[n + 3])?,
            kappa: parse(&rec[n + 4])?,
            gain: parse(&rec[n + 5])?,
            mode: rec[n + 6].parse()?,
        });
    }
    Ok(rows)
}
