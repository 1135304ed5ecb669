use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{Experiment, RunConfig};
use crate::knowledge::SplitStrategy;
use crate::verify::TheoremVerdict;

pub const PERCENTILE_HEADER: [&str; 8] = [
    "run_id",
    "seed",
    "experiment",
    "alpha",
    "pretrain_steps",
    "strategy",
    "percentile",
    "accuracy",
];

pub const TRACE_HEADER: [&str; 10] = [
    "run_id", "seed", "step", "loss", "eval_acc", "subj_att", "rel_att", "c_v", "c_kq", "kq_update",
];

pub const SUMMARY_HEADER: [&str; 4] = ["run_id", "seed", "metric", "value"];

/// Accuracy on one popularity slice after finetuning. `accuracy` is `None`
/// when the slice holds no evaluation facts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentileRow {
    pub run_id: String,
    pub seed: u64,
    pub experiment: String,
    pub alpha: f64,
    pub pretrain_steps: usize,
    pub strategy: String,
    pub percentile: u32,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub run_id: String,
    pub seed: u64,
    pub step: usize,
    pub loss: f64,
    pub eval_acc: f64,
    pub subj_att: f64,
    pub rel_att: f64,
    pub c_v: f64,
    pub c_kq: f64,
    pub kq_update: f64,
}

/// A named scalar attached to one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run_id: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// Mean and sample standard deviation of one percentile point over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub run_id: String,
    pub experiment: String,
    pub alpha: f64,
    pub pretrain_steps: usize,
    pub strategy: String,
    pub percentile: u32,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    /// Seeds with a non-empty slice.
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub percentiles: Vec<PercentileRow>,
    pub aggregates: Vec<Aggregate>,
    pub traces: Vec<TraceRecord>,
    pub summary: Vec<SummaryRow>,
    pub verdicts: Vec<TheoremVerdict>,
    /// Files written by [`RunReport::write`], relative to the output root.
    pub files: Vec<String>,
}

impl RunReport {
    pub fn new(config: RunConfig) -> Self {
        RunReport {
            config,
            percentiles: Vec::new(),
            aggregates: Vec::new(),
            traces: Vec::new(),
            summary: Vec::new(),
            verdicts: Vec::new(),
            files: Vec::new(),
        }
    }

    /// Summary value for `(run_id, seed, metric)`.
    pub fn metric(&self, run_id: &str, seed: u64, metric: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.run_id == run_id && r.seed == seed && r.metric == metric)
            .map(|r| r.value)
    }

    /// Accuracy at `percentile` for a strategy at one sweep point.
    pub fn accuracy(&self, alpha: f64, steps: usize, seed: u64, strategy: SplitStrategy, percentile: u32) -> Option<f64> {
        self.percentiles
            .iter()
            .find(|r| {
                r.alpha == alpha
                    && r.pretrain_steps == steps
                    && r.seed == seed
                    && r.strategy == strategy.label()
                    && r.percentile == percentile
            })
            .and_then(|r| r.accuracy)
    }

    /// `accuracy(Top) - accuracy(Bottom)` at one sweep point.
    pub fn gap(&self, alpha: f64, steps: usize, seed: u64, percentile: u32) -> Option<f64> {
        Some(
            self.accuracy(alpha, steps, seed, SplitStrategy::Top, percentile)?
                - self.accuracy(alpha, steps, seed, SplitStrategy::Bottom, percentile)?,
        )
    }

    /// Writes CSV, JSON and SVG artifacts under `dir` and records their
    /// names in `self.files`. Theorem-suite reports carry only verdicts.
    pub fn write(&mut self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let prefix = self.config.experiment.as_str().to_ascii_lowercase();
        let mut files = Vec::new();

        let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
            let path = dir.join(&name);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            files.push(name);
            Ok(())
        };
        if self.config.experiment != Experiment::Verify {
            put(format!("{prefix}_percentiles.csv"), percentile_csv(&self.percentiles)?)?;
            put(format!("{prefix}_aggregates.csv"), aggregate_csv(&self.aggregates)?)?;
            put(format!("{prefix}_traces.csv"), trace_csv(&self.traces)?)?;
            put(format!("{prefix}_summary.csv"), summary_csv(&self.summary)?)?;
        }
        if !self.verdicts.is_empty() {
            put(format!("{prefix}_verdicts.jsonl"), verdict_lines(&self.verdicts).into_bytes())?;
        }
        for (name, svg) in super::charts::report_charts(self) {
            put(name, svg.into_bytes())?;
        }
        files.push(format!("{prefix}_report.json"));
        self.files = files;
        let path = dir.join(format!("{prefix}_report.json"));
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn paths(&self, dir: &Path) -> Vec<PathBuf> {
        self.files.iter().map(|f| dir.join(f)).collect()
    }
}

/// Groups percentile rows by `(run_id, percentile)` and averages over seeds.
pub fn aggregate(rows: &[PercentileRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, u32), (Aggregate, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let entry = groups.entry((r.run_id.clone(), r.percentile)).or_insert_with(|| {
            (
                Aggregate {
                    run_id: r.run_id.clone(),
                    experiment: r.experiment.clone(),
                    alpha: r.alpha,
                    pretrain_steps: r.pretrain_steps,
                    strategy: r.strategy.clone(),
                    percentile: r.percentile,
                    mean: None,
                    sd: None,
                    n: 0,
                },
                Vec::new(),
            )
        });
        if let Some(a) = r.accuracy {
            entry.1.push(a);
        }
    }
    groups
        .into_values()
        .map(|(mut agg, xs)| {
            agg.n = xs.len();
            if !xs.is_empty() {
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let var = if xs.len() > 1 {
                    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                agg.mean = Some(mean);
                agg.sd = Some(var.sqrt());
            }
            agg
        })
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

pub fn percentile_csv(rows: &[PercentileRow]) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(PERCENTILE_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.run_id.clone(),
            r.seed.to_string(),
            r.experiment.clone(),
            r.alpha.to_string(),
            r.pretrain_steps.to_string(),
            r.strategy.clone(),
            r.percentile.to_string(),
            opt(r.accuracy),
        ])
        .map_err(csv_error)?;
    }
    finish(w)
}

pub fn trace_csv(rows: &[TraceRecord]) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(TRACE_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.run_id.clone(),
            r.seed.to_string(),
            r.step.to_string(),
            r.loss.to_string(),
            r.eval_acc.to_string(),
            r.subj_att.to_string(),
            r.rel_att.to_string(),
            r.c_v.to_string(),
            r.c_kq.to_string(),
            r.kq_update.to_string(),
        ])
        .map_err(csv_error)?;
    }
    finish(w)
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(SUMMARY_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record([r.run_id.clone(), r.seed.to_string(), r.metric.clone(), r.value.to_string()])
            .map_err(csv_error)?;
    }
    finish(w)
}

pub fn aggregate_csv(rows: &[Aggregate]) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record([
        "run_id",
        "experiment",
        "alpha",
        "pretrain_steps",
        "strategy",
        "percentile",
        "mean",
        "sd",
        "n",
    ])
    .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.run_id.clone(),
            r.experiment.clone(),
            r.alpha.to_string(),
            r.pretrain_steps.to_string(),
            r.strategy.clone(),
            r.percentile.to_string(),
            opt(r.mean),
            opt(r.sd),
            r.n.to_string(),
        ])
        .map_err(csv_error)?;
    }
    finish(w)
}

pub fn verdict_lines(verdicts: &[TheoremVerdict]) -> String {
    verdicts
        .iter()
        .map(|v| serde_json::to_string(v).expect("verdict serializes") + "\n")
        .collect()
}

/// Contents of a CSV file emitted by the harness, identified by its header.
#[derive(Clone, Debug, PartialEq)]
pub enum CsvTable {
    Percentiles(Vec<PercentileRow>),
    Traces(Vec<TraceRecord>),
    Summary(Vec<SummaryRow>),
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse column {} value `{raw}`", i + 1)))
}

fn opt_field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<Option<f64>> {
    match rec.get(i) {
        Some("") | None => Ok(None),
        Some(_) => field(rec, i, line).map(Some),
    }
}

pub fn parse_csv<R: Read>(r: R) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let rows = rdr.records().enumerate().map(|(i, r)| r.map(|r| (i + 2, r)).map_err(csv_error));
    if header == PERCENTILE_HEADER {
        let mut out = Vec::new();
        for row in rows {
            let (line, r) = row?;
            out.push(PercentileRow {
                run_id: field(&r, 0, line)?,
                seed: field(&r, 1, line)?,
                experiment: field(&r, 2, line)?,
                alpha: field(&r, 3, line)?,
                pretrain_steps: field(&r, 4, line)?,
                strategy: field(&r, 5, line)?,
                percentile: field(&r, 6, line)?,
                accuracy: opt_field(&r, 7, line)?,
            });
        }
        Ok(CsvTable::Percentiles(out))
    } else if header == TRACE_HEADER {
        let mut out = Vec::new();
        for row in rows {
            let (line, r) = row?;
            out.push(TraceRecord {
                run_id: field(&r, 0, line)?,
                seed: field(&r, 1, line)?,
                step: field(&r, 2, line)?,
                loss: field(&r, 3, line)?,
                eval_acc: field(&r, 4, line)?,
                subj_att: field(&r, 5, line)?,
                rel_att: field(&r, 6, line)?,
                c_v: field(&r, 7, line)?,
                c_kq: field(&r, 8, line)?,
                kq_update: field(&r, 9, line)?,
            });
        }
        Ok(CsvTable::Traces(out))
    } else if header == SUMMARY_HEADER {
        let mut out = Vec::new();
        for row in rows {
            let (line, r) = row?;
            out.push(SummaryRow {
                run_id: field(&r, 0, line)?,
                seed: field(&r, 1, line)?,
                metric: field(&r, 2, line)?,
                value: field(&r, 3, line)?,
            });
        }
        Ok(CsvTable::Summary(out))
    } else {
        Err(Error::Parse(format!("unrecognized CSV header: {}", header.join(","))))
    }
}

pub fn read_csv_file(path: &Path) -> Result<CsvTable> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(f)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
