//! On-disk formats: instance JSONL, front / weight / trace CSV, checkpoint,
//! metrics, and run-manifest JSON. Every format round-trips losslessly
//! (floats are written in shortest round-trippable decimal form).

use crate::error::{Error, Result};
use crate::hga::{all_shapes, ModelParams};
use crate::inference::{RunMetrics, TracePoint};
use crate::problems::Instance;
use crate::scalarization::Weight;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

// ---------------------------------------------------------------------------
// Instances: one JSON object per line.

pub fn save_instances(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_instances(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(&line)
            .map_err(|e| schema(format!("line {}: {e}", lineno + 1)))?;
        inst.validate()
            .map_err(|e| schema(format!("line {}: {e}", lineno + 1)))?;
        out.push(inst);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Fronts: CSV with objective columns f1..fM plus a solution-encoding string.

#[derive(Debug, Clone, PartialEq)]
pub struct FrontRow {
    pub objectives: Vec<f64>,
    pub solution: String,
}

pub fn save_front_csv(path: impl AsRef<Path>, rows: &[FrontRow]) -> Result<()> {
    let m = rows.first().map_or(2, |r| r.objectives.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=m).map(|i| format!("f{i}")).collect();
    header.push("solution".to_string());
    w.write_record(&header)?;
    for row in rows {
        if row.objectives.len() != m {
            return Err(schema(format!(
                "front row has {} objectives, expected {m}",
                row.objectives.len()
            )));
        }
        let mut rec: Vec<String> = row.objectives.iter().map(|v| format!("{v}")).collect();
        rec.push(row.solution.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a front CSV. The trailing `solution` column is optional so plain
/// point lists (for standalone scoring) parse too.
pub fn load_front_csv(path: impl AsRef<Path>) -> Result<Vec<FrontRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let has_solution = headers.iter().last() == Some("solution");
    let m = if has_solution { headers.len() - 1 } else { headers.len() };
    if m == 0 {
        return Err(schema("front file has no objective columns"));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(schema(format!(
                "front row {}: {} fields, expected {}",
                i + 1,
                rec.len(),
                headers.len()
            )));
        }
        let objectives = (0..m)
            .map(|c| {
                rec[c].parse::<f64>().map_err(|e| {
                    schema(format!("front row {}, column {}: {e}", i + 1, c + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let solution = if has_solution { rec[m].to_string() } else { String::new() };
        out.push(FrontRow { objectives, solution });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Weight sets: CSV, one weight vector per row.

pub fn save_weights_csv(path: impl AsRef<Path>, weights: &[Weight]) -> Result<()> {
    let m = weights.first().map_or(2, |w| w.len());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=m).map(|i| format!("w{i}")))?;
    for weight in weights {
        w.write_record(weight.0.iter().map(|v| format!("{v}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_weights_csv(path: impl AsRef<Path>) -> Result<Vec<Weight>> {
    let mut r = csv::Reader::from_path(path)?;
    let m = r.headers()?.len();
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let comps = (0..m)
            .map(|c| {
                rec.get(c)
                    .ok_or_else(|| schema(format!("weight row {}: missing column", i + 1)))?
                    .parse::<f64>()
                    .map_err(|e| schema(format!("weight row {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(
            Weight::new(comps).map_err(|e| schema(format!("weight row {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Solve trace: CSV (i, hv, archive_size).

pub fn save_trace_csv(path: impl AsRef<Path>, trace: &[TracePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["i", "hv", "archive_size"])?;
    for t in trace {
        w.write_record([
            t.subproblem.to_string(),
            format!("{}", t.hv),
            t.archive.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_trace_csv(path: impl AsRef<Path>) -> Result<Vec<TracePoint>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse_err = |e: String| schema(format!("trace row {}: {e}", i + 1));
        out.push(TracePoint {
            subproblem: rec[0].parse().map_err(|e: std::num::ParseIntError| {
                parse_err(e.to_string())
            })?,
            hv: rec[1].parse().map_err(|e: std::num::ParseFloatError| {
                parse_err(e.to_string())
            })?,
            archive: rec[2].parse().map_err(|e: std::num::ParseIntError| {
                parse_err(e.to_string())
            })?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Training log: CSV (step, mean_reward, val_hv); the validation column is
// empty on epochs where no validation run happened.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub step: usize,
    pub mean_reward: f64,
    pub val_hv: Option<f64>,
}

pub fn save_train_log_csv(path: impl AsRef<Path>, rows: &[TrainLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "mean_reward", "val_hv"])?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            format!("{}", r.mean_reward),
            r.val_hv.map_or(String::new(), |v| format!("{v}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_train_log_csv(path: impl AsRef<Path>) -> Result<Vec<TrainLogRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let err = |e: String| schema(format!("train log row {}: {e}", i + 1));
        let val_hv = if rec[2].is_empty() {
            None
        } else {
            Some(rec[2].parse::<f64>().map_err(|e| err(e.to_string()))?)
        };
        out.push(TrainLogRow {
            step: rec[0].parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
            mean_reward: rec[1]
                .parse()
                .map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
            val_hv,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Checkpoints: self-describing JSON of named tensors with shapes, the model
// configuration, and seed lineage.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Root seed the producing run derived all randomness from.
    pub root_seed: u64,
    /// Producing stage (for example "train", "meta-train", "finetune").
    pub stage: String,
    /// Free-form provenance notes (epoch counts, dataset names, ...).
    #[serde(default)]
    pub notes: String,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    kind: crate::problems::ProblemKind,
    #[serde(rename = "M")]
    objectives: usize,
    config: crate::hga::ModelConfig,
    lineage: CheckpointMeta,
    tensors: Vec<TensorRecord>,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams,
    meta: &CheckpointMeta,
) -> Result<()> {
    let tensors = params
        .tensors
        .iter()
        .map(|(name, t)| TensorRecord {
            name: name.clone(),
            rows: t.nrows(),
            cols: t.ncols(),
            data: t.iter().copied().collect(),
        })
        .collect();
    let file = CheckpointFile {
        format_version: 1,
        kind: params.kind,
        objectives: params.objectives,
        config: params.config.clone(),
        lineage: meta.clone(),
        tensors,
    };
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(w, &file)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, CheckpointMeta)> {
    let r = BufReader::new(File::open(path)?);
    let file: CheckpointFile =
        serde_json::from_reader(r).map_err(|e| schema(format!("checkpoint: {e}")))?;
    if file.format_version != 1 {
        return Err(schema(format!(
            "checkpoint format version {} not supported",
            file.format_version
        )));
    }
    file.config.validate().map_err(|e| schema(format!("checkpoint config: {e}")))?;

    let mut tensors = BTreeMap::new();
    for t in file.tensors {
        if t.data.len() != t.rows * t.cols {
            return Err(schema(format!(
                "tensor '{}': {} values for shape {}x{}",
                t.name,
                t.data.len(),
                t.rows,
                t.cols
            )));
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(schema(format!("tensor '{}': non-finite value", t.name)));
        }
        let arr = Array2::from_shape_vec((t.rows, t.cols), t.data)
            .map_err(|e| schema(format!("tensor '{}': {e}", t.name)))?;
        if tensors.insert(t.name.clone(), arr).is_some() {
            return Err(schema(format!("tensor '{}' appears twice", t.name)));
        }
    }

    // The tensor registry must match the configuration exactly.
    let expected = all_shapes(&file.config, file.kind, file.objectives);
    if expected.len() != tensors.len() {
        return Err(schema(format!(
            "checkpoint has {} tensors, configuration requires {}",
            tensors.len(),
            expected.len()
        )));
    }
    for (name, r, c, _) in &expected {
        match tensors.get(name) {
            None => return Err(schema(format!("missing tensor '{name}'"))),
            Some(t) if t.nrows() != *r || t.ncols() != *c => {
                return Err(schema(format!(
                    "tensor '{name}' has shape {}x{}, expected {r}x{c}",
                    t.nrows(),
                    t.ncols()
                )))
            }
            Some(_) => {}
        }
    }

    Ok((
        ModelParams {
            config: file.config,
            kind: file.kind,
            objectives: file.objectives,
            tensors,
        },
        file.lineage,
    ))
}

// ---------------------------------------------------------------------------
// Metrics and manifest JSON.

pub fn save_metrics(path: impl AsRef<Path>, metrics: &RunMetrics) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, metrics)?;
    Ok(())
}

pub fn load_metrics(path: impl AsRef<Path>) -> Result<RunMetrics> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| schema(format!("metrics: {e}")))
}

/// Everything needed to reproduce a run: the subcommand, the full effective
/// configuration, the root seed, and the artifact versions involved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub crate_version: String,
    pub root_seed: u64,
    pub threads: usize,
    /// Full effective configuration after flag/file merging.
    pub config: serde_json::Value,
    /// Input artifact paths (datasets, checkpoints, front files).
    #[serde(default)]
    pub inputs: Vec<String>,
    /// Output artifact paths written by the run.
    #[serde(default)]
    pub outputs: Vec<String>,
    pub created_unix: u64,
}

pub fn save_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, manifest)?;
    Ok(())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| schema(format!("manifest: {e}")))
}
