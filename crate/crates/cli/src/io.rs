//! File formats: click tables, photon-number distributions, trajectory
//! records, ladders and JSON documents.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use pndrecon_core::dynamics::{ClickCount, TrajectoryRecord};
use pndrecon_core::{ClickRow, ClickTable, Counts, EfficiencyLadder, JointPnd, Pnd, Setting};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Format { path: path.to_path_buf(), message: message.into() }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn headers<R: Read>(rdr: &mut csv::Reader<R>, path: &Path) -> Result<Vec<String>> {
    Ok(rdr.headers().map_err(csv_err(path))?.iter().map(|h| h.trim().to_string()).collect())
}

fn records<R: Read, T: DeserializeOwned>(rdr: &mut csv::Reader<R>, path: &Path) -> Result<Vec<T>> {
    rdr.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(csv_err(path))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

#[derive(Serialize, Deserialize)]
struct SymmetricRow {
    eta: f64,
    trials: u64,
    c00: u64,
    c01: u64,
    c10: u64,
    c11: u64,
}

#[derive(Serialize, Deserialize)]
struct AsymmetricRow {
    eta_s: f64,
    eta_i: f64,
    trials: u64,
    c00: u64,
    c01: u64,
    c10: u64,
    c11: u64,
}

/// Parses a click table with header `eta,trials,c00,c01,c10,c11` or
/// `eta_s,eta_i,trials,c00,c01,c10,c11`. `path` labels errors.
pub fn parse_click_table<R: Read>(input: R, path: &Path) -> Result<ClickTable> {
    let mut rdr = reader(input);
    let rows = match headers(&mut rdr, path)?.first().map(String::as_str) {
        Some("eta") => records::<_, SymmetricRow>(&mut rdr, path)?
            .into_iter()
            .map(|r| ClickRow {
                setting: Setting::symmetric(r.eta),
                trials: r.trials,
                counts: Counts { c00: r.c00, c01: r.c01, c10: r.c10, c11: r.c11 },
            })
            .collect(),
        Some("eta_s") => records::<_, AsymmetricRow>(&mut rdr, path)?
            .into_iter()
            .map(|r| ClickRow {
                setting: Setting { eta_s: r.eta_s, eta_i: r.eta_i },
                trials: r.trials,
                counts: Counts { c00: r.c00, c01: r.c01, c10: r.c10, c11: r.c11 },
            })
            .collect(),
        _ => return Err(format_err(path, "click table header must start with `eta` or `eta_s`")),
    };
    ClickTable::new(rows).map_err(|e| format_err(path, e.to_string()))
}

pub fn read_click_table(path: &Path) -> Result<ClickTable> {
    parse_click_table(open(path)?, path)
}

/// Writes the symmetric header when every row has equal arm transmissions.
pub fn write_click_table_to<W: Write>(out: W, table: &ClickTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in table.rows() {
        let Counts { c00, c01, c10, c11 } = r.counts;
        let res = if table.is_symmetric() {
            w.serialize(SymmetricRow { eta: r.setting.eta_s, trials: r.trials, c00, c01, c10, c11 })
        } else {
            w.serialize(AsymmetricRow {
                eta_s: r.setting.eta_s,
                eta_i: r.setting.eta_i,
                trials: r.trials,
                c00,
                c01,
                c10,
                c11,
            })
        };
        res.map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_click_table(path: &Path, table: &ClickTable) -> Result<()> {
    write_click_table_to(create(path)?, table, path)
}

#[derive(Serialize, Deserialize)]
struct JointEntry {
    n: usize,
    k: usize,
    prob: f64,
}

#[derive(Serialize, Deserialize)]
struct SingleEntry {
    n: usize,
    prob: f64,
}

/// Contents of a distribution file.
#[derive(Debug, Clone, PartialEq)]
pub enum PndFile {
    /// Grid `n,k,prob` with `n` the signal and `k` the idler photon number.
    Joint(JointPnd),
    /// Column `n,prob`.
    Single(Pnd),
}

pub fn parse_pnd<R: Read>(input: R, path: &Path) -> Result<PndFile> {
    let mut rdr = reader(input);
    let h = headers(&mut rdr, path)?;
    match h.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["n", "k", "prob"] => {
            let entries: Vec<JointEntry> = records(&mut rdr, path)?;
            let trunc = entries.iter().map(|e| e.n.max(e.k)).max().unwrap_or(0);
            let dim = trunc + 1;
            let mut probs = vec![None; dim * dim];
            for e in &entries {
                let slot = &mut probs[e.n * dim + e.k];
                if slot.replace(e.prob).is_some() {
                    return Err(format_err(path, format!("duplicate entry ({}, {})", e.n, e.k)));
                }
            }
            let probs = probs
                .into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| format_err(path, format!("incomplete {dim}x{dim} grid")))?;
            JointPnd::new(trunc, probs).map(PndFile::Joint).map_err(|e| format_err(path, e.to_string()))
        }
        ["n", "prob"] => {
            let entries: Vec<SingleEntry> = records(&mut rdr, path)?;
            let mut probs = vec![None; entries.len()];
            for e in &entries {
                let slot = probs
                    .get_mut(e.n)
                    .ok_or_else(|| format_err(path, format!("photon number {} outside 0..{}", e.n, entries.len())))?;
                if slot.replace(e.prob).is_some() {
                    return Err(format_err(path, format!("duplicate entry {}", e.n)));
                }
            }
            let probs = probs.into_iter().collect::<Option<Vec<f64>>>().ok_or_else(|| format_err(path, "gap in n"))?;
            Pnd::new(probs).map(PndFile::Single).map_err(|e| format_err(path, e.to_string()))
        }
        _ => Err(format_err(path, "distribution header must be `n,k,prob` or `n,prob`")),
    }
}

pub fn read_pnd(path: &Path) -> Result<PndFile> {
    parse_pnd(open(path)?, path)
}

pub fn read_joint_pnd(path: &Path) -> Result<JointPnd> {
    match read_pnd(path)? {
        PndFile::Joint(p) => Ok(p),
        PndFile::Single(_) => Err(format_err(path, "expected a joint distribution `n,k,prob`")),
    }
}

pub fn write_pnd_to<W: Write>(out: W, pnd: &PndFile, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match pnd {
        PndFile::Joint(p) => {
            for (n, k, prob) in p.iter() {
                w.serialize(JointEntry { n, k, prob }).map_err(csv_err(path))?;
            }
        }
        PndFile::Single(p) => {
            for (n, &prob) in p.probs().iter().enumerate() {
                w.serialize(SingleEntry { n, prob }).map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn write_pnd(path: &Path, pnd: &PndFile) -> Result<()> {
    write_pnd_to(create(path)?, pnd, path)
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRow {
    traj_id: usize,
    n_s_clicks: u32,
    n_i_clicks: u32,
}

pub fn write_trajectories(path: &Path, rec: &TrajectoryRecord) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for (traj_id, c) in rec.counts.iter().enumerate() {
        w.serialize(TrajectoryRow { traj_id, n_s_clicks: c.n_s, n_i_clicks: c.n_i }).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a trajectory CSV. The seed is not part of the format and is set to 0.
pub fn read_trajectories(path: &Path) -> Result<TrajectoryRecord> {
    let mut rdr = reader(open(path)?);
    let rows: Vec<TrajectoryRow> = records(&mut rdr, path)?;
    let counts = rows.iter().map(|r| ClickCount { n_s: r.n_s_clicks, n_i: r.n_i_clicks }).collect();
    Ok(TrajectoryRecord { seed: 0, counts })
}

#[derive(Deserialize)]
struct LadderSymmetric {
    eta: f64,
}

#[derive(Deserialize)]
struct LadderAsymmetric {
    eta_s: f64,
    eta_i: f64,
}

/// Reads an explicit ladder: column `eta`, or columns `eta_s,eta_i`.
pub fn read_ladder(path: &Path) -> Result<EfficiencyLadder> {
    let mut rdr = reader(open(path)?);
    let ladder = match headers(&mut rdr, path)?.first().map(String::as_str) {
        Some("eta") => {
            let rows: Vec<LadderSymmetric> = records(&mut rdr, path)?;
            EfficiencyLadder::new(rows.into_iter().map(|r| r.eta).collect())
        }
        Some("eta_s") => {
            let rows: Vec<LadderAsymmetric> = records(&mut rdr, path)?;
            EfficiencyLadder::asymmetric(rows.into_iter().map(|r| Setting { eta_s: r.eta_s, eta_i: r.eta_i }).collect())
        }
        _ => return Err(format_err(path, "ladder header must be `eta` or `eta_s,eta_i`")),
    };
    ladder.map_err(|e| format_err(path, e.to_string()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| CliError::Json { path: path.to_path_buf(), source })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))
}

/// `out.csv` → `out.<suffix>.json`, next to the output.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.json"))
}

/// Writes one CSV row per record, header from the field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
