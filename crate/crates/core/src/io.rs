//! File formats: JSON documents, CSV tables and PGM images.

use nalgebra::{DMatrix, Point2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::channel::{LinkChannelStats, PairStats};
use crate::error::{Result, RtiError};
use crate::scalar::Scalar;
use crate::scene::{Channel, LinkKey, NodeId, NodeRecord, PairTable, PixelGrid, SurveyMeasurement};
use crate::selection::{SelectionSet, SetTag};
use crate::trace::{Frame, PersonState, RssSample, RssTrace, TruthFrame, TruthTrace};
use crate::track::TrackEstimate;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| RtiError::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| RtiError::Io(format!("{}: {e}", path.display())))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?))
}

fn csv_err(path: &Path, e: csv::Error) -> RtiError {
    RtiError::Csv(format!("{}: {e}", path.display()))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    serde_json::from_reader(open(path)?).map_err(|e| RtiError::Json(format!("{}: {e}", path.display())))
}

pub fn parse_json<D: DeserializeOwned>(text: &str) -> Result<D> {
    serde_json::from_str(text).map_err(|e| RtiError::Json(e.to_string()))
}

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| RtiError::Json(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| RtiError::Io(e.to_string()))
}

fn read_rows<D: DeserializeOwned>(path: &Path) -> Result<Vec<D>> {
    csv_reader(path)?
        .deserialize()
        .collect::<std::result::Result<Vec<D>, _>>()
        .map_err(|e| csv_err(path, e))
}

fn write_rows<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| RtiError::Io(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct SurveyRow<T> {
    tx: NodeId,
    rx: NodeId,
    length_m: T,
    angle_deg: T,
}

pub fn read_survey<T: Scalar>(path: &Path) -> Result<Vec<SurveyMeasurement<T>>> {
    read_rows::<SurveyRow<T>>(path)?
        .into_iter()
        .map(|r| SurveyMeasurement::new(LinkKey::new(r.tx, r.rx), r.length_m, r.angle_deg))
        .collect()
}

pub fn write_survey<T: Scalar>(path: &Path, survey: &[SurveyMeasurement<T>]) -> Result<()> {
    write_rows(
        path,
        survey.iter().map(|m| SurveyRow {
            tx: m.link.tx,
            rx: m.link.rx,
            length_m: m.length,
            angle_deg: m.angle_deg,
        }),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow<T> {
    frame: usize,
    t: T,
    tx: NodeId,
    rx: NodeId,
    channel: i64,
    rss_dbm: T,
}

/// Reads a long-format trace. Rows must be grouped by ascending frame; frames
/// without any row are materialized empty at `frame · t_s` only if they lie
/// between listed frames.
pub fn read_trace<T: Scalar>(path: &Path) -> Result<RssTrace<T>> {
    let rows: Vec<TraceRow<T>> = read_rows(path)?;
    let mut frames: Vec<Frame<T>> = Vec::new();
    for r in rows {
        let channel = Channel::try_from(r.channel).map_err(|_| RtiError::ChannelOutOfRange(r.channel))?;
        crate::scene::channel_center_frequency(r.channel)?;
        if !r.rss_dbm.is_finite_value() {
            return Err(RtiError::Parse(format!("non-finite RSS at frame {}", r.frame)));
        }
        match frames.last_mut() {
            Some(f) if f.index == r.frame => {}
            Some(f) if f.index > r.frame => {
                return Err(RtiError::Parse(format!(
                    "trace frames out of order: {} after {}",
                    r.frame, f.index
                )))
            }
            _ => frames.push(Frame { index: r.frame, t: r.t, samples: Vec::new() }),
        }
        frames
            .last_mut()
            .expect("pushed above")
            .samples
            .push(RssSample::at(LinkKey::new(r.tx, r.rx), channel, r.rss_dbm));
    }
    Ok(RssTrace { frames })
}

pub fn write_trace<T: Scalar>(path: &Path, trace: &RssTrace<T>) -> Result<()> {
    write_rows(
        path,
        trace.frames.iter().flat_map(|f| {
            f.samples.iter().map(move |s| TraceRow {
                frame: f.index,
                t: f.t,
                tx: s.link.tx,
                rx: s.link.rx,
                channel: s.channel as i64,
                rss_dbm: s.rss,
            })
        }),
    )
}

/// Truth CSV: `frame,t,n_people` followed by `x_i,y_i,moving_i` per person,
/// padded with empty fields to the widest frame.
pub fn write_truth<T: Scalar>(path: &Path, truth: &TruthTrace<T>) -> Result<()> {
    let width = truth.frames.iter().map(|f| f.people.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["frame".to_string(), "t".into(), "n_people".into()];
    for i in 1..=width {
        header.extend([format!("x{i}"), format!("y{i}"), format!("moving{i}")]);
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for f in &truth.frames {
        let mut rec = vec![f.index.to_string(), f.t.to_string(), f.people.len().to_string()];
        for p in &f.people {
            rec.extend([
                p.position.x.to_string(),
                p.position.y.to_string(),
                u8::from(p.moving).to_string(),
            ]);
        }
        rec.resize(header.len(), String::new());
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| RtiError::Io(e.to_string()))
}

pub fn read_truth<T: Scalar>(path: &Path) -> Result<TruthTrace<T>> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let field = |rec: &csv::StringRecord, i: usize| -> Result<String> {
        rec.get(i)
            .map(str::to_string)
            .ok_or_else(|| RtiError::Parse(format!("truth row missing column {i}")))
    };
    let num = |s: String| -> Result<f64> {
        s.parse::<f64>().map_err(|e| RtiError::Parse(format!("truth value {s:?}: {e}")))
    };
    let mut frames = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let index: usize = field(&rec, 0)?.parse().map_err(|e| RtiError::Parse(format!("frame: {e}")))?;
        let t = T::of(num(field(&rec, 1)?)?);
        let n: usize = field(&rec, 2)?.parse().map_err(|e| RtiError::Parse(format!("n_people: {e}")))?;
        let people = (0..n)
            .map(|i| {
                let base = 3 + 3 * i;
                let moving = match field(&rec, base + 2)?.as_str() {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    other => return Err(RtiError::Parse(format!("moving flag {other:?}"))),
                };
                Ok(PersonState {
                    position: Point2::new(T::of(num(field(&rec, base)?)?), T::of(num(field(&rec, base + 1)?)?)),
                    moving,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        frames.push(TruthFrame { index, t, people });
    }
    Ok(TruthTrace { frames })
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsRow<T> {
    tx: NodeId,
    rx: NodeId,
    channel: i64,
    mean_dbm: T,
    var_db2: T,
    n: usize,
    fade_db: Option<T>,
}

/// Writes one row per measured pair in pair-index order.
pub fn write_stats<T: Scalar>(path: &Path, stats: &LinkChannelStats<T>) -> Result<()> {
    write_rows(
        path,
        stats.pairs.iter().enumerate().filter_map(|(i, p)| {
            let p = p.as_ref()?;
            let (link, channel) = stats.table.pair(i);
            Some(StatsRow {
                tx: link.tx,
                rx: link.rx,
                channel: channel as i64,
                mean_dbm: p.mean,
                var_db2: p.variance,
                n: p.count,
                fade_db: p.fade,
            })
        }),
    )
}

/// Reads statistics against `table`. The fade mode is not stored in the file
/// and is left unset.
pub fn read_stats<T: Scalar>(path: &Path, table: &PairTable) -> Result<LinkChannelStats<T>> {
    let mut stats = LinkChannelStats::empty(table.clone());
    for r in read_rows::<StatsRow<T>>(path)? {
        let channel = Channel::try_from(r.channel).map_err(|_| RtiError::ChannelOutOfRange(r.channel))?;
        let link = LinkKey::new(r.tx, r.rx);
        let i = table
            .index(link, channel)
            .ok_or_else(|| RtiError::Parse(format!("pair {link} channel {channel} is not in the deployment")))?;
        stats.pairs[i] = Some(PairStats { mean: r.mean_dbm, variance: r.var_db2, count: r.n, fade: r.fade_db });
    }
    Ok(stats)
}

#[derive(Debug, Serialize)]
struct SelectionRow<T> {
    tx: NodeId,
    rx: NodeId,
    channel: Channel,
    weight: T,
    set: &'static str,
}

/// One row per pair and set it belongs to; `weight` is the pair's selection
/// weight (zero outside `L`).
pub fn write_selection<T: Scalar>(path: &Path, selection: &SelectionSet<T>, table: &PairTable) -> Result<()> {
    let rows = [SetTag::Lp, SetTag::Lr, SetTag::Ls, SetTag::L].into_iter().flat_map(|tag| {
        selection.set(tag).iter().map(move |&i| {
            let (link, channel) = table.pair(i);
            SelectionRow { tx: link.tx, rx: link.rx, channel, weight: selection.weights[i], set: tag.label() }
        })
    });
    write_rows(path, rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct EstimateRow<T> {
    frame: usize,
    t: T,
    track_id: u64,
    x: T,
    y: T,
    confirmed: bool,
}

pub fn write_estimates<T: Scalar>(path: &Path, frames: &[(usize, T, Vec<TrackEstimate<T>>)]) -> Result<()> {
    write_rows(
        path,
        frames.iter().flat_map(|(frame, t, est)| {
            est.iter().map(move |e| EstimateRow {
                frame: *frame,
                t: *t,
                track_id: e.track_id,
                x: e.position.x,
                y: e.position.y,
                confirmed: e.confirmed,
            })
        }),
    )
}

/// Estimates grouped by frame index.
pub fn read_estimates<T: Scalar>(path: &Path) -> Result<BTreeMap<usize, Vec<TrackEstimate<T>>>> {
    let mut out: BTreeMap<usize, Vec<TrackEstimate<T>>> = BTreeMap::new();
    for r in read_rows::<EstimateRow<T>>(path)? {
        out.entry(r.frame).or_default().push(TrackEstimate {
            track_id: r.track_id,
            position: Point2::new(r.x, r.y),
            confirmed: r.confirmed,
        });
    }
    Ok(out)
}

/// Dense matrix as row-major CSV without a header.
pub fn write_matrix_csv<T: Scalar>(path: &Path, m: &DMatrix<T>) -> Result<()> {
    let mut w = create(path)?;
    for i in 0..m.nrows() {
        let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| RtiError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| RtiError::Io(e.to_string()))
}

pub fn read_matrix_csv<T: Scalar>(path: &Path) -> Result<DMatrix<T>> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|e| RtiError::Io(e.to_string()))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| RtiError::Parse(format!("{v:?}: {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(RtiError::Parse("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| T::of(rows[i][j])))
}

/// Image as CSV with one line per grid row, lowest y first.
pub fn write_image_csv<T: Scalar>(path: &Path, values: &[T], grid: &PixelGrid<T>) -> Result<()> {
    let m = DMatrix::from_row_slice(grid.rows, grid.cols, values);
    write_matrix_csv(path, &m)
}

/// Plain (P2) PGM scaled to `[0, 255]` between the image's own min and max,
/// with the highest y at the top.
pub fn write_image_pgm<T: Scalar>(path: &Path, values: &[T], grid: &PixelGrid<T>) -> Result<()> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.as_f64()), hi.max(v.as_f64())));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut w = create(path)?;
    let io = |e: std::io::Error| RtiError::Io(e.to_string());
    writeln!(w, "P2\n{} {}\n255", grid.cols, grid.rows).map_err(io)?;
    for r in (0..grid.rows).rev() {
        let line: Vec<String> = (0..grid.cols)
            .map(|c| {
                let v = values[r * grid.cols + c].as_f64();
                (((v - lo) / span * 255.0).round() as u8).to_string()
            })
            .collect();
        writeln!(w, "{}", line.join(" ")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Node positions recovered from a survey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Positions<T> {
    pub nodes: Vec<NodeRecord<T>>,
    pub objective: T,
    pub iterations: usize,
}

/// Writes report-like rows that already derive `Serialize`.
pub fn write_table<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    write_rows(path, rows)
}
