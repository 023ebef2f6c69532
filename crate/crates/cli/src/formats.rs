//! Plain-text file formats: comma-separated, one `schema=1` header line that
//! names the columns, UTF-8, LF line endings. Floats are written with the
//! shortest round-trippable representation except event times, which use
//! three-decimal fixed point.

use crate::error::CliError;
use milpool::eval::{Event, LevelMetrics, MetricsReport, Prf};
use milpool::mat::Mat;
use milpool::pooling::{PoolingKind, PowerParams};
use milpool::scorer::ScorerWeights;
use milpool::synth::Bag;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const FEATURES_FILE: &str = "features.csv";
pub const WEAK_LABELS_FILE: &str = "weak_labels.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const METRICS_FILE: &str = "metrics_report.csv";
pub const TRAJECTORY_FILE: &str = "nc_trajectory.csv";
pub const LOSS_FILE: &str = "loss_history.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const THRESHOLDS_FILE: &str = "thresholds.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const FRAME_SERIES_FILE: &str = "frame_series.csv";
pub const NC_DURATION_FILE: &str = "nc_vs_duration.csv";

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    fs::write(path, contents).map_err(CliError::io(path))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

fn parse_err(path: &Path, line: usize, what: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        what: what.into(),
    }
}

/// One frame-probability dump row: clip, frame, time, per-class probs.
pub type PredictionRow = (usize, usize, f64, Vec<f64>);
/// One thresholds row: clip, class, pooled prob, power and linear thresholds.
pub type ThresholdRow = (usize, usize, f64, f64, f64);
/// One plot-series row: time, frame prob, both thresholds, reference flag.
pub type FrameSeriesRow = (f64, f64, f64, f64, bool);

type HeaderAndRows<'a> = (Vec<&'a str>, Vec<(usize, &'a str)>);

/// Splits a file into its header fields and numbered data lines, checking
/// the schema tag.
fn header_and_rows<'a>(
    path: &Path,
    contents: &'a str,
) -> Result<HeaderAndRows<'a>, CliError> {
    let mut lines = contents.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.first() != Some(&"schema=1") {
        return Err(parse_err(path, 1, "header must begin with schema=1"));
    }
    let rows = lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    Ok((fields, rows))
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    field: &str,
    what: &str,
) -> Result<T, CliError> {
    field
        .parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {what} from `{field}`")))
}

fn fixed3(value: f64) -> String {
    format!("{value:.3}")
}

// --- dataset files ------------------------------------------------------

/// A dataset as stored on disk: the bags plus the frame hop they were
/// sampled at (recorded in the features header).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub bags: Vec<Bag>,
    pub hop_s: f64,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.bags.first().map_or(0, |b| b.weak_labels.len())
    }

    pub fn all_events(&self) -> Vec<Event> {
        self.bags
            .iter()
            .flat_map(|b| b.reference_events.iter().copied())
            .collect()
    }
}

pub fn write_dataset(dir: &Path, bags: &[Bag], hop_s: f64) -> Result<(), CliError> {
    let dim = bags.first().map_or(0, |b| b.features.cols());
    let classes = bags.first().map_or(0, |b| b.weak_labels.len());

    let mut features = format!("schema=1,hop_s={hop_s},clip_id,frame_index");
    for f in 0..dim {
        write!(features, ",x{f}").unwrap();
    }
    features.push('\n');
    for bag in bags {
        for t in 0..bag.features.rows() {
            write!(features, "{},{t}", bag.clip_id).unwrap();
            for &v in bag.features.row(t) {
                write!(features, ",{v}").unwrap();
            }
            features.push('\n');
        }
    }
    write_file(&dir.join(FEATURES_FILE), &features)?;

    let mut labels = String::from("schema=1,clip_id");
    for c in 0..classes {
        write!(labels, ",c{c}").unwrap();
    }
    labels.push('\n');
    for bag in bags {
        write!(labels, "{}", bag.clip_id).unwrap();
        for &l in &bag.weak_labels {
            write!(labels, ",{}", l as u8).unwrap();
        }
        labels.push('\n');
    }
    write_file(&dir.join(WEAK_LABELS_FILE), &labels)?;

    let mut events = String::from("schema=1,clip_id,class_id,onset_s,offset_s\n");
    for bag in bags {
        for e in &bag.reference_events {
            writeln!(
                events,
                "{},{},{},{}",
                bag.clip_id,
                e.class_id,
                fixed3(e.onset_s),
                fixed3(e.offset_s)
            )
            .unwrap();
        }
    }
    write_file(&dir.join(EVENTS_FILE), &events)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, CliError> {
    let features_path = dir.join(FEATURES_FILE);
    let contents = read_file(&features_path)?;
    let (header, rows) = header_and_rows(&features_path, &contents)?;
    let hop_s: f64 = header
        .get(1)
        .and_then(|f| f.strip_prefix("hop_s="))
        .ok_or_else(|| parse_err(&features_path, 1, "missing hop_s header field"))
        .and_then(|v| parse_field(&features_path, 1, v, "hop"))?;
    let dim = header.len().saturating_sub(4);
    let mut features: Vec<(usize, Vec<Vec<f64>>)> = Vec::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(parse_err(
                &features_path,
                line,
                format!("expected {} fields, got {}", dim + 2, fields.len()),
            ));
        }
        let clip_id: usize = parse_field(&features_path, line, fields[0], "clip id")?;
        let frame_index: usize = parse_field(&features_path, line, fields[1], "frame index")?;
        let values = fields[2..]
            .iter()
            .map(|f| parse_field(&features_path, line, f, "feature value"))
            .collect::<Result<Vec<f64>, _>>()?;
        if features.last().map(|(id, _)| *id) != Some(clip_id) {
            features.push((clip_id, Vec::new()));
        }
        let frames = &mut features.last_mut().unwrap().1;
        if frame_index != frames.len() {
            return Err(parse_err(
                &features_path,
                line,
                format!("frame index {frame_index} out of order"),
            ));
        }
        frames.push(values);
    }

    let labels_path = dir.join(WEAK_LABELS_FILE);
    let contents = read_file(&labels_path)?;
    let (header, rows) = header_and_rows(&labels_path, &contents)?;
    let classes = header.len().saturating_sub(2);
    let mut labels: Vec<(usize, Vec<bool>)> = Vec::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != classes + 1 {
            return Err(parse_err(&labels_path, line, "wrong field count"));
        }
        let clip_id: usize = parse_field(&labels_path, line, fields[0], "clip id")?;
        let row_labels = fields[1..]
            .iter()
            .map(|f| match *f {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(parse_err(
                    &labels_path,
                    line,
                    format!("weak label must be 0 or 1, got `{other}`"),
                )),
            })
            .collect::<Result<Vec<bool>, _>>()?;
        labels.push((clip_id, row_labels));
    }

    let events = read_events(&dir.join(EVENTS_FILE))?;

    if features.len() != labels.len() {
        return Err(parse_err(
            &labels_path,
            1,
            format!(
                "{} clips in features but {} label rows",
                features.len(),
                labels.len()
            ),
        ));
    }
    let mut bags = Vec::with_capacity(features.len());
    for ((clip_id, frames), (label_clip, weak_labels)) in features.into_iter().zip(labels) {
        if clip_id != label_clip {
            return Err(parse_err(&labels_path, 1, "clip ids disagree across files"));
        }
        let reference_events = events
            .iter()
            .filter(|(id, _)| *id == clip_id)
            .map(|(_, e)| *e)
            .collect();
        bags.push(Bag {
            clip_id,
            features: Mat::from_rows(&frames),
            weak_labels,
            reference_events,
        });
    }
    Ok(Dataset { bags, hop_s })
}

/// Reads a strong-events file on its own (plot data needs no features).
pub fn read_events(path: &Path) -> Result<Vec<(usize, Event)>, CliError> {
    let contents = read_file(path)?;
    let (_, rows) = header_and_rows(path, &contents)?;
    let mut events: Vec<(usize, Event)> = Vec::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(path, line, "wrong field count"));
        }
        let clip_id: usize = parse_field(path, line, fields[0], "clip id")?;
        let class_id: usize = parse_field(path, line, fields[1], "class id")?;
        let onset: f64 = parse_field(path, line, fields[2], "onset")?;
        let offset: f64 = parse_field(path, line, fields[3], "offset")?;
        events.push((clip_id, Event::new(class_id, onset, offset)));
    }
    Ok(events)
}

// --- checkpoint ----------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub pooling: PoolingKind,
    pub lambda: f64,
    pub weights: ScorerWeights,
    pub power_raw: Vec<f64>,
}

impl Checkpoint {
    pub fn power_params(&self) -> PowerParams {
        PowerParams::from_raw(self.power_raw.clone(), self.lambda)
    }

    pub fn pool_params(&self) -> Option<PowerParams> {
        (self.pooling == PoolingKind::Power).then(|| self.power_params())
    }

    /// Exponent used for the power-threshold column of dumps; 1 outside
    /// power pooling, where the family coincides with linear softmax.
    pub fn exponent_for(&self, class: usize) -> f64 {
        if self.pooling == PoolingKind::Power {
            self.power_params().exponent(class)
        } else {
            1.0
        }
    }
}

fn push_matrix(out: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]) {
    writeln!(out, "{name},{rows},{cols}").unwrap();
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
            first = false;
        }
        out.push('\n');
    }
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CliError> {
    let w = &checkpoint.weights;
    let mut out = format!(
        "schema=1,checkpoint,pooling={},input_dim={},hidden_dim={},num_classes={},lambda={}\n",
        checkpoint.pooling,
        w.input_dim(),
        w.hidden_dim(),
        w.num_classes(),
        checkpoint.lambda
    );
    push_matrix(&mut out, "rho", 1, checkpoint.power_raw.len(), &checkpoint.power_raw);
    push_matrix(&mut out, "w1", w.hidden_dim(), w.input_dim(), w.w1.data());
    push_matrix(&mut out, "b1", 1, w.b1.len(), &w.b1);
    push_matrix(&mut out, "w2", w.num_classes(), w.hidden_dim(), w.w2.data());
    push_matrix(&mut out, "b2", 1, w.b2.len(), &w.b2);
    write_file(path, &out)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let contents = read_file(path)?;
    let mut lines = contents.lines().enumerate().peekable();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.first() != Some(&"schema=1") || fields.get(1) != Some(&"checkpoint") {
        return Err(parse_err(path, 1, "not a checkpoint header"));
    }
    let mut pooling = None;
    let mut lambda = None;
    for field in &fields[2..] {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(path, 1, format!("malformed header field `{field}`")))?;
        match key {
            "pooling" => pooling = Some(value.parse::<PoolingKind>()?),
            "lambda" => lambda = Some(parse_field::<f64>(path, 1, value, "lambda")?),
            _ => {}
        }
    }
    let pooling = pooling.ok_or_else(|| parse_err(path, 1, "missing pooling"))?;
    let lambda = lambda.ok_or_else(|| parse_err(path, 1, "missing lambda"))?;

    let mut read_matrix = |expected: &str| -> Result<(usize, usize, Vec<f64>), CliError> {
        let (line, shape) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("missing {expected} block")))?;
        let parts: Vec<&str> = shape.split(',').collect();
        if parts.len() != 3 || parts[0] != expected {
            return Err(parse_err(path, line + 1, format!("expected `{expected},rows,cols`")));
        }
        let rows: usize = parse_field(path, line + 1, parts[1], "rows")?;
        let cols: usize = parse_field(path, line + 1, parts[2], "cols")?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (line, row) = lines
                .next()
                .ok_or_else(|| parse_err(path, 0, "truncated matrix"))?;
            for field in row.split(',') {
                data.push(parse_field::<f64>(path, line + 1, field, "weight")?);
            }
        }
        if data.len() != rows * cols {
            return Err(parse_err(path, line + 1, "matrix shape mismatch"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, line + 1, "non-finite weight"));
        }
        Ok((rows, cols, data))
    };

    let (_, classes_rho, rho) = read_matrix("rho")?;
    let (hidden, input, w1) = read_matrix("w1")?;
    let (_, b1_len, b1) = read_matrix("b1")?;
    let (classes, hidden2, w2) = read_matrix("w2")?;
    let (_, b2_len, b2) = read_matrix("b2")?;
    if b1_len != hidden || hidden2 != hidden || b2_len != classes || classes_rho != classes {
        return Err(parse_err(path, 1, "inconsistent checkpoint shapes"));
    }
    Ok(Checkpoint {
        pooling,
        lambda,
        weights: ScorerWeights {
            w1: Mat::from_vec(hidden, input, w1),
            b1,
            w2: Mat::from_vec(classes, hidden, w2),
            b2,
        },
        power_raw: rho,
    })
}

// --- reports and run artifacts -------------------------------------------

fn push_level(out: &mut String, name: &str, level: &LevelMetrics) {
    let mut totals = (0usize, 0usize, 0usize);
    for class in &level.per_class {
        totals.0 += class.counts.true_pos;
        totals.1 += class.counts.false_pos;
        totals.2 += class.counts.false_neg;
        writeln!(
            out,
            "{name},{},{},{},{},{},{},{},{}",
            class.class_id,
            class.counts.true_pos,
            class.counts.false_pos,
            class.counts.false_neg,
            class.scores.precision,
            class.scores.recall,
            class.scores.f1,
            class.scores.zero_support as u8
        )
        .unwrap();
    }
    let m = &level.macro_avg;
    writeln!(
        out,
        "{name},macro,{},{},{},{},{},{},{}",
        totals.0, totals.1, totals.2, m.precision, m.recall, m.f1, m.zero_support as u8
    )
    .unwrap();
}

pub fn write_metrics_report(path: &Path, report: &MetricsReport) -> Result<(), CliError> {
    let mut out =
        String::from("schema=1,level,class,tp,fp,fn,precision,recall,f1,zero_support\n");
    push_level(&mut out, "clip", &report.clip);
    push_level(&mut out, "segment", &report.segment);
    push_level(&mut out, "event", &report.event);
    write_file(path, &out)
}

/// Full inverse of [`write_metrics_report`]; scores are taken from the file
/// as written so a read/write cycle is byte-stable.
pub fn read_metrics_report(path: &Path) -> Result<MetricsReport, CliError> {
    use milpool::eval::{ClassMetrics, Counts};
    let contents = read_file(path)?;
    let (_, rows) = header_and_rows(path, &contents)?;
    let mut levels: Vec<(String, LevelMetrics)> = Vec::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 9 {
            return Err(parse_err(path, line, "wrong field count"));
        }
        let scores = Prf {
            precision: parse_field(path, line, fields[5], "precision")?,
            recall: parse_field(path, line, fields[6], "recall")?,
            f1: parse_field(path, line, fields[7], "f1")?,
            zero_support: fields[8] == "1",
        };
        let level_name = fields[0].to_string();
        if levels.last().map(|(n, _)| n.as_str()) != Some(level_name.as_str()) {
            levels.push((
                level_name.clone(),
                LevelMetrics {
                    per_class: Vec::new(),
                    macro_avg: scores,
                },
            ));
        }
        let level = &mut levels.last_mut().unwrap().1;
        if fields[1] == "macro" {
            level.macro_avg = scores;
        } else {
            level.per_class.push(ClassMetrics {
                class_id: parse_field(path, line, fields[1], "class id")?,
                counts: Counts {
                    true_pos: parse_field(path, line, fields[2], "tp")?,
                    false_pos: parse_field(path, line, fields[3], "fp")?,
                    false_neg: parse_field(path, line, fields[4], "fn")?,
                },
                scores,
            });
        }
    }
    let take = |name: &str| -> Result<LevelMetrics, CliError> {
        levels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, l)| l.clone())
            .ok_or_else(|| parse_err(path, 1, format!("missing {name} rows")))
    };
    Ok(MetricsReport {
        clip: take("clip")?,
        segment: take("segment")?,
        event: take("event")?,
    })
}

/// Reads back the macro rows of a written report: (level name, scores).
pub fn read_macro_rows(path: &Path) -> Result<Vec<(String, Prf)>, CliError> {
    let contents = read_file(path)?;
    let (_, rows) = header_and_rows(path, &contents)?;
    let mut out = Vec::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 9 {
            return Err(parse_err(path, line, "wrong field count"));
        }
        if fields[1] != "macro" {
            continue;
        }
        out.push((
            fields[0].to_string(),
            Prf {
                precision: parse_field(path, line, fields[5], "precision")?,
                recall: parse_field(path, line, fields[6], "recall")?,
                f1: parse_field(path, line, fields[7], "f1")?,
                zero_support: fields[8] == "1",
            },
        ));
    }
    Ok(out)
}

pub fn write_trajectory(path: &Path, history: &[Vec<f64>]) -> Result<(), CliError> {
    let mut out = String::from("schema=1,epoch,class_id,n\n");
    for (epoch, snapshot) in history.iter().enumerate() {
        for (class_id, n) in snapshot.iter().enumerate() {
            writeln!(out, "{epoch},{class_id},{n}").unwrap();
        }
    }
    write_file(path, &out)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let contents = read_file(path)?;
    let (_, rows) = header_and_rows(path, &contents)?;
    let mut history: Vec<Vec<f64>> = Vec::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, line, "wrong field count"));
        }
        let epoch: usize = parse_field(path, line, fields[0], "epoch")?;
        let class_id: usize = parse_field(path, line, fields[1], "class id")?;
        let n: f64 = parse_field(path, line, fields[2], "exponent")?;
        if epoch == history.len() {
            history.push(Vec::new());
        }
        if epoch + 1 != history.len() || class_id != history[epoch].len() {
            return Err(parse_err(path, line, "trajectory rows out of order"));
        }
        history[epoch].push(n);
    }
    Ok(history)
}

pub fn write_loss_history(path: &Path, losses: &[f64]) -> Result<(), CliError> {
    let mut out = String::from("schema=1,epoch,loss\n");
    for (epoch, loss) in losses.iter().enumerate() {
        writeln!(out, "{epoch},{loss}").unwrap();
    }
    write_file(path, &out)
}

pub fn read_loss_history(path: &Path) -> Result<Vec<f64>, CliError> {
    let contents = read_file(path)?;
    let (_, rows) = header_and_rows(path, &contents)?;
    let mut losses = Vec::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_err(path, line, "wrong field count"));
        }
        let epoch: usize = parse_field(path, line, fields[0], "epoch")?;
        if epoch != losses.len() {
            return Err(parse_err(path, line, "epochs out of order"));
        }
        losses.push(parse_field(path, line, fields[1], "loss")?);
    }
    Ok(losses)
}

/// Frame-probability dump: one row per (clip, frame) with a three-decimal
/// time column and full-precision per-class probabilities.
pub fn write_predictions(
    path: &Path,
    rows: &[PredictionRow],
    num_classes: usize,
) -> Result<(), CliError> {
    let mut out = String::from("schema=1,clip_id,frame_index,time_s");
    for c in 0..num_classes {
        write!(out, ",p{c}").unwrap();
    }
    out.push('\n');
    for (clip_id, frame, time_s, probs) in rows {
        write!(out, "{clip_id},{frame},{}", fixed3(*time_s)).unwrap();
        for p in probs {
            write!(out, ",{p}").unwrap();
        }
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, CliError> {
    let contents = read_file(path)?;
    let (header, rows) = header_and_rows(path, &contents)?;
    let classes = header.len().saturating_sub(4);
    let mut out = Vec::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != classes + 3 {
            return Err(parse_err(path, line, "wrong field count"));
        }
        out.push((
            parse_field(path, line, fields[0], "clip id")?,
            parse_field(path, line, fields[1], "frame index")?,
            parse_field(path, line, fields[2], "time")?,
            fields[3..]
                .iter()
                .map(|f| parse_field(path, line, f, "probability"))
                .collect::<Result<Vec<f64>, _>>()?,
        ));
    }
    Ok(out)
}

/// Per-clip, per-class pooled probability and both gradient-sign thresholds.
pub fn write_thresholds(path: &Path, rows: &[ThresholdRow]) -> Result<(), CliError> {
    let mut out = String::from("schema=1,clip_id,class_id,clip_prob,d_power,d_linear\n");
    for (clip_id, class_id, clip_prob, d_power, d_linear) in rows {
        writeln!(out, "{clip_id},{class_id},{clip_prob},{d_power},{d_linear}").unwrap();
    }
    write_file(path, &out)
}

pub fn read_thresholds(path: &Path) -> Result<Vec<ThresholdRow>, CliError> {
    let contents = read_file(path)?;
    let (_, rows) = header_and_rows(path, &contents)?;
    let mut out = Vec::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(path, line, "wrong field count"));
        }
        out.push((
            parse_field(path, line, fields[0], "clip id")?,
            parse_field(path, line, fields[1], "class id")?,
            parse_field(path, line, fields[2], "clip probability")?,
            parse_field(path, line, fields[3], "power threshold")?,
            parse_field(path, line, fields[4], "linear threshold")?,
        ));
    }
    Ok(out)
}

// --- sweep summary --------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub pooling: PoolingKind,
    pub seed: u64,
    pub level: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Rank correlation of learned exponents with class mean durations;
    /// NaN outside power pooling.
    pub spearman_nc_duration: f64,
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut out = String::from(
        "schema=1,pooling,seed,level,macro_precision,macro_recall,macro_f1,spearman_nc_duration\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.pooling, r.seed, r.level, r.precision, r.recall, r.f1, r.spearman_nc_duration
        )
        .unwrap();
    }
    write_file(path, &out)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, CliError> {
    let contents = read_file(path)?;
    let (_, rows) = header_and_rows(path, &contents)?;
    let mut out = Vec::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(path, line, "wrong field count"));
        }
        out.push(SummaryRow {
            pooling: fields[0].parse()?,
            seed: parse_field(path, line, fields[1], "seed")?,
            level: fields[2].to_string(),
            precision: parse_field(path, line, fields[3], "precision")?,
            recall: parse_field(path, line, fields[4], "recall")?,
            f1: parse_field(path, line, fields[5], "f1")?,
            spearman_nc_duration: parse_field(path, line, fields[6], "spearman")?,
        });
    }
    Ok(out)
}

// --- plot data ------------------------------------------------------------

/// One row per frame of the selected clip and class: time, frame
/// probability, both sign thresholds, and the reference activity.
pub fn write_frame_series(path: &Path, rows: &[FrameSeriesRow]) -> Result<(), CliError> {
    let mut out = String::from("schema=1,time_s,y_f,d_power,d_linear,ref_active\n");
    for (time_s, y_f, d_power, d_linear, active) in rows {
        writeln!(
            out,
            "{},{y_f},{d_power},{d_linear},{}",
            fixed3(*time_s),
            *active as u8
        )
        .unwrap();
    }
    write_file(path, &out)
}

pub fn read_frame_series(path: &Path) -> Result<Vec<FrameSeriesRow>, CliError> {
    let contents = read_file(path)?;
    let (_, rows) = header_and_rows(path, &contents)?;
    let mut out = Vec::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(path, line, "wrong field count"));
        }
        out.push((
            parse_field(path, line, fields[0], "time")?,
            parse_field(path, line, fields[1], "frame probability")?,
            parse_field(path, line, fields[2], "power threshold")?,
            parse_field(path, line, fields[3], "linear threshold")?,
            fields[4] == "1",
        ));
    }
    Ok(out)
}

/// Learned exponent against class mean duration, sorted by duration.
pub fn write_nc_vs_duration(path: &Path, rows: &[(usize, f64, f64)]) -> Result<(), CliError> {
    let mut out = String::from("schema=1,class_id,mean_duration_s,n\n");
    for (class_id, duration, n) in rows {
        writeln!(out, "{class_id},{duration},{n}").unwrap();
    }
    write_file(path, &out)
}

pub fn read_nc_vs_duration(path: &Path) -> Result<Vec<(usize, f64, f64)>, CliError> {
    let contents = read_file(path)?;
    let (_, rows) = header_and_rows(path, &contents)?;
    let mut out = Vec::new();
    for (line, row) in rows {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, line, "wrong field count"));
        }
        out.push((
            parse_field(path, line, fields[0], "class id")?,
            parse_field(path, line, fields[1], "duration")?,
            parse_field(path, line, fields[2], "exponent")?,
        ));
    }
    Ok(out)
}

pub fn dataset_paths(dir: &Path) -> [PathBuf; 3] {
    [
        dir.join(FEATURES_FILE),
        dir.join(WEAK_LABELS_FILE),
        dir.join(EVENTS_FILE),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use milpool::synth::{generate_dataset, SynthConfig};

    #[test]
    fn dataset_round_trips_losslessly() {
        let config = SynthConfig::default_benchmark(5, 21);
        let bags = generate_dataset(&config).unwrap();
        let dir = std::env::temp_dir().join("milpool_fmt_test_ds");
        write_dataset(&dir, &bags, config.frame_hop_s).unwrap();
        let back = read_dataset(&dir).unwrap();
        assert_eq!(bags, back.bags);
        assert_eq!(back.hop_s, config.frame_hop_s);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        use milpool::scorer::{init_weights, ScorerConfig};
        let checkpoint = Checkpoint {
            pooling: PoolingKind::Power,
            lambda: 1e-4,
            weights: init_weights(&ScorerConfig {
                input_dim: 16,
                hidden_dim: 32,
                num_classes: 8,
                seed: 3,
            }),
            power_raw: PowerParams::new(8, 1e-4).raw().to_vec(),
        };
        let path = std::env::temp_dir().join("milpool_fmt_test_ckpt.txt");
        write_checkpoint(&path, &checkpoint).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(checkpoint, back);
        std::fs::remove_file(&path).ok();
    }
}
