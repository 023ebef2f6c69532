//! Subcommand implementations: generate, train, evaluate, plotdata, sweep.

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::formats::{
    self, Checkpoint, Dataset, FrameSeriesRow, SummaryRow, CHECKPOINT_FILE, EVENTS_FILE,
    FRAME_SERIES_FILE, LOSS_FILE, METRICS_FILE, NC_DURATION_FILE, PREDICTIONS_FILE, SUMMARY_FILE,
    THRESHOLDS_FILE, TRAJECTORY_FILE,
};
use crate::svg;
use milpool::eval::mean_event_durations;
use milpool::pipeline::evaluate_model;
use milpool::pooling::PoolingKind;
use milpool::scorer::score_frames;
use milpool::stats::{mean, spearman};
use milpool::synth::{generate_dataset, SynthConfig};
use milpool::train::{train_with_observer, TrainState};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub fn cmd_generate(config: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let synth = config.synth_config();
    let bags = generate_dataset(&synth)?;
    formats::write_dataset(out, &bags, synth.frame_hop_s)?;
    println!(
        "wrote {} clips x {} classes ({} frames/clip) to {}",
        bags.len(),
        synth.num_classes(),
        synth.frames_per_clip(),
        out.display()
    );
    let all_events: Vec<_> = bags
        .iter()
        .flat_map(|b| b.reference_events.iter().copied())
        .collect();
    let durations = mean_event_durations(&all_events, synth.num_classes(), synth.frame_hop_s);
    for (class, class_spec) in synth.classes.iter().enumerate() {
        let count = all_events.iter().filter(|e| e.class_id == class).count();
        println!(
            "  class {class}: {count} events, mean duration {:.3} s (configured {:.3} s)",
            durations[class], class_spec.mean_duration_s
        );
    }
    Ok(())
}

/// Trains on a dataset directory and writes the run artifacts into `out`:
/// checkpoint, training-set metrics report, exponent trajectory, loss
/// history, and the frame-prediction dump with per-clip thresholds.
pub fn cmd_train(
    data_dir: &Path,
    out_dir: &Path,
    config: &ExperimentConfig,
) -> Result<TrainState, CliError> {
    let dataset = formats::read_dataset(data_dir)?;
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let every = config.checkpoint_every;
    let lambda = config.train.lambda;
    let pooling = config.train.pooling;
    let mut checkpoint_error = None;
    let state = train_with_observer(&dataset.bags, &config.train, &mut |epoch, weights, power| {
        if every > 0 && (epoch + 1) % every == 0 && checkpoint_error.is_none() {
            let checkpoint = Checkpoint {
                pooling,
                lambda,
                weights: weights.clone(),
                power_raw: power.raw().to_vec(),
            };
            let path = out_dir.join(format!("checkpoint_epoch{:04}.txt", epoch + 1));
            if let Err(e) = formats::write_checkpoint(&path, &checkpoint) {
                checkpoint_error = Some(e);
            }
        }
    })?;
    if let Some(e) = checkpoint_error {
        return Err(e);
    }

    let checkpoint = Checkpoint {
        pooling,
        lambda,
        weights: state.weights.clone(),
        power_raw: state.power.raw().to_vec(),
    };
    formats::write_checkpoint(&out_dir.join(CHECKPOINT_FILE), &checkpoint)?;
    formats::write_trajectory(&out_dir.join(TRAJECTORY_FILE), &state.exponent_history)?;
    formats::write_loss_history(&out_dir.join(LOSS_FILE), &state.loss_history)?;

    let outcome = evaluate_model(
        &state.weights,
        pooling,
        checkpoint.pool_params().as_ref(),
        &dataset.bags,
        dataset.hop_s,
        &config.eval,
    )?;
    formats::write_metrics_report(&out_dir.join(METRICS_FILE), &outcome.report)?;
    write_prediction_dump(out_dir, &checkpoint, &dataset)?;

    println!(
        "{pooling}: {} epochs, final loss {:.6}",
        state.epochs_run,
        state.loss_history.last().unwrap()
    );
    println!(
        "exponents: [{}]",
        state
            .power
            .exponents()
            .iter()
            .map(|n| format!("{n:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!(
        "training-set macro F1: clip {:.4} segment {:.4} event {:.4}",
        outcome.report.clip.macro_avg.f1,
        outcome.report.segment.macro_avg.f1,
        outcome.report.event.macro_avg.f1
    );
    Ok(state)
}

fn write_prediction_dump(
    out_dir: &Path,
    checkpoint: &Checkpoint,
    dataset: &Dataset,
) -> Result<(), CliError> {
    let num_classes = dataset.num_classes();
    let params = checkpoint.pool_params();
    let mut predictions = Vec::new();
    let mut thresholds = Vec::new();
    for bag in &dataset.bags {
        let probs = score_frames(&checkpoint.weights, &bag.features)
            .map_err(milpool::train::TrainError::from)?;
        for t in 0..probs.frames() {
            predictions.push((
                bag.clip_id,
                t,
                t as f64 * dataset.hop_s,
                (0..num_classes).map(|c| probs.get(t, c)).collect(),
            ));
        }
        let clip = milpool::pooling::pool_forward(checkpoint.pooling, params.as_ref(), &probs)
            .map_err(milpool::train::TrainError::from)?;
        for c in 0..num_classes {
            let yc = clip.get(c);
            let n = checkpoint.exponent_for(c);
            thresholds.push((bag.clip_id, c, yc, n / (n + 1.0) * yc, 0.5 * yc));
        }
    }
    formats::write_predictions(&out_dir.join(PREDICTIONS_FILE), &predictions, num_classes)?;
    formats::write_thresholds(&out_dir.join(THRESHOLDS_FILE), &thresholds)
}

pub fn cmd_evaluate(
    checkpoint_path: &Path,
    data_dir: &Path,
    out_dir: &Path,
    config: &ExperimentConfig,
) -> Result<(), CliError> {
    let checkpoint = formats::read_checkpoint(checkpoint_path)?;
    let dataset = formats::read_dataset(data_dir)?;
    if checkpoint.weights.num_classes() != dataset.num_classes() {
        return Err(CliError::Config(format!(
            "checkpoint covers {} classes but the dataset has {}",
            checkpoint.weights.num_classes(),
            dataset.num_classes()
        )));
    }
    if checkpoint.weights.input_dim() != dataset.bags[0].features.cols() {
        return Err(CliError::Config(format!(
            "checkpoint expects {}-dimensional features but the dataset has {}",
            checkpoint.weights.input_dim(),
            dataset.bags[0].features.cols()
        )));
    }
    let outcome = evaluate_model(
        &checkpoint.weights,
        checkpoint.pooling,
        checkpoint.pool_params().as_ref(),
        &dataset.bags,
        dataset.hop_s,
        &config.eval,
    )?;
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    formats::write_metrics_report(&out_dir.join(METRICS_FILE), &outcome.report)?;
    for (level, metrics) in [
        ("clip", &outcome.report.clip),
        ("segment", &outcome.report.segment),
        ("event", &outcome.report.event),
    ] {
        println!(
            "{level}: macro P {:.4} R {:.4} F1 {:.4}",
            metrics.macro_avg.precision, metrics.macro_avg.recall, metrics.macro_avg.f1
        );
    }
    Ok(())
}

pub fn cmd_plotdata(
    run_dir: &Path,
    data_dir: &Path,
    clip_id: usize,
    class_id: usize,
    out_dir: &Path,
    render_svg: bool,
) -> Result<(), CliError> {
    let predictions = formats::read_predictions(&run_dir.join(PREDICTIONS_FILE))?;
    let thresholds = formats::read_thresholds(&run_dir.join(THRESHOLDS_FILE))?;
    let trajectory = formats::read_trajectory(&run_dir.join(TRAJECTORY_FILE))?;
    let events = formats::read_events(&data_dir.join(EVENTS_FILE))?;

    let num_classes = predictions.first().map_or(0, |(_, _, _, p)| p.len());
    if class_id >= num_classes {
        return Err(CliError::Config(format!(
            "class {class_id} out of range for {num_classes} classes"
        )));
    }
    let clip_rows: Vec<_> = predictions
        .iter()
        .filter(|(id, _, _, _)| *id == clip_id)
        .collect();
    if clip_rows.is_empty() {
        return Err(CliError::Config(format!(
            "clip {clip_id} not present in the run's prediction dump"
        )));
    }
    let (_, _, _, clip_threshold_row) = thresholds
        .iter()
        .find(|(id, c, _, _, _)| *id == clip_id && *c == class_id)
        .map(|(a, b, yc, dp, dl)| (*a, *b, *yc, (*dp, *dl)))
        .ok_or_else(|| {
            CliError::Config(format!(
                "no threshold row for clip {clip_id}, class {class_id}"
            ))
        })?;
    let (d_power, d_linear) = clip_threshold_row;
    let hop = clip_rows
        .get(1)
        .map(|(_, _, t, _)| *t)
        .unwrap_or(0.1)
        .max(1e-9);
    let series_rows: Vec<FrameSeriesRow> = clip_rows
        .iter()
        .map(|(_, _, time_s, probs)| {
            let center = *time_s + 0.5 * hop;
            let active = events.iter().any(|(id, e)| {
                *id == clip_id
                    && e.class_id == class_id
                    && e.onset_s <= center
                    && center < e.offset_s
            });
            (*time_s, probs[class_id], d_power, d_linear, active)
        })
        .collect();
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    formats::write_frame_series(&out_dir.join(FRAME_SERIES_FILE), &series_rows)?;

    let final_exponents = trajectory
        .last()
        .ok_or_else(|| CliError::Config("empty exponent trajectory".into()))?;
    let flat_events: Vec<_> = events.iter().map(|(_, e)| *e).collect();
    let durations = mean_event_durations(&flat_events, num_classes, hop);
    let mut nc_rows: Vec<(usize, f64, f64)> = (0..num_classes)
        .map(|c| (c, durations[c], final_exponents[c]))
        .collect();
    nc_rows.sort_by(|a, b| (a.1, a.0).partial_cmp(&(b.1, b.0)).unwrap());
    formats::write_nc_vs_duration(&out_dir.join(NC_DURATION_FILE), &nc_rows)?;

    if render_svg {
        let line = |label, color, f: &dyn Fn(&FrameSeriesRow) -> f64| svg::Series {
            label,
            color,
            points: series_rows.iter().map(|r| (r.0, f(r))).collect(),
        };
        let frame_chart = svg::chart(
            &format!("clip {clip_id}, class {class_id}"),
            "time (s)",
            "probability",
            &[
                line("frame probability", "#1f77b4", &|r| r.1),
                line("power threshold", "#d62728", &|r| r.2),
                line("linear threshold", "#2ca02c", &|r| r.3),
                line("reference activity", "#999999", &|r| r.4 as u8 as f64),
            ],
            false,
        );
        std::fs::write(out_dir.join("frame_series.svg"), frame_chart)
            .map_err(CliError::io(out_dir.join("frame_series.svg")))?;
        let nc_chart = svg::chart(
            "learned exponent vs mean event duration",
            "mean duration (s)",
            "exponent",
            &[svg::Series {
                label: "n per class",
                color: "#d62728",
                points: nc_rows.iter().map(|&(_, d, n)| (d, n)).collect(),
            }],
            true,
        );
        std::fs::write(out_dir.join("nc_vs_duration.svg"), nc_chart)
            .map_err(CliError::io(out_dir.join("nc_vs_duration.svg")))?;
    }
    println!(
        "wrote {} and {} to {}",
        FRAME_SERIES_FILE,
        NC_DURATION_FILE,
        out_dir.display()
    );
    Ok(())
}

struct SweepJob {
    pooling: PoolingKind,
    seed: u64,
}

struct SweepRun {
    pooling: PoolingKind,
    rows: Vec<SummaryRow>,
    event_f1: f64,
}

/// Trains and evaluates every (pooling, seed) pair on shared per-seed
/// datasets. Workers pull jobs from a queue; each run writes only inside its
/// own subdirectory, and the summary is assembled after all workers finish.
pub fn cmd_sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    let sweep = &config.sweep;
    if sweep.poolings.is_empty() || sweep.seeds == 0 {
        return Err(CliError::Config(
            "sweep needs at least one pooling kind and one seed".into(),
        ));
    }
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;

    let mut datasets = Vec::with_capacity(sweep.seeds);
    for k in 0..sweep.seeds as u64 {
        let train_synth: SynthConfig = config
            .data
            .build(config.num_clips, config.data_seed + 7919 * k + 1);
        let test_synth = train_synth.split(sweep.test_clips, config.data_seed + 7919 * k + 2);
        datasets.push((generate_dataset(&train_synth)?, generate_dataset(&test_synth)?));
    }

    let jobs: Vec<SweepJob> = sweep
        .poolings
        .iter()
        .flat_map(|&pooling| (0..sweep.seeds as u64).map(move |seed| SweepJob { pooling, seed }))
        .collect();
    let next_job = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SweepRun, CliError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let workers = sweep.jobs.max(1).min(jobs.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next_job.fetch_add(1, Ordering::SeqCst);
                if index >= jobs.len() {
                    break;
                }
                let job = &jobs[index];
                let result = run_sweep_job(config, out_dir, &datasets, job);
                results.lock().unwrap()[index] = Some(result);
            });
        }
    });

    let mut rows = Vec::new();
    let mut by_kind: Vec<(PoolingKind, Vec<f64>)> = Vec::new();
    for slot in results.into_inner().unwrap() {
        let run = slot.expect("every job ran")?;
        for (kind, f1s) in &mut by_kind {
            if *kind == run.pooling {
                f1s.push(run.event_f1);
            }
        }
        if !by_kind.iter().any(|(k, _)| *k == run.pooling) {
            by_kind.push((run.pooling, vec![run.event_f1]));
        }
        rows.extend(run.rows);
    }
    formats::write_summary(&out_dir.join(SUMMARY_FILE), &rows)?;
    for (kind, f1s) in &by_kind {
        println!(
            "{kind}: mean event-level macro F1 {:.4} over {} seeds",
            mean(f1s),
            f1s.len()
        );
    }
    Ok(())
}

fn run_sweep_job(
    config: &ExperimentConfig,
    out_dir: &Path,
    datasets: &[(Vec<milpool::synth::Bag>, Vec<milpool::synth::Bag>)],
    job: &SweepJob,
) -> Result<SweepRun, CliError> {
    let (train_bags, test_bags) = &datasets[job.seed as usize];
    let mut train_config = config.train.clone();
    train_config.pooling = job.pooling;
    train_config.seed = config.train.seed + job.seed;
    let state = milpool::train::train(train_bags, &train_config)?;
    let checkpoint = Checkpoint {
        pooling: job.pooling,
        lambda: train_config.lambda,
        weights: state.weights.clone(),
        power_raw: state.power.raw().to_vec(),
    };
    let outcome = evaluate_model(
        &state.weights,
        job.pooling,
        checkpoint.pool_params().as_ref(),
        test_bags,
        config.data.frame_hop_s,
        &config.eval,
    )?;

    let run_dir = out_dir.join(format!("{}-seed{}", job.pooling, job.seed));
    std::fs::create_dir_all(&run_dir).map_err(CliError::io(&run_dir))?;
    formats::write_checkpoint(&run_dir.join(CHECKPOINT_FILE), &checkpoint)?;
    formats::write_metrics_report(&run_dir.join(METRICS_FILE), &outcome.report)?;
    formats::write_trajectory(&run_dir.join(TRAJECTORY_FILE), &state.exponent_history)?;
    formats::write_loss_history(&run_dir.join(LOSS_FILE), &state.loss_history)?;

    let correlation = if job.pooling == PoolingKind::Power {
        let all_events: Vec<_> = train_bags
            .iter()
            .flat_map(|b| b.reference_events.iter().copied())
            .collect();
        let durations = mean_event_durations(
            &all_events,
            checkpoint.weights.num_classes(),
            config.data.frame_hop_s,
        );
        spearman(&state.power.exponents(), &durations)
    } else {
        f64::NAN
    };
    let rows = [
        ("clip", &outcome.report.clip),
        ("segment", &outcome.report.segment),
        ("event", &outcome.report.event),
    ]
    .into_iter()
    .map(|(level, metrics)| SummaryRow {
        pooling: job.pooling,
        seed: job.seed,
        level: level.to_string(),
        precision: metrics.macro_avg.precision,
        recall: metrics.macro_avg.recall,
        f1: metrics.macro_avg.f1,
        spearman_nc_duration: correlation,
    })
    .collect();
    Ok(SweepRun {
        pooling: job.pooling,
        rows,
        event_f1: outcome.report.event.macro_avg.f1,
    })
}
