//! Experiment orchestration: per-instance training runs (parallel across
//! instances), CSV emission, checkpoints, and the stats command.
//!
//! Instance `i` is fully determined by `base seed + i`, so outputs are
//! byte-identical across reruns and independent of which siblings run.
//! A diverged instance is recorded with its status in `instances.csv` and
//! excluded from epoch/summary output; it does not abort the others.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::cortex::CortexState;
use crate::env::TrajectoryRow;
use crate::error::{Error, Result};
use crate::stats::{epoch_aggregate, pooled_t_test, EpochRecord, EpochSummary, TTestResult};
use crate::trainer::{epoch_schedule, run_training, Mode, SessionEnd, TrainingRun};

/// One row of `sessions.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub instance: u32,
    pub session: usize,
    pub epoch: usize,
    pub epoch_type: Mode,
    pub bounces: u64,
    pub steps: usize,
    pub left_moves: u64,
    pub right_moves: u64,
    pub total_reward: f64,
    pub ended_by: SessionEnd,
}

/// One row of `epochs.csv`; dominance is empty when neither arm moved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub instance: u32,
    pub epoch: usize,
    pub epoch_type: Mode,
    pub bounces: u64,
    pub left_moves: u64,
    pub right_moves: u64,
    pub dominance: Option<f64>,
}

impl From<&EpochRecord> for EpochRow {
    fn from(r: &EpochRecord) -> EpochRow {
        EpochRow {
            instance: r.instance,
            epoch: r.epoch,
            epoch_type: r.epoch_type,
            bounces: r.bounces,
            left_moves: r.left_moves,
            right_moves: r.right_moves,
            dominance: r.dominance(),
        }
    }
}

impl EpochRow {
    fn into_record(self) -> EpochRecord {
        EpochRecord {
            instance: self.instance,
            epoch: self.epoch,
            epoch_type: self.epoch_type,
            bounces: self.bounces,
            left_moves: self.left_moves,
            right_moves: self.right_moves,
            sessions: 0, // not stored in the CSV
        }
    }
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub epoch: usize,
    pub epoch_type: Mode,
    pub mean_bounces: f64,
    pub sd_bounces: f64,
    pub mean_dominance: Option<f64>,
    pub sd_dominance: Option<f64>,
    pub n_instances: usize,
}

impl From<&EpochSummary> for SummaryRow {
    fn from(s: &EpochSummary) -> SummaryRow {
        SummaryRow {
            epoch: s.epoch,
            epoch_type: s.epoch_type,
            mean_bounces: s.mean_bounces,
            sd_bounces: s.sd_bounces,
            mean_dominance: s.mean_dominance,
            sd_dominance: s.sd_dominance,
            n_instances: s.n_instances,
        }
    }
}

/// One row of `stats.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub series: String,
    pub epoch_type: Mode,
    pub epoch_a: usize,
    pub epoch_b: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub df: usize,
    pub p_two_sided: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceStatus {
    Trained,
    Diverged,
}

/// One row of `instances.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub instance: u32,
    pub seed: u64,
    pub status: InstanceStatus,
    pub sessions_completed: usize,
}

/// In-memory result of a multi-instance experiment.
pub struct ExperimentOutput {
    pub sessions: Vec<SessionRow>,
    /// Epoch records of non-diverged instances only.
    pub epochs: Vec<EpochRecord>,
    pub summaries: Vec<EpochSummary>,
    pub reports: Vec<InstanceReport>,
    /// Trained model per non-diverged instance.
    pub cortices: Vec<(u32, CortexState)>,
    pub trajectories: Vec<(u32, Vec<TrajectoryRow>)>,
}

/// Runs the given instances (in parallel) and merges their outputs sorted by
/// instance id.
pub fn run_experiment(
    cfg: &RunConfig,
    instances: &[u32],
    dump_trajectories: bool,
) -> Result<ExperimentOutput> {
    cfg.validate()?;

    struct InstanceRun {
        instance: u32,
        seed: u64,
        outcome: std::result::Result<(TrainingRun, Vec<TrajectoryRow>), Error>,
    }

    let runs: Vec<InstanceRun> = instances
        .par_iter()
        .map(|&instance| {
            let seed = cfg.instance_seed(instance);
            let mut trajectory = Vec::new();
            let sink = dump_trajectories.then_some(&mut trajectory);
            let outcome = run_training(&cfg.train, &cfg.env, &cfg.cortex, seed, sink)
                .map(|run| (run, trajectory));
            InstanceRun {
                instance,
                seed,
                outcome,
            }
        })
        .collect();

    let schedule = epoch_schedule(cfg.train.total_sessions, cfg.train.epoch_len);
    let mut output = ExperimentOutput {
        sessions: Vec::new(),
        epochs: Vec::new(),
        summaries: Vec::new(),
        reports: Vec::new(),
        cortices: Vec::new(),
        trajectories: Vec::new(),
    };

    for run in runs {
        match run.outcome {
            Ok((training, trajectory)) => {
                for (idx, s) in training.sessions.iter().enumerate() {
                    let epoch = idx / cfg.train.epoch_len;
                    output.sessions.push(SessionRow {
                        instance: run.instance,
                        session: idx,
                        epoch,
                        epoch_type: schedule[epoch],
                        bounces: s.bounces,
                        steps: s.steps,
                        left_moves: s.moves[0],
                        right_moves: s.moves[1],
                        total_reward: s.total_reward,
                        ended_by: s.ended_by,
                    });
                }
                for mut e in training.epochs {
                    e.instance = run.instance;
                    output.epochs.push(e);
                }
                output.cortices.push((run.instance, training.cortex));
                if dump_trajectories {
                    output.trajectories.push((run.instance, trajectory));
                }
                output.reports.push(InstanceReport {
                    instance: run.instance,
                    seed: run.seed,
                    status: InstanceStatus::Trained,
                    sessions_completed: cfg.train.total_sessions,
                });
            }
            Err(Error::Divergence(msg)) => {
                eprintln!("instance {}: diverged: {msg}", run.instance);
                output.reports.push(InstanceReport {
                    instance: run.instance,
                    seed: run.seed,
                    status: InstanceStatus::Diverged,
                    sessions_completed: 0,
                });
            }
            Err(other) => return Err(other),
        }
    }

    if !output.epochs.is_empty() {
        output.summaries = epoch_aggregate(&output.epochs, None)?;
    }
    Ok(output)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::DataIntegrity(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row.map_err(|e| csv_error(path, e))?);
    }
    Ok(rows)
}

fn checkpoint_path(out_dir: &Path, instance: u32) -> PathBuf {
    out_dir.join(format!("checkpoint_{instance}.cswm"))
}

/// Writes all experiment artifacts for the given instances into
/// `cfg.out_dir`: sessions.csv, epochs.csv, summary.csv, instances.csv,
/// per-instance checkpoints, and optional trajectory dumps.
pub fn write_experiment(cfg: &RunConfig, output: &ExperimentOutput) -> Result<()> {
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    write_csv(&dir.join("sessions.csv"), &output.sessions)?;
    let epoch_rows: Vec<EpochRow> = output.epochs.iter().map(EpochRow::from).collect();
    write_csv(&dir.join("epochs.csv"), &epoch_rows)?;
    let summary_rows: Vec<SummaryRow> = output.summaries.iter().map(SummaryRow::from).collect();
    write_csv(&dir.join("summary.csv"), &summary_rows)?;
    write_csv(&dir.join("instances.csv"), &output.reports)?;

    for (instance, cortex) in &output.cortices {
        checkpoint::save_cortex(cortex, &checkpoint_path(dir, *instance))?;
    }
    for (instance, rows) in &output.trajectories {
        write_csv(&dir.join(format!("trajectory_{instance}.csv")), rows)?;
    }
    Ok(())
}

/// The `experiment` subcommand: train all instances and write everything.
/// Fails with a divergence error only if every instance diverged.
pub fn cmd_experiment(cfg: &RunConfig, dump_trajectories: bool) -> Result<()> {
    let instances: Vec<u32> = (0..cfg.n_instances).collect();
    let output = run_experiment(cfg, &instances, dump_trajectories)?;
    write_experiment(cfg, &output)?;
    for report in &output.reports {
        println!(
            "instance {} (seed {}): {}",
            report.instance,
            report.seed,
            match report.status {
                InstanceStatus::Trained => "trained",
                InstanceStatus::Diverged => "diverged",
            }
        );
    }
    println!(
        "wrote {} session rows and {} epoch rows to {}",
        output.sessions.len(),
        output.epochs.len(),
        cfg.out_dir.display()
    );
    if output.cortices.is_empty() {
        return Err(Error::Divergence("every instance diverged".into()));
    }
    Ok(())
}

/// The `train` subcommand: one instance, same seed derivation and file
/// formats as the full experiment.
pub fn cmd_train(cfg: &RunConfig, instance: u32, dump_trajectories: bool) -> Result<()> {
    let output = run_experiment(cfg, &[instance], dump_trajectories)?;
    write_experiment(cfg, &output)?;
    if output.cortices.is_empty() {
        return Err(Error::Divergence(format!("instance {instance} diverged")));
    }
    println!(
        "instance {instance} (seed {}): {} sessions, wrote {}",
        cfg.instance_seed(instance),
        cfg.train.total_sessions,
        cfg.out_dir.display()
    );
    Ok(())
}

/// Epoch indices of one type, ordered; `ordinal` is 1-based within the type.
fn epoch_of_type(records: &[EpochRecord], epoch_type: Mode, ordinal: usize) -> Result<usize> {
    let mut epochs: Vec<usize> = records
        .iter()
        .filter(|r| r.epoch_type == epoch_type)
        .map(|r| r.epoch)
        .collect();
    epochs.sort_unstable();
    epochs.dedup();
    if ordinal == 0 || ordinal > epochs.len() {
        return Err(Error::DataIntegrity(format!(
            "{epoch_type} epoch {ordinal} out of range (1..={})",
            epochs.len()
        )));
    }
    Ok(epochs[ordinal - 1])
}

fn bounce_sample(records: &[EpochRecord], epoch: usize) -> Vec<f64> {
    let mut rows: Vec<(u32, u64)> = records
        .iter()
        .filter(|r| r.epoch == epoch)
        .map(|r| (r.instance, r.bounces))
        .collect();
    rows.sort_unstable();
    rows.into_iter().map(|(_, b)| b as f64).collect()
}

/// The `stats` subcommand: pooled t-test of cross-instance bounce counts at
/// two epochs of the given type (1-based ordinals within that type), plus
/// dominance summaries per epoch. Writes `stats.csv` next to the printout.
pub fn cmd_stats(
    epochs_csv: &Path,
    epoch_pair: (usize, usize),
    epoch_type: Mode,
    out_dir: &Path,
) -> Result<TTestResult> {
    let rows: Vec<EpochRow> = read_csv(epochs_csv)?;
    if rows.is_empty() {
        return Err(Error::DataIntegrity(format!(
            "{} contains no epoch rows",
            epochs_csv.display()
        )));
    }
    let records: Vec<EpochRecord> = rows.into_iter().map(EpochRow::into_record).collect();

    let epoch_a = epoch_of_type(&records, epoch_type, epoch_pair.0)?;
    let epoch_b = epoch_of_type(&records, epoch_type, epoch_pair.1)?;
    let sample_a = bounce_sample(&records, epoch_a);
    let sample_b = bounce_sample(&records, epoch_b);
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(Error::DataIntegrity(format!(
            "need at least two instances at both epochs, got {} and {}",
            sample_a.len(),
            sample_b.len()
        )));
    }

    let result = pooled_t_test(&sample_a, &sample_b)?;
    let (mean_a, mean_b) = (mean(&sample_a), mean(&sample_b));
    println!(
        "bounces per {epoch_type} epoch {} vs {}: mean {:.3} vs {:.3}",
        epoch_pair.0, epoch_pair.1, mean_a, mean_b
    );
    println!(
        "t({}) = {:.3}, two-sided p = {:.4}",
        result.df, result.t, result.p_two_sided
    );

    let summaries = epoch_aggregate(&records, Some(epoch_type))?;
    println!("dominance per {epoch_type} epoch (mean over instances):");
    for s in &summaries {
        match s.mean_dominance {
            Some(d) => println!("  epoch {:>3}: {:.4}", s.epoch, d),
            None => println!("  epoch {:>3}: undefined (no movements)", s.epoch),
        }
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let stats_row = StatsRow {
        series: "bounces".to_string(),
        epoch_type,
        epoch_a: epoch_pair.0,
        epoch_b: epoch_pair.1,
        n_a: sample_a.len(),
        n_b: sample_b.len(),
        mean_a,
        mean_b,
        t: result.t,
        df: result.df,
        p_two_sided: result.p_two_sided,
    };
    write_csv(&out_dir.join("stats.csv"), &[stats_row])?;
    Ok(result)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn tiny_config(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.n_instances = 2;
        cfg.seed = 11;
        cfg.out_dir = dir.to_path_buf();
        cfg.train.total_sessions = 4;
        cfg.train.epoch_len = 2;
        cfg
    }

    #[test]
    fn experiment_produces_expected_row_counts() {
        let dir = tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let out = run_experiment(&cfg, &[0, 1], false).unwrap();
        assert_eq!(out.sessions.len(), 8);
        assert_eq!(out.epochs.len(), 4); // 2 instances x 2 epochs
        assert_eq!(out.summaries.len(), 2);
        assert_eq!(out.cortices.len(), 2);
        assert!(out
            .reports
            .iter()
            .all(|r| r.status == InstanceStatus::Trained));
    }

    #[test]
    fn experiment_files_are_byte_identical_across_runs() {
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let mut cfg_a = tiny_config(dir_a.path());
        let mut cfg_b = tiny_config(dir_b.path());
        cfg_a.out_dir = dir_a.path().to_path_buf();
        cfg_b.out_dir = dir_b.path().to_path_buf();

        cmd_experiment(&cfg_a, false).unwrap();
        cmd_experiment(&cfg_b, false).unwrap();
        for name in ["sessions.csv", "epochs.csv", "summary.csv", "instances.csv"] {
            let a = fs::read(dir_a.path().join(name)).unwrap();
            let b = fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
            assert!(!a.is_empty());
        }
    }

    #[test]
    fn train_slice_matches_experiment_slice() {
        let dir = tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let full = run_experiment(&cfg, &[0, 1], false).unwrap();
        let single = run_experiment(&cfg, &[1], false).unwrap();

        let full_slice: Vec<&SessionRow> =
            full.sessions.iter().filter(|s| s.instance == 1).collect();
        let single_rows: Vec<&SessionRow> = single.sessions.iter().collect();
        assert_eq!(full_slice.len(), single_rows.len());
        for (a, b) in full_slice.iter().zip(&single_rows) {
            assert_eq!(a, b);
        }
        assert_eq!(full.cortices[1].1, single.cortices[0].1);
    }

    #[test]
    fn trajectories_written_when_requested() {
        let dir = tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.n_instances = 1;
        cfg.train.total_sessions = 2;
        cfg.train.epoch_len = 1;
        cmd_train(&cfg, 0, true).unwrap();
        let rows: Vec<TrajectoryRow> =
            read_csv(&dir.path().join("trajectory_0.csv")).unwrap();
        assert!(!rows.is_empty());
        assert!(rows.iter().any(|r| r.done));
    }

    #[test]
    fn checkpoint_written_and_loadable() {
        let dir = tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.n_instances = 1;
        cmd_train(&cfg, 0, false).unwrap();
        let model = checkpoint::load_cortex(&dir.path().join("checkpoint_0.cswm")).unwrap();
        assert_eq!(model.config().n_m, 2);
    }

    #[test]
    fn stats_on_hand_built_csv_matches_oracle() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("epochs.csv");
        // Two greedy epochs (1 and 3), three instances.
        let mut rows = Vec::new();
        let bounces_e1 = [20u64, 25, 30];
        let bounces_e3 = [35u64, 45, 40];
        for (i, (&b1, &b3)) in bounces_e1.iter().zip(&bounces_e3).enumerate() {
            rows.push(EpochRow {
                instance: i as u32,
                epoch: 1,
                epoch_type: Mode::Greedy,
                bounces: b1,
                left_moves: 10,
                right_moves: 10,
                dominance: Some(0.5),
            });
            rows.push(EpochRow {
                instance: i as u32,
                epoch: 3,
                epoch_type: Mode::Greedy,
                bounces: b3,
                left_moves: 10,
                right_moves: 10,
                dominance: Some(0.5),
            });
        }
        write_csv(&path, &rows).unwrap();

        let result = cmd_stats(&path, (1, 2), Mode::Greedy, dir.path()).unwrap();
        let expect = pooled_t_test(
            &[20.0, 25.0, 30.0],
            &[35.0, 45.0, 40.0],
        )
        .unwrap();
        assert_eq!(result, expect);
        assert_eq!(result.df, 4);

        let stats_rows: Vec<StatsRow> = read_csv(&dir.path().join("stats.csv")).unwrap();
        assert_eq!(stats_rows.len(), 1);
        assert_eq!(stats_rows[0].t, expect.t);
    }

    #[test]
    fn stats_same_epoch_pair_gives_null_result() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("epochs.csv");
        let rows: Vec<EpochRow> = (0..3)
            .map(|i| EpochRow {
                instance: i,
                epoch: 1,
                epoch_type: Mode::Greedy,
                bounces: 10 + i as u64,
                left_moves: 0,
                right_moves: 0,
                dominance: None,
            })
            .collect();
        write_csv(&path, &rows).unwrap();
        let result = cmd_stats(&path, (1, 1), Mode::Greedy, dir.path()).unwrap();
        assert_eq!(result.t, 0.0);
        assert_eq!(result.p_two_sided, 1.0);
    }

    #[test]
    fn stats_rejects_insufficient_instances() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("epochs.csv");
        let rows = vec![EpochRow {
            instance: 0,
            epoch: 1,
            epoch_type: Mode::Greedy,
            bounces: 10,
            left_moves: 0,
            right_moves: 0,
            dominance: None,
        }];
        write_csv(&path, &rows).unwrap();
        assert!(matches!(
            cmd_stats(&path, (1, 1), Mode::Greedy, dir.path()),
            Err(Error::DataIntegrity(_))
        ));
    }

    #[test]
    fn epoch_csv_round_trips_including_empty_dominance() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("epochs.csv");
        let rows = vec![
            EpochRow {
                instance: 0,
                epoch: 0,
                epoch_type: Mode::Exploratory,
                bounces: 3,
                left_moves: 0,
                right_moves: 0,
                dominance: None,
            },
            EpochRow {
                instance: 0,
                epoch: 1,
                epoch_type: Mode::Greedy,
                bounces: 4,
                left_moves: 3,
                right_moves: 1,
                dominance: Some(0.75),
            },
        ];
        write_csv(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "instance,epoch,epoch_type,bounces,left_moves,right_moves,dominance\n"
        ));
        let back: Vec<EpochRow> = read_csv(&path).unwrap();
        assert_eq!(back, rows);
    }
}
