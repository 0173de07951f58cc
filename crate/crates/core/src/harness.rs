//! Run orchestration and persistence: builds agents from a config, plays the
//! game or a synthetic forecaster run, evaluates metrics and writes the CSV
//! and JSON outputs.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{sc_assign, AvailabilityAgent, GqlAgent, StaticAgent, UniformAgent};
use crate::config::{ConfigError, StrategySpec, SyntheticSource, SystemConfig, PROFILE_WARN_CAP};
use crate::env::{Environment, RadioConfig};
use crate::forecaster::{period_eps, Forecaster, PeriodRecord};
use crate::game::{play, Agent, ForecastRecord, GameError, Phase, PlayerRecord, RunTrace, TrialRecord};
use crate::lp::GridError;
use crate::metrics::{self, ConsistencyPoint, MetricsError, PeriodCalibration, RateRow, ThroughputPoint};
use crate::oracle::OracleTable;
use crate::profile::{checked_pow, decode_joint, encode_joint};
use crate::rng::substream;
use crate::strategy::{period_of_trial, BanditAgent};

/// Version of the CSV and JSON output schemas.
pub const SCHEMA_VERSION: u32 = 1;

/// Smoothness and input dimension used for the regression reference curve.
pub const RATE_SMOOTHNESS: f64 = 1.0;
pub const RATE_DIMENSION: f64 = 1.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace format: {0}")]
    TraceFormat(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn radio_of(cfg: &SystemConfig) -> Result<&RadioConfig, HarnessError> {
    cfg.radio.as_ref().ok_or_else(|| ConfigError::Invalid { field: "radio".into(), reason: "required for a game run".into() }.into())
}

/// Oracle table for the config's radio model.
pub fn build_oracle(cfg: &SystemConfig) -> Result<OracleTable, HarnessError> {
    Ok(OracleTable::estimate(radio_of(cfg)?, cfg.oracle.samples, cfg.oracle.seed))
}

/// One agent per player. SC players need `oracle`.
pub fn build_agents(cfg: &SystemConfig, oracle: Option<&OracleTable>) -> Result<Vec<Box<dyn Agent>>, HarnessError> {
    let radio = radio_of(cfg)?;
    let (k, m) = (radio.players, radio.channels);
    let sc = if cfg.players.contains(&StrategySpec::Sc) {
        let oracle = oracle.ok_or_else(|| GameError::ConfigInvalid("SC players need the oracle".into()))?;
        Some(sc_assign(oracle, PROFILE_WARN_CAP as u128)?)
    } else {
        None
    };
    let agents = cfg
        .players
        .iter()
        .enumerate()
        .map(|(p, spec)| -> Box<dyn Agent> {
            let rng = substream(cfg.seed, "agent", p as u64);
            let bandit = |rng| BanditAgent::new(p, k, m, cfg.schedule, cfg.forecaster, substream(cfg.seed, "forecaster", p as u64), rng);
            match spec {
                StrategySpec::Cb => Box::new(bandit(rng)),
                StrategySpec::Ncb => Box::new(bandit(rng).forfeiting_collisions()),
                StrategySpec::Gql(params) => Box::new(GqlAgent::new(p, k, m, *params, rng)),
                StrategySpec::Ab(params) => Box::new(AvailabilityAgent::new(p, m, *params, rng)),
                StrategySpec::Ur => Box::new(UniformAgent::new(m, rng)),
                StrategySpec::Sc => Box::new(StaticAgent::new(sc.as_ref().expect("assignment computed")[p])),
            }
        })
        .collect();
    Ok(agents)
}

/// Plays the configured game. `oracle` is only consulted by SC players.
pub fn run_game_with_oracle(cfg: &SystemConfig, oracle: Option<&OracleTable>) -> Result<RunTrace, HarnessError> {
    cfg.validate()?;
    let env = Environment::new(radio_of(cfg)?.clone()).map_err(GameError::from)?;
    let mut agents = build_agents(cfg, oracle)?;
    let mut env_rng = substream(cfg.seed, "env", 0);
    Ok(play(&env, &mut agents, cfg.trials(), &mut env_rng)?)
}

/// Plays the configured game, estimating the oracle only if a player needs it.
pub fn run_game(cfg: &SystemConfig) -> Result<RunTrace, HarnessError> {
    let oracle = if cfg.players.contains(&StrategySpec::Sc) { Some(build_oracle(cfg)?) } else { None };
    run_game_with_oracle(cfg, oracle.as_ref())
}

/// All metrics of a game run.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub checkpoints: Vec<u64>,
    /// Per player; an error when the optimal reward sum is zero.
    pub consistency: Vec<Result<Vec<ConsistencyPoint>, MetricsError>>,
    pub pi_hat: Vec<(u64, Vec<f64>)>,
    pub ce_distance: Vec<(u64, f64)>,
    /// Per player; empty for players without a forecaster.
    pub calibration: Vec<Vec<PeriodCalibration>>,
    pub throughput: Vec<ThroughputPoint>,
    pub rate_curves: Vec<RateRow>,
}

/// Evaluates every metric of `trace` at the config's checkpoints.
pub fn evaluate(cfg: &SystemConfig, trace: &RunTrace, oracle: &OracleTable) -> Result<MetricsReport, HarnessError> {
    let checkpoints: Vec<u64> = cfg.effective_checkpoints().into_iter().filter(|&c| c <= trace.len() as u64).collect();
    let consistency = (0..trace.players).map(|p| metrics::consistency_series(trace, oracle, p, &checkpoints)).collect();
    let mut pi_hat = Vec::new();
    for &t in &checkpoints {
        pi_hat.push((t, metrics::pi_hat_at(trace, t)?));
    }
    let ce_distance = pi_hat
        .par_iter()
        .map(|(t, pi)| metrics::ce_distance(pi, oracle).map(|d| (*t, d)))
        .collect::<Result<Vec<_>, _>>()?;
    let calibration = (0..trace.players)
        .map(|p| match metrics::calibration_scores(trace, p) {
            Ok(c) => Ok(c),
            Err(MetricsError::NoForecasts(_)) => Ok(Vec::new()),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let throughput = metrics::throughput_series(trace, &checkpoints);
    let outcomes = oracle.outcomes();
    let b = metrics::profile_exploration_probability(cfg.schedule.gamma, trace.channels, trace.players);
    let eta = metrics::regression_exponent(RATE_SMOOTHNESS, RATE_DIMENSION);
    let rate_curves = metrics::rate_reference_curves(outcomes, b, eta, &rate_grid(trace.len() as u64));
    Ok(MetricsReport { checkpoints, consistency, pi_hat, ce_distance, calibration, throughput, rate_curves })
}

/// Powers of two from 4 up to and including `n`.
fn rate_grid(n: u64) -> Vec<u64> {
    let mut grid: Vec<u64> = (2..63).map(|e| 1u64 << e).take_while(|&t| t <= n).collect();
    if grid.last() != Some(&n) && n >= 4 {
        grid.push(n);
    }
    grid
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn parse_f64(s: &str) -> Result<f64, HarnessError> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| HarnessError::TraceFormat(format!("bad number `{s}`")))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, HarnessError> {
    s.parse().map_err(|_| HarnessError::TraceFormat(format!("bad {what} `{s}`")))
}

/// Header of the game trace CSV.
pub fn trace_header(players: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "period", "joint", "avail"].iter().map(|s| s.to_string()).collect();
    for p in 0..players {
        for col in ["arm", "phase", "opp", "reward", "fc_seq", "fc_r", "fc_slot", "fc_point", "slack"] {
            h.push(format!("{col}_{p}"));
        }
    }
    h
}

/// Writes the per-trial trace as CSV.
pub fn write_trace<W: Write>(trace: &RunTrace, out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(trace_header(trace.players))?;
    for trial in &trace.trials {
        let mut row = vec![
            trial.t.to_string(),
            trial.period().to_string(),
            encode_joint(&trial.profile, trace.channels).to_string(),
            trial.availability.iter().map(|&a| if a { '1' } else { '0' }).collect(),
        ];
        for rec in &trial.players {
            row.push(rec.arm.to_string());
            row.push(rec.phase.to_string());
            row.push(rec.opponents.to_string());
            row.push(fmt_f64(rec.reward));
            match &rec.forecast {
                Some(fc) => {
                    row.push(fc.seq.to_string());
                    row.push(fc.r.to_string());
                    row.push(fc.slot.to_string());
                    row.push(fc.label.clone());
                }
                None => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
            row.push(fmt_f64(rec.lp_slack));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::Io { path: PathBuf::from("<trace>"), source: e })?;
    Ok(())
}

/// Reads a trace written by [`write_trace`]. Labels, clip counts and period
/// records are not part of the CSV and come back empty.
pub fn read_trace<R: Read>(input: R, players: usize, channels: usize) -> Result<RunTrace, HarnessError> {
    let mut r = csv::ReaderBuilder::new().from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != trace_header(players) {
        return Err(HarnessError::TraceFormat(format!("header does not match {players} players")));
    }
    let mut trials = Vec::new();
    for row in r.records() {
        let row = row?;
        let t: u64 = parse_num(&row[0], "trial")?;
        let joint: usize = parse_num(&row[2], "joint")?;
        let availability: Vec<bool> = row[3].chars().map(|c| c == '1').collect();
        if availability.len() != channels {
            return Err(HarnessError::TraceFormat(format!("trial {t}: availability has {} bits", availability.len())));
        }
        let profile = decode_joint(joint, players, channels);
        let mut recs = Vec::with_capacity(players);
        for p in 0..players {
            let c = 4 + 9 * p;
            let phase = Phase::parse(&row[c + 1]).ok_or_else(|| HarnessError::TraceFormat(format!("bad phase `{}`", &row[c + 1])))?;
            let forecast = if row[c + 4].is_empty() {
                None
            } else {
                Some(ForecastRecord {
                    seq: parse_num(&row[c + 4], "fc_seq")?,
                    r: parse_num(&row[c + 5], "fc_r")?,
                    slot: parse_num(&row[c + 6], "fc_slot")?,
                    label: row[c + 7].to_string(),
                })
            };
            recs.push(PlayerRecord {
                arm: parse_num(&row[c], "arm")?,
                phase,
                opponents: parse_num(&row[c + 2], "opp")?,
                reward: parse_f64(&row[c + 3])?,
                forecast,
                lp_slack: parse_f64(&row[c + 8])?,
            });
        }
        trials.push(TrialRecord { t, profile, availability, players: recs });
    }
    Ok(RunTrace {
        players,
        channels,
        labels: Vec::new(),
        trials,
        clip_events: 0,
        periods: vec![Vec::new(); players],
        resets: vec![0; players],
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(f))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), HarnessError> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn write_telemetry(path: &Path, periods: &[Vec<PeriodRecord>]) -> Result<(), HarnessError> {
    let rows = periods.iter().enumerate().flat_map(|(p, recs)| {
        recs.iter().map(move |r| {
            vec![
                p.to_string(),
                r.seq.to_string(),
                r.r.to_string(),
                fmt_f64(r.eps),
                r.length.to_string(),
                fmt_f64(r.score),
                (r.reset as u8).to_string(),
                fmt_f64(if r.max_slack.is_finite() { r.max_slack } else { f64::NAN }),
                r.points_used.to_string(),
            ]
        })
    });
    write_rows(path, &["player", "seq", "r", "eps", "length", "score", "reset", "max_slack", "points_used"], rows)
}

fn write_calibration(path: &Path, calibration: &[Vec<PeriodCalibration>]) -> Result<(), HarnessError> {
    let rows = calibration.iter().enumerate().flat_map(|(p, recs)| {
        recs.iter().map(move |c| {
            vec![p.to_string(), c.seq.to_string(), c.r.to_string(), fmt_f64(c.eps), c.length.to_string(), fmt_f64(c.score)]
        })
    });
    write_rows(path, &["player", "seq", "r", "eps", "length", "score"], rows)
}

fn sha256_file(path: &Path) -> Result<String, HarnessError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub version: String,
    pub mode: String,
    pub seed: u64,
    pub config_hash: String,
    pub trials: u64,
    pub labels: Vec<String>,
    pub trace_sha256: String,
    pub clip_events: u64,
    pub clip_fraction: f64,
    pub resets: Vec<u64>,
    pub final_consistency: Vec<Option<f64>>,
    pub consistency_errors: Vec<Option<String>>,
    pub final_ce_distance: Option<f64>,
    pub final_aggregate_throughput: Option<f64>,
    pub files: Vec<String>,
}

/// Writes the trace, metric CSVs and summary of a game run into `dir`.
pub fn write_game_outputs(dir: &Path, cfg: &SystemConfig, trace: &RunTrace, report: &MetricsReport) -> Result<Summary, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let trace_path = dir.join("trace.csv");
    {
        let f = fs::File::create(&trace_path).map_err(io_err(&trace_path))?;
        write_trace(trace, std::io::BufWriter::new(f))?;
    }
    write_telemetry(&dir.join("telemetry.csv"), &trace.periods)?;

    let consistency_rows = report.consistency.iter().enumerate().flat_map(|(p, s)| {
        s.iter().flatten().map(move |c| vec![p.to_string(), c.t.to_string(), fmt_f64(c.s), fmt_f64(c.regret), fmt_f64(c.played_sum), fmt_f64(c.optimal_sum)])
    });
    write_rows(&dir.join("consistency.csv"), &["player", "t", "s", "regret", "played_sum", "optimal_sum"], consistency_rows)?;

    let (k, m) = (trace.players, trace.channels);
    let freq_rows = report.pi_hat.iter().flat_map(|(t, pi)| {
        pi.iter().enumerate().map(move |(code, f)| {
            let profile: Vec<String> = decode_joint(code, k, m).iter().map(|a| a.to_string()).collect();
            vec![t.to_string(), code.to_string(), profile.join("-"), fmt_f64(*f)]
        })
    });
    write_rows(&dir.join("joint_frequencies.csv"), &["t", "joint", "profile", "frequency"], freq_rows)?;

    write_rows(&dir.join("ce_distance.csv"), &["t", "ce_distance"], report.ce_distance.iter().map(|(t, d)| vec![t.to_string(), fmt_f64(*d)]))?;
    write_calibration(&dir.join("calibration.csv"), &report.calibration)?;

    let mut tp_header: Vec<String> = vec!["t".into()];
    tp_header.extend((0..k).map(|p| format!("player_{p}")));
    tp_header.push("aggregate".into());
    let tp_header: Vec<&str> = tp_header.iter().map(String::as_str).collect();
    let tp_rows = report.throughput.iter().map(|tp| {
        let mut row = vec![tp.t.to_string()];
        row.extend(tp.per_player.iter().map(|x| fmt_f64(*x)));
        row.push(fmt_f64(tp.aggregate));
        row
    });
    write_rows(&dir.join("throughput.csv"), &tp_header, tp_rows)?;

    let rate_rows = report.rate_curves.iter().map(|r| {
        vec![r.t.to_string(), fmt_f64(r.forecaster_bound), fmt_f64(r.regression_rate), r.periods.to_string(), fmt_f64(r.expected_profile_samples)]
    });
    write_rows(&dir.join("rate_curves.csv"), &["t", "forecaster_bound", "regression_rate", "periods", "expected_profile_samples"], rate_rows)?;

    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").into(),
        mode: "game".into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        trials: trace.len() as u64,
        labels: trace.labels.clone(),
        trace_sha256: sha256_file(&trace_path)?,
        clip_events: trace.clip_events,
        clip_fraction: trace.clip_events as f64 / (trace.len().max(1) * trace.players) as f64,
        resets: trace.resets.clone(),
        final_consistency: report.consistency.iter().map(|s| s.as_ref().ok().and_then(|v| v.last()).map(|c| c.s)).collect(),
        consistency_errors: report.consistency.iter().map(|s| s.as_ref().err().map(|e| e.to_string())).collect(),
        final_ce_distance: report.ce_distance.last().map(|x| x.1),
        final_aggregate_throughput: report.throughput.last().map(|x| x.aggregate),
        files: [
            "trace.csv",
            "telemetry.csv",
            "consistency.csv",
            "joint_frequencies.csv",
            "ce_distance.csv",
            "calibration.csv",
            "throughput.csv",
            "rate_curves.csv",
            "summary.json",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    };
    write_summary(dir, &summary)?;
    Ok(summary)
}

fn write_summary(dir: &Path, summary: &Summary) -> Result<(), HarnessError> {
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

/// A game run with its oracle and metrics.
pub struct GameRun {
    pub trace: RunTrace,
    pub report: MetricsReport,
    pub summary: Summary,
}

/// Runs a game config end to end and writes its outputs to `dir`.
pub fn execute_game(cfg: &SystemConfig, oracle: &OracleTable, dir: &Path) -> Result<GameRun, HarnessError> {
    let trace = run_game_with_oracle(cfg, Some(oracle))?;
    let clip = trace.clip_events as f64 / (trace.len().max(1) * trace.players) as f64;
    if clip >= 1e-3 {
        log::warn!("reward clipping hit {:.3}% of player-trials", 100.0 * clip);
    }
    let report = evaluate(cfg, &trace, oracle)?;
    let summary = write_game_outputs(dir, cfg, &trace, &report)?;
    Ok(GameRun { trace, report, summary })
}

/// One forecast of a synthetic run.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStep {
    pub t: u64,
    pub seq: u64,
    pub r: u32,
    pub slot: usize,
    pub point: Vec<f64>,
    pub label: String,
    pub outcome: usize,
    pub slack: f64,
}

/// Output of a forecaster-only run.
#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub steps: Vec<SyntheticStep>,
    pub periods: Vec<PeriodRecord>,
    pub resets: u64,
}

/// Drives one forecaster with the configured synthetic outcome source.
pub fn run_synthetic(cfg: &SystemConfig) -> Result<SyntheticRun, HarnessError> {
    cfg.validate()?;
    let src = cfg.synthetic.as_ref().ok_or_else(|| ConfigError::Invalid { field: "synthetic".into(), reason: "required for a forecaster run".into() })?;
    let mut fc = Forecaster::new(src.outcomes(), cfg.forecaster, substream(cfg.seed, "forecaster", 0));
    let mut rng = substream(cfg.seed, "synthetic", 0);
    let mut steps = Vec::with_capacity(cfg.trials() as usize);
    for t in 0..cfg.trials() {
        let seq = fc.history().len() as u64;
        let r = fc.period();
        let f = fc.emit_forecast();
        let outcome = match src {
            SyntheticSource::Iid { law } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                law.iter().position(|p| {
                    acc += p;
                    u < acc
                })
                .unwrap_or(law.len() - 1)
            }
            SyntheticSource::Periodic { pattern, .. } => pattern[(t % pattern.len() as u64) as usize],
        };
        let info = fc.observe(outcome).map_err(GameError::from)?;
        steps.push(SyntheticStep { t, seq, r, slot: f.grid_index, label: f.sparse_label(), point: f.distribution, outcome, slack: info.slack });
    }
    Ok(SyntheticRun { steps, periods: fc.history().to_vec(), resets: fc.resets() })
}

/// Completed periods of a synthetic run with their scores recomputed from
/// the recorded forecasts.
pub fn synthetic_calibration(run: &SyntheticRun, outcomes: usize) -> Vec<PeriodCalibration> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < run.steps.len() {
        let seq = run.steps[i].seq;
        let j = run.steps[i..].iter().position(|s| s.seq != seq).map_or(run.steps.len(), |o| i + o);
        let r = run.steps[i].r;
        if (j - i) as u64 == 1u64 << r {
            let items: Vec<(Vec<f64>, usize)> = run.steps[i..j].iter().map(|s| (s.point.clone(), s.outcome)).collect();
            out.push(PeriodCalibration { seq, r, eps: period_eps(r, outcomes), length: (j - i) as u64, score: metrics::calibration_score(&items) });
        }
        i = j;
    }
    out
}

/// Runs a forecaster-only config and writes its outputs to `dir`.
pub fn execute_synthetic(cfg: &SystemConfig, dir: &Path) -> Result<(SyntheticRun, Summary), HarnessError> {
    let run = run_synthetic(cfg)?;
    let outcomes = cfg.synthetic.as_ref().map(|s| s.outcomes()).unwrap_or(1);
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let trace_path = dir.join("trace.csv");
    let rows = run.steps.iter().map(|s| {
        vec![s.t.to_string(), s.seq.to_string(), s.r.to_string(), s.slot.to_string(), s.label.clone(), s.outcome.to_string(), fmt_f64(s.slack)]
    });
    write_rows(&trace_path, &["t", "fc_seq", "fc_r", "fc_slot", "fc_point", "outcome", "slack"], rows)?;
    write_telemetry(&dir.join("telemetry.csv"), std::slice::from_ref(&run.periods))?;
    let calibration = synthetic_calibration(&run, outcomes);
    write_calibration(&dir.join("calibration.csv"), std::slice::from_ref(&calibration))?;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").into(),
        mode: "forecaster".into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        trials: run.steps.len() as u64,
        labels: vec!["forecaster".into()],
        trace_sha256: sha256_file(&trace_path)?,
        clip_events: 0,
        clip_fraction: 0.0,
        resets: vec![run.resets],
        final_consistency: Vec::new(),
        consistency_errors: Vec::new(),
        final_ce_distance: None,
        final_aggregate_throughput: None,
        files: ["trace.csv", "telemetry.csv", "calibration.csv", "summary.json"].iter().map(|s| s.to_string()).collect(),
    };
    write_summary(dir, &summary)?;
    Ok((run, summary))
}

/// Recomputes the metric files of a game run from its trace CSV.
pub fn export(cfg: &SystemConfig, trace_path: &Path, dir: &Path) -> Result<Summary, HarnessError> {
    let radio = radio_of(cfg)?;
    let f = fs::File::open(trace_path).map_err(io_err(trace_path))?;
    let mut trace = read_trace(std::io::BufReader::new(f), radio.players, radio.channels)?;
    trace.labels = cfg.players.iter().map(|s| s.label().to_string()).collect();
    let oracle = build_oracle(cfg)?;
    let report = evaluate(cfg, &trace, &oracle)?;
    write_game_outputs(dir, cfg, &trace, &report)
}

/// Outcome of a sweep.
#[derive(Debug, Clone)]
pub struct SweepResult {
    /// `(strategy label, seed, output dir, summary)` per successful run.
    pub runs: Vec<(String, u64, PathBuf, Summary)>,
    /// Aggregate throughput statistics, one row per strategy and checkpoint.
    pub aggregate: Vec<AggregateRow>,
    /// `(strategy label, seed, error message)` per failed run.
    pub failures: Vec<(String, u64, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub strategy: String,
    pub t: u64,
    pub mean: f64,
    pub sd: f64,
    pub runs: usize,
}

/// Sample mean and standard deviation (`n − 1` denominator; 0 for one value).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Runs every `(strategy, seed)` pair, each with a homogeneous population,
/// writing to `dir/<strategy>/seed-<seed>` and `dir/aggregate.csv`. Failed
/// runs are reported and do not stop the sweep.
pub fn sweep(cfg: &SystemConfig, strategies: &[StrategySpec], seeds: &[u64], dir: &Path) -> Result<SweepResult, HarnessError> {
    let oracle = build_oracle(cfg)?;
    let jobs: Vec<(StrategySpec, u64)> = strategies.iter().flat_map(|s| seeds.iter().map(move |&seed| (*s, seed))).collect();
    let results: Vec<(StrategySpec, u64, PathBuf, Result<GameRun, HarnessError>)> = jobs
        .par_iter()
        .map(|&(s, seed)| {
            let mut run_cfg = cfg.with_strategy(s);
            run_cfg.seed = seed;
            let out = dir.join(s.label()).join(format!("seed-{seed}"));
            run_cfg.output.dir = out.display().to_string();
            let res = execute_game(&run_cfg, &oracle, &out);
            (s, seed, out, res)
        })
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut aggregate = Vec::new();
    for s in strategies {
        let mut series: Vec<Vec<(u64, f64)>> = Vec::new();
        for (spec, seed, out, res) in &results {
            if spec != s {
                continue;
            }
            match res {
                Ok(run) => {
                    series.push(run.report.throughput.iter().map(|tp| (tp.t, tp.aggregate)).collect());
                    runs.push((s.label().to_string(), *seed, out.clone(), run.summary.clone()));
                }
                Err(e) => failures.push((s.label().to_string(), *seed, e.to_string())),
            }
        }
        if let Some(first) = series.first() {
            for (i, &(t, _)) in first.iter().enumerate() {
                let xs: Vec<f64> = series.iter().filter_map(|r| r.get(i).filter(|x| x.0 == t).map(|x| x.1)).collect();
                let (mean, sd) = mean_sd(&xs);
                aggregate.push(AggregateRow { strategy: s.label().to_string(), t, mean, sd, runs: xs.len() });
            }
        }
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let rows = aggregate.iter().map(|a| vec![a.strategy.clone(), a.t.to_string(), fmt_f64(a.mean), fmt_f64(a.sd), a.runs.to_string()]);
    write_rows(&dir.join("aggregate.csv"), &["strategy", "t", "mean", "sd", "runs"], rows)?;
    if !failures.is_empty() {
        let rows = failures.iter().map(|(s, seed, e)| vec![s.clone(), seed.to_string(), e.clone()]);
        write_rows(&dir.join("failures.csv"), &["strategy", "seed", "error"], rows)?;
    }
    Ok(SweepResult { runs, aggregate, failures })
}

/// Report printed by `validate`.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub lines: Vec<String>,
    pub warnings: Vec<String>,
}

/// Schedule table, reward bound, problem sizes and cap warnings for a config.
pub fn validation_report(cfg: &SystemConfig) -> ValidationReport {
    let mut lines = Vec::new();
    let mut warnings = Vec::new();
    let last = period_of_trial(cfg.trials().saturating_sub(1)).max(1);
    lines.push("r,period_len,explore_trials,cumulative_explore_fraction".into());
    let mut explored = 0u64;
    let mut total = 0u64;
    for r in 1..=last.max(20) {
        explored += crate::strategy::exploration_count(r);
        total += crate::strategy::period_length(r);
        lines.push(format!("{r},{},{},{:.6e}", crate::strategy::period_length(r), crate::strategy::exploration_count(r), explored as f64 / total as f64));
    }
    let outcomes = match (&cfg.synthetic, &cfg.radio) {
        (Some(src), _) => src.outcomes(),
        (None, Some(radio)) => {
            lines.push(format!("reward_bound_bits={}", radio.reward_bound()));
            let joint = checked_pow(radio.channels, radio.players).unwrap_or(usize::MAX);
            lines.push(format!("joint_profiles={joint}"));
            if joint > PROFILE_WARN_CAP {
                warnings.push(format!("M^K = {joint} exceeds the desk-scale cap of {PROFILE_WARN_CAP}"));
            }
            checked_pow(radio.channels, radio.players - 1).unwrap_or(usize::MAX)
        }
        (None, None) => 0,
    };
    lines.push(format!("outcomes_D={outcomes}"));
    if outcomes > crate::config::OUTCOME_WARN_CAP {
        warnings.push(format!("D = {outcomes} exceeds the desk-scale cap of {}", crate::config::OUTCOME_WARN_CAP));
    }
    if outcomes >= 2 {
        for r in [1, last] {
            let eps = period_eps(r, outcomes);
            let n = crate::lp::lattice_resolution(outcomes, eps);
            let card = crate::lp::lattice_cardinality(outcomes, n).map_or_else(|| ">u128".to_string(), |c| c.to_string());
            lines.push(format!("grid r={r}: eps={eps:.6} n={n} N_eps={card}"));
        }
        if let Some(radio) = &cfg.radio {
            // Estimator and oracle tables plus the peak number of lattice points a
            // forecaster can materialize in one period (one per trial).
            let per_player = radio.channels * outcomes * 16 + (1usize << last.min(40)) * outcomes * 16;
            let bytes = per_player * radio.players;
            lines.push(format!("memory_estimate_bytes={bytes}"));
        }
    }
    ValidationReport { lines, warnings }
}
