//! File-backed stages behind the `simulate`, `dsp`, `estimate` and `keyrate`
//! subcommands. Chaining them reproduces [`run_pipeline`](super::run_pipeline)
//! point for point.
//!
//! - `simulate` writes every slot as binary frame records in acquisition
//!   order: calibration slots as one shot-noise frame per QNU, signal slots
//!   as the QLT reference frame followed by one raw frame per QNU.
//! - `dsp` reads them twice (calibration readings first, then signal frames)
//!   and writes the reference and processed frames plus a JSON sidecar with
//!   each frame's calibration record.
//! - `estimate` accumulates covariances per estimation group.
//! - `keyrate` turns those covariances into a report.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Instant, SystemTime};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::pipeline::{process_qnu_frame, raw_rate};
use super::report::{matrix_rows, rows_to_cov, Diagnostics, RunMode, RuntimeMeta};
use super::simulator::sample_variance;
use super::{
    security_point, EstimationPoint, HarnessError, KeyRateReport, NetworkSimulator,
    ScenarioConfig, ScenarioError, Stage,
};
use crate::dsp::{CalibrationRecord, DspProcessor};
use crate::frame::{read_frame, write_frame, FrameError, FrameKind, QuadratureFrame, Role};
use crate::optics::PspStats;
use crate::security::{estimate_from_covariance, ChannelEstimate, CovAccumulator, SecurityError};

pub const FRAMES_FILE: &str = "frames.qpon";
pub const PROCESSED_FILE: &str = "processed.qpon";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const ESTIMATES_FILE: &str = "estimates.json";

fn io_stage(stage: Stage) -> impl Fn(FrameError) -> HarnessError {
    move |e| HarnessError::stage(stage, e)
}

fn qnu_of(role: Role) -> Option<usize> {
    match role {
        Role::Qnu(i) => Some(i as usize),
        Role::Qlt => None,
    }
}

fn frames_in(path: &Path, stage: Stage) -> Result<impl Iterator<Item = Result<QuadratureFrame, HarnessError>>, HarnessError> {
    let mut r = BufReader::new(File::open(path)?);
    Ok(std::iter::from_fn(move || read_frame(&mut r).transpose())
        .map(move |f| f.map_err(io_stage(stage))))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub signal_frames: usize,
    pub calibration_frames: usize,
}

/// Simulates the scenario's slots into one frame file.
pub fn simulate_to_file(cfg: &ScenarioConfig, path: &Path) -> Result<StageSummary, HarnessError> {
    cfg.validate()?;
    let sim = NetworkSimulator::new(cfg);
    let plan = sim.plan().clone();
    let rate = raw_rate(cfg);
    let mut w = BufWriter::new(File::create(path)?);
    let mut summary = StageSummary::default();
    let mut next_signal = 0;
    let write = |w: &mut BufWriter<File>, f: QuadratureFrame| {
        write_frame(w, &f).map_err(io_stage(Stage::Simulate))
    };
    let frame = |role, slot, kind, rate, s| {
        QuadratureFrame::new(role, slot, kind, rate, s).map_err(io_stage(Stage::Simulate))
    };
    for slot in 0..plan.end_slot() {
        if cfg.switch.is_calibration(slot) {
            for q in 0..cfg.fanout {
                let s = sim.calibration_raw(slot, q);
                let f = frame(Role::Qnu(q as u8), slot, FrameKind::ShotNoiseCalibration, rate, s)?;
                write(&mut w, f)?;
            }
            summary.calibration_frames += 1;
        } else if plan.signal.get(next_signal) == Some(&slot) {
            let s = sim
                .signal_slot(next_signal)
                .map_err(|e| HarnessError::stage(Stage::Simulate, e))?;
            let f = frame(Role::Qlt, slot, FrameKind::Signal, cfg.frames.sample_rate_hz, s.reference)?;
            write(&mut w, f)?;
            for (q, raw) in s.raw.into_iter().enumerate() {
                write(&mut w, frame(Role::Qnu(q as u8), slot, FrameKind::Signal, rate, raw)?)?;
            }
            next_signal += 1;
            summary.signal_frames += 1;
        }
    }
    w.flush()?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub qnu: usize,
    pub record: CalibrationRecord,
}

/// Runs the per-QNU DSP over a frame file. Writes processed frames to
/// `output` and calibration records to `calibration`.
pub fn dsp_file(
    cfg: &ScenarioConfig,
    input: &Path,
    output: &Path,
    calibration: &Path,
) -> Result<StageSummary, HarnessError> {
    cfg.validate()?;
    let front = DspProcessor::new(cfg.dsp.clone()).map_err(|e| HarnessError::stage(Stage::Dsp, e))?;
    let mut readings: Vec<Vec<(u64, f64)>> = vec![Vec::new(); cfg.fanout];
    let mut summary = StageSummary::default();
    for f in frames_in(input, Stage::Dsp)? {
        let f = f?;
        if f.kind != FrameKind::ShotNoiseCalibration {
            continue;
        }
        let q = qnu_of(f.role)
            .filter(|&q| q < cfg.fanout)
            .ok_or_else(|| HarnessError::stage(Stage::Dsp, format!("calibration frame with role {}", f.role)))?;
        let sym = front
            .front_end(f.samples())
            .map_err(|e| HarnessError::stage(Stage::Dsp, e))?;
        readings[q].push((f.frame_index, sample_variance(&sym)));
        if q == 0 {
            summary.calibration_frames += 1;
        }
    }
    readings.iter_mut().for_each(|r| r.sort_by_key(|&(i, _)| i));

    let mut procs = vec![front; cfg.fanout];
    let mut records = Vec::new();
    let mut reference: Option<QuadratureFrame> = None;
    let mut w = BufWriter::new(File::create(output)?);
    for f in frames_in(input, Stage::Dsp)? {
        let f = f?;
        if f.kind != FrameKind::Signal {
            continue;
        }
        match qnu_of(f.role) {
            None => {
                write_frame(&mut w, &f).map_err(io_stage(Stage::Dsp))?;
                summary.signal_frames += 1;
                reference = Some(f);
            }
            Some(q) => {
                let r = reference
                    .as_ref()
                    .filter(|r| r.frame_index == f.frame_index)
                    .ok_or_else(|| {
                        HarnessError::stage(Stage::Dsp, format!("no reference for slot {}", f.frame_index))
                    })?;
                if q >= cfg.fanout {
                    return Err(HarnessError::stage(Stage::Dsp, format!("unexpected role {}", f.role)));
                }
                let pf = process_qnu_frame(cfg, &mut procs[q], r.samples(), &f, &readings[q])
                    .map_err(|e| HarnessError::stage(Stage::Dsp, format!("slot {}, qnu {}: {e}", f.frame_index, q + 1)))?;
                let record = pf.frame.snu_ref().cloned().expect("processed frames are normalized");
                write_frame(&mut w, &pf.frame).map_err(io_stage(Stage::Dsp))?;
                records.push(CalibrationEntry { qnu: q, record });
            }
        }
    }
    w.flush()?;
    std::fs::write(
        calibration,
        serde_json::to_string(&records).map_err(|e| HarnessError::Report(e.to_string()))?,
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedGroup {
    pub index: usize,
    pub first_slot: u64,
    pub last_slot: u64,
    pub frames: usize,
    pub n_samples: usize,
    pub covariance: Vec<Vec<f64>>,
    pub estimates: Vec<ChannelEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatesDoc {
    pub scenario_digest: String,
    pub qnus: usize,
    pub points: Vec<EstimatedGroup>,
}

impl EstimatesDoc {
    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let s = serde_json::to_string_pretty(self).map_err(|e| HarnessError::Report(e.to_string()))?;
        std::fs::write(path, s + "\n")?;
        Ok(())
    }
}

/// Covariances and channel estimates per estimation group of processed
/// frames. Trailing frames that don't fill a group are ignored.
pub fn estimate_file(
    cfg: &ScenarioConfig,
    processed: &Path,
    calibration: &Path,
) -> Result<EstimatesDoc, HarnessError> {
    cfg.validate()?;
    let entries: Vec<CalibrationEntry> = serde_json::from_str(&std::fs::read_to_string(calibration)?)
        .map_err(|e| HarnessError::Report(format!("{}: {e}", calibration.display())))?;
    let mut records: HashMap<(usize, u64), CalibrationRecord> = entries
        .into_iter()
        .map(|e| ((e.qnu, e.record.target_frame_index), e.record))
        .collect();
    let est_err = |e: SecurityError| HarnessError::stage(Stage::Estimate, e);
    let group = cfg.frames.estimation_group;
    let n = cfg.fanout;

    let mut points = Vec::new();
    let mut acc = CovAccumulator::for_modes(n + 1);
    let mut slots: Vec<u64> = Vec::new();
    let mut current: Option<(QuadratureFrame, Vec<Option<QuadratureFrame>>)> = None;

    let flush = |current: (QuadratureFrame, Vec<Option<QuadratureFrame>>),
                     acc: &mut CovAccumulator,
                     slots: &mut Vec<u64>,
                     points: &mut Vec<EstimatedGroup>|
     -> Result<(), HarnessError> {
        let (r, qnus) = current;
        let qnus: Vec<QuadratureFrame> = qnus
            .into_iter()
            .enumerate()
            .map(|(q, f)| {
                f.ok_or_else(|| HarnessError::stage(Stage::Estimate, format!("slot {} lacks qnu {}", r.frame_index, q + 1)))
            })
            .collect::<Result<_, _>>()?;
        let mut streams: Vec<&[Complex64]> = vec![r.samples()];
        streams.extend(qnus.iter().map(|f| f.samples()));
        acc.add_streams(&streams).map_err(est_err)?;
        slots.push(r.frame_index);
        if slots.len() == group {
            let cov = acc.covariance().map_err(est_err)?;
            let estimates = (0..n)
                .map(|q| estimate_from_covariance(&cov, q, acc.count(), &cfg.qnu_detector))
                .collect::<Result<_, _>>()
                .map_err(est_err)?;
            points.push(EstimatedGroup {
                index: points.len(),
                first_slot: slots[0],
                last_slot: slots[group - 1],
                frames: group,
                n_samples: acc.count(),
                covariance: matrix_rows(&cov),
                estimates,
            });
            *acc = CovAccumulator::for_modes(n + 1);
            slots.clear();
        }
        Ok(())
    };

    for f in frames_in(processed, Stage::Estimate)? {
        let f = f?;
        match qnu_of(f.role) {
            None => {
                if let Some(c) = current.take() {
                    flush(c, &mut acc, &mut slots, &mut points)?;
                }
                current = Some((f, vec![None; n]));
            }
            Some(q) => {
                let (r, qnus) = current.as_mut().filter(|c| c.0.frame_index == f.frame_index).ok_or_else(|| {
                    HarnessError::stage(Stage::Estimate, format!("no reference for slot {}", f.frame_index))
                })?;
                if q >= n {
                    return Err(HarnessError::stage(Stage::Estimate, format!("unexpected role {}", f.role)));
                }
                let record = records
                    .remove(&(q, r.frame_index))
                    .ok_or_else(|| est_err(SecurityError::NotNormalized(f.frame_index)))?;
                qnus[q] = Some(f.attach_snu(record).map_err(io_stage(Stage::Estimate))?);
            }
        }
    }
    if let Some(c) = current.take() {
        flush(c, &mut acc, &mut slots, &mut points)?;
    }
    Ok(EstimatesDoc {
        scenario_digest: cfg.digest(),
        qnus: n,
        points,
    })
}

/// Security evaluation of stored group covariances.
pub fn keyrate_from_estimates(cfg: &ScenarioConfig, doc: &EstimatesDoc) -> Result<KeyRateReport, HarnessError> {
    cfg.validate()?;
    if doc.scenario_digest != cfg.digest() {
        return Err(ScenarioError::Validation {
            field: "scenario".into(),
            constraint: "estimates were produced from a different scenario".into(),
        }
        .into());
    }
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut points = Vec::new();
    let mut pooled: Option<(Vec<Vec<f64>>, usize)> = None;
    let mut diag = Diagnostics::default();
    for g in &doc.points {
        let cov = rows_to_cov(&g.covariance)?;
        let qnus = security_point(cfg, g.index, &cov, g.n_samples)?;
        diag.flagged_estimates += qnus.iter().filter(|q| q.estimate.flagged).count();
        diag.signal_frames += g.frames;
        let (sum, n) = pooled.get_or_insert_with(|| (vec![vec![0.0; g.covariance.len()]; g.covariance.len()], 0));
        for (srow, row) in sum.iter_mut().zip(&g.covariance) {
            for (s, v) in srow.iter_mut().zip(row) {
                *s += v * g.n_samples as f64;
            }
        }
        *n += g.n_samples;
        points.push(EstimationPoint {
            index: g.index,
            first_slot: g.first_slot,
            last_slot: g.last_slot,
            frames: g.frames,
            n_samples: g.n_samples,
            qnus,
        });
    }
    let pooled = match pooled {
        Some((sum, n)) => {
            let rows: Vec<Vec<f64>> = sum
                .into_iter()
                .map(|r| r.into_iter().map(|v| v / n as f64).collect())
                .collect();
            Some(rows_to_cov(&rows)?)
        }
        None => None,
    };
    Ok(KeyRateReport::assemble(
        cfg,
        RunMode::MonteCarlo,
        points,
        pooled.as_ref(),
        PspStats::analytic(&cfg.source, &cfg.qlt_detector),
        diag,
        None,
        RuntimeMeta::since(started, clock),
    ))
}
