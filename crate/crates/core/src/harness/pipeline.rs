//! End-to-end Monte-Carlo run: simulate, DSP, estimate, key rate.

use std::time::{Instant, SystemTime};

use num_complex::Complex64;

use super::report::{Diagnostics, RunMode, RuntimeMeta};
use super::simulator::sample_variance;
use super::{
    EstimationPoint, HarnessError, KeyRateReport, NetworkSimulator, QnuPoint, ScenarioConfig,
    Stage, StageFailure,
};
use crate::dsp::{
    correct_leakage, realtime_snu_from_variances, DspError, DspProcessor, ProcessedFrame,
};
use crate::exec::{map_indices, map_vec};
use crate::frame::{QuadratureFrame, Role};
use crate::gaussian::CovMatrix;
use crate::security::{
    estimate_from_covariance, holevo_pair, inter_qnu_mi_max, mutual_info_ab, secret_key_rate,
    CovAccumulator, SecurityQuantities,
};

/// Security quantities of every QNU from one estimation group's covariance
/// over `(A, B_1, ..., B_N)`.
pub fn security_point(
    cfg: &ScenarioConfig,
    index: usize,
    cov: &CovMatrix,
    n_samples: usize,
) -> Result<Vec<QnuPoint>, HarnessError> {
    let det = cfg.qnu_detector;
    let params = cfg.key_params();
    (0..cfg.fanout)
        .map(|i| {
            let est = estimate_from_covariance(cov, i, n_samples, &det)
                .map_err(|e| HarnessError::stage(Stage::Estimate, format!("point {index}, qnu {}: {e}", i + 1)))?;
            let kr = |e: crate::security::SecurityError| {
                HarnessError::stage(Stage::KeyRate, format!("point {index}, qnu {}: {e}", i + 1))
            };
            let i_ab = mutual_info_ab(est.snr_hat);
            let inter = inter_qnu_mi_max(cov, i).map_err(kr)?;
            let xi = est.excess_noise_mean().max(0.0);
            let chi = holevo_pair(est.va_hat, est.transmittance_hat, xi, &det).map_err(kr)?;
            let holevo_be = if params.trusted_detector {
                chi.trusted
            } else {
                chi.untrusted
            };
            let k = secret_key_rate(i_ab, holevo_be, inter, &params);
            Ok(QnuPoint {
                qnu: i,
                security: SecurityQuantities {
                    mutual_info_ab: i_ab,
                    holevo_be,
                    holevo_trusted: chi.trusted,
                    holevo_untrusted: chi.untrusted,
                    inter_qnu_mi_max: inter,
                    key_rate_bps: k.eq1_bps,
                    key_rate_eq1_bps: k.eq1_bps,
                    key_rate_eq2_bps: k.eq2_bps,
                    below_threshold: k.below_threshold,
                },
                estimate: est,
            })
        })
        .collect()
}

/// Calibration reading of every QNU: `(slot, variance)` sorted by slot,
/// measured after the DSP front end.
pub(crate) fn calibration_readings(
    sim: &NetworkSimulator,
    front: &DspProcessor,
) -> Result<Vec<Vec<(u64, f64)>>, DspError> {
    let slots = &sim.plan().calibration;
    let n = sim.config().fanout;
    let flat = map_indices(slots.len() * n, |k| {
        let (s, q) = (slots[k / n], k % n);
        front
            .front_end(&sim.calibration_raw(s, q))
            .map(|sym| (s, sample_variance(&sym)))
    });
    let mut per_qnu = vec![Vec::with_capacity(slots.len()); n];
    for (k, r) in flat.into_iter().enumerate() {
        per_qnu[k % n].push(r?);
    }
    Ok(per_qnu)
}

/// One QNU's DSP for one signal frame: front end, calibration (with switch
/// leakage removed when enabled), then sync and phase tracking.
pub(crate) fn process_qnu_frame(
    cfg: &ScenarioConfig,
    proc: &mut DspProcessor,
    reference: &[Complex64],
    raw: &QuadratureFrame,
    readings: &[(u64, f64)],
) -> Result<ProcessedFrame, DspError> {
    let d = &cfg.dsp;
    let v_el = cfg.qnu_detector.electronic_noise_snu;
    let symbols = raw
        .with_samples(proc.front_end(raw.samples())?)?
        .with_sample_rate(raw.sample_rate_hz / d.downsample as f64);
    let mut record = realtime_snu_from_variances(
        readings,
        raw.frame_index,
        d.snu_before,
        d.snu_after,
        v_el,
        d.snu_mode,
    )?;
    if d.leakage_correction {
        record = correct_leakage(
            record,
            cfg.switch.leakage(),
            sample_variance(symbols.samples()),
            v_el,
            d.snu_mode,
        )?;
    }
    proc.process_symbols(reference, &symbols, record)
}

pub(crate) fn raw_rate(cfg: &ScenarioConfig) -> f64 {
    cfg.frames.sample_rate_hz * cfg.impairments.oversampling as f64
}

struct Run<'a> {
    cfg: &'a ScenarioConfig,
    sim: NetworkSimulator,
    readings: Vec<Vec<(u64, f64)>>,
    procs: Vec<DspProcessor>,
    diag: Diagnostics,
    pooled: CovAccumulator,
}

impl Run<'_> {
    fn group(&mut self, g: usize) -> Result<EstimationPoint, HarnessError> {
        let cfg = self.cfg;
        let size = cfg.frames.estimation_group;
        let mut acc = CovAccumulator::for_modes(cfg.fanout + 1);
        let ordinals = g * size..(g + 1) * size;
        for ord in ordinals.clone() {
            let slot = self
                .sim
                .signal_slot(ord)
                .map_err(|e| HarnessError::stage(Stage::Simulate, e))?;
            let rate = raw_rate(cfg);
            let procs = std::mem::take(&mut self.procs);
            let readings = &self.readings;
            let reference = &slot.reference;
            let jobs: Vec<_> = procs.into_iter().zip(slot.raw).enumerate().collect();
            let done = map_vec(jobs, |(i, (mut p, raw))| {
                let r = QuadratureFrame::signal(Role::Qnu(i as u8), slot.slot, rate, raw)
                    .map_err(DspError::from)
                    .and_then(|f| process_qnu_frame(cfg, &mut p, reference, &f, &readings[i]));
                (p, r)
            });
            let mut frames = Vec::with_capacity(cfg.fanout);
            for (i, (p, r)) in done.into_iter().enumerate() {
                self.procs.push(p);
                let pf = r.map_err(|e| {
                    HarnessError::stage(Stage::Dsp, format!("slot {}, qnu {}: {e}", slot.slot, i + 1))
                })?;
                if pf.sync.offset != slot.delays[i] {
                    self.diag.sync_errors += 1;
                }
                frames.push(pf.frame);
            }
            let mut streams: Vec<&[Complex64]> = vec![reference];
            streams.extend(frames.iter().map(|f| f.samples()));
            acc.add_streams(&streams)
                .map_err(|e| HarnessError::stage(Stage::Estimate, e))?;
            self.diag.signal_frames += 1;
        }
        self.pooled.merge(&acc);
        let cov = acc
            .covariance()
            .map_err(|e| HarnessError::stage(Stage::Estimate, e))?;
        let qnus = security_point(cfg, g, &cov, acc.count())?;
        self.diag.flagged_estimates += qnus.iter().filter(|q| q.estimate.flagged).count();
        let plan = self.sim.plan();
        Ok(EstimationPoint {
            index: g,
            first_slot: plan.signal[ordinals.start],
            last_slot: plan.signal[ordinals.end - 1],
            frames: size,
            n_samples: acc.count(),
            qnus,
        })
    }
}

/// Runs the full Monte-Carlo chain. Validation problems are returned as
/// errors; a stage failing mid-run yields a report holding the completed
/// points and a failure marker.
pub fn run_pipeline(cfg: &ScenarioConfig) -> Result<KeyRateReport, HarnessError> {
    cfg.validate()?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let sim = NetworkSimulator::new(cfg);
    let psp = sim.psp();
    let front = DspProcessor::new(cfg.dsp.clone())
        .map_err(|e| HarnessError::stage(Stage::Dsp, e))?;
    let mut points = Vec::new();

    let finish = |points, pooled: Option<&CovMatrix>, diag, failure| {
        KeyRateReport::assemble(
            cfg,
            RunMode::MonteCarlo,
            points,
            pooled,
            psp,
            diag,
            failure,
            RuntimeMeta::since(started, clock),
        )
    };

    let readings = match calibration_readings(&sim, &front) {
        Ok(r) => r,
        Err(e) => {
            let failure = StageFailure {
                stage: Stage::Dsp,
                message: format!("calibration: {e}"),
                point: 0,
            };
            return Ok(finish(points, None, Diagnostics::default(), Some(failure)));
        }
    };
    let diag = Diagnostics {
        calibration_frames: sim.plan().calibration.len(),
        ..Default::default()
    };
    let mut run = Run {
        cfg,
        procs: vec![front; cfg.fanout],
        sim,
        readings,
        diag,
        pooled: CovAccumulator::for_modes(cfg.fanout + 1),
    };
    let mut failure = None;
    for g in 0..cfg.estimation_points() {
        match run.group(g) {
            Ok(p) => points.push(p),
            Err(HarnessError::Stage { stage, message }) => {
                failure = Some(StageFailure {
                    stage,
                    message,
                    point: g,
                });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let pooled = if run.pooled.count() > 0 {
        run.pooled.covariance().ok()
    } else {
        None
    };
    Ok(finish(points, pooled.as_ref(), run.diag, failure))
}
