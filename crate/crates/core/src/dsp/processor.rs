//! Per-QNU DSP chain.
//!
//! filter -> matched downsample -> SNU normalization -> sync on a leading
//! segment -> circular alignment -> block phase compensation.
//!
//! Within each phase block the first `revealed_fraction` of the samples is
//! disclosed by the QNU. The revealed part is compensated with its own
//! estimate; the rest uses the predictor's extrapolation of the previous
//! blocks' estimates. The very first block of a stream has no history and is
//! compensated with its own estimate throughout.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    compensate_samples, downsample_samples, estimate_phase_samples, fir_lowpass_samples,
    normalize_frame, synchronize_samples, CalibrationRecord, DspError, PhaseBlockEstimate,
    PhasePredictor, Predictor, SnuMode, SyncResult,
};
use crate::frame::QuadratureFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspConfig {
    /// 0 disables the low-pass filter.
    pub filter_taps: usize,
    /// Cutoff as a fraction of the (oversampled) sample rate.
    pub filter_cutoff: f64,
    pub downsample: usize,
    pub sync_max_lag: usize,
    /// `None` selects `5/sqrt(n)` for the sync segment length `n`.
    pub sync_threshold: Option<f64>,
    pub sync_segment: usize,
    pub predictor: Predictor,
    pub revealed_fraction: f64,
    pub phase_block_len: usize,
    pub snu_before: usize,
    pub snu_after: usize,
    pub snu_mode: SnuMode,
    /// Subtract switch leakage from calibration readings using the known
    /// extinction ratio.
    pub leakage_correction: bool,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            filter_taps: 0,
            filter_cutoff: 0.45,
            downsample: 1,
            sync_max_lag: 1000,
            sync_threshold: None,
            sync_segment: 65_536,
            predictor: Predictor::default(),
            revealed_fraction: 0.5,
            phase_block_len: 40_000,
            snu_before: 10,
            snu_after: 10,
            snu_mode: SnuMode::Included,
            leakage_correction: true,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |field, reason: &str| DspError::InvalidConfig {
            field,
            reason: reason.into(),
        };
        if self.filter_taps != 0 {
            super::lowpass_taps(self.filter_cutoff, self.filter_taps)?;
        }
        if self.downsample == 0 {
            return Err(bad("dsp.downsample", "must be >= 1"));
        }
        if let Some(t) = self.sync_threshold {
            if !(t > 0.0 && t < 1.0) {
                return Err(DspError::InvalidThreshold(t));
            }
        }
        if self.sync_segment <= self.sync_max_lag {
            return Err(bad("dsp.sync_segment", "must exceed sync_max_lag"));
        }
        if !(self.revealed_fraction > 0.0 && self.revealed_fraction <= 1.0) {
            return Err(bad("dsp.revealed_fraction", "must lie in (0, 1]"));
        }
        if self.phase_block_len < 200 {
            return Err(bad("dsp.phase_block_len", "must be >= 200"));
        }
        if (self.revealed_fraction * self.phase_block_len as f64) < 100.0 {
            return Err(bad("dsp.revealed_fraction", "revealed part of a block is below 100 samples"));
        }
        if self.snu_before == 0 || self.snu_after == 0 {
            return Err(bad("dsp.snu_before", "calibration counts must be >= 1"));
        }
        if let Predictor::WindowLinear(0) = self.predictor {
            return Err(bad("dsp.predictor", "window must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ProcessedFrame {
    pub frame: QuadratureFrame,
    pub sync: SyncResult,
    /// Revealed-part estimates, one per block.
    pub phases: Vec<PhaseBlockEstimate>,
    /// Phase applied to each block's unrevealed part.
    pub applied: Vec<f64>,
}

/// Stateful DSP for one QNU stream.
#[derive(Debug, Clone)]
pub struct DspProcessor {
    config: DspConfig,
    history: Vec<PhaseBlockEstimate>,
    next_block: u64,
}

impl DspProcessor {
    pub fn new(config: DspConfig) -> Result<Self, DspError> {
        config.validate()?;
        Ok(Self {
            config,
            history: Vec::new(),
            next_block: 0,
        })
    }

    pub fn config(&self) -> &DspConfig {
        &self.config
    }

    pub fn history(&self) -> &[PhaseBlockEstimate] {
        &self.history
    }

    /// Filter and downsample only (also used for calibration frames).
    pub fn front_end(&self, s: &[Complex64]) -> Result<Vec<Complex64>, DspError> {
        let c = &self.config;
        let filtered;
        let s = if c.filter_taps > 0 {
            filtered = fir_lowpass_samples(s, c.filter_cutoff, c.filter_taps)?;
            &filtered[..]
        } else {
            s
        };
        downsample_samples(s, c.downsample)
    }

    /// Runs the full chain on one signal frame against the QLT reference
    /// symbols of the same frame.
    pub fn process(
        &mut self,
        reference: &[Complex64],
        raw: &QuadratureFrame,
        record: CalibrationRecord,
    ) -> Result<ProcessedFrame, DspError> {
        let symbols = self.front_end(raw.samples())?;
        let down = raw
            .with_samples(symbols)?
            .with_sample_rate(raw.sample_rate_hz / self.config.downsample as f64);
        self.process_symbols(reference, &down, record)
    }

    /// The chain after [`front_end`](Self::front_end): `symbols` is already
    /// at the symbol rate.
    pub fn process_symbols(
        &mut self,
        reference: &[Complex64],
        symbols: &QuadratureFrame,
        record: CalibrationRecord,
    ) -> Result<ProcessedFrame, DspError> {
        let c = self.config.clone();
        if symbols.len() != reference.len() {
            return Err(DspError::LengthMismatch {
                left: reference.len(),
                right: symbols.len(),
            });
        }
        let normalized = normalize_frame(symbols, record)?;

        let seg = c.sync_segment.min(reference.len());
        let threshold = c.sync_threshold.unwrap_or_else(|| super::default_threshold(seg));
        let sync = synchronize_samples(
            &reference[..seg],
            &normalized.samples()[..seg],
            c.sync_max_lag.min(seg - 1),
            threshold,
        )?;
        let aligned = normalized.rolled(sync.offset);

        let mut out = aligned.samples().to_vec();
        let mut phases = Vec::new();
        let mut applied = Vec::new();
        let block = c.phase_block_len;
        for (ob, rb) in out.chunks_mut(block).zip(reference.chunks(block)) {
            let revealed = ((ob.len() as f64 * c.revealed_fraction).floor() as usize).min(ob.len());
            let block_index = self.next_block;
            self.next_block += 1;
            let estimate = if revealed >= 100 {
                Some(estimate_phase_samples(&rb[..revealed], &ob[..revealed])?)
            } else {
                None
            };
            let predicted = if self.history.is_empty() {
                None
            } else {
                Some(c.predictor.predict(
                    &self.history.iter().map(|h| h.theta).collect::<Vec<_>>(),
                )?)
            };
            let rest_theta = match (predicted, estimate) {
                (Some(p), _) => p,
                (None, Some(e)) => e,
                (None, None) => return Err(DspError::EmptyHistory),
            };
            let head_theta = estimate.unwrap_or(rest_theta);
            let (head, tail) = ob.split_at_mut(revealed);
            compensate_samples(head, head_theta);
            compensate_samples(tail, rest_theta);
            applied.push(rest_theta);
            if let Some(theta) = estimate {
                let est = PhaseBlockEstimate {
                    block_index,
                    theta,
                    revealed_fraction: c.revealed_fraction,
                    predictor_id: c.predictor.id(),
                };
                self.history.push(est.clone());
                phases.push(est);
            }
        }
        Ok(ProcessedFrame {
            frame: aligned.with_samples(out)?,
            sync,
            phases,
            applied,
        })
    }
}
