//! Slot-by-slot Monte-Carlo model of the whole network.
//!
//! Slots are numbered from 0 in acquisition order and the switch schedule
//! decides which carry signal and which carry shot noise. A signal slot runs
//! PSP at the QLT, the splitter tree, each QNU's channel and heterodyne
//! receiver, then the acquisition impairments (carrier phase drift, frame
//! delay, LO power drift, ADC oversampling).
//!
//! Calibration slots only matter through their measured variance. They are
//! synthesized from the received marginal of each QNU, which has the same
//! distribution as the full optical chain at a fraction of the cost.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::ScenarioConfig;
use crate::exec::map_vec;
use crate::optics::{
    heterodyne_samples, lossy_channel_samples, oversample_samples, psp_prepare_samples,
    split_samples, switch_slot, OpticsError, PspStats,
};
use crate::rng::{derive_seed, gaussian_samples, scalar_rng, tags};

/// Which slots carry signal and which carry shot noise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotPlan {
    /// Signal slots used for estimation, in order.
    pub signal: Vec<u64>,
    /// Every calibration slot up to the end of the run.
    pub calibration: Vec<u64>,
}

impl SlotPlan {
    /// Skips signal slots until `snu_before` calibration slots precede the
    /// first one and runs on until `snu_after` follow the last one.
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let count = cfg.frames.count;
        let (before, after) = (cfg.dsp.snu_before, cfg.dsp.snu_after);
        let mut signal = Vec::with_capacity(count);
        let mut calibration = Vec::new();
        let mut trailing = 0;
        let mut slot = 0u64;
        loop {
            if cfg.switch.is_calibration(slot) {
                calibration.push(slot);
                if signal.len() == count {
                    trailing += 1;
                    if trailing >= after {
                        break;
                    }
                }
            } else if signal.len() < count && calibration.len() >= before {
                signal.push(slot);
            }
            slot += 1;
        }
        Self { signal, calibration }
    }

    pub fn end_slot(&self) -> u64 {
        self.calibration.last().copied().unwrap_or(0) + 1
    }
}

/// Raw acquisition of one signal slot.
#[derive(Debug, Clone)]
pub struct SignalSlot {
    pub slot: u64,
    /// Position among the used signal slots.
    pub ordinal: usize,
    /// QLT's estimate of the outgoing quadratures (symbol rate, SNU).
    pub reference: Vec<Complex64>,
    /// Per-QNU ADC output (oversampled, raw LO scale).
    pub raw: Vec<Vec<Complex64>>,
    /// Injected acquisition delay per QNU.
    pub delays: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct NetworkSimulator {
    cfg: ScenarioConfig,
    psp: PspStats,
    plan: SlotPlan,
    /// Carrier phase per QNU per phase block, across all signal frames.
    phases: Vec<Vec<f64>>,
    blocks_per_frame: usize,
}

/// Mean of the two quadrature variances, mean removed.
pub(crate) fn sample_variance(s: &[Complex64]) -> f64 {
    let n = s.len() as f64;
    let mean = s.iter().sum::<Complex64>() / n;
    let (vx, vp) = s.iter().fold((0.0, 0.0), |(vx, vp), z| {
        let d = z - mean;
        (vx + d.re * d.re, vp + d.im * d.im)
    });
    0.5 * (vx + vp) / n
}

impl NetworkSimulator {
    /// `cfg` must already be validated.
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let psp = PspStats::analytic(&cfg.source, &cfg.qlt_detector);
        let plan = SlotPlan::new(cfg);
        let blocks_per_frame = cfg.frames.samples.div_ceil(cfg.dsp.phase_block_len);
        let total = blocks_per_frame * cfg.frames.count;
        let sigma = cfg.impairments.phase_drift_sigma_rad;
        let phases = (0..cfg.fanout)
            .map(|q| {
                if sigma == 0.0 {
                    return vec![0.0; total];
                }
                let mut r = scalar_rng(derive_seed(cfg.seed, &[tags::PHASE_DRIFT, q as u64]));
                let mut theta = r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                (0..total)
                    .map(|_| {
                        let t = theta;
                        theta += sigma * r.sample::<f64, _>(StandardNormal);
                        t
                    })
                    .collect()
            })
            .collect();
        Self {
            cfg: cfg.clone(),
            psp,
            plan,
            phases,
            blocks_per_frame,
        }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn plan(&self) -> &SlotPlan {
        &self.plan
    }

    pub fn psp(&self) -> PspStats {
        self.psp
    }

    /// Relative LO power in `slot`.
    pub fn lo_gain(&self, slot: u64) -> f64 {
        let imp = &self.cfg.impairments;
        if imp.lo_drift_amplitude == 0.0 || imp.lo_drift_period_slots <= 0.0 {
            return 1.0;
        }
        let w = 2.0 * std::f64::consts::PI * slot as f64 / imp.lo_drift_period_slots;
        1.0 + imp.lo_drift_amplitude * w.sin()
    }

    /// Carrier phase track of one QNU, one value per phase block.
    pub fn phase_track(&self, qnu: usize) -> &[f64] {
        &self.phases[qnu]
    }

    /// Quadrature variance at QNU `qnu`'s receiver input.
    pub fn received_variance(&self, qnu: usize) -> f64 {
        let ch = &self.cfg.channels[qnu];
        1.0 + ch.transmittance() * (self.psp.outgoing_variance() - 1.0 + ch.excess_noise_snu)
    }

    fn slot_seed(&self, slot: u64) -> u64 {
        derive_seed(self.cfg.seed, &[tags::NETWORK, slot])
    }

    /// ADC output of a calibration slot at QNU `qnu`.
    pub fn calibration_raw(&self, slot: u64, qnu: usize) -> Vec<Complex64> {
        let cfg = &self.cfg;
        let seed = self.slot_seed(slot);
        let q = qnu as u64;
        let mut s = gaussian_samples(
            cfg.frames.samples,
            self.received_variance(qnu),
            derive_seed(seed, &[tags::CALIBRATION, q]),
        );
        heterodyne_samples(&mut s, &cfg.qnu_detector, derive_seed(seed, &[tags::QNU_DETECT, q]));
        switch_slot(
            &mut s,
            true,
            &cfg.switch,
            self.lo_gain(slot),
            cfg.qnu_detector.vacuum_variance(),
            derive_seed(seed, &[tags::SWITCH, q]),
        );
        self.adc(s, seed, q)
    }

    fn adc(&self, s: Vec<Complex64>, seed: u64, q: u64) -> Vec<Complex64> {
        let imp = &self.cfg.impairments;
        if imp.oversampling == 1 {
            return s;
        }
        oversample_samples(
            &s,
            imp.oversampling,
            imp.oversampling_noise_snu,
            derive_seed(seed, &[tags::OVERSAMPLE, q]),
        )
    }

    /// Simulates the `ordinal`-th used signal slot.
    pub fn signal_slot(&self, ordinal: usize) -> Result<SignalSlot, OpticsError> {
        let cfg = &self.cfg;
        let slot = self.plan.signal[ordinal];
        let seed = self.slot_seed(slot);
        let n = cfg.frames.samples;

        let (out, meas) = psp_prepare_samples(&cfg.source, &cfg.qlt_detector, n, seed);
        let k = self.psp.estimator_gain;
        let reference: Vec<Complex64> = meas.iter().map(|z| z * k).collect();
        drop(meas);

        let branches = if cfg.fanout == 1 {
            vec![out]
        } else {
            split_samples(&out, cfg.fanout, seed)?
        };
        let fan = cfg.fanout as f64;
        let gain = self.lo_gain(slot);
        let block = cfg.dsp.phase_block_len;
        let first_block = ordinal * self.blocks_per_frame;

        let results = map_vec(branches.into_iter().enumerate().collect(), |(i, mut b)| {
            let q = i as u64;
            let ch = &cfg.channels[i];
            lossy_channel_samples(
                &mut b,
                ch.transmittance() * fan,
                ch.excess_noise_snu / fan,
                derive_seed(seed, &[tags::CHANNEL, q]),
            );
            heterodyne_samples(&mut b, &cfg.qnu_detector, derive_seed(seed, &[tags::QNU_DETECT, q]));
            let track = &self.phases[i][first_block..first_block + self.blocks_per_frame];
            for (chunk, &theta) in b.chunks_mut(block).zip(track) {
                if theta != 0.0 {
                    let r = Complex64::from_polar(1.0, theta);
                    chunk.iter_mut().for_each(|z| *z *= r);
                }
            }
            let d = cfg.impairments.max_delay as i64;
            let delay = if d == 0 {
                0
            } else {
                scalar_rng(derive_seed(seed, &[tags::DELAY, q])).random_range(-d..=d)
            };
            // local[j] = received[j - delay]
            b.rotate_right(delay.rem_euclid(n as i64) as usize);
            switch_slot(
                &mut b,
                false,
                &cfg.switch,
                gain,
                cfg.qnu_detector.vacuum_variance(),
                derive_seed(seed, &[tags::SWITCH, q]),
            );
            (self.adc(b, seed, q), delay)
        });
        let (raw, delays) = results.into_iter().unzip();
        Ok(SignalSlot {
            slot,
            ordinal,
            reference,
            raw,
            delays,
        })
    }
}
