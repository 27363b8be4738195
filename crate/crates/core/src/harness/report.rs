//! Key-rate reports and their JSON / CSV renderings.
//!
//! JSON output is bit-stable: keys are sorted and every float outside the
//! embedded scenario is rounded to 12 significant digits. The scenario keeps
//! full precision so its digest can be recomputed from the report.

use std::path::Path;
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{HarnessError, ScenarioConfig, Stage};
use crate::gaussian::CovMatrix;
use crate::optics::PspStats;
use crate::security::{ChannelEstimate, SecurityQuantities};

pub const REPORT_FORMAT_VERSION: u32 = 1;

pub const CSV_HEADER: &str =
    "point,qnu,T_db_hat,xi_x,xi_p,snr,I_ab,I_inter_max,chi_trusted,chi_untrusted,K_eq1,K_eq2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    MonteCarlo,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

/// One QNU at one estimation point. `qnu` is 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QnuPoint {
    pub qnu: usize,
    pub estimate: ChannelEstimate,
    pub security: SecurityQuantities,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationPoint {
    pub index: usize,
    pub first_slot: u64,
    pub last_slot: u64,
    pub frames: usize,
    pub n_samples: usize,
    pub qnus: Vec<QnuPoint>,
}

/// Per-QNU means over estimation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QnuAverage {
    pub qnu: usize,
    pub transmittance_db_hat: f64,
    pub excess_noise_x: f64,
    pub excess_noise_p: f64,
    pub snr: f64,
    pub mutual_info_ab: f64,
    pub inter_qnu_mi_max: f64,
    pub holevo_trusted: f64,
    pub holevo_untrusted: f64,
    pub key_rate_eq1_bps: f64,
    pub key_rate_eq2_bps: f64,
}

impl QnuAverage {
    pub fn over(qnu: usize, points: &[EstimationPoint]) -> Self {
        let rows: Vec<&QnuPoint> = points.iter().filter_map(|p| p.qnus.get(qnu)).collect();
        let n = rows.len().max(1) as f64;
        let mean = |f: &dyn Fn(&QnuPoint) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        Self {
            qnu,
            transmittance_db_hat: mean(&|r| r.estimate.transmittance_db_hat),
            excess_noise_x: mean(&|r| r.estimate.excess_noise_hat_x),
            excess_noise_p: mean(&|r| r.estimate.excess_noise_hat_p),
            snr: mean(&|r| r.estimate.snr_hat),
            mutual_info_ab: mean(&|r| r.security.mutual_info_ab),
            inter_qnu_mi_max: mean(&|r| r.security.inter_qnu_mi_max),
            holevo_trusted: mean(&|r| r.security.holevo_trusted),
            holevo_untrusted: mean(&|r| r.security.holevo_untrusted),
            key_rate_eq1_bps: mean(&|r| r.security.key_rate_eq1_bps),
            key_rate_eq2_bps: mean(&|r| r.security.key_rate_eq2_bps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
    /// Estimation point being processed when the stage failed.
    pub point: usize,
}

/// Counters gathered while running; zero in analytic mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub signal_frames: usize,
    pub calibration_frames: usize,
    /// Frames whose recovered offset differs from the injected delay.
    pub sync_errors: usize,
    /// Estimates whose excess noise fell below -3 standard errors.
    pub flagged_estimates: usize,
}

/// Excluded from determinism comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeMeta {
    pub started_unix_s: f64,
    pub elapsed_s: f64,
    pub threads: usize,
    pub engine_version: String,
}

impl RuntimeMeta {
    pub(crate) fn since(started: SystemTime, clock: Instant) -> Self {
        Self {
            started_unix_s: started
                .duration_since(UNIX_EPOCH)
                .map_or(0.0, |d| d.as_secs_f64()),
            elapsed_s: clock.elapsed().as_secs_f64(),
            threads: crate::exec::current_threads(),
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub format_version: u32,
    /// SHA-256 of the canonical scenario JSON.
    pub scenario_digest: String,
    pub mode: RunMode,
    pub seed: u64,
    pub qnus: usize,
    pub points: Vec<EstimationPoint>,
    pub averages: Vec<QnuAverage>,
    /// Pooled covariance over all points, modes `(A, B_1, ..., B_N)`.
    pub covariance: Vec<Vec<f64>>,
    pub psp: PspStats,
    pub diagnostics: Diagnostics,
    pub scenario: ScenarioConfig,
    pub runtime: RuntimeMeta,
    pub failure: Option<StageFailure>,
}

pub(crate) fn matrix_rows(cov: &CovMatrix) -> Vec<Vec<f64>> {
    let m = cov.matrix();
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub(crate) fn rows_to_cov(rows: &[Vec<f64>]) -> Result<CovMatrix, HarnessError> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(HarnessError::Report("covariance is not square".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    CovMatrix::from_row_slice(n, &flat).map_err(|e| HarnessError::stage(Stage::Estimate, e))
}

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round12(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(m) => {
            for (k, x) in m.iter_mut() {
                if k != "scenario" {
                    round_floats(x);
                }
            }
        }
        _ => {}
    }
}

impl KeyRateReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        cfg: &ScenarioConfig,
        mode: RunMode,
        points: Vec<EstimationPoint>,
        covariance: Option<&CovMatrix>,
        psp: PspStats,
        diagnostics: Diagnostics,
        failure: Option<StageFailure>,
        runtime: RuntimeMeta,
    ) -> Self {
        let averages = (0..cfg.fanout).map(|q| QnuAverage::over(q, &points)).collect();
        Self {
            format_version: REPORT_FORMAT_VERSION,
            scenario_digest: cfg.digest(),
            mode,
            seed: cfg.seed,
            qnus: cfg.fanout,
            points,
            averages,
            covariance: covariance.map(matrix_rows).unwrap_or_default(),
            psp,
            diagnostics,
            scenario: cfg.clone(),
            runtime,
            failure,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn digest_matches(&self) -> bool {
        self.scenario.digest() == self.scenario_digest
    }

    fn value(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        round_floats(&mut v);
        v
    }

    /// Canonical JSON: sorted keys, rounded floats, trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.value()).expect("value serializes");
        s.push('\n');
        s
    }

    /// Canonical JSON with the runtime section removed, for determinism
    /// checks.
    pub fn deterministic_json(&self) -> String {
        let mut v = self.value();
        if let Value::Object(m) = &mut v {
            m.remove("runtime");
        }
        v.to_string()
    }

    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(s).map_err(|e| HarnessError::Report(e.to_string()))
    }

    /// One row per QNU per estimation point; `qnu` is 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            for q in &p.qnus {
                let (e, s) = (&q.estimate, &q.security);
                let vals = [
                    e.transmittance_db_hat,
                    e.excess_noise_hat_x,
                    e.excess_noise_hat_p,
                    e.snr_hat,
                    s.mutual_info_ab,
                    s.inter_qnu_mi_max,
                    s.holevo_trusted,
                    s.holevo_untrusted,
                    s.key_rate_eq1_bps,
                    s.key_rate_eq2_bps,
                ];
                out.push_str(&format!("{},{}", p.index, q.qnu + 1));
                for v in vals {
                    out.push_str(&format!(",{v:.11e}"));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }

    pub fn write(&self, path: &Path, format: ReportFormat) -> Result<(), HarnessError> {
        std::fs::write(path, self.render(format))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
