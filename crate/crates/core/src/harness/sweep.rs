//! One-parameter sweeps over a scenario.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::report::QnuAverage;
use super::{analytic_report, run_pipeline, HarnessError, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Thermal source variance.
    VS,
    /// VOA transmittance, which sets `V_A`.
    TV,
    /// Every channel's total transmittance in dB.
    TDb,
    /// Every channel's excess noise.
    Xi,
    Beta,
    /// QNU detector efficiency.
    Eta,
    /// QNU detector electronic noise.
    VEl,
    Fer,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 8] = [
        SweepAxis::VS,
        SweepAxis::TV,
        SweepAxis::TDb,
        SweepAxis::Xi,
        SweepAxis::Beta,
        SweepAxis::Eta,
        SweepAxis::VEl,
        SweepAxis::Fer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::VS => "v_s",
            SweepAxis::TV => "t_v",
            SweepAxis::TDb => "t_db",
            SweepAxis::Xi => "xi",
            SweepAxis::Beta => "beta",
            SweepAxis::Eta => "eta",
            SweepAxis::VEl => "v_el",
            SweepAxis::Fer => "fer",
        }
    }

    pub fn apply(self, cfg: &mut ScenarioConfig, v: f64) {
        match self {
            SweepAxis::VS => cfg.source.variance_snu = v,
            SweepAxis::TV => cfg.source.voa_transmittance = v,
            SweepAxis::TDb => cfg.channels.iter_mut().for_each(|c| c.transmittance_db = v),
            SweepAxis::Xi => cfg.channels.iter_mut().for_each(|c| c.excess_noise_snu = v),
            SweepAxis::Beta => cfg.keyrate.beta = v,
            SweepAxis::Eta => cfg.qnu_detector.efficiency = v,
            SweepAxis::VEl => cfg.qnu_detector.electronic_noise_snu = v,
            SweepAxis::Fer => cfg.keyrate.fer = v,
        }
    }
}

impl FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| HarnessError::UnknownAxis(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// Equivalent modulation variance at this value.
    pub va: f64,
    pub qnus: Vec<QnuAverage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub analytic: bool,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Key rate `K_eq1` of `qnu` along the sweep.
    pub fn key_rates(&self, qnu: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.qnus[qnu].key_rate_eq1_bps).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "{},V_A,qnu,T_db_hat,xi_x,xi_p,snr,I_ab,I_inter_max,chi_trusted,chi_untrusted,K_eq1,K_eq2\n",
            self.axis.name()
        );
        for r in &self.rows {
            for q in &r.qnus {
                let vals = [
                    q.transmittance_db_hat,
                    q.excess_noise_x,
                    q.excess_noise_p,
                    q.snr,
                    q.mutual_info_ab,
                    q.inter_qnu_mi_max,
                    q.holevo_trusted,
                    q.holevo_untrusted,
                    q.key_rate_eq1_bps,
                    q.key_rate_eq2_bps,
                ];
                out.push_str(&format!("{:.11e},{:.11e},{}", r.value, r.va, q.qnu + 1));
                for v in vals {
                    out.push_str(&format!(",{v:.11e}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Evaluates `cfg` at every value of `axis`, through the analytic model or a
/// full Monte-Carlo run.
pub fn sweep(
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    analytic: bool,
) -> Result<SweepTable, HarnessError> {
    let rows = values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            axis.apply(&mut c, v);
            let report = if analytic {
                analytic_report(&c)?
            } else {
                run_pipeline(&c)?
            };
            if let Some(f) = report.failure {
                return Err(HarnessError::Stage {
                    stage: f.stage,
                    message: format!("{} = {v}: {}", axis.name(), f.message),
                });
            }
            Ok(SweepRow {
                value: v,
                va: report.psp.va(),
                qnus: report.averages,
            })
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(SweepTable {
        axis,
        analytic,
        rows,
    })
}
