//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Run with `cargo test --release -p qpon-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use qpon_core::dsp::{default_threshold, realtime_snu_from_variances, synchronize_samples, SnuMode};
use qpon_core::gaussian::{
    beam_splitter_symplectic, condition_on_heterodyne, gaussian_mutual_information, symplectic_eigenvalues,
    von_neumann_entropy,
};
use qpon_core::harness::{
    analytic_report, run_pipeline, sweep, KeyRateReport, NetworkSimulator, SweepAxis,
};
use qpon_core::optics::{db_to_linear, psp_prepare, DetectorSpec, PspStats, SourceSpec};
use qpon_core::rng::{derive_seed, gaussian_samples, scalar_rng};
use qpon_core::security::{holevo_bound, mutual_info_ab, secret_key_rate, KeyRateParams};
use qpon_core::{CovMatrix, ScenarioConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

const TABLE1_DET: DetectorSpec = DetectorSpec {
    efficiency: 0.56,
    electronic_noise_snu: 0.12,
    bandwidth_hz: 4e9,
};

fn table1() -> ScenarioConfig {
    ScenarioConfig::preset("table1_4qnu").expect("bundled preset")
}

fn complete(r: KeyRateReport) -> KeyRateReport {
    if let Some(f) = &r.failure {
        panic!("run failed in {} at point {}: {}", f.stage, f.point, f.message);
    }
    r
}

/// Channel estimation accuracy over seeded repetitions at one estimation point
/// each. The first repetition is handed back for the mutual-information check.
fn c1_estimation(first: &mut Option<KeyRateReport>) -> Outcome {
    const REPS: usize = 20;
    let mut cfg = table1();
    cfg.channels.iter_mut().for_each(|c| c.excess_noise_snu = 0.05);
    cfg.frames.count = 25;
    let clock = Instant::now();
    let mut good = 0;
    let mut worst_t: f64 = 0.0;
    let mut worst_xi: f64 = 0.0;
    let mut z = Vec::new();
    for rep in 0..REPS {
        cfg.seed = 1000 + rep as u64;
        let r = complete(run_pipeline(&cfg).expect("valid scenario"));
        let mut ok = true;
        for (q, ch) in r.points[0].qnus.iter().zip(&cfg.channels) {
            let dt = (q.estimate.transmittance_db_hat - ch.transmittance_db).abs();
            let dxi = (q.estimate.excess_noise_mean() - ch.excess_noise_snu).abs();
            worst_t = worst_t.max(dt);
            worst_xi = worst_xi.max(dxi);
            let se = 0.5 * q.estimate.excess_noise_se_x.hypot(q.estimate.excess_noise_se_p);
            z.push((q.estimate.excess_noise_mean() - ch.excess_noise_snu) / se);
            ok &= dt <= 0.2 && dxi <= 0.01;
        }
        good += ok as usize;
        if rep == 0 {
            *first = Some(r);
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    let frac = good as f64 / REPS as f64;
    // Scatter of the excess-noise errors in units of their standard error:
    // a mean near 0 and an rms near 1 mean the misses are statistical.
    let nz = z.len() as f64;
    let z_mean = z.iter().sum::<f64>() / nz;
    let z_rms = (z.iter().map(|v| v * v).sum::<f64>() / nz).sqrt();
    Outcome::new(
        frac >= 0.95 && secs <= 300.0,
        format!(
            "{good}/{REPS} reps within tolerance (need 95%), worst |dT| {worst_t:.3} dB, worst |dxi| {worst_xi:.4} SNU, xi error mean {z_mean:+.2} / rms {z_rms:.2} standard errors, {secs:.0} s"
        ),
    )
}

fn c2_snr() -> Outcome {
    let mut cfg = table1();
    let xi_x = [0.0542, 0.0525, 0.0527, 0.0570];
    let want = [0.112, 0.097, 0.107, 0.095];
    for (c, x) in cfg.channels.iter_mut().zip(xi_x) {
        c.excess_noise_snu = x;
    }
    let r = analytic_report(&cfg).expect("valid scenario");
    let mut pass = true;
    let mut parts = vec![];
    for (q, w) in r.points[0].qnus.iter().zip(want) {
        let rel = q.estimate.snr_hat / w - 1.0;
        pass &= rel.abs() <= 0.15;
        parts.push(format!("{:.4} ({:+.1}%)", q.estimate.snr_hat, 100.0 * rel));
    }
    Outcome::new(pass, format!("SNR {} vs {want:?}", parts.join(", ")))
}

fn c3_mutual_info(mc: &KeyRateReport) -> Outcome {
    let closed = mutual_info_ab(0.112);
    let closed_ok = (closed - 1.112f64.log2()).abs() <= 1e-9;

    // Sampled covariance of (A, B_1) against the model at the same point.
    let n = mc.points[0].n_samples as f64;
    let model = analytic_report(&mc.scenario).expect("valid scenario");
    let pick = |rows: &[Vec<f64>]| {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let full = CovMatrix::from_row_slice(rows.len(), &flat).expect("covariance");
        full.select_modes(&[0, 1]).expect("modes")
    };
    let sampled = gaussian_mutual_information(&pick(&mc.covariance), 2).expect("mi");
    let analytic = gaussian_mutual_information(&pick(&model.covariance), 2).expect("mi");
    // I = -log2(1 - rho^2) over two independent quadratures; Var(rho) = (1 - rho^2)^2 / n.
    let rho2 = 1.0 - 2f64.powf(-analytic);
    let sigma = (2.0 * rho2).sqrt() / (std::f64::consts::LN_2 * n.sqrt());
    let z = (sampled - analytic) / sigma;
    Outcome::new(
        closed_ok && z.abs() <= 5.0,
        format!("I(0.112) = {closed:.12}, sampled {sampled:.5} vs model {analytic:.5} ({z:+.2} sigma)"),
    )
}

fn c4_inter_qnu(mc: &KeyRateReport, model: &KeyRateReport) -> Outcome {
    let mut pass = true;
    let mut max_ratio: f64 = 0.0;
    for r in [mc, model] {
        for q in r.points.iter().flat_map(|p| &p.qnus) {
            let s = &q.security;
            pass &= s.inter_qnu_mi_max < s.holevo_be;
            pass &= s.key_rate_eq1_bps == s.key_rate_eq2_bps;
            max_ratio = max_ratio.max(s.inter_qnu_mi_max / s.holevo_be);
        }
    }
    Outcome::new(
        pass,
        format!("max I_inter / chi_BE = {max_ratio:.3} over Monte-Carlo and analytic points; K_eq1 == K_eq2 everywhere: {pass}"),
    )
}

fn c5_holevo(model: &KeyRateReport) -> Outcome {
    let mut pass = true;
    for trusted in [true, false] {
        pass &= holevo_bound(4.28, 1.0, 0.0, &DetectorSpec::IDEAL, trusted).unwrap() == 0.0;
    }
    let t = db_to_linear(-10.77);
    for trusted in [true, false] {
        let mut prev = -1.0;
        for k in 0..=40 {
            let chi = holevo_bound(4.28, t, 0.005 * k as f64, &TABLE1_DET, trusted).unwrap();
            pass &= chi >= prev;
            prev = chi;
        }
        let mut prev = -1.0;
        for k in 1..=40 {
            let chi = holevo_bound(0.25 * k as f64, t, 0.05, &TABLE1_DET, trusted).unwrap();
            pass &= chi >= prev;
            prev = chi;
        }
    }
    let best = model.points[0]
        .qnus
        .iter()
        .max_by(|a, b| a.security.key_rate_eq1_bps.total_cmp(&b.security.key_rate_eq1_bps))
        .unwrap();
    let (ct, cu) = (best.security.holevo_trusted, best.security.holevo_untrusted);
    let in_range = |c: f64| (0.08..=0.14).contains(&c);
    pass &= in_range(ct) || in_range(cu);
    Outcome::new(
        pass,
        format!(
            "identity channel gives 0, monotone in xi and V_A; best QNU {} chi trusted {ct:.4}, untrusted {cu:.4}",
            best.qnu + 1
        ),
    )
}

fn c6_key_rate() -> Outcome {
    let params = KeyRateParams {
        f_hz: 4e9,
        fer: 0.0,
        beta: 0.96,
        trusted_detector: true,
        detector: None,
    };
    let grid = |lo: f64, hi: f64| (0..100).map(move |k| lo + (hi - lo) * k as f64 / 99.0);
    let mut pass = true;

    let at_fer1 = secret_key_rate(0.15, 0.1, 0.01, &KeyRateParams { fer: 1.0, ..params });
    pass &= at_fer1.eq1_bps == 0.0 && at_fer1.eq2_bps == 0.0;
    let i_ab = 0.15;
    let edge = secret_key_rate(i_ab, params.beta * i_ab, 0.0, &params);
    pass &= edge.eq1_bps == 0.0 && edge.eq2_bps == 0.0;

    let nondecreasing = |v: Vec<f64>| v.windows(2).all(|w| w[1] >= w[0]);
    let k = |i: f64, chi: f64, inter: f64, p: &KeyRateParams| secret_key_rate(i, chi, inter, p).eq1_bps;
    pass &= nondecreasing(
        grid(0.8, 1.0)
            .map(|b| k(0.15, 0.1, 0.01, &KeyRateParams { beta: b, ..params }))
            .collect(),
    );
    pass &= nondecreasing(grid(0.0, 0.3).map(|i| k(i, 0.1, 0.01, &params)).collect());
    pass &= nondecreasing(grid(0.0, 0.3).map(|c| -k(0.15, c, 0.01, &params)).collect());
    pass &= nondecreasing(grid(0.0, 0.3).map(|x| -k(0.15, 0.1, x, &params)).collect());
    pass &= nondecreasing(
        grid(0.0, 1.0)
            .map(|f| -k(0.15, 0.1, 0.01, &KeyRateParams { fer: f, ..params }))
            .collect(),
    );

    let base = table1().source.voa_transmittance;
    let tvs: Vec<f64> = (1..=40).map(|j| base * 0.1 * j as f64).collect();
    let table = sweep(&table1(), SweepAxis::TV, &tvs, true).expect("sweep");
    let mut interior = true;
    for q in 0..4 {
        let rates = table.key_rates(q);
        let best = rates
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        interior &= best > 0 && best + 1 < rates.len() && rates[best] > 0.0;
    }
    pass &= interior;
    Outcome::new(
        pass,
        format!("zero at FER = 1 and beta I = chi, monotone on 100-point grids, interior V_A optimum for every QNU: {interior}"),
    )
}

fn symplectic_rotation(n: usize, mode: usize, phi: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(2 * n, 2 * n);
    let (c, si) = (phi.cos(), phi.sin());
    let k = 2 * mode;
    s[(k, k)] = c;
    s[(k, k + 1)] = si;
    s[(k + 1, k)] = -si;
    s[(k + 1, k + 1)] = c;
    s
}

fn squeezer(n: usize, mode: usize, r: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(2 * n, 2 * n);
    s[(2 * mode, 2 * mode)] = (-r).exp();
    s[(2 * mode + 1, 2 * mode + 1)] = r.exp();
    s
}

fn random_symplectic(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut s = DMatrix::identity(2 * n, 2 * n);
    for _ in 0..3 * n {
        let m = rng.random_range(0..n);
        s = symplectic_rotation(n, m, rng.random_range(0.0..std::f64::consts::TAU)) * s;
        s = squeezer(n, m, rng.random_range(-0.5..0.5)) * s;
        if n > 1 {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            s = beam_splitter_symplectic(n, i, j, rng.random_range(0.05..0.95)) * s;
        }
    }
    s
}

fn c7_gaussian() -> Outcome {
    let mut rng = scalar_rng(derive_seed(7, &[1]));
    let mut worst_inv: f64 = 0.0;
    let mut worst_pure: f64 = 0.0;
    let mut physical = true;
    for trial in 0..100 {
        let n = 1 + trial % 4;
        let nus: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        let diag: Vec<f64> = nus.iter().flat_map(|&v| [v, v]).collect();
        let thermal = CovMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))).unwrap();
        let v = thermal.transform(&random_symplectic(n, &mut rng)).unwrap();
        let moved = v.transform(&random_symplectic(n, &mut rng)).unwrap();
        let mut a = symplectic_eigenvalues(&v).unwrap().values;
        let mut b = symplectic_eigenvalues(&moved).unwrap().values;
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            worst_inv = worst_inv.max((x - y).abs());
        }

        if n > 1 {
            let pure = CovMatrix::identity(2 * n)
                .transform(&random_symplectic(n, &mut rng))
                .unwrap();
            let k = 1 + trial % (n - 1);
            let left: Vec<usize> = (0..k).collect();
            let right: Vec<usize> = (k..n).collect();
            let sa = von_neumann_entropy(&pure.select_modes(&left).unwrap()).unwrap();
            let sb = von_neumann_entropy(&pure.select_modes(&right).unwrap()).unwrap();
            worst_pure = worst_pure.max((sa - sb).abs());

            let cond = condition_on_heterodyne(&moved, trial % n).unwrap();
            physical &= cond.is_physical();
        }
    }
    Outcome::new(
        worst_inv <= 1e-8 && worst_pure <= 1e-8 && physical,
        format!(
            "100 random states: spectrum drift {worst_inv:.1e}, pure bipartition entropy gap {worst_pure:.1e}, conditioned states physical: {physical}"
        ),
    )
}

fn c8_sync() -> Outcome {
    const N: usize = 400_000;
    const LAG: usize = 1000;
    const TRIALS: u64 = 1000;
    let threshold = default_threshold(N);
    let amp = 0.1f64.sqrt();
    let mut rng = scalar_rng(derive_seed(8, &[0]));
    let mut exact = 0;
    for t in 0..TRIALS {
        let d: i64 = rng.random_range(-(LAG as i64)..=LAG as i64);
        let stream = gaussian_samples(N + 2 * LAG, 1.0, derive_seed(8, &[1, t]));
        let noise = gaussian_samples(N, 1.0, derive_seed(8, &[2, t]));
        let reference = &stream[LAG..LAG + N];
        let start = (LAG as i64 - d) as usize;
        let local: Vec<Complex64> = stream[start..start + N]
            .iter()
            .zip(&noise)
            .map(|(s, w)| s * amp + w)
            .collect();
        if let Ok(r) = synchronize_samples(reference, &local, LAG, threshold) {
            exact += (r.offset == d) as usize;
        }
    }
    let mut false_syncs = 0;
    for t in 0..TRIALS {
        let a = gaussian_samples(N, 1.0, derive_seed(8, &[3, t]));
        let b = gaussian_samples(N, 1.0, derive_seed(8, &[4, t]));
        false_syncs += synchronize_samples(&a, &b, LAG, threshold).is_ok() as usize;
    }
    Outcome::new(
        exact == TRIALS as usize && false_syncs == 0,
        format!("{exact}/{TRIALS} offsets recovered at SNR 0.1, {false_syncs} false syncs on {TRIALS} noise pairs"),
    )
}

fn c9_phase() -> Outcome {
    let mut cfg = table1();
    cfg.frames.count = 25;
    cfg.impairments.phase_drift_sigma_rad = 0.02;
    let drift = complete(run_pipeline(&cfg).expect("valid scenario"));
    cfg.impairments.phase_drift_sigma_rad = 0.0;
    let still = complete(run_pipeline(&cfg).expect("valid scenario"));
    let worst = drift.points[0]
        .qnus
        .iter()
        .zip(&still.points[0].qnus)
        .map(|(a, b)| (a.estimate.excess_noise_mean() - b.estimate.excess_noise_mean()).abs())
        .fold(0.0, f64::max);
    Outcome::new(
        worst <= 0.01,
        format!("largest excess-noise shift from 0.02 rad/block phase drift: {worst:.5} SNU"),
    )
}

fn c10_snu() -> Outcome {
    const PERIOD: f64 = 300.0;
    let mut cfg = table1();
    cfg.impairments.lo_drift_amplitude = 0.05;
    cfg.impairments.lo_drift_period_slots = PERIOD;

    // Normalized calibration frames.
    let sim = NetworkSimulator::new(&cfg);
    let v_el = cfg.qnu_detector.electronic_noise_snu;
    // Frames whose window is cut short by the start or end of the run are
    // reported separately; signal frames are always placed inside full windows.
    let mut worst_norm: f64 = 0.0;
    let mut worst_edge: f64 = 0.0;
    let mut checked = 0;
    for q in 0..cfg.fanout {
        let readings: Vec<(u64, f64)> = sim
            .plan()
            .calibration
            .iter()
            .map(|&s| {
                let raw = sim.calibration_raw(s, q);
                let n = raw.len() as f64;
                let mean = raw.iter().sum::<Complex64>() / n;
                let var = raw.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (2.0 * n);
                (s, var)
            })
            .collect();
        for &(slot, var) in &readings {
            let Ok(rec) = realtime_snu_from_variances(
                &readings,
                slot,
                cfg.dsp.snu_before,
                cfg.dsp.snu_after,
                v_el,
                SnuMode::Included,
            ) else {
                continue;
            };
            let dev = (var / (rec.snu_value * (1.0 + v_el)) - 1.0).abs();
            if rec.n_before == cfg.dsp.snu_before && rec.n_after == cfg.dsp.snu_after {
                worst_norm = worst_norm.max(dev);
                checked += 1;
            } else {
                worst_edge = worst_edge.max(dev);
            }
        }
    }
    let swing = sim.plan().calibration.iter().map(|&s| sim.lo_gain(s));
    let (lo, hi) = swing.fold((f64::INFINITY, 0.0f64), |(a, b), g| (a.min(g), b.max(g)));

    // Transmittance bias against a static LO with the same seed.
    cfg.frames.samples = 100_000;
    let drifting = complete(run_pipeline(&cfg).expect("valid scenario"));
    cfg.impairments.lo_drift_amplitude = 0.0;
    let fixed = complete(run_pipeline(&cfg).expect("valid scenario"));
    let bias = drifting
        .averages
        .iter()
        .zip(&fixed.averages)
        .map(|(a, b)| (a.transmittance_db_hat - b.transmittance_db_hat).abs())
        .fold(0.0, f64::max);
    Outcome::new(
        worst_norm <= 0.01 && bias <= 0.05 && checked > 0,
        format!(
            "LO gain {lo:.3}..{hi:.3}: worst normalized calibration deviation {worst_norm:.4} over {checked} full-window frames ({worst_edge:.4} at the run edges), T bias {bias:.4} dB"
        ),
    )
}

fn c11_psp() -> Outcome {
    let src = |vs: f64, tm: f64, tv: f64| SourceSpec {
        variance_snu: vs,
        monitor_split: tm,
        voa_transmittance: tv,
    };
    let cases = [
        (src(21.0, 0.99, 1.0), DetectorSpec::IDEAL),
        (src(21.0, 0.9, 1.0), DetectorSpec::IDEAL),
        (src(21.0, 0.5, 0.5), DetectorSpec::IDEAL),
        (src(101.0, 0.99, 0.2), DetectorSpec::IDEAL),
        (src(1e3, 0.95, 0.01), TABLE1_DET),
        (src(1e4, 0.99, 0.05), TABLE1_DET),
        (src(1e5, 0.99, 0.004280215733179567), TABLE1_DET),
        (src(1e5, 0.9, 0.001), TABLE1_DET),
        (src(50.0, 0.7, 0.3), TABLE1_DET),
        (src(5.0, 0.99, 1.0), TABLE1_DET),
    ];
    let mut worst: f64 = 0.0;
    for (k, (s, det)) in cases.iter().enumerate() {
        let out = psp_prepare(s, det, 10_000_000, 0, 4e9, derive_seed(11, &[k as u64])).expect("psp");
        let (a, m) = (PspStats::analytic(s, det), out.sample_stats);
        worst = worst
            .max(((m.va - a.va()) / m.va_se).abs())
            .max(((m.eps - a.eps()) / m.eps_se).abs());
    }
    let reference = PspStats::analytic(&cases[0].0, &cases[0].1);
    let ref_ok = (reference.va() - 0.1816).abs() < 1e-4 && (reference.eps() - 0.0184).abs() < 1e-4;
    Outcome::new(
        worst <= 3.0 && ref_ok,
        format!(
            "10 parameter sets at n = 1e7: worst deviation {worst:.2} SE; V_s = 21 gives V_A {:.4}, eps {:.4}",
            reference.va(),
            reference.eps()
        ),
    )
}

fn ordering(rates: &[f64]) -> String {
    let mut idx: Vec<usize> = (0..rates.len()).collect();
    idx.sort_by(|&a, &b| rates[b].total_cmp(&rates[a]));
    idx.iter().map(|i| format!("Bob{}", i + 1)).collect::<Vec<_>>().join(" > ")
}

fn c12_ordering(model: &KeyRateReport, mc: &KeyRateReport) -> Outcome {
    let k: Vec<f64> = model.averages.iter().map(|a| a.key_rate_eq1_bps).collect();
    let pass = k[0] >= k[2] && k[2] >= k[1] && k[1] >= k[3];
    let sampled: Vec<f64> = mc.averages.iter().map(|a| a.key_rate_eq1_bps).collect();
    Outcome::new(
        pass,
        format!(
            "expected K: {} ({:.3e} {:.3e} {:.3e} {:.3e} bps); this Monte-Carlo run: {}",
            ordering(&k),
            k[0],
            k[1],
            k[2],
            k[3],
            ordering(&sampled)
        ),
    )
}

fn report(id: usize, name: &str, o: &Outcome, clock: Instant) -> bool {
    println!(
        "{} criterion {id:>2} {name}: {} [{:.0} s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        clock.elapsed().as_secs_f64()
    );
    o.pass
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut all = true;
    let mut first = None;

    let t = Instant::now();
    all &= report(1, "channel estimation", &c1_estimation(&mut first), t);
    let t = Instant::now();
    all &= report(2, "SNR", &c2_snr(), t);
    let t = Instant::now();
    all &= report(3, "mutual information", &c3_mutual_info(&first.expect("first repetition")), t);

    let t = Instant::now();
    let mc = complete(run_pipeline(&table1()).expect("valid scenario"));
    let model = analytic_report(&table1()).expect("valid scenario");
    all &= report(4, "inter-QNU information", &c4_inter_qnu(&mc, &model), t);
    let t = Instant::now();
    all &= report(5, "Holevo bound", &c5_holevo(&model), t);
    let t = Instant::now();
    all &= report(6, "key rate", &c6_key_rate(), t);
    let t = Instant::now();
    all &= report(7, "Gaussian algebra", &c7_gaussian(), t);
    let t = Instant::now();
    all &= report(8, "synchronization", &c8_sync(), t);
    let t = Instant::now();
    all &= report(9, "phase compensation", &c9_phase(), t);
    let t = Instant::now();
    all &= report(10, "real-time SNU", &c10_snu(), t);
    let t = Instant::now();
    all &= report(11, "PSP statistics", &c11_psp(), t);
    let t = Instant::now();
    all &= report(12, "key-rate ordering", &c12_ordering(&model, &mc), t);

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
