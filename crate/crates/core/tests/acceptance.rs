//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the report is always shown.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use cavspin_core::budget::{chain_efficiency, overall_detection, EfficiencyChain, EfficiencyStage};
use cavspin_core::cavity::{
    beta_factor, coupling_g_from_enhanced_rate, dipole_projection, purcell_from_lifetimes, purcell_max, reflection,
    reflection_with_linewidth, CavityParams, EmitterParams, Spin, SpinCavitySystem, SpinUpModel, PROJECTION_111_100,
};
use cavspin_core::fitting::{
    background_correct_g2, dephasing_from_linewidth, fit_curve_with, fit_ple_multipeak_with, initial_guess,
    normalize_g2, sigma_from_fwhm, AxisKind, Bounds, FitOptions, FitOutcome, ModelKind, SpectrumTrace,
    DEFAULT_JITTER_FWHM_NS,
};
use cavspin_core::protocol::{
    log_axis, success_probability, sweep_map, transfer_fidelity, DiffusionQuadrature, EfficiencyPair, ProtocolConfig,
};
use cavspin_core::units::{inverse_lifetime, q_to_kappa, AngularRate, Frequency, LinewidthFWHM};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn resonance() -> Frequency {
    Frequency::from_thz(484.13)
}

fn red_star() -> SpinCavitySystem {
    let nu = resonance();
    let cav = CavityParams::lossless_port(nu, 2280.0, 0.62, 0.8).unwrap();
    let em = EmitterParams {
        zpl: nu,
        tau_on_ns: 1.12,
        tau_off_ns: 5.725,
        tau_bulk_ns: 5.10,
        quantum_efficiency: 0.8,
        debye_waller: 0.57,
        gamma_star: LinewidthFWHM::from_mhz(27.0),
        zeeman_split: Frequency(0.0),
    };
    SpinCavitySystem::with_enhanced_coupling(cav, em, SpinUpModel::Uncoupled).unwrap()
}

fn blue_star() -> SpinCavitySystem {
    red_star()
        .with_ratio_and_dephasing(5e-3, LinewidthFWHM::from_mhz(176.0))
        .unwrap()
}

fn paper_efficiencies() -> EfficiencyPair {
    EfficiencyPair::new(1.9e-2, 3.4e-2).unwrap()
}

// 1
fn purcell_pipeline() -> Check {
    let f = purcell_from_lifetimes(5.10, 0.456, 1.12, 5.89).map_err(|e| e.to_string())?;
    // Oracle: direct arithmetic.
    let oracle = 5.10 / 0.456 * (1.0 / 1.12 - 1.0 / 5.89);
    if (f - oracle).abs() > 1e-12 {
        return Err(format!("F_P {f} disagrees with direct evaluation {oracle}"));
    }
    let mut worst: f64 = 0.0;
    for (fp, beta) in [(4.13, 0.81), (10.40, 0.91), (5.32, 0.84), (8.07, 0.89)] {
        let b = beta_factor(fp).map_err(|e| e.to_string())?;
        worst = worst.max((b - beta).abs());
    }
    ensure(
        within(f, 7.9, 8.3) && worst <= 0.01,
        format!("F_P = {f:.3} (want [7.9, 8.3]); max |beta - table| = {worst:.4} (want <= 0.01)"),
    )
}

// 2
fn purcell_max_and_projection() -> Check {
    let fmax = purcell_max(2280.0, 0.8).map_err(|e| e.to_string())?;
    let proj = dipole_projection(fmax, PROJECTION_111_100).map_err(|e| e.to_string())?;
    ensure(
        within(fmax, 215.0, 218.0) && (proj - 124.9).abs() <= 0.5,
        format!("F_max = {fmax:.2} (want [215, 218]); projected = {proj:.2} (want 124.9 +/- 0.5)"),
    )
}

// 3
fn g2_correction() -> Check {
    let c = background_correct_g2(0.25, 4380.0, 290.0).map_err(|e| e.to_string())?;
    ensure(
        within(c.value, 0.13, 0.16) && !c.clamped,
        format!("g2(0) corrected = {:.4} (want [0.13, 0.16])", c.value),
    )
}

// 4
fn dephasing_extraction() -> Check {
    let a = dephasing_from_linewidth(LinewidthFWHM::from_mhz(204.0), 5.89).map_err(|e| e.to_string())?;
    let b = dephasing_from_linewidth(LinewidthFWHM::from_mhz(55.2), 5.725).map_err(|e| e.to_string())?;
    let (a, b) = (a.value.mhz(), b.value.mhz());
    ensure(
        within(a, 174.0, 180.0) && within(b, 26.0, 29.0),
        format!("gamma* = {a:.2} MHz (want [174, 180]), {b:.2} MHz (want [26, 29])"),
    )
}

// 5
fn coupling_strength() -> Check {
    let kappa = q_to_kappa(2280.0, resonance()).map_err(|e| e.to_string())?;
    let rate = inverse_lifetime(1.12).map_err(|e| e.to_string())?;
    let g = coupling_g_from_enhanced_rate(rate, kappa).map_err(|e| e.to_string())?;
    let g_ghz = g.over_two_pi().ghz();
    // Oracle: g/2π = √(κ/τ_on)/(4π) with κ = 2πν/Q.
    let oracle = ((2.0 * PI * 484.13e12 / 2280.0) / 1.12e-9).sqrt() / (4.0 * PI) / 1e9;
    if (g_ghz - oracle).abs() > 1e-9 * oracle {
        return Err(format!("g/2pi = {g_ghz} GHz disagrees with direct evaluation {oracle}"));
    }
    ensure(
        within(g_ghz, 2.6, 3.0),
        format!("g/2pi = {g_ghz:.3} GHz (want [2.6, 3.0])"),
    )
}

// 6
fn fig5_anchors() -> Check {
    let cfg = ProtocolConfig::default();
    let eff = paper_efficiencies();
    let f_blue = transfer_fidelity(&blue_star(), &cfg).map_err(|e| e.to_string())?;
    let f_red = transfer_fidelity(&red_star(), &cfg).map_err(|e| e.to_string())?;
    let p_red = success_probability(&red_star(), &cfg, eff).map_err(|e| e.to_string())?;
    let p_blue = success_probability(&blue_star(), &cfg, eff).map_err(|e| e.to_string())?;

    let ratios = log_axis(1e-3, 1.0, 60).unwrap();
    let gammas = log_axis(1e-2, 1e3, 60).unwrap();
    let t0 = Instant::now();
    let grid = sweep_map(&red_star(), &cfg, eff, &ratios, &gammas).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let finite = grid.fidelity.iter().flatten().all(|v| v.is_finite());

    ensure(
        (f_blue - 0.5).abs() <= 0.05 && f_red >= 0.95 && within(p_red, 3e-5, 3e-4) && secs < 60.0 && finite,
        format!(
            "F(blue) = {f_blue:.4} (want 0.50 +/- 0.05); F(red) = {f_red:.4} (want >= 0.95); \
             p(red) = {p_red:.3e} (want [3e-5, 3e-4]); p(blue) = {p_blue:.3e} (recorded); \
             60x60 sweep {secs:.2} s (want < 60)"
        ),
    )
}

// 7
fn critical_coupling() -> Check {
    let cfg = ProtocolConfig::default();
    let base = red_star();
    let n = 400;
    let mut crossing = None;
    let mut prev = None;
    for i in 0..=n {
        let ratio = 0.01 + 0.99 * i as f64 / n as f64;
        let sys = base
            .with_ratio_and_dephasing(ratio, LinewidthFWHM::from_mhz(0.1))
            .map_err(|e| e.to_string())?;
        let f = transfer_fidelity(&sys, &cfg).map_err(|e| e.to_string())?;
        if let Some((r0, f0)) = prev {
            if f0 < 0.9 && f >= 0.9 {
                crossing = Some(r0 + (0.9 - f0) / (f - f0) * (ratio - r0));
                break;
            }
        }
        prev = Some((ratio, f));
    }
    match crossing {
        Some(r) => ensure(
            within(r, 0.4, 0.75),
            format!("F crosses 0.9 at kappa_wg/kappa = {r:.4} (want [0.4, 0.75])"),
        ),
        None => Err("F never crosses 0.9 on (0.01, 1]".into()),
    }
}

fn paper_chain(oxide: f64, edge: f64) -> EfficiencyChain {
    EfficiencyChain::new(vec![
        EfficiencyStage::new("waveguide-cavity coupling", 5e-3, "i")
            .unwrap()
            .device_coupling(),
        EfficiencyStage::new("diamond to SiN", 0.91, "i").unwrap(),
        EfficiencyStage::new("directional coupler", 0.5, "i").unwrap(),
        EfficiencyStage::new("oxide junction", oxide, "i").unwrap(),
        EfficiencyStage::new("PIC propagation", 0.99, "i").unwrap(),
        EfficiencyStage::new("edge coupling", edge, "i").unwrap(),
        EfficiencyStage::new("cryostat fiber", 0.61, "ii").unwrap(),
        EfficiencyStage::new("fiber connection", 0.89, "ii").unwrap().times(2),
        EfficiencyStage::new("free space", 0.96, "iii").unwrap(),
    ])
    .unwrap()
}

// 8
fn budget() -> Check {
    let chain = paper_chain(0.53, 0.3);
    let s = chain_efficiency(&chain).map_err(|e| e.to_string())?;
    let eta_i = s.subtotal("i").unwrap();
    let eta_ii = s.subtotal("ii").unwrap();
    let overall = overall_detection(&chain, 0.65).map_err(|e| e.to_string())?;

    let oxide_05db = 10f64.powf(-0.05);
    let literal = chain_efficiency(&paper_chain(oxide_05db, 0.3).without_device_coupling())
        .map_err(|e| e.to_string())?
        .total
        * 0.99;
    // Lensed fibers: edge coupling taken as ideal.
    let improved =
        overall_detection(&paper_chain(oxide_05db, 1.0).without_device_coupling(), 0.99).map_err(|e| e.to_string())?;

    ensure(
        (eta_i / 3.2e-4 - 1.0).abs() <= 0.15
            && (eta_ii - 0.48).abs() <= 0.01
            && (overall / 9.6e-5 - 1.0).abs() <= 0.20
            && (improved / 0.19 - 1.0).abs() <= 0.25,
        format!(
            "eta_i = {eta_i:.3e} (stage product; quoted 3.2e-4, within 15%); eta_ii = {eta_ii:.4}; \
             overall = {overall:.3e} (want 9.6e-5 +/- 20%); improved = {improved:.3} with ideal edge coupling \
             (want 0.19 +/- 25%; {literal:.4} if edge coupling stays 0.3)"
        ),
    )
}

// 9: Monte Carlo fit round trips.

struct McResult {
    name: &'static str,
    hits: usize,
    trials: usize,
    failures: usize,
}

fn covered(out: &FitOutcome, truth: &[f64]) -> bool {
    out.params
        .values()
        .iter()
        .zip(truth)
        .zip(&out.errors)
        .all(|((p, t), e)| *e == 0.0 || (p - t).abs() <= 3.0 * e)
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn poisson_counts(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    if mean <= 0.0 {
        0.0
    } else {
        Poisson::new(mean).unwrap().sample(rng)
    }
}

fn mc_fano(trials: usize) -> McResult {
    let model = ModelKind::FanoLorentz;
    // Cavity resonance with Q = 634 at 618.45 nm, dip in reflection.
    let width = 618.45 / 634.0;
    let truth = [1.0, -0.6, 0.6, 2.5, 618.45, width];
    let x = grid(618.45 - 4.0 * width, 618.45 + 4.0 * width, 400);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut hits = 0;
    let mut failures = 0;
    for seed in 0..trials as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| model.eval(v, &truth) + noise.sample(&mut rng))
            .collect();
        let trace = SpectrumTrace::new(AxisKind::WavelengthNm, x.clone(), y, Some(vec![0.01; x.len()])).unwrap();
        let mut init = initial_guess(model, &trace).unwrap();
        init.set("eta", truth[2]).unwrap();
        let bounds = Bounds::new().fix("eta", truth[2]);
        match fit_curve_with(model, &trace, &init, Some(&bounds), FitOptions::default()) {
            Ok(out) if out.converged && covered(&out, &truth) => hits += 1,
            Ok(_) => {}
            Err(_) => failures += 1,
        }
    }
    McResult {
        name: "fano_lorentz",
        hits,
        trials,
        failures,
    }
}

fn mc_multipeak(trials: usize) -> McResult {
    let model = ModelKind::LorentzianMulti { peaks: 3 };
    let truth = [
        8.0, 300.0, 484.0904, 55.2e-6, 260.0, 484.0906, 59.0e-6, 120.0, 484.0912, 173.5e-6,
    ];
    let x = grid(484.0900, 484.0917, 400);
    let opts = FitOptions {
        poisson_reweight: 2,
        ..FitOptions::default()
    };
    let mut hits = 0;
    let mut failures = 0;
    for seed in 0..trials as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| poisson_counts(&mut rng, model.eval(v, &truth)))
            .collect();
        let trace = SpectrumTrace::new(AxisKind::FrequencyThz, x.clone(), y, None).unwrap();
        let init = initial_guess(model, &trace).unwrap();
        match fit_ple_multipeak_with(&trace, 3, &init, None, opts) {
            Ok(out) if out.converged && covered(&out, &truth) => hits += 1,
            Ok(_) => {}
            Err(_) => failures += 1,
        }
    }
    McResult {
        name: "lorentzian_multi",
        hits,
        trials,
        failures,
    }
}

/// Returns the coverage result and the worst |tau - truth|.
fn mc_emg(trials: usize, tau: f64, window: f64) -> (McResult, f64) {
    let model = ModelKind::LifetimeEmg;
    let sigma = sigma_from_fwhm(DEFAULT_JITTER_FWHM_NS);
    let t0 = 2.0;
    // Amplitude chosen so the histogram peaks at 1e4 counts.
    let xs = grid(0.0, window, 1000);
    let unit_peak = xs
        .iter()
        .map(|&t| model.eval(t, &[t0, 1.0, tau, sigma, 0.0]))
        .fold(0.0, f64::max);
    let truth = [t0, 1e4 / unit_peak, tau, sigma, 3.0];
    let opts = FitOptions {
        poisson_reweight: 2,
        ..FitOptions::default()
    };
    let mut hits = 0;
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..trials as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed + (tau * 1000.0) as u64);
        let y: Vec<f64> = xs
            .iter()
            .map(|&t| poisson_counts(&mut rng, model.eval(t, &truth)))
            .collect();
        let trace = SpectrumTrace::new(AxisKind::TimeNs, xs.clone(), y, None).unwrap();
        let init = initial_guess(model, &trace).unwrap();
        match fit_curve_with(model, &trace, &init, None, opts) {
            Ok(out) => {
                worst = worst.max((out.param("tau").unwrap() - tau).abs());
                if out.converged && covered(&out, &truth) {
                    hits += 1;
                }
            }
            Err(_) => {
                failures += 1;
                worst = f64::INFINITY;
            }
        }
    }
    (
        McResult {
            name: "lifetime_emg",
            hits,
            trials,
            failures,
        },
        worst,
    )
}

fn mc_g2(trials: usize) -> McResult {
    let model = ModelKind::G2Dip;
    let jitter = sigma_from_fwhm(DEFAULT_JITTER_FWHM_NS);
    let truth = [0.25, 2.74, jitter];
    let x = grid(-40.0, 40.0, 801);
    let level = 1000.0;
    let mut hits = 0;
    let mut failures = 0;
    for seed in 0..trials as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let y: Vec<f64> = x
            .iter()
            .map(|&t| poisson_counts(&mut rng, level * model.eval(t, &truth)))
            .collect();
        let raw = SpectrumTrace::new(AxisKind::TimeNs, x.clone(), y, None).unwrap();
        let trace = normalize_g2(&raw, 2.0).unwrap();
        let mut init = initial_guess(model, &trace).unwrap();
        init.set("sigma_jitter", jitter).unwrap();
        let bounds = Bounds::new().fix("sigma_jitter", jitter);
        match fit_curve_with(model, &trace, &init, Some(&bounds), FitOptions::default()) {
            Ok(out) if out.converged && covered(&out, &truth) => hits += 1,
            Ok(_) => {}
            Err(_) => failures += 1,
        }
    }
    McResult {
        name: "g2_dip",
        hits,
        trials,
        failures,
    }
}

fn fit_round_trips() -> Check {
    let t0 = Instant::now();
    let trials = 100;
    let (emg, worst_tau) = mc_emg(trials, 1.12, 20.0);
    let results = [mc_fano(trials), mc_multipeak(trials), emg, mc_g2(trials)];
    let (slow, worst_slow) = mc_emg(20, 5.89, 60.0);
    let secs = t0.elapsed().as_secs_f64();

    let mut ok = secs < 30.0 && worst_tau <= 0.04 && worst_slow <= 0.02 * 5.89;
    let mut parts = Vec::new();
    for r in &results {
        ok &= r.hits * 100 >= 95 * r.trials;
        parts.push(format!(
            "{} {}/{} within 3 sigma ({} errors)",
            r.name, r.hits, r.trials, r.failures
        ));
    }
    parts.push(format!("max |tau - 1.12| = {worst_tau:.4} ns (want <= 0.04)"));
    parts.push(format!(
        "tau = 5.89 ns: {}/{} covered, max deviation {:.2}% (want <= 2%)",
        slow.hits,
        slow.trials,
        100.0 * worst_slow / 5.89
    ));
    parts.push(format!("{secs:.2} s (want < 30)"));
    ensure(ok, parts.join("; "))
}

// 10
fn reflection_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let nu = Frequency::from_thz(rng.random_range(400.0..500.0));
        let q = 10f64.powf(rng.random_range(1.0..6.0));
        let ratio = rng.random_range(0.0..=1.0);
        let scatter = rng.random_range(0.0..=1.0 - ratio);
        let cav = CavityParams::new(nu, q, ratio, scatter, 0.8).unwrap();
        let tau_on = rng.random_range(0.1..10.0);
        let em = EmitterParams {
            zpl: Frequency(nu.0 + rng.random_range(-50e9..50e9)),
            tau_on_ns: tau_on,
            tau_off_ns: tau_on * rng.random_range(1.0..10.0),
            tau_bulk_ns: 5.1,
            quantum_efficiency: 0.8,
            debye_waller: 0.57,
            gamma_star: LinewidthFWHM::from_mhz(rng.random_range(0.0..1000.0)),
            zeeman_split: Frequency(rng.random_range(-10e9..10e9)),
        };
        let model = if rng.random_bool(0.5) {
            SpinUpModel::Uncoupled
        } else {
            SpinUpModel::ZeemanDetuned
        };
        let g = AngularRate(2.0 * PI * 10f64.powf(rng.random_range(6.0..11.0)));
        let sys = SpinCavitySystem::new(cav, em, g, model).unwrap();
        let probe = Frequency(nu.0 + rng.random_range(-200e9..200e9));
        let offset = Frequency(rng.random_range(-5e9..5e9));
        let lw = LinewidthFWHM(rng.random_range(1e5..1e10));
        for spin in [Spin::Down, Spin::Up] {
            worst = worst.max(reflection_with_linewidth(probe, &sys, spin, offset, lw).norm());
        }
    }

    // g = 0 versus an emitter detuned far outside the cavity line.
    let red = red_star();
    let bare = SpinCavitySystem::new(red.cavity, red.emitter, AngularRate(0.0), SpinUpModel::Uncoupled).unwrap();
    let mut far_em = red.emitter;
    far_em.zpl = Frequency(red.emitter.zpl.0 + 1e16);
    let far = SpinCavitySystem::new(red.cavity, far_em, red.g, SpinUpModel::Uncoupled).unwrap();
    let mut equiv: f64 = 0.0;
    for k in -20..=20 {
        let probe = Frequency(resonance().0 + k as f64 * 20e9);
        let a = reflection(probe, &bare, Spin::Down, Frequency(0.0));
        let b = reflection(probe, &far, Spin::Down, Frequency(0.0));
        // Oracle: bare cavity 1 − κ_wg/(i(ω_c−ω) + κ/2).
        let kappa = 2.0 * PI * resonance().0 / 2280.0;
        let oracle =
            Complex64::new(1.0, 0.0) - 0.62 * kappa / Complex64::new(kappa / 2.0, 2.0 * PI * (resonance().0 - probe.0));
        equiv = equiv.max((a - b).norm()).max((a - oracle).norm());
    }

    let mut doubling: f64 = 0.0;
    for sys in [red_star(), blue_star()] {
        let base = ProtocolConfig::default();
        let fine = ProtocolConfig {
            quadrature: DiffusionQuadrature {
                n_points: 2 * base.quadrature.n_points - 1,
                ..base.quadrature
            },
            ..base
        };
        let a = transfer_fidelity(&sys, &base).map_err(|e| e.to_string())?;
        let b = transfer_fidelity(&sys, &fine).map_err(|e| e.to_string())?;
        doubling = doubling.max((a - b).abs());
    }

    ensure(
        worst <= 1.0 + 1e-9 && equiv <= 1e-6 && doubling < 1e-4,
        format!("max |r| = {worst:.12} over 2e4 samples; g=0 vs far-detuned {equiv:.2e}; quadrature doubling {doubling:.2e}"),
    )
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 Purcell pipeline", purcell_pipeline),
        ("2 Purcell maximum and dipole projection", purcell_max_and_projection),
        ("3 g2 background correction", g2_correction),
        ("4 dephasing extraction", dephasing_extraction),
        ("5 coupling strength", coupling_strength),
        ("6 state-transfer map anchors", fig5_anchors),
        ("7 critical coupling", critical_coupling),
        ("8 efficiency budget", budget),
        ("9 fit round trips", fit_round_trips),
        ("10 reflection invariants", reflection_invariants),
    ];
    // Keep panic messages out of the report; they surface as FAIL lines.
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run) in criteria {
        let t0 = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        match result {
            Ok(msg) => println!("PASS  criterion {name}: {msg} [{ms:.0} ms]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  criterion {name}: {msg} [{ms:.0} ms]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
