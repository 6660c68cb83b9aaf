use std::path::Path;
use std::process::{Command, Output};

use cavspin_cli::report::Report;
use cavspin_core::fitting::g2_dip;
use serde_json::Value;

fn cavspin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cavspin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Report {
    let out = cavspin(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Report::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = cavspin(args);
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn read_report(dir: &Path) -> Report {
    Report::from_json(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn read_matrix(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn purcell_from_preset_and_from_flags() {
    let r = ok(&["purcell", "--preset", "paper-red-star"]);
    let fp = f(&r.outputs["purcell_factor"]);
    let oracle = 5.10 / (0.80 * 0.57) * (1.0 / 1.12 - 1.0 / 5.725);
    assert!((fp - oracle).abs() < 1e-12);
    assert!((f(&r.outputs["purcell_max"]) - 216.6).abs() < 1.0);
    let g = f(&r.outputs["coupling_g_GHz"]);
    assert!((2.6..3.0).contains(&g), "{g}");

    let r = ok(&[
        "purcell",
        "--tau-on-ns",
        "1.12",
        "--tau-off-ns",
        "5.89",
        "--tau-bulk-ns",
        "5.10",
    ]);
    let fp = f(&r.outputs["purcell_factor"]);
    assert!((7.9..8.3).contains(&fp), "{fp}");
    assert!((f(&r.outputs["beta"]) - fp / (fp + 1.0)).abs() < 1e-12);
    assert!(r.outputs.get("purcell_max").is_none());
}

#[test]
fn purcell_detuning_correction() {
    let lc = 619.0;
    let le = lc * (1.0 + 5e-4);
    let r = ok(&[
        "purcell",
        "--tau-on-ns",
        "1.12",
        "--tau-off-ns",
        "5.89",
        "--tau-bulk-ns",
        "5.10",
        "--quality-factor",
        "1000",
        "--emitter-nm",
        &le.to_string(),
        "--cavity-nm",
        &lc.to_string(),
    ]);
    let ratio = f(&r.outputs["purcell_detuning_corrected"]) / f(&r.outputs["purcell_factor"]);
    assert!((ratio - 2.0).abs() < 1e-9, "{ratio}");
}

#[test]
fn fit_g2_dip_on_synthetic_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (g0, tau0, sigma) = (0.14, 2.74, 0.55 / 2.3548200450309493);
    let mut csv = String::from("delay_ns,g2,sigma\n");
    for i in 0..401 {
        let t = -40.0 + 0.2 * i as f64;
        // Deterministic +-1 sigma pattern stands in for noise.
        let s = 0.02;
        let wiggle = if (i * 7919) % 3 == 0 {
            s
        } else if (i * 7919) % 3 == 1 {
            -s
        } else {
            0.0
        };
        csv.push_str(&format!("{t},{},{s}\n", g2_dip(t, g0, tau0, sigma) + wiggle));
    }
    let path = dir.path().join("g2.csv");
    std::fs::write(&path, csv).unwrap();
    let out = dir.path().join("out");
    let r = ok(&[
        "fit",
        "--model",
        "g2_dip",
        "--trace",
        path.to_str().unwrap(),
        "--jitter-fwhm-ns",
        "0.55",
        "--signal-cps",
        "4380",
        "--background-cps",
        "290",
        "--out",
        out.to_str().unwrap(),
    ]);
    let p = &r.outputs["parameters"];
    let (g, dg) = (f(&p["g0"]["value"]), f(&p["g0"]["error"]));
    let (t, dt) = (f(&p["tau0_ns"]["value"]), f(&p["tau0_ns"]["error"]));
    assert!((g - g0).abs() < 3.0 * dg + 1e-3, "g0 {g} +- {dg}");
    assert!((t - tau0).abs() < 3.0 * dt + 1e-3, "tau0 {t} +- {dt}");
    assert_eq!(f(&p["sigma_jitter_ns"]["error"]), 0.0);
    assert!(r.outputs["converged"].as_bool().unwrap());
    let corrected = f(&r.outputs["g2_0_background_corrected"]);
    let rho: f64 = 4380.0 / 4670.0;
    assert!((corrected - (g - (1.0 - rho * rho)) / (rho * rho)).abs() < 1e-12);
    assert_eq!(read_report(&out), r);
}

#[test]
fn fit_fano_holds_eta_and_free_eta_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let model = cavspin_core::fitting::ModelKind::FanoLorentz;
    let truth = [1000.0, -600.0, 0.4, 3.0, 613.9, 0.27];
    let mut csv = String::from("wavelength_nm,counts\n");
    for i in 0..300 {
        let x = 613.0 + 1.8 * i as f64 / 299.0;
        csv.push_str(&format!("{x},{}\n", model.eval(x, &truth)));
    }
    let path = dir.path().join("fano.csv");
    std::fs::write(&path, csv).unwrap();
    let p = path.to_str().unwrap();
    let r = ok(&["fit", "--model", "fano_lorentz", "--trace", p, "--fix", "eta=0.4"]);
    let q = f(&r.outputs["derived"]["q_factor"]["value"]);
    assert!((q / (613.9 / 0.27) - 1.0).abs() < 1e-3, "{q}");
    assert!(r.warnings.is_empty(), "{:?}", r.warnings);

    let r = ok(&["fit", "--model", "fano_lorentz", "--trace", p]);
    assert!(r.warnings.iter().any(|w| w.contains("eta held")));

    let (c, err) = code(&["fit", "--model", "fano_lorentz", "--trace", p, "--bound", "eta=0:1"]);
    assert_eq!(c, 3, "{err}");
}

#[test]
fn fit_multipeak_reports_dephasing() {
    let dir = tempfile::tempdir().unwrap();
    let model = cavspin_core::fitting::ModelKind::LorentzianMulti { peaks: 2 };
    // Centers and widths in THz; 204 MHz and 60 MHz lines.
    let truth = [10.0, 500.0, 484.1200, 204e-6, 300.0, 484.1215, 60e-6];
    let mut csv = String::from("freq_THz,counts\n");
    for i in 0..600 {
        let x = 484.1190 + 0.0035 * i as f64 / 599.0;
        csv.push_str(&format!("{x},{}\n", model.eval(x, &truth)));
    }
    let path = dir.path().join("ple.csv");
    std::fs::write(&path, csv).unwrap();
    let r = ok(&[
        "fit",
        "--model",
        "lorentzian_multi",
        "--peaks",
        "2",
        "--trace",
        path.to_str().unwrap(),
        "--tau-off-ns",
        "5.89",
    ]);
    let d = r.outputs["dephasing"].as_array().unwrap();
    assert_eq!(d.len(), 2);
    let lw = f(&d[0]["linewidth_MHz"]);
    assert!((lw - 204.0).abs() < 0.5, "{lw}");
    let gs = f(&d[0]["gamma_star_MHz"]);
    assert!((174.0..180.0).contains(&gs), "{gs}");
}

#[test]
fn sweep_fig5_preset_matches_anchors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig5");
    let r = ok(&["sweep", "--preset", "paper-fig5", "--out", out.to_str().unwrap()]);
    for name in ["fidelity.csv", "psucc.csv", "report.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let m = read_matrix(&out.join("fidelity.csv"));
    assert_eq!(m.len(), 61);
    assert!(m.iter().all(|row| row.len() == 61));
    let first_ratio: f64 = m[0][1].parse().unwrap();
    let last_ratio: f64 = m[0][60].parse().unwrap();
    let first_gamma: f64 = m[1][0].parse().unwrap();
    let last_gamma: f64 = m[60][0].parse().unwrap();
    assert!((first_ratio - 1e-3).abs() < 1e-15 && last_ratio == 1.0);
    assert!((first_gamma - 1e-2).abs() < 1e-15 && last_gamma == 1e3);
    for row in &m[1..] {
        for v in &row[1..] {
            let v: f64 = v.parse().unwrap();
            assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }

    let markers = r.outputs["markers"].as_array().unwrap();
    let get = |n: &str| markers.iter().find(|m| m["name"] == n).unwrap();
    let blue = get("blue-star");
    let red = get("red-star");
    assert!((f(&blue["fidelity"]) - 0.5).abs() <= 0.05);
    assert!(f(&red["fidelity"]) >= 0.95);
    let p = f(&red["success_probability"]);
    assert!((3e-5..=3e-4).contains(&p), "{p}");
    assert_eq!(read_report(&out), r);
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut sections = Vec::new();
    let mut grids = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(threads);
        let o = Command::new(env!("CARGO_BIN_EXE_cavspin"))
            .args([
                "sweep",
                "--preset",
                "paper-fig5",
                "--ratio-points",
                "9",
                "--gamma-points",
                "7",
                "--out",
            ])
            .arg(&out)
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
        sections.push(read_report(&out).deterministic_section());
        grids.push((
            std::fs::read(out.join("fidelity.csv")).unwrap(),
            std::fs::read(out.join("psucc.csv")).unwrap(),
        ));
    }
    assert_eq!(sections[0], sections[1]);
    assert_eq!(grids[0], grids[1]);
}

#[test]
fn report_table1_reproduces_columns() {
    let dir = tempfile::tempdir().unwrap();
    let r = ok(&["report-table1", "--out", dir.path().to_str().unwrap()]);
    let rows = r.outputs["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let channels: Vec<u64> = rows.iter().map(|r| r["channel"].as_u64().unwrap()).collect();
    assert_eq!(channels, vec![2, 4, 5, 6]);
    for row in rows {
        assert!(
            (f(&row["purcell_factor"]) - f(&row["purcell_reported"])).abs() < 0.01,
            "{row}"
        );
        assert!(
            (f(&row["beta_from_reported_purcell"]) - f(&row["beta_reported"])).abs() <= 0.01,
            "{row}"
        );
        assert!(
            (f(&row["lifetime_ratio"]) - f(&row["lifetime_ratio_reported"])).abs() < 0.01,
            "{row}"
        );
    }
    assert!(r.warnings.is_empty());
    let table = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn budget_reports_stages_in_db_and_fraction() {
    let r = ok(&["budget", "--preset", "paper-blue-star"]);
    let sub = r.outputs["subtotals"].as_array().unwrap();
    let group = |g: &str| f(&sub.iter().find(|s| s["group"] == g).unwrap()["efficiency"]);
    let oracle_i = 5e-3 * 0.91 * 0.5 * 0.53 * 0.99 * 0.3;
    assert!((group("i") / oracle_i - 1.0).abs() < 1e-12);
    assert!((group("ii") - 0.61 * 0.89 * 0.89).abs() < 1e-12);
    let overall = f(&r.outputs["overall_detection"]);
    assert!((overall / 9.6e-5 - 1.0).abs() <= 0.2, "{overall}");
    for s in r.outputs["stages"].as_array().unwrap() {
        let e = f(&s["efficiency"]);
        assert!((f(&s["loss_dB"]) + 10.0 * e.log10()).abs() < 1e-12);
    }
    let r = ok(&["budget", "--preset", "paper-blue-star", "--detector", "0.99"]);
    assert_eq!(f(&r.outputs["detector"]), 0.99);
}

#[test]
fn reflection_writes_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let r = ok(&[
        "reflection",
        "--preset",
        "paper-red-star",
        "--points",
        "101",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let re = f(&r.outputs["spin_down"]["re"]);
    assert!(re > 0.0 && f(&r.outputs["spin_down"]["abs"]) <= 1.0 + 1e-9);
    // Bare cavity on resonance: r = 1 - 2 kwg/k.
    assert!((f(&r.outputs["spin_up"]["re"]) - (1.0 - 2.0 * 0.62)).abs() < 1e-9);
    let text = std::fs::read_to_string(dir.path().join("reflection.csv")).unwrap();
    assert_eq!(text.lines().count(), 102);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["purcell", "--no-such-flag"]).0, 64);
    assert_eq!(code(&["frobnicate"]).0, 64);
    assert_eq!(code(&["sweep", "--out", "/nonexistent-dir-never"]).0, 64);
    assert_eq!(code(&["budget", "--preset", "no-such-preset"]).0, 2);
    assert_eq!(code(&["fit", "--model", "nope", "--trace", "x.csv"]).0, 64);
    assert_eq!(code(&["fit", "--model", "g2_dip", "--trace", "/no/such/file.csv"]).0, 2);
    assert_eq!(
        code(&[
            "purcell",
            "--tau-on-ns",
            "6",
            "--tau-off-ns",
            "5",
            "--tau-bulk-ns",
            "5.1"
        ])
        .0,
        2
    );
    assert_eq!(code(&["--help"]).0, 0);
    assert_eq!(code(&["--version"]).0, 0);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "[cavity]\nresonance_THz = 484.13\nquality_factor = -1\ncoupling_ratio = 0.5\nmode_volume = 1\n",
    )
    .unwrap();
    let (c, err) = code(&[
        "purcell",
        "--config",
        cfg.to_str().unwrap(),
        "--tau-on-ns",
        "1",
        "--tau-off-ns",
        "5",
        "--tau-bulk-ns",
        "5",
    ]);
    assert_eq!(c, 2, "{err}");
    assert!(err.contains("quality factor"), "{err}");
}

#[test]
fn trace_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "t_ns,counts\n0,1\n1,5\n0.5,2\n2,1\n").unwrap();
    let p = path.to_str().unwrap();
    let (c, err) = code(&["fit", "--model", "lifetime_emg", "--trace", p]);
    assert_eq!(c, 2);
    assert!(err.contains("line 4"), "{err}");

    std::fs::write(&path, "t_ns,counts\n0,1\n1,five\n").unwrap();
    let (c, err) = code(&["fit", "--model", "lifetime_emg", "--trace", p]);
    assert_eq!(c, 2);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn custom_config_round_trips_through_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("dev.toml");
    std::fs::write(
        &cfg,
        r#"
name = "custom"
[cavity]
resonance_nm = 619.24
quality_factor = 3000
coupling_ratio = 0.5
mode_volume = 1.0
[emitter]
tau_on_ns = 1.5
tau_off_ns = 6.0
tau_bulk_ns = 5.1
quantum_efficiency = 0.8
debye_waller = 0.57
[[chain]]
name = "junction"
loss_dB = 3.0103
group = "pic"
"#,
    )
    .unwrap();
    let r = ok(&["budget", "--config", cfg.to_str().unwrap()]);
    assert!((f(&r.outputs["total"]) - 0.5).abs() < 1e-4);
    assert_eq!(r.inputs["device"]["name"], "custom");
    let back = Report::from_json(&r.to_json()).unwrap();
    assert_eq!(back, r);
}
