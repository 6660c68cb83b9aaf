//! Subcommands and their argument definitions.

use std::path::{Path, PathBuf};

use cavspin_core::budget::{chain_efficiency, overall_detection};
use cavspin_core::cavity::{
    self, beta_factor, detuning_correction, dipole_projection, purcell_from_lifetimes, purcell_max, Spin,
};
use cavspin_core::fitting::{self, AxisKind, Bounds, FitOptions, FitOutcome, ModelKind, Params, FWHM_PER_SIGMA};
use cavspin_core::protocol::{self, log_axis, success_probability, sweep_map, transfer_fidelity};
use cavspin_core::units::{Frequency, LinewidthFWHM, SPEED_OF_LIGHT};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};
use serde_json::{json, Value};

use crate::config::{DeviceConfig, TABLE1_PRESETS};
use crate::obj;
use crate::report::{num, Report};
use crate::trace::{load_trace, TraceHints};
use crate::CliError;

/// `ξ = QE · DW` used when no emitter is configured.
const DEFAULT_XI: f64 = 0.80 * 0.57;

#[derive(Debug, Parser)]
#[command(
    name = "cavspin",
    version,
    about = "Cavity-coupled spin-photon interface modeling and spectroscopy fits",
    after_help = "Exit codes: 0 success, 2 invalid input, 3 numerical failure, 64 usage error.\n\
                  Log verbosity: CAVSPIN_LOG=error|warn|info|debug|trace (default warn)."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Purcell factor, beta factor, coupling strength and cooperativity.
    Purcell(PurcellArgs),
    /// Fit a lineshape model to a trace file.
    Fit(FitArgs),
    /// Fidelity and success-probability maps over coupling ratio and dephasing.
    Sweep(SweepArgs),
    /// Optical efficiency budget of a loss chain.
    Budget(BudgetArgs),
    /// Cavity reflection spectrum for both spin states.
    Reflection(ReflectionArgs),
    /// Purcell and beta factors for the four tabulated channels.
    #[command(name = "report-table1")]
    ReportTable1(Table1Args),
}

#[derive(Debug, Clone, Args)]
pub struct Source {
    /// Built-in device preset.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Device configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<Option<DeviceConfig>, CliError> {
        match (&self.preset, &self.config) {
            (Some(p), _) => DeviceConfig::preset(p).map(Some),
            (None, Some(path)) => DeviceConfig::from_path(path).map(Some),
            (None, None) => Ok(None),
        }
    }

    fn require(&self) -> Result<DeviceConfig, CliError> {
        self.load()?
            .ok_or_else(|| CliError::Usage("this command needs --preset NAME or --config FILE".into()))
    }

    fn echo(&self) -> Value {
        match (&self.preset, &self.config) {
            (Some(p), _) => json!({ "preset": p }),
            (None, Some(c)) => json!({ "config": c.display().to_string() }),
            (None, None) => Value::Null,
        }
    }
}

#[derive(Debug, Args)]
pub struct PurcellArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub tau_on_ns: Option<f64>,
    #[arg(long)]
    pub tau_off_ns: Option<f64>,
    #[arg(long)]
    pub tau_bulk_ns: Option<f64>,
    /// Quantum efficiency times Debye-Waller factor.
    #[arg(long)]
    pub xi: Option<f64>,
    /// Emitter wavelength for the detuning correction.
    #[arg(long, requires = "cavity_nm")]
    pub emitter_nm: Option<f64>,
    /// Cavity wavelength for the detuning correction.
    #[arg(long, requires = "emitter_nm")]
    pub cavity_nm: Option<f64>,
    #[arg(long)]
    pub quality_factor: Option<f64>,
    /// Directory for report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    WavelengthNm,
    FrequencyThz,
    TimeNs,
}

impl From<AxisArg> for AxisKind {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::WavelengthNm => AxisKind::WavelengthNm,
            AxisArg::FrequencyThz => AxisKind::FrequencyThz,
            AxisArg::TimeNs => AxisKind::TimeNs,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_parser = ["fano_lorentz", "lorentzian_multi", "lifetime_emg", "g2_dip"])]
    pub model: String,
    #[arg(long)]
    pub trace: PathBuf,
    /// Peak count for lorentzian_multi.
    #[arg(long, default_value_t = 1)]
    pub peaks: usize,
    /// x-axis kind; overrides the header.
    #[arg(long, value_enum)]
    pub axis: Option<AxisArg>,
    /// Sort rows by x instead of rejecting unordered files.
    #[arg(long)]
    pub sort: bool,
    /// Starting value, NAME=VALUE (repeatable).
    #[arg(long, value_name = "NAME=VALUE")]
    pub init: Vec<String>,
    /// Hold a parameter, NAME=VALUE (repeatable).
    #[arg(long, value_name = "NAME=VALUE")]
    pub fix: Vec<String>,
    /// Box constraint, NAME=LO:HI (repeatable).
    #[arg(long, value_name = "NAME=LO:HI")]
    pub bound: Vec<String>,
    /// Refits with model-based Poisson weights.
    #[arg(long, default_value_t = 0)]
    pub poisson_reweight: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// g2_dip: divide a raw histogram by its long-delay level, with this
    /// dip-width guess.
    #[arg(long)]
    pub normalize_tau0_ns: Option<f64>,
    /// g2_dip / lifetime_emg: hold the Gaussian jitter at this FWHM.
    #[arg(long)]
    pub jitter_fwhm_ns: Option<f64>,
    /// g2_dip: signal rate for background correction.
    #[arg(long, requires = "background_cps")]
    pub signal_cps: Option<f64>,
    /// g2_dip: uncorrelated background rate.
    #[arg(long, requires = "signal_cps")]
    pub background_cps: Option<f64>,
    /// lorentzian_multi: off-resonant lifetime for pure-dephasing extraction.
    #[arg(long)]
    pub tau_off_ns: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: Source,
    /// Output directory for fidelity.csv, psucc.csv and report.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ratio_points: Option<usize>,
    #[arg(long)]
    pub gamma_points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[command(flatten)]
    pub source: Source,
    /// Detector efficiency; overrides the configuration.
    #[arg(long)]
    pub detector: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReflectionArgs {
    #[command(flatten)]
    pub source: Source,
    /// Full probe span around the cavity resonance; defaults to 4 κ/2π.
    #[arg(long = "span-GHz")]
    pub span_ghz: Option<f64>,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    /// Spectral-diffusion offset of the emitter.
    #[arg(long = "offset-MHz", default_value_t = 0.0, allow_negative_numbers = true)]
    pub offset_mhz: f64,
    /// Directory for reflection.csv and report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Table1Args {
    /// Directory for table1.csv and report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs a parsed command. `command` is the echoed argument list.
pub fn execute(cli: Cli, command: Vec<String>) -> Result<Report, CliError> {
    let (report, out) = match cli.command {
        Command::Purcell(a) => {
            let out = a.out.clone();
            (purcell(a, command)?, out)
        }
        Command::Fit(a) => {
            let out = a.out.clone();
            (fit(a, command)?, out)
        }
        Command::Sweep(a) => {
            let out = Some(a.out.clone());
            (sweep(a, command)?, out)
        }
        Command::Budget(a) => {
            let out = a.out.clone();
            (budget(a, command)?, out)
        }
        Command::Reflection(a) => {
            let out = a.out.clone();
            (reflection(a, command)?, out)
        }
        Command::ReportTable1(a) => {
            let out = a.out.clone();
            (table1(a, command)?, out)
        }
    };
    if let Some(dir) = out {
        ensure_dir(&dir)?;
        report.write(&dir)?;
        info!("wrote {}", dir.join("report.json").display());
    }
    Ok(report)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn ghz(rate: cavspin_core::units::AngularRate) -> f64 {
    rate.over_two_pi().ghz()
}

fn purcell(a: PurcellArgs, command: Vec<String>) -> Result<Report, CliError> {
    let cfg = a.source.load()?;
    let emitter = cfg.as_ref().and_then(|c| c.emitter.as_ref());
    let pick = |flag: Option<f64>, from_cfg: Option<f64>, name: &str| {
        flag.or(from_cfg)
            .ok_or_else(|| usage(format!("--{name} is required without a configured emitter")))
    };
    let tau_on = pick(a.tau_on_ns, emitter.map(|e| e.tau_on_ns), "tau-on-ns")?;
    let tau_off = pick(a.tau_off_ns, emitter.map(|e| e.tau_off_ns), "tau-off-ns")?;
    let tau_bulk = pick(a.tau_bulk_ns, emitter.map(|e| e.tau_bulk_ns), "tau-bulk-ns")?;
    let xi =
        a.xi.or(emitter.map(|e| e.quantum_efficiency * e.debye_waller))
            .unwrap_or(DEFAULT_XI);

    let f = purcell_from_lifetimes(tau_bulk, xi, tau_on, tau_off)?;
    let mut outputs = obj! {
        "purcell_factor" => num(f),
        "beta" => num(beta_factor(f)?),
        "lifetime_ratio" => num(tau_off / tau_on),
    };
    let map = outputs.as_object_mut().expect("object");
    let mut warnings = Vec::new();

    let cavity = match &cfg {
        Some(c) if c.cavity.is_some() => Some(c.cavity_params()?),
        _ => None,
    };
    if let (Some(cav), Some(c)) = (&cavity, &cfg) {
        let fmax = purcell_max(cav.quality_factor, cav.mode_volume)?;
        let factor = c.cavity.as_ref().expect("cavity").projection_factor;
        map.insert("purcell_max".into(), num(fmax));
        map.insert("purcell_max_projected".into(), num(dipole_projection(fmax, factor)?));
        map.insert("kappa_GHz".into(), num(ghz(cav.kappa())));
        map.insert("kappa_wg_GHz".into(), num(ghz(cav.kappa_wg())));
        if c.emitter.is_some() {
            let sys = c.system()?;
            map.insert("coupling_g_GHz".into(), num(ghz(sys.g)));
            map.insert(
                "radiative_linewidth_MHz".into(),
                num(sys.emitter.radiative_linewidth().mhz()),
            );
            map.insert("cooperativity".into(), num(sys.cooperativity()?));
        }
    }
    if let (Some(le), Some(lc)) = (a.emitter_nm, a.cavity_nm) {
        let q = a
            .quality_factor
            .or(cavity.map(|c| c.quality_factor))
            .ok_or_else(|| usage("the detuning correction needs --quality-factor or a configured cavity"))?;
        let corrected = detuning_correction(f, q, le, lc)?;
        map.insert("purcell_detuning_corrected".into(), num(corrected));
        if (le / lc - 1.0).abs() * q > 1.0 {
            warnings.push("emitter lies outside the cavity linewidth; the correction is large".into());
        }
    }

    let inputs = obj! {
        "source" => a.source.echo(),
        "device" => cfg,
        "tau_on_ns" => num(tau_on),
        "tau_off_ns" => num(tau_off),
        "tau_bulk_ns" => num(tau_bulk),
        "xi" => num(xi),
        "emitter_nm" => a.emitter_nm.map(num),
        "cavity_nm" => a.cavity_nm.map(num),
    };
    Ok(Report::new(command, inputs, outputs, warnings))
}

fn parse_assignment(s: &str, flag: &str) -> Result<(String, String), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| usage(format!("--{flag} expects NAME=VALUE, got '{s}'")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_f64(s: &str, flag: &str) -> Result<f64, CliError> {
    s.parse::<f64>()
        .map_err(|_| usage(format!("--{flag}: '{s}' is not a number")))
}

/// Unit suffix of a model parameter or derived quantity.
fn unit_of(model: ModelKind, name: &str, axis: AxisKind) -> &'static str {
    let base = name.split('_').next().unwrap_or(name);
    match (model, base) {
        (_, "eta" | "q" | "g0" | "g2") => "",
        (ModelKind::LifetimeEmg, "amplitude") => "counts_ns",
        (_, "y0" | "amplitude") => "counts",
        (ModelKind::FanoLorentz | ModelKind::LorentzianMulti { .. }, "center" | "width" | "fwhm") => axis.unit(),
        _ if name == "q_factor" => "",
        _ => "ns",
    }
}

fn key(name: &str, unit: &str) -> String {
    if unit.is_empty() {
        name.to_string()
    } else {
        format!("{name}_{unit}")
    }
}

fn fit(a: FitArgs, command: Vec<String>) -> Result<Report, CliError> {
    let model = ModelKind::from_name(&a.model, a.peaks)?;
    let time_model = matches!(model, ModelKind::LifetimeEmg | ModelKind::G2Dip);
    let hints = TraceHints {
        axis: a.axis.map(Into::into),
        fallback_axis: time_model.then_some(AxisKind::TimeNs),
        sort: a.sort,
    };
    let mut trace = load_trace(&a.trace, &hints)?;
    let mut warnings = Vec::new();

    if let Some(tau0) = a.normalize_tau0_ns {
        if model != ModelKind::G2Dip {
            return Err(usage("--normalize-tau0-ns applies to g2_dip only"));
        }
        trace = fitting::normalize_g2(&trace, tau0)?;
    }
    if time_model && trace.axis != AxisKind::TimeNs {
        return Err(invalid(format!("{} needs a time axis in ns", model.name())));
    }

    let mut init = fitting::initial_guess(model, &trace)?;
    for s in &a.init {
        let (k, v) = parse_assignment(s, "init")?;
        init.set(&k, parse_f64(&v, "init")?)?;
    }
    let mut bounds = Bounds::new();
    let mut constrained: Vec<String> = Vec::new();
    for s in &a.bound {
        let (k, v) = parse_assignment(s, "bound")?;
        let (lo, hi) = v
            .split_once(':')
            .ok_or_else(|| usage(format!("--bound expects NAME=LO:HI, got '{s}'")))?;
        bounds = bounds.set(k.clone(), parse_f64(lo, "bound")?, parse_f64(hi, "bound")?);
        constrained.push(k);
    }
    for s in &a.fix {
        let (k, v) = parse_assignment(s, "fix")?;
        let v = parse_f64(&v, "fix")?;
        init.set(&k, v)?;
        bounds = bounds.fix(k.clone(), v);
        constrained.push(k);
    }
    if let Some(fwhm) = a.jitter_fwhm_ns {
        let name = match model {
            ModelKind::G2Dip => "sigma_jitter",
            ModelKind::LifetimeEmg => "sigma",
            _ => return Err(usage("--jitter-fwhm-ns applies to g2_dip and lifetime_emg")),
        };
        let sigma = fwhm / FWHM_PER_SIGMA;
        init.set(name, sigma)?;
        bounds = bounds.fix(name, sigma);
        constrained.push(name.into());
    }
    if model == ModelKind::FanoLorentz && !constrained.iter().any(|k| k == "eta") {
        let eta = init.get("eta").expect("fano has eta");
        bounds = bounds.fix("eta", eta);
        warnings.push(format!(
            "eta held at {eta}: with y0, amplitude and q free it is not separately identifiable"
        ));
    }
    let opts = FitOptions {
        max_iter: a.max_iter,
        poisson_reweight: a.poisson_reweight,
    };
    debug!("initial parameters: {:?}", init.values());

    let outcome = match model {
        ModelKind::LorentzianMulti { peaks } => {
            fitting::fit_ple_multipeak_with(&trace, peaks, &init, Some(&bounds), opts)?
        }
        _ => fitting::fit_curve_with(model, &trace, &init, Some(&bounds), opts)?,
    };
    warnings.extend(outcome.warnings.iter().cloned());
    if !outcome.converged {
        warnings.push("fit did not converge".into());
    }

    let mut outputs = fit_outputs(&outcome, trace.axis);
    let map = outputs.as_object_mut().expect("object");
    if let (Some(s), Some(b)) = (a.signal_cps, a.background_cps) {
        if model != ModelKind::G2Dip {
            return Err(usage("--signal-cps/--background-cps apply to g2_dip only"));
        }
        let c = fitting::background_correct_g2(outcome.param("g0").expect("g0"), s, b)?;
        map.insert("g2_0_background_corrected".into(), num(c.value));
        map.insert("g2_0_background_corrected_clamped".into(), json!(c.clamped));
        if c.clamped {
            warnings.push("background-corrected g2(0) clamped at 0".into());
        }
    }
    if let Some(tau_off) = a.tau_off_ns {
        let ModelKind::LorentzianMulti { peaks } = model else {
            return Err(usage("--tau-off-ns applies to lorentzian_multi only"));
        };
        let mut rows = Vec::new();
        for k in 0..peaks {
            let center = outcome.param(&format!("center_{k}")).expect("center");
            let fwhm = outcome.param(&format!("fwhm_{k}")).expect("fwhm");
            let hz = match trace.axis {
                AxisKind::FrequencyThz => fwhm * 1e12,
                AxisKind::WavelengthNm => SPEED_OF_LIGHT * fwhm * 1e-9 / (center * 1e-9).powi(2),
                AxisKind::TimeNs => return Err(invalid("dephasing extraction needs a spectral axis")),
            };
            let d = fitting::dephasing_from_linewidth(LinewidthFWHM::hz(hz), tau_off)?;
            if d.clamped {
                warnings.push(format!(
                    "peak {k}: linewidth below the transform limit, dephasing clamped at 0"
                ));
            }
            rows.push(obj! {
                "peak" => k,
                "linewidth_MHz" => num(hz * 1e-6),
                "gamma_star_MHz" => num(d.value.mhz()),
                "clamped" => d.clamped,
            });
        }
        map.insert("dephasing".into(), Value::Array(rows));
    }

    let inputs = obj! {
        "model" => model.name(),
        "peaks" => matches!(model, ModelKind::LorentzianMulti { .. }).then_some(a.peaks),
        "trace" => a.trace.display().to_string(),
        "axis" => trace.axis,
        "n_points" => trace.len(),
        "sorted" => a.sort,
        "initial" => params_map(model, &init, trace.axis),
        "constrained" => constrained,
        "poisson_reweight" => a.poisson_reweight,
        "max_iter" => a.max_iter,
        "normalize_tau0_ns" => a.normalize_tau0_ns.map(num),
        "jitter_fwhm_ns" => a.jitter_fwhm_ns.map(num),
        "tau_off_ns" => a.tau_off_ns.map(num),
    };
    Ok(Report::new(command, inputs, outputs, warnings))
}

fn params_map(model: ModelKind, p: &Params, axis: AxisKind) -> Value {
    let mut m = serde_json::Map::new();
    for (name, v) in p.iter() {
        m.insert(key(name, unit_of(model, name, axis)), num(v));
    }
    Value::Object(m)
}

fn fit_outputs(o: &FitOutcome, axis: AxisKind) -> Value {
    let mut params = serde_json::Map::new();
    let mut order = Vec::new();
    for (j, (name, v)) in o.params.iter().enumerate() {
        let k = key(name, unit_of(o.model, name, axis));
        params.insert(k.clone(), json!({ "value": num(v), "error": num(o.errors[j]) }));
        order.push(k);
    }
    let mut derived = serde_json::Map::new();
    for d in &o.derived {
        derived.insert(
            key(&d.name, unit_of(o.model, &d.name, axis)),
            json!({ "value": num(d.value), "error": num(d.error) }),
        );
    }
    let cov: Vec<Vec<Value>> = o
        .covariance
        .iter()
        .map(|r| r.iter().map(|&v| num(v)).collect())
        .collect();
    obj! {
        "parameters" => Value::Object(params),
        "derived" => Value::Object(derived),
        "reduced_chi2" => num(o.reduced_chi2),
        "n_iter" => o.n_iter,
        "converged" => o.converged,
        "covariance_order" => order,
        "covariance" => cov,
        "cost_history" => o.cost_history.iter().map(|&v| num(v)).collect::<Vec<_>>(),
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

/// CSV matrix: header row is `corner, columns...`, each body row starts
/// with its row coordinate.
fn write_matrix(path: &Path, corner: &str, columns: &[f64], rows: &[f64], body: &[Vec<f64>]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec![corner.to_string()];
    header.extend(columns.iter().map(|&v| fmt_num(v)));
    w.write_record(&header).map_err(io)?;
    for (y, row) in rows.iter().zip(body) {
        let mut rec = vec![fmt_num(*y)];
        rec.extend(row.iter().map(|&v| fmt_num(v)));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn sweep(a: SweepArgs, command: Vec<String>) -> Result<Report, CliError> {
    let cfg = a.source.require()?;
    let system = cfg.system()?;
    let pcfg = cfg.protocol_config()?;
    let eff = cfg.efficiency_pair()?;
    let mut s = cfg.sweep_section();
    if let Some(n) = a.ratio_points {
        s.ratio_points = n;
    }
    if let Some(n) = a.gamma_points {
        s.gamma_points = n;
    }
    let ratios = log_axis(s.ratio_min, s.ratio_max, s.ratio_points)?;
    let gammas = log_axis(s.gamma_min_mhz, s.gamma_max_mhz, s.gamma_points)?;
    info!("sweeping {} x {} cells", gammas.len(), ratios.len());
    let grid = sweep_map(&system, &pcfg, eff, &ratios, &gammas)?;

    ensure_dir(&a.out)?;
    let corner = "gamma_star_MHz\\kappa_wg_over_kappa";
    write_matrix(
        &a.out.join("fidelity.csv"),
        corner,
        &grid.coupling_ratios,
        &grid.gamma_star_mhz,
        &grid.fidelity,
    )?;
    write_matrix(
        &a.out.join("psucc.csv"),
        corner,
        &grid.coupling_ratios,
        &grid.gamma_star_mhz,
        &grid.success_prob,
    )?;

    let mut markers = Vec::new();
    for m in &cfg.markers {
        let sys = system.with_ratio_and_dephasing(m.coupling_ratio, LinewidthFWHM::from_mhz(m.gamma_star_mhz))?;
        markers.push(obj! {
            "name" => &m.name,
            "coupling_ratio" => num(m.coupling_ratio),
            "gamma_star_MHz" => num(m.gamma_star_mhz),
            "fidelity" => num(transfer_fidelity(&sys, &pcfg)?),
            "success_probability" => num(success_probability(&sys, &pcfg, eff)?),
        });
    }
    let range = |m: &[Vec<f64>]| {
        let (lo, hi) = m
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        vec![num(lo), num(hi)]
    };
    let locus: Vec<Value> = grid
        .optimal_locus
        .iter()
        .map(|p| {
            obj! {
                "gamma_star_MHz" => num(p.gamma_star_mhz),
                "coupling_ratio" => num(p.coupling_ratio),
                "fidelity" => num(p.fidelity),
            }
        })
        .collect();
    let outputs = obj! {
        "files" => ["fidelity.csv", "psucc.csv", "report.json"],
        "coupling_ratio_points" => ratios.len(),
        "gamma_star_points" => gammas.len(),
        "coupling_g_GHz" => num(ghz(system.g)),
        "fidelity_range" => range(&grid.fidelity),
        "success_probability_range" => range(&grid.success_prob),
        "markers" => markers,
        "optimal_locus" => locus,
    };
    let inputs = obj! {
        "source" => a.source.echo(),
        "device" => &cfg,
        "sweep" => obj! {
            "ratio_min" => num(s.ratio_min),
            "ratio_max" => num(s.ratio_max),
            "ratio_points" => s.ratio_points,
            "gamma_min_MHz" => num(s.gamma_min_mhz),
            "gamma_max_MHz" => num(s.gamma_max_mhz),
            "gamma_points" => s.gamma_points,
        },
    };
    Ok(Report::new(command, inputs, outputs, Vec::new()))
}

fn db(eff: f64) -> Value {
    num(-10.0 * eff.log10())
}

fn budget(a: BudgetArgs, command: Vec<String>) -> Result<Report, CliError> {
    let cfg = a.source.require()?;
    let chain = cfg.chain()?;
    let detector = match a.detector {
        Some(d) if !(0.0..=1.0).contains(&d) => {
            return Err(invalid(format!("detector efficiency must lie in [0, 1] (got {d})")))
        }
        Some(d) => Some(d),
        None => cfg.detector()?,
    };
    let mut warnings = Vec::new();
    if chain.stages.is_empty() {
        warnings.push("the loss chain is empty".into());
    }
    let summary = chain_efficiency(&chain)?;
    let stages: Vec<Value> = chain
        .stages
        .iter()
        .map(|s| {
            obj! {
                "name" => &s.name,
                "group" => &s.group,
                "count" => s.count,
                "value" => num(s.value),
                "efficiency" => num(s.efficiency()),
                "loss_dB" => db(s.efficiency()),
                "device_coupling" => s.device_coupling,
            }
        })
        .collect();
    let subtotals: Vec<Value> = summary
        .subtotals
        .iter()
        .map(|s| obj! { "group" => &s.group, "efficiency" => num(s.efficiency), "loss_dB" => db(s.efficiency) })
        .collect();
    let mut outputs = obj! {
        "stages" => stages,
        "subtotals" => subtotals,
        "total" => num(summary.total),
        "total_loss_dB" => db(summary.total),
        "total_excluding_device_coupling" => num(summary.total_excluding_device_coupling),
        "total_excluding_device_coupling_loss_dB" => db(summary.total_excluding_device_coupling),
    };
    if let Some(d) = detector {
        let overall = overall_detection(&chain, d)?;
        let overall_ex = overall_detection(&chain.without_device_coupling(), d)?;
        let map = outputs.as_object_mut().expect("object");
        map.insert("detector".into(), num(d));
        map.insert("overall_detection".into(), num(overall));
        map.insert("overall_detection_loss_dB".into(), db(overall));
        map.insert("overall_detection_excluding_device_coupling".into(), num(overall_ex));
    } else {
        warnings.push("no detector efficiency given; overall detection not reported".into());
    }
    let inputs = obj! {
        "source" => a.source.echo(),
        "device" => &cfg,
        "detector" => detector.map(num),
    };
    Ok(Report::new(command, inputs, outputs, warnings))
}

fn r_json(r: num_complex::Complex64) -> Value {
    obj! {
        "re" => num(r.re),
        "im" => num(r.im),
        "abs" => num(r.norm()),
        "phase_rad" => num(r.arg()),
        "reflectance" => num(r.norm_sqr()),
    }
}

fn reflection(a: ReflectionArgs, command: Vec<String>) -> Result<Report, CliError> {
    let cfg = a.source.require()?;
    let sys = cfg.system()?;
    let pcfg = cfg.protocol_config()?;
    if a.points < 2 {
        return Err(usage("--points must be at least 2"));
    }
    let kappa_ghz = ghz(sys.cavity.kappa());
    let span = a.span_ghz.unwrap_or(4.0 * kappa_ghz);
    if !(span > 0.0 && span.is_finite()) {
        return Err(usage("--span-GHz must be positive"));
    }
    let offset = Frequency::from_mhz(a.offset_mhz);
    let nu_c = sys.cavity.resonance;
    let probe = pcfg.probe.unwrap_or(nu_c);

    let mut rows = Vec::with_capacity(a.points);
    let mut dip = (f64::INFINITY, 0.0);
    for i in 0..a.points {
        let d = -0.5 * span + span * i as f64 / (a.points - 1) as f64;
        let nu = Frequency(nu_c.0 + d * 1e9);
        let down = cavity::reflection(nu, &sys, Spin::Down, offset);
        let up = cavity::reflection(nu, &sys, Spin::Up, offset);
        if down.norm_sqr() < dip.0 {
            dip = (down.norm_sqr(), d);
        }
        rows.push((d, down, up));
    }
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        let path = dir.join("reflection.csv");
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record([
            "detuning_GHz",
            "down_re",
            "down_im",
            "down_abs",
            "down_phase_rad",
            "up_re",
            "up_im",
            "up_abs",
            "up_phase_rad",
        ])
        .map_err(io)?;
        for (d, dn, up) in &rows {
            let rec: Vec<String> = [*d, dn.re, dn.im, dn.norm(), dn.arg(), up.re, up.im, up.norm(), up.arg()]
                .iter()
                .map(|&v| fmt_num(v))
                .collect();
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }

    let down = cavity::reflection(probe, &sys, Spin::Down, offset);
    let up = cavity::reflection(probe, &sys, Spin::Up, offset);
    let mut warnings = Vec::new();
    if pcfg.dephasing == protocol::DephasingModel::FastLinewidth {
        warnings.push(
            "spectrum uses the radiative linewidth only; the fast-dephasing model applies to protocol figures".into(),
        );
    }
    let outputs = obj! {
        "files" => a.out.as_ref().map(|_| ["reflection.csv", "report.json"]),
        "probe_detuning_GHz" => num((probe.0 - nu_c.0) * 1e-9),
        "spin_down" => r_json(down),
        "spin_up" => r_json(up),
        "phase_contrast_rad" => num((down / up).arg()),
        "kappa_GHz" => num(kappa_ghz),
        "kappa_wg_GHz" => num(ghz(sys.cavity.kappa_wg())),
        "coupling_g_GHz" => num(ghz(sys.g)),
        "cooperativity" => num(sys.cooperativity()?),
        "spin_down_min_reflectance" => num(dip.0),
        "spin_down_min_reflectance_detuning_GHz" => num(dip.1),
    };
    let inputs = obj! {
        "source" => a.source.echo(),
        "device" => &cfg,
        "span_GHz" => num(span),
        "points" => a.points,
        "offset_MHz" => num(a.offset_mhz),
    };
    Ok(Report::new(command, inputs, outputs, warnings))
}

fn table1(a: Table1Args, command: Vec<String>) -> Result<Report, CliError> {
    let mut rows = Vec::new();
    let mut csv_rows: Vec<Vec<f64>> = Vec::new();
    let mut warnings = Vec::new();
    for name in TABLE1_PRESETS {
        let cfg = DeviceConfig::preset(name)?;
        let e = cfg.emitter_params()?;
        let t = cfg
            .table1
            .clone()
            .ok_or_else(|| invalid(format!("preset {name} has no [table1] section")))?;
        let zpl_nm = cfg
            .emitter
            .as_ref()
            .and_then(|e| e.zpl_nm)
            .map_or_else(|| cavspin_core::units::freq_to_wl(e.zpl), Ok)?;
        let f = e.purcell_factor()?;
        let beta = beta_factor(f)?;
        let beta_rep = beta_factor(t.purcell_reported)?;
        let ratio = e.tau_off_ns / e.tau_on_ns;
        if (beta_rep - t.beta_reported).abs() > 0.01 {
            warnings.push(format!(
                "channel {}: beta from the listed Purcell factor differs by more than 0.01",
                t.channel
            ));
        }
        rows.push(obj! {
            "channel" => t.channel,
            "zpl_nm" => num(zpl_nm),
            "cavity_initial_nm" => t.cavity_initial_nm.map(num),
            "tau_on_ns" => num(e.tau_on_ns),
            "tau_off_ns" => num(e.tau_off_ns),
            "tau_bulk_ns" => num(e.tau_bulk_ns),
            "xi" => num(e.xi()),
            "lifetime_ratio" => num(ratio),
            "purcell_factor" => num(f),
            "beta" => num(beta),
            "purcell_reported" => num(t.purcell_reported),
            "purcell_reported_err" => num(t.purcell_reported_err),
            "beta_reported" => num(t.beta_reported),
            "beta_reported_err" => num(t.beta_reported_err),
            "beta_from_reported_purcell" => num(beta_rep),
            "lifetime_ratio_reported" => num(t.lifetime_ratio_reported),
        });
        csv_rows.push(vec![
            t.channel as f64,
            zpl_nm,
            e.tau_on_ns,
            e.tau_off_ns,
            ratio,
            f,
            beta,
            t.purcell_reported,
            t.beta_reported,
        ]);
    }
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        let path = dir.join("table1.csv");
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record([
            "channel",
            "zpl_nm",
            "tau_on_ns",
            "tau_off_ns",
            "lifetime_ratio",
            "purcell_factor",
            "beta",
            "purcell_reported",
            "beta_reported",
        ])
        .map_err(io)?;
        for r in &csv_rows {
            let mut rec = vec![format!("{}", r[0] as u32)];
            rec.extend(r[1..].iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    let inputs = obj! { "presets" => TABLE1_PRESETS };
    let outputs = obj! {
        "files" => a.out.as_ref().map(|_| ["table1.csv", "report.json"]),
        "rows" => rows,
    };
    Ok(Report::new(command, inputs, outputs, warnings))
}
