//! Weighted nonlinear least squares for spectroscopy traces.
//!
//! [`fit_curve`] drives any [`ModelKind`] through a bounded
//! Levenberg-Marquardt iteration and reports parameters, covariance scaled
//! by the reduced χ², and derived quantities with propagated errors.
//! [`fit_ple_multipeak`] adds canonical peak ordering for sums of
//! Lorentzians. The remaining functions are small corrections applied to
//! fitted numbers.

mod lm;
mod models;
pub mod special;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::units::{self, LinewidthFWHM};
use crate::{Error, Result};
use lm::{LmOptions, Problem};
pub use models::{
    fano_lorentz, g2_dip, lifetime_emg, lorentzian, sigma_from_fwhm, ModelKind, DEFAULT_JITTER_FWHM_NS, FWHM_PER_SIGMA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    WavelengthNm,
    FrequencyThz,
    TimeNs,
}

impl AxisKind {
    pub fn unit(&self) -> &'static str {
        match self {
            AxisKind::WavelengthNm => "nm",
            AxisKind::FrequencyThz => "THz",
            AxisKind::TimeNs => "ns",
        }
    }
}

/// Sampled measurement: strictly increasing `x`, values `y`, and per-point
/// standard deviations `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTrace {
    pub axis: AxisKind,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl SpectrumTrace {
    /// Builds and validates a trace. Without `sigma`, counting statistics
    /// `√max(y, 1)` are assumed.
    pub fn new(axis: AxisKind, x: Vec<f64>, y: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        let sigma = sigma.unwrap_or_else(|| y.iter().map(|v| v.max(1.0).sqrt()).collect());
        let t = SpectrumTrace { axis, x, y, sigma };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        if self.y.len() != n || self.sigma.len() != n {
            return Err(Error::Invalid(format!(
                "trace arrays differ in length (x {}, y {}, sigma {})",
                n,
                self.y.len(),
                self.sigma.len()
            )));
        }
        if n == 0 {
            return Err(Error::Invalid("trace is empty".into()));
        }
        if let Some(i) = (0..n).find(|&i| !self.x[i].is_finite() || !self.y[i].is_finite()) {
            return Err(Error::Invalid(format!("non-finite sample at index {i}")));
        }
        if let Some(i) = (1..n).find(|&i| self.x[i] <= self.x[i - 1]) {
            return Err(Error::Invalid(format!("x is not strictly increasing at index {i}")));
        }
        if let Some(i) = (0..n).find(|&i| !(self.sigma[i] > 0.0 && self.sigma[i].is_finite())) {
            return Err(Error::Invalid(format!("sigma must be positive (index {i})")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Parameter vector with names in model order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    names: Vec<String>,
    values: Vec<f64>,
}

impl Params {
    pub fn new(model: ModelKind, values: Vec<f64>) -> Result<Self> {
        let names = model.param_names();
        if values.len() != names.len() {
            return Err(Error::Invalid(format!(
                "{model} takes {} parameters, got {}",
                names.len(),
                values.len()
            )));
        }
        Ok(Params { names, values })
    }

    /// Builds from `(name, value)` pairs in any order; every model
    /// parameter must appear exactly once.
    pub fn from_pairs<S: AsRef<str>>(model: ModelKind, pairs: &[(S, f64)]) -> Result<Self> {
        let names = model.param_names();
        let mut values = vec![f64::NAN; names.len()];
        for (name, v) in pairs {
            let name = name.as_ref();
            let j = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Invalid(format!("{model} has no parameter '{name}'")))?;
            if !values[j].is_nan() {
                return Err(Error::Invalid(format!("parameter '{name}' given twice")));
            }
            values[j] = *v;
        }
        if let Some(j) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Invalid(format!("missing parameter '{}'", names[j])));
        }
        Ok(Params { names, values })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index(name).map(|j| self.values[j])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let j = self
            .index(name)
            .ok_or_else(|| Error::Invalid(format!("no parameter '{name}'")))?;
        self.values[j] = value;
        Ok(())
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().copied())
    }
}

/// User limits, intersected with each model's domain limits. A parameter
/// with equal lower and upper limits is held fixed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    entries: Vec<(String, f64, f64)>,
}

impl Bounds {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: impl Into<String>, lower: f64, upper: f64) -> Self {
        let name = name.into();
        self.entries.retain(|(n, _, _)| *n != name);
        self.entries.push((name, lower, upper));
        self
    }

    pub fn fix(self, name: impl Into<String>, value: f64) -> Self {
        self.set(name, value, value)
    }

    fn resolve(&self, model: ModelKind) -> Result<(Vec<f64>, Vec<f64>)> {
        let names = model.param_names();
        let (mut lo, mut hi) = model.default_bounds();
        for (name, l, h) in &self.entries {
            let j = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Invalid(format!("bound on unknown parameter '{name}'")))?;
            if l.is_nan() || h.is_nan() || l > h {
                return Err(Error::Invalid(format!("bounds for '{name}' are empty ({l}, {h})")));
            }
            lo[j] = lo[j].max(*l);
            hi[j] = hi[j].min(*h);
            if lo[j] > hi[j] {
                return Err(Error::Invalid(format!("bounds for '{name}' leave the model domain")));
            }
        }
        Ok((lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedValue {
    pub name: String,
    pub value: f64,
    pub error: f64,
}

/// Result of a fit. Errors and covariance entries of fixed parameters are
/// zero; if the covariance could not be formed they are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub model: ModelKind,
    pub params: Params,
    pub errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub derived: Vec<DerivedValue>,
    pub reduced_chi2: f64,
    pub n_iter: usize,
    pub converged: bool,
    /// Half the weighted residual sum of squares at the start and after
    /// every accepted step.
    pub cost_history: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FitOutcome {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name)
    }

    pub fn error(&self, name: &str) -> Option<f64> {
        self.params.index(name).map(|j| self.errors[j])
    }

    pub fn derived(&self, name: &str) -> Option<&DerivedValue> {
        self.derived.iter().find(|d| d.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Extra passes that replace `sigma` by `√max(model, 1)` and refit.
    /// Removes the low bias of data-derived Poisson weights.
    pub poisson_reweight: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 200,
            poisson_reweight: 0,
        }
    }
}

struct CurveProblem<'a> {
    model: ModelKind,
    trace: &'a SpectrumTrace,
    lower: &'a [f64],
    upper: &'a [f64],
}

fn fd_step(v: f64) -> f64 {
    6e-6 * v.abs().max(1e-2)
}

impl Problem for CurveProblem<'_> {
    fn n_data(&self) -> usize {
        self.trace.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let t = self.trace;
        for (i, r) in out.iter_mut().enumerate() {
            *r = (t.y[i] - self.model.eval(t.x[i], p)) / t.sigma[i];
        }
    }

    fn jacobian(&self, p: &[f64], free: &[usize], jac: &mut DMatrix<f64>) {
        let t = self.trace;
        if self.model.has_analytic_jacobian() {
            let mut grad = vec![0.0; p.len()];
            for i in 0..t.len() {
                self.model.gradient(t.x[i], p, &mut grad);
                for (k, &j) in free.iter().enumerate() {
                    jac[(i, k)] = grad[j] / t.sigma[i];
                }
            }
            return;
        }
        let mut hi_p = p.to_vec();
        let mut lo_p = p.to_vec();
        for (k, &j) in free.iter().enumerate() {
            let h = fd_step(p[j]);
            let up = (p[j] + h).min(self.upper[j]);
            let dn = (p[j] - h).max(self.lower[j]);
            hi_p[j] = up;
            lo_p[j] = dn;
            let span = up - dn;
            for i in 0..t.len() {
                let d = (self.model.eval(t.x[i], &hi_p) - self.model.eval(t.x[i], &lo_p)) / span;
                jac[(i, k)] = d / t.sigma[i];
            }
            hi_p[j] = p[j];
            lo_p[j] = p[j];
        }
    }
}

struct RawFit {
    params: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    free: Vec<usize>,
    cov_free: Result<DMatrix<f64>>,
    reduced_chi2: f64,
    n_iter: usize,
    converged: bool,
    history: Vec<f64>,
    warnings: Vec<String>,
}

fn run_fit(
    model: ModelKind,
    trace: &SpectrumTrace,
    init: &Params,
    bounds: Option<&Bounds>,
    opts: FitOptions,
) -> Result<RawFit> {
    trace.validate()?;
    if init.names() != model.param_names().as_slice() {
        return Err(Error::Invalid(format!(
            "initial parameters do not match the layout of {model}"
        )));
    }
    if trace.len() < model.n_params() + 1 {
        return Err(Error::Invalid(format!(
            "{model} needs at least {} points, trace has {}",
            model.n_params() + 1,
            trace.len()
        )));
    }
    let (lower, upper) = bounds.cloned().unwrap_or_default().resolve(model)?;
    for (j, (name, v)) in init.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Invalid(format!("initial '{name}' is not finite")));
        }
        if v < lower[j] || v > upper[j] {
            return Err(Error::Invalid(format!(
                "initial '{name}' = {v} lies outside [{}, {}]",
                lower[j], upper[j]
            )));
        }
    }

    let problem = CurveProblem {
        model,
        trace,
        lower: &lower,
        upper: &upper,
    };
    let lm_opts = LmOptions {
        max_iter: opts.max_iter,
        ..LmOptions::default()
    };
    let rep = lm::minimize(&problem, init.values(), &lower, &upper, lm_opts)?;
    let mut warnings = Vec::new();
    if !rep.converged {
        warnings.push(format!("iteration cap of {} reached before convergence", opts.max_iter));
    }
    let dof = trace.len() - rep.free.len();
    let reduced_chi2 = 2.0 * rep.cost / dof as f64;
    let cov_free = lm::inverse_normal_matrix(&rep.jacobian).map(|c| c * reduced_chi2);
    for &j in &rep.free {
        if rep.params[j] == lower[j] || rep.params[j] == upper[j] {
            warnings.push(format!("parameter '{}' ended on a bound", init.names()[j]));
        }
    }
    Ok(RawFit {
        params: rep.params,
        lower,
        upper,
        free: rep.free,
        cov_free,
        reduced_chi2,
        n_iter: rep.n_iter,
        converged: rep.converged,
        history: rep.history,
        warnings,
    })
}

/// Reorders multi-Lorentzian peaks by center (ties by width, then
/// amplitude). Returns the parameter permutation: `new[i] = old[perm[i]]`.
fn peak_order(model: ModelKind, p: &[f64]) -> Vec<usize> {
    let ModelKind::LorentzianMulti { peaks } = model else {
        return (0..p.len()).collect();
    };
    let mut order: Vec<usize> = (0..peaks).collect();
    order.sort_by(|&a, &b| {
        let key = |k: usize| (p[2 + 3 * k], p[3 + 3 * k], p[1 + 3 * k]);
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.total_cmp(&kb.2))
    });
    let mut perm = vec![0];
    for k in order {
        perm.extend([1 + 3 * k, 2 + 3 * k, 3 + 3 * k]);
    }
    perm
}

fn assemble(model: ModelKind, raw: RawFit) -> FitOutcome {
    let n = model.n_params();
    let mut warnings = raw.warnings;
    let mut full_cov = DMatrix::zeros(n, n);
    let cov_ok = match &raw.cov_free {
        Ok(c) => {
            for (a, &i) in raw.free.iter().enumerate() {
                for (b, &j) in raw.free.iter().enumerate() {
                    full_cov[(i, j)] = c[(a, b)];
                }
            }
            true
        }
        Err(e) => {
            warnings.push(format!("covariance unavailable: {e}"));
            for &i in &raw.free {
                for j in 0..n {
                    full_cov[(i, j)] = f64::NAN;
                    full_cov[(j, i)] = f64::NAN;
                }
            }
            false
        }
    };

    let perm = peak_order(model, &raw.params);
    let params: Vec<f64> = perm.iter().map(|&j| raw.params[j]).collect();
    let lower: Vec<f64> = perm.iter().map(|&j| raw.lower[j]).collect();
    let upper: Vec<f64> = perm.iter().map(|&j| raw.upper[j]).collect();
    let cov = DMatrix::from_fn(n, n, |i, j| full_cov[(perm[i], perm[j])]);
    let errors: Vec<f64> = (0..n)
        .map(|j| {
            if cov[(j, j)].is_nan() {
                f64::NAN
            } else {
                cov[(j, j)].max(0.0).sqrt()
            }
        })
        .collect();

    let free: Vec<usize> = (0..n).filter(|&j| lower[j] < upper[j]).collect();
    let base = model.derived(&params);
    let mut grads = vec![vec![0.0; n]; base.len()];
    for &j in &free {
        let h = fd_step(params[j]);
        let mut up = params.clone();
        let mut dn = params.clone();
        up[j] = (params[j] + h).min(upper[j]);
        dn[j] = (params[j] - h).max(lower[j]);
        let span = up[j] - dn[j];
        let du = model.derived(&up);
        let dd = model.derived(&dn);
        for (d, g) in grads.iter_mut().enumerate() {
            g[j] = (du[d].1 - dd[d].1) / span;
        }
    }
    let derived = base
        .into_iter()
        .zip(&grads)
        .map(|((name, value), g)| {
            let mut var = 0.0;
            for &i in &free {
                for &j in &free {
                    var += g[i] * cov[(i, j)] * g[j];
                }
            }
            DerivedValue {
                name,
                value,
                error: if var.is_nan() { f64::NAN } else { var.max(0.0).sqrt() },
            }
        })
        .collect();

    FitOutcome {
        model,
        params: Params {
            names: model.param_names(),
            values: params,
        },
        errors,
        covariance: (0..n).map(|i| (0..n).map(|j| cov[(i, j)]).collect()).collect(),
        derived,
        reduced_chi2: raw.reduced_chi2,
        n_iter: raw.n_iter,
        converged: raw.converged && cov_ok,
        cost_history: raw.history,
        warnings,
    }
}

/// Fits `model` to `trace` starting from `init`.
///
/// Errors with [`Error::RankDeficient`] when the normal equations at the
/// solution are singular. Hitting the iteration cap is not an error: the
/// best point is returned with `converged = false`.
pub fn fit_curve(
    model: ModelKind,
    trace: &SpectrumTrace,
    init: &Params,
    bounds: Option<&Bounds>,
) -> Result<FitOutcome> {
    fit_curve_with(model, trace, init, bounds, FitOptions::default())
}

pub fn fit_curve_with(
    model: ModelKind,
    trace: &SpectrumTrace,
    init: &Params,
    bounds: Option<&Bounds>,
    opts: FitOptions,
) -> Result<FitOutcome> {
    let raw = run_reweighted(model, trace, init, bounds, opts)?;
    if let Err(e) = &raw.cov_free {
        return Err(e.clone());
    }
    Ok(assemble(model, raw))
}

fn run_reweighted(
    model: ModelKind,
    trace: &SpectrumTrace,
    init: &Params,
    bounds: Option<&Bounds>,
    opts: FitOptions,
) -> Result<RawFit> {
    let mut raw = run_fit(model, trace, init, bounds, opts)?;
    let mut work = trace.clone();
    for _ in 0..opts.poisson_reweight {
        for (s, &x) in work.sigma.iter_mut().zip(&trace.x) {
            *s = model.eval(x, &raw.params).max(1.0).sqrt();
        }
        let start = Params {
            names: init.names.clone(),
            values: raw.params.clone(),
        };
        let iters = raw.n_iter;
        raw = run_fit(model, &work, &start, bounds, opts)?;
        raw.n_iter += iters;
    }
    Ok(raw)
}

/// Sum-of-Lorentzians fit with peaks reported in order of center.
///
/// The initial peaks are put in canonical order first, so the result does
/// not depend on how `init` lists them. Peaks that collapse onto each other
/// or a singular covariance give `converged = false` instead of an error.
pub fn fit_ple_multipeak(trace: &SpectrumTrace, n_peaks: usize, init: &Params) -> Result<FitOutcome> {
    fit_ple_multipeak_with(trace, n_peaks, init, None, FitOptions::default())
}

pub fn fit_ple_multipeak_with(
    trace: &SpectrumTrace,
    n_peaks: usize,
    init: &Params,
    bounds: Option<&Bounds>,
    opts: FitOptions,
) -> Result<FitOutcome> {
    if n_peaks == 0 {
        return Err(Error::Invalid("n_peaks must be at least 1".into()));
    }
    let model = ModelKind::LorentzianMulti { peaks: n_peaks };
    if init.len() != model.n_params() {
        return Err(Error::Invalid(format!(
            "{n_peaks} peaks need {} initial values, got {}",
            model.n_params(),
            init.len()
        )));
    }
    let perm = peak_order(model, init.values());
    let canonical = Params::new(model, perm.iter().map(|&j| init.values()[j]).collect())?;
    let bounds = bounds.map(|b| {
        // Bounds are per index; follow the peaks through the permutation.
        let mut out = Bounds::new();
        let names = model.param_names();
        for (name, lo, hi) in &b.entries {
            let renamed = names
                .iter()
                .position(|n| n == name)
                .and_then(|old| perm.iter().position(|&p| p == old))
                .map(|new| names[new].clone())
                .unwrap_or_else(|| name.clone());
            out = out.set(renamed, *lo, *hi);
        }
        out
    });
    let raw = run_reweighted(model, trace, &canonical, bounds.as_ref(), opts)?;
    let mut out = assemble(model, raw);
    let p = out.params.values();
    for k in 1..n_peaks {
        let (c0, w0) = (p[2 + 3 * (k - 1)], p[3 + 3 * (k - 1)]);
        let (c1, w1) = (p[2 + 3 * k], p[3 + 3 * k]);
        if (c1 - c0).abs() < 0.1 * w0.min(w1) {
            out.converged = false;
            out.warnings
                .push(format!("peaks {} and {k} overlap and cannot be separated", k - 1));
        }
    }
    Ok(out)
}

/// Value with a flag telling whether it was clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clamped<T> {
    pub value: T,
    pub clamped: bool,
}

/// Removes uncorrelated background from a measured g²(0):
/// `ρ = S/(S+B)`, `g0 = (g0_meas − (1 − ρ²))/ρ²`, clamped at 0.
pub fn background_correct_g2(g0_meas: f64, signal_cps: f64, background_cps: f64) -> Result<Clamped<f64>> {
    if !(signal_cps > 0.0) {
        return Err(Error::domain("signal rate must be positive", signal_cps));
    }
    if !(background_cps >= 0.0) {
        return Err(Error::domain("background rate must be non-negative", background_cps));
    }
    if !(g0_meas >= 0.0) {
        return Err(Error::domain("measured g2(0) must be non-negative", g0_meas));
    }
    let rho = signal_cps / (signal_cps + background_cps);
    let rho2 = rho * rho;
    let g = (g0_meas - (1.0 - rho2)) / rho2;
    Ok(if g < 0.0 {
        Clamped {
            value: 0.0,
            clamped: true,
        }
    } else {
        Clamped {
            value: g,
            clamped: false,
        }
    })
}

/// Pure dephasing `γ* = Γ − 1/(2πτ_off)`, clamped at 0.
pub fn dephasing_from_linewidth(measured: LinewidthFWHM, tau_off_ns: f64) -> Result<Clamped<LinewidthFWHM>> {
    if !(measured.value() >= 0.0) {
        return Err(Error::domain(
            "measured linewidth must be non-negative",
            measured.value(),
        ));
    }
    let limit = units::lifetime_to_transform_limit(tau_off_ns)?;
    let d = measured.value() - limit.value();
    Ok(if d < 0.0 {
        Clamped {
            value: LinewidthFWHM::hz(0.0),
            clamped: true,
        }
    } else {
        Clamped {
            value: LinewidthFWHM::hz(d),
            clamped: false,
        }
    })
}

/// Divides a raw coincidence histogram by its mean at `|delay| > 5·tau0`.
pub fn normalize_g2(trace: &SpectrumTrace, tau0_guess: f64) -> Result<SpectrumTrace> {
    if !(tau0_guess > 0.0) {
        return Err(Error::domain("tau0 guess must be positive", tau0_guess));
    }
    let far: Vec<f64> = trace
        .x
        .iter()
        .zip(&trace.y)
        .filter(|(x, _)| x.abs() > 5.0 * tau0_guess)
        .map(|(_, y)| *y)
        .collect();
    if far.is_empty() {
        return Err(Error::Invalid(
            "no samples beyond five dip widths to normalize against".into(),
        ));
    }
    let level = far.iter().sum::<f64>() / far.len() as f64;
    if !(level > 0.0) {
        return Err(Error::Numerical("long-delay level is not positive".into()));
    }
    let mut out = trace.clone();
    out.y.iter_mut().for_each(|v| *v /= level);
    out.sigma.iter_mut().for_each(|v| *v /= level);
    Ok(out)
}

fn edge_baseline(y: &[f64]) -> f64 {
    let k = (y.len() / 20).max(1);
    let s: f64 = y[..k].iter().chain(&y[y.len() - k..]).sum();
    s / (2 * k) as f64
}

/// Largest deviation from `baseline` and its half-width, from the half-max
/// crossings on either side.
fn dominant_feature(x: &[f64], y: &[f64], baseline: f64) -> (usize, f64, f64) {
    let (imax, _) = y
        .iter()
        .enumerate()
        .map(|(i, v)| (i, (v - baseline).abs()))
        .fold((0, -1.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
    let amp = y[imax] - baseline;
    let half = 0.5 * amp.abs();
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for i in range {
            let d = (y[i] - baseline) * amp.signum();
            if d <= half {
                let dp = (y[prev] - baseline) * amp.signum();
                let t = if dp != d { (dp - half) / (dp - d) } else { 0.0 };
                return Some(x[prev] + t * (x[i] - x[prev]));
            }
            prev = i;
        }
        None
    };
    let left = crossing(&mut (0..imax).rev());
    let right = crossing(&mut (imax + 1..x.len()));
    let span = x[x.len() - 1] - x[0];
    let width = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (x[imax] - l),
        (None, Some(r)) => 2.0 * (r - x[imax]),
        (None, None) => span / 10.0,
    };
    let width = if width > 0.0 { width } else { span / 10.0 };
    (imax, amp, width)
}

/// Reproducible starting point: baseline from the trace edges, feature
/// position from the extremum and widths from half-maximum crossings.
pub fn initial_guess(model: ModelKind, trace: &SpectrumTrace) -> Result<Params> {
    trace.validate()?;
    let (x, y) = (&trace.x, &trace.y);
    match model {
        ModelKind::FanoLorentz => {
            let y0 = edge_baseline(y);
            let (i, amp, w) = dominant_feature(x, y, y0);
            Params::new(model, vec![y0, amp, 0.5, 10.0, x[i], w])
        }
        ModelKind::LorentzianMulti { peaks } => {
            let y0 = edge_baseline(y);
            let mut resid: Vec<f64> = y.clone();
            let mut values = vec![y0];
            for _ in 0..peaks {
                let (i, amp, w) = dominant_feature(x, &resid, y0);
                values.extend([amp, x[i], w]);
                for (r, &xi) in resid.iter_mut().zip(x.iter()) {
                    *r -= lorentzian(xi, amp, x[i], w);
                }
            }
            Params::new(model, values)
        }
        ModelKind::LifetimeEmg => {
            let k = (y.len() / 10).max(1);
            let y0 = y[..k].iter().sum::<f64>() / k as f64;
            let (imax, _) = y
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
            let peak = y[imax] - y0;
            let tau = x[imax..]
                .iter()
                .zip(&y[imax..])
                .find(|(_, v)| **v - y0 <= peak / std::f64::consts::E)
                .map(|(t, _)| t - x[imax])
                .filter(|t| *t > 0.0)
                .unwrap_or((x[x.len() - 1] - x[0]) / 10.0);
            let sigma = sigma_from_fwhm(DEFAULT_JITTER_FWHM_NS);
            let area: f64 = (1..x.len())
                .map(|i| 0.5 * (y[i] + y[i - 1] - 2.0 * y0) * (x[i] - x[i - 1]))
                .sum();
            Params::new(model, vec![x[imax] - sigma, area, tau, sigma, y0])
        }
        ModelKind::G2Dip => {
            let (imin, ymin) = y
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
            let g0 = ymin.clamp(0.0, 0.99);
            let level = 1.0 - 0.5 * (1.0 - g0);
            let tau_half = x[imin..]
                .iter()
                .zip(&y[imin..])
                .find(|(_, v)| **v >= level)
                .map(|(t, _)| t - x[imin])
                .filter(|t| *t > 0.0)
                .unwrap_or((x[x.len() - 1] - x[0]) / 10.0);
            Params::new(model, vec![g0, tau_half / std::f64::consts::LN_2, 0.0])
        }
    }
}
