//! Experiment plumbing: a finite-volume reference solver, theory versus
//! simulation comparison, envelope and tail fits, figure presets and file I/O.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::disorder::{averaged_delta_n, envelope, validity_horizon, DisorderKind, DisorderSpec};
use crate::error::{Error, Result};
use crate::fit::{linear_fit, log_log_fit, LinearFit};
use crate::particle_sim::{run, ConsumptionSeries, SimConfig};
use crate::spectral::{
    critical_constant, tau_sensitivity, EnsembleParams, InitialCondition, TwoVector,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Signal threshold of the comparison window, in units of `1/sqrt(N)`.
pub const WINDOW_SNR: f64 = 10.0;
/// End of a tail-fit window, in units of `1/sqrt(N)`.
pub const TAIL_SNR: f64 = 3.0;
/// Level used to rank decay speed, in units of `1/sqrt(N)`.
pub const DECAY_SNR: f64 = 5.0;

// Finite-volume reference solver

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpGrid {
    /// Cells across `[x_down, x_up]`; the band edges are cell faces.
    pub cells_per_band: usize,
    /// `u dt / dx`; at 1 the transport step is an exact shift.
    pub courant: f64,
    /// Extent of the domain beyond each band edge. Defaults to `40 u / r`.
    pub pad: Option<f64>,
    /// Record every this many steps.
    pub record_every: usize,
    pub store_profiles: bool,
}

impl FpGrid {
    pub fn new(cells_per_band: usize) -> Self {
        FpGrid {
            cells_per_band,
            courant: 1.0,
            pad: None,
            record_every: 1,
            store_profiles: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpTrajectory {
    /// Cell centres.
    pub x: Vec<f64>,
    pub dx: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub n_up: Vec<f64>,
    pub mass: Vec<f64>,
    /// Densities at each recorded time, if requested.
    pub profiles: Vec<Vec<TwoVector>>,
}

impl FpTrajectory {
    /// Linear interpolation of `n_up` at time `t`.
    pub fn n_up_at(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|s| *s <= t);
        if i == 0 {
            return self.n_up[0];
        }
        if i >= self.times.len() {
            return *self.n_up.last().expect("trajectory is non-empty");
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        self.n_up[i - 1] * (1.0 - w) + self.n_up[i] * w
    }
}

/// First-order upwind integration of the two coupled transport equations with switching.
///
/// Each step advects both components (on: leftwards, off: rightwards), then
/// moves the fraction `1 - e^{-r dt}` of the on mass left of `x_down` and of
/// the off mass right of `x_up` to the other component. The outer walls are
/// closed, so mass is conserved to rounding.
pub fn fp_reference_integrator(
    p: &EnsembleParams,
    init: &InitialCondition,
    t_end: f64,
    grid: &FpGrid,
) -> Result<FpTrajectory> {
    p.validate_allow_zero_rate()?;
    if !(grid.courant > 0.0) || !grid.courant.is_finite() {
        return Err(Error::InvalidParameter(format!("courant number must be positive, got {}", grid.courant)));
    }
    if grid.courant > 1.0 {
        return Err(Error::Cfl { courant: grid.courant });
    }
    if grid.cells_per_band == 0 || grid.record_every == 0 {
        return Err(Error::InvalidParameter("grid needs cells and a record interval".into()));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter(format!("t_end must be non-negative, got {t_end}")));
    }
    let u = p.velocity();
    let m = grid.cells_per_band;
    let dx = p.width() / m as f64;
    let pad = match grid.pad {
        Some(v) if v >= 0.0 => v,
        Some(v) => return Err(Error::InvalidParameter(format!("pad must be non-negative, got {v}"))),
        None if p.r > 0.0 => 40.0 * u / p.r,
        None => p.width(),
    };
    let n_pad = (pad / dx).ceil() as usize;
    let n = m + 2 * n_pad;
    let left = p.x_down - n_pad as f64 * dx;
    let x: Vec<f64> = (0..n).map(|i| left + (i as f64 + 0.5) * dx).collect();
    let dt = grid.courant * dx / u;
    let nu = grid.courant;
    let q = -(-p.r * dt).exp_m1();
    let steps = (t_end / dt).ceil() as u64;

    let mut up = vec![0.0; n];
    let mut down = vec![0.0; n];
    match init {
        InitialCondition::DeltaAtLowerBoundary => {
            if n_pad == 0 {
                up[0] = 1.0;
            } else {
                up[n_pad - 1] = 0.5;
                up[n_pad] = 0.5;
            }
        }
        InitialCondition::Tabulated(profile) => {
            for i in 0..n {
                let v = profile.eval(x[i]);
                up[i] = v.up.re * dx;
                down[i] = v.down.re * dx;
            }
        }
    }

    let mut out = FpTrajectory {
        x,
        dx,
        dt,
        times: Vec::new(),
        n_up: Vec::new(),
        mass: Vec::new(),
        profiles: Vec::new(),
    };
    let record = |step: u64, up: &[f64], down: &[f64], out: &mut FpTrajectory| {
        let su: f64 = up.iter().sum();
        let sd: f64 = down.iter().sum();
        out.times.push(step as f64 * dt);
        out.n_up.push(su);
        out.mass.push(su + sd);
        if grid.store_profiles {
            out.profiles
                .push(up.iter().zip(down).map(|(a, b)| TwoVector::real(a / dx, b / dx)).collect());
        }
    };
    record(0, &up, &down, &mut out);

    let mut next_up = vec![0.0; n];
    let mut next_down = vec![0.0; n];
    for s in 1..=steps {
        for i in 0..n {
            let keep_up = if i == 0 { up[0] } else { up[i] * (1.0 - nu) };
            let in_up = if i + 1 < n { nu * up[i + 1] } else { 0.0 };
            next_up[i] = keep_up + in_up;
            let keep_down = if i == n - 1 { down[i] } else { down[i] * (1.0 - nu) };
            let in_down = if i > 0 { nu * down[i - 1] } else { 0.0 };
            next_down[i] = keep_down + in_down;
        }
        std::mem::swap(&mut up, &mut next_up);
        std::mem::swap(&mut down, &mut next_down);
        for i in 0..n_pad {
            let f = q * up[i];
            up[i] -= f;
            down[i] += f;
        }
        for i in n_pad + m..n {
            let f = q * down[i];
            down[i] -= f;
            up[i] += f;
        }
        if s % grid.record_every as u64 == 0 || s == steps {
            record(s, &up, &down, &mut out);
        }
    }
    Ok(out)
}

// Envelopes, fits and spectra

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub t: f64,
    pub value: f64,
}

/// Local maxima of `|values|` on a uniform time grid, refined by a parabola through three samples.
///
/// A sample only counts if it is the largest within `min_separation` on
/// either side, which suppresses noise wiggles between true peaks.
pub fn envelope_peaks(times: &[f64], values: &[f64], min_separation: f64) -> Vec<Peak> {
    let n = times.len().min(values.len());
    if n < 3 {
        return Vec::new();
    }
    let h = times[1] - times[0];
    let w = ((min_separation / h).round() as usize).max(1);
    let a: Vec<f64> = values[..n].iter().map(|v| v.abs()).collect();
    let mut peaks = Vec::new();
    for i in 1..n - 1 {
        if !(a[i] > a[i - 1] && a[i] >= a[i + 1]) {
            continue;
        }
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(n - 1);
        if a[lo..=hi].iter().any(|v| *v > a[i]) {
            continue;
        }
        let (l, c, r) = (a[i - 1], a[i], a[i + 1]);
        let curv = l - 2.0 * c + r;
        let (dt, value) = if curv < 0.0 {
            let d = 0.5 * (l - r) / curv;
            (d * h, c - 0.25 * (l - r) * d)
        } else {
            (0.0, c)
        };
        peaks.push(Peak { t: times[i] + dt, value });
    }
    peaks
}

/// Non-increasing upper envelope: each peak is replaced by the largest peak at or after it.
///
/// This bridges the nodes of lobed envelopes such as `sin(x)/x`.
pub fn upper_envelope(peaks: &[Peak]) -> Vec<Peak> {
    let mut out = peaks.to_vec();
    let mut running = f64::NEG_INFINITY;
    for p in out.iter_mut().rev() {
        running = running.max(p.value);
        p.value = running;
    }
    out
}

fn peaks_in(peaks: &[Peak], window: (f64, f64)) -> Vec<Peak> {
    peaks
        .iter()
        .copied()
        .filter(|p| p.t >= window.0 && p.t <= window.1)
        .collect()
}

/// Slope of `log` upper envelope versus `log t` over `window`.
pub fn fit_tail_slope(times: &[f64], signal: &[f64], window: (f64, f64), min_separation: f64) -> Result<LinearFit> {
    check_window(times, window)?;
    let peaks = upper_envelope(&envelope_peaks(times, signal, min_separation));
    let w = peaks_in(&peaks, window);
    if w.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "{} envelope peaks in [{}, {}], need 5",
            w.len(),
            window.0,
            window.1
        )));
    }
    let (t, v): (Vec<f64>, Vec<f64>) = w.iter().map(|p| (p.t, p.value)).unzip();
    log_log_fit(&t, &v)
}

/// Slope of `log` upper envelope versus `t` over `window` (an exponential rate when the fit is good).
pub fn fit_exponential_envelope(
    times: &[f64],
    signal: &[f64],
    window: (f64, f64),
    min_separation: f64,
) -> Result<LinearFit> {
    check_window(times, window)?;
    let peaks = upper_envelope(&envelope_peaks(times, signal, min_separation));
    let w = peaks_in(&peaks, window);
    if w.len() < 5 {
        return Err(Error::InsufficientData(format!("{} envelope peaks in window, need 5", w.len())));
    }
    let t: Vec<f64> = w.iter().map(|p| p.t).collect();
    let v: Vec<f64> = w.iter().map(|p| p.value.max(f64::MIN_POSITIVE).ln()).collect();
    linear_fit(&t, &v)
}

fn check_window(times: &[f64], window: (f64, f64)) -> Result<()> {
    let (Some(first), Some(last)) = (times.first(), times.last()) else {
        return Err(Error::InsufficientData("empty series".into()));
    };
    if !(window.1 > window.0) {
        return Err(Error::EmptyWindow(format!("[{}, {}]", window.0, window.1)));
    }
    if window.0 < *first || window.1 > *last {
        return Err(Error::InvalidParameter(format!(
            "window [{}, {}] is outside the data range [{first}, {last}]",
            window.0, window.1
        )));
    }
    Ok(())
}

/// Root mean square of the samples with `t >= from`.
pub fn noise_floor(times: &[f64], signal: &[f64], from: f64) -> Result<f64> {
    let tail: Vec<f64> = times
        .iter()
        .zip(signal)
        .filter(|(t, _)| **t >= from)
        .map(|(_, v)| *v)
        .collect();
    if tail.len() < 2 {
        return Err(Error::InsufficientData(format!("no samples after t = {from}")));
    }
    Ok((tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt())
}

/// Frequency of the largest DFT bin (excluding zero) of a uniformly sampled signal.
///
/// Returns `None` unless the signal changes sign at least twice.
pub fn dominant_frequency(times: &[f64], signal: &[f64]) -> Option<f64> {
    let n = times.len().min(signal.len());
    if n < 4 {
        return None;
    }
    let crossings = signal[..n].windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    if crossings < 2 {
        return None;
    }
    let h = times[1] - times[0];
    let span = h * n as f64;
    let power = |k: usize| -> f64 {
        let f = k as f64 / span;
        let s: Complex64 = signal[..n]
            .iter()
            .zip(times)
            .map(|(y, t)| *y * Complex64::from_polar(1.0, -2.0 * PI * f * t))
            .sum();
        s.norm_sqr()
    };
    (1..=n / 2)
        .map(|k| (k, power(k)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k as f64 / span)
}

// Experiments

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheorySpec {
    /// Number of `-` modes used when there is no disorder.
    pub mode_count: usize,
    pub envelope_kinds: Vec<DisorderKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub ensemble: EnsembleParams,
    pub disorder: DisorderSpec,
    pub sim: Option<SimConfig>,
    pub theory: TheorySpec,
    /// Start of the comparison window; defaults to `tau0`. The window ends when
    /// the signal drops below `WINDOW_SNR / sqrt(N)` or at the envelope's validity horizon.
    pub window_start: Option<f64>,
    /// Start of the tail-fit window, if a tail fit is wanted.
    pub tail_fit_start: Option<f64>,
    pub outputs: Vec<String>,
}

impl ExperimentSpec {
    /// A spec with simulation defaults for the given ensemble size, disorder and seed.
    pub fn new(name: &str, r: f64, disorder: DisorderSpec, n_devices: usize, t_end: f64, seed: u64) -> Result<Self> {
        Self::from_sim(name, SimConfig::with_defaults(n_devices, r, disorder, t_end, seed))
    }

    /// A spec whose ensemble and disorder are taken from `sim`.
    pub fn from_sim(name: &str, sim: SimConfig) -> Result<Self> {
        let ensemble = EnsembleParams::new(sim.disorder.tau0, sim.r, sim.x_down, sim.x_up)?;
        let spec = ExperimentSpec {
            name: name.to_string(),
            ensemble,
            disorder: sim.disorder,
            theory: TheorySpec {
                mode_count: 2,
                envelope_kinds: vec![sim.disorder.kind],
            },
            sim: Some(sim),
            window_start: None,
            tail_fit_start: None,
            outputs: vec![format!("series_{name}.csv")],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        self.disorder.validate()?;
        let e = &self.ensemble;
        if (self.disorder.tau0 - e.tau).abs() > 1e-12 * e.tau {
            return Err(Error::InvalidParameter(format!(
                "disorder tau0 {} differs from ensemble tau {}",
                self.disorder.tau0, e.tau
            )));
        }
        if let Some(sim) = &self.sim {
            sim.validate()?;
            if sim.r != e.r || sim.x_down != e.x_down || sim.x_up != e.x_up || sim.disorder != self.disorder {
                return Err(Error::InvalidParameter(
                    "simulation and ensemble parameters disagree".into(),
                ));
            }
        }
        if self.theory.mode_count == 0 {
            return Err(Error::InvalidParameter("theory needs at least one mode".into()));
        }
        Ok(())
    }

    /// SHA-256 of the physical content: everything except the name, outputs and seed.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("spec serialises");
        if let Some(m) = v.as_object_mut() {
            m.remove("name");
            m.remove("outputs");
            if let Some(sim) = m.get_mut("sim").and_then(|s| s.as_object_mut()) {
                sim.remove("seed");
            }
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    pub fn seed(&self) -> Option<u64> {
        self.sim.as_ref().map(|s| s.seed)
    }

    fn n_devices(&self) -> Result<usize> {
        self.sim
            .as_ref()
            .map(|s| s.n_devices)
            .ok_or_else(|| Error::InvalidParameter(format!("experiment '{}' has no simulation", self.name)))
    }
}

/// Cells per band of the reference solver used as theory below the critical point.
pub const REFERENCE_CELLS: usize = 400;

/// Theory side of a comparison.
#[derive(Clone, Debug)]
pub enum Theory {
    /// Oscillatory regime: `2 Re(e^{phi - lambda t} E(t))` with closed-form envelope `E`.
    Averaged {
        disorder: DisorderSpec,
        coeffs: crate::spectral::AsymptoticCoeffs,
    },
    /// No disorder, `r tau <= C`: every non-stationary mode grows in the
    /// tails, so the finite-volume solver stands in for the mode sum.
    Reference(FpTrajectory),
}

impl Theory {
    pub fn new(spec: &ExperimentSpec, t_end: f64) -> Result<Self> {
        let p = &spec.ensemble;
        if p.r * p.tau > critical_constant() * (1.0 + 1e-9) {
            return Ok(Theory::Averaged {
                disorder: spec.disorder,
                coeffs: tau_sensitivity(p)?,
            });
        }
        if spec.disorder.delta > 0.0 {
            return Err(Error::DegenerateParameters(
                "disorder averaging needs r tau0 above the critical value".into(),
            ));
        }
        let mut grid = FpGrid::new(REFERENCE_CELLS);
        grid.record_every = 4;
        Ok(Theory::Reference(fp_reference_integrator(
            p,
            &InitialCondition::DeltaAtLowerBoundary,
            t_end,
            &grid,
        )?))
    }

    /// `N_up(t) - 1/2`.
    pub fn delta_n(&self, t: f64) -> Result<f64> {
        match self {
            Theory::Averaged { disorder, coeffs } => averaged_delta_n(disorder, t, coeffs),
            Theory::Reference(tr) => Ok(tr.n_up_at(t) - 0.5),
        }
    }

    /// Amplitude of the oscillation at `t` (or `|N_up - 1/2|` when nothing oscillates).
    pub fn envelope_abs(&self, t: f64) -> Result<f64> {
        match self {
            Theory::Averaged { disorder, coeffs } => {
                let env = envelope(disorder, t, coeffs)?;
                Ok(2.0 * ((coeffs.phi0 - coeffs.lambda0 * t).exp() * env.value).norm())
            }
            Theory::Reference(_) => Ok(self.delta_n(t)?.abs()),
        }
    }

    /// End of the time range where the closed-form envelope is claimed to hold.
    pub fn horizon(&self) -> f64 {
        match self {
            Theory::Averaged { disorder, .. } => validity_horizon(disorder),
            Theory::Reference(_) => f64::INFINITY,
        }
    }

    pub fn oscillates(&self) -> bool {
        matches!(self, Theory::Averaged { .. })
    }

    /// A quarter of the oscillation period, or `tau0 / 4` when nothing oscillates.
    fn peak_separation(&self, tau0: f64) -> f64 {
        match self {
            Theory::Averaged { coeffs, .. } => PI / coeffs.lambda0.im.abs() / 2.0,
            Theory::Reference(_) => tau0 / 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub time: f64,
    pub n_up_fraction: f64,
    pub theory_abs: f64,
    pub envelope_abs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub name: String,
    #[serde(with = "non_finite_as_null")]
    pub max_rel_envelope_error: f64,
    /// `|f_sim - f_theory|`; zero when neither oscillates, infinite when only one does.
    #[serde(with = "non_finite_as_null")]
    pub frequency_error: f64,
    /// Width of one DFT bin over the window.
    pub frequency_bin: f64,
    pub sim_frequency: Option<f64>,
    pub theory_frequency: Option<f64>,
    pub noise_floor_estimate: f64,
    pub tail_slope_fits: BTreeMap<String, LinearFit>,
    pub window: (f64, f64),
    pub seed: u64,
    pub config_digest: String,
}

/// JSON has no infinity; non-finite values are written as null and read back as infinity.
mod non_finite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Reports of a multi-experiment run, as stored in `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSet {
    pub reports: Vec<ComparisonReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<SeriesRow>,
    pub report: ComparisonReport,
}

/// Run the simulation of `spec` and compare it with theory.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let sim = spec
        .sim
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter(format!("experiment '{}' has no simulation", spec.name)))?;
    let series = run(sim)?;
    compare_series(spec, &series)
}

/// `compare_theory_sim` without the report's companion series.
pub fn compare_theory_sim(spec: &ExperimentSpec) -> Result<ComparisonReport> {
    Ok(run_experiment(spec)?.report)
}

/// Compare an existing simulated series with the theory of `spec`.
pub fn compare_series(spec: &ExperimentSpec, series: &ConsumptionSeries) -> Result<ExperimentOutput> {
    let times = &series.times;
    let t_last = *times.last().ok_or_else(|| Error::InsufficientData("empty series".into()))?;
    let theory = Theory::new(spec, t_last)?;
    let n = spec.n_devices()?;
    let y: Vec<f64> = series.n_up_fraction.iter().map(|f| f - 0.5).collect();
    let th: Vec<f64> = times.iter().map(|&t| theory.delta_n(t)).collect::<Result<_>>()?;
    let rows = series_rows(series, Some(&theory))?;
    let env: Vec<f64> = rows.iter().map(|r| r.envelope_abs).collect();

    let floor_from = t_last * 2.0 / 3.0;
    let noise = noise_floor(times, &y, floor_from)?;

    let start = spec.window_start.unwrap_or(spec.ensemble.tau);
    let thr = WINDOW_SNR / (n as f64).sqrt();
    let end = times
        .iter()
        .zip(&y)
        .filter(|(t, v)| **t >= start && v.abs() > thr)
        .map(|(t, _)| *t)
        .next_back()
        .unwrap_or(start)
        .min(theory.horizon());
    let idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= start && times[i] <= end).collect();
    if idx.len() < 4 {
        return Err(Error::EmptyWindow(format!(
            "'{}': no signal above {thr:.3e} after t = {start}",
            spec.name
        )));
    }
    let window = (start, end);

    let sep = theory.peak_separation(spec.ensemble.tau);
    let max_rel = if theory.oscillates() {
        let peaks = peaks_in(&envelope_peaks(times, &y, sep), window);
        if peaks.is_empty() {
            return Err(Error::EmptyWindow(format!("'{}': no envelope peaks in window", spec.name)));
        }
        peaks
            .iter()
            .map(|pk| Ok((pk.value - theory.envelope_abs(pk.t)?).abs() / theory.envelope_abs(pk.t)?))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max)
    } else {
        // Skip the neighbourhood of a sign change, where the relative error is meaningless.
        idx.iter()
            .filter(|&&i| env[i] > thr)
            .map(|&i| (y[i].abs() - env[i]).abs() / env[i])
            .fold(0.0, f64::max)
    };

    let wt: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
    let sim_frequency = dominant_frequency(&wt, &idx.iter().map(|&i| y[i]).collect::<Vec<_>>());
    let theory_frequency = dominant_frequency(&wt, &idx.iter().map(|&i| th[i]).collect::<Vec<_>>());
    let frequency_bin = 1.0 / (wt.len() as f64 * (times[1] - times[0]));
    let frequency_error = match (sim_frequency, theory_frequency) {
        (Some(a), Some(b)) => (a - b).abs(),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    };

    let mut tail_slope_fits = BTreeMap::new();
    if let Some(ts) = spec.tail_fit_start {
        let tail_end = snr_end(times, &y, ts, sep, TAIL_SNR / (n as f64).sqrt());
        if let Ok(fit) = fit_tail_slope(times, &y, (ts, tail_end), sep) {
            tail_slope_fits.insert(spec.disorder.kind.name().to_string(), fit);
        }
    }

    Ok(ExperimentOutput {
        rows,
        report: ComparisonReport {
            name: spec.name.clone(),
            max_rel_envelope_error: max_rel,
            frequency_error,
            frequency_bin,
            sim_frequency,
            theory_frequency,
            noise_floor_estimate: noise,
            tail_slope_fits,
            window,
            seed: series.seed,
            config_digest: spec.digest(),
        },
    })
}

/// CSV rows for a simulated series; theory columns are NaN without a theory.
pub fn series_rows(series: &ConsumptionSeries, theory: Option<&Theory>) -> Result<Vec<SeriesRow>> {
    series
        .times
        .iter()
        .zip(&series.n_up_fraction)
        .map(|(&time, &n_up_fraction)| {
            let (theory_abs, envelope_abs) = match theory {
                Some(th) => (th.delta_n(time)?.abs(), th.envelope_abs(time)?),
                None => (f64::NAN, f64::NAN),
            };
            Ok(SeriesRow {
                time,
                n_up_fraction,
                theory_abs,
                envelope_abs,
            })
        })
        .collect()
}

/// Last peak time after `start` at which the upper envelope still exceeds `level`.
fn snr_end(times: &[f64], y: &[f64], start: f64, sep: f64, level: f64) -> f64 {
    let t_last = *times.last().unwrap_or(&start);
    upper_envelope(&envelope_peaks(times, y, sep))
        .iter()
        .filter(|p| p.t >= start && p.value > level)
        .map(|p| p.t)
        .fold(start, f64::max)
        .min(t_last)
}

/// First peak time after `start` at which the upper envelope drops below `level`.
fn decay_time(times: &[f64], y: &[f64], start: f64, sep: f64, level: f64) -> Option<f64> {
    upper_envelope(&envelope_peaks(times, y, sep))
        .iter()
        .find(|p| p.t >= start && p.value < level)
        .map(|p| p.t)
}

// Presets

pub const FIG3_R: f64 = 10.0;
pub const FIG3_TAU0: f64 = 3.0;
pub const FIG3_DELTA: f64 = 0.1;
pub const FIG3_T_END_PERIODS: f64 = 100.0;
pub const FIG1_R: f64 = 100.0;
pub const FIG1_TAU0: f64 = 3.0;
pub const FIG1_DELTA: f64 = 0.1;
pub const FIG1_T_END_PERIODS: f64 = 60.0;
pub const FIG1_FIT_START_PERIODS: f64 = 10.0;

/// Homogeneous run plus one run per disorder kind at `r = 10`, `tau0 = 3`, `Delta = 0.1`.
pub fn fig3_specs(n_devices: usize, seed: u64) -> Result<Vec<ExperimentSpec>> {
    let t_end = FIG3_T_END_PERIODS * FIG3_TAU0;
    let mut specs = vec![ExperimentSpec::new(
        "delta0",
        FIG3_R,
        DisorderSpec::homogeneous(FIG3_TAU0),
        n_devices,
        t_end,
        seed,
    )?];
    for kind in DisorderKind::ALL {
        let d = DisorderSpec::new(kind, FIG3_TAU0, FIG3_DELTA)?;
        specs.push(ExperimentSpec::new(kind.name(), FIG3_R, d, n_devices, t_end, seed)?);
    }
    Ok(specs)
}

/// One run per disorder kind at `r = 100`, `tau0 = 3`, `Delta = 0.1`, with tail fits from `10 tau0`.
pub fn fig1_specs(n_devices: usize, seed: u64) -> Result<Vec<ExperimentSpec>> {
    let t_end = FIG1_T_END_PERIODS * FIG1_TAU0;
    DisorderKind::ALL
        .into_iter()
        .map(|kind| {
            let d = DisorderSpec::new(kind, FIG1_TAU0, FIG1_DELTA)?;
            let mut s = ExperimentSpec::new(kind.name(), FIG1_R, d, n_devices, t_end, seed)?;
            s.tail_fit_start = Some(FIG1_FIT_START_PERIODS * FIG1_TAU0);
            Ok(s)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: DisorderKind,
    /// First time the envelope falls below `DECAY_SNR / sqrt(N)`, if it does.
    pub decay_time: Option<f64>,
    pub tail_window: (f64, f64),
    pub log_log: Option<LinearFit>,
    pub semi_log: Option<LinearFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig1Report {
    pub kinds: Vec<KindSummary>,
    /// Kinds ordered from fastest to slowest decay.
    pub hierarchy: Vec<DisorderKind>,
    pub comparisons: Vec<ComparisonReport>,
}

/// Tail and hierarchy summary of a set of disorder runs.
pub fn summarize_tails(specs: &[ExperimentSpec], outputs: &[ExperimentOutput]) -> Result<Fig1Report> {
    let mut kinds = Vec::new();
    for (spec, out) in specs.iter().zip(outputs) {
        let n = spec.n_devices()? as f64;
        let times: Vec<f64> = out.rows.iter().map(|r| r.time).collect();
        let y: Vec<f64> = out.rows.iter().map(|r| r.n_up_fraction - 0.5).collect();
        let theory = Theory::new(spec, 0.0)?;
        let sep = theory.peak_separation(spec.ensemble.tau);
        let start = spec.tail_fit_start.unwrap_or(FIG1_FIT_START_PERIODS * spec.ensemble.tau);
        let end = snr_end(&times, &y, start, sep, TAIL_SNR / n.sqrt());
        let window = (start, end);
        kinds.push(KindSummary {
            kind: spec.disorder.kind,
            decay_time: decay_time(&times, &y, 0.0, sep, DECAY_SNR / n.sqrt()),
            tail_window: window,
            log_log: fit_tail_slope(&times, &y, window, sep).ok(),
            semi_log: fit_exponential_envelope(&times, &y, window, sep).ok(),
        });
    }
    let mut order: Vec<&KindSummary> = kinds.iter().collect();
    order.sort_by(|a, b| {
        a.decay_time
            .unwrap_or(f64::INFINITY)
            .total_cmp(&b.decay_time.unwrap_or(f64::INFINITY))
    });
    let hierarchy = order.into_iter().map(|k| k.kind).collect();
    Ok(Fig1Report {
        kinds,
        hierarchy,
        comparisons: outputs.iter().map(|o| o.report.clone()).collect(),
    })
}

// Files

/// A JSON document with its schema version.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T) -> Self {
        Versioned {
            schema_version: SCHEMA_VERSION,
            body,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub experiments: Vec<ExperimentSpec>,
    pub digests: Vec<String>,
    pub seeds: Vec<Option<u64>>,
}

impl ConfigFile {
    pub fn new(experiments: Vec<ExperimentSpec>) -> Self {
        ConfigFile {
            digests: experiments.iter().map(|e| e.digest()).collect(),
            seeds: experiments.iter().map(|e| e.seed()).collect(),
            experiments,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write `value` as pretty JSON wrapped with the schema version.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(&Versioned::new(value)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Read a JSON document written by [`write_json`], checking the schema version.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let doc: Versioned<T> = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::InvalidParameter(format!(
            "{}: schema_version {} is not supported (expected {SCHEMA_VERSION})",
            path.display(),
            doc.schema_version
        )));
    }
    Ok(doc.body)
}

pub fn write_series_csv(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_series_csv(path: &Path) -> Result<Vec<SeriesRow>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Paths of a run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(RunDir { root: root.to_path_buf() })
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn series(&self, name: &str) -> PathBuf {
        self.root.join(format!("series_{name}.csv"))
    }

    /// Write the resolved configuration; done before anything is computed.
    pub fn write_config(&self, specs: &[ExperimentSpec]) -> Result<()> {
        write_json(&self.config(), &ConfigFile::new(specs.to_vec()))
    }

    pub fn write_outputs<R: Serialize>(
        &self,
        specs: &[ExperimentSpec],
        outputs: &[ExperimentOutput],
        report: &R,
    ) -> Result<()> {
        for (s, o) in specs.iter().zip(outputs) {
            write_series_csv(&self.series(&s.name), &o.rows)?;
        }
        write_json(&self.report(), report)
    }
}
