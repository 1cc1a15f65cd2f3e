use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use tclmix::disorder::{envelope, numeric_disorder_average, validity_horizon};
use tclmix::harness::{
    fig1_specs, fig3_specs, run_experiment, series_rows, summarize_tails, write_series_csv, ComparisonReport,
    ComparisonSet, ExperimentOutput, ExperimentSpec, RunDir, Theory,
};
use tclmix::particle_sim::run;
use tclmix::spectral::{
    bifurcation_sweep, classify_regime, leading_modes, modes_up_to, spectral_residual, splitting_fit,
    tau_sensitivity,
};
use tclmix::{DisorderKind, DisorderSpec, EnsembleParams, Validity};

use crate::{config, BifurcationArgs, Command, CompareArgs, EnvelopeArgs, PresetArgs, SimulateArgs, SpectrumArgs, UsageError};

/// Marked points of the beta sweep.
const BETA_MARKERS: [f64; 4] = [0.2, 0.3, 1.0, 5.0];

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Spectrum(a) => spectrum(a),
        Command::Bifurcation(a) => bifurcation(a),
        Command::Envelope(a) => envelope_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
        Command::Fig1(a) => fig1(a),
        Command::Fig3(a) => fig3(a),
    }
}

fn echo<T: Serialize>(what: &str, value: &T) -> Result<()> {
    eprintln!("{what} {}", serde_json::to_string(value)?);
    Ok(())
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn csv_out(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn regime_name(p: &EnsembleParams) -> Result<String> {
    Ok(serde_json::to_value(classify_regime(p))?
        .as_str()
        .unwrap_or_default()
        .to_string())
}

fn spectrum(a: SpectrumArgs) -> Result<()> {
    echo("config", &a)?;
    if a.kmax < 0 {
        return Err(usage("--kmax must be non-negative"));
    }
    let mut w = csv_out(a.out.as_deref())?;
    if !a.beta_sweep {
        let p = EnsembleParams::new(a.tau, a.r, -1.0, 1.0)?;
        let regime = regime_name(&p)?;
        w.write_record(["k", "sign", "re", "im", "residual", "beta", "regime"])?;
        for m in modes_up_to(&p, a.kmax)?.into_iter().filter(|m| m.k.0.abs() <= a.kmax) {
            let res = spectral_residual(m.lambda, m.sign, &p).norm();
            w.write_record([
                m.k.0.to_string(),
                m.sign.symbol().to_string(),
                m.lambda.re.to_string(),
                m.lambda.im.to_string(),
                res.to_string(),
                p.beta().to_string(),
                regime.clone(),
            ])?;
        }
        w.flush()?;
        eprintln!("beta = {} regime = {regime}", p.beta());
        return Ok(());
    }

    if !(a.beta_min > 0.0 && a.beta_max > a.beta_min && a.steps >= 2) {
        return Err(usage("need 0 < --beta-min < --beta-max and --steps >= 2"));
    }
    let ratio = (a.beta_max / a.beta_min).ln();
    let mut betas: Vec<f64> = (0..a.steps)
        .map(|i| a.beta_min * (ratio * i as f64 / (a.steps - 1) as f64).exp())
        .chain(BETA_MARKERS.into_iter().filter(|b| (a.beta_min..=a.beta_max).contains(b)))
        .collect();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    w.write_record(["beta", "rank", "k", "sign", "re", "im", "regime", "marker"])?;
    for beta in betas {
        let p = EnsembleParams::new(4.0 * beta / a.r, a.r, -1.0, 1.0)?;
        let regime = regime_name(&p)?;
        let marker = BETA_MARKERS.contains(&beta);
        for (rank, m) in leading_modes(&p, 4)?.into_iter().enumerate() {
            w.write_record([
                beta.to_string(),
                rank.to_string(),
                m.k.0.to_string(),
                m.sign.symbol().to_string(),
                m.lambda.re.to_string(),
                m.lambda.im.to_string(),
                regime.clone(),
                marker.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn bifurcation(a: BifurcationArgs) -> Result<()> {
    echo("config", &a)?;
    let sweep = bifurcation_sweep(a.r, a.tau_min, a.tau_max, a.steps)?;
    let mut w = csv_out(a.out.as_deref())?;
    w.write_record(["tau", "r_tau", "re", "im"])?;
    for (tau, l) in sweep.taus.iter().zip(&sweep.lambda0) {
        w.write_record([tau.to_string(), (a.r * tau).to_string(), l.re.to_string(), l.im.to_string()])?;
    }
    w.flush()?;
    eprintln!("argmax_tau = {} (grid step {})", sweep.argmax_tau, sweep.grid_step);
    eprintln!("C estimate = {}", sweep.c_estimate());
    match sweep.beta_c_estimate() {
        Some(b) => eprintln!("beta_c estimate = {b}"),
        None => eprintln!("beta_c estimate = none (no real-to-complex transition in range)"),
    }
    if let Ok(fit) = splitting_fit(a.r, 1e-6, 1e-3, 20) {
        eprintln!("splitting exponent = {} +/- {}", fit.slope, fit.slope_ci95());
    }
    Ok(())
}

fn envelope_cmd(a: EnvelopeArgs) -> Result<()> {
    echo("config", &a)?;
    let kinds: Vec<DisorderKind> = if a.kind.eq_ignore_ascii_case("all") {
        DisorderKind::ALL.to_vec()
    } else {
        vec![a.kind.parse()?]
    };
    if a.points < 2 || !(a.t_end > 0.0) {
        return Err(usage("need --points >= 2 and --t-end > 0"));
    }
    let p0 = EnsembleParams::new(a.tau0, a.r, -1.0, 1.0)?;
    let coeffs = tau_sensitivity(&p0)?;
    let base = |t: f64| (coeffs.phi0 - coeffs.lambda0 * t).exp();
    let mut w = csv_out(a.out.as_deref())?;
    let mut header = vec!["kind", "time", "envelope", "amplitude", "inside_window"];
    if a.oracle {
        header.extend(["oracle", "oracle_amplitude"]);
    }
    w.write_record(&header)?;
    let mut summary = Vec::new();
    for kind in kinds {
        let spec = DisorderSpec::new(kind, a.tau0, a.delta)?;
        let mut mags = Vec::with_capacity(a.points);
        for i in 0..a.points {
            let t = a.t_end * i as f64 / (a.points - 1) as f64;
            let env = envelope(&spec, t, &coeffs)?;
            let b = base(t);
            mags.push((t, env.value.norm()));
            let mut row = vec![
                kind.name().to_string(),
                t.to_string(),
                env.value.norm().to_string(),
                (2.0 * (b * env.value).norm()).to_string(),
                (env.validity == Validity::InsideWindow).to_string(),
            ];
            if a.oracle {
                let o = numeric_disorder_average(&spec, t, &p0)?;
                row.push((o.norm() / b.norm()).to_string());
                row.push((2.0 * o.norm()).to_string());
            }
            w.write_record(&row)?;
        }
        summary.push((kind, validity_horizon(&spec), decay_time(&mags)));
    }
    w.flush()?;
    for (kind, horizon, decay) in &summary {
        let decay = if decay.is_finite() { format!("{decay}") } else { "beyond t-end".into() };
        eprintln!("{kind}: validity horizon t = {horizon}, |envelope| stays below {DECAY_LEVEL} from t = {decay}");
    }
    summary.sort_by(|x, y| x.2.total_cmp(&y.2));
    let order: Vec<&str> = summary.iter().map(|s| s.0.name()).collect();
    eprintln!("decay hierarchy (fastest first): {}", order.join(" > "));
    Ok(())
}

/// Envelope level used to rank decay speed.
const DECAY_LEVEL: f64 = 0.01;

/// First sampled time after which `|envelope|` never again exceeds `DECAY_LEVEL`.
fn decay_time(mags: &[(f64, f64)]) -> f64 {
    let mut t_cross = f64::INFINITY;
    for &(t, m) in mags.iter().rev() {
        if m >= DECAY_LEVEL {
            break;
        }
        t_cross = t;
    }
    t_cross
}

fn prepare(out: &Path, specs: &[ExperimentSpec]) -> Result<RunDir> {
    let dir = RunDir::create(out)?;
    dir.write_config(specs)?;
    echo("config", &specs)?;
    Ok(dir)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let spec = config::spec("simulate", &a.sim)?;
    let dir = prepare(&a.out, std::slice::from_ref(&spec))?;
    let sim = spec.sim.as_ref().expect("resolved spec has a simulation");
    let series = run(sim)?;
    let theory = Theory::new(&spec, sim.t_end).ok();
    let rows = series_rows(&series, theory.as_ref())?;
    let path = dir.series(&spec.name);
    write_series_csv(&path, &rows)?;
    println!("wrote {} ({} records)", path.display(), rows.len());
    println!("config digest {} seed {}", series.config_digest, series.seed);
    Ok(())
}

fn print_report(r: &ComparisonReport) {
    println!(
        "{}: envelope error {:.4}, frequency error {:.4} (bin {:.4}), noise floor {:.3e}, window [{:.3}, {:.3}]",
        r.name,
        r.max_rel_envelope_error,
        r.frequency_error,
        r.frequency_bin,
        r.noise_floor_estimate,
        r.window.0,
        r.window.1
    );
    for (kind, fit) in &r.tail_slope_fits {
        println!("  {kind} tail slope {:.3} +/- {:.3}", fit.slope, fit.slope_ci95());
    }
}

fn run_all(specs: &[ExperimentSpec]) -> Result<Vec<ExperimentOutput>> {
    specs
        .iter()
        .map(|s| run_experiment(s).with_context(|| format!("experiment '{}'", s.name)))
        .collect()
}

fn compare(a: CompareArgs) -> Result<()> {
    let specs = vec![config::spec("compare", &a.sim)?];
    let dir = prepare(&a.out, &specs)?;
    let outs = run_all(&specs)?;
    let reports: Vec<ComparisonReport> = outs.iter().map(|o| o.report.clone()).collect();
    dir.write_outputs(&specs, &outs, &ComparisonSet { reports: reports.clone() })?;
    reports.iter().for_each(print_report);
    Ok(())
}

fn fig1(a: PresetArgs) -> Result<()> {
    let specs = fig1_specs(a.n, a.seed)?;
    let dir = prepare(&a.out, &specs)?;
    let outs = run_all(&specs)?;
    let report = summarize_tails(&specs, &outs)?;
    dir.write_outputs(&specs, &outs, &report)?;
    for k in &report.kinds {
        let ll = k.log_log.map(|f| format!("{:.3}", f.slope)).unwrap_or_else(|| "n/a".into());
        let r2 = k.semi_log.map(|f| format!("{:.4}", f.r_squared)).unwrap_or_else(|| "n/a".into());
        let decay = k.decay_time.map(|t| format!("{t:.1}")).unwrap_or_else(|| "not reached".into());
        println!(
            "{}: decay time {decay}, log-log slope {ll}, semilog R^2 {r2}, window [{:.1}, {:.1}]",
            k.kind, k.tail_window.0, k.tail_window.1
        );
    }
    let order: Vec<&str> = report.hierarchy.iter().map(|k| k.name()).collect();
    println!("decay hierarchy (fastest first): {}", order.join(" > "));
    Ok(())
}

fn fig3(a: PresetArgs) -> Result<()> {
    let specs = fig3_specs(a.n, a.seed)?;
    let dir = prepare(&a.out, &specs)?;
    let outs = run_all(&specs)?;
    let reports: Vec<ComparisonReport> = outs.iter().map(|o| o.report.clone()).collect();
    dir.write_outputs(&specs, &outs, &ComparisonSet { reports: reports.clone() })?;
    reports.iter().for_each(print_report);
    Ok(())
}
