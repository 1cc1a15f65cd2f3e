//! Quenched disorder in the cycle period `tau`.
//!
//! Four densities are supported. The weak-disorder envelopes expand
//! `lambda(tau)` and `phi(tau)` to first order in `zeta = tau/tau0 - 1`, so
//! the disorder average of `exp(phi - lambda t)` becomes the moment
//! generating function of `zeta` evaluated at `B tau0` with
//! `B = (phi' - t lambda') / tau0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_panels, Tolerance};
use crate::spectral::{critical_constant, leading_eigenvalue, phi_from_lambda, AsymptoticCoeffs, EnsembleParams};

pub const MAX_REJECTIONS: usize = 1_000_000;

/// Fraction of `tau0^3 / Delta^2` up to which the first-order (in `zeta`)
/// expansion is trusted for the Gaussian, Laplacian and uniform envelopes.
pub const WEAK_DISORDER_FACTOR: f64 = 0.01;
/// Fraction of `tau0^2 / Delta` up to which the Lorentzian envelope is trusted.
pub const LORENTZIAN_WINDOW_FACTOR: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisorderKind {
    Gaussian,
    Lorentzian,
    Laplacian,
    Uniform,
}

impl DisorderKind {
    pub const ALL: [DisorderKind; 4] = [
        DisorderKind::Gaussian,
        DisorderKind::Lorentzian,
        DisorderKind::Laplacian,
        DisorderKind::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DisorderKind::Gaussian => "gaussian",
            DisorderKind::Lorentzian => "lorentzian",
            DisorderKind::Laplacian => "laplacian",
            DisorderKind::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for DisorderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DisorderKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown disorder kind '{s}'")))
    }
}

impl std::fmt::Display for DisorderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Distribution of `tau` with centre `tau0` and width `delta`; `delta = 0` is homogeneous.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub kind: DisorderKind,
    pub tau0: f64,
    pub delta: f64,
}

impl DisorderSpec {
    pub fn new(kind: DisorderKind, tau0: f64, delta: f64) -> Result<Self> {
        let s = DisorderSpec { kind, tau0, delta };
        s.validate()?;
        Ok(s)
    }

    pub fn homogeneous(tau0: f64) -> Self {
        DisorderSpec {
            kind: DisorderKind::Gaussian,
            tau0,
            delta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau0 must be positive, got {}", self.tau0)));
        }
        if !(self.delta >= 0.0 && self.delta <= self.tau0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in [0, tau0], got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Probability that an unrestricted draw is positive.
    pub fn positive_mass(&self) -> f64 {
        let (t0, d) = (self.tau0, self.delta);
        if d == 0.0 {
            return 1.0;
        }
        match self.kind {
            DisorderKind::Gaussian => 0.5 * erfc(-t0 / (d * std::f64::consts::SQRT_2)),
            DisorderKind::Lorentzian => 0.5 + (t0 / d).atan() / PI,
            DisorderKind::Laplacian => 1.0 - 0.5 * (-t0 / d).exp(),
            DisorderKind::Uniform => 1.0,
        }
    }
}

/// Density `g(tau)` on the whole real line (not renormalised to `tau > 0`).
pub fn dpd_density(spec: &DisorderSpec, tau: f64) -> f64 {
    let (t0, d) = (spec.tau0, spec.delta);
    if d == 0.0 {
        return if tau == t0 { f64::INFINITY } else { 0.0 };
    }
    let z = tau - t0;
    match spec.kind {
        DisorderKind::Gaussian => (-z * z / (2.0 * d * d)).exp() / ((2.0 * PI).sqrt() * d),
        DisorderKind::Lorentzian => d / (PI * (z * z + d * d)),
        DisorderKind::Laplacian => (-z.abs() / d).exp() / (2.0 * d),
        DisorderKind::Uniform => {
            if z.abs() <= d {
                1.0 / (2.0 * d)
            } else {
                0.0
            }
        }
    }
}

/// Draw one `tau > 0`, rejecting non-positive draws.
pub fn dpd_sample<R: Rng + ?Sized>(spec: &DisorderSpec, rng: &mut R) -> Result<f64> {
    let (t0, d) = (spec.tau0, spec.delta);
    if d == 0.0 {
        return Ok(t0);
    }
    for _ in 0..=MAX_REJECTIONS {
        let tau = match spec.kind {
            DisorderKind::Gaussian => {
                let n: f64 = StandardNormal.sample(rng);
                t0 + d * n
            }
            DisorderKind::Lorentzian => t0 + d * (PI * (rng.gen::<f64>() - 0.5)).tan(),
            DisorderKind::Laplacian => {
                let u: f64 = rng.gen::<f64>() - 0.5;
                t0 - d * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            DisorderKind::Uniform => t0 + d * (2.0 * rng.gen::<f64>() - 1.0),
        };
        if tau > 0.0 && tau.is_finite() {
            return Ok(tau);
        }
    }
    Err(Error::RejectionCap(MAX_REJECTIONS))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    InsideWindow,
    OutsideWindow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    /// Factor multiplying `exp(phi - lambda t)`.
    pub value: Complex64,
    pub validity: Validity,
}

/// End of the validity window of the closed-form envelope, where one is defined by a time scale.
pub fn validity_horizon(spec: &DisorderSpec) -> f64 {
    let (t0, d) = (spec.tau0, spec.delta);
    if d == 0.0 {
        return f64::INFINITY;
    }
    match spec.kind {
        DisorderKind::Lorentzian => LORENTZIAN_WINDOW_FACTOR * t0 * t0 / d,
        _ => WEAK_DISORDER_FACTOR * t0.powi(3) / (d * d),
    }
}

/// Closed-form weak-disorder envelope at time `t`.
pub fn envelope(spec: &DisorderSpec, t: f64, coeffs: &AsymptoticCoeffs) -> Result<EnvelopeResult> {
    let d = spec.delta;
    if d == 0.0 {
        return Ok(EnvelopeResult {
            value: Complex64::new(1.0, 0.0),
            validity: Validity::InsideWindow,
        });
    }
    let b = (coeffs.phi_prime - t * coeffs.lambda_prime) / spec.tau0;
    let db = d * b;
    let i = Complex64::new(0.0, 1.0);
    let mut inside = t <= validity_horizon(spec);
    let value = match spec.kind {
        DisorderKind::Gaussian => (db * db / 2.0).exp(),
        DisorderKind::Lorentzian => {
            // Characteristic function e^{-|s|} continued to complex s = -i d B,
            // taking the root with non-negative real part.
            if b.im <= 0.0 {
                (-i * db).exp()
            } else {
                (i * db).exp()
            }
        }
        DisorderKind::Laplacian => {
            let den = 1.0 - db * db;
            if den.norm() < 1e-10 {
                let tc = pole_time(spec, coeffs);
                return Err(Error::EnvelopeSingularity { time: tc });
            }
            // The moment generating function only exists while |Re(d B)| < 1.
            inside &= db.re.abs() < 1.0;
            1.0 / den
        }
        DisorderKind::Uniform => {
            inside &= db.re.abs() < 700.0;
            if db.norm() < 1e-4 {
                let z2 = db * db;
                1.0 + z2 / 6.0 + z2 * z2 / 120.0
            } else {
                db.sinh() / db
            }
        }
    };
    let finite = value.re.is_finite() && value.im.is_finite();
    Ok(EnvelopeResult {
        value,
        validity: if inside && finite {
            Validity::InsideWindow
        } else {
            Validity::OutsideWindow
        },
    })
}

/// Time at which `d B` is closest to `±1` (the Laplacian pole).
fn pole_time(spec: &DisorderSpec, c: &AsymptoticCoeffs) -> f64 {
    // d (phi' - t lambda') / tau0 = ±1  =>  t = (phi' ∓ tau0/d) / lambda'
    let cand = [1.0, -1.0].map(|s| ((c.phi_prime - s * spec.tau0 / spec.delta) / c.lambda_prime).re);
    cand.into_iter().filter(|t| *t >= 0.0).fold(f64::NAN, f64::min)
}

/// How the small-`epsilon` limit of the Gaussian envelope scales with `tau0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitScaling {
    /// `exp(-2 pi^2 Delta^2 t^2 / tau0^4)`, from expanding the envelope.
    Derived,
    /// `exp(-2 pi^2 Delta^2 t^2 / tau0^2)`, the form printed in the source text.
    Printed,
}

/// `epsilon -> 0` limit of `|envelope|` (or of the signed envelope for the uniform kind).
pub fn epsilon_zero_limit(spec: &DisorderSpec, t: f64, scaling: LimitScaling) -> f64 {
    let (t0, d) = (spec.tau0, spec.delta);
    let x = 2.0 * PI * d * t / (t0 * t0);
    match spec.kind {
        DisorderKind::Gaussian => match scaling {
            LimitScaling::Derived => (-x * x / 2.0).exp(),
            LimitScaling::Printed => (-2.0 * PI * PI * d * d * t * t / (t0 * t0)).exp(),
        },
        DisorderKind::Lorentzian => (-x).exp(),
        DisorderKind::Laplacian => 1.0 / (1.0 + x * x),
        DisorderKind::Uniform => {
            if x.abs() < 1e-8 {
                1.0
            } else {
                x.sin() / x
            }
        }
    }
}

/// Disorder-averaged `N_up(t) - 1/2` from the leading conjugate pair.
pub fn averaged_delta_n(spec: &DisorderSpec, t: f64, coeffs: &AsymptoticCoeffs) -> Result<f64> {
    let env = envelope(spec, t, coeffs)?;
    let base = (coeffs.phi0 - coeffs.lambda0 * t).exp();
    Ok(2.0 * (base * env.value).re)
}

/// Lower cut on `tau` used by the oracle, in units of `C/r`.
pub const ORACLE_TAU_CUT: f64 = 2.0;

/// Average of `exp(phi(tau) - lambda(tau) t)` over `g` restricted to `tau > 0`, by quadrature.
///
/// Periods below `2 C / r` are left out: there the leading pair is real or
/// about to merge and the single-mode amplitude is singular at `C / r`. Such
/// devices relax at rates of order `r`, so their weight only matters for
/// `t` of order `1/r`. The result is still normalised by the full `tau > 0`
/// mass.
pub fn numeric_disorder_average(spec: &DisorderSpec, t: f64, p0: &EnsembleParams) -> Result<Complex64> {
    spec.validate()?;
    let params = |tau: f64| p0.with_tau(tau);
    let integrand_tau = |tau: f64| -> Result<Complex64> {
        let p = params(tau);
        let lam = leading_eigenvalue(&p)?;
        let phi = phi_from_lambda(lam, &p)?;
        Ok((phi - lam * t).exp())
    };
    if spec.delta == 0.0 {
        return integrand_tau(spec.tau0);
    }

    let tau_lo = ORACLE_TAU_CUT * critical_constant() / p0.r;
    let (t0, d) = (spec.tau0, spec.delta);
    let (mut a, b) = match spec.kind {
        DisorderKind::Gaussian => (t0 - 12.0 * d, t0 + 12.0 * d),
        DisorderKind::Laplacian => (t0 - 40.0 * d, t0 + 40.0 * d),
        DisorderKind::Uniform => (t0 - d, t0 + d),
        DisorderKind::Lorentzian => (0.0, f64::INFINITY),
    };
    a = a.max(tau_lo);
    if !(b > a) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    // Short periods relax at rate ~ Re lambda; once Re lambda t > 60 they are negligible.
    if t > 0.0 {
        let dead = |tau: f64| leading_eigenvalue(&params(tau)).map(|l| l.re * t > 60.0);
        if dead(a)? {
            let mut lo = a;
            let mut hi = t0.min(b);
            if !dead(hi)? {
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if dead(mid)? {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                a = lo;
            }
        }
    }

    // Integrate in u = 1/tau, where the oscillation exp(2 pi i t u) has a fixed period.
    let (u_lo, u_hi) = (1.0 / b, 1.0 / a);
    let mut bp = vec![u_lo];
    let mut features = vec![1.0 / t0];
    if spec.kind == DisorderKind::Uniform {
        features.clear();
    }
    for f in features {
        if f > u_lo && f < u_hi {
            bp.push(f);
        }
    }
    bp.push(u_hi);
    // Half an oscillation per panel, and at least a few panels per density width.
    let width_u = d / (t0 * t0);
    let h = (0.5 / t.max(1e-12)).min(width_u / 2.0);
    let mut panels = Vec::new();
    for w in bp.windows(2) {
        let n = ((w[1] - w[0]) / h).ceil().clamp(1.0, 2e6) as usize;
        for i in 0..n {
            panels.push(w[0] + (w[1] - w[0]) * i as f64 / n as f64);
        }
    }
    panels.push(u_hi);

    let err = std::cell::Cell::new(None);
    let f = |u: f64| {
        let tau = 1.0 / u;
        match integrand_tau(tau) {
            Ok(v) => v * (dpd_density(spec, tau) / (u * u)),
            Err(e) => {
                err.set(Some(e.to_string()));
                Complex64::new(0.0, 0.0)
            }
        }
    };
    let res = integrate_panels(f, &panels, Tolerance { rel: 1e-9, abs: 1e-13 })?;
    if let Some(msg) = err.take() {
        return Err(Error::DegenerateParameters(format!("oracle integrand failed: {msg}")));
    }
    Ok(res.value / spec.positive_mass())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::tau_sensitivity;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn spec(kind: DisorderKind, tau0: f64, delta: f64) -> DisorderSpec {
        DisorderSpec::new(kind, tau0, delta).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(DisorderSpec::new(DisorderKind::Gaussian, 0.0, 0.0).is_err());
        assert!(DisorderSpec::new(DisorderKind::Gaussian, 1.0, 2.0).is_err());
        assert!(DisorderSpec::new(DisorderKind::Gaussian, 1.0, -0.1).is_err());
        assert_eq!("Lorentzian".parse::<DisorderKind>().unwrap(), DisorderKind::Lorentzian);
        assert!("cauchy".parse::<DisorderKind>().is_err());
    }

    #[test]
    fn density_examples() {
        assert_eq!(dpd_density(&spec(DisorderKind::Uniform, 3.0, 0.1), 3.0), 5.0);
        let g = spec(DisorderKind::Gaussian, 3.0, 0.1);
        assert!((dpd_density(&g, 3.0) - 1.0 / ((2.0 * PI).sqrt() * 0.1)).abs() < 1e-12);
        let l = spec(DisorderKind::Lorentzian, 3.0, 0.1);
        let peak = dpd_density(&l, 3.0);
        assert!((dpd_density(&l, 3.1) - peak / 2.0).abs() < 1e-12);
        assert!((dpd_density(&l, 2.9) - peak / 2.0).abs() < 1e-12);
    }

    #[test]
    fn densities_integrate_to_one() {
        for kind in DisorderKind::ALL {
            let s = spec(kind, 3.0, 0.1);
            let total = if kind == DisorderKind::Lorentzian {
                // Substitute tau = tau0 + delta tan(theta).
                let f = |th: f64| Complex64::new(dpd_density(&s, 3.0 + 0.1 * th.tan()) * 0.1 / th.cos().powi(2), 0.0);
                integrate_panels(f, &[-PI / 2.0 + 1e-12, 0.0, PI / 2.0 - 1e-12], Tolerance::default())
            } else {
                let f = |x: f64| Complex64::new(dpd_density(&s, x), 0.0);
                integrate_panels(f, &[-2.0, 2.9, 3.0, 3.1, 8.0], Tolerance { rel: 1e-12, abs: 1e-15 })
            }
            .unwrap();
            assert!((total.value.re - 1.0).abs() < 1e-8, "{kind}: {}", total.value.re);
        }
    }

    #[test]
    fn positive_mass_matches_closed_forms() {
        let g = spec(DisorderKind::Gaussian, 1.0, 1.0);
        assert!((g.positive_mass() - 0.841_344_746).abs() < 1e-6);
        let l = spec(DisorderKind::Lorentzian, 1.0, 1.0);
        assert!((l.positive_mass() - 0.75).abs() < 1e-15);
        let lp = spec(DisorderKind::Laplacian, 1.0, 1.0);
        assert!((lp.positive_mass() - (1.0 - 0.5 / std::f64::consts::E)).abs() < 1e-15);
    }

    #[test]
    fn sampler_examples() {
        let mut rng = StdRng::seed_from_u64(7);
        let h = DisorderSpec::homogeneous(3.0);
        assert_eq!(dpd_sample(&h, &mut rng).unwrap(), 3.0);
        let u = spec(DisorderKind::Uniform, 3.0, 0.1);
        for _ in 0..10_000 {
            let t = dpd_sample(&u, &mut rng).unwrap();
            assert!((2.9..=3.1).contains(&t));
        }
        let g = spec(DisorderKind::Gaussian, 3.0, 0.1);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| dpd_sample(&g, &mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 3.0).abs() < 1e-3 && (sd - 0.1).abs() < 1e-3);
    }

    #[test]
    fn samplers_pass_chi_square() {
        // 40 equal-width bins over the central region plus the two tails; 41 dof,
        // 99.9% quantile is about 74.7.
        let mut rng = StdRng::seed_from_u64(11);
        for kind in DisorderKind::ALL {
            let s = spec(kind, 1.0, 0.8);
            let n = 1_000_000usize;
            let (lo, hi) = (-1.0, 3.0);
            let bins = 40;
            let mut counts = vec![0usize; bins + 2];
            for _ in 0..n {
                let t = dpd_sample(&s, &mut rng).unwrap();
                let idx = if t < lo {
                    0
                } else if t >= hi {
                    bins + 1
                } else {
                    1 + ((t - lo) / (hi - lo) * bins as f64) as usize
                };
                counts[idx] += 1;
            }
            let edges: Vec<f64> = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
            let mass = s.positive_mass();
            let cell = |a: f64, b: f64| {
                let (a, b) = (a.max(0.0), b.max(0.0));
                if b <= a {
                    return 0.0;
                }
                integrate_panels(|x| Complex64::new(dpd_density(&s, x), 0.0), &[a, 1.0f64.clamp(a, b), b], Tolerance::default())
                    .unwrap()
                    .value
                    .re
                    / mass
            };
            let mut probs: Vec<f64> = vec![0.0];
            probs.extend(edges.windows(2).map(|w| cell(w[0], w[1])));
            let inner: f64 = probs.iter().sum();
            probs.push(1.0 - inner);
            let chi2: f64 = counts
                .iter()
                .zip(&probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(c, p)| {
                    let e = p * n as f64;
                    (*c as f64 - e).powi(2) / e
                })
                .sum();
            assert!(chi2 < 74.7, "{kind}: chi2 = {chi2}");
            assert_eq!(counts[0], 0);
        }
    }

    fn fig1_coeffs() -> (EnsembleParams, AsymptoticCoeffs) {
        let p = EnsembleParams::new(3.0, 100.0, -1.0, 1.0).unwrap();
        let c = tau_sensitivity(&p).unwrap();
        (p, c)
    }

    #[test]
    fn homogeneous_envelope_is_one() {
        let (_, c) = fig1_coeffs();
        for kind in DisorderKind::ALL {
            let s = spec(kind, 3.0, 0.0);
            for &t in &[0.0, 1.0, 100.0] {
                assert_eq!(envelope(&s, t, &c).unwrap().value, Complex64::new(1.0, 0.0));
            }
        }
    }

    #[test]
    fn envelopes_approach_their_small_epsilon_limits() {
        // r tau0 = 3e5 makes epsilon corrections negligible.
        let p = EnsembleParams::new(3.0, 1e5, -1.0, 1.0).unwrap();
        let c = tau_sensitivity(&p).unwrap();
        for kind in DisorderKind::ALL {
            let s = spec(kind, 3.0, 0.1);
            for &t in &[1.0, 5.0, 12.0] {
                let env = envelope(&s, t, &c).unwrap().value;
                let lim = epsilon_zero_limit(&s, t, LimitScaling::Derived);
                let got = if kind == DisorderKind::Uniform { env.re } else { env.norm() };
                assert!((got - lim).abs() < 1e-3 * lim.abs().max(1e-3), "{kind} t={t}: {got} vs {lim}");
            }
        }
    }

    #[test]
    fn laplacian_pole_is_reported() {
        let (_, mut c) = fig1_coeffs();
        // Make B real so the pole is reachable.
        c.phi_prime = Complex64::new(0.0, 0.0);
        c.lambda_prime = Complex64::new(-1.0, 0.0);
        let s = spec(DisorderKind::Laplacian, 3.0, 0.1);
        match envelope(&s, 30.0, &c) {
            Err(Error::EnvelopeSingularity { time }) => assert!((time - 30.0).abs() < 1e-9),
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn uniform_series_branch_is_continuous() {
        let (_, c) = fig1_coeffs();
        let s = spec(DisorderKind::Uniform, 3.0, 1e-7);
        let v = envelope(&s, 1.0, &c).unwrap().value;
        assert!((v - 1.0).norm() < 1e-12);
    }

    #[test]
    fn homogeneous_average_reduces_to_two_mode_theory() {
        let (p, c) = fig1_coeffs();
        let s = DisorderSpec::homogeneous(3.0);
        for &t in &[0.0, 2.5, 40.0] {
            let a = averaged_delta_n(&s, t, &c).unwrap();
            let b = crate::spectral::theory_delta_n(t, &p, &crate::spectral::InitialCondition::DeltaAtLowerBoundary, 2)
                .unwrap();
            assert!((a - b).abs() < 1e-12, "t={t}: {a} vs {b}");
            let o = numeric_disorder_average(&s, t, &p).unwrap();
            assert!((2.0 * o.re - a).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_envelope_matches_oracle_in_window() {
        let (p, c) = fig1_coeffs();
        let s = spec(DisorderKind::Gaussian, 3.0, 0.1);
        for &t in &[3.0, 10.0, 25.0] {
            let o = numeric_disorder_average(&s, t, &p).unwrap();
            let e = (c.phi0 - c.lambda0 * t).exp() * envelope(&s, t, &c).unwrap().value;
            assert!((o.norm() - e.norm()).abs() < 0.05 * o.norm(), "t={t}: {o} vs {e}");
        }
    }
}
