//! Exact spectral solution of the two-state transport/switching model.
//!
//! Every eigenvalue is `lambda = (r/2)(1 - W_k(±beta e^beta)/beta)` with
//! `beta = r tau / 4`. Writing `s = lambda tau / 2` the spectral equation
//! reads `1 - s/beta = ±e^s`, which is what the Newton polish below solves.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{log_log_fit, LinearFit};
use crate::lambert_w::{lambert_w, lambert_w_log, BranchIndex, LogArgument, Sign, INV_E};
use crate::quadrature::{integrate_panels, QuadResult, Tolerance};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Homogeneous model parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    /// Full cycle period.
    pub tau: f64,
    /// Poisson switching rate outside the band.
    pub r: f64,
    pub x_down: f64,
    pub x_up: f64,
}

impl EnsembleParams {
    pub fn new(tau: f64, r: f64, x_down: f64, x_up: f64) -> Result<Self> {
        let p = EnsembleParams { tau, r, x_down, x_up };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_allow_zero_rate()?;
        if self.r == 0.0 {
            return Err(Error::InvalidParameter("r must be positive, got 0".into()));
        }
        Ok(())
    }

    /// As [`validate`](Self::validate) but accepting `r = 0` (no switching).
    pub fn validate_allow_zero_rate(&self) -> Result<()> {
        let finite = [self.tau, self.r, self.x_down, self.x_up].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("ensemble parameters must be finite".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.r >= 0.0) {
            return Err(Error::InvalidParameter(format!("r must be non-negative, got {}", self.r)));
        }
        if !(self.x_down < self.x_up) {
            return Err(Error::InvalidParameter(format!(
                "need x_down < x_up, got {} and {}",
                self.x_down, self.x_up
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_up - self.x_down
    }

    /// Transport speed `u = 2 (x_up - x_down) / tau`.
    pub fn velocity(&self) -> f64 {
        2.0 * self.width() / self.tau
    }

    pub fn beta(&self) -> f64 {
        self.r * self.tau / 4.0
    }

    /// `1/u`, the factor that turns rates into inverse lengths.
    fn a(&self) -> f64 {
        self.tau / (2.0 * self.width())
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        EnsembleParams { tau, ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralMode {
    pub k: BranchIndex,
    pub sign: Sign,
    pub lambda: Complex64,
}

impl SpectralMode {
    pub fn new(k: i32, sign: Sign, p: &EnsembleParams) -> Result<Self> {
        let lambda = eigenvalue(BranchIndex(k), sign, p)?;
        Ok(SpectralMode {
            k: BranchIndex(k),
            sign,
            lambda,
        })
    }

    pub fn is_stationary(&self) -> bool {
        self.k.0 == 0 && self.sign == Sign::Plus
    }
}

/// A point `(x, sigma)` of the hybrid phase space; `sigma = +` is "on".
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpacePoint {
    pub x: f64,
    pub sigma: Sign,
}

/// Value of a two-component function `(on, off)` at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TwoVector {
    pub up: Complex64,
    pub down: Complex64,
}

impl TwoVector {
    pub fn new(up: Complex64, down: Complex64) -> Self {
        TwoVector { up, down }
    }

    pub fn real(up: f64, down: f64) -> Self {
        TwoVector {
            up: Complex64::new(up, 0.0),
            down: Complex64::new(down, 0.0),
        }
    }

    pub fn scale(self, c: Complex64) -> Self {
        TwoVector {
            up: self.up * c,
            down: self.down * c,
        }
    }

    /// `conj(self) . other`.
    pub fn dot(self, other: TwoVector) -> Complex64 {
        self.up.conj() * other.up + self.down.conj() * other.down
    }

    pub fn is_finite(&self) -> bool {
        [self.up.re, self.up.im, self.down.re, self.down.im]
            .iter()
            .all(|v| v.is_finite())
    }
}

impl std::ops::Add for TwoVector {
    type Output = TwoVector;
    fn add(self, o: TwoVector) -> TwoVector {
        TwoVector {
            up: self.up + o.up,
            down: self.down + o.down,
        }
    }
}

/// A profile sampled on an increasing x-grid, linearly interpolated and zero outside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub x: Vec<f64>,
    pub values: Vec<TwoVector>,
}

impl Profile {
    pub fn new(x: Vec<f64>, values: Vec<TwoVector>) -> Result<Self> {
        if x.len() != values.len() || x.len() < 2 {
            return Err(Error::InvalidParameter(
                "profile needs at least two samples and matching lengths".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("profile grid must be strictly increasing".into()));
        }
        Ok(Profile { x, values })
    }

    pub fn eval(&self, x: f64) -> TwoVector {
        let n = self.x.len();
        if x < self.x[0] || x > self.x[n - 1] {
            return TwoVector::default();
        }
        let i = match self.x.partition_point(|v| *v <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        };
        let t = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
        let (a, b) = (self.values[i], self.values[i + 1]);
        TwoVector {
            up: a.up + (b.up - a.up) * t,
            down: a.down + (b.down - a.down) * t,
        }
    }

    /// Total mass of the interpolant, `int (P_up + P_down) dx`.
    pub fn mass(&self) -> Complex64 {
        self.x
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0].up + v[0].down + v[1].up + v[1].down))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    /// Every device on, sitting at the lower threshold.
    DeltaAtLowerBoundary,
    Tabulated(Profile),
}

impl InitialCondition {
    /// A tabulated condition; its mass must be 1.
    pub fn tabulated(profile: Profile) -> Result<Self> {
        let m = profile.mass();
        if (m - 1.0).norm() > 1e-6 {
            return Err(Error::InvalidParameter(format!("initial profile has mass {m}, expected 1")));
        }
        Ok(InitialCondition::Tabulated(profile))
    }
}

/// Values and tau-log-derivatives of the leading eigenvalue and amplitude phase at `tau0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCoeffs {
    pub lambda0: Complex64,
    pub lambda_prime: Complex64,
    pub phi0: Complex64,
    pub phi_prime: Complex64,
    pub epsilon: f64,
    pub tau0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    OscillatoryDecay,
    PureRelaxation,
    Critical,
}

/// `W_0(1/e)`, the value of `beta` where the two slowest modes merge.
pub fn beta_critical() -> f64 {
    static BC: OnceLock<f64> = OnceLock::new();
    *BC.get_or_init(|| {
        lambert_w(BranchIndex(0), Complex64::new(INV_E, 0.0))
            .expect("W_0(1/e) converges")
            .re
    })
}

/// `C = 4 W_0(1/e)`, the critical value of `r tau`.
pub fn critical_constant() -> f64 {
    4.0 * beta_critical()
}

/// `r - 2 lambda ∓ r e^{lambda tau / 2}`.
pub fn spectral_residual(lambda: Complex64, sign: Sign, p: &EnsembleParams) -> Complex64 {
    p.r - 2.0 * lambda - sign.value() * p.r * (lambda * p.tau / 2.0).exp()
}

/// `lambda_{k;sign}` for the given parameters.
pub fn eigenvalue(k: BranchIndex, sign: Sign, p: &EnsembleParams) -> Result<Complex64> {
    p.validate()?;
    if k.0 == 0 && sign == Sign::Plus {
        return Ok(ZERO);
    }
    let beta = p.beta();
    let w = lambert_w_log(k, LogArgument::beta_exp_beta(sign, beta)).map_err(|e| Error::Eigenvalue {
        branch: k.0,
        sign,
        beta,
        source: Box::new(e),
    })?;
    let s = polish(beta - w, beta, sign);
    Ok(2.0 * s / p.tau)
}

/// Newton on `g(s) = 1 - s/beta ∓ e^s`, keeping a step only when it lowers `|g|`.
fn polish(mut s: Complex64, beta: f64, sign: Sign) -> Complex64 {
    let sg = sign.value();
    let g = |s: Complex64| 1.0 - s / beta - sg * s.exp();
    let mut gs = g(s).norm();
    for _ in 0..3 {
        let dg = -1.0 / beta - sg * s.exp();
        let next = s - g(s) / dg;
        let gn = g(next).norm();
        if !(gn < gs) {
            break;
        }
        s = next;
        gs = gn;
    }
    s
}

/// `lambda_{0;-}`, the slowest decaying non-stationary mode.
pub fn leading_eigenvalue(p: &EnsembleParams) -> Result<Complex64> {
    eigenvalue(BranchIndex(0), Sign::Minus, p)
}

/// The conjugate partner of `(k, sign)`: `(-1-k, -)` or `(-k, +)`.
pub fn conjugate_partner(k: i32, sign: Sign) -> i32 {
    match sign {
        Sign::Minus => -1 - k,
        Sign::Plus => -k,
    }
}

fn check_nondegenerate(lambda: Complex64, p: &EnsembleParams) -> Result<Complex64> {
    let rho = p.r - 2.0 * lambda;
    if rho.norm() <= 1e-13 * p.r {
        return Err(Error::DegenerateMode(format!(
            "r - 2 lambda vanishes at lambda = {lambda}"
        )));
    }
    Ok(rho)
}

/// Right eigenfunction `xi_{k;±}(x)`.
pub fn eigenfunction(mode: &SpectralMode, p: &EnsembleParams, x: f64) -> Result<TwoVector> {
    let lam = mode.lambda;
    let rho = check_nondegenerate(lam, p)?;
    let (r, a, xd, xu) = (p.r, p.a(), p.x_down, p.x_up);
    Ok(if x < xd {
        let e = (a * x * (r - lam)).exp();
        TwoVector::new(e, r / rho * e)
    } else if x <= xu {
        TwoVector::new(
            (a * (r * xd - lam * x)).exp(),
            rho / r * (a * (r * xd + lam * (x - 2.0 * xu))).exp(),
        )
    } else {
        let f = (a * (lam - r) * x + a * (r * (xd + xu) - 2.0 * lam * xu)).exp();
        TwoVector::new(f, rho / r * f)
    })
}

/// Adjoint eigenfunction `xi†_{k;±}(x)`, normalised so `<xi†, xi> = 1`.
///
/// The off component left of the band carries `(r - 2 lambda*)^2 / r`;
/// without the `1/r` the function is neither continuous at `x_down` nor
/// annihilated by the adjoint operator.
pub fn adjoint_eigenfunction(mode: &SpectralMode, p: &EnsembleParams, x: f64) -> Result<TwoVector> {
    let mu = mode.lambda.conj();
    check_nondegenerate(mode.lambda, p)?;
    let (r, a, xd, xu, tau) = (p.r, p.a(), p.x_down, p.x_up, p.tau);
    let rho = r - 2.0 * mu;
    let denom = rho * tau + 4.0;
    if denom.norm() <= 1e-13 * (1.0 + rho.norm() * tau) {
        return Err(Error::DegenerateMode(format!(
            "adjoint normalisation vanishes at lambda = {}",
            mode.lambda
        )));
    }
    let pref = tau / (2.0 * p.width() * denom);
    let v = if x < xd {
        let e = (-a * (r * xd + mu * (x - 2.0 * xd))).exp();
        TwoVector::new(rho * e, rho * rho / r * e)
    } else if x <= xu {
        TwoVector::new(
            rho * (-a * (r * xd - mu * x)).exp(),
            r * (-a * (r * xd + mu * (x - 2.0 * xu))).exp(),
        )
    } else {
        let e = (-a * (r * xd - mu * x)).exp();
        TwoVector::new(rho * e, Complex64::new(r, 0.0) * e)
    };
    Ok(v.scale(pref))
}

/// `<g, f> = int conj(g) . f dx` over consecutive panels.
pub fn inner_product<G, F>(g: G, f: F, breakpoints: &[f64], tol: Tolerance) -> Result<QuadResult>
where
    G: Fn(f64) -> TwoVector,
    F: Fn(f64) -> TwoVector,
{
    integrate_panels(|x| g(x).dot(f(x)), breakpoints, tol)
}

const OVERLAP_TOL: Tolerance = Tolerance { rel: 1e-11, abs: 1e-15 };

/// `<xi†_left, xi_right>` by quadrature on the band split at `x_down` and `x_up`.
///
/// The tails are exponentials with rate `Re(r - lambda_1 - lambda_2)/u`;
/// the domain is cut where they have fallen below `1e-15` of their edge value.
pub fn mode_overlap(left: &SpectralMode, right: &SpectralMode, p: &EnsembleParams) -> Result<Complex64> {
    let gamma = p.a() * (p.r - left.lambda - right.lambda).re;
    if !(gamma > 0.0) {
        let worst = if left.lambda.re >= right.lambda.re { left } else { right };
        return Err(Error::NotNormalizable { lambda: worst.lambda });
    }
    let m = 36.0 / gamma;
    let bp = band_breakpoints(p, m);
    // Surface evaluation errors from inside the integrand.
    eigenfunction(right, p, p.x_down)?;
    adjoint_eigenfunction(left, p, p.x_down)?;
    let res = inner_product(
        |x| adjoint_eigenfunction(left, p, x).unwrap_or_default(),
        |x| eigenfunction(right, p, x).unwrap_or_default(),
        &bp,
        OVERLAP_TOL,
    )?;
    Ok(res.value)
}

/// Breakpoints `x_down - m, x_down, x_up, x_up + m`, with the tails cut into
/// unit-decay pieces so the adaptive rule starts from a sensible mesh.
fn band_breakpoints(p: &EnsembleParams, m: f64) -> Vec<f64> {
    let pieces = 6;
    let mut bp: Vec<f64> = (0..pieces)
        .map(|i| p.x_down - m * (1.0 - i as f64 / pieces as f64).powi(2))
        .collect();
    bp.push(p.x_down);
    bp.push(p.x_up);
    bp.extend((1..=pieces).map(|i| p.x_up + m * (i as f64 / pieces as f64).powi(2)));
    bp
}

/// Closed-form `(int xi_up dx, int (xi_up + xi_down) dx)` over the real line.
pub fn mode_integrals(mode: &SpectralMode, p: &EnsembleParams) -> Result<(Complex64, Complex64)> {
    let lam = mode.lambda;
    let rho = check_nondegenerate(lam, p)?;
    let (r, a, xd, xu) = (p.r, p.a(), p.x_down, p.x_up);
    if (r - lam).re <= 0.0 {
        return Err(Error::NotNormalizable { lambda: lam });
    }
    let base = (a * xd * (r - lam)).exp();
    let q = (-lam * p.tau / 2.0).exp();
    let tails = 1.0 / (a * (r - lam));
    // (1 - q)/(a lambda) -> L as lambda -> 0.
    let middle = if lam.norm() * p.tau < 1e-8 {
        Complex64::new(p.width(), 0.0) * (1.0 - lam * p.tau / 4.0)
    } else {
        (1.0 - q) / (a * lam)
    };
    let up = base * (tails * (1.0 + q) + middle);
    // Off component: left tail, band, right tail.
    let down_left = r / rho * base * tails;
    let down_mid = rho / r * (a * (r * xd - 2.0 * lam * xu)).exp() * {
        if lam.norm() * p.tau < 1e-8 {
            Complex64::new(p.width(), 0.0) * (a * lam * xd).exp()
        } else {
            ((a * lam * xu).exp() - (a * lam * xd).exp()) / (a * lam)
        }
    };
    let down_right = rho / r * base * q * tails;
    Ok((up, up + down_left + down_mid + down_right))
}

/// `a_{k;±} = <xi†_{k;±}, P_0>`.
pub fn projection_coefficient(
    mode: &SpectralMode,
    p: &EnsembleParams,
    init: &InitialCondition,
) -> Result<Complex64> {
    match init {
        InitialCondition::DeltaAtLowerBoundary => {
            Ok(adjoint_eigenfunction(mode, p, p.x_down)?.up.conj())
        }
        InitialCondition::Tabulated(profile) => {
            adjoint_eigenfunction(mode, p, p.x_down)?;
            let lo = profile.x[0];
            let hi = *profile.x.last().expect("profile has samples");
            let mut bp: Vec<f64> = profile.x.clone();
            for edge in [p.x_down, p.x_up] {
                if edge > lo && edge < hi {
                    bp.push(edge);
                }
            }
            bp.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
            bp.dedup();
            let res = inner_product(
                |x| adjoint_eigenfunction(mode, p, x).unwrap_or_default(),
                |x| profile.eval(x),
                &bp,
                Tolerance { rel: 1e-10, abs: 1e-14 },
            )?;
            Ok(res.value)
        }
    }
}

/// `phi` in `delta N_up(t) ~ exp(phi - lambda t)` for the delta initial condition.
pub fn worst_case_phi(p: &EnsembleParams) -> Result<Complex64> {
    let lam = leading_eigenvalue(p)?;
    phi_from_lambda(lam, p)
}

/// `phi` for a known leading eigenvalue.
pub fn phi_from_lambda(lam: Complex64, p: &EnsembleParams) -> Result<Complex64> {
    let r = p.r;
    let rho = r - 2.0 * lam;
    let denom = p.tau * rho + 4.0;
    let tiny = 1e-12 * r;
    if lam.norm() <= tiny || (r - lam).norm() <= tiny || denom.norm() <= 1e-12 {
        return Err(Error::DegenerateParameters(format!(
            "amplitude of the leading mode is singular at r={}, tau={} (lambda={lam})",
            p.r, p.tau
        )));
    }
    Ok((2.0 * r * rho / (lam * (r - lam) * denom)).ln())
}

pub fn classify_regime(p: &EnsembleParams) -> Regime {
    let rt = p.r * p.tau;
    let c = critical_constant();
    if (rt - c).abs() <= 1e-9 {
        Regime::Critical
    } else if rt > c {
        Regime::OscillatoryDecay
    } else {
        Regime::PureRelaxation
    }
}

/// Ordering key used by [`leading_modes`]: real part (rounded so conjugate
/// partners tie), then `|Im|`, then `-` before `+`, then larger `k` first.
fn mode_order(a: &SpectralMode, b: &SpectralMode, r: f64) -> Ordering {
    let key = |m: &SpectralMode| ((m.lambda.re / r * 1e11).round() as i64, (m.lambda.im.abs() / r * 1e11).round() as i64);
    let (ra, ia) = key(a);
    let (rb, ib) = key(b);
    ra.cmp(&rb)
        .then(ia.cmp(&ib))
        .then(a.sign.cmp(&b.sign))
        .then(b.k.cmp(&a.k))
}

fn sorted_modes(p: &EnsembleParams, signs: &[Sign], kmax: i32) -> Result<Vec<SpectralMode>> {
    let mut modes = Vec::new();
    for &sign in signs {
        for k in -kmax - 1..=kmax {
            if k == 0 && sign == Sign::Plus {
                continue;
            }
            modes.push(SpectralMode::new(k, sign, p)?);
        }
    }
    modes.sort_by(|a, b| mode_order(a, b, p.r));
    Ok(modes)
}

/// The `count` slowest non-stationary modes.
pub fn leading_modes(p: &EnsembleParams, count: usize) -> Result<Vec<SpectralMode>> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be at least 1".into()));
    }
    // Real parts grow monotonically in |k| on both families, so k in
    // [-count-1, count] always contains the first `count` modes.
    let mut modes = sorted_modes(p, &[Sign::Minus, Sign::Plus], count as i32 + 1)?;
    modes.truncate(count);
    Ok(modes)
}

/// All modes with `-kmax-1 <= k <= kmax`, both signs, stationary mode first.
///
/// The range is chosen so every mode's conjugate partner is included.
pub fn modes_up_to(p: &EnsembleParams, kmax: i32) -> Result<Vec<SpectralMode>> {
    let mut modes = vec![SpectralMode::new(0, Sign::Plus, p)?];
    modes.extend(sorted_modes(p, &[Sign::Minus, Sign::Plus], kmax)?);
    modes.retain(|m| m.sign == Sign::Minus || m.k.0 >= -kmax);
    Ok(modes)
}

/// `lambda' = tau d lambda / d tau` at the given parameters.
pub fn lambda_prime(lam: Complex64, p: &EnsembleParams) -> Result<Complex64> {
    let rho = p.r - 2.0 * lam;
    let denom = rho * p.tau + 4.0;
    if denom.norm() <= 1e-10 {
        return Err(Error::DegenerateParameters(format!(
            "tau-derivative of lambda diverges at r tau = {}",
            p.r * p.tau
        )));
    }
    Ok(-lam * rho * p.tau / denom)
}

/// Coefficients of the first-order expansion of `lambda` and `phi` in `tau/tau0 - 1`.
pub fn tau_sensitivity(p0: &EnsembleParams) -> Result<AsymptoticCoeffs> {
    if !(p0.r * p0.tau > critical_constant() + 1e-9) {
        return Err(Error::DegenerateParameters(format!(
            "tau sensitivity needs r tau above the critical value, got {}",
            p0.r * p0.tau
        )));
    }
    let lam = leading_eigenvalue(p0)?;
    let phi = phi_from_lambda(lam, p0)?;
    let lp = lambda_prime(lam, p0)?;
    let (r, tau) = (p0.r, p0.tau);
    let rho = r - 2.0 * lam;
    let denom = tau * rho + 4.0;
    let phi_prime = lp * (-2.0 / rho - 1.0 / lam + 1.0 / (r - lam)) - (tau * rho - 2.0 * tau * lp) / denom;
    Ok(AsymptoticCoeffs {
        lambda0: lam,
        lambda_prime: lp,
        phi0: phi,
        phi_prime,
        epsilon: 1.0 / (r * tau),
        tau0: tau,
    })
}

/// Truncated small-`epsilon` series for `(lambda tau0, lambda' tau0, phi, phi')`.
pub fn epsilon_series(eps: f64) -> [Complex64; 4] {
    let i = Complex64::new(0.0, 1.0);
    let pi2 = PI * PI;
    let e2 = eps * eps;
    let lam = -2.0 * i * PI * (1.0 - 4.0 * eps + 16.0 * e2) + 16.0 * pi2 * e2;
    let lam_p = 2.0 * i * PI * (1.0 - 8.0 * eps + 48.0 * e2) - 48.0 * pi2 * e2;
    let phi = -(-i * PI).ln() - 2.0 * PI * i * (eps - 8.0 * e2) - 2.0 * pi2 * e2;
    let phi_p = 2.0 * i * PI * (eps - 16.0 * e2) + 4.0 * pi2 * e2;
    [lam, lam_p, phi, phi_p]
}

/// Amplitude `a_k int xi_{up;k} dx` of a mode in the on-fraction.
pub fn on_fraction_weight(mode: &SpectralMode, p: &EnsembleParams, init: &InitialCondition) -> Result<Complex64> {
    let a = projection_coefficient(mode, p, init)?;
    let (up, _) = mode_integrals(mode, p)?;
    Ok(a * up)
}

/// `N_up(t) - 1/2` from the `mode_count` slowest `-` modes.
///
/// `+` modes carry no net on-fraction and are skipped.
pub fn theory_delta_n(t: f64, p: &EnsembleParams, init: &InitialCondition, mode_count: usize) -> Result<f64> {
    Ok(theory_delta_n_complex(t, p, init, mode_count)?.re)
}

/// As [`theory_delta_n`] but keeping the imaginary part, which vanishes for conjugate-complete sets.
pub fn theory_delta_n_complex(
    t: f64,
    p: &EnsembleParams,
    init: &InitialCondition,
    mode_count: usize,
) -> Result<Complex64> {
    let series = OnFractionSeries::new(p, init, mode_count)?;
    Ok(series.eval(t))
}

/// Precomputed `(lambda, weight)` pairs so the on-fraction can be evaluated on many times.
#[derive(Clone, Debug)]
pub struct OnFractionSeries {
    pub terms: Vec<(SpectralMode, Complex64)>,
}

impl OnFractionSeries {
    pub fn new(p: &EnsembleParams, init: &InitialCondition, mode_count: usize) -> Result<Self> {
        if mode_count == 0 {
            return Ok(OnFractionSeries { terms: Vec::new() });
        }
        let kmax = (mode_count as i32 + 1) / 2 + 1;
        let mut modes = sorted_modes(p, &[Sign::Minus], kmax)?;
        modes.truncate(mode_count);
        let terms = modes
            .into_iter()
            .map(|m| Ok((m, on_fraction_weight(&m, p, init)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(OnFractionSeries { terms })
    }

    /// All `-` modes with `-kmax-1 <= k <= kmax`.
    pub fn with_branches(p: &EnsembleParams, init: &InitialCondition, kmax: i32) -> Result<Self> {
        let modes = sorted_modes(p, &[Sign::Minus], kmax)?;
        let terms = modes
            .into_iter()
            .map(|m| Ok((m, on_fraction_weight(&m, p, init)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(OnFractionSeries { terms })
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        self.terms.iter().map(|(m, w)| w * (-m.lambda * t).exp()).sum()
    }
}

/// Truncated expansion `sum a xi e^{-lambda t}` over all modes with `|k| <= kmax` (plus conjugate partners).
pub fn pdf_reconstruction(
    x_grid: &[f64],
    t: f64,
    p: &EnsembleParams,
    init: &InitialCondition,
    kmax: i32,
) -> Result<Vec<TwoVector>> {
    let modes = modes_up_to(p, kmax.max(0))?;
    let mut out = vec![TwoVector::default(); x_grid.len()];
    for m in &modes {
        let c = projection_coefficient(m, p, init)? * (-m.lambda * t).exp();
        for (o, &x) in out.iter_mut().zip(x_grid) {
            *o = *o + eigenfunction(m, p, x)?.scale(c);
        }
    }
    Ok(out)
}

/// Result of a tau sweep of the leading eigenvalue at fixed `r`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BifurcationSweep {
    pub r: f64,
    pub taus: Vec<f64>,
    pub lambda0: Vec<Complex64>,
    /// Grid point maximising `Re lambda_{0;-}`.
    pub argmax_tau: f64,
    /// Midpoint of the grid interval where `lambda_{0;-}` leaves the real axis.
    pub transition_tau: Option<f64>,
    pub grid_step: f64,
}

impl BifurcationSweep {
    pub fn c_estimate(&self) -> f64 {
        self.r * self.argmax_tau
    }

    pub fn beta_c_estimate(&self) -> Option<f64> {
        self.transition_tau.map(|t| self.r * t / 4.0)
    }
}

/// Sweep `tau` uniformly over `[tau_min, tau_max]`.
pub fn bifurcation_sweep(r: f64, tau_min: f64, tau_max: f64, steps: usize) -> Result<BifurcationSweep> {
    if steps < 2 || !(tau_min > 0.0) || !(tau_max > tau_min) {
        return Err(Error::InvalidParameter(format!(
            "bad sweep: tau in [{tau_min}, {tau_max}] with {steps} steps"
        )));
    }
    let h = (tau_max - tau_min) / (steps - 1) as f64;
    let taus: Vec<f64> = (0..steps).map(|i| tau_min + h * i as f64).collect();
    let lambda0 = taus
        .iter()
        .map(|&tau| leading_eigenvalue(&EnsembleParams::new(tau, r, -1.0, 1.0)?))
        .collect::<Result<Vec<_>>>()?;
    let argmax = lambda0
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.re.partial_cmp(&b.1.re).unwrap_or(Ordering::Equal))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let is_real = |l: &Complex64| l.im.abs() <= 1e-9 * r;
    let transition_tau = lambda0
        .windows(2)
        .position(|w| is_real(&w[0]) && !is_real(&w[1]))
        .map(|i| 0.5 * (taus[i] + taus[i + 1]));
    let argmax_tau = taus[argmax];
    Ok(BifurcationSweep {
        r,
        taus,
        lambda0,
        argmax_tau,
        transition_tau,
        grid_step: h,
    })
}

/// Fit `|lambda_{-1;-} - lambda_{0;-}| ~ c (C - r tau)^gamma` on a log-spaced
/// set of distances below the critical point; returns the fit in log-log form.
pub fn splitting_fit(r: f64, min_gap: f64, max_gap: f64, points: usize) -> Result<LinearFit> {
    if points < 3 || !(min_gap > 0.0) || !(max_gap > min_gap) {
        return Err(Error::InvalidParameter("bad splitting-fit range".into()));
    }
    let c = critical_constant();
    let mut gaps = Vec::with_capacity(points);
    let mut split = Vec::with_capacity(points);
    for i in 0..points {
        let g = min_gap * (max_gap / min_gap).powf(i as f64 / (points - 1) as f64);
        let p = EnsembleParams::new((c - g) / r, r, -1.0, 1.0)?;
        let l0 = eigenvalue(BranchIndex(0), Sign::Minus, &p)?;
        let l1 = eigenvalue(BranchIndex(-1), Sign::Minus, &p)?;
        gaps.push(g);
        split.push((l1 - l0).norm());
    }
    log_log_fit(&gaps, &split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig3() -> EnsembleParams {
        EnsembleParams::new(3.0, 10.0, -1.0, 1.0).unwrap()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn params_validation() {
        assert!(EnsembleParams::new(0.0, 1.0, -1.0, 1.0).is_err());
        assert!(EnsembleParams::new(1.0, -1.0, -1.0, 1.0).is_err());
        assert!(EnsembleParams::new(1.0, 1.0, 1.0, 1.0).is_err());
        let p = fig3();
        assert_eq!(p.beta(), 7.5);
        assert!((p.velocity() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn critical_constant_value() {
        assert!((critical_constant() - 1.113_858_171_044_295).abs() < 1e-14);
        assert!((beta_critical() - 0.278_464_542_761_073_8).abs() < 1e-15);
    }

    #[test]
    fn stationary_eigenvalue_is_exactly_zero() {
        for &beta in &[0.05, 0.28, 1.0, 50.0] {
            let p = EnsembleParams::new(4.0 * beta, 1.0, -1.0, 1.0).unwrap();
            assert_eq!(eigenvalue(BranchIndex(0), Sign::Plus, &p).unwrap(), ZERO);
        }
    }

    #[test]
    fn residual_example() {
        let p = EnsembleParams::new(1.0, 1.0, -1.0, 1.0).unwrap();
        let v = spectral_residual(Complex64::new(1.0, 0.0), Sign::Plus, &p);
        assert!((v.re - (1.0 - 2.0 - 0.5f64.exp())).abs() < 1e-15);
        assert_eq!(v.im, 0.0);
    }

    // Values at r = 10, tau = 3 cross-checked with mpmath.
    #[test]
    fn fig3_eigenvalues() {
        let p = fig3();
        let l0 = leading_eigenvalue(&p).unwrap();
        assert!(close(l0, Complex64::new(0.038_50, -1.855_78), 1e-4), "{l0}");
        let l1p = eigenvalue(BranchIndex(1), Sign::Plus, &p).unwrap();
        assert!(close(l1p, Complex64::new(0.137_07, -3.750_79), 1e-4), "{l1p}");
        let l1m = eigenvalue(BranchIndex(1), Sign::Minus, &p).unwrap();
        assert!(close(l1m, Complex64::new(0.262_32, -5.698_39), 1e-4), "{l1m}");
    }

    #[test]
    fn limits_of_leading_eigenvalue() {
        // beta -> 0 at fixed r: lambda -> r
        let p = EnsembleParams::new(1e-4, 10.0, -1.0, 1.0).unwrap();
        assert!(close(leading_eigenvalue(&p).unwrap(), Complex64::new(10.0, 0.0), 1e-2));
        // beta large at fixed tau: lambda -> 0+ - 2 pi i / tau
        let p = EnsembleParams::new(1.0, 4e4, -1.0, 1.0).unwrap();
        let l = leading_eigenvalue(&p).unwrap();
        assert!(l.re > 0.0 && l.re < 1e-2);
        assert!((l.im + 2.0 * PI).abs() < 1e-3);
    }

    #[test]
    fn conjugate_pairs() {
        for &tau in &[0.01, 0.3, 3.0, 40.0] {
            let p = EnsembleParams::new(tau, 10.0, -1.0, 1.0).unwrap();
            for k in -6..=6 {
                for sign in [Sign::Minus, Sign::Plus] {
                    // Below the critical point the (0,-) and (-1,-) pair are two distinct real roots.
                    if sign == Sign::Minus && (k == 0 || k == -1) && p.beta() < beta_critical() {
                        continue;
                    }
                    let a = eigenvalue(BranchIndex(k), sign, &p).unwrap();
                    let b = eigenvalue(BranchIndex(conjugate_partner(k, sign)), sign, &p).unwrap();
                    assert!(close(a, b.conj(), 1e-10 * p.r), "k={k} {sign} tau={tau}: {a} {b}");
                }
            }
        }
    }

    #[test]
    fn regimes() {
        let mk = |rt: f64| EnsembleParams::new(rt, 1.0, -1.0, 1.0).unwrap();
        assert_eq!(classify_regime(&fig3()), Regime::OscillatoryDecay);
        assert_eq!(classify_regime(&mk(1.0)), Regime::PureRelaxation);
        assert_eq!(classify_regime(&mk(4.0 * 0.278_464_542_761_073_8)), Regime::Critical);
    }

    #[test]
    fn leading_modes_ordering() {
        let m = leading_modes(&fig3(), 4).unwrap();
        let tags: Vec<(i32, Sign)> = m.iter().map(|m| (m.k.0, m.sign)).collect();
        assert_eq!(
            tags,
            vec![(0, Sign::Minus), (-1, Sign::Minus), (1, Sign::Plus), (-1, Sign::Plus)]
        );
        let below = EnsembleParams::new(1.0, 1.0, -1.0, 1.0).unwrap();
        let m = leading_modes(&below, 2).unwrap();
        assert_eq!(m[0].k.0, 0);
        assert_eq!(m[1].k.0, -1);
        assert!(m[0].lambda.im == 0.0 && m[1].lambda.im == 0.0);
        assert!(m[0].lambda.re <= m[1].lambda.re);
    }

    #[test]
    fn eigenfunction_continuity_and_stationary_shape() {
        let p = fig3();
        for k in -3..=3 {
            for sign in [Sign::Minus, Sign::Plus] {
                let m = SpectralMode::new(k, sign, &p).unwrap();
                for edge in [p.x_down, p.x_up] {
                    for f in [eigenfunction, adjoint_eigenfunction] {
                        let a = f(&m, &p, edge - 1e-12).unwrap();
                        let b = f(&m, &p, edge + 1e-12).unwrap();
                        let s = a.up.norm() + a.down.norm();
                        assert!((a.up - b.up).norm() <= 1e-9 * s, "k={k} {sign} up at {edge}");
                        assert!((a.down - b.down).norm() <= 1e-9 * s, "k={k} {sign} down at {edge}");
                    }
                }
            }
        }
        let st = SpectralMode::new(0, Sign::Plus, &p).unwrap();
        let v = eigenfunction(&st, &p, 0.3).unwrap();
        let expect = (p.r * p.tau * p.x_down / (2.0 * p.width())).exp();
        assert!((v.up.re - expect).abs() < 1e-15 && (v.down.re - expect).abs() < 1e-15);
        let adj = adjoint_eigenfunction(&st, &p, 0.3).unwrap();
        assert!(adj.up.re > 0.0 && adj.down.re > 0.0 && adj.up.im == 0.0);
        let far = eigenfunction(&SpectralMode::new(2, Sign::Minus, &p).unwrap(), &p, -40.0).unwrap();
        assert!(far.up.norm() < 1e-50);
    }

    #[test]
    fn biorthonormal_small_set() {
        let p = fig3();
        let modes: Vec<SpectralMode> = [(0, Sign::Plus), (0, Sign::Minus), (-1, Sign::Minus), (1, Sign::Plus)]
            .iter()
            .map(|&(k, s)| SpectralMode::new(k, s, &p).unwrap())
            .collect();
        for (i, a) in modes.iter().enumerate() {
            for (j, b) in modes.iter().enumerate() {
                let v = mode_overlap(a, b, &p).unwrap();
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((v - target).norm() < 1e-8, "{i},{j}: {v}");
            }
        }
    }

    #[test]
    fn closed_form_integrals_match_quadrature() {
        let p = fig3();
        for (k, sign) in [(0, Sign::Plus), (0, Sign::Minus), (2, Sign::Plus), (-3, Sign::Minus)] {
            let m = SpectralMode::new(k, sign, &p).unwrap();
            let (up, total) = mode_integrals(&m, &p).unwrap();
            let bp = band_breakpoints(&p, 60.0);
            let tol = Tolerance { rel: 1e-12, abs: 1e-16 };
            let q_up = integrate_panels(|x| eigenfunction(&m, &p, x).unwrap().up, &bp, tol).unwrap();
            let q_tot = integrate_panels(
                |x| {
                    let v = eigenfunction(&m, &p, x).unwrap();
                    v.up + v.down
                },
                &bp,
                tol,
            )
            .unwrap();
            assert!((q_up.value - up).norm() < 1e-10 * (1.0 + up.norm()), "k={k} {sign}");
            assert!((q_tot.value - total).norm() < 1e-10 * (1.0 + up.norm()), "k={k} {sign}");
            if !m.is_stationary() {
                assert!(total.norm() < 1e-12 * (1.0 + up.norm()));
            }
            if sign == Sign::Plus && k != 0 {
                assert!(up.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn delta_amplitude_matches_phi() {
        let p = fig3();
        let m = SpectralMode::new(0, Sign::Minus, &p).unwrap();
        let w = on_fraction_weight(&m, &p, &InitialCondition::DeltaAtLowerBoundary).unwrap();
        let phi = worst_case_phi(&p).unwrap();
        assert!((w - phi.exp()).norm() < 1e-12 * w.norm());
        let st = SpectralMode::new(0, Sign::Plus, &p).unwrap();
        let w0 = on_fraction_weight(&st, &p, &InitialCondition::DeltaAtLowerBoundary).unwrap();
        assert!((w0 - 0.5).norm() < 1e-13);
    }

    #[test]
    fn tabulated_projection_of_stationary_profile() {
        let p = fig3();
        let st = SpectralMode::new(0, Sign::Plus, &p).unwrap();
        let xs: Vec<f64> = (0..=4000).map(|i| -6.0 + 12.0 * i as f64 / 4000.0).collect();
        let vals: Vec<TwoVector> = xs.iter().map(|&x| eigenfunction(&st, &p, x).unwrap()).collect();
        let mass = Profile::new(xs.clone(), vals.clone()).unwrap().mass();
        let vals: Vec<TwoVector> = vals.into_iter().map(|v| v.scale(1.0 / mass)).collect();
        let init = InitialCondition::tabulated(Profile::new(xs, vals).unwrap()).unwrap();
        let a0 = projection_coefficient(&st, &p, &init).unwrap();
        assert!((a0 * mass - 1.0).norm() < 1e-4, "{a0}");
        for (k, s) in [(0, Sign::Minus), (1, Sign::Plus), (-2, Sign::Minus)] {
            let m = SpectralMode::new(k, s, &p).unwrap();
            assert!(projection_coefficient(&m, &p, &init).unwrap().norm() < 1e-5 * a0.norm());
        }
    }

    #[test]
    fn two_mode_reconstruction_decays() {
        let p = fig3();
        let init = InitialCondition::DeltaAtLowerBoundary;
        let v = theory_delta_n_complex(5.0, &p, &init, 2).unwrap();
        assert!(v.im.abs() < 1e-12);
        assert!(theory_delta_n(5000.0, &p, &init, 2).unwrap().abs() < 1e-30);
        let full = theory_delta_n(0.0, &p, &init, 400).unwrap();
        assert!((full - 0.5).abs() < 2e-2, "{full}");
    }

    #[test]
    fn reconstruction_conserves_mass() {
        let p = fig3();
        let xs: Vec<f64> = (0..=3000).map(|i| -8.0 + 16.0 * i as f64 / 3000.0).collect();
        for &t in &[0.5, 3.0, 30.0] {
            let prof = pdf_reconstruction(&xs, t, &p, &InitialCondition::DeltaAtLowerBoundary, 10).unwrap();
            let mass = Profile::new(xs.clone(), prof).unwrap().mass();
            assert!((mass - 1.0).norm() < 1e-3, "t={t}: {mass}");
        }
    }

    #[test]
    fn lambda_prime_matches_finite_difference() {
        let p = fig3();
        let c = tau_sensitivity(&p).unwrap();
        let h = 1e-5 * p.tau;
        let lp = leading_eigenvalue(&p.with_tau(p.tau + h)).unwrap();
        let lm = leading_eigenvalue(&p.with_tau(p.tau - h)).unwrap();
        let fd = p.tau * (lp - lm) / (2.0 * h);
        assert!((fd - c.lambda_prime).norm() <= 1e-6 * c.lambda_prime.norm());
        let pp = worst_case_phi(&p.with_tau(p.tau + h)).unwrap();
        let pm = worst_case_phi(&p.with_tau(p.tau - h)).unwrap();
        let fd = p.tau * (pp - pm) / (2.0 * h);
        assert!((fd - c.phi_prime).norm() <= 1e-6 * c.phi_prime.norm());
    }

    #[test]
    fn fig1_coefficients() {
        let p = EnsembleParams::new(3.0, 100.0, -1.0, 1.0).unwrap();
        let c = tau_sensitivity(&p).unwrap();
        assert!(close(c.lambda0, Complex64::new(5.616e-4, -2.06685), 1e-5));
        assert!(close(c.phi0, Complex64::new(-1.14492, 1.55040), 1e-5));
        assert!(close(c.lambda_prime, Complex64::new(-0.0016618, 2.03970), 1e-5));
        assert!(close(c.phi_prime, Complex64::new(3.613e-4, 0.019855), 1e-6));
    }

    #[test]
    fn sensitivity_rejects_subcritical() {
        let p = EnsembleParams::new(1.0, 1.0, -1.0, 1.0).unwrap();
        assert!(tau_sensitivity(&p).is_err());
    }

    #[test]
    fn sweep_finds_critical_point() {
        let s = bifurcation_sweep(1.0, 0.5, 2.0, 1501).unwrap();
        assert!((s.c_estimate() - critical_constant()).abs() <= s.grid_step * 1.0 + 1e-12);
        assert!((s.beta_c_estimate().unwrap() - beta_critical()).abs() < 1e-3);
        let f = splitting_fit(1.0, 1e-6, 1e-3, 20).unwrap();
        assert!((f.slope - 0.5).abs() < 0.01, "{}", f.slope);
    }

    #[test]
    fn epsilon_series_leading_terms() {
        let s = epsilon_series(0.0);
        assert!(close(s[0], Complex64::new(0.0, -2.0 * PI), 1e-15));
        assert!(close(s[2], -Complex64::new(0.0, -PI).ln(), 1e-15));
    }

    proptest! {
        #[test]
        fn residual_small_everywhere(beta in 0.02f64..60.0, k in -20i32..=20, plus in any::<bool>()) {
            let sign = if plus { Sign::Plus } else { Sign::Minus };
            let p = EnsembleParams::new(1.0, 4.0 * beta, -1.0, 1.0).unwrap();
            let l = eigenvalue(BranchIndex(k), sign, &p).unwrap();
            prop_assert!(spectral_residual(l, sign, &p).norm() <= 1e-10 * p.r);
            prop_assert!(l.re >= -1e-12 * p.r);
        }
    }
}
