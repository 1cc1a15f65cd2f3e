//! Lambert W on every branch of the complex plane.
//!
//! Branch labelling follows the standard convention: the cut of `W_0` runs
//! along `(-inf, -1/e]`, the cuts of `W_k` for `k != 0` run along
//! `(-inf, 0]`, and points sitting on a cut take the value from the side
//! approached counter-clockwise (i.e. from `Im z > 0`). A `-0.0` imaginary
//! part is treated as `+0.0`.

use std::f64::consts::{E, PI};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `1/e`, the modulus of the branch point.
pub const INV_E: f64 = 1.0 / E;

const MAX_ITER: usize = 100;
const REL_TOL: f64 = 1e-13;
/// Above this log-magnitude the log-form solver takes over from the direct one.
const DIRECT_LOG_LIMIT: f64 = 20.0;

/// Branch label `k` of `W_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BranchIndex(pub i32);

impl fmt::Display for BranchIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<i32> for BranchIndex {
    fn from(k: i32) -> Self {
        BranchIndex(k)
    }
}

/// A sign tag, used both for `LogArgument` and for the two spectral families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "+")]
    Plus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// `z = sign * exp(log_magnitude)`, kept in log form so `beta * e^beta` never overflows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogArgument {
    pub sign: Sign,
    pub log_magnitude: f64,
}

impl LogArgument {
    /// The argument `±beta e^beta`.
    pub fn beta_exp_beta(sign: Sign, beta: f64) -> Self {
        LogArgument {
            sign,
            log_magnitude: beta.ln() + beta,
        }
    }

    /// The argument as an ordinary complex number (overflows for large magnitudes).
    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.sign.value() * self.log_magnitude.exp(), 0.0)
    }
}

/// Absolute residual `|w e^w - z|`.
pub fn residual(w: Complex64, z: Complex64) -> f64 {
    (w * w.exp() - z).norm()
}

/// `W_k(z)`.
pub fn lambert_w(k: BranchIndex, z: Complex64) -> Result<Complex64> {
    let branch = k.0;
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambert_w argument {z} is not finite")));
    }
    // Fold -0.0 onto +0.0 so points on a cut always take the upper side.
    let z = Complex64::new(z.re, z.im + 0.0);

    if z.re == 0.0 && z.im == 0.0 {
        return if branch == 0 {
            Ok(Complex64::new(0.0, 0.0))
        } else {
            Err(Error::InvalidParameter(format!(
                "W_{branch}(0) is unbounded; only the principal branch is finite at 0"
            )))
        };
    }
    if z.im == 0.0 && z.re == -INV_E && (branch == 0 || branch == -1) {
        return Ok(Complex64::new(-1.0, 0.0));
    }

    let w0 = initial_guess(branch, z);
    halley(branch, z, w0)
}

fn initial_guess(k: i32, z: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let near_branch_point = (z + INV_E).norm() < 0.3;

    // Branch-point expansion in p = sqrt(2(ez + 1)). W_0 takes +p; the two
    // sheets that meet W_0 there (k = -1 from above the cut, k = 1 from
    // below) take -p.
    if near_branch_point {
        let p = (2.0 * (E * z + 1.0)).sqrt();
        let series = |p: Complex64| -> Complex64 {
            -one + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
        };
        let lower = z.im < 0.0;
        match k {
            0 => return series(p),
            -1 if !lower => return series(-p),
            1 if lower => return series(-p),
            _ => {}
        }
    }

    if k == 0 {
        if z.norm() < 0.3 {
            return z * (one - z + 1.5 * z * z - 8.0 / 3.0 * z * z * z);
        }
        if z.norm() < 3.0 && (z + one).norm() > 0.5 {
            return (one + z).ln();
        }
    }

    if k == -1 && z.im == 0.0 && z.re < 0.0 && z.re > -INV_E {
        // Real lower branch on (-1/e, 0).
        let l1 = (-z.re).ln();
        let l2 = (-l1).ln();
        return Complex64::new(l1 - l2 + l2 / l1, 0.0);
    }

    // Asymptotic series around infinity on branch k.
    let l1 = z.ln() + Complex64::new(0.0, 2.0 * PI * k as f64);
    let l2 = l1.ln();
    l1 - l2 + l2 / l1 + l2 * (l2 - 2.0) / (2.0 * l1 * l1)
}

fn halley(k: i32, z: Complex64, mut w: Complex64) -> Result<Complex64> {
    let scale = z.norm().max(1.0);
    let step = |w: Complex64| -> Option<Complex64> {
        // f(w) = w e^w - z divided through by e^w, so nothing overflows for huge |z|.
        let g = w - z * (-w).exp();
        let wp1 = w + 1.0;
        let dw = g / (wp1 - (w + 2.0) * g / (2.0 * wp1));
        (dw.re.is_finite() && dw.im.is_finite()).then_some(dw)
    };

    for _ in 0..MAX_ITER {
        let Some(dw) = step(w) else { break };
        w -= dw;
        if residual(w, z) <= REL_TOL * scale || dw.norm() <= 1e-16 * w.norm() {
            // Polish: keep the extra step only if it does not make things worse.
            if let Some(dw) = step(w) {
                let polished = w - dw;
                if residual(polished, z) <= residual(w, z) {
                    w = polished;
                }
            }
            return Ok(w);
        }
    }
    let res = residual(w, z);
    if res <= 1e-12 * scale {
        return Ok(w);
    }
    Err(Error::LambertNonConvergence {
        branch: k,
        last: w,
        residual: res,
    })
}

/// `W_k(sign * exp(log_magnitude))`, returned as the solution of
/// `w + Log w = log_magnitude + i pi (1 - sign)/2 + 2 pi i k`.
///
/// For moderate magnitudes this defers to [`lambert_w`]; beyond that it
/// solves the log-form equation directly, which never overflows.
///
/// On the negative real axis the two forms agree with the cut conventions
/// of [`lambert_w`], with one exception: for `k = -1` and `z` in `(-1/e, 0)`
/// the log-form equation picks out the value just above the cut, whereas
/// `lambert_w` returns the real value. That case is handled by the direct
/// path because its log-magnitude is always negative.
pub fn lambert_w_log(k: BranchIndex, a: LogArgument) -> Result<Complex64> {
    if !a.log_magnitude.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "log_magnitude {} is not finite",
            a.log_magnitude
        )));
    }
    if a.log_magnitude <= DIRECT_LOG_LIMIT {
        return lambert_w(k, a.to_complex());
    }

    let c = Complex64::new(
        a.log_magnitude,
        PI * (1.0 - a.sign.value()) / 2.0 + 2.0 * PI * k.0 as f64,
    );
    let scale = c.norm().max(1.0);
    let mut w = c - c.ln();
    for _ in 0..MAX_ITER {
        let f = w + w.ln() - c;
        let dw = f / (1.0 + 1.0 / w);
        w -= dw;
        if dw.norm() <= 1e-16 * w.norm() || log_form_residual(w, c) <= 1e-15 * scale {
            return Ok(w);
        }
    }
    let res = log_form_residual(w, c);
    if res <= 1e-12 {
        return Ok(w);
    }
    Err(Error::LambertNonConvergence {
        branch: k.0,
        last: w,
        residual: res,
    })
}

fn log_form_residual(w: Complex64, c: Complex64) -> f64 {
    (w + w.ln() - c).norm()
}

/// Residual of the log-form equation for an argument in log form.
pub fn log_residual(k: BranchIndex, a: LogArgument, w: Complex64) -> f64 {
    let c = Complex64::new(
        a.log_magnitude,
        PI * (1.0 - a.sign.value()) / 2.0 + 2.0 * PI * k.0 as f64,
    );
    log_form_residual(w, c)
}
