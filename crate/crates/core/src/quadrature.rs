//! Adaptive composite Gauss-Legendre quadrature for complex-valued integrands.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

const ORDER: usize = 20;
const MAX_DEPTH: u32 = 48;

/// Integral estimate together with its accumulated error estimate.
#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
}

/// Tolerances: a segment is accepted once its refinement error falls below
/// `max(abs_tol, rel_tol * L1)` times its share of the total length, where
/// `L1` estimates the integral of `|f|`.
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 1e-10, abs: 1e-14 }
    }
}

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORDER))
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// One Gauss-Legendre panel: returns the integral of `f` and of `|f|`.
fn panel<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let (nodes, weights) = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut abs_sum = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        let v = f(mid + half * x);
        sum += *w * v;
        abs_sum += *w * v.norm();
    }
    (sum * half, abs_sum * half.abs())
}

/// Integrate `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadResult> {
    integrate_panels(f, &[a, b], tol)
}

/// Integrate `f` over consecutive panels `[p0, p1], [p1, p2], ...`.
///
/// Breakpoints should sit where `f` is not smooth; each panel is refined
/// independently by bisection.
pub fn integrate_panels<F: Fn(f64) -> Complex64>(
    f: F,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Result<QuadResult> {
    if breakpoints.len() < 2 {
        return Ok(QuadResult {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
        });
    }
    if breakpoints.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("quadrature bounds must be finite".into()));
    }
    let total_len: f64 = breakpoints.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    if total_len == 0.0 {
        return Ok(QuadResult {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
        });
    }

    let coarse: Vec<(Complex64, f64)> = breakpoints.windows(2).map(|w| panel(&f, w[0], w[1])).collect();
    let l1: f64 = coarse.iter().map(|c| c.1).sum();
    let budget = tol.abs.max(tol.rel * l1);

    let mut value = Complex64::new(0.0, 0.0);
    let mut error = 0.0;
    let mut failed = false;
    let mut stack: Vec<(f64, f64, Complex64, u32)> = breakpoints
        .windows(2)
        .zip(&coarse)
        .map(|(w, c)| (w[0], w[1], c.0, 0))
        .collect();

    while let Some((a, b, whole, depth)) = stack.pop() {
        let m = 0.5 * (a + b);
        let (left, _) = panel(&f, a, m);
        let (right, _) = panel(&f, m, b);
        let refined = left + right;
        let diff = (refined - whole).norm();
        let allowed = budget * (b - a).abs() / total_len;
        if !(diff.is_finite() && refined.re.is_finite() && refined.im.is_finite()) {
            return Err(Error::Quadrature {
                estimate: value,
                error: f64::INFINITY,
            });
        }
        if diff <= allowed {
            value += refined;
            error += diff;
        } else if depth >= MAX_DEPTH {
            failed = true;
            value += refined;
            error += diff;
        } else {
            stack.push((a, m, left, depth + 1));
            stack.push((m, b, right, depth + 1));
        }
    }

    if failed && error > budget {
        return Err(Error::Quadrature { estimate: value, error });
    }
    Ok(QuadResult { value, error })
}
