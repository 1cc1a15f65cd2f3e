//! Monte Carlo simulation of an ensemble of independent hybrid devices.
//!
//! A device moves at `-u` while on and `+u` while off. After each move it
//! may switch with probability `1 - exp(-r dt)`, but only where the model's
//! switching terms act: an on device below `x_down`, or an off device above
//! `x_up`.
//!
//! Each device owns two ChaCha8 streams derived from the master seed (one for
//! its period, one for its switching), so results do not depend on how
//! devices are spread over threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::disorder::{dpd_sample, DisorderKind, DisorderSpec};
use crate::error::{Error, Result};
use crate::lambert_w::Sign;

/// Upper bound on `r dt`.
pub const MAX_RATE_STEP: f64 = 0.05;
/// Minimum number of steps per (plausible) cycle period.
pub const MIN_STEPS_PER_PERIOD: f64 = 200.0;

const TAU_DOMAIN: u64 = 0x7461_755f_7374_7265; // "tau_stre"
const FLIP_DOMAIN: u64 = 0x666c_6970_5f73_7472; // "flip_str"
const CHUNK: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub x: f64,
    pub sigma: Sign,
    pub tau: f64,
    pub u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_devices: usize,
    pub dt: f64,
    pub t_end: f64,
    pub r: f64,
    pub x_down: f64,
    pub x_up: f64,
    pub disorder: DisorderSpec,
    pub seed: u64,
    pub record_stride: usize,
}

impl SimConfig {
    /// A config with the largest admissible `dt` and about 40 records per period.
    pub fn with_defaults(n_devices: usize, r: f64, disorder: DisorderSpec, t_end: f64, seed: u64) -> Self {
        let mut cfg = SimConfig {
            n_devices,
            dt: 0.0,
            t_end,
            r,
            x_down: -1.0,
            x_up: 1.0,
            disorder,
            seed,
            record_stride: 1,
        };
        cfg.dt = cfg.max_dt();
        cfg.record_stride = cfg.default_stride();
        cfg
    }

    /// Shortest period that the disorder can plausibly produce.
    pub fn min_plausible_tau(&self) -> f64 {
        let d = &self.disorder;
        match d.kind {
            DisorderKind::Uniform => d.tau0 - d.delta,
            _ => (d.tau0 - 3.0 * d.delta).max(0.1 * d.tau0),
        }
    }

    pub fn max_dt(&self) -> f64 {
        (MAX_RATE_STEP / self.r).min(self.min_plausible_tau() / MIN_STEPS_PER_PERIOD)
    }

    /// Stride giving at least 40 records per `tau0`.
    pub fn default_stride(&self) -> usize {
        ((self.disorder.tau0 / 40.0 / self.dt).floor() as usize).max(1)
    }

    pub fn n_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    pub fn n_records(&self) -> usize {
        (self.n_steps() / self.record_stride as u64) as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        self.disorder.validate()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_devices == 0 {
            return bad("n_devices must be positive".into());
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("r must be positive, got {}", self.r));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("dt must be positive and t_end non-negative".into());
        }
        if !(self.x_down < self.x_up) {
            return bad(format!("need x_down < x_up, got {} and {}", self.x_down, self.x_up));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be positive".into());
        }
        let tol = 1.0 + 1e-12;
        if self.r * self.dt > MAX_RATE_STEP * tol {
            return bad(format!("r dt = {} exceeds {MAX_RATE_STEP}", self.r * self.dt));
        }
        if self.dt > self.min_plausible_tau() / MIN_STEPS_PER_PERIOD * tol {
            return bad(format!(
                "dt = {} resolves the shortest plausible period {} with fewer than {MIN_STEPS_PER_PERIOD} steps",
                self.dt,
                self.min_plausible_tau()
            ));
        }
        if self.n_steps() > u32::MAX as u64 * 64 {
            return bad("too many time steps".into());
        }
        Ok(())
    }

    /// SHA-256 over every field except the seed.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let Some(m) = v.as_object_mut() {
            m.remove("seed");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

/// Fraction of devices switched on, sampled every `record_stride` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionSeries {
    pub times: Vec<f64>,
    pub n_up_fraction: Vec<f64>,
    pub config_digest: String,
    pub seed: u64,
}

impl ConsumptionSeries {
    pub fn n_down_fraction(&self) -> Vec<f64> {
        self.n_up_fraction.iter().map(|f| 1.0 - f).collect()
    }
}

fn stream(seed: u64, domain: u64, device: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain);
    rng.set_stream(device as u64);
    rng
}

/// Period stream of device `i`.
pub fn tau_stream(seed: u64, i: usize) -> ChaCha8Rng {
    stream(seed, TAU_DOMAIN, i)
}

/// Switching stream of device `i`.
pub fn flip_stream(seed: u64, i: usize) -> ChaCha8Rng {
    stream(seed, FLIP_DOMAIN, i)
}

fn device_tau(cfg: &SimConfig, i: usize) -> Result<f64> {
    dpd_sample(&cfg.disorder, &mut tau_stream(cfg.seed, i))
}

/// All devices on at `x_down`, each with its own period.
pub fn init_ensemble(cfg: &SimConfig) -> Result<Vec<DeviceState>> {
    cfg.validate()?;
    let width = cfg.x_up - cfg.x_down;
    (0..cfg.n_devices)
        .into_par_iter()
        .map(|i| {
            let tau = device_tau(cfg, i)?;
            Ok(DeviceState {
                x: cfg.x_down,
                sigma: Sign::Plus,
                tau,
                u: 2.0 * width / tau,
            })
        })
        .collect()
}

fn flip_eligible(d: &DeviceState, cfg: &SimConfig) -> bool {
    match d.sigma {
        Sign::Plus => d.x < cfg.x_down,
        Sign::Minus => d.x > cfg.x_up,
    }
}

fn flip(s: Sign) -> Sign {
    match s {
        Sign::Plus => Sign::Minus,
        Sign::Minus => Sign::Plus,
    }
}

/// Advance every device by one step: move, then switch with probability `1 - e^{-r dt}` if eligible.
///
/// `rngs[i]` is device `i`'s switching stream; one uniform is drawn per eligible device.
pub fn step(devices: &mut [DeviceState], cfg: &SimConfig, rngs: &mut [ChaCha8Rng]) {
    let p_flip = -(-cfg.r * cfg.dt).exp_m1();
    devices.par_iter_mut().zip(rngs.par_iter_mut()).for_each(|(d, rng)| {
        d.x -= d.sigma.value() * d.u * cfg.dt;
        if flip_eligible(d, cfg) && rng.gen::<f64>() < p_flip {
            d.sigma = flip(d.sigma);
        }
    });
}

/// Switching streams for [`step`].
pub fn flip_streams(cfg: &SimConfig) -> Vec<ChaCha8Rng> {
    (0..cfg.n_devices).map(|i| flip_stream(cfg.seed, i)).collect()
}

/// Records device `i` spends switched on, as +1/-1 marks in a difference array over record indices.
///
/// The per-step Bernoulli test is replaced by its exact equivalent: the
/// number of eligible steps up to and including the switching one is
/// geometric with success probability `1 - e^{-r dt}`, drawn once per
/// excursion. In-band stretches are deterministic and skipped in one go.
fn simulate_device(cfg: &SimConfig, tau: f64, rng: &mut ChaCha8Rng, diff: &mut [i64]) {
    let n_steps = cfg.n_steps();
    let stride = cfg.record_stride as u64;
    let h = 2.0 * (cfg.x_up - cfg.x_down) / tau * cfg.dt;
    let rdt = cfg.r * cfg.dt;
    let record_at_or_after = |n: u64| n.div_ceil(stride) as usize;
    let mut mark_on = |from: u64, to: u64| {
        let a = record_at_or_after(from);
        let b = record_at_or_after(to).min(diff.len() - 1);
        if a < b {
            diff[a] += 1;
            diff[b] -= 1;
        }
    };

    let mut x = cfg.x_down;
    let mut sigma = Sign::Plus;
    let mut n: u64 = 0;
    loop {
        // Moves until the device first lands in its switching region.
        let dist = match sigma {
            Sign::Plus => x - cfg.x_down,
            Sign::Minus => cfg.x_up - x,
        };
        let to_region = if dist < 0.0 { 1 } else { (dist / h).floor() as u64 + 1 };
        let u: f64 = 1.0 - rng.gen::<f64>();
        let waiting = (-u.ln() / rdt).floor();
        let moves = to_region.saturating_add(if waiting >= 1e18 { u64::MAX / 4 } else { waiting as u64 });
        let n_flip = n.saturating_add(moves);
        if n_flip > n_steps {
            if sigma == Sign::Plus {
                mark_on(n, n_steps + 1);
            }
            return;
        }
        if sigma == Sign::Plus {
            mark_on(n, n_flip);
        }
        x -= sigma.value() * moves as f64 * h;
        sigma = flip(sigma);
        n = n_flip;
    }
}

/// Simulate the ensemble and record the on-fraction.
pub fn run(cfg: &SimConfig) -> Result<ConsumptionSeries> {
    cfg.validate()?;
    let n_rec = cfg.n_records();
    let counts: Vec<i64> = (0..cfg.n_devices)
        .into_par_iter()
        .chunks(CHUNK)
        .map(|ids| -> Result<Vec<i64>> {
            let mut diff = vec![0i64; n_rec + 1];
            for i in ids {
                let tau = device_tau(cfg, i)?;
                simulate_device(cfg, tau, &mut flip_stream(cfg.seed, i), &mut diff);
            }
            Ok(diff)
        })
        .try_reduce(
            || vec![0i64; n_rec + 1],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    let n = cfg.n_devices as f64;
    let mut on = 0i64;
    let n_up_fraction = counts[..n_rec]
        .iter()
        .map(|d| {
            on += d;
            on as f64 / n
        })
        .collect();
    let times = (0..n_rec)
        .map(|j| (j as u64 * cfg.record_stride as u64) as f64 * cfg.dt)
        .collect();
    Ok(ConsumptionSeries {
        times,
        n_up_fraction,
        config_digest: cfg.digest(),
        seed: cfg.seed,
    })
}
