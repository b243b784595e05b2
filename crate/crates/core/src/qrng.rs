//! Toggle-type quantum random number generator.
//!
//! Two detectors fire as independent Poisson processes with the same rate.
//! The output bit is the identity of whichever detector fired last, and it is
//! read out at a fixed clock. For a per-detector rate `r` the continuous-time
//! bit signal has autocorrelation `exp(−2 r τ)`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QrngError {
    #[error("invalid QRNG configuration: {0}")]
    InvalidConfig(String),
    #[error("empty bit stream")]
    EmptyStream,
    #[error("stream too short for lag {lag} ns")]
    InsufficientData { lag: f64 },
    #[error("bit stream has zero variance")]
    ZeroVariance,
    #[error("rate bounds [{lo}, {hi}] do not bracket the target autocorrelation time")]
    NonBracketing { lo: f64, hi: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("sidecar error: {0}")]
    Sidecar(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QrngError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QrngConfig {
    /// Firing rate per detector, events/ns.
    pub detection_rate: f64,
    /// Readout period in ns.
    pub sample_period: f64,
    /// Autocorrelation time the rate is meant to reproduce, ns.
    pub autocorrelation_target: f64,
    pub seed: u64,
}

impl Default for QrngConfig {
    fn default() -> Self {
        Self {
            detection_rate: rate_for_tau(10.7),
            sample_period: 500.0,
            autocorrelation_target: 10.7,
            seed: 0,
        }
    }
}

impl QrngConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.detection_rate > 0.0 && self.detection_rate.is_finite()) {
            return Err(QrngError::InvalidConfig(format!(
                "detection_rate must be positive, got {}",
                self.detection_rate
            )));
        }
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(QrngError::InvalidConfig(format!(
                "sample_period must be positive, got {}",
                self.sample_period
            )));
        }
        if !(self.autocorrelation_target > 0.0) {
            return Err(QrngError::InvalidConfig(format!(
                "autocorrelation_target must be positive, got {}",
                self.autocorrelation_target
            )));
        }
        Ok(())
    }
}

/// Closed-form rate for a telegraph signal with 1/e time `tau`.
pub fn rate_for_tau(tau: f64) -> f64 {
    1.0 / (2.0 * tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitSample {
    pub bit: bool,
    pub sample_time: f64,
    /// Time of the most recent detector firing (or start of the stream).
    pub last_toggle_time: f64,
}

/// Bit-holding flip-flop driven by detector firings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToggleLatch {
    bit: bool,
    last_toggle: f64,
}

impl ToggleLatch {
    pub fn new(initial: bool, t0: f64) -> Self {
        Self {
            bit: initial,
            last_toggle: t0,
        }
    }

    /// Detector `detector` (0 or 1) fired at time `t`.
    pub fn fire(&mut self, detector: bool, t: f64) {
        self.bit = detector;
        self.last_toggle = t;
    }

    pub fn sample(&self, t: f64) -> BitSample {
        BitSample {
            bit: self.bit,
            sample_time: t,
            last_toggle_time: self.last_toggle,
        }
    }
}

/// Anything that yields clocked bits.
pub trait BitSource {
    fn next_bit(&mut self) -> BitSample;

    fn take_bits(&mut self, n: usize) -> Vec<BitSample> {
        (0..n).map(|_| self.next_bit()).collect()
    }
}

/// Physical model: Poisson firings feeding a [`ToggleLatch`].
#[derive(Debug, Clone)]
pub struct PhysicalQrng {
    cfg: QrngConfig,
    rng: ChaCha8Rng,
    exp: Exp<f64>,
    time: f64,
    next_fire: [f64; 2],
    latch: ToggleLatch,
}

impl PhysicalQrng {
    pub fn new(cfg: QrngConfig) -> Result<Self> {
        Self::with_stream(cfg, 0)
    }

    /// Independent substream `stream` of the same seed.
    pub fn with_stream(cfg: QrngConfig, stream: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let exp = Exp::new(cfg.detection_rate).expect("validated rate");
        let initial = rng.random::<bool>();
        let next_fire = [exp.sample(&mut rng), exp.sample(&mut rng)];
        Ok(Self {
            cfg,
            rng,
            exp,
            time: 0.0,
            next_fire,
            latch: ToggleLatch::new(initial, 0.0),
        })
    }

    pub fn config(&self) -> &QrngConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.time
    }
}

impl BitSource for PhysicalQrng {
    fn next_bit(&mut self) -> BitSample {
        self.time += self.cfg.sample_period;
        loop {
            let d = self.next_fire[1] < self.next_fire[0];
            let t = self.next_fire[d as usize];
            if t > self.time {
                break;
            }
            self.latch.fire(d, t);
            self.next_fire[d as usize] = t + self.exp.sample(&mut self.rng);
        }
        self.latch.sample(self.time)
    }
}

/// Uniform pseudo-random bits on the same clock (for reproducible runs
/// without the timing model).
#[derive(Debug, Clone)]
pub struct PrngBitSource {
    rng: ChaCha8Rng,
    period: f64,
    time: f64,
}

impl PrngBitSource {
    pub fn new(seed: u64, stream: u64, period: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            period,
            time: 0.0,
        }
    }
}

impl BitSource for PrngBitSource {
    fn next_bit(&mut self) -> BitSample {
        self.time += self.period;
        BitSample {
            bit: self.rng.random(),
            sample_time: self.time,
            last_toggle_time: self.time,
        }
    }
}

/// Fraction of ones and its binomial standard error.
pub fn bias(bits: &[bool]) -> Result<(f64, f64)> {
    if bits.is_empty() {
        return Err(QrngError::EmptyStream);
    }
    let n = bits.len() as f64;
    let p = bits.iter().filter(|&&b| b).count() as f64 / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}

/// Pearson autocorrelation of a uniformly clocked stream at `lag` ns
/// (rounded to a whole number of sample periods).
pub fn autocorrelation(stream: &[BitSample], lag: f64) -> Result<f64> {
    if stream.len() < 2 {
        return Err(QrngError::InsufficientData { lag });
    }
    let period = stream[1].sample_time - stream[0].sample_time;
    let k = (lag / period).round() as usize;
    if k + 2 > stream.len() {
        return Err(QrngError::InsufficientData { lag });
    }
    let x: Vec<f64> = stream.iter().map(|s| s.bit as u8 as f64).collect();
    pearson(&x[..x.len() - k], &x[k..])
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(QrngError::ZeroVariance);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Samples used per autocorrelation-time measurement.
pub const MEASURE_SAMPLES: usize = 400_000;

/// Measure the 1/e autocorrelation time of the physical model at `rate`,
/// sampling with period `fine_period`. Linear interpolation between the two
/// lags that straddle 1/e.
pub fn measure_autocorrelation_time(rate: f64, fine_period: f64, seed: u64) -> Result<f64> {
    let cfg = QrngConfig {
        detection_rate: rate,
        sample_period: fine_period,
        seed,
        ..QrngConfig::default()
    };
    let stream = PhysicalQrng::new(cfg)?.take_bits(MEASURE_SAMPLES);
    let target = (-1.0f64).exp();
    let mut prev = (0.0, 1.0);
    for k in 1..MEASURE_SAMPLES / 4 {
        let lag = k as f64 * fine_period;
        let rho = autocorrelation(&stream, lag)?;
        if rho <= target {
            let (l0, r0) = prev;
            return Ok(l0 + (r0 - target) / (r0 - rho) * (lag - l0));
        }
        prev = (lag, rho);
    }
    Err(QrngError::InsufficientData {
        lag: MEASURE_SAMPLES as f64 / 4.0 * fine_period,
    })
}

/// Per-detector rate whose measured autocorrelation time matches
/// `target_tau`, by bisection in log-rate against the simulator.
pub fn calibrate_rate(target_tau: f64, seed: u64) -> Result<f64> {
    calibrate_rate_within(target_tau, seed, 0.02 / target_tau, 50.0 / target_tau)
}

pub fn calibrate_rate_within(target_tau: f64, seed: u64, lo: f64, hi: f64) -> Result<f64> {
    if !(target_tau > 0.0) {
        return Err(QrngError::InvalidConfig(format!(
            "target_tau must be positive, got {target_tau}"
        )));
    }
    let fine = target_tau / 20.0;
    let tau_at = |r: f64| measure_autocorrelation_time(r, fine, seed);
    // Measured τ falls with rate.
    let (t_lo, t_hi) = (tau_at(lo), tau_at(hi));
    let bracketed = matches!((&t_lo, &t_hi), (Ok(a), Ok(b)) if *a >= target_tau && *b <= target_tau);
    if !bracketed {
        return Err(QrngError::NonBracketing { lo, hi });
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..40 {
        let mid = 0.5 * (a + b);
        if tau_at(mid.exp())? > target_tau {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-4 {
            break;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Sidecar written next to a packed bit file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitFileSidecar {
    pub n_bits: usize,
    pub bit_order: String,
    pub config: QrngConfig,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
}

pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
        })
        .collect()
}

pub fn unpack_bits(bytes: &[u8], n_bits: usize) -> Vec<bool> {
    (0..n_bits)
        .map(|i| bytes[i / 8] >> (7 - i % 8) & 1 == 1)
        .collect()
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    path.with_file_name(name)
}

/// Write MSB-first packed bits to `path` and a JSON sidecar to `path.json`.
pub fn export_bits(
    path: &Path,
    bits: &[bool],
    cfg: &QrngConfig,
    run_id: Option<String>,
) -> Result<PathBuf> {
    fs::write(path, pack_bits(bits))?;
    let side = BitFileSidecar {
        n_bits: bits.len(),
        bit_order: "msb-first".to_string(),
        config: *cfg,
        seed: cfg.seed,
        run_id,
    };
    let sp = sidecar_path(path);
    fs::write(&sp, serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(sp)
}

pub fn import_bits(path: &Path) -> Result<(Vec<bool>, BitFileSidecar)> {
    let side: BitFileSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    if bytes.len() * 8 < side.n_bits {
        return Err(QrngError::InsufficientData { lag: 0.0 });
    }
    Ok((unpack_bits(&bytes, side.n_bits), side))
}
