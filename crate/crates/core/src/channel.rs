//! Physical-layer pieces: batch power normalization, AWGN, bandwidth ratio,
//! capacity and Monte Carlo mutual information.
//!
//! Everything is per real dimension; a complex symbol counts as two. The
//! SNR-to-noise conversion assumes unit average signal power, which
//! [`power_normalize`] enforces.

use std::f64::consts::{E, LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batch::{mean_var, SymbolBatch};
use crate::dist::{sample_streams, TailModel};
use crate::error::{Error, Result};
use crate::estimate::silverman_bandwidth;

const NOISE_STREAM: u64 = 2;
pub const BOOTSTRAP_RESAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    snr_db: f64,
    noise_var: f64,
}

impl ChannelConfig {
    /// σ² = 10^(-snr_db/10) under unit signal power.
    pub fn from_snr_db(snr_db: f64) -> Result<Self> {
        let noise_var = 10f64.powf(-snr_db / 10.0);
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::InvalidParameter(format!("SNR {snr_db} dB gives no usable noise variance")));
        }
        Ok(Self { snr_db, noise_var })
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// ½ln(2πeσ²), the noise entropy in nats.
    pub fn noise_entropy(&self) -> f64 {
        0.5 * (2.0 * PI * E * self.noise_var).ln()
    }
}

/// Scale the batch so that the mean squared entry is exactly one, i.e. the
/// batch-mean squared norm equals M.
pub fn power_normalize(batch: &SymbolBatch) -> Result<SymbolBatch> {
    let power = batch.values().iter().map(|v| v * v).sum::<f64>() / batch.len() as f64;
    if power == 0.0 {
        return Err(Error::AllZeroBatch);
    }
    let scale = 1.0 / power.sqrt();
    batch.map(|v| v * scale)
}

/// Add i.i.d. N(0, σ²) noise to every real entry.
pub fn awgn(batch: &SymbolBatch, cfg: &ChannelConfig, seed: u64) -> Result<SymbolBatch> {
    let mut rng = noise_rng(seed);
    let sd = cfg.noise_var.sqrt();
    let noisy = batch
        .values()
        .iter()
        .map(|&v| v + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    SymbolBatch::new(noisy, batch.rows(), batch.cols(), batch.meta.clone())
}

fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NOISE_STREAM);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbrSpec {
    /// Complex channel symbols per source item.
    pub symbols: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

/// S / (H·W·C).
pub fn cbr(spec: &CbrSpec) -> Result<f64> {
    if spec.symbols == 0 || spec.height == 0 || spec.width == 0 || spec.channels == 0 {
        return Err(Error::InvalidParameter("every CBR count must be >= 1".into()));
    }
    Ok(spec.symbols as f64 / (spec.height * spec.width * spec.channels) as f64)
}

/// ½log₂(1 + 1/σ²) bits per real dimension.
pub fn awgn_capacity(cfg: &ChannelConfig) -> f64 {
    0.5 * (1.0 / cfg.noise_var).ln_1p() / LN_2
}

/// Gaussian KDE on a uniform grid by linear binning, evaluated by linear
/// interpolation. Used for resubstitution entropy on large samples where
/// the exact O(n²) mixture is out of reach.
struct BinnedKde {
    origin: f64,
    step: f64,
    density: Vec<f64>,
}

const BINS_PER_BANDWIDTH: f64 = 16.0;
const MAX_BINS: usize = 1 << 22;

impl BinnedKde {
    fn new(xs: &[f64], bandwidth: f64) -> Self {
        let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let pad = 9.0 * bandwidth;
        let (lo, hi) = (lo - pad, hi + pad);
        let step = (bandwidth / BINS_PER_BANDWIDTH).max((hi - lo) / MAX_BINS as f64);
        let bins = ((hi - lo) / step).ceil() as usize + 2;
        let mut counts = vec![0.0; bins];
        for &x in xs {
            let pos = (x - lo) / step;
            let i = pos.floor() as usize;
            let w = pos - i as f64;
            counts[i] += 1.0 - w;
            counts[i + 1] += w;
        }
        let reach = (9.0 * bandwidth / step).ceil() as usize;
        let norm = 1.0 / (xs.len() as f64 * bandwidth * (2.0 * PI).sqrt());
        let kernel: Vec<f64> = (0..=reach)
            .map(|k| {
                let u = k as f64 * step / bandwidth;
                (-0.5 * u * u).exp() * norm
            })
            .collect();
        let mut density = vec![0.0; bins];
        for (i, &c) in counts.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let from = i.saturating_sub(reach);
            let to = (i + reach).min(bins - 1);
            for (j, d) in density.iter_mut().enumerate().take(to + 1).skip(from) {
                *d += c * kernel[i.abs_diff(j)];
            }
        }
        Self { origin: lo, step, density }
    }

    fn pdf(&self, x: f64) -> f64 {
        let pos = (x - self.origin) / self.step;
        let i = pos.floor() as usize;
        let w = pos - i as f64;
        self.density[i] * (1.0 - w) + self.density[i + 1] * w
    }
}

/// −(1/n)Σ ln q̂(xᵢ) with q̂ the Silverman-bandwidth KDE of the same points.
pub fn resubstitution_entropy(xs: &[f64]) -> Result<f64> {
    let (_, var) = mean_var(xs);
    let bw = silverman_bandwidth(var.sqrt(), xs.len())?;
    let kde = BinnedKde::new(xs, bw);
    Ok(-xs.iter().map(|&x| kde.pdf(x).ln()).sum::<f64>() / xs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiEstimate {
    pub bits: f64,
    /// Bootstrap standard error over 20 resamples.
    pub std_error_bits: f64,
}

fn channel_outputs(model: &TailModel, cfg: &ChannelConfig, n: usize, seed: u64) -> Vec<f64> {
    let (mut base, mut mix) = sample_streams(seed);
    let inputs = model.draw(n, &mut base, &mut mix);
    let mut noise = noise_rng(seed);
    let sd = cfg.noise_var.sqrt();
    inputs.into_iter().map(|y| y + sd * noise.sample::<f64, _>(StandardNormal)).collect()
}

/// Indices of bootstrap resample `r`; each resample has its own stream.
fn bootstrap_indices(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(16 + r as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn mi_bits(outputs: &[f64], cfg: &ChannelConfig) -> Result<f64> {
    Ok((resubstitution_entropy(outputs)? - cfg.noise_entropy()) / LN_2)
}

fn std_dev(xs: &[f64]) -> f64 {
    let (_, var) = mean_var(xs);
    // unbiased over bootstrap replicates
    (var * xs.len() as f64 / (xs.len() as f64 - 1.0)).sqrt()
}

/// I(Y; Ŷ) = h(Ŷ) − h(N) in bits per real dimension, with h(Ŷ) from KDE
/// resubstitution on `n_samples` channel outputs.
pub fn mutual_information(model: &TailModel, cfg: &ChannelConfig, n_samples: usize, seed: u64) -> Result<MiEstimate> {
    if n_samples < 10_000 {
        return Err(Error::InsufficientSamples { have: n_samples, need: 10_000 });
    }
    let out = channel_outputs(model, cfg, n_samples, seed);
    let bits = mi_bits(&out, cfg)?;
    let reps = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|r| {
            let idx = bootstrap_indices(n_samples, seed, r);
            mi_bits(&idx.iter().map(|&i| out[i]).collect::<Vec<_>>(), cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MiEstimate { bits, std_error_bits: std_dev(&reps) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiComparison {
    pub first_bits: f64,
    pub second_bits: f64,
    /// first − second.
    pub gap_bits: f64,
    pub gap_std_error_bits: f64,
    /// gap ± 1.96·SE.
    pub ci_low_bits: f64,
    pub ci_high_bits: f64,
}

impl MiComparison {
    pub fn excludes_zero(&self) -> bool {
        self.ci_low_bits > 0.0 || self.ci_high_bits < 0.0
    }
}

/// Paired comparison of two input laws: same seed (shared Gaussian draws and
/// channel noise) and the same bootstrap indices for both arms.
pub fn compare_mutual_information(
    first: &TailModel,
    second: &TailModel,
    cfg: &ChannelConfig,
    n_samples: usize,
    seed: u64,
) -> Result<MiComparison> {
    if n_samples < 10_000 {
        return Err(Error::InsufficientSamples { have: n_samples, need: 10_000 });
    }
    let a = channel_outputs(first, cfg, n_samples, seed);
    let b = channel_outputs(second, cfg, n_samples, seed);
    let first_bits = mi_bits(&a, cfg)?;
    let second_bits = mi_bits(&b, cfg)?;
    let gaps = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|r| {
            let idx = bootstrap_indices(n_samples, seed, r);
            let ra: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
            let rb: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
            Ok(mi_bits(&ra, cfg)? - mi_bits(&rb, cfg)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let gap = first_bits - second_bits;
    let se = std_dev(&gaps);
    Ok(MiComparison {
        first_bits,
        second_bits,
        gap_bits: gap,
        gap_std_error_bits: se,
        ci_low_bits: gap - 1.96 * se,
        ci_high_bits: gap + 1.96 * se,
    })
}
