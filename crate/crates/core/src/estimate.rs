//! Densities and fitted models from empirical symbol batches.
//!
//! KDE uses Gaussian kernels with Silverman's bandwidth, either pooled over
//! all dimensions (`Identical`) or one estimate per dimension
//! (`NonIdentical`). The tail index is fitted by maximum likelihood over the
//! unit-variance t after z-scoring each dimension. All log-likelihoods are in
//! nats.

use serde::{Deserialize, Serialize};

use crate::batch::{mean_var, SymbolBatch};
use crate::dist::{TailCdf, TailModel};
use crate::error::{Error, Result};
use crate::par::{det_map, det_sum};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Kernels farther than this many bandwidths contribute < 1e-17 relative.
const KERNEL_REACH: f64 = 9.0;

pub const NU_MIN: f64 = 2.001;
pub const NU_MAX_DEFAULT: f64 = 200.0;
const NU_TOL: f64 = 1e-4;

/// 1.06 · σ · n^(-1/5).
pub fn silverman_bandwidth(std_dev: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::DegenerateInput(format!("bandwidth needs n >= 2, got {n}")));
    }
    if !(std_dev.is_finite() && std_dev > 0.0) {
        return Err(Error::DegenerateInput(format!("standard deviation {std_dev} is not positive")));
    }
    Ok(1.06 * std_dev * (n as f64).powf(-0.2))
}

/// Silverman bandwidth of `values` (population σ), never below
/// 1e-6·(range + 1).
pub fn silverman_with_floor(values: &[f64]) -> f64 {
    let (_, var) = mean_var(values);
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let floor = 1e-6 * ((hi - lo) + 1.0);
    silverman_bandwidth(var.sqrt(), values.len()).unwrap_or(floor).max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KdeMode {
    /// One marginal shared by every dimension.
    #[default]
    Identical,
    /// One marginal per dimension.
    NonIdentical,
}

impl std::str::FromStr for KdeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identical" => Ok(KdeMode::Identical),
            "non_identical" => Ok(KdeMode::NonIdentical),
            other => Err(Error::InvalidParameter(format!(
                "unknown KDE mode `{other}` (identical | non_identical)"
            ))),
        }
    }
}

/// One Gaussian mixture: sorted centers and a shared bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    centers: Vec<f64>,
    bandwidth: f64,
}

impl Mixture {
    /// Build with a Silverman bandwidth (population σ), falling back to the
    /// floor 1e-6·(range + 1) when the spread is degenerate.
    pub fn silverman(mut centers: Vec<f64>) -> Self {
        centers.sort_by(f64::total_cmp);
        let bandwidth = silverman_with_floor(&centers);
        Self { centers, bandwidth }
    }

    pub fn with_bandwidth(mut centers: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one center".into()));
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!("bandwidth {bandwidth} must be > 0")));
        }
        centers.sort_by(f64::total_cmp);
        Ok(Self { centers, bandwidth })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let reach = KERNEL_REACH * self.bandwidth;
        let lo = self.centers.partition_point(|&c| c < y - reach);
        let hi = self.centers.partition_point(|&c| c <= y + reach);
        let inv_h = 1.0 / self.bandwidth;
        let mut acc = 0.0;
        for &c in &self.centers[lo..hi] {
            let u = (y - c) * inv_h;
            acc += (-0.5 * u * u).exp();
        }
        acc * INV_SQRT_2PI * inv_h / self.centers.len() as f64
    }

    /// Interval holding all but a negligible fraction of the mass.
    pub fn support(&self) -> (f64, f64) {
        let pad = KERNEL_REACH * self.bandwidth;
        (self.centers[0] - pad, self.centers[self.centers.len() - 1] + pad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeEstimate {
    mode: KdeMode,
    mixtures: Vec<Mixture>,
}

impl KdeEstimate {
    pub fn build(batch: &SymbolBatch, mode: KdeMode) -> Result<Self> {
        let mixtures = match mode {
            KdeMode::Identical => vec![Mixture::silverman(batch.values().to_vec())],
            KdeMode::NonIdentical => {
                if batch.rows() < 2 {
                    return Err(Error::InsufficientSamples { have: batch.rows(), need: 2 });
                }
                (0..batch.cols())
                    .map(|i| {
                        let col = batch.dim(i);
                        let (_, var) = mean_var(&col);
                        let bw = silverman_bandwidth(var.sqrt(), col.len())
                            .map_err(|_| Error::DegenerateDimension(i))?;
                        Mixture::with_bandwidth(col, bw)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(Self { mode, mixtures })
    }

    pub fn from_mixtures(mode: KdeMode, mixtures: Vec<Mixture>) -> Result<Self> {
        if mixtures.is_empty() || (mode == KdeMode::Identical && mixtures.len() != 1) {
            return Err(Error::InvalidParameter("identical mode takes exactly one mixture".into()));
        }
        Ok(Self { mode, mixtures })
    }

    pub fn mode(&self) -> KdeMode {
        self.mode
    }

    pub fn mixtures(&self) -> &[Mixture] {
        &self.mixtures
    }

    pub fn bandwidths(&self) -> Vec<f64> {
        self.mixtures.iter().map(Mixture::bandwidth).collect()
    }

    pub fn pdf(&self, y: f64, dim: Option<usize>) -> Result<f64> {
        let m = match (self.mode, dim) {
            (KdeMode::Identical, _) => &self.mixtures[0],
            (KdeMode::NonIdentical, None) => return Err(Error::MissingDim),
            (KdeMode::NonIdentical, Some(i)) => self.mixtures.get(i).ok_or(Error::DimensionMismatch {
                expected: self.mixtures.len(),
                got: i,
            })?,
        };
        Ok(m.pdf(y))
    }
}

/// KL(q‖p) in nats for a KDE marginal against a model, with an estimate of
/// the discretization and truncation error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KlEstimate {
    pub nats: f64,
    pub error_estimate: f64,
}

/// Composite Simpson rule of q·ln(q/p) over the mixture support with step
/// h/8, compared against step h/4 for the error estimate.
pub fn kl_mixture_vs_model(q: &Mixture, p: &TailModel) -> Result<KlEstimate> {
    let (lo, hi) = q.support();
    let log_p = p.log_pdf_fn();
    let integrand = |y: f64| {
        let qy = q.pdf(y);
        if qy > 0.0 {
            qy * (qy.ln() - log_p(y))
        } else {
            0.0
        }
    };
    // cap the grid for very wide heavy-tailed supports
    let step = (q.bandwidth() / 8.0).max((hi - lo) / 4.0e6);
    let mut n = ((hi - lo) / step).ceil() as usize;
    n += n % 2; // Simpson needs an even panel count
    n = n.max(2);
    let dx = (hi - lo) / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| lo + i as f64 * dx).collect();
    let vals = det_map(&grid, integrand);
    let simpson = |stride: usize| {
        let m = n / stride;
        if m < 2 || m % 2 == 1 {
            return None;
        }
        let h = dx * stride as f64;
        let mut s = vals[0] + vals[n];
        for k in 1..m {
            s += vals[k * stride] * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        Some(s * h / 3.0)
    };
    let fine = simpson(1).expect("even panel count");
    let coarse = simpson(2).unwrap_or(fine);
    // mass left outside the support, times a generous log-ratio bound
    let tail = 2.0 * 1e-18 * (1.0 + log_p(lo).abs().max(log_p(hi).abs()));
    Ok(KlEstimate { nats: fine, error_estimate: (fine - coarse).abs() + tail })
}

/// KL of a KDE against `p`: the mean of the per-mixture divergences, i.e.
/// nats per scalar dimension. Multiply by M for the factorized joint.
pub fn kl_kde_vs_model(est: &KdeEstimate, p: &TailModel) -> Result<KlEstimate> {
    let parts = est
        .mixtures()
        .iter()
        .map(|m| kl_mixture_vs_model(m, p))
        .collect::<Result<Vec<_>>>()?;
    let k = parts.len() as f64;
    Ok(KlEstimate {
        nats: parts.iter().map(|e| e.nats).sum::<f64>() / k,
        error_estimate: parts.iter().map(|e| e.error_estimate).sum::<f64>() / k,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitReport {
    pub nu_hat: f64,
    /// Mean negative log-likelihood of the standardized symbols at `nu_hat`.
    pub nll_nats: f64,
    /// Per-dimension (mean, std) removed before fitting.
    pub standardization: Vec<(f64, f64)>,
    pub hit_upper_bound: bool,
    pub nu_max: f64,
}

/// Z-score each dimension with population statistics.
pub fn standardize(batch: &SymbolBatch) -> Result<(Vec<f64>, Vec<(f64, f64)>)> {
    let (rows, cols) = (batch.rows(), batch.cols());
    let mut stats = Vec::with_capacity(cols);
    for i in 0..cols {
        let (mean, var) = mean_var(&batch.dim(i));
        if rows < 2 || !(var > 0.0) {
            return Err(Error::DegenerateDimension(i));
        }
        stats.push((mean, var.sqrt()));
    }
    let mut out = Vec::with_capacity(rows * cols);
    for b in 0..rows {
        for (i, &(mean, sd)) in stats.iter().enumerate() {
            out.push((batch.get(b, i) - mean) / sd);
        }
    }
    Ok((out, stats))
}

/// Mean negative log-likelihood of `ys` under the unit-variance t(ν).
pub fn t_nll(ys: &[f64], nu: f64) -> Result<f64> {
    let model = TailModel::student_t(nu)?;
    let lp = model.log_pdf_fn();
    Ok(-det_sum(ys, lp) / ys.len() as f64)
}

/// Maximum-likelihood tail index by golden-section search on
/// [2.001, `nu_max`].
pub fn fit_nu(batch: &SymbolBatch, nu_max: f64) -> Result<FitReport> {
    if batch.len() < 10 {
        return Err(Error::InsufficientSamples { have: batch.len(), need: 10 });
    }
    if !(nu_max.is_finite() && nu_max > NU_MIN) {
        return Err(Error::InvalidParameter(format!("nu_max {nu_max} must exceed {NU_MIN}")));
    }
    let (ys, standardization) = standardize(batch)?;
    let (nu_hat, nll_nats, hit_upper_bound) = fit_nu_standardized(&ys, nu_max)?;
    Ok(FitReport { nu_hat, nll_nats, standardization, hit_upper_bound, nu_max })
}

/// Golden-section core on already standardized values:
/// (ν̂, NLL at ν̂, ν̂ == ν_max).
pub fn fit_nu_standardized(ys: &[f64], nu_max: f64) -> Result<(f64, f64, bool)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (NU_MIN, nu_max);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = t_nll(ys, c)?;
    let mut fd = t_nll(ys, d)?;
    while b - a > NU_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = t_nll(ys, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = t_nll(ys, d)?;
        }
    }
    let (mut nu, mut f) = if fc <= fd { (c, fc) } else { (d, fd) };
    let f_max = t_nll(ys, nu_max)?;
    if nu_max - nu <= NU_TOL || f_max <= f {
        nu = nu_max;
        f = f_max;
    }
    let f_min = t_nll(ys, NU_MIN)?;
    if f_min < f {
        nu = NU_MIN;
        f = f_min;
    }
    Ok((nu, f, nu == nu_max))
}

/// Mean of -ln p(y) over every entry, in nats.
pub fn nll(batch: &SymbolBatch, model: &TailModel) -> f64 {
    let lp = model.log_pdf_fn();
    -det_sum(batch.values(), lp) / batch.len() as f64
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct QqPoint {
    pub level: f64,
    pub empirical_q: f64,
    pub model_q: f64,
}

/// Empirical vs model quantiles at Hazen positions (k - 0.5)/n.
pub fn qq_data(batch: &SymbolBatch, model: &TailModel, n_quantiles: usize) -> Result<Vec<QqPoint>> {
    let cdf = TailCdf::new(*model)?;
    qq_data_with(batch.values(), &cdf, n_quantiles)
}

pub fn qq_data_with(values: &[f64], cdf: &TailCdf, n_quantiles: usize) -> Result<Vec<QqPoint>> {
    if n_quantiles < 2 || values.len() < n_quantiles {
        return Err(Error::InvalidParameter(format!(
            "need 2 <= n_quantiles ({n_quantiles}) <= sample count ({})",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    (1..=n_quantiles)
        .map(|k| {
            let level = (k as f64 - 0.5) / n_quantiles as f64;
            Ok(QqPoint {
                level,
                empirical_q: hazen_quantile(&sorted, level),
                model_q: cdf.quantile(level)?,
            })
        })
        .collect()
}

/// Quantile of sorted data with order statistic i (0-based) at (i + ½)/n.
pub fn hazen_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let pos = level * n as f64 - 0.5;
    if pos <= 0.0 {
        return sorted[0];
    }
    if pos >= (n - 1) as f64 {
        return sorted[n - 1];
    }
    let i = pos.floor() as usize;
    let w = pos - i as f64;
    sorted[i] * (1.0 - w) + sorted[i + 1] * w
}
