//! Payload surrogate and the maximum-entropy symbol law.
//!
//! A symbol of amplitude y is credited with ℓ(y) = log₂(1 + α y²/σ²) bits.
//! Maximizing differential entropy under a fixed mean payload C gives the
//! Gibbs form p(y) ∝ (1 + α y²/σ²)^(-Λ). [`solve_maxent`] finds Λ on a
//! symmetric grid by bisection; [`verify_proposition1`] checks the
//! variational claim directly against payload-matched perturbations.

use std::f64::consts::{LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::TailModel;
use crate::error::{Error, Result};
use crate::quad;

pub const DEFAULT_HALF_WIDTH: f64 = 40.0;
pub const DEFAULT_GRID_POINTS: usize = 8001;
const LAMBDA_HI: f64 = 500.0;
const MAX_TAIL_MASS: f64 = 1e-6;

/// Counting model for an amplitude-phase constellation: points packed with
/// efficiency κ into cells of area A₀, plus the point at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApskModel {
    kappa: f64,
    cell_area: f64,
}

impl ApskModel {
    pub fn new(kappa: f64, cell_area: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::InvalidParameter(format!("packing efficiency {kappa} outside (0, 1]")));
        }
        if !(cell_area.is_finite() && cell_area > 0.0) {
            return Err(Error::InvalidParameter(format!("cell area {cell_area} must be > 0")));
        }
        Ok(Self { kappa, cell_area })
    }

    /// M(r) = 1 + κπr²/A₀.
    pub fn count(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::NegativeRadius(r));
        }
        Ok(1.0 + self.kappa * PI * r * r / self.cell_area)
    }

    /// b(r) = log₂ M(r).
    pub fn bits(&self, r: f64) -> Result<f64> {
        Ok(self.count(r)?.log2())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadParams {
    alpha: f64,
    noise_var: f64,
}

impl PayloadParams {
    pub fn new(alpha: f64, noise_var: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1]")));
        }
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::InvalidParameter(format!("noise variance {noise_var} must be > 0")));
        }
        Ok(Self { alpha, noise_var })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Effective per-symbol SNR α y²/σ².
    fn snr(&self, y: f64) -> f64 {
        self.alpha * y * y / self.noise_var
    }

    /// ℓ(y) = log₂(1 + α y²/σ²), in bits.
    pub fn payload(&self, y: f64) -> f64 {
        self.snr(y).ln_1p() / LN_2
    }
}

/// E[ℓ(Y)] in bits for Y drawn from `model`.
pub fn expected_payload(params: &PayloadParams, model: &TailModel) -> Result<f64> {
    let half = quad::integrate_half_line(
        |y| {
            let p = model.pdf(y).unwrap_or(0.0);
            if p == 0.0 {
                0.0
            } else {
                params.payload(y) * p
            }
        },
        1e-13,
    )?;
    Ok(2.0 * half.value)
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxEntSolution {
    pub grid: Vec<f64>,
    /// Cell masses, summing to one.
    pub density: Vec<f64>,
    pub cell_width: f64,
    pub lambda: f64,
    pub payload_bits: f64,
    /// Discrete entropy plus ln(cell width), in nats.
    pub entropy_nats: f64,
    /// Continuum mass of the Gibbs form beyond the grid edge.
    pub tail_mass: f64,
}

impl MaxEntSolution {
    /// Density value (mass / cell width) at grid index `i`.
    pub fn pdf_at(&self, i: usize) -> f64 {
        self.density[i] / self.cell_width
    }

    pub fn variance(&self) -> f64 {
        self.grid.iter().zip(&self.density).map(|(y, p)| y * y * p).sum()
    }

    /// Largest deviation of ln p(y) + Λ ln(1 + αy²/σ²) from its mean over
    /// cells with mass above 1e-12.
    pub fn stationarity_residual(&self, params: &PayloadParams) -> f64 {
        let r: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.density)
            .filter(|(_, &p)| p > 1e-12)
            .map(|(&y, &p)| p.ln() + self.lambda * params.payload(y) * LN_2)
            .collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        r.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
    }

    /// `n` deterministic inverse-CDF draws at Hazen levels (k - ½)/n from
    /// the grid law (uniform within cells), rescaled to unit variance.
    pub fn standardized_quantile_sample(&self, n: usize) -> Vec<f64> {
        // uniform-within-cell adds Δ²/12 to the grid variance
        let var = self.variance() + self.cell_width * self.cell_width / 12.0;
        let scale = 1.0 / var.sqrt();
        let mut cum = Vec::with_capacity(self.density.len() + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for p in &self.density {
            acc += p;
            cum.push(acc);
        }
        let total = acc;
        let left = self.grid[0] - 0.5 * self.cell_width;
        let mut out = Vec::with_capacity(n);
        let mut cell = 0usize;
        for k in 0..n {
            let level = total * (k as f64 + 0.5) / n as f64;
            while cell + 1 < self.density.len() && cum[cell + 1] < level {
                cell += 1;
            }
            let frac = if self.density[cell] > 0.0 {
                ((level - cum[cell]) / self.density[cell]).clamp(0.0, 1.0)
            } else {
                0.5
            };
            out.push((left + (cell as f64 + frac) * self.cell_width) * scale);
        }
        out
    }

    /// KL from this law to the moment-matched Gaussian, in nats: the gap
    /// between the best Gaussian's NLL and the law's own entropy.
    pub fn gaussian_nll_gap(&self) -> f64 {
        let var = self.variance() + self.cell_width * self.cell_width / 12.0;
        let gauss_nll = 0.5 * (2.0 * PI * var).ln() + 0.5;
        gauss_nll - self.entropy_nats
    }
}

/// Grid for a solver call: odd point count, symmetric about zero.
fn make_grid(half_width: f64, points: usize) -> Result<(Vec<f64>, f64)> {
    if points < 201 || points % 2 == 0 {
        return Err(Error::InvalidParameter(format!("grid points must be odd and >= 201, got {points}")));
    }
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::InvalidParameter(format!("grid half-width {half_width} must be > 0")));
    }
    let mid = (points - 1) / 2;
    let dx = half_width / mid as f64;
    // built from the centre so that grid[mid + k] == -grid[mid - k] exactly
    let grid = (0..points)
        .map(|i| if i >= mid { (i - mid) as f64 * dx } else { -((mid - i) as f64 * dx) })
        .collect();
    Ok((grid, dx))
}

struct GibbsGrid {
    grid: Vec<f64>,
    dx: f64,
    /// ln(1 + αy²/σ²), natural-log payload.
    log_snr: Vec<f64>,
}

impl GibbsGrid {
    fn new(params: &PayloadParams, half_width: f64, points: usize) -> Result<Self> {
        let (grid, dx) = make_grid(half_width, points)?;
        let log_snr = grid.iter().map(|&y| params.snr(y).ln_1p()).collect();
        Ok(Self { grid, dx, log_snr })
    }

    fn masses(&self, lambda: f64) -> Vec<f64> {
        // the origin has log_snr = 0, so unnormalized weights are <= 1
        let w: Vec<f64> = self.log_snr.iter().map(|&l| (-lambda * l).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }

    fn payload_bits(&self, masses: &[f64]) -> f64 {
        masses.iter().zip(&self.log_snr).map(|(p, l)| p * l).sum::<f64>() / LN_2
    }

    fn solution(&self, lambda: f64, params: &PayloadParams) -> Result<MaxEntSolution> {
        let density = self.masses(lambda);
        let payload_bits = self.payload_bits(&density);
        let entropy_nats = discrete_entropy(&density) + self.dx.ln();
        let half_width = *self.grid.last().expect("non-empty grid");
        Ok(MaxEntSolution {
            grid: self.grid.clone(),
            density,
            cell_width: self.dx,
            lambda,
            payload_bits,
            entropy_nats,
            tail_mass: gibbs_tail_mass(params, lambda, half_width)?,
        })
    }
}

/// −Σ p ln p over positive masses.
pub fn discrete_entropy(masses: &[f64]) -> f64 {
    -masses.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Fraction of the continuum Gibbs form beyond |y| > `half_width`; 1 when
/// the form is not normalizable (Λ ≤ ½).
pub fn gibbs_tail_mass(params: &PayloadParams, lambda: f64, half_width: f64) -> Result<f64> {
    if lambda <= 0.5 {
        return Ok(1.0);
    }
    let s = (params.noise_var / params.alpha).sqrt();
    // work in u = y/s: ∫(1+u²)^(-Λ)
    let edge = half_width / s;
    let f = |u: f64| (-lambda * (u * u).ln_1p()).exp();
    let total = quad::integrate_half_line(f, 1e-14)?.value;
    let beyond = quad::integrate_half_line(|u| f(u + edge), 1e-16)?.value;
    Ok((beyond / total).min(1.0))
}

/// Gibbs-form solution on the grid for a given Λ, without the truncation
/// check.
pub fn gibbs_on_grid(
    params: &PayloadParams,
    lambda: f64,
    half_width: f64,
    points: usize,
) -> Result<MaxEntSolution> {
    GibbsGrid::new(params, half_width, points)?.solution(lambda, params)
}

/// Find Λ ≥ 0 with grid payload equal to `c_bits` and return the solution.
///
/// Errors with [`Error::InfeasibleConstraint`] when C is not reachable with
/// Λ in [0, 500], and [`Error::GridTruncation`] when the continuum law puts
/// more than 1e-6 of its mass beyond the grid.
pub fn solve_maxent(
    params: &PayloadParams,
    c_bits: f64,
    half_width: f64,
    points: usize,
) -> Result<MaxEntSolution> {
    let sol = solve_maxent_unchecked(params, c_bits, half_width, points)?;
    if sol.tail_mass > MAX_TAIL_MASS {
        return Err(Error::GridTruncation { tail_mass: sol.tail_mass, lambda: sol.lambda });
    }
    Ok(sol)
}

/// [`solve_maxent`] without the grid-truncation check.
pub fn solve_maxent_unchecked(
    params: &PayloadParams,
    c_bits: f64,
    half_width: f64,
    points: usize,
) -> Result<MaxEntSolution> {
    if !(c_bits.is_finite() && c_bits > 0.0) {
        return Err(Error::InfeasibleConstraint(format!("payload {c_bits} bits must be > 0")));
    }
    let g = GibbsGrid::new(params, half_width, points)?;
    let at = |lambda: f64| g.payload_bits(&g.masses(lambda));
    let flat = at(0.0);
    if c_bits >= flat {
        return Err(Error::InfeasibleConstraint(format!(
            "{c_bits} bits is at or above the flat-grid payload {flat:.6}; widen the grid"
        )));
    }
    let steep = at(LAMBDA_HI);
    if c_bits <= steep {
        return Err(Error::InfeasibleConstraint(format!(
            "{c_bits} bits needs Lambda above {LAMBDA_HI} (payload there {steep:.3e})"
        )));
    }
    // payload is strictly decreasing in Λ
    let (mut lo, mut hi) = (0.0, LAMBDA_HI);
    while hi - lo > 1e-13 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if at(mid) > c_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    g.solution(0.5 * (lo + hi), params)
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop1Report {
    pub lambda: f64,
    pub entropy_star_nats: f64,
    pub perturbations: usize,
    /// max over perturbations of h(q) − h(p*); ≤ 1e-9 means no violation.
    pub max_violation: f64,
    pub violations: usize,
    /// Smallest entropy deficit h(p*) − h(q) observed.
    pub min_margin: f64,
    pub max_payload_mismatch_bits: f64,
}

/// Entropy comparison between p* and a perturbed law on the same grid.
pub struct Perturbation {
    pub masses: Vec<f64>,
    pub entropy_nats: f64,
    pub payload_bits: f64,
}

/// Smooth random perturbation of `sol` that keeps total mass and mean
/// payload fixed: q = p*(1 + εφ) with φ orthogonal (under p*) to 1 and ℓ.
pub fn payload_matched_perturbation(
    sol: &MaxEntSolution,
    params: &PayloadParams,
    rng: &mut ChaCha8Rng,
    amplitude: f64,
) -> Perturbation {
    let half = *sol.grid.last().expect("non-empty grid");
    let ell: Vec<f64> = sol.grid.iter().map(|&y| params.payload(y)).collect();
    let sd = sol.variance().sqrt().max(sol.cell_width);
    // a few random Fourier modes plus a random bump, all smooth in y
    let modes: Vec<(f64, f64, f64)> = (0..4)
        .map(|k| {
            let freq = (k + 1) as f64 * PI / (4.0 * sd).min(half);
            (rng.random_range(-1.0..1.0), freq, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let bump_at = rng.random_range(-2.0..2.0) * sd;
    let bump_w = rng.random_range(0.3..1.5) * sd;
    let bump_a = rng.random_range(-1.0..1.0);
    let mut phi: Vec<f64> = sol
        .grid
        .iter()
        .map(|&y| {
            let mut v: f64 = modes.iter().map(|(a, f, ph)| a * (f * y + ph).cos()).sum();
            v += bump_a * (-0.5 * ((y - bump_at) / bump_w).powi(2)).exp();
            v
        })
        .collect();
    project_out(&mut phi, &sol.density, &ell);
    let peak = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eps = if peak > 0.0 { amplitude.clamp(0.0, 0.9) / peak } else { 0.0 };
    let masses: Vec<f64> = sol.density.iter().zip(&phi).map(|(p, f)| p * (1.0 + eps * f)).collect();
    let payload_bits = masses.iter().zip(&ell).map(|(q, l)| q * l).sum();
    Perturbation {
        entropy_nats: discrete_entropy(&masses) + sol.cell_width.ln(),
        payload_bits,
        masses,
    }
}

/// Remove from φ its p-weighted components along 1 and ℓ.
fn project_out(phi: &mut [f64], p: &[f64], ell: &[f64]) {
    let e = |f: &dyn Fn(usize) -> f64| -> f64 { (0..p.len()).map(|i| p[i] * f(i)).sum() };
    let m_l = e(&|i| ell[i]);
    let m_ll = e(&|i| ell[i] * ell[i]);
    let m_f = e(&|i| phi[i]);
    let m_fl = e(&|i| phi[i] * ell[i]);
    // solve [1 m_l; m_l m_ll] [a; b] = [m_f; m_fl]
    let det = m_ll - m_l * m_l;
    let (a, b) = if det.abs() > 1e-300 {
        ((m_f * m_ll - m_l * m_fl) / det, (m_fl - m_l * m_f) / det)
    } else {
        (m_f, 0.0)
    };
    for i in 0..phi.len() {
        phi[i] -= a + b * ell[i];
    }
}

/// Solve for p* and compare its entropy with `perturbations` payload-matched
/// alternatives (at least 20).
pub fn verify_proposition1(
    params: &PayloadParams,
    c_bits: f64,
    half_width: f64,
    points: usize,
    perturbations: usize,
    seed: u64,
) -> Result<Prop1Report> {
    let sol = solve_maxent(params, c_bits, half_width, points)?;
    Ok(check_perturbations(&sol, params, perturbations.max(20), seed))
}

pub fn check_perturbations(
    sol: &MaxEntSolution,
    params: &PayloadParams,
    count: usize,
    seed: u64,
) -> Prop1Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_violation = f64::NEG_INFINITY;
    let mut min_margin = f64::INFINITY;
    let mut violations = 0;
    let mut mismatch: f64 = 0.0;
    for _ in 0..count {
        let amp = rng.random_range(0.05..0.9);
        let q = payload_matched_perturbation(sol, params, &mut rng, amp);
        let diff = q.entropy_nats - sol.entropy_nats;
        if diff > 1e-9 {
            violations += 1;
        }
        max_violation = max_violation.max(diff);
        min_margin = min_margin.min(-diff);
        mismatch = mismatch.max((q.payload_bits - sol.payload_bits).abs());
    }
    Prop1Report {
        lambda: sol.lambda,
        entropy_star_nats: sol.entropy_nats,
        perturbations: count,
        max_violation,
        violations,
        min_margin,
        max_payload_mismatch_bits: mismatch,
    }
}
