//! Block-fading Kronecker MIMO channels, uplink pilot observation and MMSE
//! channel estimation.
//!
//! Per-link matrices are `N × M` (UE antennas × BS antennas) and stored
//! row-major inside a flat buffer indexed by `(k, j)`. Vectorization for
//! covariance matrices is column-major, so a Kronecker channel
//! `H = R_UE^{1/2} H̄ R_BS^{1/2}` has `cov(vec H) = σ² (R_BSᵀ ⊗ R_UE)`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::topology::Drop;

/// Coherence-time constant in `T_C = 0.423 / f_d`.
pub const COHERENCE_TIME_FACTOR: f64 = 0.423;

/// Number of resource elements per block, `⌊W_C·T_C⌋` with `W_C = 1/τ_rms`
/// and `T_C = 0.423/f_d`.
pub fn block_size(doppler_hz: f64, delay_spread_s: f64) -> Result<usize> {
    if !(doppler_hz > 0.0) || !doppler_hz.is_finite() {
        return Err(Error::param("doppler_hz", "must be positive"));
    }
    if !(delay_spread_s > 0.0) || !delay_spread_s.is_finite() {
        return Err(Error::param("delay_spread", "must be positive"));
    }
    Ok((COHERENCE_TIME_FACTOR / (doppler_hz * delay_spread_s)).floor() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelProfile {
    /// Extended Pedestrian A, 43 ns rms delay spread.
    Epa,
    /// Extended Typical Urban, 991 ns rms delay spread.
    Etu,
    Custom {
        delay_spread_s: f64,
    },
}

impl ChannelProfile {
    pub fn delay_spread_s(self) -> f64 {
        match self {
            ChannelProfile::Epa => 43e-9,
            ChannelProfile::Etu => 991e-9,
            ChannelProfile::Custom { delay_spread_s } => delay_spread_s,
        }
    }
}

/// Block length and pilot budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceSpec {
    pub doppler_hz: f64,
    pub delay_spread_s: f64,
    pub n_e: usize,
    pub n_t: usize,
}

impl CoherenceSpec {
    pub fn new(doppler_hz: f64, delay_spread_s: f64, n_t: usize) -> Result<Self> {
        let n_e = block_size(doppler_hz, delay_spread_s)?;
        if n_t >= n_e {
            return Err(Error::param("nt", format!("pilot length {n_t} must be below the block size {n_e}")));
        }
        Ok(CoherenceSpec { doppler_hz, delay_spread_s, n_e, n_t })
    }

    /// Fraction of the block left for data, `1 − N_T/N_E`.
    pub fn overhead_factor(&self) -> f64 {
        1.0 - self.n_t as f64 / self.n_e as f64
    }

    /// Fails unless pilots of all `ue_antennas × num_ues` streams fit
    /// orthogonally in `N_T` resource elements.
    pub fn check_orthogonal(&self, ue_antennas: usize, num_ues: usize) -> Result<()> {
        let required = ue_antennas * num_ues;
        if self.n_t < required {
            return Err(Error::PilotsNotOrthogonal { nt: self.n_t, required });
        }
        Ok(())
    }
}

/// Per-entry variance of the pilot observation noise, `N σ_n² / (N_T P_UE)`.
pub fn pilot_noise_variance(ue_antennas: usize, n_t: usize, p_ue: f64, noise: f64) -> f64 {
    ue_antennas as f64 * noise / (n_t as f64 * p_ue)
}

/// Kronecker spatial correlation at both link ends.
#[derive(Debug, Clone)]
pub struct CorrelationModel {
    r_bs: CMat,
    r_ue: CMat,
    beta: Option<f64>,
    sqrt_bs: Option<CMat>,
    sqrt_ue: Option<CMat>,
    eig_bs: (Vec<f64>, CMat),
    eig_ue: (Vec<f64>, CMat),
}

fn is_identity(a: &CMat) -> bool {
    linalg::max_abs(&(a - CMat::identity(a.nrows(), a.ncols()))) < 1e-15
}

impl CorrelationModel {
    pub fn new(r_bs: CMat, r_ue: CMat) -> Result<Self> {
        for (name, r) in [("r_bs", &r_bs), ("r_ue", &r_ue)] {
            if !r.is_square() || r.nrows() == 0 {
                return Err(Error::param(name, "must be a non-empty square matrix"));
            }
            if linalg::max_abs(&(r - r.adjoint())) > 1e-12 * r.nrows() as f64 {
                return Err(Error::param(name, "must be Hermitian"));
            }
            let tr = r.trace().re;
            if (tr - r.nrows() as f64).abs() > 1e-9 * r.nrows() as f64 {
                return Err(Error::param(name, format!("trace must equal its size, got {tr}")));
            }
        }
        let eig_bs = linalg::hermitian_eigen(&r_bs)?;
        let eig_ue = linalg::hermitian_eigen(&r_ue)?;
        let sqrt_bs = (!is_identity(&r_bs)).then(|| linalg::psd_sqrt(&r_bs)).transpose()?;
        let sqrt_ue = (!is_identity(&r_ue)).then(|| linalg::psd_sqrt(&r_ue)).transpose()?;
        Ok(CorrelationModel { r_bs, r_ue, beta: None, sqrt_bs, sqrt_ue, eig_bs, eig_ue })
    }

    pub fn uncorrelated(bs_antennas: usize, ue_antennas: usize) -> Self {
        Self::new(linalg::identity(bs_antennas), linalg::identity(ue_antennas)).expect("identity is PSD")
    }

    /// Identity at the BS, exponential Toeplitz `[1, β, …, β^{N−1}]` at the UE.
    pub fn toeplitz_ue(bs_antennas: usize, ue_antennas: usize, beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::param("beta", format!("must be in [0, 1), got {beta}")));
        }
        let mut c = Self::new(linalg::identity(bs_antennas), linalg::toeplitz_exponential(beta, ue_antennas))?;
        c.beta = Some(beta);
        Ok(c)
    }

    pub fn r_bs(&self) -> &CMat {
        &self.r_bs
    }

    pub fn r_ue(&self) -> &CMat {
        &self.r_ue
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    pub fn bs_antennas(&self) -> usize {
        self.r_bs.nrows()
    }

    pub fn ue_antennas(&self) -> usize {
        self.r_ue.nrows()
    }

    pub fn is_uncorrelated(&self) -> bool {
        self.sqrt_bs.is_none() && self.sqrt_ue.is_none()
    }

    /// `cov(vec H)` for a link of power `gain`, `gain·(R_BSᵀ ⊗ R_UE)`.
    pub fn link_covariance(&self, gain: f64) -> CMat {
        linalg::kron(&self.r_bs.transpose(), &self.r_ue).scale(gain)
    }
}

/// True channels of every (UE, BS) link in one block, and the estimates the
/// BSs plan with.
#[derive(Debug, Clone)]
pub struct FadingBlock {
    pub t: usize,
    pub ue_antennas: usize,
    pub bs_antennas: usize,
    pub num_ues: usize,
    pub num_bs: usize,
    h: Vec<C64>,
    h_hat: Option<Vec<C64>>,
    /// `N σ_n² / (N_T P_UE)`, zero with perfect CSI.
    pub estimation_noise_var: f64,
}

impl FadingBlock {
    fn offset(&self, k: usize, j: usize) -> usize {
        (k * self.num_bs + j) * self.ue_antennas * self.bs_antennas
    }

    fn link_len(&self) -> usize {
        self.ue_antennas * self.bs_antennas
    }

    /// True `N × M` channel of link (k, j), row-major.
    pub fn h(&self, k: usize, j: usize) -> &[C64] {
        let o = self.offset(k, j);
        &self.h[o..o + self.link_len()]
    }

    /// Estimated channel of link (k, j); the true channel with perfect CSI.
    pub fn h_hat(&self, k: usize, j: usize) -> &[C64] {
        let o = self.offset(k, j);
        match &self.h_hat {
            Some(e) => &e[o..o + self.link_len()],
            None => &self.h[o..o + self.link_len()],
        }
    }

    pub fn h_matrix(&self, k: usize, j: usize) -> CMat {
        CMat::from_row_slice(self.ue_antennas, self.bs_antennas, self.h(k, j))
    }

    pub fn h_hat_matrix(&self, k: usize, j: usize) -> CMat {
        CMat::from_row_slice(self.ue_antennas, self.bs_antennas, self.h_hat(k, j))
    }

    pub fn has_estimates(&self) -> bool {
        self.h_hat.is_some()
    }

    /// Installs channel estimates, switching the block to estimated CSI.
    pub fn set_estimates(&mut self, h_hat: Vec<C64>, noise_var: f64) {
        assert_eq!(h_hat.len(), self.h.len());
        self.h_hat = Some(h_hat);
        self.estimation_noise_var = noise_var;
    }
}

fn complex_normal(rng: &mut ChaCha8Rng, std: f64) -> C64 {
    let s = std * std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

/// `out = a · x` for row-major `a` (r×r) and `x` (r×c).
fn left_mul(a: &CMat, x: &[C64], rows: usize, cols: usize, out: &mut [C64]) {
    for i in 0..rows {
        for c in 0..cols {
            let mut s = C64::new(0.0, 0.0);
            for l in 0..rows {
                s += a[(i, l)] * x[l * cols + c];
            }
            out[i * cols + c] = s;
        }
    }
}

/// `out = x · b` for row-major `x` (r×c) and `b` (c×c).
fn right_mul(x: &[C64], b: &CMat, rows: usize, cols: usize, out: &mut [C64]) {
    for i in 0..rows {
        for c in 0..cols {
            let mut s = C64::new(0.0, 0.0);
            for l in 0..cols {
                s += x[i * cols + l] * b[(l, c)];
            }
            out[i * cols + c] = s;
        }
    }
}

/// Draws independent Kronecker-correlated Rayleigh channels for every link
/// of `drop` in block `t`. The stream depends only on `(seed, t)`.
pub fn draw_fading(drop: &Drop, corr: &CorrelationModel, seed: u64, t: usize) -> FadingBlock {
    let n = corr.ue_antennas();
    let m = corr.bs_antennas();
    let (kk, jj) = (drop.num_ues(), drop.num_bs);
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seeding::derive(seed, t as u64));
    let mut h = Vec::with_capacity(kk * jj * n * m);
    let mut tmp = vec![C64::new(0.0, 0.0); n * m];
    let mut tmp2 = vec![C64::new(0.0, 0.0); n * m];
    for k in 0..kk {
        for j in 0..jj {
            let std = drop.gain(k, j).sqrt();
            for e in tmp.iter_mut() {
                *e = complex_normal(&mut rng, std);
            }
            if let Some(a) = &corr.sqrt_ue {
                left_mul(a, &tmp, n, m, &mut tmp2);
                std::mem::swap(&mut tmp, &mut tmp2);
            }
            if let Some(b) = &corr.sqrt_bs {
                // (R_BS^{1/2})ᴴ = R_BS^{1/2}
                right_mul(&tmp, b, n, m, &mut tmp2);
                std::mem::swap(&mut tmp, &mut tmp2);
            }
            h.extend_from_slice(&tmp);
        }
    }
    FadingBlock {
        t,
        ue_antennas: n,
        bs_antennas: m,
        num_ues: kk,
        num_bs: jj,
        h,
        h_hat: None,
        estimation_noise_var: 0.0,
    }
}

/// Noisy uplink pilot observations of every link, same layout as the
/// channels.
#[derive(Debug, Clone)]
pub struct PilotObservations {
    pub noise_var: f64,
    pub obs: Vec<C64>,
}

/// Observes every channel entry in additive complex Gaussian noise of
/// variance `N σ_n² / (N_T P_UE)`. The unit-variance noise draws depend only
/// on `(seed, t)`, so changing `N_T` rescales the same realization.
pub fn observe_pilots(
    block: &FadingBlock,
    spec: &CoherenceSpec,
    p_ue: f64,
    noise: f64,
    seed: u64,
) -> Result<PilotObservations> {
    spec.check_orthogonal(block.ue_antennas, block.num_ues)?;
    let noise_var = pilot_noise_variance(block.ue_antennas, spec.n_t, p_ue, noise);
    let std = noise_var.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seeding::derive(seed, block.t as u64));
    let obs = block.h.iter().map(|&x| x + complex_normal(&mut rng, std)).collect();
    Ok(PilotObservations { noise_var, obs })
}

/// General MMSE estimate `vec Ĥ = Σ (Σ + v I)⁻¹ vec O` of an `rows × cols`
/// channel with covariance `Σ` (column-major vectorization).
pub fn mmse_estimate(obs: &CMat, sigma: &CMat, noise_var: f64) -> Result<CMat> {
    if !(noise_var > 0.0) {
        return Err(Error::param("noise_var", "must be positive for MMSE estimation"));
    }
    let n = sigma.nrows();
    if n != obs.len() || !sigma.is_square() {
        return Err(Error::param("sigma", "size must match the observation"));
    }
    let a = sigma + CMat::identity(n, n).scale(noise_var);
    let y = linalg::vec_col_major(obs);
    // Σ(Σ+vI)⁻¹ y = Σ z with (Σ+vI) z = y
    let z = a.cholesky().ok_or(Error::NotPositiveDefinite)?.solve(&y);
    let est: DVector<C64> = sigma * z;
    Ok(linalg::unvec_col_major(&est, obs.nrows(), obs.ncols()))
}

/// Closed-form Eq.-(3)-style shrinkage for uncorrelated links:
/// `Ĥ = O / (1 + v/σ²)`.
pub fn mmse_estimate_uncorrelated(obs: &CMat, gain: f64, noise_var: f64) -> CMat {
    obs.scale(1.0 / (1.0 + noise_var / gain))
}

/// Bayesian MSE `tr(Σ − Σ(Σ+vI)⁻¹Σ)` of the MMSE estimator.
pub fn mmse_error_trace(sigma: &CMat, noise_var: f64) -> f64 {
    let n = sigma.nrows();
    let a = sigma + CMat::identity(n, n).scale(noise_var);
    let inv = a.try_inverse().expect("PD");
    (sigma - sigma * inv * sigma).trace().re
}

/// MMSE estimator specialised to Kronecker covariances: in the joint
/// eigenbasis of `R_UE` and `R_BS` the filter is a per-entry shrinkage.
#[derive(Debug, Clone)]
pub struct KroneckerEstimator<'a> {
    corr: &'a CorrelationModel,
}

impl<'a> KroneckerEstimator<'a> {
    pub fn new(corr: &'a CorrelationModel) -> Self {
        KroneckerEstimator { corr }
    }

    /// Estimate of one `N × M` link with large-scale power `gain`.
    pub fn estimate(&self, obs: &CMat, gain: f64, noise_var: f64) -> CMat {
        if self.corr.is_uncorrelated() {
            return mmse_estimate_uncorrelated(obs, gain, noise_var);
        }
        let (lu, qu) = &self.corr.eig_ue;
        let (lb, qb) = &self.corr.eig_bs;
        let mut y = qu.adjoint() * obs * qb;
        for n in 0..y.nrows() {
            for m in 0..y.ncols() {
                let s = gain * lu[n] * lb[m];
                y[(n, m)] *= s / (s + noise_var);
            }
        }
        qu * y * qb.adjoint()
    }
}

/// Replaces the block's planning channels with MMSE estimates from `obs`.
pub fn estimate_block(
    block: &mut FadingBlock,
    obs: &PilotObservations,
    corr: &CorrelationModel,
    drop: &Drop,
) -> Result<()> {
    if !(obs.noise_var > 0.0) {
        return Err(Error::param("noise_var", "must be positive in estimated-CSI mode"));
    }
    let (n, m) = (block.ue_antennas, block.bs_antennas);
    let est = KroneckerEstimator::new(corr);
    let mut h_hat = Vec::with_capacity(obs.obs.len());
    for k in 0..block.num_ues {
        for j in 0..block.num_bs {
            let o = block.offset(k, j);
            let gain = drop.gain(k, j);
            if corr.is_uncorrelated() {
                let f = 1.0 / (1.0 + obs.noise_var / gain);
                h_hat.extend(obs.obs[o..o + n * m].iter().map(|&x| x * f));
            } else {
                let om = CMat::from_row_slice(n, m, &obs.obs[o..o + n * m]);
                let e = est.estimate(&om, gain, obs.noise_var);
                for r in 0..n {
                    for c in 0..m {
                        h_hat.push(e[(r, c)]);
                    }
                }
            }
        }
    }
    block.set_estimates(h_hat, obs.noise_var);
    Ok(())
}
