//! Ground-truth evaluation with the true channels: achieved rates under an
//! interference-rejection receiver with successive interference
//! cancellation, proportional-fair weights, and system metrics.

use crate::channel::FadingBlock;
use crate::clustering::Transmission;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::topology::Drop;

/// `H_k^{(J)} G` for the true channel of UE `k` toward the BSs of `t`.
pub fn effective_channel(block: &FadingBlock, k: usize, t: &Transmission) -> CMat {
    let (n, m) = (block.ue_antennas, block.bs_antennas);
    let l = t.rank();
    let mut y = CMat::zeros(n, l);
    for (b, &j) in t.bs.iter().enumerate() {
        let h = block.h(k, j);
        for r in 0..n {
            for c in 0..l {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..m {
                    acc += h[r * m + a] * t.precoder[(b * m + a, c)];
                }
                y[(r, c)] += acc;
            }
        }
    }
    y
}

fn position(schedule: &[Transmission], ue: usize) -> Option<usize> {
    schedule.iter().position(|t| t.ue == ue)
}

/// Interference-plus-noise covariance `Ψ_k` at scheduled UE `ue`: noise plus
/// every other scheduled stream in the network, through the true channels.
pub fn interference_covariance(ue: usize, schedule: &[Transmission], block: &FadingBlock, noise: f64) -> CMat {
    let n = block.ue_antennas;
    let mut psi = CMat::identity(n, n).scale(noise);
    for t in schedule.iter().filter(|t| t.ue != ue) {
        let y = effective_channel(block, ue, t);
        psi += (&y * y.adjoint()).scale(t.power);
    }
    linalg::hermitian_part(&psi)
}

/// Achieved rate `(1 − N_T/N_E) log₂ det(I + H G P Gᴴ Hᴴ Ψ⁻¹)` of a scheduled
/// UE, with `Ψ⁻¹` applied through a linear solve.
pub fn achieved_rate(
    ue: usize,
    schedule: &[Transmission],
    block: &FadingBlock,
    noise: f64,
    overhead_factor: f64,
) -> Result<f64> {
    let own = &schedule[position(schedule, ue).ok_or(Error::param("ue", format!("UE {ue} is not scheduled")))?];
    let n = block.ue_antennas;
    let psi = interference_covariance(ue, schedule, block, noise);
    let y = effective_channel(block, ue, own);
    let signal = (&y * y.adjoint()).scale(own.power);
    // det(I + S Ψ⁻¹) = det(I + Ψ⁻¹ S)
    let x = psi.lu().solve(&signal).ok_or(Error::NotPositiveDefinite)?;
    let det = (CMat::identity(n, n) + x).determinant();
    if !(det.re > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(overhead_factor * det.re.log2().max(0.0))
}

/// Per-stream rates `log₂(1 + SINR_l)` of sequential MMSE-SIC decoding:
/// stream `l` is decoded treating streams `l+1..` and all other UEs as
/// interference, then subtracted.
pub fn mmse_sic_stream_rates(
    ue: usize,
    schedule: &[Transmission],
    block: &FadingBlock,
    noise: f64,
) -> Result<Vec<f64>> {
    let own = &schedule[position(schedule, ue).ok_or(Error::param("ue", format!("UE {ue} is not scheduled")))?];
    let psi = interference_covariance(ue, schedule, block, noise);
    let y = effective_channel(block, ue, own);
    let l = y.ncols();
    let mut rates = Vec::with_capacity(l);
    for s in 0..l {
        let mut q = psi.clone();
        for later in (s + 1)..l {
            let h = y.column(later);
            q += (&h * h.adjoint()).scale(own.power);
        }
        let h = y.column(s).into_owned();
        let w = q.lu().solve(&h).ok_or(Error::NotPositiveDefinite)?;
        let sinr = own.power * (h.adjoint() * w)[(0, 0)].re;
        rates.push((1.0 + sinr).log2());
    }
    Ok(rates)
}

/// Achieved rates of every UE (zero when unscheduled), evaluated as
/// `log₂ det(Ψ + S) − log₂ det(Ψ)` by Cholesky.
pub fn achieved_rates(
    schedule: &[Transmission],
    block: &FadingBlock,
    noise: f64,
    overhead_factor: f64,
) -> Result<Vec<f64>> {
    let n = block.ue_antennas;
    let mut rates = vec![0.0; block.num_ues];
    let mut psi = vec![C64::new(0.0, 0.0); n * n];
    let mut tot = vec![C64::new(0.0, 0.0); n * n];
    for t_k in schedule {
        let k = t_k.ue;
        psi.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        tot.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for t in schedule {
            let y = effective_channel(block, k, t);
            let own = t.ue == k;
            for c in 0..y.ncols() {
                for r1 in 0..n {
                    let x = y[(r1, c)] * t.power;
                    for r2 in 0..=r1 {
                        let v = x * y[(r2, c)].conj();
                        tot[r1 * n + r2] += v;
                        if !own {
                            psi[r1 * n + r2] += v;
                        }
                    }
                }
            }
        }
        for r in 0..n {
            tot[r * n + r] += noise;
            psi[r * n + r] += noise;
        }
        let r = linalg::log2_det_hpd_in_place(&mut tot, n)? - linalg::log2_det_hpd_in_place(&mut psi, n)?;
        rates[k] = overhead_factor * r.max(0.0);
    }
    Ok(rates)
}

/// Proportional-fair state: exponentially averaged rates `R̄_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PfState {
    pub avg_rate: Vec<f64>,
    pub gamma: f64,
    pub t: usize,
}

impl PfState {
    /// `R̄_k(1) = log₂(1 + P̄ σ²_{k,anchor} / σ_n²)`.
    pub fn init(drop: &Drop, p_bar: f64, noise: f64, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::param("gamma", "must be in [0, 1)"));
        }
        if !(p_bar > 0.0) {
            return Err(Error::param("p_bar", "must be positive"));
        }
        let avg_rate =
            (0..drop.num_ues()).map(|k| (1.0 + p_bar * drop.gain(k, drop.anchor(k)) / noise).log2()).collect();
        Ok(PfState { avg_rate, gamma, t: 1 })
    }

    /// `α_k = 1/R̄_k`.
    pub fn alpha(&self, k: usize) -> f64 {
        1.0 / self.avg_rate[k]
    }

    pub fn alphas(&self) -> Vec<f64> {
        (0..self.avg_rate.len()).map(|k| self.alpha(k)).collect()
    }

    /// `R̄ ← (1−γ)R̄ + γR`; unscheduled UEs enter with `R = 0`.
    pub fn update(&mut self, rates: &[f64]) {
        assert_eq!(rates.len(), self.avg_rate.len());
        for (avg, &r) in self.avg_rate.iter_mut().zip(rates) {
            *avg = (1.0 - self.gamma) * *avg + self.gamma * r;
        }
        self.t += 1;
    }
}

/// Per-UE long-term rates of one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct DropMetrics {
    /// Average over the last `T/2` blocks.
    pub ue_rate: Vec<f64>,
    /// `Σ_k R̄_k / J`.
    pub cell_rate: f64,
}

/// Averages block rates (`T × K`, block-major) over the second half of the
/// drop.
pub fn drop_metrics(block_rates: &[Vec<f64>], num_bs: usize) -> Result<DropMetrics> {
    let t = block_rates.len();
    if t == 0 || t % 2 != 0 {
        return Err(Error::param("blocks", format!("must be even and positive, got {t}")));
    }
    let k = block_rates[0].len();
    let half = &block_rates[t / 2..];
    let ue_rate: Vec<f64> = (0..k).map(|u| half.iter().map(|r| r[u]).sum::<f64>() / half.len() as f64).collect();
    let cell_rate = ue_rate.iter().sum::<f64>() / num_bs as f64;
    Ok(DropMetrics { ue_rate, cell_rate })
}

/// Percentile with linear interpolation between order statistics at rank
/// `(n−1)p`. `p` is in [0, 1].
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_fading, CorrelationModel};
    use crate::clustering::{scheduled_ue_set, Transmission};
    use crate::mumimo::{exhaustive_eigenmode_select, ClusterContext, ClusterUe};
    use crate::topology::Point;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_drop(rng: &mut ChaCha8Rng, k: usize, j: usize) -> Drop {
        let gains = (0..k * j).map(|_| rng.random_range(0.2..2.0)).collect();
        Drop::from_gains(vec![Point::new(0.0, 0.0); k], vec![0; k], gains, j)
    }

    fn random_schedule(rng: &mut ChaCha8Rng, ues: &[usize], j: usize, m: usize, n: usize) -> Vec<Transmission> {
        ues.iter()
            .map(|&ue| {
                let size = rng.random_range(1..=j.min(3));
                let mut bs: Vec<usize> = (0..j).collect();
                for i in 0..j {
                    let s = rng.random_range(i..j);
                    bs.swap(i, s);
                }
                bs.truncate(size);
                bs.sort_unstable();
                let l = rng.random_range(1..=n.min(size * m));
                let mut g = CMat::from_fn(size * m, l, |_, _| {
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                });
                for mut c in g.column_iter_mut() {
                    let nn = c.norm();
                    c /= C64::new(nn, 0.0);
                }
                Transmission { ue, cluster_id: 0, bs, precoder: g, power: rng.random_range(0.1..3.0) }
            })
            .collect()
    }

    #[test]
    fn lone_ue_sees_only_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_drop(&mut rng, 2, 2);
        let block = draw_fading(&d, &CorrelationModel::uncorrelated(2, 2), 5, 0);
        let mut s = random_schedule(&mut rng, &[0], 2, 2, 2);
        let psi = interference_covariance(0, &s, &block, 0.3);
        assert!(linalg::max_abs(&(psi - CMat::identity(2, 2).scale(0.3))) < 1e-15);
        s.extend(random_schedule(&mut rng, &[1], 2, 2, 2));
        s[1].power = 0.0;
        let psi = interference_covariance(0, &s, &block, 0.3);
        assert!(linalg::max_abs(&(psi - CMat::identity(2, 2).scale(0.3))) < 1e-15);
    }

    #[test]
    fn covariance_matches_term_by_term_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_drop(&mut rng, 3, 3);
        let block = draw_fading(&d, &CorrelationModel::uncorrelated(2, 2), 6, 0);
        let s = random_schedule(&mut rng, &[0, 1, 2], 3, 2, 2);
        let psi = interference_covariance(0, &s, &block, 0.5);
        // network-wide embedding, reverse order
        let mut h = CMat::zeros(2, 6);
        for j in 0..3 {
            h.view_mut((0, 2 * j), (2, 2)).copy_from(&block.h_matrix(0, j));
        }
        let mut oracle = CMat::identity(2, 2).scale(0.5);
        for t in s.iter().rev().filter(|t| t.ue != 0) {
            let g = t.global_precoder(3, 2);
            for l in (0..t.rank()).rev() {
                let y = &h * g.column(l);
                oracle += (&y * y.adjoint()).scale(t.power);
            }
        }
        assert!(linalg::max_abs(&(psi.clone() - oracle)) < 1e-12);
        assert!(linalg::max_abs(&(psi.clone() - psi.adjoint())) < 1e-15);
        let (vals, _) = linalg::hermitian_eigen(&psi).unwrap();
        assert!(vals[0] >= 0.5 - 1e-12);
    }

    #[test]
    fn scalar_rate_is_log2_four() {
        let d = Drop::from_gains(vec![Point::new(0.0, 0.0)], vec![0], vec![1.0], 1);
        let block = draw_fading(&d, &CorrelationModel::uncorrelated(1, 1), 0, 0);
        let h = block.h(0, 0)[0];
        let g = h.conj() / h.norm();
        let t = Transmission {
            ue: 0,
            cluster_id: 0,
            bs: vec![0],
            precoder: CMat::from_element(1, 1, g),
            power: 3.0 / h.norm_sqr(),
        };
        let r = achieved_rate(0, &[t.clone()], &block, 1.0, 0.75).unwrap();
        assert!((r - 1.5).abs() < 1e-12);
        let zero = Transmission { power: 0.0, ..t };
        assert_eq!(achieved_rate(0, &[zero], &block, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn determinant_rate_equals_sic_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..200 {
            let (j, m, n) = (3, 1 + trial % 4, 1 + trial % 3 + 1);
            let d = random_drop(&mut rng, 3, j);
            let block = draw_fading(&d, &CorrelationModel::uncorrelated(m, n), trial as u64, 0);
            let s = random_schedule(&mut rng, &[0, 1, 2], j, m, n);
            let fast = achieved_rates(&s, &block, 0.2, 1.0).unwrap();
            for t in &s {
                let det = achieved_rate(t.ue, &s, &block, 0.2, 1.0).unwrap();
                let sic: f64 = mmse_sic_stream_rates(t.ue, &s, &block, 0.2).unwrap().iter().sum();
                assert!((det - sic).abs() < 1e-9, "{det} vs {sic}");
                assert!((fast[t.ue] - det).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pf_arithmetic() {
        let d = Drop::from_gains(vec![Point::new(0.0, 0.0); 2], vec![0, 0], vec![1.0, 3.0], 1);
        let mut pf = PfState::init(&d, 1.0, 1.0, 0.1).unwrap();
        assert!((pf.avg_rate[0] - 1.0).abs() < 1e-15);
        assert!((pf.avg_rate[1] - 2.0).abs() < 1e-15);
        for k in 0..2 {
            assert!((pf.alpha(k) * pf.avg_rate[k] - 1.0).abs() <= f64::EPSILON);
        }
        pf.update(&[2.0, 2.0]);
        assert!((pf.avg_rate[0] - 1.1).abs() < 1e-15);
        assert_eq!(pf.avg_rate[1], 2.0);
        let mut frozen = PfState { gamma: 0.0, ..pf.clone() };
        frozen.update(&[10.0, 0.0]);
        assert_eq!(frozen.avg_rate, pf.avg_rate);
        assert!(PfState::init(&d, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn pf_stays_positive_when_starved() {
        let d = Drop::from_gains(vec![Point::new(0.0, 0.0)], vec![0], vec![1e-6], 1);
        let mut pf = PfState::init(&d, 1.0, 1.0, 0.1).unwrap();
        for _ in 0..1000 {
            pf.update(&[0.0]);
            assert!(pf.avg_rate[0] > 0.0);
        }
    }

    #[test]
    fn metrics_use_second_half() {
        let trace = vec![vec![9.0, 0.0], vec![7.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]];
        let m = drop_metrics(&trace, 2).unwrap();
        assert_eq!(m.ue_rate, vec![1.5, 0.0]);
        assert_eq!(m.cell_rate, 0.75);
        let constant = vec![vec![0.4; 3]; 6];
        assert!(drop_metrics(&constant, 1).unwrap().ue_rate.iter().all(|r| (r - 0.4).abs() < 1e-15));
        assert_eq!(drop_metrics(&vec![vec![0.0; 3]; 2], 3).unwrap().cell_rate, 0.0);
        assert!(drop_metrics(&trace[..3], 2).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert_eq!(percentile(&v, 0.5), 2.5);
        assert!((percentile(&v, 0.05) - 1.15).abs() < 1e-12);
    }

    /// Sum rate of a 2-BS single-antenna network with arbitrary precoders,
    /// evaluated by the same ground-truth rate formula.
    fn sum_rate(h: &[[C64; 2]; 2], g: &[[C64; 2]; 2], on: [bool; 2], noise: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..2 {
            if !on[k] {
                continue;
            }
            let gain = |m: usize| (h[k][0] * g[m][0] + h[k][1] * g[m][1]).norm_sqr();
            let interf: f64 = (0..2).filter(|&m| m != k && on[m]).map(gain).sum();
            total += (1.0 + gain(k) / (noise + interf)).log2();
        }
        total
    }

    /// Precoders from 8 reals (re/im of g[m][j]), scaled back onto the
    /// per-BS power constraint.
    fn project(x: &[f64; 8], p: f64) -> [[C64; 2]; 2] {
        let mut g = [[C64::new(x[0], x[1]), C64::new(x[2], x[3])], [C64::new(x[4], x[5]), C64::new(x[6], x[7])]];
        for j in 0..2 {
            let load = g[0][j].norm_sqr() + g[1][j].norm_sqr();
            if load > p {
                let s = (p / load).sqrt();
                g[0][j] *= s;
                g[1][j] *= s;
            }
        }
        g
    }

    fn brute_force(h: &[[C64; 2]; 2], p: f64, noise: f64) -> f64 {
        let f = |x: &[f64; 8], on: [bool; 2]| sum_rate(h, &project(x, p), on, noise);
        let steps = 10;
        let amps: Vec<f64> = (0..=steps).map(|i| (p * i as f64 / steps as f64).sqrt()).collect();
        let phases: Vec<f64> = (0..16).map(|i| i as f64 * std::f64::consts::TAU / 16.0).collect();
        let mut best = 0.0_f64;
        // per schedule: grid over per-antenna amplitudes and relative phases,
        // then projected gradient ascent from the best grid points
        for on in [[true, false], [false, true], [true, true]] {
            let mut grid: Vec<(f64, [f64; 8])> = Vec::new();
            for &a00 in &amps {
                for &a01 in &amps {
                    for &a10 in &amps {
                        for &a11 in &amps {
                            for &f0 in &phases {
                                for &f1 in &phases {
                                    let (s0, c0) = f0.sin_cos();
                                    let (s1, c1) = f1.sin_cos();
                                    let x = [a00, 0.0, a01 * c0, a01 * s0, a10, 0.0, a11 * c1, a11 * s1];
                                    let v = f(&x, on);
                                    if v > 0.0 {
                                        grid.push((v, x));
                                    }
                                }
                            }
                        }
                    }
                }
            }
            grid.sort_by(|a, b| b.0.total_cmp(&a.0));
            grid.truncate(20);
            // the interference-nulling region is too narrow for a grid at
            // high SNR; also start from the closed-form 2×2 channel inverse
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let inv = [[h[1][1] / det, -h[0][1] / det], [-h[1][0] / det, h[0][0] / det]];
            // column m of H⁻¹ nulls UE m' ≠ m; g[m][j] = inv[j][m]
            let mut x = [
                inv[0][0].re,
                inv[0][0].im,
                inv[1][0].re,
                inv[1][0].im,
                inv[0][1].re,
                inv[0][1].im,
                inv[1][1].re,
                inv[1][1].im,
            ];
            let scale = (0..2)
                .map(|j| x[2 * j].powi(2) + x[2 * j + 1].powi(2) + x[4 + 2 * j].powi(2) + x[4 + 2 * j + 1].powi(2))
                .fold(0.0, f64::max);
            x.iter_mut().for_each(|v| *v *= (p / scale).sqrt());
            grid.push((f(&x, on), x));
            for &(v0, x0) in grid.iter() {
                let (mut x, mut fx) = (x0, v0);
                let mut step = 1e-2 * p.sqrt();
                for _ in 0..3000 {
                    let mut grad = [0.0; 8];
                    let eps = 1e-7 * p.sqrt();
                    for i in 0..8 {
                        let mut a = x;
                        let mut b = x;
                        a[i] += eps;
                        b[i] -= eps;
                        grad[i] = (f(&a, on) - f(&b, on)) / (2.0 * eps);
                    }
                    let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                    if gn < 1e-12 {
                        break;
                    }
                    let mut moved = false;
                    while step > 1e-14 {
                        let mut y = x;
                        for i in 0..8 {
                            y[i] += step * grad[i] / gn;
                        }
                        // keep the iterate feasible
                        let g = project(&y, p);
                        let y = [
                            g[0][0].re, g[0][0].im, g[0][1].re, g[0][1].im, g[1][0].re, g[1][0].im, g[1][1].re,
                            g[1][1].im,
                        ];
                        let fy = f(&y, on);
                        if fy > fx {
                            x = y;
                            fx = fy;
                            step *= 1.5;
                            moved = true;
                            break;
                        }
                        step *= 0.5;
                    }
                    if !moved {
                        break;
                    }
                }
                best = best.max(fx);
            }
        }
        best
    }

    #[test]
    fn tiny_network_pipeline_close_to_brute_force() {
        let (p, noise) = (1.0, 1e-4);
        for trial in 0..5 {
            let d = Drop::from_gains(vec![Point::new(0.0, 0.0); 2], vec![0, 1], vec![1.0, 0.6, 0.5, 1.0], 2);
            let block = draw_fading(&d, &CorrelationModel::uncorrelated(1, 1), 100 + trial, 0);
            let ctx = ClusterContext {
                bs_set: vec![0, 1],
                bs_antennas: 1,
                noise,
                p_bs: p,
                overhead_factor: 1.0,
                l_max: None,
            };
            let ues: Vec<ClusterUe> = (0..2)
                .map(|k| ClusterUe { ue: k, alpha: 1.0, xi: 0.0, h_hat: CMat::from_fn(1, 2, |_, j| block.h(k, j)[0]) })
                .collect();
            let plan = exhaustive_eigenmode_select(0, &ctx, &ues);
            let schedule = scheduled_ue_set([&plan], 2).unwrap();
            let achieved: f64 = achieved_rates(&schedule, &block, noise, 1.0).unwrap().iter().sum();
            assert!((achieved - plan.estimated_rate).abs() < 1e-9);
            let h = [[block.h(0, 0)[0], block.h(0, 1)[0]], [block.h(1, 0)[0], block.h(1, 1)[0]]];
            let brute = brute_force(&h, p, noise);
            let rel = (brute - achieved) / brute;
            eprintln!("trial {trial}: pipeline {achieved}, brute force {brute}, rel {rel}");
            assert!(rel.abs() <= 0.02, "trial {trial}: pipeline {achieved}, brute force {brute}");
        }
    }
}
