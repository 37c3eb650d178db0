//! Monte-Carlo driver: drops in parallel, blocks in order within a drop.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::channel::{draw_fading, estimate_block, observe_pilots, FadingBlock};
use crate::clustering::{enumerate_candidates, greedy_set_packing, scheduled_ue_set, CandidateSet, ClusterMap};
use crate::config::{RunSetup, Scheduler, Scheme, SimConfig};
use crate::error::{Error, Result};
use crate::eval::{achieved_rates, drop_metrics, percentile, PfState};
use crate::linalg::CMat;
use crate::mumimo::{greedy_eigenmode_select, ici_power, ClusterContext, ClusterPlan, ClusterUe};
use crate::seeding::{self, Stream};
use crate::topology::Drop;

/// Largest rank tracked by the histogram.
pub const MAX_RANK: usize = 8;

/// Relative slack of the per-BS power check.
pub const POWER_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Collect per-block plan dumps.
    pub trace: bool,
}

/// Plan-level comparison of the packed selection against the all-singletons
/// selection on the same plans (DC only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dominance {
    pub blocks: usize,
    /// Blocks where the packed estimated weighted sum rate fell below the
    /// singletons' one.
    pub violations: usize,
    /// Smallest packed/singletons ratio seen (1 if never below).
    pub worst_ratio: f64,
}

impl Default for Dominance {
    fn default() -> Self {
        Dominance { blocks: 0, violations: 0, worst_ratio: 1.0 }
    }
}

impl Dominance {
    fn merge(&mut self, o: &Dominance) {
        self.blocks += o.blocks;
        self.violations += o.violations;
        self.worst_ratio = self.worst_ratio.min(o.worst_ratio);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropOutcome {
    pub index: usize,
    pub seed: u64,
    /// Long-term rate of each UE over the last `T/2` blocks.
    pub ue_rate: Vec<f64>,
    pub cell_rate: f64,
    /// Number of candidate clusters (static map size for static schemes).
    pub candidates: usize,
    /// Scheduled UEs by rank, evaluation window only; index `l−1`.
    pub rank_counts: [u64; MAX_RANK],
    /// Largest per-BS power over `P_BS` in any block.
    pub max_power_ratio: f64,
    pub dominance: Dominance,
    pub trace: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: SimConfig,
    pub n_e: usize,
    pub n_t: usize,
    pub drops: Vec<DropOutcome>,
}

impl RunResult {
    /// Per-UE rates pooled over drops.
    pub fn ue_rates(&self) -> Vec<f64> {
        self.drops.iter().flat_map(|d| d.ue_rate.iter().copied()).collect()
    }

    /// Mean cell rate over drops.
    pub fn cell_rate(&self) -> f64 {
        self.drops.iter().map(|d| d.cell_rate).sum::<f64>() / self.drops.len() as f64
    }

    /// Percentile `p ∈ [0,1]` of the pooled per-UE rates.
    pub fn ue_percentile(&self, p: f64) -> f64 {
        percentile(&self.ue_rates(), p)
    }

    pub fn rank_counts(&self) -> [u64; MAX_RANK] {
        let mut out = [0; MAX_RANK];
        for d in &self.drops {
            for (o, c) in out.iter_mut().zip(d.rank_counts) {
                *o += c;
            }
        }
        out
    }

    /// Rank distribution as fractions summing to 1 (all zero if nothing was
    /// scheduled).
    pub fn rank_distribution(&self) -> [f64; MAX_RANK] {
        let c = self.rank_counts();
        let total: u64 = c.iter().sum();
        let mut out = [0.0; MAX_RANK];
        if total > 0 {
            for (o, v) in out.iter_mut().zip(c) {
                *o = v as f64 / total as f64;
            }
        }
        out
    }

    /// Fraction of scheduled UEs with two or more streams.
    pub fn multi_stream_fraction(&self) -> f64 {
        1.0 - self.rank_distribution()[0]
    }

    pub fn candidate_counts(&self) -> Vec<f64> {
        self.drops.iter().map(|d| d.candidates as f64).collect()
    }

    pub fn max_power_ratio(&self) -> f64 {
        self.drops.iter().map(|d| d.max_power_ratio).fold(0.0, f64::max)
    }

    pub fn dominance(&self) -> Dominance {
        let mut out = Dominance::default();
        for d in &self.drops {
            out.merge(&d.dominance);
        }
        out
    }

    /// Concatenated per-block plan dumps, in drop order.
    pub fn trace(&self) -> String {
        let mut s = String::from("drop,block,cluster,bs,selected,ue:rank,estimated_rate\n");
        for d in &self.drops {
            s.push_str(&d.trace);
        }
        s
    }
}

pub fn run_experiment(cfg: &SimConfig) -> Result<RunResult> {
    run_experiment_with(cfg, &RunOptions::default())
}

pub fn run_experiment_with(cfg: &SimConfig, opts: &RunOptions) -> Result<RunResult> {
    let setup = cfg.validate()?;
    let map = match cfg.scheme {
        Scheme::Dc => None,
        Scheme::Scp => Some(ClusterMap::singletons(setup.scenario.num_bs())),
        Scheme::Isc => Some(ClusterMap::sites(&setup.scenario)),
        Scheme::Sc => Some(match &cfg.cluster_map {
            Some(path) => ClusterMap::load(path, setup.scenario.num_bs())?,
            None => ClusterMap::cross_site(&setup.scenario)?,
        }),
    };
    let drops = (0..cfg.drops)
        .into_par_iter()
        .map(|d| run_drop(cfg, &setup, map.as_ref(), opts, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult { config: cfg.clone(), n_e: setup.n_e, n_t: setup.n_t(), drops })
}

/// `N × M|J_c|` estimated channel of UE `k` toward the BSs of `bs`.
pub fn cluster_channel(block: &FadingBlock, k: usize, bs: &[usize]) -> CMat {
    let n = block.ue_antennas;
    let m = block.bs_antennas;
    CMat::from_fn(n, m * bs.len(), |r, c| block.h_hat(k, bs[c / m])[r * m + c % m])
}

/// Plans every candidate cluster of one block.
pub fn plan_block(
    candidates: &CandidateSet,
    block: &FadingBlock,
    drop: &Drop,
    alphas: &[f64],
    setup: &RunSetup,
    l_max: Option<usize>,
) -> Vec<ClusterPlan> {
    let sc = &setup.scenario;
    candidates
        .clusters
        .par_iter()
        .map(|c| {
            if c.ues.is_empty() {
                return ClusterPlan::empty(c.id, c.bs.clone(), sc.bs_antennas());
            }
            let ctx = ClusterContext {
                bs_set: c.bs.clone(),
                bs_antennas: sc.bs_antennas(),
                noise: sc.noise,
                p_bs: sc.p_bs,
                overhead_factor: setup.overhead_factor,
                l_max,
            };
            let ues: Vec<ClusterUe> = c
                .ues
                .iter()
                .map(|&k| ClusterUe {
                    ue: k,
                    alpha: alphas[k],
                    xi: ici_power(k, &c.bs, drop, sc.p_bs),
                    h_hat: cluster_channel(block, k, &c.bs),
                })
                .collect();
            greedy_eigenmode_select(c.id, &ctx, &ues)
        })
        .collect()
}

fn run_drop(
    cfg: &SimConfig,
    setup: &RunSetup,
    map: Option<&ClusterMap>,
    opts: &RunOptions,
    index: usize,
) -> Result<DropOutcome> {
    let sc = &setup.scenario;
    let seed = seeding::derive(cfg.seed, index as u64);
    let drop = sc.drop_ues(seeding::stream(seed, Stream::Placement));
    let candidates = match map {
        Some(m) => m.attach(&drop),
        None => enumerate_candidates(&drop, cfg.j_max)?,
    };
    let mut pf = PfState::init(&drop, setup.p_bar, sc.noise, cfg.gamma)?;
    let fading_seed = seeding::stream(seed, Stream::Fading);
    let pilot_seed = seeding::stream(seed, Stream::Pilots);
    let k_count = drop.num_ues();

    let mut block_rates = Vec::with_capacity(cfg.blocks);
    let mut rank_counts = [0u64; MAX_RANK];
    let mut max_power_ratio: f64 = 0.0;
    let mut dominance = Dominance::default();
    let mut trace = String::new();

    for t in 0..cfg.blocks {
        let in_block = |e: Error| Error::InBlock { drop: index, block: t, source: Box::new(e) };
        let mut block = draw_fading(&drop, &setup.corr, fading_seed, t);
        if let Some(spec) = &setup.coherence {
            let obs = observe_pilots(&block, spec, sc.p_ue, sc.noise, pilot_seed).map_err(in_block)?;
            estimate_block(&mut block, &obs, &setup.corr, &drop).map_err(in_block)?;
        }
        let alphas = match cfg.scheduler {
            Scheduler::Pf => pf.alphas(),
            Scheduler::MaxRate => vec![1.0; k_count],
        };
        let plans = plan_block(&candidates, &block, &drop, &alphas, setup, cfg.l_max);

        let selected = if cfg.scheme == Scheme::Dc {
            let weights = plans.iter().map(|p| p.estimated_rate).collect();
            let x = greedy_set_packing(&candidates.packing_instance(drop.num_bs, weights));
            let packed: f64 = plans.iter().zip(&x).filter(|(_, &s)| s).map(|(p, _)| p.estimated_rate).sum();
            let singles: f64 = plans.iter().filter(|p| p.bs_set.len() == 1).map(|p| p.estimated_rate).sum();
            dominance.blocks += 1;
            if packed < singles * (1.0 - 1e-12) {
                dominance.violations += 1;
            }
            if singles > 0.0 {
                dominance.worst_ratio = dominance.worst_ratio.min(packed / singles);
            }
            x
        } else {
            vec![true; plans.len()]
        };

        for plan in plans.iter().zip(&selected).filter(|(_, &s)| s).map(|(p, _)| p) {
            for pw in plan.per_bs_power() {
                max_power_ratio = max_power_ratio.max(pw / sc.p_bs);
            }
        }
        let schedule = scheduled_ue_set(plans.iter().zip(&selected).filter(|(_, &s)| s).map(|(p, _)| p), k_count)
            .map_err(in_block)?;
        let rates = achieved_rates(&schedule, &block, sc.noise, setup.overhead_factor).map_err(in_block)?;
        pf.update(&rates);

        if t >= cfg.blocks / 2 {
            for s in &schedule {
                rank_counts[s.rank().min(MAX_RANK) - 1] += 1;
            }
        }
        if opts.trace {
            for (p, &s) in plans.iter().zip(&selected) {
                let bs: Vec<String> = p.bs_set.iter().map(|j| j.to_string()).collect();
                let ues: Vec<String> = p.scheduled.iter().map(|u| format!("{}:{}", u.ue, u.rank())).collect();
                let _ = writeln!(
                    trace,
                    "{index},{t},{},{},{},{},{:e}",
                    p.cluster_id,
                    bs.join(" "),
                    s as u8,
                    ues.join(" "),
                    p.estimated_rate
                );
            }
        }
        block_rates.push(rates);
    }

    let metrics = drop_metrics(&block_rates, drop.num_bs)?;
    Ok(DropOutcome {
        index,
        seed,
        ue_rate: metrics.ue_rate,
        cell_rate: metrics.cell_rate,
        candidates: candidates.len(),
        rank_counts,
        max_power_ratio,
        dominance,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(scheme: &str) -> SimConfig {
        SimConfig::parse(&format!(
            "scheme={scheme}\nsites=1\nbs-per-site=2\nues-per-bs=1\nbs-antennas=1\nblocks=4\ndrops=1\njmax=1"
        ))
        .unwrap()
    }

    #[test]
    fn tiny_scp_smoke() {
        let r = run_experiment(&tiny("scp")).unwrap();
        assert_eq!(r.drops.len(), 1);
        assert_eq!(r.drops[0].ue_rate.len(), 2);
        assert!(r.max_power_ratio() <= 1.0 + POWER_SLACK);
        // one antenna per BS: at most one stream per BS
        let c = r.rank_counts();
        assert_eq!(c[1..].iter().sum::<u64>(), 0);
        assert!(c[0] <= 2 * 2);
    }

    #[test]
    fn cluster_channel_layout() {
        let cfg = tiny("dc");
        let setup = cfg.validate().unwrap();
        let drop = setup.scenario.drop_ues(3);
        let block = draw_fading(&drop, &setup.corr, 5, 0);
        let h = cluster_channel(&block, 1, &[1, 0]);
        assert_eq!(h.shape(), (1, 2));
        assert_eq!(h[(0, 0)], block.h(1, 1)[0]);
        assert_eq!(h[(0, 1)], block.h(1, 0)[0]);
    }

    #[test]
    fn errors_carry_block_context() {
        let e = Error::InBlock { drop: 2, block: 7, source: Box::new(Error::NotPositiveDefinite) };
        assert!(e.to_string().starts_with("drop 2, block 7"));
    }
}
