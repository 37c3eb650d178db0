//! Candidate clusters, static baseline cluster maps, and the central unit's
//! non-overlapping cluster selection (weighted set packing).

use std::collections::BTreeSet;
use std::path::Path;

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::mumimo::ClusterPlan;
use crate::topology::{Drop, Scenario};

/// Largest instance accepted by [`exact_set_packing`].
pub const EXACT_PACKING_LIMIT: usize = 25;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub id: usize,
    /// Sorted BS indices.
    pub bs: Vec<usize>,
    /// Sorted UEs that may be scheduled by this cluster.
    pub ues: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub clusters: Vec<Cluster>,
    pub j_max: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn packing_instance(&self, num_bs: usize, weights: Vec<f64>) -> PackingInstance {
        PackingInstance::new(num_bs, self.clusters.iter().map(|c| c.bs.clone()).collect(), weights)
    }
}

fn ordered(sets: BTreeSet<Vec<usize>>) -> Vec<Vec<usize>> {
    let mut v: Vec<Vec<usize>> = sets.into_iter().collect();
    v.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    v
}

/// All distinct clusters made of the `u ≤ j_max` strongest BSs of some UE.
/// Clusters are numbered by size, then lexicographically; each cluster's UE
/// set is the UEs anchored at one of its BSs.
pub fn enumerate_candidates(drop: &Drop, j_max: usize) -> Result<CandidateSet> {
    if j_max == 0 || j_max > drop.num_bs {
        return Err(Error::param("jmax", format!("must be in 1..={}", drop.num_bs)));
    }
    let mut sets = BTreeSet::new();
    for k in 0..drop.num_ues() {
        for u in 1..=j_max {
            let mut s = drop.bs_order[k][..u].to_vec();
            s.sort_unstable();
            sets.insert(s);
        }
    }
    Ok(attach_anchored(drop, ordered(sets), j_max))
}

fn attach_anchored(drop: &Drop, sets: Vec<Vec<usize>>, j_max: usize) -> CandidateSet {
    let mut anchored = vec![Vec::new(); drop.num_bs];
    for k in 0..drop.num_ues() {
        anchored[drop.anchor(k)].push(k);
    }
    let clusters = sets
        .into_iter()
        .enumerate()
        .map(|(id, bs)| {
            let mut ues: Vec<usize> = bs.iter().flat_map(|&j| anchored[j].iter().copied()).collect();
            ues.sort_unstable();
            Cluster { id, bs, ues }
        })
        .collect();
    CandidateSet { clusters, j_max }
}

/// `Σ_{j=1}^{j_max} C(J, j)`, the number of clusters an exhaustive search
/// would consider.
pub fn exhaustive_cluster_count(num_bs: u64, j_max: u64) -> Result<BigUint> {
    if j_max == 0 || j_max > num_bs {
        return Err(Error::param("jmax", format!("must be in 1..={num_bs}")));
    }
    let mut total = BigUint::from(0u32);
    let mut binom = BigUint::from(1u32);
    for j in 1..=j_max {
        binom = binom * BigUint::from(num_bs - j + 1) / BigUint::from(j);
        total += &binom;
    }
    Ok(total)
}

/// Weighted set packing over BS clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingInstance {
    pub num_bs: usize,
    pub clusters: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

impl PackingInstance {
    pub fn new(num_bs: usize, clusters: Vec<Vec<usize>>, weights: Vec<f64>) -> Self {
        assert_eq!(clusters.len(), weights.len());
        PackingInstance { num_bs, clusters, weights }
    }

    /// `a_{j,c}`.
    pub fn membership(&self, j: usize, c: usize) -> bool {
        self.clusters[c].contains(&j)
    }

    fn masks(&self) -> Vec<u128> {
        self.clusters.iter().map(|c| c.iter().fold(0u128, |m, &j| m | 1u128 << j)).collect()
    }

    pub fn is_feasible(&self, x: &[bool]) -> bool {
        let mut used = vec![false; self.num_bs];
        for (c, _) in x.iter().enumerate().filter(|(_, &on)| on) {
            for &j in &self.clusters[c] {
                if used[j] {
                    return false;
                }
                used[j] = true;
            }
        }
        true
    }

    /// Objective `Σ_c R̂^(c) x_c`, summed in cluster order.
    pub fn objective(&self, x: &[bool]) -> f64 {
        x.iter().zip(&self.weights).filter(|(on, _)| **on).map(|(_, w)| w).sum()
    }
}

/// Greedy cluster selection: repeatedly takes the available cluster with the
/// largest per-BS weight `R̂^(c)/|J_c|` (lowest id on ties) and discards
/// every cluster sharing a BS with it, until none is left.
pub fn greedy_set_packing(inst: &PackingInstance) -> Vec<bool> {
    let n = inst.clusters.len();
    let per_bs: Vec<f64> = (0..n).map(|c| inst.weights[c] / inst.clusters[c].len() as f64).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps ids ascending within a tie class
    order.sort_by(|&a, &b| per_bs[b].total_cmp(&per_bs[a]));
    let mut x = vec![false; n];
    let mut used = vec![false; inst.num_bs];
    let mut i = 0;
    while i < order.len() {
        // among near-ties with the head, the lowest id wins
        let head = per_bs[order[i]];
        let tol = 1e-12 * head.abs().max(1.0);
        let mut best: Option<usize> = None;
        let mut j = i;
        while j < order.len() && head - per_bs[order[j]] <= tol {
            let c = order[j];
            if inst.clusters[c].iter().all(|&b| !used[b]) && best.is_none_or(|b| c < b) {
                best = Some(c);
            }
            j += 1;
        }
        match best {
            Some(c) => {
                x[c] = true;
                for &b in &inst.clusters[c] {
                    used[b] = true;
                }
            }
            None => i = j,
        }
    }
    x
}

/// Optimal set packing by depth-first branch and bound. Among optimal
/// selections the first found (include-before-exclude, id order) is
/// returned, so zero-weight clusters are kept when they fit.
pub fn exact_set_packing(inst: &PackingInstance) -> Result<Vec<bool>> {
    let n = inst.clusters.len();
    if n > EXACT_PACKING_LIMIT {
        return Err(Error::PackingTooLarge { count: n, limit: EXACT_PACKING_LIMIT });
    }
    if inst.num_bs > 128 {
        return Err(Error::param("num_bs", "exact packing supports at most 128 BSs"));
    }
    let masks = inst.masks();
    // suffix sums of positive weights bound the remaining gain
    let mut suffix = vec![0.0; n + 1];
    for c in (0..n).rev() {
        suffix[c] = suffix[c + 1] + inst.weights[c].max(0.0);
    }
    struct Search<'a> {
        masks: &'a [u128],
        weights: &'a [f64],
        suffix: &'a [f64],
        cur: Vec<bool>,
        best: Vec<bool>,
        best_val: f64,
    }
    impl Search<'_> {
        fn go(&mut self, c: usize, used: u128, val: f64) {
            if c == self.masks.len() {
                if val > self.best_val {
                    self.best_val = val;
                    self.best.clone_from(&self.cur);
                }
                return;
            }
            if val + self.suffix[c] <= self.best_val {
                return;
            }
            if used & self.masks[c] == 0 {
                self.cur[c] = true;
                self.go(c + 1, used | self.masks[c], val + self.weights[c]);
                self.cur[c] = false;
            }
            self.go(c + 1, used, val);
        }
    }
    let mut s = Search {
        masks: &masks,
        weights: &inst.weights,
        suffix: &suffix,
        cur: vec![false; n],
        best: vec![false; n],
        best_val: f64::NEG_INFINITY,
    };
    s.go(0, 0, 0.0);
    Ok(s.best)
}

/// Static cluster map of a baseline scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterMap {
    pub clusters: Vec<Vec<usize>>,
}

impl ClusterMap {
    /// Validates that the clusters partition `0..num_bs`.
    pub fn new(mut clusters: Vec<Vec<usize>>, num_bs: usize) -> Result<Self> {
        let mut seen = vec![false; num_bs];
        for c in clusters.iter_mut() {
            if c.is_empty() {
                return Err(Error::ClusterMap("empty cluster".into()));
            }
            c.sort_unstable();
            for &j in c.iter() {
                if j >= num_bs {
                    return Err(Error::ClusterMap(format!("BS {j} out of range (J = {num_bs})")));
                }
                if seen[j] {
                    return Err(Error::ClusterMap(format!("BS {j} appears in more than one cluster")));
                }
                seen[j] = true;
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::ClusterMap(format!("BS {j} is not covered")));
        }
        Ok(ClusterMap { clusters })
    }

    /// Single-cell processing: every BS on its own.
    pub fn singletons(num_bs: usize) -> Self {
        ClusterMap { clusters: (0..num_bs).map(|j| vec![j]).collect() }
    }

    /// Intra-site cooperation: the co-located BSs of each site.
    pub fn sites(scenario: &Scenario) -> Self {
        let b = scenario.config.bs_per_site;
        ClusterMap { clusters: (0..scenario.sites.len()).map(|s| (s * b..(s + 1) * b).collect()).collect() }
    }

    /// Static cross-site clusters: for every site `P`, its 30° sector
    /// together with the 150° sector of the site at `P + (1, 0)·ISD` and the
    /// 270° sector of the site at `P + (½, √3/2)·ISD` (wrapped). The three
    /// sectors face the common triangle they enclose.
    pub fn cross_site(scenario: &Scenario) -> Result<Self> {
        let b = scenario.config.bs_per_site;
        if b != 3 || scenario.sites.len() < 7 {
            return Err(Error::ClusterMap(
                "the default cross-site map needs 3 sectors per site and a wrapped multi-site layout".into(),
            ));
        }
        let isd = scenario.config.inter_site_distance;
        let u = crate::topology::Point::new(isd, 0.0);
        let v = crate::topology::Point::new(0.5 * isd, 0.5 * 3f64.sqrt() * isd);
        let mut clusters = Vec::new();
        for (s, &p) in scenario.sites.iter().enumerate() {
            let right = scenario.site_at(p + u).ok_or_else(|| Error::ClusterMap("site lookup failed".into()))?;
            let up = scenario.site_at(p + v).ok_or_else(|| Error::ClusterMap("site lookup failed".into()))?;
            clusters.push(vec![s * b, right * b + 1, up * b + 2]);
        }
        ClusterMap::new(clusters, scenario.num_bs())
    }

    /// Parses one cluster per line, comma-separated BS indices. Blank lines
    /// and `#` comments are ignored.
    pub fn parse(text: &str, num_bs: usize) -> Result<Self> {
        let mut clusters = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let c = line
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::ClusterMap(format!("line {}: `{}` is not a BS index", n + 1, t.trim())))
                })
                .collect::<Result<Vec<_>>>()?;
            clusters.push(c);
        }
        ClusterMap::new(clusters, num_bs)
    }

    pub fn load(path: &Path, num_bs: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ClusterMap::parse(&text, num_bs)
    }

    /// Candidate set in which every UE is attached to the cluster with the
    /// largest summed gain `Σ_{j∈J_c} σ²_{k,j}` (lowest cluster on ties).
    /// For singletons this is the anchor BS.
    pub fn attach(&self, drop: &Drop) -> CandidateSet {
        let mut clusters: Vec<Cluster> =
            self.clusters.iter().enumerate().map(|(id, bs)| Cluster { id, bs: bs.clone(), ues: Vec::new() }).collect();
        for k in 0..drop.num_ues() {
            let row = drop.gain_row(k);
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for (c, bs) in self.clusters.iter().enumerate() {
                let v: f64 = bs.iter().map(|&j| row[j]).sum();
                if v > best_val {
                    best_val = v;
                    best = c;
                }
            }
            clusters[best].ues.push(k);
        }
        let j_max = self.clusters.iter().map(Vec::len).max().unwrap_or(1);
        CandidateSet { clusters, j_max }
    }
}

/// One UE's transmission in the assembled network-wide schedule.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub ue: usize,
    pub cluster_id: usize,
    /// Serving BSs (sorted).
    pub bs: Vec<usize>,
    /// `M|J_c| × l_k` precoder over the serving BSs' antennas.
    pub precoder: CMat,
    /// Per-stream power in watts.
    pub power: f64,
}

impl Transmission {
    pub fn rank(&self) -> usize {
        self.precoder.ncols()
    }

    /// Precoder embedded into the `J·M`-row network-wide matrix, zero outside
    /// the serving BSs.
    pub fn global_precoder(&self, num_bs: usize, bs_antennas: usize) -> CMat {
        let mut g = CMat::zeros(num_bs * bs_antennas, self.rank());
        for (b, &j) in self.bs.iter().enumerate() {
            for a in 0..bs_antennas {
                for l in 0..self.rank() {
                    g[(j * bs_antennas + a, l)] = self.precoder[(b * bs_antennas + a, l)];
                }
            }
        }
        g
    }
}

/// Union of the scheduled sets of the selected clusters. Errors if a UE
/// would be served by two clusters.
pub fn scheduled_ue_set<'a>(
    plans: impl IntoIterator<Item = &'a ClusterPlan>,
    num_ues: usize,
) -> Result<Vec<Transmission>> {
    let mut seen = vec![false; num_ues];
    let mut out = Vec::new();
    for plan in plans {
        for s in &plan.scheduled {
            if std::mem::replace(&mut seen[s.ue], true) {
                return Err(Error::UeScheduledTwice { ue: s.ue });
            }
            out.push(Transmission {
                ue: s.ue,
                cluster_id: plan.cluster_id,
                bs: plan.bs_set.clone(),
                precoder: s.precoder.clone(),
                power: plan.per_stream_power,
            });
        }
    }
    out.sort_by_key(|t| t.ue);
    Ok(out)
}

/// Number of BSs with a non-zero precoder block for a transmission.
pub fn serving_bs_count(t: &Transmission, num_bs: usize, bs_antennas: usize) -> usize {
    let g = t.global_precoder(num_bs, bs_antennas);
    (0..num_bs).filter(|&j| g.rows(j * bs_antennas, bs_antennas).iter().any(|z| *z != C64::new(0.0, 0.0))).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mumimo::ScheduledUe;
    use crate::topology::{Point, ScenarioConfig};
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(inst: &PackingInstance) -> f64 {
        let n = inst.clusters.len();
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << n) {
            let x: Vec<bool> = (0..n).map(|c| mask >> c & 1 == 1).collect();
            if inst.is_feasible(&x) {
                best = best.max(inst.objective(&x));
            }
        }
        best
    }

    fn random_instance(rng: &mut ChaCha8Rng, max_c: usize, num_bs: usize) -> PackingInstance {
        let n = rng.random_range(1..=max_c);
        let clusters = (0..n)
            .map(|_| {
                let size = rng.random_range(1..=3.min(num_bs));
                let mut s: Vec<usize> = Vec::new();
                while s.len() < size {
                    let j = rng.random_range(0..num_bs);
                    if !s.contains(&j) {
                        s.push(j);
                    }
                }
                s.sort_unstable();
                s
            })
            .collect();
        let weights = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        PackingInstance::new(num_bs, clusters, weights)
    }

    #[test]
    fn exhaustive_counts() {
        assert_eq!(exhaustive_cluster_count(21, 3).unwrap(), BigUint::from(1561u32));
        assert_eq!(exhaustive_cluster_count(2, 1).unwrap(), BigUint::from(2u32));
        assert_eq!(exhaustive_cluster_count(5, 5).unwrap(), BigUint::from(31u32));
        let big = exhaustive_cluster_count(200, 200).unwrap();
        assert_eq!(big, (BigUint::from(1u32) << 200usize) - BigUint::from(1u32));
        assert!(exhaustive_cluster_count(3, 0).is_err());
        assert!(exhaustive_cluster_count(3, 4).is_err());
    }

    #[test]
    fn greedy_prefers_per_bs_rate() {
        let inst = PackingInstance::new(2, vec![vec![0], vec![1], vec![0, 1]], vec![2.0, 2.0, 3.0]);
        let x = greedy_set_packing(&inst);
        assert_eq!(x, vec![true, true, false]);
        assert_eq!(inst.objective(&x), 4.0);

        let inst = PackingInstance::new(2, vec![vec![0], vec![1]], vec![1.0, 2.0]);
        assert_eq!(greedy_set_packing(&inst), vec![true, true]);
    }

    #[test]
    fn greedy_ties_go_to_lowest_id_and_zero_weights_stay() {
        let inst = PackingInstance::new(2, vec![vec![0, 1], vec![0], vec![1]], vec![2.0, 1.0, 1.0]);
        // all per-BS rates equal 1 → cluster 0 wins
        assert_eq!(greedy_set_packing(&inst), vec![true, false, false]);
        let inst = PackingInstance::new(2, vec![vec![0], vec![1]], vec![0.0, 0.0]);
        assert_eq!(greedy_set_packing(&inst), vec![true, true]);
    }

    #[test]
    fn exact_small_cases() {
        let one = PackingInstance::new(1, vec![vec![0]], vec![0.0]);
        assert_eq!(exact_set_packing(&one).unwrap(), vec![true]);
        let two = PackingInstance::new(2, vec![vec![0, 1], vec![1]], vec![5.0, 3.0]);
        assert_eq!(exact_set_packing(&two).unwrap(), vec![true, false]);
        let big = PackingInstance::new(30, (0..26).map(|j| vec![j]).collect(), vec![1.0; 26]);
        assert!(matches!(exact_set_packing(&big), Err(Error::PackingTooLarge { .. })));
    }

    #[test]
    fn exact_matches_brute_force_and_bounds_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let inst = random_instance(&mut rng, 12, 8);
            let x = exact_set_packing(&inst).unwrap();
            assert!(inst.is_feasible(&x));
            assert!((inst.objective(&x) - brute_force(&inst)).abs() <= 1e-12);
            let g = greedy_set_packing(&inst);
            assert!(inst.is_feasible(&g));
            assert!(inst.objective(&g) <= inst.objective(&x) + 1e-12);
        }
    }

    fn tiny_drop() -> Drop {
        // 3 BSs, 4 UEs
        let gains = vec![
            3.0, 2.0, 1.0, //
            1.0, 3.0, 2.0, //
            2.0, 1.0, 3.0, //
            3.0, 1.0, 2.0,
        ];
        Drop::from_gains(vec![Point::new(0.0, 0.0); 4], vec![0, 1, 2, 0], gains, 3)
    }

    #[test]
    fn candidates_on_tiny_drop() {
        let d = tiny_drop();
        let c = enumerate_candidates(&d, 2).unwrap();
        let sets: Vec<Vec<usize>> = c.clusters.iter().map(|c| c.bs.clone()).collect();
        assert_eq!(sets, vec![vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(c.clusters[3].ues, vec![0, 1, 3]);
        assert_eq!(c.clusters[2].ues, vec![2]);
        let one = enumerate_candidates(&d, 1).unwrap();
        assert_eq!(one.len(), 3);
        assert!(enumerate_candidates(&d, 0).is_err());
        assert!(enumerate_candidates(&d, 4).is_err());
    }

    #[test]
    fn candidate_invariants_on_default_drop() {
        let s = Scenario::default_layout();
        let d = s.drop_ues(3);
        let c = enumerate_candidates(&d, 3).unwrap();
        assert!(c.len() <= d.num_ues() * 3);
        for cl in &c.clusters {
            assert!(cl.bs.len() <= 3 && !cl.ues.is_empty());
            assert!(cl.ues.iter().all(|&k| cl.bs.contains(&d.anchor(k))));
        }
        let set: BTreeSet<_> = c.clusters.iter().map(|c| c.bs.clone()).collect();
        assert_eq!(set.len(), c.len());
        for k in 0..d.num_ues() {
            assert!(c.clusters.iter().any(|cl| cl.bs == vec![d.anchor(k)]));
        }
        assert_eq!(c, enumerate_candidates(&d, 3).unwrap());
    }

    #[test]
    fn static_maps_partition_the_network() {
        let s = Scenario::default_layout();
        let isc = ClusterMap::sites(&s);
        assert_eq!(isc.clusters.len(), 7);
        ClusterMap::new(isc.clusters.clone(), 21).unwrap();
        let sc = ClusterMap::cross_site(&s).unwrap();
        assert_eq!(sc.clusters.len(), 7);
        for c in &sc.clusters {
            let sites: BTreeSet<usize> = c.iter().map(|&j| s.bs[j].site).collect();
            assert_eq!(sites.len(), 3, "{c:?}");
        }
        let single = Scenario::new(ScenarioConfig { site_count: 1, ..Default::default() }).unwrap();
        assert!(ClusterMap::cross_site(&single).is_err());
    }

    #[test]
    fn cross_site_sectors_face_each_other() {
        let s = Scenario::default_layout();
        let sc = ClusterMap::cross_site(&s).unwrap();
        for c in &sc.clusters {
            // each boresight points at the centroid of the three (wrapped) sites
            let anchor = *c.iter().find(|&&j| s.bs[j].sector == 0).unwrap();
            let p0 = s.bs[anchor].position;
            let centroid = p0 + Point::new(0.5 * 500.0, 500.0 / (2.0 * 3f64.sqrt()));
            for &j in c {
                let (_, angle) = s.wrap_distance_and_angle(centroid, j);
                assert!(angle.abs() < 1e-9, "BS {j} off by {angle}");
            }
        }
    }

    #[test]
    fn cluster_map_file_validation() {
        assert!(ClusterMap::parse("0,1\n2\n", 3).is_ok());
        assert!(ClusterMap::parse("# comment\n0, 1, 2\n\n", 3).is_ok());
        assert!(matches!(ClusterMap::parse("0,1\n1,2\n", 3), Err(Error::ClusterMap(_))));
        assert!(matches!(ClusterMap::parse("0,1\n", 3), Err(Error::ClusterMap(_))));
        assert!(matches!(ClusterMap::parse("0,x\n", 3), Err(Error::ClusterMap(_))));
        assert!(matches!(ClusterMap::parse("0,1,2,3\n", 3), Err(Error::ClusterMap(_))));
    }

    #[test]
    fn attachment_rules() {
        let d = tiny_drop();
        let scp = ClusterMap::singletons(3).attach(&d);
        for cl in &scp.clusters {
            assert!(cl.ues.iter().all(|&k| d.anchor(k) == cl.bs[0]));
        }
        let pairs = ClusterMap::new(vec![vec![0], vec![1, 2]], 3).unwrap().attach(&d);
        // UE 0: 3 vs 3 → tie goes to cluster 0; UE 3: 3 vs 3 → cluster 0
        assert_eq!(pairs.clusters[0].ues, vec![0, 3]);
        assert_eq!(pairs.clusters[1].ues, vec![1, 2]);
    }

    fn plan_with(id: usize, bs: Vec<usize>, ues: &[usize], m: usize) -> ClusterPlan {
        let d = bs.len() * m;
        let mut p = ClusterPlan::empty(id, bs, m);
        p.per_stream_power = 1.0;
        for &ue in ues {
            p.scheduled.push(ScheduledUe {
                ue,
                precoder: CMat::from_element(d, 1, C64::new(1.0 / (d as f64).sqrt(), 0.0)),
                modes: vec![0],
                estimated_rate: 1.0,
            });
        }
        p
    }

    #[test]
    fn schedule_union_and_embedding() {
        let a = plan_with(0, vec![0, 2], &[1, 4], 2);
        let b = plan_with(1, vec![1], &[0], 2);
        let s = scheduled_ue_set([&a, &b], 5).unwrap();
        assert_eq!(s.iter().map(|t| t.ue).collect::<Vec<_>>(), vec![0, 1, 4]);
        let t = &s[1];
        let g = t.global_precoder(3, 2);
        assert_eq!(g.nrows(), 6);
        assert_eq!(g.rows(2, 2).iter().filter(|z| z.norm() > 0.0).count(), 0);
        assert_eq!(serving_bs_count(t, 3, 2), 2);
        let c = plan_with(2, vec![3], &[4], 2);
        assert!(matches!(scheduled_ue_set([&a, &c], 5), Err(Error::UeScheduledTwice { ue: 4 })));
    }

    proptest! {
        #[test]
        fn greedy_is_always_feasible(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = random_instance(&mut rng, 20, 10);
            let x = greedy_set_packing(&inst);
            prop_assert!(inst.is_feasible(&x));
            // maximality: every unselected cluster overlaps a selected one
            for c in 0..x.len() {
                if !x[c] {
                    let mut y = x.clone();
                    y[c] = true;
                    prop_assert!(!inst.is_feasible(&y));
                }
            }
        }
    }
}
