//! Per-cluster multi-user MIMO planning: multiuser eigenmode transmission
//! (zero-forcing across the selected eigenmodes), equal per-stream power under
//! per-BS constraints, and greedy eigenmode selection on the estimated
//! weighted sum rate.
//!
//! A UE's cluster channel `Ĥ_k` (`N × D`, `D = M·|J_c|`) is represented by its
//! eigen-rows `γ_i = u_iᴴ Ĥ_k = σ_i v_iᴴ`, where `u_i` are the eigenvectors of
//! `Ĥ_k Ĥ_kᴴ`. Stacking all `N` rows gives `Uᴴ Ĥ_k`, a unitary rotation of the
//! channel, so every log-det rate can be evaluated on the rows directly.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::topology::Drop;

/// Smallest-to-largest singular value ratio below which a stacked eigen-row
/// set is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-9;

/// Relative tolerance for ties in the greedy search.
pub const TIE_TOL: f64 = 1e-12;

/// Average inter-cluster interference power at UE `k` when every BS outside
/// `cluster` transmits at full power.
pub fn ici_power(k: usize, cluster: &[usize], drop: &Drop, p_bs: f64) -> f64 {
    let row = drop.gain_row(k);
    let inside: f64 = cluster.iter().map(|&j| row[j]).sum();
    let total: f64 = row.iter().sum();
    // summing the complement directly keeps ξ exactly zero for the full set
    if cluster.len() == drop.num_bs {
        return 0.0;
    }
    let outside: f64 = (0..drop.num_bs).filter(|j| !cluster.contains(j)).map(|j| row[j]).sum();
    debug_assert!((outside - (total - inside)).abs() <= 1e-9 * total);
    p_bs * outside
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenmode {
    pub ue: usize,
    pub index: usize,
    pub singular_value: f64,
    /// Unit-norm right singular vector `v`, length `D`.
    pub right_vector: Vec<C64>,
    /// `σ vᴴ`, the row of `Γ̂_k` belonging to this mode.
    pub gamma_row: Vec<C64>,
}

/// Eigen-rows of an `N × D` channel: all `N` rows `u_iᴴ Ĥ` sorted by
/// descending norm, plus the norms.
fn eigen_rows(h: &CMat) -> (Vec<f64>, Vec<Vec<C64>>) {
    let n = h.nrows();
    let d = h.ncols();
    if n == 1 {
        let row: Vec<C64> = h.row(0).iter().copied().collect();
        let s = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        return (vec![s], vec![row]);
    }
    let gram = h * h.adjoint();
    let eig = SymmetricEigen::new(linalg::hermitian_part(&gram));
    let mut rows: Vec<(f64, Vec<C64>)> = (0..n)
        .map(|i| {
            let u = eig.eigenvectors.column(i);
            let row: Vec<C64> = (0..d).map(|c| (0..n).map(|r| u[r].conj() * h[(r, c)]).sum()).collect();
            let s = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            (s, row)
        })
        .collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    rows.into_iter().unzip()
}

/// Eigenmodes of UE `ue`'s cluster channel, strongest first: up to
/// `min(N, D)` modes, truncated to `l_max` when given.
pub fn eigenmodes(ue: usize, h_hat: &CMat, l_max: Option<usize>) -> Vec<Eigenmode> {
    let (sv, rows) = eigen_rows(h_hat);
    let count = h_hat.nrows().min(h_hat.ncols()).min(l_max.unwrap_or(usize::MAX));
    sv.into_iter()
        .zip(rows)
        .take(count)
        .enumerate()
        .map(|(index, (s, gamma_row))| {
            let right_vector = if s > 0.0 {
                gamma_row.iter().map(|z| z.conj() / s).collect()
            } else {
                let mut e = vec![C64::new(0.0, 0.0); h_hat.ncols()];
                e[index.min(h_hat.ncols() - 1)] = C64::new(1.0, 0.0);
                e
            };
            Eigenmode { ue, index, singular_value: s, right_vector, gamma_row }
        })
        .collect()
}

/// Zero-forcing precoders for a set of selected eigenmodes.
#[derive(Debug, Clone)]
pub struct MetPrecoder {
    /// `D × L` matrix of unit-norm columns, one per selected mode.
    pub columns: CMat,
    /// Owning UE of each column.
    pub owners: Vec<usize>,
}

impl MetPrecoder {
    /// Columns belonging to `ue`, in selection order.
    pub fn for_ue(&self, ue: usize) -> CMat {
        let idx: Vec<usize> = (0..self.owners.len()).filter(|&i| self.owners[i] == ue).collect();
        CMat::from_fn(self.columns.nrows(), idx.len(), |r, c| self.columns[(r, idx[c])])
    }

    pub fn num_streams(&self) -> usize {
        self.owners.len()
    }
}

fn stack_rows(modes: &[&Eigenmode]) -> CMat {
    let d = modes.first().map_or(0, |m| m.gamma_row.len());
    CMat::from_fn(modes.len(), d, |r, c| modes[r].gamma_row[c])
}

/// True when the stacked rows have a smallest-to-largest singular value
/// ratio of at least [`RANK_TOL`].
pub fn rows_full_rank(rows: &CMat) -> bool {
    if rows.nrows() > rows.ncols() {
        return false;
    }
    let s = linalg::singular_values(rows);
    match (s.first(), s.last()) {
        (Some(&max), Some(&min)) => max > 0.0 && min >= RANK_TOL * max,
        _ => true,
    }
}

/// [`rows_full_rank`] and [`linalg::pinv`] from a single SVD.
fn full_rank_pinv(rows: &CMat) -> Option<CMat> {
    if rows.nrows() > rows.ncols() {
        return None;
    }
    let svd = rows.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    let smin = svd.singular_values.iter().fold(f64::INFINITY, |m, &s| m.min(s));
    if !(smax > 0.0 && smin >= RANK_TOL * smax) {
        return None;
    }
    let eps = smax * (rows.nrows().max(rows.ncols()) as f64) * f64::EPSILON;
    Some(svd.pseudo_inverse(eps).expect("svd computed with u and v"))
}

/// Pseudo-inverse of the stacked eigen-rows with unit-norm columns.
pub fn met_precoder(modes: &[&Eigenmode]) -> Result<MetPrecoder> {
    let a = stack_rows(modes);
    if !rows_full_rank(&a) {
        return Err(Error::InfeasibleEigenmodeSet);
    }
    let mut g = linalg::pinv(&a);
    for mut col in g.column_iter_mut() {
        let n = col.norm();
        col /= C64::new(n, 0.0);
    }
    Ok(MetPrecoder { columns: g, owners: modes.iter().map(|m| m.ue).collect() })
}

/// Per-BS transmit load `Σ_streams ‖[G]_{rows of j}‖²` for each of the
/// `cluster_size` BSs.
pub fn per_bs_load(columns: &CMat, bs_antennas: usize) -> Vec<f64> {
    let blocks = columns.nrows() / bs_antennas;
    (0..blocks).map(|b| columns.rows(b * bs_antennas, bs_antennas).iter().map(|z| z.norm_sqr()).sum()).collect()
}

/// Equal per-stream power meeting every per-BS constraint, tight at the
/// most loaded BS.
pub fn equal_power(columns: &CMat, bs_antennas: usize, p_bs: f64) -> f64 {
    let max_load = per_bs_load(columns, bs_antennas).into_iter().fold(0.0, f64::max);
    assert!(max_load > 0.0, "equal power needs at least one stream");
    p_bs / max_load
}

/// Constants shared by every UE of one cluster.
#[derive(Debug, Clone)]
pub struct ClusterContext {
    pub bs_set: Vec<usize>,
    pub bs_antennas: usize,
    pub noise: f64,
    pub p_bs: f64,
    /// `1 − N_T/N_E`.
    pub overhead_factor: f64,
    pub l_max: Option<usize>,
}

impl ClusterContext {
    pub fn dim(&self) -> usize {
        self.bs_set.len() * self.bs_antennas
    }
}

/// A schedulable UE of a cluster with its estimated cluster channel.
#[derive(Debug, Clone)]
pub struct ClusterUe {
    pub ue: usize,
    pub alpha: f64,
    /// Inter-cluster interference proxy ξ_k^(c).
    pub xi: f64,
    /// `N × D` estimated channel toward the cluster.
    pub h_hat: CMat,
}

/// Reference estimated weighted sum rate of a selection: direct MET
/// precoder, equal power, and `log₂ det(I + S Ψ̂⁻¹)` per UE.
///
/// `selected` lists `(position in ues, eigenmode index)`.
pub fn estimated_cluster_rate(ctx: &ClusterContext, ues: &[ClusterUe], selected: &[(usize, usize)]) -> Result<f64> {
    if selected.is_empty() {
        return Ok(0.0);
    }
    let modes: Vec<Vec<Eigenmode>> = ues.iter().map(|u| eigenmodes(u.ue, &u.h_hat, None)).collect();
    let picked: Vec<&Eigenmode> = selected.iter().map(|&(p, i)| &modes[p][i]).collect();
    let pre = met_precoder(&picked)?;
    let power = equal_power(&pre.columns, ctx.bs_antennas, ctx.p_bs);
    let mut served: Vec<usize> = selected.iter().map(|s| s.0).collect();
    served.sort_unstable();
    served.dedup();
    let mut total = 0.0;
    for &p in &served {
        let u = &ues[p];
        let n = u.h_hat.nrows();
        let hg = &u.h_hat * pre.for_ue(u.ue);
        let signal = (&hg * hg.adjoint()).scale(power);
        let mut psi = CMat::identity(n, n).scale(ctx.noise + u.xi);
        for &q in served.iter().filter(|&&q| q != p) {
            let hgm = &u.h_hat * pre.for_ue(ues[q].ue);
            psi += (&hgm * hgm.adjoint()).scale(power);
        }
        let x = psi.lu().solve(&signal).ok_or(Error::NotPositiveDefinite)?;
        let det = (CMat::identity(n, n) + x).determinant();
        if !(det.re > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        total += u.alpha * ctx.overhead_factor * det.re.log2();
    }
    Ok(total)
}

/// A UE scheduled within a cluster plan.
#[derive(Debug, Clone)]
pub struct ScheduledUe {
    pub ue: usize,
    /// `D × l_k` unit-norm-column precoder over the cluster's BS antennas.
    pub precoder: CMat,
    /// Eigenmode indices served, in selection order.
    pub modes: Vec<usize>,
    /// Estimated (unweighted, overhead-scaled) rate used in planning.
    pub estimated_rate: f64,
}

impl ScheduledUe {
    pub fn rank(&self) -> usize {
        self.modes.len()
    }
}

/// Result of planning one candidate cluster.
#[derive(Debug, Clone)]
pub struct ClusterPlan {
    pub cluster_id: usize,
    pub bs_set: Vec<usize>,
    pub bs_antennas: usize,
    pub scheduled: Vec<ScheduledUe>,
    /// Per-stream power `P^(c)` in watts.
    pub per_stream_power: f64,
    /// Estimated weighted sum rate `R̂^(c)`.
    pub estimated_rate: f64,
    /// `(ue, eigenmode index)` in selection order.
    pub selected: Vec<(usize, usize)>,
    /// `R̂^(c)` after each accepted addition.
    pub rate_trace: Vec<f64>,
}

impl ClusterPlan {
    pub fn empty(cluster_id: usize, bs_set: Vec<usize>, bs_antennas: usize) -> Self {
        ClusterPlan {
            cluster_id,
            bs_set,
            bs_antennas,
            scheduled: Vec::new(),
            per_stream_power: 0.0,
            estimated_rate: 0.0,
            selected: Vec::new(),
            rate_trace: Vec::new(),
        }
    }

    pub fn num_streams(&self) -> usize {
        self.selected.len()
    }

    /// Per-BS transmitted power `P^(c) Σ ‖[G_{k,j}]_{·,l}‖²`.
    pub fn per_bs_power(&self) -> Vec<f64> {
        let mut load = vec![0.0; self.bs_set.len()];
        for s in &self.scheduled {
            for (b, l) in per_bs_load(&s.precoder, self.bs_antennas).into_iter().enumerate() {
                load[b] += l;
            }
        }
        load.into_iter().map(|l| l * self.per_stream_power).collect()
    }
}

struct PlanUe {
    ue: usize,
    weight: f64,
    /// σ_n² + ξ.
    floor: f64,
    n: usize,
    /// All `N` eigen-rows, row-major `N × D`, strongest first.
    rows: Vec<C64>,
    sv: Vec<f64>,
    /// Number of modes eligible for selection.
    eligible: usize,
}

/// Greedy planner state after a committed set of additions. Tentative
/// additions are scored with the exact rank-one update of the
/// pseudo-inverse (Greville), so each evaluation costs `O(L·D)` per UE
/// instead of a fresh factorization.
struct Planner<'a> {
    ctx: &'a ClusterContext,
    ues: Vec<PlanUe>,
    d: usize,
    /// (ue position, mode index)
    sel: Vec<(usize, usize)>,
    /// Selected rows, `L × D` row-major.
    a: Vec<C64>,
    /// Unnormalized pseudo-inverse, column-major `D × L` (column i at `i*D`).
    g0: Vec<C64>,
    norm2: Vec<f64>,
    /// `L × blocks` squared block norms of the unnormalized columns.
    block2: Vec<f64>,
    /// Per UE position, `N × L` row-major `rows · g0`.
    e: Vec<Vec<C64>>,
    /// UE positions owning at least one selected column, in selection order.
    owners: Vec<usize>,
    /// Per UE position and row, the selected column of that row or `UNSELECTED`.
    col_of: Vec<Vec<usize>>,
    rate: f64,
    s: Scratch,
}

const UNSELECTED: usize = usize::MAX;

#[derive(Default)]
struct Scratch {
    dvec: Vec<C64>,
    r: Vec<C64>,
    bcol: Vec<C64>,
    bn: Vec<f64>,
    norm2: Vec<f64>,
    load: Vec<f64>,
    inv_norm: Vec<f64>,
    b: Vec<C64>,
    psi: Vec<C64>,
    tot: Vec<C64>,
    urows: Vec<usize>,
    own: Vec<usize>,
    y: Vec<C64>,
}

impl<'a> Planner<'a> {
    fn new(ctx: &'a ClusterContext, ues: &[ClusterUe]) -> Self {
        let d = ctx.dim();
        let plan_ues = ues
            .iter()
            .map(|u| {
                assert_eq!(u.h_hat.ncols(), d, "cluster channel width must be M·|J_c|");
                let (sv, rows) = eigen_rows(&u.h_hat);
                let n = u.h_hat.nrows();
                let eligible = n.min(d).min(ctx.l_max.unwrap_or(usize::MAX));
                PlanUe {
                    ue: u.ue,
                    weight: u.alpha * ctx.overhead_factor,
                    floor: ctx.noise + u.xi,
                    n,
                    rows: rows.into_iter().flatten().collect(),
                    sv,
                    eligible,
                }
            })
            .collect::<Vec<_>>();
        let e = plan_ues.iter().map(|_| Vec::new()).collect();
        let col_of = plan_ues.iter().map(|u| vec![UNSELECTED; u.n]).collect();
        Planner {
            ctx,
            ues: plan_ues,
            d,
            sel: Vec::new(),
            a: Vec::new(),
            g0: Vec::new(),
            norm2: Vec::new(),
            block2: Vec::new(),
            e,
            owners: Vec::new(),
            col_of,
            rate: 0.0,
            s: Scratch::default(),
        }
    }

    fn blocks(&self) -> usize {
        self.ctx.bs_set.len()
    }

    fn row(&self, p: usize, i: usize) -> &[C64] {
        &self.ues[p].rows[i * self.d..(i + 1) * self.d]
    }

    fn l(&self) -> usize {
        self.sel.len()
    }

    /// Rebuilds the committed state from scratch for the current selection.
    fn commit(&mut self) {
        let l = self.l();
        let g = (l > 0).then(|| linalg::pinv(&CMat::from_row_slice(l, self.d, &self.a)));
        self.commit_with(g);
    }

    /// As [`commit`](Self::commit), with the pseudo-inverse of the stacked
    /// rows already computed.
    fn commit_with(&mut self, g: Option<CMat>) {
        let (d, l) = (self.d, self.l());
        self.g0.clear();
        if let Some(g) = g {
            debug_assert_eq!(g.shape(), (d, l));
            for c in 0..l {
                self.g0.extend(g.column(c).iter().copied());
            }
        }
        let m = self.ctx.bs_antennas;
        let blocks = self.blocks();
        self.norm2.clear();
        self.block2.clear();
        for c in 0..l {
            let col = &self.g0[c * d..(c + 1) * d];
            let mut total = 0.0;
            for b in 0..blocks {
                let s: f64 = col[b * m..(b + 1) * m].iter().map(|z| z.norm_sqr()).sum();
                self.block2.push(s);
                total += s;
            }
            self.norm2.push(total);
        }
        for p in 0..self.ues.len() {
            let n = self.ues[p].n;
            let mut e = vec![C64::new(0.0, 0.0); n * l];
            for r in 0..n {
                let row = &self.ues[p].rows[r * d..(r + 1) * d];
                for c in 0..l {
                    let col = &self.g0[c * d..(c + 1) * d];
                    e[r * l + c] = row.iter().zip(col).map(|(x, y)| x * y).sum();
                }
            }
            self.e[p] = e;
        }
        for v in &mut self.col_of {
            v.fill(UNSELECTED);
        }
        self.owners.clear();
        for (c, &(p, i)) in self.sel.iter().enumerate() {
            self.col_of[p][i] = c;
            if !self.owners.contains(&p) {
                self.owners.push(p);
            }
        }
        self.rate = self.score(None).expect("committed selection evaluates");
    }

    /// Weighted sum rate of the committed selection plus, optionally, the
    /// eigenmode `(p, i)`. `None` when the addition is numerically
    /// infeasible.
    fn score(&mut self, add: Option<(usize, usize)>) -> Option<f64> {
        let (d, l) = (self.d, self.l());
        let m = self.ctx.bs_antennas;
        let blocks = self.blocks();
        let zero = C64::new(0.0, 0.0);
        let s = &mut self.s;

        // Greville terms for the new row a: d = a·g0, r = a − d·A, b = rᴴ/‖r‖².
        s.dvec.clear();
        s.bcol.clear();
        let mut rn2 = 0.0;
        if let Some((p, i)) = add {
            s.dvec.extend_from_slice(&self.e[p][i * l..(i + 1) * l]);
            let arow = &self.ues[p].rows[i * d..(i + 1) * d];
            let anorm2: f64 = arow.iter().map(|z| z.norm_sqr()).sum();
            s.r.clear();
            s.r.extend_from_slice(arow);
            for (c, dc) in s.dvec.iter().enumerate() {
                let prev = &self.a[c * d..(c + 1) * d];
                for (x, y) in s.r.iter_mut().zip(prev) {
                    *x -= dc * y;
                }
            }
            rn2 = s.r.iter().map(|z| z.norm_sqr()).sum();
            if !(rn2 > RANK_TOL * RANK_TOL * anorm2) || anorm2 == 0.0 {
                return None;
            }
            s.bcol.extend(s.r.iter().map(|x| x.conj() / rn2));
        }
        let has_new = add.is_some();
        let cols = l + has_new as usize;
        if cols == 0 {
            return Some(0.0);
        }

        // column norms and per-BS loads of the updated, normalized precoder
        s.bn.clear();
        if has_new {
            s.bn.extend((0..blocks).map(|b| s.bcol[b * m..(b + 1) * m].iter().map(|z| z.norm_sqr()).sum::<f64>()));
        }
        s.norm2.clear();
        s.load.clear();
        s.load.resize(blocks, 0.0);
        for c in 0..l {
            let dc = if has_new { s.dvec[c] } else { zero };
            let dn = dc.norm_sqr();
            let n2 = if has_new { self.norm2[c] + dn / rn2 } else { self.norm2[c] };
            s.norm2.push(n2);
            let col = &self.g0[c * d..(c + 1) * d];
            for b in 0..blocks {
                let mut blk = self.block2[c * blocks + b];
                if has_new {
                    let gb = &col[b * m..(b + 1) * m];
                    let bb = &s.bcol[b * m..(b + 1) * m];
                    let cross: C64 = gb.iter().zip(bb).map(|(x, y)| x.conj() * y).sum();
                    blk += dn * s.bn[b] - 2.0 * (dc * cross).re;
                }
                s.load[b] += blk.max(0.0) / n2;
            }
        }
        if has_new {
            let n2 = 1.0 / rn2;
            s.norm2.push(n2);
            for (ld, bn) in s.load.iter_mut().zip(&s.bn) {
                *ld += bn / n2;
            }
        }
        let max_load = s.load.iter().copied().fold(0.0, f64::max);
        let power = self.ctx.p_bs / max_load;
        s.inv_norm.clear();
        s.inv_norm.extend(s.norm2.iter().map(|n| 1.0 / n.sqrt()));

        let owner = |c: usize| -> usize {
            if c < l {
                self.sel[c].0
            } else {
                add.expect("new column").0
            }
        };
        let new_owner = add.map(|(p, _)| p).filter(|p| !self.owners.contains(p));

        let mut total = 0.0;
        for p in self.owners.iter().copied().chain(new_owner) {
            let u = &self.ues[p];
            let n = u.n;
            let col_of = |r: usize| -> usize {
                if add == Some((p, r)) {
                    l
                } else {
                    self.col_of[p][r]
                }
            };
            // A selected row is zero-forced against every other column, so
            // when all rows are selected the streams decouple.
            if (0..n).all(|r| col_of(r) != UNSELECTED) {
                let rate: f64 = (0..n).map(|r| (1.0 + power / (s.norm2[col_of(r)] * u.floor)).log2()).sum();
                total += u.weight * rate;
                continue;
            }
            // Rows of B = rows·G (normalized) for the unselected rows only:
            // a selected row is the unit vector of its own column.
            s.urows.clear();
            s.urows.extend((0..n).filter(|&r| col_of(r) == UNSELECTED));
            let nu = s.urows.len();
            s.b.clear();
            s.b.resize(nu * cols, zero);
            for (ui, &r) in s.urows.iter().enumerate() {
                let brow = &mut s.b[ui * cols..(ui + 1) * cols];
                let f: C64 = if has_new {
                    let row = &u.rows[r * d..(r + 1) * d];
                    row.iter().zip(&s.bcol).map(|(x, y)| x * y).sum()
                } else {
                    zero
                };
                let e = &self.e[p][r * l..(r + 1) * l];
                for cc in 0..l {
                    brow[cc] = (e[cc] - f * s.dvec.get(cc).copied().unwrap_or(zero)) * s.inv_norm[cc];
                }
                if has_new {
                    brow[l] = f * s.inv_norm[l];
                }
            }
            // Ψ restricted to the unselected rows (σ² I on the selected ones),
            // then log det(I + P B_ownᴴ Ψ⁻¹ B_own) by the determinant lemma.
            s.psi.clear();
            s.psi.resize(nu * nu, zero);
            s.own.clear();
            for cc in 0..cols {
                if owner(cc) == p {
                    s.own.push(cc);
                    continue;
                }
                for u1 in 0..nu {
                    let x = s.b[u1 * cols + cc] * power;
                    for u2 in 0..=u1 {
                        s.psi[u1 * nu + u2] += x * s.b[u2 * cols + cc].conj();
                    }
                }
            }
            for r in 0..nu {
                s.psi[r * nu + r] += u.floor;
            }
            linalg::cholesky_in_place(&mut s.psi, nu).ok()?;
            let lp = s.own.len();
            s.y.clear();
            for &c in &s.own {
                let start = s.y.len();
                s.y.extend((0..nu).map(|ui| s.b[ui * cols + c]));
                linalg::forward_substitute(&s.psi, nu, &mut s.y[start..]);
            }
            s.tot.clear();
            s.tot.resize(lp * lp, zero);
            for i1 in 0..lp {
                let y1 = &s.y[i1 * nu..(i1 + 1) * nu];
                for i2 in 0..=i1 {
                    let y2 = &s.y[i2 * nu..(i2 + 1) * nu];
                    let g: C64 = y1.iter().zip(y2).map(|(a, b)| a.conj() * b).sum();
                    s.tot[i1 * lp + i2] = g * power;
                }
                let c = s.own[i1];
                s.tot[i1 * lp + i1] += 1.0 + power * s.inv_norm[c] * s.inv_norm[c] / u.floor;
            }
            let det = linalg::det_hpd_in_place(&mut s.tot, lp).ok()?;
            total += u.weight * det.log2().max(0.0);
        }
        Some(total)
    }

    fn selected_rows(&self, extra: (usize, usize)) -> CMat {
        let l = self.l();
        let row = self.row(extra.0, extra.1).to_vec();
        CMat::from_fn(l + 1, self.d, |r, c| if r < l { self.a[r * self.d + c] } else { row[c] })
    }

    fn push(&mut self, (p, i): (usize, usize)) {
        let row = self.row(p, i).to_vec();
        self.a.extend(row);
        self.sel.push((p, i));
    }

    fn candidates(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (p, u) in self.ues.iter().enumerate() {
            for i in 0..u.eligible {
                if u.sv[i] > 0.0 && !self.sel.contains(&(p, i)) {
                    out.push((p, i));
                }
            }
        }
        out
    }

    fn into_plan(self, cluster_id: usize, rate_trace: Vec<f64>) -> ClusterPlan {
        let (d, l) = (self.d, self.l());
        let mut plan = ClusterPlan::empty(cluster_id, self.ctx.bs_set.clone(), self.ctx.bs_antennas);
        if l == 0 {
            return plan;
        }
        let mut cols = CMat::zeros(d, l);
        for c in 0..l {
            let s = 1.0 / self.norm2[c].sqrt();
            for r in 0..d {
                cols[(r, c)] = self.g0[c * d + r] * s;
            }
        }
        plan.per_stream_power = equal_power(&cols, self.ctx.bs_antennas, self.ctx.p_bs);
        let mut order: Vec<usize> = Vec::new();
        for &(p, _) in &self.sel {
            if !order.contains(&p) {
                order.push(p);
            }
        }
        order.sort_by_key(|&p| self.ues[p].ue);
        for p in order {
            let idx: Vec<usize> = (0..l).filter(|&c| self.sel[c].0 == p).collect();
            let precoder = CMat::from_fn(d, idx.len(), |r, c| cols[(r, idx[c])]);
            plan.scheduled.push(ScheduledUe {
                ue: self.ues[p].ue,
                precoder,
                modes: idx.iter().map(|&c| self.sel[c].1).collect(),
                estimated_rate: 0.0,
            });
        }
        // per-UE estimated rates for diagnostics
        for s in plan.scheduled.iter_mut() {
            let p = self.ues.iter().position(|u| u.ue == s.ue).expect("scheduled UE");
            s.estimated_rate =
                ue_rate_from_rows(&self.ues[p], &cols, &self.sel, p, plan.per_stream_power) * self.ctx.overhead_factor;
        }
        plan.estimated_rate = self.rate;
        plan.selected = self.sel.iter().map(|&(p, i)| (self.ues[p].ue, i)).collect();
        plan.rate_trace = rate_trace;
        plan
    }
}

fn ue_rate_from_rows(u: &PlanUe, cols: &CMat, sel: &[(usize, usize)], p: usize, power: f64) -> f64 {
    let rows = CMat::from_row_slice(u.n, cols.nrows(), &u.rows);
    let b = &rows * cols;
    let n = u.n;
    let mut tot = CMat::identity(n, n).scale(u.floor);
    let mut psi = tot.clone();
    for (c, &(q, _)) in sel.iter().enumerate() {
        let col = b.column(c);
        let outer = (&col * col.adjoint()).scale(power);
        tot += &outer;
        if q != p {
            psi += outer;
        }
    }
    linalg::log2_det_hpd(&tot).unwrap_or(0.0) - linalg::log2_det_hpd(&psi).unwrap_or(0.0)
}

/// Greedy eigenmode selection: starting from nothing, repeatedly adds the
/// eigenmode that maximizes the estimated weighted sum rate, until no
/// addition increases it or `M·|J_c|` modes are selected. Additions that
/// make the stacked rows rank deficient are skipped and never retried.
pub fn greedy_eigenmode_select(cluster_id: usize, ctx: &ClusterContext, ues: &[ClusterUe]) -> ClusterPlan {
    let mut planner = Planner::new(ctx, ues);
    planner.commit();
    let mut excluded: Vec<(usize, usize)> = Vec::new();
    let mut trace = Vec::new();
    while planner.l() < planner.d {
        let mut scored: Vec<((usize, usize), f64)> = Vec::new();
        for cand in planner.candidates() {
            if excluded.contains(&cand) {
                continue;
            }
            match planner.score(Some(cand)) {
                Some(r) => scored.push((cand, r)),
                None => excluded.push(cand),
            }
        }
        let current = planner.rate;
        let mut accepted = None;
        loop {
            // best by rate, lowest (ue, index) on ties
            let mut best: Option<usize> = None;
            for (idx, &(_, r)) in scored.iter().enumerate() {
                match best {
                    None => best = Some(idx),
                    Some(b) if r > scored[b].1 + TIE_TOL * scored[b].1.abs().max(1.0) => best = Some(idx),
                    _ => {}
                }
            }
            let Some(b) = best else { break };
            let (cand, r) = scored[b];
            if !(r > current + TIE_TOL * current.abs().max(1.0)) {
                break;
            }
            if let Some(g) = full_rank_pinv(&planner.selected_rows(cand)) {
                accepted = Some((cand, g));
                break;
            }
            excluded.push(cand);
            scored.swap_remove(b);
            // keep candidate order stable for tie-breaking
            scored.sort_by_key(|&(c, _)| (planner.ues[c.0].ue, c.1));
        }
        let Some((cand, g)) = accepted else { break };
        planner.push(cand);
        planner.commit_with(Some(g));
        trace.push(planner.rate);
    }
    planner.into_plan(cluster_id, trace)
}

/// Exhaustive search over all feasible eigenmode subsets. Exponential;
/// intended as a reference on small instances.
pub fn exhaustive_eigenmode_select(cluster_id: usize, ctx: &ClusterContext, ues: &[ClusterUe]) -> ClusterPlan {
    let mut planner = Planner::new(ctx, ues);
    planner.commit();
    let all = planner.candidates();
    assert!(all.len() <= 20, "exhaustive eigenmode search limited to 20 modes");
    let mut best: (f64, Vec<(usize, usize)>) = (0.0, Vec::new());
    for mask in 1u32..(1 << all.len()) {
        let subset: Vec<(usize, usize)> = (0..all.len()).filter(|b| mask >> b & 1 == 1).map(|b| all[b]).collect();
        if subset.len() > planner.d {
            continue;
        }
        let rows = CMat::from_fn(subset.len(), planner.d, |r, c| planner.row(subset[r].0, subset[r].1)[c]);
        if !rows_full_rank(&rows) {
            continue;
        }
        planner.sel.clear();
        planner.a.clear();
        for &s in &subset {
            planner.push(s);
        }
        planner.commit();
        if planner.rate > best.0 + TIE_TOL * best.0.abs().max(1.0) {
            best = (planner.rate, subset);
        }
    }
    planner.sel.clear();
    planner.a.clear();
    for &s in &best.1 {
        planner.push(s);
    }
    planner.commit();
    let rate = planner.rate;
    planner.into_plan(cluster_id, vec![rate])
}
