//! Hexagonal multi-site deployment, UE drops and large-scale fading.
//!
//! Sites sit on a triangular lattice with spacing equal to the inter-site
//! distance. Each site hosts `bs_per_site` co-located sectors whose
//! boresights start at 30° and are evenly spaced, so with three sectors they
//! point at 30°, 150° and 270°, each toward a corner of the site hexagon.
//! Layouts of 1, 7 or 19 sites are supported; the 7- and 19-site layouts are
//! wrapped onto a torus by the six shifts `(R+1)·u + R·v` (and rotations),
//! where `R` is the number of rings and `u`, `v` are the lattice basis.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// Wraps an angle into `[-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t == -PI && theta > 0.0 {
        PI
    } else {
        t
    }
}

/// Sector antenna gain in dB: `-min(12 (θ/θ3dB)², A_s)`, with θ taken
/// relative to boresight and wrapped into `[-π, π]`.
pub fn antenna_gain_db(theta: f64, theta_3db: f64, sidelobe_floor_db: f64) -> f64 {
    let t = wrap_angle(theta);
    -(12.0 * (t / theta_3db).powi(2)).min(sidelobe_floor_db)
}

/// Deployment and link-budget parameters. Defaults reproduce the 21-BS
/// reference layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub site_count: usize,
    pub bs_per_site: usize,
    pub bs_antennas: usize,
    pub inter_site_distance: f64,
    pub min_bs_ue_distance: f64,
    pub p_bs_dbm: f64,
    pub p_ue_dbm: f64,
    pub noise_dbm: f64,
    pub path_loss_exp: f64,
    pub cell_edge_snr_db: f64,
    /// Reference distance at which the full-power SNR equals
    /// `cell_edge_snr_db`. `None` uses the hexagon corner distance ISD/√3.
    pub cell_edge_distance: Option<f64>,
    pub shadow_std_db: f64,
    /// Draw one shadowing value per (UE, site) instead of per (UE, BS).
    pub site_shadowing: bool,
    pub theta_3db: f64,
    pub sidelobe_floor_db: f64,
    pub ues_per_bs: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            site_count: 7,
            bs_per_site: 3,
            bs_antennas: 4,
            inter_site_distance: 500.0,
            min_bs_ue_distance: 35.0,
            p_bs_dbm: 46.0,
            p_ue_dbm: 23.0,
            noise_dbm: -101.0,
            path_loss_exp: 3.5,
            cell_edge_snr_db: 10.0,
            cell_edge_distance: None,
            shadow_std_db: 8.0,
            site_shadowing: false,
            theta_3db: 70.0 * PI / 180.0,
            sidelobe_floor_db: 20.0,
            ues_per_bs: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseStation {
    pub site: usize,
    pub sector: usize,
    pub position: Point,
    /// Boresight azimuth in radians.
    pub boresight: f64,
}

/// Immutable deployment geometry plus the derived link-budget constants.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    /// Axial lattice coordinates of each site.
    pub site_lattice: Vec<(i64, i64)>,
    pub sites: Vec<Point>,
    pub bs: Vec<BaseStation>,
    /// Includes the zero translation first.
    pub wrap_translations: Vec<Point>,
    pub cell_edge_distance: f64,
    pub p_bs: f64,
    pub p_ue: f64,
    pub noise: f64,
    /// σ² at the cell-edge distance with no shadowing on boresight.
    pub gain_at_cell_edge: f64,
}

const LATTICE_U: Point = Point::new(1.0, 0.0);
const LATTICE_V: Point = Point::new(0.5, 0.866_025_403_784_438_6);

fn lattice_point(isd: f64, (i, j): (i64, i64)) -> Point {
    Point::new(
        isd * (i as f64 * LATTICE_U.x + j as f64 * LATTICE_V.x),
        isd * (i as f64 * LATTICE_U.y + j as f64 * LATTICE_V.y),
    )
}

fn rings_for_site_count(n: usize) -> Option<i64> {
    (0..=4).find(|&r| 3 * r * r + 3 * r + 1 == n as i64)
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        let positive = [
            ("inter_site_distance", config.inter_site_distance),
            ("min_bs_ue_distance", config.min_bs_ue_distance),
            ("path_loss_exp", config.path_loss_exp),
            ("theta_3db", config.theta_3db),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("p_bs_dbm", config.p_bs_dbm),
            ("p_ue_dbm", config.p_ue_dbm),
            ("noise_dbm", config.noise_dbm),
            ("cell_edge_snr_db", config.cell_edge_snr_db),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if config.shadow_std_db < 0.0 || config.sidelobe_floor_db < 0.0 {
            return Err(Error::param("shadow_std_db", "must be non-negative"));
        }
        if config.bs_per_site == 0 || config.bs_per_site > 6 {
            return Err(Error::param("bs_per_site", "must be in 1..=6"));
        }
        if config.bs_antennas == 0 {
            return Err(Error::param("bs_antennas", "must be at least 1"));
        }
        if config.ues_per_bs == 0 {
            return Err(Error::param("ues_per_bs", "must be at least 1"));
        }
        let rings = rings_for_site_count(config.site_count)
            .ok_or_else(|| Error::param("site_count", "must be a hexagonal number (1, 7, 19, ...)"))?;
        let isd = config.inter_site_distance;
        if 2.0 * config.min_bs_ue_distance >= isd {
            return Err(Error::param("min_bs_ue_distance", "must be below half the inter-site distance"));
        }
        let cell_edge_distance = config.cell_edge_distance.unwrap_or(isd / 3f64.sqrt());
        if !(cell_edge_distance > 0.0) {
            return Err(Error::param("cell_edge_distance", "must be positive"));
        }

        let mut site_lattice = Vec::new();
        for i in -rings..=rings {
            for j in -rings..=rings {
                if (i.abs() + j.abs() + (i + j).abs()) / 2 <= rings {
                    site_lattice.push((i, j));
                }
            }
        }
        // center first, then by ring and angle
        site_lattice.sort_by(|a, b| {
            let ra = (a.0.abs() + a.1.abs() + (a.0 + a.1).abs()) / 2;
            let rb = (b.0.abs() + b.1.abs() + (b.0 + b.1).abs()) / 2;
            let pa = lattice_point(1.0, *a);
            let pb = lattice_point(1.0, *b);
            ra.cmp(&rb).then(pa.y.atan2(pa.x).rem_euclid(2.0 * PI).total_cmp(&pb.y.atan2(pb.x).rem_euclid(2.0 * PI)))
        });
        let sites: Vec<Point> = site_lattice.iter().map(|&c| lattice_point(isd, c)).collect();

        let mut wrap_translations = vec![Point::new(0.0, 0.0)];
        if rings > 0 {
            let shift = lattice_point(isd, (rings + 1, rings));
            for r in 0..6 {
                let a = r as f64 * PI / 3.0;
                let (s, c) = a.sin_cos();
                wrap_translations.push(Point::new(shift.x * c - shift.y * s, shift.x * s + shift.y * c));
            }
        }

        let b = config.bs_per_site;
        let mut bs = Vec::with_capacity(sites.len() * b);
        for (site, &position) in sites.iter().enumerate() {
            for sector in 0..b {
                let boresight = wrap_angle(PI / 6.0 + sector as f64 * 2.0 * PI / b as f64);
                bs.push(BaseStation { site, sector, position, boresight });
            }
        }

        let p_bs = dbm_to_watts(config.p_bs_dbm);
        let noise = dbm_to_watts(config.noise_dbm);
        let gain_at_cell_edge = db_to_linear(config.cell_edge_snr_db) * noise / p_bs;
        Ok(Scenario {
            p_ue: dbm_to_watts(config.p_ue_dbm),
            config,
            site_lattice,
            sites,
            bs,
            wrap_translations,
            cell_edge_distance,
            p_bs,
            noise,
            gain_at_cell_edge,
        })
    }

    pub fn default_layout() -> Self {
        Scenario::new(ScenarioConfig::default()).expect("default scenario is valid")
    }

    pub fn num_bs(&self) -> usize {
        self.bs.len()
    }

    pub fn num_ues(&self) -> usize {
        self.bs.len() * self.config.ues_per_bs
    }

    pub fn bs_antennas(&self) -> usize {
        self.config.bs_antennas
    }

    pub fn antenna_gain_db(&self, theta: f64) -> f64 {
        antenna_gain_db(theta, self.config.theta_3db, self.config.sidelobe_floor_db)
    }

    /// Minimum distance from `ue` over all wraparound images of BS `bs`, and
    /// the bearing of the UE relative to that image's boresight.
    pub fn wrap_distance_and_angle(&self, ue: Point, bs: usize) -> (f64, f64) {
        let b = &self.bs[bs];
        let mut best = (f64::INFINITY, 0.0);
        for &t in &self.wrap_translations {
            let image = b.position + t;
            let d = ue.dist(image);
            if d < best.0 {
                let delta = ue - image;
                best = (d, wrap_angle(delta.y.atan2(delta.x) - b.boresight));
            }
        }
        best
    }

    /// Linear large-scale gain `σ²` for a link at `distance` with shadowing
    /// and antenna gain given in dB. The constant is chosen so that a
    /// full-power transmission to the cell-edge distance on boresight
    /// without shadowing gives SNR equal to the configured cell-edge SNR.
    pub fn large_scale_gain(&self, distance: f64, shadow_db: f64, antenna_db: f64) -> Result<f64> {
        if distance < self.config.min_bs_ue_distance * (1.0 - 1e-12) {
            return Err(Error::TooClose { distance, min: self.config.min_bs_ue_distance });
        }
        let path = (self.cell_edge_distance / distance).powf(self.config.path_loss_exp);
        Ok(self.gain_at_cell_edge * path * db_to_linear(shadow_db + antenna_db))
    }

    /// Lattice site whose position coincides with `p` modulo the wraparound
    /// translations.
    pub fn site_at(&self, p: Point) -> Option<usize> {
        let tol = 1e-6 * self.config.inter_site_distance;
        for &t in &self.wrap_translations {
            for (s, &site) in self.sites.iter().enumerate() {
                if (site + t).dist(p) < tol {
                    return Some(s);
                }
            }
        }
        None
    }

    fn in_site_hexagon(&self, p: Point) -> bool {
        let apothem = self.config.inter_site_distance / 2.0;
        (0..6).all(|i| {
            let a = i as f64 * PI / 3.0;
            p.x * a.cos() + p.y * a.sin() <= apothem
        })
    }

    /// Drops `ues_per_bs` UEs uniformly in each BS's sector of its site
    /// hexagon, then computes large-scale gains and BS orderings.
    pub fn drop_ues(&self, seed: u64) -> Drop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j_count = self.num_bs();
        let k_count = self.num_ues();
        let b = self.config.bs_per_site as f64;
        let half_width = PI / b;
        let r_hex = self.config.inter_site_distance / 3f64.sqrt();

        let mut positions = Vec::with_capacity(k_count);
        let mut drop_bs = Vec::with_capacity(k_count);
        for (j, bs) in self.bs.iter().enumerate() {
            for _ in 0..self.config.ues_per_bs {
                let p = loop {
                    let off = Point::new(rng.random_range(-r_hex..r_hex), rng.random_range(-r_hex..r_hex));
                    if !self.in_site_hexagon(off) {
                        continue;
                    }
                    let rel = wrap_angle(off.y.atan2(off.x) - bs.boresight);
                    if self.config.bs_per_site > 1 && !(-half_width..half_width).contains(&rel) {
                        continue;
                    }
                    let p = bs.position + off;
                    if (0..j_count).all(|jj| self.wrap_distance_and_angle(p, jj).0 >= self.config.min_bs_ue_distance) {
                        break p;
                    }
                };
                positions.push(p);
                drop_bs.push(j);
            }
        }

        let std = self.config.shadow_std_db;
        let mut gain = vec![0.0; k_count * j_count];
        for (k, &p) in positions.iter().enumerate() {
            let site_shadow: Vec<f64> = (0..self.sites.len())
                .map(|_| {
                    std * {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    }
                })
                .collect();
            for j in 0..j_count {
                let shadow = if self.config.site_shadowing {
                    site_shadow[self.bs[j].site]
                } else {
                    std * {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    }
                };
                let (d, theta) = self.wrap_distance_and_angle(p, j);
                gain[k * j_count + j] = self
                    .large_scale_gain(d, shadow, self.antenna_gain_db(theta))
                    .expect("drop respects the minimum distance");
            }
        }
        Drop::from_gains(positions, drop_bs, gain, j_count)
    }
}

/// One UE placement with its long-term channel quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Drop {
    pub ue_positions: Vec<Point>,
    /// BS whose coverage area the UE was dropped in.
    pub drop_bs: Vec<usize>,
    /// Row-major `K × J` linear gains σ²_{k,j}.
    pub gain: Vec<f64>,
    pub num_bs: usize,
    /// Per UE, BS indices sorted by descending gain (ties: ascending index).
    pub bs_order: Vec<Vec<usize>>,
}

impl Drop {
    pub fn from_gains(ue_positions: Vec<Point>, drop_bs: Vec<usize>, gain: Vec<f64>, num_bs: usize) -> Self {
        assert_eq!(gain.len(), ue_positions.len() * num_bs);
        let bs_order = gain
            .chunks(num_bs)
            .map(|row| {
                let mut idx: Vec<usize> = (0..num_bs).collect();
                idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Drop { ue_positions, drop_bs, gain, num_bs, bs_order }
    }

    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn gain(&self, k: usize, j: usize) -> f64 {
        self.gain[k * self.num_bs + j]
    }

    pub fn gain_row(&self, k: usize) -> &[f64] {
        &self.gain[k * self.num_bs..(k + 1) * self.num_bs]
    }

    pub fn anchor(&self, k: usize) -> usize {
        self.bs_order[k][0]
    }

    /// Writes one line per UE: id, x, y, anchor, then the σ² row.
    pub fn write_text(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "ue,x,y,anchor")?;
        for j in 0..self.num_bs {
            write!(w, ",gain_{j}")?;
        }
        writeln!(w)?;
        for k in 0..self.num_ues() {
            let p = self.ue_positions[k];
            write!(w, "{k},{:.3},{:.3},{}", p.x, p.y, self.anchor(k))?;
            for g in self.gain_row(k) {
                write!(w, ",{g:.6e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_text(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }
}
