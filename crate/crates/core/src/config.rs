//! Experiment configuration: flat `key=value` settings shared by the config
//! file, the command line and the C API.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::channel::{ChannelProfile, CoherenceSpec, CorrelationModel};
use crate::error::{Error, Result};
use crate::topology::{Scenario, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Single-cell processing.
    Scp,
    /// Intra-site cooperation.
    Isc,
    /// Static cross-site clusters.
    Sc,
    /// Dynamic clustering.
    Dc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiMode {
    Perfect,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheduler {
    /// Proportional fair, `α_k = 1/R̄_k`.
    Pf,
    /// Unweighted sum rate, `α_k = 1`.
    MaxRate,
}

macro_rules! keyword_enum {
    ($t:ty, $what:literal, $($name:literal => $v:expr),+) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($name => Ok($v),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", $what, " `{}` (expected one of: {})"),
                        other,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $v { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(Scheme, "scheme", "scp" => Scheme::Scp, "isc" => Scheme::Isc, "sc" => Scheme::Sc, "dc" => Scheme::Dc);
keyword_enum!(CsiMode, "csi mode", "perfect" => CsiMode::Perfect, "estimated" => CsiMode::Estimated);
keyword_enum!(Scheduler, "scheduler", "pf" => Scheduler::Pf, "maxrate" => Scheduler::MaxRate);

/// Pilot length, either in resource elements or as a fraction of the block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PilotLength {
    Symbols(usize),
    Ratio(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub drops: usize,
    pub blocks: usize,
    pub ue_antennas: usize,
    pub j_max: usize,
    /// `None` = unbounded.
    pub l_max: Option<usize>,
    pub csi: CsiMode,
    pub channel: ChannelKind,
    /// Delay spread for `channel=custom`, seconds.
    pub delay_spread_s: Option<f64>,
    pub doppler_hz: f64,
    pub pilots: Option<PilotLength>,
    pub beta: f64,
    pub gamma: f64,
    pub seed: u64,
    pub scheduler: Scheduler,
    pub cluster_map: Option<PathBuf>,
    /// `P̄` of the PF initialization; defaults to the BS power.
    pub p_bar_dbm: Option<f64>,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Epa,
    Etu,
    Custom,
}

keyword_enum!(ChannelKind, "channel profile", "epa" => ChannelKind::Epa, "etu" => ChannelKind::Etu, "custom" => ChannelKind::Custom);

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scheme: Scheme::Dc,
            drops: 100,
            blocks: 200,
            ue_antennas: 1,
            j_max: 3,
            l_max: None,
            csi: CsiMode::Perfect,
            channel: ChannelKind::Epa,
            delay_spread_s: None,
            doppler_hz: 5.0,
            pilots: None,
            beta: 0.0,
            gamma: 0.1,
            seed: 1,
            scheduler: Scheduler::Pf,
            cluster_map: None,
            p_bar_dbm: None,
            scenario: ScenarioConfig::default(),
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{}`", value.trim())))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        v => Err(Error::Config(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

/// Keys accepted by [`SimConfig::set`].
pub const KEYS: &[&str] = &[
    "scheme",
    "drops",
    "blocks",
    "ue-antennas",
    "bs-antennas",
    "jmax",
    "lmax",
    "csi",
    "channel",
    "delay-spread-ns",
    "doppler-hz",
    "nt",
    "nt-ratio",
    "beta",
    "gamma",
    "seed",
    "scheduler",
    "cluster-map",
    "p-bar-dbm",
    "sites",
    "bs-per-site",
    "ues-per-bs",
    "isd",
    "min-distance",
    "p-bs-dbm",
    "p-ue-dbm",
    "noise-dbm",
    "path-loss-exp",
    "cell-edge-snr-db",
    "cell-edge-distance",
    "shadow-std-db",
    "site-shadowing",
];

impl SimConfig {
    /// Applies one `key=value` setting. Keys use dashes; underscores are
    /// accepted too.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase().replace('_', "-");
        let v = value.trim();
        let sc = &mut self.scenario;
        match key.as_str() {
            "scheme" => self.scheme = v.parse()?,
            "drops" => self.drops = num(&key, v)?,
            "blocks" => self.blocks = num(&key, v)?,
            "ue-antennas" => self.ue_antennas = num(&key, v)?,
            "bs-antennas" => sc.bs_antennas = num(&key, v)?,
            "jmax" => self.j_max = num(&key, v)?,
            "lmax" => self.l_max = if v.eq_ignore_ascii_case("unbounded") { None } else { Some(num(&key, v)?) },
            "csi" => self.csi = v.parse()?,
            "channel" => self.channel = v.parse()?,
            "delay-spread-ns" => self.delay_spread_s = Some(num::<f64>(&key, v)? * 1e-9),
            "doppler-hz" => self.doppler_hz = num(&key, v)?,
            "nt" => self.pilots = Some(PilotLength::Symbols(num(&key, v)?)),
            "nt-ratio" => self.pilots = Some(PilotLength::Ratio(num(&key, v)?)),
            "beta" => self.beta = num(&key, v)?,
            "gamma" => self.gamma = num(&key, v)?,
            "seed" => self.seed = num(&key, v)?,
            "scheduler" => self.scheduler = v.parse()?,
            "cluster-map" => self.cluster_map = Some(PathBuf::from(v)),
            "p-bar-dbm" => self.p_bar_dbm = Some(num(&key, v)?),
            "sites" => sc.site_count = num(&key, v)?,
            "bs-per-site" => sc.bs_per_site = num(&key, v)?,
            "ues-per-bs" => sc.ues_per_bs = num(&key, v)?,
            "isd" => sc.inter_site_distance = num(&key, v)?,
            "min-distance" => sc.min_bs_ue_distance = num(&key, v)?,
            "p-bs-dbm" => sc.p_bs_dbm = num(&key, v)?,
            "p-ue-dbm" => sc.p_ue_dbm = num(&key, v)?,
            "noise-dbm" => sc.noise_dbm = num(&key, v)?,
            "path-loss-exp" => sc.path_loss_exp = num(&key, v)?,
            "cell-edge-snr-db" => sc.cell_edge_snr_db = num(&key, v)?,
            "cell-edge-distance" => sc.cell_edge_distance = Some(num(&key, v)?),
            "shadow-std-db" => sc.shadow_std_db = num(&key, v)?,
            "site-shadowing" => sc.site_shadowing = flag(&key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses a flat `key=value` file on top of the defaults. `#` starts a
    /// comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies every `key=value` line of `text`.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", n + 1)))?;
            self.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SimConfig::parse(&text)
    }

    pub fn channel_profile(&self) -> Result<ChannelProfile> {
        Ok(match self.channel {
            ChannelKind::Epa => ChannelProfile::Epa,
            ChannelKind::Etu => ChannelProfile::Etu,
            ChannelKind::Custom => ChannelProfile::Custom {
                delay_spread_s: self
                    .delay_spread_s
                    .ok_or_else(|| Error::Config("channel=custom needs delay-spread-ns".into()))?,
            },
        })
    }

    /// Checks every cross-field constraint and derives the run parameters.
    pub fn validate(&self) -> Result<RunSetup> {
        let scenario = Scenario::new(self.scenario.clone())?;
        let j = scenario.num_bs();
        let k = scenario.num_ues();
        let n = self.ue_antennas;
        let m = scenario.bs_antennas();
        if self.drops == 0 {
            return Err(Error::Config("drops must be at least 1".into()));
        }
        if self.blocks == 0 || self.blocks % 2 != 0 {
            return Err(Error::Config(format!("blocks must be even and positive, got {}", self.blocks)));
        }
        if n == 0 || n > crate::sim::MAX_RANK {
            return Err(Error::Config(format!("ue-antennas must be in 1..={}, got {n}", crate::sim::MAX_RANK)));
        }
        if self.j_max == 0 || self.j_max > j {
            return Err(Error::Config(format!("jmax must be in 1..={j}, got {}", self.j_max)));
        }
        if let Some(l) = self.l_max {
            if l == 0 || l > n {
                return Err(Error::Config(format!("lmax must be in 1..={n} or unbounded, got {l}")));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1), got {}", self.gamma)));
        }
        if !(self.doppler_hz > 0.0) {
            return Err(Error::Config("doppler-hz must be positive".into()));
        }
        if self.scheme == Scheme::Sc && scenario.sites.len() < 7 && self.cluster_map.is_none() {
            return Err(Error::Config("scheme=sc needs at least 7 sites or a cluster-map file".into()));
        }
        let corr = if self.beta == 0.0 {
            CorrelationModel::uncorrelated(m, n)
        } else {
            CorrelationModel::toeplitz_ue(m, n, self.beta)?
        };
        let profile = self.channel_profile()?;
        let n_e = crate::channel::block_size(self.doppler_hz, profile.delay_spread_s())?;
        let n_t = match self.pilots {
            None => None,
            Some(PilotLength::Symbols(s)) => Some(s),
            Some(PilotLength::Ratio(r)) => {
                if !(r > 0.0 && r < 1.0) {
                    return Err(Error::Config(format!("nt-ratio must be in (0, 1), got {r}")));
                }
                Some((r * n_e as f64).floor() as usize)
            }
        };
        let coherence = match (self.csi, n_t) {
            (CsiMode::Estimated, None) => {
                return Err(Error::Config("csi=estimated needs nt or nt-ratio".into()));
            }
            (CsiMode::Estimated, Some(nt)) => {
                let spec = CoherenceSpec::new(self.doppler_hz, profile.delay_spread_s(), nt)?;
                spec.check_orthogonal(n, k)?;
                Some(spec)
            }
            (CsiMode::Perfect, _) => None,
        };
        let p_bar = self.p_bar_dbm.map_or(scenario.p_bs, crate::topology::dbm_to_watts);
        Ok(RunSetup {
            overhead_factor: coherence.as_ref().map_or(1.0, |c| c.overhead_factor()),
            scenario,
            corr,
            coherence,
            n_e,
            p_bar,
        })
    }

    /// Settings as `key=value` lines that reproduce this configuration.
    pub fn to_text(&self) -> String {
        let sc = &self.scenario;
        let mut out = vec![
            format!("scheme={}", self.scheme),
            format!("drops={}", self.drops),
            format!("blocks={}", self.blocks),
            format!("ue-antennas={}", self.ue_antennas),
            format!("bs-antennas={}", sc.bs_antennas),
            format!("jmax={}", self.j_max),
            format!("lmax={}", self.l_max.map_or("unbounded".to_string(), |l| l.to_string())),
            format!("csi={}", self.csi),
            format!("channel={}", self.channel),
            format!("doppler-hz={}", self.doppler_hz),
            format!("beta={}", self.beta),
            format!("gamma={}", self.gamma),
            format!("seed={}", self.seed),
            format!("scheduler={}", self.scheduler),
        ];
        if let Some(d) = self.delay_spread_s {
            out.push(format!("delay-spread-ns={}", d * 1e9));
        }
        match self.pilots {
            Some(PilotLength::Symbols(s)) => out.push(format!("nt={s}")),
            Some(PilotLength::Ratio(r)) => out.push(format!("nt-ratio={r}")),
            None => {}
        }
        if let Some(p) = &self.cluster_map {
            out.push(format!("cluster-map={}", p.display()));
        }
        if let Some(p) = self.p_bar_dbm {
            out.push(format!("p-bar-dbm={p}"));
        }
        out.extend([
            format!("sites={}", sc.site_count),
            format!("bs-per-site={}", sc.bs_per_site),
            format!("ues-per-bs={}", sc.ues_per_bs),
            format!("isd={}", sc.inter_site_distance),
            format!("min-distance={}", sc.min_bs_ue_distance),
            format!("p-bs-dbm={}", sc.p_bs_dbm),
            format!("p-ue-dbm={}", sc.p_ue_dbm),
            format!("noise-dbm={}", sc.noise_dbm),
            format!("path-loss-exp={}", sc.path_loss_exp),
            format!("cell-edge-snr-db={}", sc.cell_edge_snr_db),
            format!("shadow-std-db={}", sc.shadow_std_db),
            format!("site-shadowing={}", sc.site_shadowing),
        ]);
        if let Some(d) = sc.cell_edge_distance {
            out.push(format!("cell-edge-distance={d}"));
        }
        out.join("\n") + "\n"
    }
}

/// Validated configuration plus everything derived from it.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub scenario: Scenario,
    pub corr: CorrelationModel,
    /// Pilot/coherence parameters; `None` with perfect CSI.
    pub coherence: Option<CoherenceSpec>,
    /// Block size `N_E` of the channel profile.
    pub n_e: usize,
    /// `1 − N_T/N_E`, or 1 with perfect CSI.
    pub overhead_factor: f64,
    pub p_bar: f64,
}

impl RunSetup {
    pub fn n_t(&self) -> usize {
        self.coherence.as_ref().map_or(0, |c| c.n_t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = SimConfig::default();
        let run = cfg.validate().unwrap();
        assert_eq!(run.scenario.num_bs(), 21);
        assert_eq!(run.overhead_factor, 1.0);
        assert!(run.coherence.is_none());
    }

    #[test]
    fn parse_file_with_comments() {
        let cfg =
            SimConfig::parse("# desk run\nscheme = scp\ndrops=3 # few\n\nlmax=unbounded\nue_antennas=2\n").unwrap();
        assert_eq!(cfg.scheme, Scheme::Scp);
        assert_eq!(cfg.drops, 3);
        assert_eq!(cfg.ue_antennas, 2);
        assert_eq!(cfg.l_max, None);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = SimConfig::default();
        for (k, v) in [("scheme", "sc"), ("nt-ratio", "0.02"), ("lmax", "1"), ("beta", "0.5"), ("shadow-std-db", "6")] {
            cfg.set(k, v).unwrap();
        }
        assert_eq!(SimConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn bad_inputs_are_config_errors() {
        let cases: &[&str] = &["scheme=foo", "drops=many", "nonsense=1", "justakey", "site-shadowing=maybe"];
        for c in cases {
            let e = SimConfig::parse(c).unwrap_err();
            assert!(e.is_config_error(), "{c}: {e}");
        }
        let invalid: &[&str] = &[
            "blocks=3",
            "drops=0",
            "jmax=22",
            "jmax=0",
            "lmax=2\nue-antennas=1",
            "gamma=1",
            "csi=estimated",
            "csi=estimated\nue-antennas=4\nnt=100",
            "csi=estimated\nchannel=etu\nnt=90000",
            "beta=1.0\nue-antennas=2",
            "sites=4",
            "channel=custom",
            "nt-ratio=1.5\ncsi=estimated",
        ];
        for c in invalid {
            let e = SimConfig::parse(c).unwrap().validate().unwrap_err();
            assert!(e.is_config_error(), "{c}: {e}");
        }
    }

    #[test]
    fn pilot_ratio_sets_overhead() {
        let cfg = SimConfig::parse("csi=estimated\nchannel=etu\nue-antennas=4\nnt-ratio=0.02").unwrap();
        let run = cfg.validate().unwrap();
        assert_eq!(run.n_e, 85_368);
        assert_eq!(run.n_t(), 1707);
        assert!((run.overhead_factor - (1.0 - 1707.0 / 85_368.0)).abs() < 1e-15);
    }
}
