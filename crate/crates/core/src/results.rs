//! Results table: one CSV row per experiment, plus optional per-drop rows.

use std::path::Path;

use crate::config::{ChannelKind, CsiMode, Scheme};
use crate::error::{Error, Result};
use crate::eval::percentile;
use crate::sim::{RunResult, MAX_RANK};

/// Column names of the results file, in order.
pub const HEADER: [&str; 29] = [
    "scheme",
    "csi",
    "channel",
    "ue_antennas",
    "bs_antennas",
    "jmax",
    "lmax",
    "beta",
    "nt_ratio",
    "drops",
    "blocks",
    "seed",
    "cell_rate",
    "p5",
    "p50",
    "p95",
    "rank_1",
    "rank_2",
    "rank_3",
    "rank_4",
    "rank_5",
    "rank_6",
    "rank_7",
    "rank_8",
    "cand_p5",
    "cand_p50",
    "cand_p95",
    "dominance_violations",
    "max_power_ratio",
];

pub const DROP_HEADER: [&str; 7] = ["drop", "seed", "cell_rate", "p5", "p50", "p95", "candidates"];

/// `x` with 6 significant digits, trailing zeros trimmed.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..6).contains(&exp) {
        let rounded: f64 = sci.parse().expect("round trip");
        let s = format!("{:.*}", (5 - exp).max(0) as usize, rounded);
        trim_zeros(&s).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mant))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsRow {
    pub scheme: Scheme,
    pub csi: CsiMode,
    pub channel: ChannelKind,
    pub ue_antennas: usize,
    pub bs_antennas: usize,
    pub j_max: usize,
    pub l_max: Option<usize>,
    pub beta: f64,
    /// `N_T/N_E`; zero with perfect CSI.
    pub nt_ratio: f64,
    pub drops: usize,
    pub blocks: usize,
    pub seed: u64,
    pub cell_rate: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    /// Rank distribution in percent, `rank_pct[l−1]`.
    pub rank_pct: [f64; MAX_RANK],
    pub cand_p5: f64,
    pub cand_p50: f64,
    pub cand_p95: f64,
    pub dominance_violations: usize,
    pub max_power_ratio: f64,
}

impl ResultsRow {
    pub fn from_run(run: &RunResult) -> Self {
        let cfg = &run.config;
        let rates = run.ue_rates();
        let cands = run.candidate_counts();
        let mut rank_pct = run.rank_distribution();
        for r in &mut rank_pct {
            *r *= 100.0;
        }
        ResultsRow {
            scheme: cfg.scheme,
            csi: cfg.csi,
            channel: cfg.channel,
            ue_antennas: cfg.ue_antennas,
            bs_antennas: cfg.scenario.bs_antennas,
            j_max: cfg.j_max,
            l_max: cfg.l_max,
            beta: cfg.beta,
            nt_ratio: if cfg.csi == CsiMode::Perfect { 0.0 } else { run.n_t as f64 / run.n_e as f64 },
            drops: cfg.drops,
            blocks: cfg.blocks,
            seed: cfg.seed,
            cell_rate: run.cell_rate(),
            p5: percentile(&rates, 0.05),
            p50: percentile(&rates, 0.50),
            p95: percentile(&rates, 0.95),
            rank_pct,
            cand_p5: percentile(&cands, 0.05),
            cand_p50: percentile(&cands, 0.50),
            cand_p95: percentile(&cands, 0.95),
            dominance_violations: run.dominance().violations,
            max_power_ratio: run.max_power_ratio(),
        }
    }

    fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.scheme.to_string(),
            self.csi.to_string(),
            self.channel.to_string(),
            self.ue_antennas.to_string(),
            self.bs_antennas.to_string(),
            self.j_max.to_string(),
            self.l_max.map_or("unbounded".into(), |l| l.to_string()),
            sig6(self.beta),
            sig6(self.nt_ratio),
            self.drops.to_string(),
            self.blocks.to_string(),
            self.seed.to_string(),
            sig6(self.cell_rate),
            sig6(self.p5),
            sig6(self.p50),
            sig6(self.p95),
        ];
        r.extend(self.rank_pct.iter().map(|&x| sig6(x)));
        r.extend([
            sig6(self.cand_p5),
            sig6(self.cand_p50),
            sig6(self.cand_p95),
            self.dominance_violations.to_string(),
            sig6(self.max_power_ratio),
        ]);
        r
    }

    fn from_record(rec: &csv::StringRecord, line: usize) -> Result<Self> {
        if rec.len() != HEADER.len() {
            return Err(Error::Parse(format!("line {line}: expected {} fields, got {}", HEADER.len(), rec.len())));
        }
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| Error::Parse(format!("line {line}: bad `{}` value `{}`", HEADER[i], field(i)));
        let f = |i: usize| field(i).parse::<f64>().map_err(|_| bad(i));
        let u = |i: usize| field(i).parse::<usize>().map_err(|_| bad(i));
        let mut rank_pct = [0.0; MAX_RANK];
        for (l, r) in rank_pct.iter_mut().enumerate() {
            *r = f(16 + l)?;
        }
        Ok(ResultsRow {
            scheme: field(0).parse().map_err(|_| bad(0))?,
            csi: field(1).parse().map_err(|_| bad(1))?,
            channel: field(2).parse().map_err(|_| bad(2))?,
            ue_antennas: u(3)?,
            bs_antennas: u(4)?,
            j_max: u(5)?,
            l_max: if field(6) == "unbounded" { None } else { Some(u(6)?) },
            beta: f(7)?,
            nt_ratio: f(8)?,
            drops: u(9)?,
            blocks: u(10)?,
            seed: field(11).parse().map_err(|_| bad(11))?,
            cell_rate: f(12)?,
            p5: f(13)?,
            p50: f(14)?,
            p95: f(15)?,
            rank_pct,
            cand_p5: f(24)?,
            cand_p50: f(25)?,
            cand_p95: f(26)?,
            dominance_violations: u(27)?,
            max_power_ratio: f(28)?,
        })
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

/// Writes the table as CSV text.
pub fn write_results(rows: &[ResultsRow], out: impl std::io::Write) -> Result<()> {
    let p = Path::new("<output>");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER).map_err(|e| csv_err(p, e))?;
    for r in rows {
        w.write_record(r.record()).map_err(|e| csv_err(p, e))?;
    }
    w.flush().map_err(|e| Error::io(p, e))
}

/// Writes a non-empty table to `path`.
pub fn emit_results(rows: &[ResultsRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("results table is empty".into()));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_results(rows, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_results(text: &str) -> Result<Vec<ResultsRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Parse("unexpected header".into()));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            ResultsRow::from_record(&rec, i + 2)
        })
        .collect()
}

pub fn load_results(path: &Path) -> Result<Vec<ResultsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results(&text)
}

/// Per-drop metrics: cell rate, percentiles of the drop's UE rates and the
/// candidate count.
pub fn write_drop_rows(run: &RunResult, out: impl std::io::Write) -> Result<()> {
    let p = Path::new("<output>");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DROP_HEADER).map_err(|e| csv_err(p, e))?;
    for d in &run.drops {
        w.write_record([
            d.index.to_string(),
            d.seed.to_string(),
            sig6(d.cell_rate),
            sig6(percentile(&d.ue_rate, 0.05)),
            sig6(percentile(&d.ue_rate, 0.50)),
            sig6(percentile(&d.ue_rate, 0.95)),
            d.candidates.to_string(),
        ])
        .map_err(|e| csv_err(p, e))?;
    }
    w.flush().map_err(|e| Error::io(p, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row() -> ResultsRow {
        ResultsRow {
            scheme: Scheme::Dc,
            csi: CsiMode::Estimated,
            channel: ChannelKind::Etu,
            ue_antennas: 4,
            bs_antennas: 4,
            j_max: 3,
            l_max: Some(1),
            beta: 0.5,
            nt_ratio: 0.019_994_376,
            drops: 20,
            blocks: 100,
            seed: 7,
            cell_rate: 2.345_678_9,
            p5: 0.123_456_78,
            p50: 1.0,
            p95: 12.345_678,
            rank_pct: [60.0, 25.5, 10.0, 4.5, 0.0, 0.0, 0.0, 0.0],
            cand_p5: 235.0,
            cand_p50: 249.5,
            cand_p95: 263.0,
            dominance_violations: 0,
            max_power_ratio: 1.0,
        }
    }

    #[test]
    fn sig6_examples() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(2.3456789), "2.34568");
        assert_eq!(sig6(249.5), "249.5");
        assert_eq!(sig6(9.999_999_7), "10");
        assert_eq!(sig6(-0.000_123_456_78), "-0.000123457");
        assert_eq!(sig6(1.234_567e-9), "1.23457e-9");
        assert_eq!(sig6(123_456_789.0), "1.23457e8");
    }

    #[test]
    fn one_row_is_two_lines() {
        let mut buf = Vec::new();
        write_results(&[row()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap(), HEADER.join(","));
    }

    #[test]
    fn round_trip_is_stable() {
        let mut a = Vec::new();
        write_results(&[row(), row()], &mut a).unwrap();
        let parsed = parse_results(std::str::from_utf8(&a).unwrap()).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].p5, 0.123457);
        assert_eq!(parsed[0].l_max, Some(1));
        let mut b = Vec::new();
        write_results(&parsed, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_table_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_results(&[], &dir.path().join("r.csv")).is_err());
    }

    #[test]
    fn io_errors_name_the_path() {
        let e = emit_results(&[row()], Path::new("/nonexistent/dir/r.csv")).unwrap_err();
        assert!(e.to_string().contains("/nonexistent/dir/r.csv"), "{e}");
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(parse_results("a,b\n1,2\n").is_err());
        let bad = format!("{}\ndc,perfect\n", HEADER.join(","));
        assert!(parse_results(&bad).is_err());
    }

    proptest! {
        #[test]
        fn sig6_keeps_six_digits(x in -1e12f64..1e12) {
            let s = sig6(x);
            let back: f64 = s.parse().unwrap();
            prop_assert!((back - x).abs() <= 5e-6 * x.abs() + 1e-300);
            prop_assert_eq!(sig6(back), s);
        }
    }
}
