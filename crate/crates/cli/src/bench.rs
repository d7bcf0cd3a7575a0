//! Forward+backward timing and ledger peaks over a configuration matrix.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sdtw_core::{rel_diff, AllocationLedger, BackwardSpace, CostMode, Real, SdtwConfig, SeriesBatch, SoftDtw};
use serde::{Deserialize, Serialize};

use crate::generate::normal_batch;
use crate::Precision;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfigRow {
    pub batch: usize,
    pub length: usize,
    pub feature_dim: usize,
    pub gamma: f64,
    #[serde(with = "display_fromstr")]
    pub cost_mode: CostMode,
    #[serde(with = "display_fromstr")]
    pub backward_space: BackwardSpace,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
}

fn default_repeats() -> usize {
    5
}

fn default_warmup() -> usize {
    1
}

impl BenchConfigRow {
    pub fn new(batch: usize, length: usize, feature_dim: usize, cost_mode: CostMode) -> Self {
        Self {
            batch,
            length,
            feature_dim,
            gamma: 1.0,
            cost_mode,
            backward_space: BackwardSpace::Log,
            repeats: default_repeats(),
            warmup: default_warmup(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.repeats >= 1, "repeats must be >= 1");
        ensure!(
            self.batch >= 1 && self.length >= 1 && self.feature_dim >= 1,
            "B, L and D must be >= 1"
        );
        ensure!(self.gamma > 0.0 && self.gamma.is_finite(), "gamma must be positive");
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    Error(String),
}

impl std::fmt::Display for RowStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowStatus::Ok => f.write_str("ok"),
            RowStatus::Error(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResultRow {
    pub config: BenchConfigRow,
    pub precision: Precision,
    pub mean_runtime_ms: f64,
    pub std_runtime_ms: f64,
    pub peak_ledger_bytes: usize,
    /// Worst relative loss difference against the other cost mode, checked once.
    pub mode_loss_rel_diff: f64,
    pub status: RowStatus,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BenchOptions {
    pub seed: u64,
    pub mem_limit: Option<usize>,
    /// Skip the once-per-row comparison against the other cost mode.
    pub skip_mode_check: bool,
}

pub const CSV_HEADER: &str = "batch,length,feature_dim,gamma,cost_mode,backward_space,precision,repeats,warmup,\
mean_runtime_ms,std_runtime_ms,peak_ledger_bytes,mode_loss_rel_diff,status";

impl BenchResultRow {
    pub fn csv_line(&self) -> String {
        let c = &self.config;
        let status = self.status.to_string().replace([',', '\n'], ";");
        format!(
            "{},{},{},{:?},{},{},{},{},{},{:.4},{:.4},{},{:e},{}",
            c.batch,
            c.length,
            c.feature_dim,
            c.gamma,
            c.cost_mode,
            c.backward_space,
            self.precision,
            c.repeats,
            c.warmup,
            self.mean_runtime_ms,
            self.std_runtime_ms,
            self.peak_ledger_bytes,
            self.mode_loss_rel_diff,
            status
        )
    }
}

pub fn run_row(cfg: &BenchConfigRow, precision: Precision, opts: &BenchOptions) -> Result<BenchResultRow> {
    cfg.validate()?;
    Ok(match precision {
        Precision::F32 => measure::<f32>(cfg, precision, opts),
        Precision::F64 => measure::<f64>(cfg, precision, opts),
    })
}

fn measure<T: Real>(cfg: &BenchConfigRow, precision: Precision, opts: &BenchOptions) -> BenchResultRow {
    let mut row = BenchResultRow {
        config: *cfg,
        precision,
        mean_runtime_ms: 0.0,
        std_runtime_ms: 0.0,
        peak_ledger_bytes: 0,
        mode_loss_rel_diff: 0.0,
        status: RowStatus::Ok,
    };
    if let Err(e) = measure_into::<T>(cfg, opts, &mut row) {
        row.status = RowStatus::Error(format!("{e:#}"));
    }
    row
}

fn measure_into<T: Real>(cfg: &BenchConfigRow, opts: &BenchOptions, row: &mut BenchResultRow) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (b, l, d) = (cfg.batch, cfg.length, cfg.feature_dim);
    let x: SeriesBatch<T> = normal_batch(&mut rng, b, l, d)?.cast();
    let y: SeriesBatch<T> = normal_batch(&mut rng, b, l, d)?.cast();
    let sdtw_cfg = SdtwConfig::new(T::lit(cfg.gamma))
        .with_cost_mode(cfg.cost_mode)
        .with_backward(cfg.backward_space);
    let ledger = match opts.mem_limit {
        Some(limit) => AllocationLedger::with_limit(limit),
        None => AllocationLedger::new(),
    };
    let engine = SoftDtw::new(sdtw_cfg)?.with_ledger(ledger.clone());

    let mut loss = Vec::new();
    for _ in 0..cfg.warmup {
        loss = engine.loss_and_grad(&x, &y)?.0;
    }
    let mut times = Vec::with_capacity(cfg.repeats);
    let mut peak = 0;
    for _ in 0..cfg.repeats {
        ledger.reset();
        let start = Instant::now();
        let (l, g) = engine.loss_and_grad(&x, &y)?;
        drop(g);
        times.push(start.elapsed().as_secs_f64() * 1e3);
        peak = peak.max(ledger.peak_bytes());
        loss = l;
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    row.mean_runtime_ms = mean;
    row.std_runtime_ms = var.sqrt();
    row.peak_ledger_bytes = peak;

    if !opts.skip_mode_check {
        let other = match cfg.cost_mode {
            CostMode::Fused => CostMode::Unfused,
            CostMode::Unfused => CostMode::Fused,
        };
        let alt = SoftDtw::new(sdtw_cfg.with_cost_mode(other))?.loss(&x, &y)?;
        row.mode_loss_rel_diff = loss
            .iter()
            .zip(&alt)
            .map(|(&a, &c)| rel_diff(a, c).as_f64())
            .fold(0.0, f64::max);
    }
    Ok(())
}

/// Runs every row in order and writes the CSV (header plus one line per row).
pub fn run_matrix(
    rows: &[BenchConfigRow],
    precision: Precision,
    opts: &BenchOptions,
    out: &mut dyn Write,
) -> Result<Vec<BenchResultRow>> {
    for r in rows {
        r.validate()?;
    }
    writeln!(out, "{CSV_HEADER}")?;
    let mut results = Vec::with_capacity(rows.len());
    for r in rows {
        let res = run_row(r, precision, opts)?;
        writeln!(out, "{}", res.csv_line())?;
        out.flush()?;
        results.push(res);
    }
    Ok(results)
}

/// Reads a matrix from CSV with columns
/// `batch,length,feature_dim,gamma,cost_mode,backward_space[,repeats,warmup]`.
pub fn read_matrix(path: &Path) -> Result<Vec<BenchConfigRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (k, rec) in rdr.deserialize().enumerate() {
        let row: BenchConfigRow = rec.with_context(|| format!("{} record {}", path.display(), k + 1))?;
        row.validate()
            .with_context(|| format!("{} record {}", path.display(), k + 1))?;
        rows.push(row);
    }
    ensure!(!rows.is_empty(), "{} has no rows", path.display());
    Ok(rows)
}

mod display_fromstr {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_repeats_is_rejected() {
        let mut r = BenchConfigRow::new(1, 8, 2, CostMode::Fused);
        r.repeats = 0;
        assert!(run_row(&r, Precision::F64, &BenchOptions::default()).is_err());
    }

    #[test]
    fn small_row_reports_positive_runtime_and_agreeing_modes() {
        let r = BenchConfigRow {
            repeats: 2,
            ..BenchConfigRow::new(2, 40, 3, CostMode::Unfused)
        };
        let res = run_row(&r, Precision::F32, &BenchOptions::default()).unwrap();
        assert_eq!(res.status, RowStatus::Ok);
        assert!(res.mean_runtime_ms > 0.0);
        assert_eq!(res.mode_loss_rel_diff, 0.0);
        assert!(res.peak_ledger_bytes >= 4 * 2 * 40 * 40);
    }

    #[test]
    fn mem_limit_becomes_an_error_row() {
        let r = BenchConfigRow::new(2, 64, 2, CostMode::Unfused);
        let opts = BenchOptions {
            mem_limit: Some(1000),
            ..BenchOptions::default()
        };
        let res = run_row(&r, Precision::F64, &opts).unwrap();
        assert!(
            matches!(res.status, RowStatus::Error(ref m) if m.contains("memory")),
            "{:?}",
            res.status
        );
        assert!(res.csv_line().ends_with(&res.status.to_string().replace(',', ";")));
    }

    #[test]
    fn matrix_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(
            &p,
            "batch,length,feature_dim,gamma,cost_mode,backward_space,repeats\n2,16,3,0.5,fused,linear,2\n",
        )
        .unwrap();
        let rows = read_matrix(&p).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].cost_mode, CostMode::Fused);
        assert_eq!(rows[0].backward_space, BackwardSpace::Linear);
        assert_eq!((rows[0].repeats, rows[0].warmup), (2, 1));
        let mut out = Vec::new();
        let res = run_matrix(&rows, Precision::F64, &BenchOptions::default(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(res[0].status, RowStatus::Ok);
    }
}
