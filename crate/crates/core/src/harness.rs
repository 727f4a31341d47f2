//! Twist sweeps: enumerate eligible b, rank each twist, stream records to an
//! append-only file, and fold everything into a density table. Sweeps are
//! resumable and their output is byte-identical across worker counts.

use crate::arith::{omega_window, squarefree_coprime_with, FactorSieve, OmegaStats};
use crate::density::{f_eval, AlphaTable};
use crate::error::{Error, Result};
use crate::localspaces::TwistFamily;
use crate::selmer::{selmer_rank_with_factors, TwistRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write as IoWrite};
use std::path::PathBuf;
use std::str::FromStr;

/// Sweep parameters. `seed` is unused by sweeps (they are exhaustive) and is
/// present for schema uniformity with the simulation configuration.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub family: TwistFamily,
    pub n_limit: u64,
    pub window_filter: bool,
    pub positive_only: bool,
    pub workers: usize,
    pub output: Option<PathBuf>,
    pub resume: bool,
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(family: TwistFamily, n_limit: u64) -> SweepConfig {
        SweepConfig {
            family,
            n_limit,
            window_filter: false,
            positive_only: true,
            workers: 1,
            output: None,
            resume: false,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_limit < 1 {
            return Err(Error::InvalidArgument("need N >= 1".into()));
        }
        if self.workers < 1 {
            return Err(Error::InvalidArgument("need workers >= 1".into()));
        }
        Ok(())
    }
}

/// Aggregated sweep statistics: rank counts, per-class parity splits, the
/// first three moments of 2^dim, and the omega histogram.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityTable {
    pub n_limit: u64,
    pub total: u64,
    pub counts: BTreeMap<u32, u64>,
    pub parity_by_class: BTreeMap<u64, (u64, u64)>,
    pub moment_sums: [u128; 3],
    pub omega_hist: OmegaStats,
}

impl DensityTable {
    pub fn new(n_limit: u64) -> DensityTable {
        DensityTable {
            n_limit,
            total: 0,
            counts: BTreeMap::new(),
            parity_by_class: BTreeMap::new(),
            moment_sums: [0; 3],
            omega_hist: OmegaStats::new(n_limit),
        }
    }

    pub fn add_record(&mut self, record: &TwistRecord) {
        self.total += 1;
        *self.counts.entry(record.selmer_dim).or_insert(0) += 1;
        let entry = self.parity_by_class.entry(record.class_mod_d).or_insert((0, 0));
        if record.parity == 0 {
            entry.0 += 1;
        } else {
            entry.1 += 1;
        }
        for k in 1..=3u32 {
            self.moment_sums[k as usize - 1] += 1u128 << (k * record.selmer_dim);
        }
        self.omega_hist.record(record.omega);
    }

    /// Associative, commutative fold of two partial tables.
    pub fn merge(&mut self, other: &DensityTable) {
        self.n_limit = self.n_limit.max(other.n_limit);
        self.total += other.total;
        for (&d, &c) in &other.counts {
            *self.counts.entry(d).or_insert(0) += c;
        }
        for (&cls, &(e, o)) in &other.parity_by_class {
            let entry = self.parity_by_class.entry(cls).or_insert((0, 0));
            entry.0 += e;
            entry.1 += o;
        }
        for k in 0..3 {
            self.moment_sums[k] += other.moment_sums[k];
        }
        self.omega_hist.merge(&other.omega_hist);
    }

    /// Empirical density C_d.
    pub fn density(&self, d: u32) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        *self.counts.get(&d).unwrap_or(&0) as f64 / self.total as f64
    }

    /// Empirical mean of 2^{k·dim}, k in 1..=3.
    pub fn moment(&self, k: u32) -> f64 {
        debug_assert!((1..=3).contains(&k));
        if self.total == 0 {
            return 0.0;
        }
        self.moment_sums[k as usize - 1] as f64 / self.total as f64
    }

    pub fn even_fraction(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let even: u64 = self.parity_by_class.values().map(|&(e, _)| e).sum();
        even as f64 / self.total as f64
    }
}

// ---------------------------------------------------------------------------
// Sweep file format
// ---------------------------------------------------------------------------

const SWEEP_FORMAT: &str = "twistrank-sweep-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepHeader {
    pub format: String,
    pub config_hash: String,
    pub family_c: [i64; 3],
    pub family_d: u64,
    #[serde(rename = "N")]
    pub n_limit: u64,
    pub window_filter: bool,
    pub positive_only: bool,
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for byte in s.as_bytes() {
        h ^= *byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl SweepHeader {
    fn for_config(config: &SweepConfig) -> SweepHeader {
        let canonical = format!(
            "{}|{}|N={}|window={}|positive={}",
            SWEEP_FORMAT,
            config.family.key(),
            config.n_limit,
            config.window_filter,
            config.positive_only,
        );
        SweepHeader {
            format: SWEEP_FORMAT.to_string(),
            config_hash: format!("{:016x}", fnv1a64(&canonical)),
            family_c: config.family.c(),
            family_d: config.family.modulus(),
            n_limit: config.n_limit,
            window_filter: config.window_filter,
            positive_only: config.positive_only,
        }
    }
}

/// Reads a sweep file back: header plus all records.
pub fn read_sweep_file(path: &std::path::Path) -> Result<(SweepHeader, Vec<TwistRecord>)> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Parse("empty sweep file".into()))??;
    let header: SweepHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Parse(format!("bad sweep header: {e}")))?;
    if header.format != SWEEP_FORMAT {
        return Err(Error::ConfigMismatch(format!(
            "unknown sweep format {:?}",
            header.format
        )));
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(TwistRecord::from_json_line(&line)?);
    }
    Ok((header, records))
}

// ---------------------------------------------------------------------------
// Sweep execution
// ---------------------------------------------------------------------------

/// The eligible twist parameters for a config, in enumeration order:
/// ascending |b|, with the negative twin right after the positive when
/// negatives are included.
fn eligible_twists(config: &SweepConfig) -> Result<Vec<(i64, Vec<u64>)>> {
    let sieve = FactorSieve::new(config.n_limit)?;
    let raw = squarefree_coprime_with(&sieve, config.n_limit, config.family.modulus());
    let window = if config.window_filter {
        Some(omega_window(config.n_limit)?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(raw.len() * if config.positive_only { 1 } else { 2 });
    for (b, factors) in raw {
        if let Some((lo, hi)) = window {
            let w = factors.len() as f64;
            if w < lo || w > hi {
                continue;
            }
        }
        out.push((b as i64, factors.clone()));
        if !config.positive_only {
            out.push((-(b as i64), factors));
        }
    }
    Ok(out)
}

struct SweepOutput {
    writer: BufWriter<std::fs::File>,
}

impl SweepOutput {
    fn append(&mut self, record: &TwistRecord) -> Result<()> {
        writeln!(self.writer, "{}", record.to_json_line())?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Replays an existing sweep file: verifies the header, repairs a corrupt
/// trailing record, folds the intact records into the table, and returns how
/// many records are already complete.
fn replay_existing(
    config: &SweepConfig,
    path: &std::path::Path,
    expected: &SweepHeader,
    eligible: &[(i64, Vec<u64>)],
    table: &mut DensityTable,
) -> Result<usize> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::ConfigMismatch("resume target is empty".into()))?;
    let header: SweepHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::ConfigMismatch(format!("resume target has a bad header: {e}")))?;
    if header.config_hash != expected.config_hash {
        return Err(Error::ConfigMismatch(format!(
            "resume target was produced by a different configuration \
             (hash {} vs {})",
            header.config_hash, expected.config_hash
        )));
    }
    let mut records = Vec::new();
    let mut good_len = header_line.len() + 1;
    let mut truncated = false;
    for line in lines {
        match TwistRecord::from_json_line(line) {
            Ok(r) => {
                records.push(r);
                good_len += line.len() + 1;
            }
            Err(e) => {
                // only a trailing partial record is repairable
                truncated = true;
                eprintln!(
                    "twistrank: dropping corrupt trailing record in {}: {e}",
                    path.display()
                );
                break;
            }
        }
    }
    if truncated {
        let mut keep = text.as_bytes()[..good_len.min(text.len())].to_vec();
        if keep.last() != Some(&b'\n') {
            keep.push(b'\n');
        }
        std::fs::write(path, keep)?;
    }
    if records.len() > eligible.len() {
        return Err(Error::ConfigMismatch(
            "resume target has more records than the configuration enumerates".into(),
        ));
    }
    for (i, record) in records.iter().enumerate() {
        if record.b != eligible[i].0 {
            return Err(Error::ConfigMismatch(format!(
                "record {} has b = {} where the enumeration expects {}",
                i, record.b, eligible[i].0
            )));
        }
        table.add_record(record);
    }
    let _ = config;
    Ok(records.len())
}

const SWEEP_CHUNK: usize = 2048;

pub(crate) fn run_sweep(config: &SweepConfig, stop_after: Option<usize>) -> Result<DensityTable> {
    config.validate()?;
    let eligible = eligible_twists(config)?;
    let header = SweepHeader::for_config(config);
    let mut table = DensityTable::new(config.n_limit);
    let mut start = 0usize;

    let mut output = match &config.output {
        Some(path) => {
            if config.resume && path.exists() {
                start = replay_existing(config, path, &header, &eligible, &mut table)?;
                let file = std::fs::OpenOptions::new().append(true).open(path)?;
                Some(SweepOutput {
                    writer: BufWriter::new(file),
                })
            } else {
                if let Some(dir) = path.parent() {
                    if !dir.as_os_str().is_empty() {
                        std::fs::create_dir_all(dir)?;
                    }
                }
                let file = std::fs::File::create(path)?;
                let mut out = SweepOutput {
                    writer: BufWriter::new(file),
                };
                writeln!(out.writer, "{}", serde_json::to_string(&header).unwrap())?;
                Some(out)
            }
        }
        None => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;

    let stop = stop_after.unwrap_or(usize::MAX);
    let mut done = start;
    let family = &config.family;
    while done < eligible.len() && done < stop.max(start) {
        let end = (done + SWEEP_CHUNK).min(eligible.len()).min(stop.max(start + 1));
        let chunk = &eligible[done..end];
        let records: Vec<TwistRecord> = pool.install(|| {
            chunk
                .par_iter()
                .map(|(b, factors)| {
                    selmer_rank_with_factors(family, *b, factors.clone())
                        .expect("eligible twist ranks")
                })
                .collect()
        });
        for record in &records {
            table.add_record(record);
            if let Some(out) = output.as_mut() {
                out.append(record)?;
            }
        }
        if let Some(out) = output.as_mut() {
            out.flush()?;
        }
        done = end;
    }
    Ok(table)
}

/// Runs the configured sweep: every eligible b gets a TwistRecord, streamed
/// to the output file (if any) and folded into the returned table. The table
/// and the file contents do not depend on the worker count.
pub fn sweep(config: &SweepConfig) -> Result<DensityTable> {
    run_sweep(config, None)
}

/// Runs at most `max_records` new records and stops, leaving a valid,
/// resumable output file. Useful for budgeted runs and checkpoint tests.
pub fn sweep_partial(config: &SweepConfig, max_records: usize) -> Result<DensityTable> {
    run_sweep(config, Some(max_records))
}

/// Continues an interrupted sweep; the final table and file are identical to
/// an uninterrupted run.
pub fn resume(config: &SweepConfig) -> Result<DensityTable> {
    if config.output.is_none() {
        return Err(Error::InvalidArgument("resume needs an output path".into()));
    }
    let mut config = config.clone();
    config.resume = true;
    run_sweep(&config, None)
}

/// Table over a sub-range of |b| (for sharding checks): same filters, only
/// twists with lo <= |b| <= hi.
pub fn sweep_range(config: &SweepConfig, lo: u64, hi: u64) -> Result<DensityTable> {
    config.validate()?;
    let eligible = eligible_twists(config)?;
    let mut table = DensityTable::new(config.n_limit);
    for (b, factors) in eligible {
        let abs = b.unsigned_abs();
        if abs < lo || abs > hi {
            continue;
        }
        let record = selmer_rank_with_factors(&config.family, b, factors)?;
        table.add_record(&record);
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    PlotData,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<ReportFormat> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "plotdata" => Ok(ReportFormat::PlotData),
            other => Err(Error::InvalidArgument(format!(
                "unknown report format {other:?} (want text|csv|plotdata)"
            ))),
        }
    }
}

/// Renders a density table against the predicted distribution.
pub fn report(table: &DensityTable, alpha: &AlphaTable, format: ReportFormat) -> Result<String> {
    if table.total == 0 {
        return Err(Error::InvalidArgument("report of an empty table".into()));
    }
    Ok(match format {
        ReportFormat::Text => render_text(table, alpha),
        ReportFormat::Csv => render_csv(table),
        ReportFormat::PlotData => render_plotdata(table, alpha),
    })
}

fn render_text(table: &DensityTable, alpha: &AlphaTable) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "sweep N = {}, twists = {}",
        table.n_limit, table.total
    );
    let _ = writeln!(s, "  d,count,C_d,alpha_d,diff");
    let dmax = table.counts.keys().next_back().copied().unwrap_or(2);
    for d in 0..=dmax.max(alpha.dmax.min(8)) {
        let count = *table.counts.get(&d).unwrap_or(&0);
        if count == 0 && alpha.value(d) == 0.0 {
            continue;
        }
        let cd = table.density(d);
        let ad = alpha.value(d);
        let _ = writeln!(
            s,
            "  {d}  {count}  {cd:.6}  {ad:.6}  {:+.6}",
            cd - ad
        );
    }
    let _ = writeln!(s, "moments of 2^dim vs F(2^k):");
    for k in 1..=3u32 {
        let emp = table.moment(k);
        let target = f_eval(2f64.powi(k as i32));
        let _ = writeln!(s, "  k={k}: empirical {emp:.4} vs F = {target:.4}");
    }
    let _ = writeln!(
        s,
        "parity: even fraction {:.6} (target 0.5)",
        table.even_fraction()
    );
    for (cls, (e, o)) in &table.parity_by_class {
        let _ = writeln!(s, "  class {cls}: even {e} odd {o}");
    }
    let _ = writeln!(
        s,
        "omega histogram (window [{}, {}]):",
        table.omega_hist.window_lo, table.omega_hist.window_hi
    );
    for (w, c) in &table.omega_hist.histogram {
        let _ = writeln!(s, "  omega={w}: {c}");
    }
    s
}

fn render_csv(table: &DensityTable) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "meta,{},{}", table.n_limit, table.total);
    for (d, c) in &table.counts {
        let _ = writeln!(s, "count,{d},{c}");
    }
    for (cls, (e, o)) in &table.parity_by_class {
        let _ = writeln!(s, "parity,{cls},{e},{o}");
    }
    for (k, m) in table.moment_sums.iter().enumerate() {
        let _ = writeln!(s, "moment,{},{m}", k + 1);
    }
    let _ = writeln!(
        s,
        "window,{},{}",
        table.omega_hist.window_lo, table.omega_hist.window_hi
    );
    for (w, c) in &table.omega_hist.histogram {
        let _ = writeln!(s, "omega,{w},{c}");
    }
    s
}

/// Inverse of the CSV rendering: parse(emit(table)) reproduces the table.
pub fn parse_csv(text: &str) -> Result<DensityTable> {
    let mut table: Option<DensityTable> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let fail = |what: &str| Error::Parse(format!("csv line {}: {what}", lineno + 1));
        let parse_u64 = |s: &str| s.parse::<u64>().map_err(|_| fail("bad integer"));
        match parts[0] {
            "meta" => {
                if parts.len() != 3 {
                    return Err(fail("meta needs 2 fields"));
                }
                let mut t = DensityTable::new(parse_u64(parts[1])?);
                t.total = parse_u64(parts[2])?;
                t.omega_hist.histogram.clear();
                table = Some(t);
            }
            "count" => {
                let t = table.as_mut().ok_or_else(|| fail("count before meta"))?;
                t.counts.insert(
                    parts[1].parse().map_err(|_| fail("bad d"))?,
                    parse_u64(parts[2])?,
                );
            }
            "parity" => {
                let t = table.as_mut().ok_or_else(|| fail("parity before meta"))?;
                t.parity_by_class.insert(
                    parse_u64(parts[1])?,
                    (parse_u64(parts[2])?, parse_u64(parts[3])?),
                );
            }
            "moment" => {
                let t = table.as_mut().ok_or_else(|| fail("moment before meta"))?;
                let k: usize = parts[1].parse().map_err(|_| fail("bad k"))?;
                if !(1..=3).contains(&k) {
                    return Err(fail("moment k out of range"));
                }
                t.moment_sums[k - 1] =
                    parts[2].parse::<u128>().map_err(|_| fail("bad moment"))?;
            }
            "window" => {
                let t = table.as_mut().ok_or_else(|| fail("window before meta"))?;
                t.omega_hist.window_lo = parts[1].parse().map_err(|_| fail("bad lo"))?;
                t.omega_hist.window_hi = parts[2].parse().map_err(|_| fail("bad hi"))?;
            }
            "omega" => {
                let t = table.as_mut().ok_or_else(|| fail("omega before meta"))?;
                t.omega_hist
                    .histogram
                    .insert(parts[1].parse().map_err(|_| fail("bad omega"))?, parse_u64(parts[2])?);
            }
            other => return Err(fail(&format!("unknown row tag {other:?}"))),
        }
    }
    let mut table = table.ok_or_else(|| Error::Parse("csv has no meta row".into()))?;
    table.omega_hist.n_limit = table.n_limit;
    Ok(table)
}

fn render_plotdata(table: &DensityTable, alpha: &AlphaTable) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "# d C_d alpha_d");
    let dmax = table.counts.keys().next_back().copied().unwrap_or(2);
    for d in 0..=dmax {
        let _ = writeln!(s, "{d} {:.9} {:.9}", table.density(d), alpha.value(d));
    }
    s
}
