//! Counted-versus-background frequency experiment.
//!
//! `N` counted binary events are followed by `n_b` uncounted background events.
//! Each world keeps the frequency `f = M/N` it saw in the counted events; for a
//! fixed `f` the background up-count `M'` traces a line of
//! `(ln m(f) + ln m(f'), ln C(f) + ln C(f'))` points. Lines for frequencies near
//! the Born weight dominate the others over a wide band of world sizes.

use std::fmt::Write as _;
use std::io::Write;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{bisect, ln_to_log10, log_binomial, log_binomial_gaussian, log_binomial_real, LogValue};

/// How binomial world counts are evaluated along the lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountModel {
    /// `ln C(n, k)`, extended to real `k` through log-gamma.
    Exact,
    /// De Moivre-Laplace normal approximation of `ln C(n, k)`.
    Gaussian,
}

impl CountModel {
    fn log_count(self, n: u64, k: f64) -> LogValue {
        match self {
            CountModel::Exact => {
                if k.fract() == 0.0 {
                    log_binomial(n, k as i64)
                } else {
                    log_binomial_real(n as f64, k)
                }
            }
            CountModel::Gaussian => {
                if (0.0..=n as f64).contains(&k) {
                    log_binomial_gaussian(n as f64, k)
                } else {
                    LogValue::ZERO
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CountModel::Exact => "exact",
            CountModel::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for CountModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<CountModel> {
        match s {
            "exact" => Ok(CountModel::Exact),
            "gaussian" => Ok(CountModel::Gaussian),
            other => Err(Error::InvalidParameter(format!("unknown count model {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_counted: u64,
    pub n_background: u64,
    pub p: f64,
    /// Weight of the background events; `None` shares `p`.
    pub p_background: Option<f64>,
    /// Frequencies drawn as lines; each must be some `M / n_counted`.
    pub frequencies: Vec<f64>,
    pub count_model: CountModel,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::figure1()
    }
}

impl ExperimentConfig {
    /// 100 counted events and 10^4 background events at `p = 0.7`, lines for
    /// `f = 0.5, 0.55, ..., 0.9`.
    pub fn figure1() -> ExperimentConfig {
        ExperimentConfig {
            n_counted: 100,
            n_background: 10_000,
            p: 0.7,
            p_background: None,
            frequencies: (0..9).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            count_model: CountModel::Exact,
        }
    }

    pub fn background_p(&self) -> f64 {
        self.p_background.unwrap_or(self.p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_counted == 0 {
            return Err(Error::InvalidParameter("n_counted must be positive".into()));
        }
        for (name, p) in [("p", self.p), ("background p", self.background_p())] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} = {p} outside (0, 1)")));
            }
        }
        if self.n_background > 0 && self.background_p() == 0.5 {
            return Err(Error::InvalidParameter(
                "background p = 0.5 gives every background class the same size".into(),
            ));
        }
        for &f in &self.frequencies {
            self.counted_up(f)?;
        }
        Ok(())
    }

    /// `M` with `M / n_counted == f`.
    pub fn counted_up(&self, f: f64) -> Result<u64> {
        let m = (f * self.n_counted as f64).round();
        if !(0.0..=self.n_counted as f64).contains(&m) || (m / self.n_counted as f64 - f).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "frequency {f} is not a multiple of 1/{}",
                self.n_counted
            )));
        }
        Ok(m as u64)
    }

    /// Counted frequency closest to `p`.
    pub fn born_frequency(&self) -> f64 {
        (self.p * self.n_counted as f64).round() / self.n_counted as f64
    }

    /// Joint `ln m^` of counted plus background events: the size of exact-Born worlds.
    pub fn born_log_size(&self) -> f64 {
        let entropy = |p: f64| p * p.ln() + (1.0 - p) * (1.0 - p).ln();
        self.n_counted as f64 * entropy(self.p) + self.n_background as f64 * entropy(self.background_p())
    }

    pub fn canonical(&self) -> String {
        let mut s = format!(
            "n_counted={};n_background={};p={:?};p_background={:?};count_model={};frequencies=",
            self.n_counted,
            self.n_background,
            self.p,
            self.background_p(),
            self.count_model.name()
        );
        for (i, f) in self.frequencies.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{f:?}");
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of [`ExperimentConfig::canonical`].
    pub fn digest(&self) -> String {
        short_digest(&self.canonical())
    }
}

pub fn short_digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().take(8).fold(String::with_capacity(16), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePoint {
    pub m_prime: u64,
    pub log_size: f64,
    pub log_count: f64,
}

/// Worlds that saw counted frequency `f`, spread over background up-counts.
#[derive(Debug, Clone)]
pub struct FrequencyLine {
    pub f: f64,
    pub counted_up: u64,
    base_log_size: f64,
    base_log_count: f64,
    n_background: u64,
    ln_p: f64,
    ln_q: f64,
    model: CountModel,
    pub points: Vec<LinePoint>,
}

impl FrequencyLine {
    pub fn new(config: &ExperimentConfig, counted_up: u64) -> Result<FrequencyLine> {
        config.validate()?;
        if counted_up > config.n_counted {
            return Err(Error::InvalidParameter(format!(
                "counted up-count {counted_up} exceeds {}",
                config.n_counted
            )));
        }
        let n = config.n_counted;
        let (ln_p, ln_q) = (config.p.ln(), (1.0 - config.p).ln());
        let base_log_size = counted_up as f64 * ln_p + (n - counted_up) as f64 * ln_q;
        let base_log_count = config.count_model.log_count(n, counted_up as f64).ln();
        let pb = config.background_p();
        let mut line = FrequencyLine {
            f: counted_up as f64 / n as f64,
            counted_up,
            base_log_size,
            base_log_count,
            n_background: config.n_background,
            ln_p: pb.ln(),
            ln_q: (1.0 - pb).ln(),
            model: config.count_model,
            points: Vec::new(),
        };
        line.points = (0..=config.n_background)
            .map(|m| LinePoint {
                m_prime: m,
                log_size: line.log_size_at(m as f64),
                log_count: base_log_count + config.count_model.log_count(config.n_background, m as f64).ln(),
            })
            .collect();
        Ok(line)
    }

    fn log_size_at(&self, m_prime: f64) -> f64 {
        self.base_log_size + m_prime * self.ln_p + (self.n_background as f64 - m_prime) * self.ln_q
    }

    /// Background up-count (real-valued) at which this line reaches `log_size`.
    pub fn m_prime_at(&self, log_size: f64) -> f64 {
        (log_size - self.base_log_size - self.n_background as f64 * self.ln_q) / (self.ln_p - self.ln_q)
    }

    /// Smallest and largest joint log size on the line.
    pub fn size_range(&self) -> (f64, f64) {
        let a = self.log_size_at(0.0);
        let b = self.log_size_at(self.n_background as f64);
        (a.min(b), a.max(b))
    }

    /// World count per background class at `log_size`, through the continuous extension in `M'`.
    pub fn log_count_at(&self, log_size: f64) -> LogValue {
        let m = self.m_prime_at(log_size).clamp(0.0, self.n_background as f64);
        self.model
            .log_count(self.n_background, m)
            .scale_ln(self.base_log_count)
    }

    fn compatible(&self, other: &FrequencyLine) -> bool {
        self.n_background == other.n_background
            && self.ln_p == other.ln_p
            && self.ln_q == other.ln_q
            && self.model == other.model
    }
}

pub fn frequency_lines(config: &ExperimentConfig) -> Result<Vec<FrequencyLine>> {
    config.validate()?;
    config
        .frequencies
        .iter()
        .map(|&f| FrequencyLine::new(config, config.counted_up(f)?))
        .collect()
}

/// Bracketing tolerance for crossings, in ln units.
pub const CROSSING_TOL: f64 = 1e-6;

/// Joint log size at which two lines carry equal world counts.
pub fn line_crossing(a: &FrequencyLine, b: &FrequencyLine) -> Result<f64> {
    if a.counted_up == b.counted_up {
        return Err(Error::NoCrossing(format!("both lines are f = {}", a.f)));
    }
    if !a.compatible(b) {
        return Err(Error::InvalidParameter("lines come from different configurations".into()));
    }
    let (a_lo, a_hi) = a.size_range();
    let (b_lo, b_hi) = b.size_range();
    let (lo, hi) = (a_lo.max(b_lo), a_hi.min(b_hi));
    if !(lo < hi) {
        return Err(Error::NoCrossing(format!(
            "lines f = {} and f = {} share no world sizes",
            a.f, b.f
        )));
    }
    let gap = |s: f64| a.log_count_at(s).ln() - b.log_count_at(s).ln();
    bisect(gap, lo, hi, CROSSING_TOL).map_err(|_| {
        Error::NoCrossing(format!(
            "f = {} dominates f = {} everywhere on [{lo}, {hi}]",
            if gap(lo) > 0.0 { a.f } else { b.f },
            if gap(lo) > 0.0 { b.f } else { a.f }
        ))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BornWindow {
    /// Where the Born line meets the line of the upper window frequency.
    pub upper: f64,
    /// Where the Born line meets the line of the lower window frequency.
    pub lower: f64,
    pub span_ln: f64,
    pub span_log10: f64,
}

/// Band of cutoff sizes that keeps the Born line ahead of both window edges.
/// An edge equal to the Born frequency contributes the exact-Born joint size.
pub fn born_window(config: &ExperimentConfig, low: f64, high: f64) -> Result<BornWindow> {
    config.validate()?;
    let m_low = config.counted_up(low)?;
    let m_high = config.counted_up(high)?;
    let born = config.born_frequency();
    let m_born = config.counted_up(born)?;
    if !(m_low <= m_born && m_born <= m_high) {
        return Err(Error::InvalidParameter(format!(
            "window [{low}, {high}] does not contain the Born frequency {born}"
        )));
    }
    let born_line = FrequencyLine::new(config, m_born)?;
    let edge = |m: u64| -> Result<f64> {
        if m == m_born {
            Ok(config.born_log_size())
        } else {
            line_crossing(&born_line, &FrequencyLine::new(config, m)?)
        }
    };
    let upper = edge(m_high)?;
    let lower = edge(m_low)?;
    let span_ln = upper - lower;
    Ok(BornWindow {
        upper,
        lower,
        span_ln,
        span_log10: ln_to_log10(span_ln),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramRow {
    pub f: f64,
    pub counted_up: u64,
    pub log_unmangled: LogValue,
    pub share: f64,
}

#[derive(Debug, Clone)]
pub struct FrequencyHistogram {
    pub cutoff_log_size: f64,
    pub rows: Vec<HistogramRow>,
}

impl FrequencyHistogram {
    /// Counted frequency seen by the most unmangled worlds.
    pub fn modal_f(&self) -> f64 {
        self.rows
            .iter()
            .max_by(|a, b| a.log_unmangled.ln().total_cmp(&b.log_unmangled.ln()))
            .map_or(f64::NAN, |r| r.f)
    }

    /// Share of unmangled worlds with counted frequency in `[lo, hi]`.
    pub fn mass_within(&self, lo: f64, hi: f64) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.f >= lo - 1e-9 && r.f <= hi + 1e-9)
            .map(|r| r.share)
            .sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["f", "log_unmangled_count", "share"])?;
        for r in &self.rows {
            w.write_record([
                format!("{:?}", r.f),
                format!("{:.14e}", r.log_unmangled.ln()),
                format!("{:.15e}", r.share),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Unmangled worlds per counted frequency under a sharp cutoff at `cutoff_log_size`.
pub fn unmangled_frequency_histogram(config: &ExperimentConfig, cutoff_log_size: f64) -> Result<FrequencyHistogram> {
    config.validate()?;
    if cutoff_log_size.is_nan() {
        return Err(Error::InvalidParameter("cutoff is NaN".into()));
    }
    let n = config.n_counted;
    let nb = config.n_background;
    let (ln_p, ln_q) = (config.p.ln(), (1.0 - config.p).ln());
    let pb = config.background_p();
    let (ln_pb, ln_qb) = (pb.ln(), (1.0 - pb).ln());
    let bg: Vec<LogValue> = (0..=nb).map(|m| config.count_model.log_count(nb, m as f64)).collect();
    let bg_size = |m: u64| m as f64 * ln_pb + (nb - m) as f64 * ln_qb;

    // Background tail sums over the classes on the large-size side of each M'.
    let increasing = nb == 0 || ln_pb > ln_qb;
    let mut tail = vec![LogValue::ZERO; nb as usize + 2];
    if increasing {
        for m in (0..=nb as usize).rev() {
            tail[m] = tail[m + 1] + bg[m];
        }
    } else {
        for m in 0..=nb as usize {
            tail[m + 1] = tail[m] + bg[m];
        }
    }

    let mut counts = Vec::with_capacity(n as usize + 1);
    for m in 0..=n {
        let base_size = m as f64 * ln_p + (n - m) as f64 * ln_q;
        let need = cutoff_log_size - base_size;
        let above = if cutoff_log_size == f64::NEG_INFINITY {
            tail[if increasing { 0 } else { nb as usize + 1 }]
        } else if increasing {
            // first M' with bg_size(M') >= need
            let first = (0..=nb).find(|&k| bg_size(k) >= need);
            first.map_or(LogValue::ZERO, |k| tail[k as usize])
        } else {
            let last = (0..=nb).rev().find(|&k| bg_size(k) >= need);
            last.map_or(LogValue::ZERO, |k| tail[k as usize + 1])
        };
        counts.push(above.scale_ln(config.count_model.log_count(n, m as f64).ln()));
    }

    let total: LogValue = counts.iter().sum();
    if total.is_zero() {
        return Err(Error::EmptyUnmangled(format!(
            "no world reaches log size {cutoff_log_size}"
        )));
    }
    Ok(FrequencyHistogram {
        cutoff_log_size,
        rows: counts
            .into_iter()
            .enumerate()
            .map(|(m, c)| HistogramRow {
                f: m as f64 / n as f64,
                counted_up: m as u64,
                log_unmangled: c,
                share: (c / total).to_f64(),
            })
            .collect(),
    })
}

/// Figure data as CSV: solid-line rows (empty `m_prime`) give `ln C(f)` and
/// `ln m(f)` for the counted events alone; dashed-line rows follow for every
/// configured `f` and background up-count.
pub fn emit_figure1<W: Write>(config: &ExperimentConfig, out: W) -> Result<()> {
    config.validate()?;
    let digest = config.digest();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config_hash", "f", "m_prime", "log_size", "log_count"])?;

    let n = config.n_counted;
    let (ln_p, ln_q) = (config.p.ln(), (1.0 - config.p).ln());
    let ups = config
        .frequencies
        .iter()
        .map(|&f| config.counted_up(f))
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = match (ups.iter().min(), ups.iter().max()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0, n),
    };
    for m in lo..=hi {
        w.write_record([
            digest.clone(),
            format!("{:?}", m as f64 / n as f64),
            String::new(),
            format!("{:.14e}", m as f64 * ln_p + (n - m) as f64 * ln_q),
            format!("{:.14e}", config.count_model.log_count(n, m as f64).ln()),
        ])?;
    }
    if config.n_background > 0 {
        for line in frequency_lines(config)? {
            let f = format!("{:?}", line.f);
            for pt in &line.points {
                w.write_record([
                    digest.clone(),
                    f.clone(),
                    pt.m_prime.to_string(),
                    format!("{:.14e}", pt.log_size),
                    format!("{:.14e}", pt.log_count),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
