//! Mangling transition regions and unmangled-world counting.
//!
//! A [`TransitionRegion`] gives the unmangled fraction `gamma(m)` of worlds of
//! size `m`. Counting unmangled worlds per outcome, exactly over a class
//! ensemble or by quadrature over an analytic density, gives the outcome
//! shares an observer picked from unmangled worlds would see.

use std::io::Write;

use crate::branching::{BranchEvent, WorldClass, WorldEnsemble};
use crate::error::{Error, Result};
use crate::lognormal::{LogDensity, LognormalSpec};
use crate::numerics::{log_sum, LogValue};

/// `gamma` must be at most this at the bottom of a region, and at least `1 -` this at the top.
pub const ENDPOINT_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Jumps from 0 to 1 at the midpoint.
    Step,
    /// Linear in `ln m` between the endpoints.
    LinearInLog,
    /// Logistic in `ln m`, centered at the midpoint.
    Logistic { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRegion {
    log_m_low: f64,
    log_m_high: f64,
    shape: Shape,
}

impl TransitionRegion {
    pub fn new(log_m_low: f64, log_m_high: f64, shape: Shape) -> Result<TransitionRegion> {
        if log_m_low.is_nan() || log_m_high.is_nan() || log_m_low > log_m_high {
            return Err(Error::InvalidParameter(format!(
                "transition region [{log_m_low}, {log_m_high}] is not an interval"
            )));
        }
        let finite = log_m_low.is_finite() && log_m_high.is_finite();
        match shape {
            Shape::Step => {
                if !finite && log_m_low != log_m_high {
                    return Err(Error::InvalidParameter(
                        "an unbounded step region must have equal endpoints".into(),
                    ));
                }
            }
            Shape::LinearInLog => {
                if !finite {
                    return Err(Error::InvalidParameter("linear region needs finite endpoints".into()));
                }
            }
            Shape::Logistic { scale } => {
                if !finite || !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "logistic region needs finite endpoints and positive scale, got scale {scale}"
                    )));
                }
            }
        }
        let region = TransitionRegion {
            log_m_low,
            log_m_high,
            shape,
        };
        if finite
            && log_m_low < log_m_high
            && (region.unmangled_fraction(log_m_low) > ENDPOINT_TOL
                || region.unmangled_fraction(log_m_high) < 1.0 - ENDPOINT_TOL)
        {
            return Err(Error::InvalidParameter(format!(
                "region [{log_m_low}, {log_m_high}] with {shape:?} does not go from ~0 to ~1"
            )));
        }
        Ok(region)
    }

    /// Sharp cutoff: worlds at or above `log_m` are unmangled. `-inf` disables mangling.
    pub fn step_at(log_m: f64) -> TransitionRegion {
        TransitionRegion {
            log_m_low: log_m,
            log_m_high: log_m,
            shape: Shape::Step,
        }
    }

    pub fn unmangled_everywhere() -> TransitionRegion {
        TransitionRegion::step_at(f64::NEG_INFINITY)
    }

    /// Region of the given width centered at `center`.
    pub fn around(center: f64, width: f64, shape: Shape) -> Result<TransitionRegion> {
        if !(width >= 0.0) {
            return Err(Error::InvalidParameter(format!("width {width} must be >= 0")));
        }
        TransitionRegion::new(center - 0.5 * width, center + 0.5 * width, shape)
    }

    /// Region centered `z` spreads from the median measure of `spec`.
    pub fn at_z(spec: &LognormalSpec, z: f64, width: f64, shape: Shape) -> Result<TransitionRegion> {
        TransitionRegion::around(spec.log_m_at_z(z), width, shape)
    }

    pub fn log_m_low(&self) -> f64 {
        self.log_m_low
    }

    pub fn log_m_high(&self) -> f64 {
        self.log_m_high
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn midpoint(&self) -> f64 {
        if self.log_m_low == self.log_m_high {
            self.log_m_low
        } else {
            0.5 * (self.log_m_low + self.log_m_high)
        }
    }

    pub fn width(&self) -> f64 {
        if self.log_m_low == self.log_m_high {
            0.0
        } else {
            self.log_m_high - self.log_m_low
        }
    }

    pub fn shifted(&self, delta: f64) -> TransitionRegion {
        TransitionRegion {
            log_m_low: self.log_m_low + delta,
            log_m_high: self.log_m_high + delta,
            shape: self.shape,
        }
    }

    /// `gamma(m)`, nondecreasing in `log_m`.
    pub fn unmangled_fraction(&self, log_m: f64) -> f64 {
        match self.shape {
            Shape::Step => {
                if log_m >= self.midpoint() {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::LinearInLog => {
                let w = self.width();
                if w == 0.0 {
                    return if log_m >= self.log_m_low { 1.0 } else { 0.0 };
                }
                ((log_m - self.log_m_low) / w).clamp(0.0, 1.0)
            }
            Shape::Logistic { scale } => 1.0 / (1.0 + (-(log_m - self.midpoint()) / scale).exp()),
        }
    }

    /// Below this point `gamma` is negligible for counting.
    fn lower_reach(&self) -> f64 {
        match self.shape {
            Shape::Step => self.midpoint(),
            Shape::LinearInLog => self.log_m_low,
            Shape::Logistic { .. } => self.log_m_low - 10.0 * self.width(),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self.shape {
            Shape::Step => vec![self.midpoint()],
            Shape::LinearInLog => vec![self.log_m_low, self.log_m_high],
            Shape::Logistic { .. } => Vec::new(),
        }
    }
}

pub fn unmangled_fraction(region: &TransitionRegion, log_m: f64) -> f64 {
    region.unmangled_fraction(log_m)
}

/// Density of worlds seeing outcome `k`: `D_k(m) = G_k D(m/F_k)/F_k` per unit
/// `m`. Per unit `ln m` the Jacobian cancels, leaving `G_k D(ln m - ln F_k)`.
#[derive(Debug, Clone, Copy)]
pub struct OutcomeDensity<D> {
    pub base: D,
    pub fraction: f64,
    pub multiplicity: f64,
}

impl<D: LogDensity> LogDensity for OutcomeDensity<D> {
    fn density(&self, log_m: f64) -> LogValue {
        outcome_density(&self.base, self.fraction, self.multiplicity, log_m)
    }
    fn center(&self) -> f64 {
        self.base.center() + self.fraction.ln()
    }
    fn scale(&self) -> f64 {
        self.base.scale()
    }
    fn support(&self) -> (f64, f64) {
        let (lo, hi) = self.base.support();
        let shift = self.fraction.ln();
        (lo + shift, hi + shift)
    }
}

pub fn outcome_density<D: LogDensity>(base: &D, fraction: f64, multiplicity: f64, log_m: f64) -> LogValue {
    base.density(log_m - fraction.ln()).scale_ln(multiplicity.ln())
}

// Quadrature controls.
const SCAN_INTERVALS: usize = 2048;
const START_PANELS: usize = 16;
const MAX_PANELS: usize = 1 << 20;
const REL_TOL: f64 = 1e-9;
/// Integrand below `1e-30` of its peak is dropped.
const LN_TRUNCATION: f64 = 69.077_552_789_821_37;

/// Number of unmangled worlds, `integral gamma(m) D(m) d ln m`, by adaptive
/// composite Simpson quadrature in `ln m`.
pub fn unmangled_count<D: LogDensity>(density: &D, region: &TransitionRegion) -> Result<LogValue> {
    let (s_lo, s_hi) = density.support();
    let lo = s_lo.max(region.lower_reach());
    let hi = s_hi;
    if !(lo < hi) || lo == f64::INFINITY {
        return Ok(LogValue::ZERO);
    }
    let ln_integrand = |x: f64| {
        let g = region.unmangled_fraction(x);
        if g <= 0.0 {
            f64::NEG_INFINITY
        } else {
            density.density(x).ln() + g.ln()
        }
    };
    let (a, b) = bracket(&ln_integrand, lo, hi, density.center(), density.scale())?;
    integrate_ln(&ln_integrand, a, b, &region.breakpoints())
}

/// Finite `[a, b]` inside `[lo, hi]` outside which the integrand is negligible.
fn bracket(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, center: f64, scale: f64) -> Result<(f64, f64)> {
    if lo.is_finite() && hi.is_finite() {
        return Ok((lo, hi));
    }
    let anchor = if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        center
    };
    let step0 = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
    let march = |dir: f64| -> Result<f64> {
        let mut x = anchor;
        let mut step = step0;
        let mut peak = f(anchor);
        for _ in 0..200 {
            x += dir * step;
            let v = f(x);
            if v.is_nan() {
                return Err(Error::Quadrature { panels: 0, change: f64::NAN });
            }
            peak = peak.max(v);
            if peak > f64::NEG_INFINITY && v < peak - LN_TRUNCATION - 10.0 {
                return Ok(x);
            }
            step *= 1.5;
        }
        Err(Error::Quadrature {
            panels: 0,
            change: f64::INFINITY,
        })
    };
    let a = if lo.is_finite() { lo } else { march(-1.0)? };
    let b = if hi.is_finite() { hi } else { march(1.0)? };
    Ok((a, b))
}

fn integrate_ln(f: &impl Fn(f64) -> f64, a: f64, b: f64, breakpoints: &[f64]) -> Result<LogValue> {
    let h = (b - a) / SCAN_INTERVALS as f64;
    let samples: Vec<f64> = (0..=SCAN_INTERVALS).map(|i| f(a + i as f64 * h)).collect();
    let peak = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Ok(LogValue::ZERO);
    }
    if peak.is_nan() {
        return Err(Error::Quadrature { panels: 0, change: f64::NAN });
    }
    let keep = |v: &f64| *v > peak - LN_TRUNCATION;
    let first = samples.iter().position(keep).unwrap_or(0);
    let last = samples.iter().rposition(keep).unwrap_or(SCAN_INTERVALS);
    let (a, b) = (
        a + first.saturating_sub(1) as f64 * h,
        a + (last + 1).min(SCAN_INTERVALS) as f64 * h,
    );

    let mut edges = vec![a];
    edges.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
    edges.push(b);
    let g = |x: f64| {
        let v = f(x);
        if v == f64::NEG_INFINITY {
            0.0
        } else {
            (v - peak).exp()
        }
    };

    let mut panels = START_PANELS;
    let mut previous = simpson(&g, &edges, panels);
    loop {
        panels *= 2;
        let current = simpson(&g, &edges, panels);
        let change = (current - previous).abs();
        if change <= 15.0 * REL_TOL * current.abs() || current == 0.0 {
            let value = current + (current - previous) / 15.0;
            return Ok(if value > 0.0 {
                LogValue::from_ln(peak + value.ln())
            } else {
                LogValue::ZERO
            });
        }
        if panels >= MAX_PANELS {
            return Err(Error::Quadrature {
                panels,
                change: change / current.abs(),
            });
        }
        previous = current;
    }
}

fn simpson(g: &impl Fn(f64) -> f64, edges: &[f64], panels: usize) -> f64 {
    edges
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let h = (b - a) / panels as f64;
            let mut sum = g(a) + g(b);
            for i in 1..panels {
                let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
                sum += weight * g(a + i as f64 * h);
            }
            sum * h / 3.0
        })
        .sum()
}

/// Exact unmangled count over classes passing `filter`: `sum gamma(size) * count`.
pub fn unmangled_count_exact(
    ensemble: &WorldEnsemble,
    region: &TransitionRegion,
    filter: impl Fn(&WorldClass) -> bool,
) -> LogValue {
    let terms: Vec<LogValue> = ensemble
        .classes()
        .iter()
        .filter(|c| filter(c))
        .filter_map(|c| {
            let g = region.unmangled_fraction(c.log_size);
            (g > 0.0).then(|| c.log_count.scale_ln(g.ln()))
        })
        .collect();
    log_sum(&terms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeShare {
    pub label: String,
    pub fraction: f64,
    pub multiplicity: u64,
    pub log_unmangled: LogValue,
    pub share: f64,
}

impl OutcomeShare {
    /// `F * G`, the outcome's measure.
    pub fn born_weight(&self) -> f64 {
        self.fraction * self.multiplicity as f64
    }

    pub fn deviation(&self) -> f64 {
        self.share - self.born_weight()
    }
}

fn normalize(event: &BranchEvent, counts: Vec<LogValue>) -> Result<Vec<OutcomeShare>> {
    let total = log_sum(&counts);
    if total.is_zero() {
        return Err(Error::EmptyUnmangled("the cutoff lies above every world".into()));
    }
    Ok(event
        .outcomes()
        .iter()
        .zip(counts)
        .map(|(o, c)| OutcomeShare {
            label: o.label.clone(),
            fraction: o.fraction,
            multiplicity: o.multiplicity,
            log_unmangled: c,
            share: (c / total).to_f64(),
        })
        .collect())
}

/// Share of unmangled worlds seeing each outcome of `event` when it splits
/// every world of `background`, counted exactly class by class.
pub fn outcome_shares(
    event: &BranchEvent,
    background: &WorldEnsemble,
    region: &TransitionRegion,
) -> Result<Vec<OutcomeShare>> {
    let counts = event
        .outcomes()
        .iter()
        .map(|o| {
            // A child of size s + ln F is unmangled iff s clears the region shifted down by ln F.
            let shifted = region.shifted(-o.fraction.ln());
            unmangled_count_exact(background, &shifted, |_| true).scale_ln((o.multiplicity as f64).ln())
        })
        .collect();
    normalize(event, counts)
}

/// [`outcome_shares`] against an analytic background density, by quadrature.
pub fn analytic_outcome_shares<D: LogDensity + Copy>(
    event: &BranchEvent,
    background: D,
    region: &TransitionRegion,
) -> Result<Vec<OutcomeShare>> {
    let counts = event
        .outcomes()
        .iter()
        .map(|o| {
            let d = OutcomeDensity {
                base: background,
                fraction: o.fraction,
                multiplicity: o.multiplicity as f64,
            };
            unmangled_count(&d, region)
        })
        .collect::<Result<Vec<_>>>()?;
    normalize(event, counts)
}

/// Shares for a pure power-law background `D ~ m^alpha` with a sharp cutoff:
/// outcome `k` keeps `G_k F_k^-(1+alpha)` worlds above it.
pub fn power_law_shares(alpha: f64, event: &BranchEvent) -> Result<Vec<OutcomeShare>> {
    if !(alpha < -1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha}: the count above a cutoff diverges unless alpha < -1"
        )));
    }
    let counts = event
        .outcomes()
        .iter()
        .map(|o| LogValue::from_ln((o.multiplicity as f64).ln() - (1.0 + alpha) * o.fraction.ln()))
        .collect();
    normalize(event, counts)
}

/// CSV with columns `outcome_label,F,G,share,born_weight,deviation`.
pub fn write_shares_csv<W: Write>(shares: &[OutcomeShare], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["outcome_label", "F", "G", "share", "born_weight", "deviation"])?;
    for s in shares {
        w.write_record([
            s.label.clone(),
            format!("{:.15e}", s.fraction),
            s.multiplicity.to_string(),
            format!("{:.15e}", s.share),
            format!("{:.15e}", s.born_weight()),
            format!("{:.15e}", s.deviation()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
