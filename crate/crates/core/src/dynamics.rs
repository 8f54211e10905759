//! Growth of the world-size distribution in time and the race between
//! residual coherence and relative world size.
//!
//! A population undergoing `r` decoherence events per unit time has, after
//! `N = rt` events, `ln m^ = rt ln m^_1` and `sigma = sigma_1 sqrt(rt)`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::lognormal::{binary_moments, LognormalSpec};
use crate::mangling::{unmangled_count, OutcomeDensity, Shape, TransitionRegion};
use crate::numerics::{bisect, log_normal_cdf, log_normal_sf, LogValue};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationSpec {
    rate: f64,
    per_event_log_median_measure: f64,
    per_event_sigma: f64,
}

impl PopulationSpec {
    pub fn new(rate: f64, per_event_log_median_measure: f64, per_event_sigma: f64) -> Result<PopulationSpec> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate = {rate} must be positive")));
        }
        if !(per_event_log_median_measure.is_finite() && per_event_log_median_measure <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "per-event ln m^ = {per_event_log_median_measure} must be finite and non-positive"
            )));
        }
        if !(per_event_sigma >= 0.0 && per_event_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "per-event sigma = {per_event_sigma} must be non-negative"
            )));
        }
        Ok(PopulationSpec {
            rate,
            per_event_log_median_measure,
            per_event_sigma,
        })
    }

    /// Population driven by binary events of weight `p`.
    pub fn from_binary(rate: f64, p: f64) -> Result<PopulationSpec> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!("p = {p} outside (0, 1)")));
        }
        let (mean, sigma) = binary_moments(p);
        PopulationSpec::new(rate, mean, sigma)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn per_event_log_median_measure(&self) -> f64 {
        self.per_event_log_median_measure
    }

    pub fn per_event_sigma(&self) -> f64 {
        self.per_event_sigma
    }

    /// `ln m^(t) = rt ln m^_1`.
    pub fn log_median_measure(&self, t: f64) -> f64 {
        self.rate * t * self.per_event_log_median_measure
    }

    /// `ln m~(t) = rt (ln m^_1 - sigma_1^2)`.
    pub fn median_trajectory(&self, t: f64) -> f64 {
        self.rate * t * (self.per_event_log_median_measure - self.per_event_sigma.powi(2))
    }

    /// `sigma(t) = sigma_1 sqrt(rt)`.
    pub fn sigma_trajectory(&self, t: f64) -> f64 {
        self.per_event_sigma * (self.rate * t).sqrt()
    }

    /// Lognormal distribution at time `t`; degenerate while `sigma(t) = 0`.
    pub fn lognormal(&self, t: f64) -> Result<LognormalSpec> {
        LognormalSpec::new(self.log_median_measure(t), self.sigma_trajectory(t))
    }
}

/// How residual coherence behaves once the fast exponential phase is over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoherenceTail {
    /// `epsilon(t) = max(floor, epsilon_0 e^{-lambda t})`.
    Floor(f64),
    /// Exponential up to `crossover`, then `(t / crossover)^{-exponent}`.
    PowerTail { crossover: f64, exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceModel {
    initial: f64,
    decay_rate: f64,
    tail: CoherenceTail,
}

impl CoherenceModel {
    pub fn new(initial: f64, decay_rate: f64, tail: CoherenceTail) -> Result<CoherenceModel> {
        if !(initial > 0.0 && initial <= 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon_0 = {initial} outside (0, 1]")));
        }
        if !(decay_rate > 0.0 && decay_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("decay rate = {decay_rate} must be positive")));
        }
        match tail {
            CoherenceTail::Floor(floor) if !(floor >= 0.0 && floor <= initial) => {
                return Err(Error::InvalidParameter(format!(
                    "floor = {floor} must lie in [0, epsilon_0]"
                )));
            }
            CoherenceTail::PowerTail { crossover, exponent }
                if !(crossover > 0.0 && crossover.is_finite() && exponent > 0.0 && exponent.is_finite()) =>
            {
                return Err(Error::InvalidParameter(format!(
                    "power tail needs positive crossover and exponent, got {crossover}, {exponent}"
                )));
            }
            _ => {}
        }
        Ok(CoherenceModel {
            initial,
            decay_rate,
            tail,
        })
    }

    pub fn floor(initial: f64, decay_rate: f64, floor: f64) -> Result<CoherenceModel> {
        CoherenceModel::new(initial, decay_rate, CoherenceTail::Floor(floor))
    }

    pub fn power_tail(initial: f64, decay_rate: f64, crossover: f64, exponent: f64) -> Result<CoherenceModel> {
        CoherenceModel::new(initial, decay_rate, CoherenceTail::PowerTail { crossover, exponent })
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }

    pub fn tail(&self) -> CoherenceTail {
        self.tail
    }

    /// `ln epsilon(t)`; finite long after `epsilon(t)` underflows.
    pub fn ln_coherence_at(&self, t: f64) -> f64 {
        let exponential = self.initial.ln() - self.decay_rate * t;
        match self.tail {
            CoherenceTail::Floor(floor) => exponential.max(floor.ln()),
            CoherenceTail::PowerTail { crossover, exponent } => {
                if t <= crossover {
                    exponential
                } else {
                    self.initial.ln() - self.decay_rate * crossover - exponent * (t / crossover).ln()
                }
            }
        }
    }

    pub fn coherence_at(&self, t: f64) -> f64 {
        self.ln_coherence_at(t).exp()
    }
}

/// `ln delta` between a world at z-score `z_small` and one at `z_large`:
/// `delta^2 = m_small / m_large`.
pub fn ln_relative_size(pop: &PopulationSpec, t: f64, z_large: f64, z_small: f64) -> f64 {
    0.5 * (z_small - z_large) * pop.sigma_trajectory(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Onset {
    At(f64),
    Never,
}

impl Onset {
    pub fn time(self) -> Option<f64> {
        match self {
            Onset::At(t) => Some(t),
            Onset::Never => None,
        }
    }
}

const ONSET_GRID: usize = 4096;
const ONSET_REL_TOL: f64 = 1e-6;

/// Earliest time the coherence between a world at `z` and the median-measure
/// world reaches their relative size `delta(t)`, `ln delta = z sigma(t) / 2`.
pub fn mangling_onset(pop: &PopulationSpec, model: &CoherenceModel, z: f64, horizon: f64) -> Result<Onset> {
    mangling_onset_pair(pop, model, 0.0, z, horizon)
}

/// [`mangling_onset`] for a world at `z_small` against a larger one at `z_large`.
pub fn mangling_onset_pair(
    pop: &PopulationSpec,
    model: &CoherenceModel,
    z_large: f64,
    z_small: f64,
    horizon: f64,
) -> Result<Onset> {
    if !(z_small < z_large) || !z_small.is_finite() || !z_large.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need a smaller world: z_small = {z_small} must be below z_large = {z_large}"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon = {horizon} must be positive")));
    }
    let gap = |t: f64| model.ln_coherence_at(t) - ln_relative_size(pop, t, z_large, z_small);
    if gap(0.0) >= 0.0 {
        return Ok(Onset::At(0.0));
    }

    // Geometric grid from horizon * 1e-12 up to the horizon.
    let first = horizon * 1e-12;
    let ratio = (horizon / first).powf(1.0 / (ONSET_GRID - 1) as f64);
    let mut prev = 0.0;
    for i in 0..ONSET_GRID {
        let t = if i == ONSET_GRID - 1 { horizon } else { first * ratio.powi(i as i32) };
        if gap(t) >= 0.0 {
            let root = bisect(gap, prev, t, ONSET_REL_TOL * t)?;
            // Report the side of the bracket where coherence already wins.
            return Ok(Onset::At(if gap(root) >= 0.0 { root } else { (root + ONSET_REL_TOL * t).min(t) }));
        }
        prev = t;
    }

    // No crossing up to the horizon: decide whether one can still come.
    let c = -0.5 * (z_small - z_large) * pop.per_event_sigma * pop.rate.sqrt();
    if c == 0.0 {
        // delta stays 1 while epsilon never increases.
        return Ok(Onset::Never);
    }
    match model.tail {
        CoherenceTail::Floor(floor) if floor == 0.0 => {
            // gap = ln eps_0 - lambda t + c sqrt(t) peaks at sqrt(t) = c / (2 lambda).
            let peak = model.initial.ln() + c * c / (4.0 * model.decay_rate);
            if peak < 0.0 {
                Ok(Onset::Never)
            } else {
                Err(Error::Indeterminate(format!(
                    "coherence still reaches the relative size after the horizon {horizon}"
                )))
            }
        }
        _ => Err(Error::Indeterminate(format!(
            "no onset before the horizon {horizon}, but the slow coherence tail crosses later"
        ))),
    }
}

/// Placement of the common transition region in [`rate_selection`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionMode {
    Fixed(TransitionRegion),
    /// Centered on the combined median measure at every time.
    TrackCombined { width: f64, shape: Shape },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionPoint {
    pub t: f64,
    pub log_cutoff: f64,
    pub log_unmangled_slow: LogValue,
    pub log_unmangled_fast: LogValue,
    pub share_slow: f64,
}

/// Measure median of two equal-measure populations, each normal in `ln m` (or a point mass).
pub fn combined_log_median_measure(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    let ((mu_a, s_a), (mu_b, s_b)) = (a, b);
    let ln_cdf = |x: f64, mu: f64, s: f64| {
        if s == 0.0 {
            if x >= mu {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            log_normal_cdf((x - mu) / s)
        }
    };
    let ln_sf = |x: f64, mu: f64, s: f64| {
        if s == 0.0 {
            if x < mu {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            log_normal_sf((x - mu) / s)
        }
    };
    if mu_a == mu_b {
        return Ok(mu_a);
    }
    let (lo, hi) = (mu_a.min(mu_b), mu_a.max(mu_b));
    // Equal weights: Phi_a + Phi_b = 1 iff Phi_a = SF_b.
    let excess = |x: f64| {
        let (pa, sb) = (ln_cdf(x, mu_a, s_a), ln_sf(x, mu_b, s_b));
        match (pa.is_finite(), sb.is_finite()) {
            (true, true) => pa - sb,
            (false, false) => 0.0,
            (false, true) => -1.0,
            (true, false) => 1.0,
        }
    };
    bisect(excess, lo, hi, 1e-9 * (1.0 + hi.abs()))
}

fn population_unmangled(pop: &PopulationSpec, t: f64, region: &TransitionRegion) -> Result<LogValue> {
    let half = 0.5f64;
    if pop.sigma_trajectory(t) == 0.0 {
        // All worlds share one size; together they hold measure 1/2.
        let log_m = pop.log_median_measure(t) + half.ln();
        let g = region.unmangled_fraction(log_m);
        return Ok(LogValue::from_real(g).scale_ln(half.ln() - log_m));
    }
    let density = OutcomeDensity {
        base: pop.lognormal(t)?.worlds(),
        fraction: half,
        multiplicity: 1.0,
    };
    unmangled_count(&density, region)
}

/// Share of unmangled worlds belonging to the slowly decohering population,
/// both populations starting with measure 1/2 and sharing one transition region.
pub fn rate_selection(
    slow: &PopulationSpec,
    fast: &PopulationSpec,
    mode: RegionMode,
    t_grid: &[f64],
) -> Result<Vec<SelectionPoint>> {
    if slow.rate > fast.rate {
        return Err(Error::InvalidParameter(format!(
            "slow rate {} exceeds fast rate {}",
            slow.rate, fast.rate
        )));
    }
    if let RegionMode::TrackCombined { width, .. } = mode {
        if !(width >= 0.0 && width.is_finite()) {
            return Err(Error::InvalidParameter(format!("region width = {width} must be non-negative")));
        }
    }
    let half = 0.5f64.ln();
    t_grid
        .iter()
        .map(|&t| {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!("time {t} must be non-negative")));
            }
            let region = match mode {
                RegionMode::Fixed(region) => region,
                RegionMode::TrackCombined { width, shape } => {
                    let center = combined_log_median_measure(
                        (slow.log_median_measure(t) + half, slow.sigma_trajectory(t)),
                        (fast.log_median_measure(t) + half, fast.sigma_trajectory(t)),
                    )?;
                    TransitionRegion::around(center, width, shape)?
                }
            };
            let s = population_unmangled(slow, t, &region)?;
            let f = population_unmangled(fast, t, &region)?;
            let total = s + f;
            if total.is_zero() {
                return Err(Error::EmptyUnmangled(format!(
                    "cutoff too high: both populations are fully mangled at t = {t}"
                )));
            }
            Ok(SelectionPoint {
                t,
                log_cutoff: region.midpoint(),
                log_unmangled_slow: s,
                log_unmangled_fast: f,
                share_slow: (s / total).to_f64(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsRow {
    pub t: f64,
    pub ln_median: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub share_slow: f64,
}

/// Trajectory of the slow population alongside the coherence race at `z` and the rate-selection share.
pub fn dynamics_table(
    slow: &PopulationSpec,
    fast: &PopulationSpec,
    model: &CoherenceModel,
    z: f64,
    mode: RegionMode,
    t_grid: &[f64],
) -> Result<Vec<DynamicsRow>> {
    let shares = rate_selection(slow, fast, mode, t_grid)?;
    Ok(shares
        .iter()
        .map(|pt| DynamicsRow {
            t: pt.t,
            ln_median: slow.median_trajectory(pt.t),
            sigma: slow.sigma_trajectory(pt.t),
            epsilon: model.coherence_at(pt.t),
            delta: ln_relative_size(slow, pt.t, 0.0, z).exp(),
            share_slow: pt.share_slow,
        })
        .collect())
}

pub fn write_dynamics_csv<W: Write>(rows: &[DynamicsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "ln_median", "sigma", "epsilon", "delta", "share_slow"])?;
    for r in rows {
        w.write_record([
            format!("{:?}", r.t),
            format!("{:.14e}", r.ln_median),
            format!("{:.14e}", r.sigma),
            format!("{:.14e}", r.epsilon),
            format!("{:.14e}", r.delta),
            format!("{:.15e}", r.share_slow),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `n` times spread geometrically over `[first, last]`, preceded by `t = 0`.
pub fn time_grid(first: f64, last: f64, n: usize) -> Result<Vec<f64>> {
    if !(first > 0.0 && last >= first && n >= 1) {
        return Err(Error::InvalidParameter(format!(
            "time grid needs 0 < first <= last and n >= 1, got {first}, {last}, {n}"
        )));
    }
    let mut grid = vec![0.0];
    if n == 1 {
        grid.push(last);
        return Ok(grid);
    }
    let ratio = (last / first).powf(1.0 / (n - 1) as f64);
    grid.extend((0..n).map(|i| if i == n - 1 { last } else { first * ratio.powi(i as i32) }));
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(rate: f64, p: f64) -> PopulationSpec {
        PopulationSpec::from_binary(rate, p).unwrap()
    }

    #[test]
    fn trajectories() {
        let pop = binary(1.0, 0.7);
        assert_eq!(pop.median_trajectory(0.0), 0.0);
        assert_eq!(pop.sigma_trajectory(0.0), 0.0);
        assert!((pop.per_event_sigma() - 0.388_280_658_139_849).abs() < 1e-12);
        assert!((pop.median_trajectory(100.0) - (-76.162_617_154)).abs() < 1e-8);
        let s = pop.sigma_trajectory(123.0);
        assert!((pop.sigma_trajectory(246.0) / s - 2f64.sqrt()).abs() < 1e-12);
        let even = binary(3.0, 0.5);
        assert_eq!(even.per_event_sigma(), 0.0);
        assert!((even.median_trajectory(2.0) - 6.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn matches_binary_lognormal() {
        let pop = binary(2.0, 0.75);
        let spec = LognormalSpec::from_binary(10_000, 0.75).unwrap();
        assert!((pop.sigma_trajectory(5000.0) - spec.sigma()).abs() < 1e-9);
        for t in [1.0, 10.0, 1e3, 5e3] {
            let l = pop.lognormal(t).unwrap();
            assert!((pop.median_trajectory(t) - (l.log_median_measure() - l.sigma().powi(2))).abs() < 1e-9);
        }
    }

    #[test]
    fn coherence_models() {
        let m = CoherenceModel::floor(0.5, 1.0, 1e-20).unwrap();
        assert_eq!(m.coherence_at(0.0), 0.5);
        assert!((m.coherence_at(1e4) - 1e-20).abs() < 1e-32);
        let tail = CoherenceModel::power_tail(0.5, 1.0, 10.0, 2.0).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let e = tail.ln_coherence_at(i as f64 * 0.5);
            assert!(e <= prev);
            prev = e;
        }
        assert!(CoherenceModel::floor(0.0, 1.0, 0.0).is_err());
        assert!(CoherenceModel::floor(0.5, 1.0, 0.6).is_err());
        assert!(CoherenceModel::power_tail(0.5, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn onset_with_floor() {
        let pop = binary(1.0, 0.7);
        let m = CoherenceModel::floor(0.5, 1.0, 1e-20).unwrap();
        let t = mangling_onset(&pop, &m, -1.0, 1e6).unwrap().time().unwrap();
        let expected = (2.0 * 1e-20f64.ln() / pop.per_event_sigma()).powi(2);
        assert!((t / expected - 1.0).abs() < 2e-6, "{t} vs {expected}");
        assert!((t - 5.63e4).abs() < 0.01e4);
    }

    #[test]
    fn onset_pure_exponential_never() {
        let pop = binary(1.0, 0.7);
        let m = CoherenceModel::floor(0.5, 1.0, 0.0).unwrap();
        assert_eq!(mangling_onset(&pop, &m, -1.0, 1e6).unwrap(), Onset::Never);
    }

    #[test]
    fn onset_immediate_and_indeterminate() {
        let pop = binary(1.0, 0.7);
        let full = CoherenceModel::floor(1.0, 1.0, 1e-20).unwrap();
        assert_eq!(mangling_onset(&pop, &full, -1e-9, 1e3).unwrap(), Onset::At(0.0));
        let m = CoherenceModel::floor(0.5, 1.0, 1e-20).unwrap();
        assert!(matches!(
            mangling_onset(&pop, &m, -1.0, 1e3),
            Err(Error::Indeterminate(_))
        ));
        assert!(mangling_onset(&pop, &m, 0.5, 1e3).is_err());
    }

    #[test]
    fn onset_power_tail() {
        let pop = binary(1.0, 0.7);
        let m = CoherenceModel::power_tail(0.5, 1.0, 5.0, 2.0).unwrap();
        let t = mangling_onset(&pop, &m, -2.0, 1e8).unwrap().time().unwrap();
        let gap = |t: f64| m.ln_coherence_at(t) - ln_relative_size(&pop, t, 0.0, -2.0);
        assert!(gap(t) >= 0.0 && gap(t * (1.0 - 1e-5)) < 0.0);
    }

    #[test]
    fn pair_onset_uses_difference() {
        let pop = binary(1.0, 0.7);
        let m = CoherenceModel::floor(0.5, 1.0, 1e-20).unwrap();
        let a = mangling_onset(&pop, &m, -1.0, 1e6).unwrap();
        let b = mangling_onset_pair(&pop, &m, 2.0, 1.0, 1e6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn combined_median() {
        let x = combined_log_median_measure((-10.0, 2.0), (-20.0, 2.0)).unwrap();
        assert!((x - (-15.0)).abs() < 1e-7);
        let x = combined_log_median_measure((0.0, 0.0), (0.0, 0.0)).unwrap();
        assert_eq!(x, 0.0);
        // Far-separated populations: Phi_a(x) = SF_b(x) deep in both tails.
        let x = combined_log_median_measure((-6108.0, 38.8), (-12217.0, 54.9)).unwrap();
        let expected = (-6108.0 * 54.9 + -12217.0 * 38.8) / (38.8 + 54.9);
        assert!((x - expected).abs() < 1.0, "{x}");
    }

    #[test]
    fn equal_rates_split_evenly() {
        let pop = binary(1.0, 0.7);
        let mode = RegionMode::TrackCombined {
            width: 0.0,
            shape: Shape::Step,
        };
        for pt in rate_selection(&pop, &pop, mode, &[0.0, 1.0, 50.0, 1e3]).unwrap() {
            assert!((pt.share_slow - 0.5).abs() < 1e-12, "{pt:?}");
        }
    }

    #[test]
    fn slow_population_wins() {
        let grid = time_grid(1.0, 1e4, 40).unwrap();
        let mode = RegionMode::TrackCombined {
            width: 0.0,
            shape: Shape::Step,
        };
        let pts = rate_selection(&binary(1.0, 0.7), &binary(2.0, 0.7), mode, &grid).unwrap();
        assert!((pts[0].share_slow - 0.5).abs() < 1e-12);
        assert!(pts.last().unwrap().share_slow > 0.99);
    }

    #[test]
    fn fixed_region_too_high() {
        let mode = RegionMode::Fixed(TransitionRegion::step_at(1.0));
        assert!(matches!(
            rate_selection(&binary(1.0, 0.7), &binary(2.0, 0.7), mode, &[0.0]),
            Err(Error::EmptyUnmangled(_))
        ));
        assert!(rate_selection(&binary(2.0, 0.7), &binary(1.0, 0.7), mode, &[10.0]).is_err());
    }

    #[test]
    fn dynamics_csv_header() {
        let slow = binary(1.0, 0.7);
        let model = CoherenceModel::floor(0.5, 1.0, 1e-20).unwrap();
        let mode = RegionMode::TrackCombined {
            width: 0.0,
            shape: Shape::Step,
        };
        let rows = dynamics_table(&slow, &binary(2.0, 0.7), &model, -1.0, mode, &[0.0, 10.0]).unwrap();
        assert_eq!(rows[0].delta, 1.0);
        let mut buf = Vec::new();
        write_dynamics_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,ln_median,sigma,epsilon,delta,share_slow\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
