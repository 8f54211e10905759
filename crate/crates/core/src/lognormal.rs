//! Analytic lognormal world-size distributions.
//!
//! Densities are per unit `ln m`. Worlds are normal in `ln m` around the
//! median world `ln m~`; measure is normal around the median measure
//! `ln m^ = ln m~ + sigma^2`, both with the same spread. [`LognormalSpec::local_power`]
//! is the slope `d ln D / d ln m` of the density per unit `m`, which is one
//! less than the slope of the per-`ln m` density.

use crate::error::{Error, Result};
use crate::numerics::{log_normal_pdf, LogValue};

/// A density over `ln m`, integrated by [`crate::mangling::unmangled_count`].
pub trait LogDensity {
    /// Density per unit `ln m` at `log_m`.
    fn density(&self, log_m: f64) -> LogValue;

    /// A point inside the bulk of the density.
    fn center(&self) -> f64;

    /// Length scale of the bulk, in `ln m` units.
    fn scale(&self) -> f64;

    /// Interval outside of which the density is identically zero.
    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

impl<D: LogDensity + ?Sized> LogDensity for &D {
    fn density(&self, log_m: f64) -> LogValue {
        (**self).density(log_m)
    }
    fn center(&self) -> f64 {
        (**self).center()
    }
    fn scale(&self) -> f64 {
        (**self).scale()
    }
    fn support(&self) -> (f64, f64) {
        (**self).support()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalSpec {
    log_median_measure: f64,
    sigma: f64,
}

impl LognormalSpec {
    pub fn new(log_median_measure: f64, sigma: f64) -> Result<LognormalSpec> {
        if !log_median_measure.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ln m^ = {log_median_measure} is not finite"
            )));
        }
        if sigma == 0.0 {
            return Err(Error::Degenerate("sigma = 0: all worlds have one size".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma} must be positive")));
        }
        Ok(LognormalSpec {
            log_median_measure,
            sigma,
        })
    }

    /// Distribution after `n` binary events of weight `p`:
    /// `ln m^ = n (p ln p + (1-p) ln(1-p))`, `sigma = sqrt(n p (1-p)) |ln(p/(1-p))|`.
    pub fn from_binary(n: u64, p: f64) -> Result<LognormalSpec> {
        if n == 0 {
            return Err(Error::InvalidParameter("need at least one event".into()));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!("p = {p} outside (0, 1)")));
        }
        let (mean, sigma1) = binary_moments(p);
        LognormalSpec::new(n as f64 * mean, (n as f64).sqrt() * sigma1)
    }

    /// Distribution of independent events combined: `ln m^` and `sigma^2` add.
    pub fn compose(&self, other: &LognormalSpec) -> LognormalSpec {
        LognormalSpec {
            log_median_measure: self.log_median_measure + other.log_median_measure,
            sigma: self.sigma.hypot(other.sigma),
        }
    }

    pub fn log_median_measure(&self) -> f64 {
        self.log_median_measure
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `ln m~ = ln m^ - sigma^2`.
    pub fn log_median_world(&self) -> f64 {
        self.log_median_measure - self.sigma * self.sigma
    }

    /// `ln` of the total world count, `1 / (m~ e^{sigma^2/2})`, the count for which
    /// the worlds hold unit measure.
    pub fn log_total_worlds(&self) -> f64 {
        -self.log_median_world() - 0.5 * self.sigma * self.sigma
    }

    /// Worlds per unit `ln m`.
    pub fn world_density(&self, log_m: f64) -> LogValue {
        let z = (log_m - self.log_median_world()) / self.sigma;
        LogValue::from_ln(self.log_total_worlds() + log_normal_pdf(z) - self.sigma.ln())
    }

    /// `ln D(m)` with `D` the world density per unit `m`.
    pub fn log_world_density_per_m(&self, log_m: f64) -> f64 {
        self.world_density(log_m).ln() - log_m
    }

    /// Measure per unit `ln m`; integrates to one.
    pub fn measure_density(&self, log_m: f64) -> LogValue {
        let z = (log_m - self.log_median_measure) / self.sigma;
        LogValue::from_ln(log_normal_pdf(z) - self.sigma.ln())
    }

    /// `alpha(m) = ln(m^/m)/sigma^2 - 2`.
    pub fn local_power(&self, log_m: f64) -> f64 {
        (self.log_median_measure - log_m) / (self.sigma * self.sigma) - 2.0
    }

    /// `alpha(m)` through the median world: `ln(m~/m)/sigma^2 - 1`.
    pub fn local_power_from_median_world(&self, log_m: f64) -> f64 {
        (self.log_median_world() - log_m) / (self.sigma * self.sigma) - 1.0
    }

    /// `alpha(m) + 2 = ln(m^/m)/sigma^2`, the departure from the `m^-2` law.
    pub fn deviation(&self, log_m: f64) -> f64 {
        (self.log_median_measure - log_m) / (self.sigma * self.sigma)
    }

    /// `z(m) = ln(m/m^)/sigma`.
    pub fn z_score(&self, log_m: f64) -> f64 {
        (log_m - self.log_median_measure) / self.sigma
    }

    /// `ln m` at z-score `z`.
    pub fn log_m_at_z(&self, z: f64) -> f64 {
        self.log_median_measure + z * self.sigma
    }

    pub fn worlds(&self) -> WorldDensity {
        WorldDensity(*self)
    }

    pub fn measure(&self) -> MeasureDensity {
        MeasureDensity(*self)
    }
}

/// Per-event `(ln m^_1, sigma_1)` of a binary event with weight `p`.
pub fn binary_moments(p: f64) -> (f64, f64) {
    let q = 1.0 - p;
    let mean = p * p.ln() + q * q.ln();
    let sigma = (p * q).sqrt() * (p / q).ln().abs();
    (mean, sigma)
}

#[derive(Debug, Clone, Copy)]
pub struct WorldDensity(pub LognormalSpec);

impl LogDensity for WorldDensity {
    fn density(&self, log_m: f64) -> LogValue {
        self.0.world_density(log_m)
    }
    fn center(&self) -> f64 {
        self.0.log_median_world()
    }
    fn scale(&self) -> f64 {
        self.0.sigma
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MeasureDensity(pub LognormalSpec);

impl LogDensity for MeasureDensity {
    fn density(&self, log_m: f64) -> LogValue {
        self.0.measure_density(log_m)
    }
    fn center(&self) -> f64 {
        self.0.log_median_measure
    }
    fn scale(&self) -> f64 {
        self.0.sigma
    }
}

/// `D(m) = k m^alpha` per unit `m`, i.e. `k m^(alpha+1)` per unit `ln m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawDensity {
    pub log_coefficient: f64,
    pub alpha: f64,
}

impl PowerLawDensity {
    pub fn new(coefficient: f64, alpha: f64) -> Result<PowerLawDensity> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(Error::InvalidParameter(format!("coefficient {coefficient} must be positive")));
        }
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter("alpha must be finite".into()));
        }
        Ok(PowerLawDensity {
            log_coefficient: coefficient.ln(),
            alpha,
        })
    }

    /// Every world replaced by `factor` copies.
    pub fn scale_counts(&self, factor: f64) -> PowerLawDensity {
        PowerLawDensity {
            log_coefficient: self.log_coefficient + factor.ln(),
            alpha: self.alpha,
        }
    }

    /// Every world made `factor` times larger: `D'(m) = D(m/factor)/factor`.
    pub fn scale_values(&self, factor: f64) -> PowerLawDensity {
        PowerLawDensity {
            log_coefficient: self.log_coefficient - (1.0 + self.alpha) * factor.ln(),
            alpha: self.alpha,
        }
    }

    /// Worlds larger than `m = e^log_cutoff`, in closed form; requires `alpha < -1`.
    pub fn count_above(&self, log_cutoff: f64) -> Result<LogValue> {
        let exponent = 1.0 + self.alpha;
        if exponent >= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "count above a cutoff diverges for alpha = {}",
                self.alpha
            )));
        }
        Ok(LogValue::from_ln(
            self.log_coefficient + exponent * log_cutoff - (-exponent).ln(),
        ))
    }
}

impl LogDensity for PowerLawDensity {
    fn density(&self, log_m: f64) -> LogValue {
        LogValue::from_ln(self.log_coefficient + (1.0 + self.alpha) * log_m)
    }
    fn center(&self) -> f64 {
        0.0
    }
    fn scale(&self) -> f64 {
        1.0 / (1.0 + self.alpha).abs().max(1e-3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn from_binary_values() {
        let s = LognormalSpec::from_binary(10_000, 0.75).unwrap();
        assert!((s.sigma() - 47.571307544817).abs() < 1e-9);
        let s = LognormalSpec::from_binary(100, 0.7).unwrap();
        assert!((s.log_median_measure() - (-61.086430205489)).abs() < 1e-9);
        assert!((s.sigma() - 3.882806581398).abs() < 1e-9);
        assert!(matches!(LognormalSpec::from_binary(50, 0.5), Err(Error::Degenerate(_))));
        // p and 1-p give the same spread.
        let a = LognormalSpec::from_binary(100, 0.3).unwrap();
        assert!((a.sigma() - s.sigma()).abs() < 1e-12);
    }

    #[test]
    fn median_world_relation() {
        let s = LognormalSpec::new(-10.0, 3.0).unwrap();
        assert_eq!(s.log_median_world(), -19.0);
        assert!(LognormalSpec::new(0.0, -1.0).is_err());
    }

    #[test]
    fn world_density_at_median_world() {
        let s = LognormalSpec::new(-40.0, 4.0).unwrap();
        let d = s.world_density(s.log_median_world()).ln();
        let want = s.log_total_worlds() - (4.0 * (2.0 * PI).sqrt()).ln();
        assert!((d - want).abs() < 1e-12);
    }

    #[test]
    fn world_density_slopes() {
        let s = LognormalSpec::from_binary(10_000, 0.75).unwrap();
        let h = 1e-3;
        let slope = |x: f64| (s.log_world_density_per_m(x + h) - s.log_world_density_per_m(x - h)) / (2.0 * h);
        assert!((slope(s.log_median_measure()) + 2.0).abs() < 0.01);
        assert!((slope(s.log_median_world()) + 1.0).abs() < 0.01);
    }

    #[test]
    fn measure_density_peak_and_center() {
        let s = LognormalSpec::from_binary(100, 0.7).unwrap();
        let peak = s.measure_density(s.log_median_measure()).to_f64();
        assert!((peak - 1.0 / (s.sigma() * (2.0 * PI).sqrt())).abs() < 1e-14);
        let left = s.measure_density(s.log_median_measure() - 0.1).ln();
        let right = s.measure_density(s.log_median_measure() + 0.1).ln();
        assert!((left - right).abs() < 1e-12);
        assert!((s.log_median_measure() - (s.log_median_world() + s.sigma().powi(2))).abs() < 1e-12);
    }

    #[test]
    fn measure_density_normalized() {
        let s = LognormalSpec::from_binary(100, 0.7).unwrap();
        let (a, b, n) = (s.log_median_measure() - 12.0 * s.sigma(), s.log_median_measure() + 12.0 * s.sigma(), 20_000);
        let h = (b - a) / n as f64;
        let total: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * s.measure_density(a + i as f64 * h).to_f64()
            })
            .sum::<f64>()
            * h;
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn local_power_anchors() {
        let s = LognormalSpec::new(-100.0, 6.0).unwrap();
        assert!((s.local_power(s.log_median_world()) + 1.0).abs() < 1e-12);
        assert!((s.local_power(s.log_median_measure()) + 2.0).abs() < 1e-12);
        assert!((s.local_power(s.log_median_measure() - 18.0) + 1.5).abs() < 1e-12);
        for x in [-300.0, -100.0, 0.0, 7.5] {
            assert!((s.local_power(x) - s.local_power_from_median_world(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn z_score_anchors() {
        let s = LognormalSpec::from_binary(100, 0.7).unwrap();
        assert_eq!(s.z_score(s.log_median_measure()), 0.0);
        assert!((s.z_score(s.log_median_world()) + s.sigma()).abs() < 1e-12);
        assert!((s.z_score(-61.086430205489 + 3.882806581398) - 1.0).abs() < 1e-9);
        for x in [-80.0, -61.0, -40.0] {
            assert!((s.local_power(x) + 2.0 + s.z_score(x) / s.sigma()).abs() < 1e-12);
            assert!((s.deviation(x) - (s.local_power(x) + 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn composing_independent_specs() {
        let a = LognormalSpec::from_binary(300, 0.7).unwrap();
        let b = LognormalSpec::from_binary(700, 0.7).unwrap();
        let c = a.compose(&b);
        let d = LognormalSpec::from_binary(1000, 0.7).unwrap();
        assert!((c.log_median_measure() - d.log_median_measure()).abs() < 1e-9);
        assert!((c.sigma() - d.sigma()).abs() < 1e-9);
    }

    #[test]
    fn power_law_scalings() {
        let d = PowerLawDensity::new(3.0, -2.0).unwrap();
        let c = -5.0;
        let base = d.count_above(c).unwrap().ln();
        assert!((base - (3.0f64.ln() + 5.0)).abs() < 1e-12);
        for lambda in [2.0, 10.0, 100.0] {
            let by_count = d.scale_counts(lambda).count_above(c).unwrap().ln();
            let by_value = d.scale_values(lambda).count_above(c).unwrap().ln();
            assert!((by_count - by_value).abs() < 1e-12);
        }
        // Away from alpha = -2 the two scalings differ.
        let d3 = PowerLawDensity::new(1.0, -3.0).unwrap();
        let a = d3.scale_counts(10.0).count_above(c).unwrap().ln();
        let b = d3.scale_values(10.0).count_above(c).unwrap().ln();
        assert!((a - b).abs() > 1.0);
        assert!(PowerLawDensity::new(1.0, -0.5).unwrap().count_above(0.0).is_err());
    }
}
