//! Exact world ensembles collapsed into frequency classes.
//!
//! A class is keyed by how many times each outcome label has occurred along
//! the path from the unit world. Paths with equal tallies have equal size as
//! long as every label keeps one fraction, so whole ensembles of `2^10000`
//! worlds stay at `O(N)` classes.

use std::io::Write;

use rustc_hash::FxHashMap;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::numerics::{log_binomial, log_sum, LogValue};

/// Fractions must satisfy `sum F_k G_k = 1` to this tolerance.
pub const CONSERVATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub fraction: f64,
    pub multiplicity: u64,
    pub label: String,
}

impl Outcome {
    pub fn new(fraction: f64, multiplicity: u64, label: impl Into<String>) -> Outcome {
        Outcome {
            fraction,
            multiplicity,
            label: label.into(),
        }
    }

    /// `F_k * G_k`, the share of parent measure routed to this outcome.
    pub fn born_weight(&self) -> f64 {
        self.fraction * self.multiplicity as f64
    }
}

/// One decoherence event: each parent world splits into `G_k` children of
/// relative size `F_k` for every outcome `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchEvent {
    outcomes: Vec<Outcome>,
}

impl BranchEvent {
    pub fn new(outcomes: Vec<Outcome>) -> Result<BranchEvent> {
        if outcomes.is_empty() {
            return Err(Error::InvalidParameter("event has no outcomes".into()));
        }
        for (i, o) in outcomes.iter().enumerate() {
            if !(o.fraction > 0.0 && o.fraction <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "outcome {} fraction {} outside (0, 1]",
                    o.label, o.fraction
                )));
            }
            if o.multiplicity == 0 {
                return Err(Error::InvalidParameter(format!(
                    "outcome {} has zero multiplicity",
                    o.label
                )));
            }
            if outcomes[..i].iter().any(|p| p.label == o.label) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate outcome label {}",
                    o.label
                )));
            }
        }
        let total: f64 = outcomes.iter().map(Outcome::born_weight).sum();
        if (total - 1.0).abs() > CONSERVATION_TOL {
            return Err(Error::InvalidParameter(format!(
                "sum of F*G is {total}, expected 1"
            )));
        }
        Ok(BranchEvent { outcomes })
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }
}

/// Two-outcome event with measure `p` for "up" and `1 - p` for "down".
pub fn binary_event(p: f64) -> Result<BranchEvent> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} outside (0, 1)")));
    }
    BranchEvent::new(vec![Outcome::new(p, 1, "up"), Outcome::new(1.0 - p, 1, "down")])
}

pub type Tally = SmallVec<[u32; 4]>;

#[derive(Debug, Clone)]
pub struct WorldClass {
    /// Occurrences of each outcome label, indexed like [`WorldEnsemble::outcome_labels`].
    pub tally: Tally,
    /// Number of worlds in the class.
    pub log_count: LogValue,
    /// Natural log of the measure of each world in the class.
    pub log_size: f64,
}

impl WorldClass {
    /// Total measure held by the class.
    pub fn log_measure(&self) -> LogValue {
        self.log_count.scale_ln(self.log_size)
    }
}

#[derive(Debug, Clone)]
pub struct WorldEnsemble {
    outcome_labels: Vec<String>,
    classes: Vec<WorldClass>,
    event_count: u64,
}

impl WorldEnsemble {
    /// A single world of measure 1.
    pub fn unit() -> WorldEnsemble {
        WorldEnsemble {
            outcome_labels: Vec::new(),
            classes: vec![WorldClass {
                tally: Tally::new(),
                log_count: LogValue::ONE,
                log_size: 0.0,
            }],
            event_count: 0,
        }
    }

    pub fn classes(&self) -> &[WorldClass] {
        &self.classes
    }

    pub fn outcome_labels(&self) -> &[String] {
        &self.outcome_labels
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    /// Text label of a class, e.g. `up=70;down=30`.
    pub fn label(&self, class: &WorldClass) -> String {
        tally_label(&self.outcome_labels, &class.tally)
    }

    /// Occurrence count of `label` in `class`; zero for labels never seen.
    pub fn tally_of(&self, class: &WorldClass, label: &str) -> u32 {
        self.outcome_labels
            .iter()
            .position(|l| l == label)
            .map_or(0, |i| class.tally[i])
    }

    /// Looks up the class with the given per-label tallies. Labels not listed count as zero.
    pub fn find(&self, tallies: &[(&str, u32)]) -> Option<&WorldClass> {
        let mut want: Tally = SmallVec::from_elem(0, self.outcome_labels.len());
        for (label, n) in tallies {
            match self.outcome_labels.iter().position(|l| l == label) {
                Some(i) => want[i] = *n,
                None if *n == 0 => {}
                None => return None,
            }
        }
        self.classes.iter().find(|c| c.tally == want)
    }

    pub fn total_log_count(&self) -> LogValue {
        log_sum(&self.classes.iter().map(|c| c.log_count).collect::<Vec<_>>())
    }

    pub fn total_log_measure(&self) -> LogValue {
        log_sum(&self.classes.iter().map(WorldClass::log_measure).collect::<Vec<_>>())
    }

    /// Splits every world by `event`, merging children that land on the same tally.
    pub fn split(&self, event: &BranchEvent) -> Result<WorldEnsemble> {
        let mut labels = self.outcome_labels.clone();
        let slots: Vec<usize> = event
            .outcomes()
            .iter()
            .map(|o| match labels.iter().position(|l| *l == o.label) {
                Some(i) => i,
                None => {
                    labels.push(o.label.clone());
                    labels.len() - 1
                }
            })
            .collect();
        let width = labels.len();
        let shifts: Vec<(f64, f64)> = event
            .outcomes()
            .iter()
            .map(|o| (o.fraction.ln(), (o.multiplicity as f64).ln()))
            .collect();

        let capacity = self.classes.len() * event.outcomes().len();
        let mut index: FxHashMap<Tally, usize> =
            FxHashMap::with_capacity_and_hasher(capacity, Default::default());
        let mut children: Vec<WorldClass> = Vec::with_capacity(capacity);

        for parent in &self.classes {
            for (&slot, &(ln_f, ln_g)) in slots.iter().zip(&shifts) {
                let mut tally = parent.tally.clone();
                tally.resize(width, 0);
                tally[slot] += 1;
                let log_size = parent.log_size + ln_f;
                let log_count = parent.log_count.scale_ln(ln_g);
                match index.get(&tally) {
                    Some(&i) => {
                        let existing = &mut children[i];
                        let tol = 1e-9 * (1.0 + log_size.abs());
                        if (existing.log_size - log_size).abs() > tol {
                            return Err(Error::InconsistentMerge {
                                label: tally_label(&labels, &tally),
                                a: existing.log_size,
                                b: log_size,
                            });
                        }
                        existing.log_count = existing.log_count + log_count;
                    }
                    None => {
                        index.insert(tally.clone(), children.len());
                        children.push(WorldClass {
                            tally,
                            log_count,
                            log_size,
                        });
                    }
                }
            }
        }

        Ok(WorldEnsemble {
            outcome_labels: labels,
            classes: children,
            event_count: self.event_count + 1,
        })
    }

    /// Class holding the world at which half of all measure sits in larger worlds.
    pub fn median_measure_class(&self) -> &WorldClass {
        self.weighted_median(WorldClass::log_measure)
    }

    /// Class holding the world at which half of all worlds are larger.
    pub fn median_world_class(&self) -> &WorldClass {
        self.weighted_median(|c| c.log_count)
    }

    fn weighted_median(&self, weight: impl Fn(&WorldClass) -> LogValue) -> &WorldClass {
        let mut order: Vec<&WorldClass> = self.classes.iter().collect();
        order.sort_by(|a, b| b.log_size.total_cmp(&a.log_size));
        let weights: Vec<LogValue> = order.iter().map(|c| weight(c)).collect();
        let half = log_sum(&weights).scale_ln(-std::f64::consts::LN_2);
        let mut acc = LogValue::ZERO;
        for (c, w) in order.iter().zip(&weights) {
            acc = acc + *w;
            if acc >= half {
                return c;
            }
        }
        order[order.len() - 1]
    }

    /// CSV with columns `label,log_count,log_size` in natural-log units.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["label", "log_count", "log_size"])?;
        for c in &self.classes {
            w.write_record([
                self.label(c),
                format!("{:.14e}", c.log_count.ln()),
                format!("{:.14e}", c.log_size),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn tally_label(labels: &[String], tally: &[u32]) -> String {
    if labels.is_empty() {
        return "unit".to_string();
    }
    labels
        .iter()
        .zip(tally)
        .map(|(l, n)| format!("{l}={n}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// The `N`-event binary ensemble built directly: class `M` (up-count) holds
/// `C(N, M)` worlds of size `p^M (1-p)^(N-M)`.
pub fn binomial_ensemble(n: u64, p: f64) -> Result<WorldEnsemble> {
    if n == 0 {
        return Err(Error::InvalidParameter("binomial ensemble needs N >= 1".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} outside (0, 1)")));
    }
    let (ln_p, ln_q) = (p.ln(), (1.0 - p).ln());
    let classes = (0..=n)
        .map(|m| WorldClass {
            tally: SmallVec::from_slice(&[m as u32, (n - m) as u32]),
            log_count: log_binomial(n, m as i64),
            log_size: m as f64 * ln_p + (n - m) as f64 * ln_q,
        })
        .collect();
    Ok(WorldEnsemble {
        outcome_labels: vec!["up".to_string(), "down".to_string()],
        classes,
        event_count: n,
    })
}
