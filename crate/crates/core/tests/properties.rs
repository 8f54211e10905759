use nalgebra::{Complex, DMatrix};
use num_bigint::BigUint;
use proptest::prelude::*;

use mangle_core::branching::{binary_event, binomial_ensemble, BranchEvent, Outcome, WorldEnsemble};
use mangle_core::coherence_toy::{evolve, influence_ratios, init_two_worlds, random_hamiltonian, BlockState, CMatrix};
use mangle_core::dynamics::{
    mangling_onset, rate_selection, time_grid, CoherenceModel, Onset, PopulationSpec, RegionMode,
};
use mangle_core::experiment::{
    line_crossing, unmangled_frequency_histogram, CountModel, ExperimentConfig, FrequencyLine,
};
use mangle_core::lognormal::LognormalSpec;
use mangle_core::mangling::{analytic_outcome_shares, outcome_shares, power_law_shares, Shape, TransitionRegion};
use mangle_core::numerics::{log_add, log_binomial, log_sum, LogValue};

fn exact_binomial(n: u64, k: u64) -> BigUint {
    (0..k).fold(BigUint::from(1u32), |acc, i| acc * (n - i) / (i + 1))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn binomial_matches_integers(n in 0u64..=60, k in 0u64..=60) {
        prop_assume!(k <= n);
        let exact: f64 = exact_binomial(n, k).to_string().parse().unwrap();
        prop_assert!(rel(log_binomial(n, k as i64).to_f64(), exact) < 1e-9);
    }

    #[test]
    fn pascal_identity(n in 1u64..=5000, k in 1i64..=5000) {
        prop_assume!(k < n as i64);
        let sum = log_add(log_binomial(n - 1, k - 1), log_binomial(n - 1, k));
        prop_assert!((sum.ln() - log_binomial(n, k).ln()).abs() < 1e-10);
    }

    #[test]
    fn log_sum_over_partitions(
        values in prop::collection::vec(-800.0f64..800.0, 1..40),
        cut in any::<prop::sample::Index>(),
    ) {
        let logs: Vec<LogValue> = values.iter().map(|&v| LogValue::from_ln(v)).collect();
        let split = cut.index(logs.len() + 1);
        let parts = log_add(log_sum(&logs[..split]), log_sum(&logs[split..]));
        let whole = log_sum(&logs);
        prop_assert!(rel(parts.ln(), whole.ln()) < 1e-12 || (parts.ln() - whole.ln()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_commute(p in 0.05f64..0.95, q in 0.05f64..0.6, g in 1u64..4) {
        let a = binary_event(p).unwrap();
        let b = BranchEvent::new(vec![
            Outcome::new(q / g as f64, g, "x"),
            Outcome::new(1.0 - q, 1, "y"),
        ])
        .unwrap();
        let ab = WorldEnsemble::unit().split(&a).unwrap().split(&b).unwrap().split(&a).unwrap();
        let ba = WorldEnsemble::unit().split(&b).unwrap().split(&a).unwrap().split(&a).unwrap();
        prop_assert_eq!(ab.classes().len(), ba.classes().len());
        for class in ab.classes() {
            let labels: Vec<(&str, u32)> = ["up", "down", "x", "y"]
                .iter()
                .map(|&l| (l, ab.tally_of(class, l)))
                .collect();
            let other = ba.find(&labels).expect("same classes");
            prop_assert!((class.log_size - other.log_size).abs() < 1e-10);
            prop_assert!((class.log_count.ln() - other.log_count.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn binomial_is_folded_splits(n in 1u64..200, p in 0.05f64..0.95) {
        prop_assume!((p - 0.5).abs() > 1e-3);
        let event = binary_event(p).unwrap();
        let folded = (0..n).fold(WorldEnsemble::unit(), |e, _| e.split(&event).unwrap());
        let direct = binomial_ensemble(n, p).unwrap();
        prop_assert_eq!(folded.classes().len(), direct.classes().len());
        for class in direct.classes() {
            let up = direct.tally_of(class, "up");
            let other = folded.find(&[("up", up), ("down", n as u32 - up)]).expect("class");
            prop_assert!((class.log_size - other.log_size).abs() < 1e-9);
            prop_assert!((class.log_count.ln() - other.log_count.ln()).abs() < 1e-9);
        }
        prop_assert!((direct.total_log_count().ln() - n as f64 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn shares_sum_to_one(p in 0.55f64..0.95, z in -5.0f64..5.0) {
        let spec = LognormalSpec::new(-3000.0, 50.0).unwrap();
        let region = TransitionRegion::at_z(&spec, z, 0.0, Shape::Step).unwrap();
        let shares = analytic_outcome_shares(&binary_event(p).unwrap(), spec.worlds(), &region).unwrap();
        let total: f64 = shares.iter().map(|s| s.share).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn exact_median_measure_near_lognormal_median() {
    for (n, p) in [(10_000u64, 0.7), (20_000, 0.8), (10_000, 0.35)] {
        let ensemble = binomial_ensemble(n, p).unwrap();
        let spec = LognormalSpec::from_binary(n, p).unwrap();
        let class = ensemble.median_measure_class();
        assert!(
            (class.log_size - spec.log_median_measure()).abs() < spec.sigma() / 10.0,
            "n={n} p={p}: {} vs {}",
            class.log_size,
            spec.log_median_measure()
        );
    }
}

fn up_share(event: &BranchEvent, spec: &LognormalSpec, region: &TransitionRegion) -> f64 {
    analytic_outcome_shares(event, spec.worlds(), region).unwrap()[0].share
}

#[test]
fn raising_cutoff_favors_larger_outcome() {
    let event = binary_event(0.7).unwrap();
    let spec = LognormalSpec::new(-5000.0, 60.0).unwrap();
    let mut last = 0.0;
    for i in 0..=40 {
        let z = -5.0 + 0.25 * i as f64;
        let region = TransitionRegion::at_z(&spec, z, 0.0, Shape::Step).unwrap();
        let share = up_share(&event, &spec, &region);
        assert!(share >= last - 1e-12, "z={z}: {share} < {last}");
        last = share;
    }
}

#[test]
fn exact_background_agrees_with_power_law() {
    let p = 0.75;
    let event = binary_event(p).unwrap();
    let n = 15_000;
    let background = binomial_ensemble(n, p).unwrap();
    let spec = LognormalSpec::from_binary(n, p).unwrap();
    assert!(spec.sigma() >= 40.0);
    for z in [-3.0, -1.0, 0.0, 1.0, 3.0] {
        let region = TransitionRegion::at_z(&spec, z, 0.0, Shape::Step).unwrap();
        let exact = outcome_shares(&event, &background, &region).unwrap()[0].share;
        let oracle = power_law_shares(-2.0 - z / spec.sigma(), &event).unwrap()[0].share;
        assert!((exact - oracle).abs() < 0.02, "z={z}: {exact} vs {oracle}");
    }
}

#[test]
fn deviation_scales_with_z_over_sigma() {
    let p = 0.7;
    let event = binary_event(p).unwrap();
    let slope = p * (1.0 - p) * (p / (1.0 - p)).ln();
    for sigma in [40.0, 80.0, 160.0] {
        let spec = LognormalSpec::new(-20_000.0, sigma).unwrap();
        for i in 0..=20 {
            let z = -5.0 + 0.5 * i as f64;
            if z == 0.0 {
                continue;
            }
            let region = TransitionRegion::at_z(&spec, z, 0.0, Shape::Step).unwrap();
            let dev = (up_share(&event, &spec, &region) - p).abs();
            let ratio = dev / (slope * z.abs() / sigma);
            assert!((0.5..=2.0).contains(&ratio), "sigma={sigma} z={z}: ratio {ratio}");
        }
    }
}

fn gaussian_figure1() -> ExperimentConfig {
    ExperimentConfig {
        count_model: CountModel::Gaussian,
        ..ExperimentConfig::figure1()
    }
}

fn line(config: &ExperimentConfig, f: f64) -> FrequencyLine {
    FrequencyLine::new(config, config.counted_up(f).unwrap()).unwrap()
}

#[test]
fn born_line_dominates_between_crossings() {
    for config in [ExperimentConfig::figure1(), gaussian_figure1()] {
        let lines: Vec<FrequencyLine> = [0.6, 0.65, 0.7, 0.75, 0.8].iter().map(|&f| line(&config, f)).collect();
        let hi = line_crossing(&lines[2], &lines[3]).unwrap().floor();
        let lo = line_crossing(&lines[2], &lines[1]).unwrap().ceil();
        assert!(lo < hi);
        let mut s = lo;
        while s <= hi {
            let c: Vec<f64> = lines.iter().map(|l| l.log_count_at(s).ln()).collect();
            assert!(c[2] > c[1] && c[2] > c[3], "{:?} at {s}", config.count_model);
            assert!(c[1] > c[0] && c[3] > c[4], "{:?} at {s}", config.count_model);
            s += 1.0;
        }
    }
}

#[test]
fn crossings_are_symmetric() {
    let config = ExperimentConfig::figure1();
    let freqs = [0.6, 0.65, 0.7, 0.75, 0.8];
    for &a in &freqs {
        for &b in &freqs {
            if a == b {
                continue;
            }
            let (la, lb) = (line(&config, a), line(&config, b));
            match (line_crossing(&la, &lb), line_crossing(&lb, &la)) {
                (Ok(x), Ok(y)) => assert!((x - y).abs() < 1e-6, "{a} {b}: {x} vs {y}"),
                (x, y) => assert_eq!(x.is_ok(), y.is_ok()),
            }
        }
    }
}

#[test]
fn histogram_mode_climbs_with_cutoff() {
    let config = ExperimentConfig {
        n_background: 2_000,
        ..ExperimentConfig::figure1()
    };
    let mut last = 0.0;
    let mut cutoff = -2000.0;
    while cutoff <= -60.0 {
        match unmangled_frequency_histogram(&config, cutoff) {
            Ok(h) => {
                let total: f64 = h.rows.iter().map(|r| r.share).sum();
                assert!((total - 1.0).abs() < 1e-9);
                let modal = h.modal_f();
                assert!(modal >= last, "cutoff {cutoff}: modal {modal} < {last}");
                last = modal;
            }
            Err(_) => break,
        }
        cutoff += 20.0;
    }
    assert!(last > 0.9, "{last}");
}

#[test]
fn dynamics_sigma_matches_binomial() {
    for p in [0.6, 0.7, 0.9] {
        for rate in [0.5, 1.0, 3.0] {
            let pop = PopulationSpec::from_binary(rate, p).unwrap();
            for n in [10u64, 100, 10_000] {
                let t = n as f64 / rate;
                let binomial = LognormalSpec::from_binary(n, p).unwrap();
                assert!((pop.sigma_trajectory(t) - binomial.sigma()).abs() < 1e-9);
                assert!((pop.log_median_measure(t) - binomial.log_median_measure()).abs() < 1e-9 * n as f64);
            }
        }
    }
}

#[test]
fn median_world_identity() {
    let pop = PopulationSpec::from_binary(2.0, 0.7).unwrap();
    for t in time_grid(1e-3, 1e5, 200).unwrap() {
        let expected = pop.log_median_measure(t) - pop.sigma_trajectory(t).powi(2);
        assert!((pop.median_trajectory(t) - expected).abs() < 1e-9 * (1.0 + expected.abs()), "t={t}");
    }
}

#[test]
fn onset_no_later_for_deeper_worlds() {
    let pop = PopulationSpec::from_binary(1.0, 0.7).unwrap();
    let models = [
        CoherenceModel::floor(0.5, 1.0, 1e-20).unwrap(),
        CoherenceModel::floor(0.5, 0.1, 1e-8).unwrap(),
        CoherenceModel::power_tail(0.5, 1.0, 10.0, 1.5).unwrap(),
    ];
    for model in &models {
        let mut last = f64::INFINITY;
        for z in [-0.5, -1.0, -2.0, -4.0] {
            let t = match mangling_onset(&pop, model, z, 1e8).unwrap() {
                Onset::At(t) => t,
                Onset::Never => f64::INFINITY,
            };
            assert!(t <= last * (1.0 + 1e-9), "{model:?} z={z}: {t} > {last}");
            last = t;
        }
    }
}

#[test]
fn slow_share_grows_once_populations_diverge() {
    for (r_slow, r_fast, p) in [(1.0, 2.0, 0.7), (1.0, 1.5, 0.8), (0.5, 3.0, 0.6)] {
        let slow = PopulationSpec::from_binary(r_slow, p).unwrap();
        let fast = PopulationSpec::from_binary(r_fast, p).unwrap();
        let mode = RegionMode::TrackCombined { width: 0.0, shape: Shape::Step };
        let grid: Vec<f64> = (0..=2000).map(|i| i as f64 * 5.0).collect();
        let points = rate_selection(&slow, &fast, mode, &grid).unwrap();
        let start = points.iter().position(|pt| (pt.share_slow - 0.5).abs() > 0.01).expect("divergence");
        for w in points[start..].windows(2) {
            assert!(w[1].share_slow >= w[0].share_slow - 1e-9, "t={}: {} -> {}", w[1].t, w[0].share_slow, w[1].share_slow);
        }
    }
}

fn exact_evolution(rho: &CMatrix, h: &CMatrix, t: f64) -> CMatrix {
    let eig = h.clone().symmetric_eigen();
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| Complex::from_polar(1.0, -e * t)));
    let u = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
    &u * rho * u.adjoint()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn block_evolution_matches_full_matrix(
        dl in 1usize..=6,
        ds in 1usize..=6,
        delta in 1e-3f64..0.5,
        epsilon in 0.0f64..0.9,
        seed in any::<u64>(),
    ) {
        let state = init_two_worlds(dl, ds, delta, epsilon, seed).unwrap();
        let h = random_hamiltonian(dl, ds, seed).unwrap();
        let dt = 0.01 / h.spectral_norm();
        let evolved = evolve(&state, &h, dt, 1000).unwrap();
        let full = exact_evolution(&state.compose(), &h.compose(), dt * 1000.0);
        let oracle = BlockState::from_full(&full, dl).unwrap();
        prop_assert!(evolved.max_entry_diff(&oracle) < 1e-8);

        let rho = evolved.compose();
        let asym = (&rho - rho.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        prop_assert!(asym < 1e-12);
        prop_assert!((evolved.trace_ll() + evolved.trace_ss() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn small_world_ratio_tracks_epsilon_over_delta() {
    for delta in [1e-4, 1e-3, 1e-2] {
        for epsilon in [1e-3, 1e-2, 1e-1] {
            if delta >= epsilon {
                continue;
            }
            let mean = (0..10u64)
                .map(|seed| {
                    let s = init_two_worlds(4, 4, delta, epsilon, seed).unwrap();
                    let h = random_hamiltonian(4, 4, seed).unwrap();
                    influence_ratios(&s, &h).unwrap().1
                })
                .sum::<f64>()
                / 10.0;
            let scaled = mean / (epsilon / delta);
            assert!((1.0 / 3.0..=3.0).contains(&scaled), "delta={delta} eps={epsilon}: {scaled}");
        }
    }
}
