use fockconv::coincidence::{
    detector_pairs, effective_success, effective_transmittance_with_error, emulate, run_pulses, spurious_fraction, tag,
    CoincidenceCounts, EmulationConfig, PairClass, PortLosses, SourceModel,
};
use proptest::prelude::*;

fn fock2(t1: f64, t2: f64, feedforward: bool, seed: u64) -> EmulationConfig {
    EmulationConfig {
        source: SourceModel::fock(2).unwrap(),
        t1,
        t2,
        feedforward,
        pulses: 1_000_000,
        seed,
        ..Default::default()
    }
}

fn within(value: f64, expected: f64, se: f64, what: &str) {
    assert!(
        (value - expected).abs() <= 4.0 * se,
        "{what}: {value} vs {expected} (4 SE = {})",
        4.0 * se
    );
}

#[test]
fn fock_source_follows_two_stage_curve() {
    for (i, t1) in [0.2, 0.4, 2.0 / 3.0, 0.8, 0.95].into_iter().enumerate() {
        let r = emulate(&fock2(t1, 0.5, true, i as u64)).unwrap();
        within(r.p_exp, 2.0 * t1 - 1.5 * t1 * t1, r.p_exp_se, &format!("T1={t1}"));
    }
}

#[test]
fn fock_source_at_optimum() {
    let r = emulate(&fock2(2.0 / 3.0, 0.5, true, 99)).unwrap();
    within(r.p_exp, 2.0 / 3.0, r.p_exp_se, "optimum");
    assert_eq!(r.spurious_fraction, 0.0);
}

#[test]
fn static_second_splitter_acts_as_one_tap() {
    // one photon reaches OUT with probability T1 T2, the other is tapped
    for (i, (t1, t2)) in [(0.7, 0.5), (0.9, 0.8), (0.5, 1.0)].into_iter().enumerate() {
        let r = emulate(&fock2(t1, t2, false, 10 + i as u64)).unwrap();
        let tau = t1 * t2;
        within(
            r.p_exp,
            2.0 * tau * (1.0 - tau),
            r.p_exp_se,
            &format!("T1={t1} T2={t2}"),
        );
    }
}

#[test]
fn coherent_source_without_feedforward_tracks_single_tap_bound() {
    for (i, t1) in [0.3, 0.5, 0.7].into_iter().enumerate() {
        let cfg = EmulationConfig {
            t1,
            t2: 1.0,
            feedforward: false,
            pulses: 2_000_000,
            seed: 20 + i as u64,
            ..Default::default()
        };
        let r = emulate(&cfg).unwrap();
        within(
            r.p_exp,
            2.0 * r.t_eff * (1.0 - r.t_eff),
            r.p_exp_se,
            &format!("T1={t1}"),
        );
    }
}

#[test]
fn balanced_losses_leave_effective_transmittance_unbiased() {
    let cfg = EmulationConfig {
        t1: 0.6,
        losses: PortLosses::balanced(0.7).unwrap(),
        detector_efficiency: 0.9,
        pulses: 2_000_000,
        seed: 31,
        ..Default::default()
    };
    let counts = run_pulses(&cfg).unwrap().counts;
    let (t_eff, se) = effective_transmittance_with_error(&counts).unwrap();
    within(t_eff, 0.6, se, "balanced");

    // a lossier AUX1 arm makes the splitter look more transmissive
    let skewed = EmulationConfig {
        losses: PortLosses::new(0.35, 0.7, 0.7).unwrap(),
        ..cfg
    };
    let (t_skewed, _) = effective_transmittance_with_error(&run_pulses(&skewed).unwrap().counts).unwrap();
    let expect = 0.6 / (0.6 + 0.4 * 0.5);
    assert!((t_skewed - expect).abs() < 0.01, "{t_skewed} vs {expect}");
}

#[test]
fn spurious_estimate_tracks_hidden_truth() {
    for (feedforward, tolerance) in [(false, 0.2), (true, 0.2)] {
        let cfg = EmulationConfig {
            source: SourceModel::coherent(0.2).unwrap(),
            feedforward,
            pulses: 1_000_000,
            seed: 41,
            ..Default::default()
        };
        let run = run_pulses(&cfg).unwrap();
        let truth = run.pairs_from_multiphoton_arrivals as f64 / run.counts.total_pairs() as f64;
        let estimate = spurious_fraction(&run.counts);
        assert!(
            (estimate - truth).abs() <= tolerance * truth,
            "ff={feedforward}: estimate {estimate} vs truth {truth}"
        );
    }
}

#[test]
fn weaker_source_means_fewer_spurious_pairs_and_fewer_pairs() {
    let strong = EmulationConfig {
        source: SourceModel::coherent(0.1).unwrap(),
        pulses: 2_000_000,
        seed: 51,
        ..Default::default()
    };
    let weak = EmulationConfig {
        source: SourceModel::coherent(0.05).unwrap(),
        ..strong
    };
    let (a, b) = (run_pulses(&strong).unwrap(), run_pulses(&weak).unwrap());
    assert!(spurious_fraction(&b.counts) < spurious_fraction(&a.counts));
    assert!(b.counts.total_pairs() < a.counts.total_pairs());
}

#[test]
fn emulation_is_independent_of_thread_count() {
    let cfg = EmulationConfig {
        pulses: 200_000,
        seed: 61,
        ..Default::default()
    };
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(|| run_pulses(&cfg).unwrap());
    let three = pool(3).install(|| run_pulses(&cfg).unwrap());
    assert_eq!(one, three);
}

fn synthetic_counts() -> impl Strategy<Value = CoincidenceCounts> {
    (
        prop::collection::vec(0u64..1000, 15),
        prop::collection::vec(0u64..5000, 6),
        0u64..100,
    )
        .prop_map(|(pairs, singles, higher)| {
            let mut c = CoincidenceCounts::new(10_000);
            for ((a, b), n) in detector_pairs().zip(pairs) {
                c.set_pair(a, b, n);
            }
            for (d, n) in fockconv::coincidence::Detector::all().zip(singles) {
                c.set_single(d, n);
            }
            c.higher = higher;
            c
        })
}

proptest! {
    #[test]
    fn weighted_total_counts_same_port_twice(c in synthetic_counts()) {
        let t = tag(&c);
        let same: u64 = detector_pairs()
            .filter(|(a, b)| PairClass::of(*a, *b) == PairClass::SamePort)
            .map(|(a, b)| c.pair(a, b))
            .sum();
        prop_assert_eq!(t.weighted_total(), c.total_pairs() + same);
        if let Ok((p, se)) = effective_success(&c) {
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(se >= 0.0);
            prop_assert!((p - t.weighted_successful() as f64 / t.weighted_total() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn counts_survive_json(c in synthetic_counts()) {
        let back: CoincidenceCounts = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }
}
