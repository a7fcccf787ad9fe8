//! Seeded trajectory sampling of subtraction policies.
//!
//! Each trial draws its own random numbers from a ChaCha8 substream selected
//! by `(seed, trial index)`, so a run gives identical counts whether it is
//! executed serially or spread over any number of threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::fock::{DetectorKind, DetectorModel, PhotonNumberMixture, WeightedMixture, MAX_PHOTONS};
use crate::planner::{NodeStatus, Policy, PolicyNode};

/// Source of per-trial random streams.
#[derive(Clone, Debug)]
pub struct Substreams {
    key: <ChaCha8Rng as SeedableRng>::Seed,
}

impl Substreams {
    pub fn new(seed: u64) -> Self {
        Self {
            key: ChaCha8Rng::seed_from_u64(seed).get_seed(),
        }
    }

    /// Independent generator for trial `index`.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}

/// Deterministically derives a child seed, e.g. for partitioned runs.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Binomial draw by inversion of the exact CDF; `n` is at most [`MAX_PHOTONS`].
pub fn sample_binomial<R: Rng + ?Sized>(rng: &mut R, n: usize, p: f64) -> usize {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let q = 1.0 - p;
    let ratio = p / q;
    let u: f64 = rng.random();
    let mut pmf = q.powi(n as i32);
    let mut cdf = pmf;
    for k in 0..n {
        if u < cdf {
            return k;
        }
        pmf *= (n - k) as f64 / (k + 1) as f64 * ratio;
        cdf += pmf;
    }
    n
}

/// Reported count when `photons` photons reach `det`.
pub fn sample_detection<R: Rng + ?Sized>(rng: &mut R, det: &DetectorModel, photons: usize) -> usize {
    match det.kind() {
        DetectorKind::IdealPnr => photons,
        DetectorKind::InefficientPnr => sample_binomial(rng, photons, det.efficiency()),
        DetectorKind::ClickPair => match sample_binomial(rng, photons, det.efficiency()) {
            0 => 0,
            1 => 1,
            n => {
                let same_diode = 0.5f64.powi(n as i32 - 1);
                if rng.random::<f64>() < same_diode {
                    1
                } else {
                    2
                }
            }
        },
    }
}

/// One simulated run of a policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    /// Count reported at each stage that was reached.
    pub outcomes: Vec<usize>,
    pub success: bool,
    /// Photons left in the signal beam at the end.
    pub output_photons: usize,
    /// Transmittance applied at each stage that was reached.
    pub transmittances: Vec<f64>,
}

/// Samples one run of `policy` on `|m⟩`, with loss `eta_o` in front of every
/// stage after the first. The run stops early once it can no longer succeed.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    policy: &Policy,
    m: usize,
    det: &DetectorModel,
    eta_o: f64,
    rng: &mut R,
) -> TrajectoryRecord {
    debug_assert!((0.0..=1.0).contains(&eta_o));
    let goal = m.saturating_sub(policy.n);
    let mut photons = m;
    let mut detected = 0;
    let mut node: Option<&PolicyNode> = Some(&policy.root);
    let mut outcomes = Vec::with_capacity(policy.k);
    let mut transmittances = Vec::with_capacity(policy.k);
    let mut aborted = m < policy.n;

    for stage in 0..policy.k {
        if aborted || detected > goal || node.is_some_and(|n| n.status == NodeStatus::Failed) {
            aborted = true;
            break;
        }
        if stage > 0 {
            photons = sample_binomial(rng, photons, eta_o);
        }
        let t = node.map_or(1.0, PolicyNode::effective_transmittance);
        let reflected = sample_binomial(rng, photons, 1.0 - t);
        photons -= reflected;
        let label = sample_detection(rng, det, reflected);
        detected += label;
        outcomes.push(label);
        transmittances.push(t);
        node = node
            .filter(|n| n.status == NodeStatus::Active)
            .and_then(|n| n.children.get(&label));
    }
    TrajectoryRecord {
        outcomes,
        success: !aborted && detected == goal,
        output_photons: photons,
        transmittances,
    }
}

/// Binomial proportion with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub trials: u64,
    pub successes: u64,
    pub seed: u64,
}

impl Estimate {
    pub fn from_counts(successes: u64, trials: u64, seed: u64) -> Self {
        let value = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        let std_error = if trials == 0 {
            0.0
        } else {
            (value * (1.0 - value) / trials as f64).sqrt()
        };
        Self {
            value,
            std_error,
            trials,
            successes,
            seed,
        }
    }

    /// Combines two independent runs; the pooled estimate keeps `self.seed`.
    pub fn pool(&self, other: &Estimate) -> Estimate {
        Self::from_counts(self.successes + other.successes, self.trials + other.trials, self.seed)
    }

    /// Distance to `expected` in units of the standard error.
    pub fn z_score(&self, expected: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.value == expected {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - expected) / self.std_error
        }
    }
}

/// Success estimate plus the empirical output distribution of successful runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuccessEstimate {
    #[serde(flatten)]
    pub estimate: Estimate,
    pub output: Option<PhotonNumberMixture>,
    /// Successful runs by output photon number.
    pub output_counts: Vec<u64>,
}

#[derive(Clone, Debug)]
struct Tally {
    successes: u64,
    output_counts: Vec<u64>,
}

impl Tally {
    fn new(m: usize) -> Self {
        Self {
            successes: 0,
            output_counts: vec![0; m + 1],
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.successes += other.successes;
        for (a, b) in self.output_counts.iter_mut().zip(other.output_counts) {
            *a += b;
        }
        self
    }
}

fn check_run(policy: &Policy, m: usize, eta_o: f64, n_trials: u64) -> Result<()> {
    check_unit("eta_O", eta_o)?;
    if n_trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    if m < policy.n || m > MAX_PHOTONS {
        return Err(Error::Domain(format!("cannot convert {m} photons to {}", policy.n)));
    }
    Ok(())
}

/// Runs `n_trials` seeded trajectories in parallel and estimates the success
/// probability. The result depends only on the arguments, not on the
/// number of threads.
pub fn estimate_success(
    policy: &Policy,
    m: usize,
    det: &DetectorModel,
    eta_o: f64,
    n_trials: u64,
    seed: u64,
) -> Result<SuccessEstimate> {
    check_run(policy, m, eta_o, n_trials)?;
    let streams = Substreams::new(seed);
    let tally = (0..n_trials)
        .into_par_iter()
        .fold(
            || Tally::new(m),
            |mut t, i| {
                let mut rng = streams.stream(i);
                let r = simulate_trajectory(policy, m, det, eta_o, &mut rng);
                if r.success {
                    t.successes += 1;
                    t.output_counts[r.output_photons] += 1;
                }
                t
            },
        )
        .reduce(|| Tally::new(m), Tally::merge);

    let mut output = WeightedMixture::new(m);
    for (n, c) in tally.output_counts.iter().enumerate() {
        if *c > 0 {
            output.add(n, *c as f64);
        }
    }
    Ok(SuccessEstimate {
        estimate: Estimate::from_counts(tally.successes, n_trials, seed),
        output: output.normalize(),
        output_counts: tally.output_counts,
    })
}

/// The first `n_trials` trajectories of the seeded run, in trial order.
pub fn trajectories<'a>(
    policy: &'a Policy,
    m: usize,
    det: &'a DetectorModel,
    eta_o: f64,
    n_trials: u64,
    seed: u64,
) -> impl Iterator<Item = TrajectoryRecord> + 'a {
    let streams = Substreams::new(seed);
    (0..n_trials).map(move |i| simulate_trajectory(policy, m, det, eta_o, &mut streams.stream(i)))
}

/// Writes trajectories as JSON lines, one record per line.
pub fn write_trajectories<W: Write>(
    mut w: W,
    policy: &Policy,
    m: usize,
    det: &DetectorModel,
    eta_o: f64,
    n_trials: u64,
    seed: u64,
) -> Result<()> {
    check_run(policy, m, eta_o, n_trials)?;
    for record in trajectories(policy, m, det, eta_o, n_trials, seed) {
        serde_json::to_writer(&mut w, &record)?;
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{build_policy, evaluate_policy};

    #[test]
    fn transparent_policy_never_subtracts() {
        let p = Policy::fixed(2, 1, &[1.0, 1.0]).unwrap();
        for r in trajectories(&p, 2, &DetectorModel::ideal(), 1.0, 1000, 3) {
            assert_eq!(r.outcomes, vec![0, 0]);
            assert_eq!(r.output_photons, 2);
            assert!(!r.success);
        }
    }

    #[test]
    fn binomial_sampler_moments() {
        let s = Substreams::new(11);
        let mut rng = s.stream(0);
        let (n, p, draws) = (10, 0.3, 200_000);
        let mut hist = vec![0u64; n + 1];
        for _ in 0..draws {
            hist[sample_binomial(&mut rng, n, p)] += 1;
        }
        let mean = hist.iter().enumerate().map(|(k, c)| k as f64 * *c as f64).sum::<f64>() / draws as f64;
        // standard error of the mean is sqrt(2.1 / 2e5) ≈ 0.0032
        assert!((mean - 3.0).abs() < 0.02, "mean {mean}");
        assert_eq!(sample_binomial(&mut rng, 5, 0.0), 0);
        assert_eq!(sample_binomial(&mut rng, 5, 1.0), 5);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let p = build_policy(3, 1, 2).unwrap();
        let det = DetectorModel::inefficient_pnr(0.7).unwrap();
        let a = estimate_success(&p, 3, &det, 0.9, 20_000, 42).unwrap();
        let b = estimate_success(&p, 3, &det, 0.9, 20_000, 42).unwrap();
        assert_eq!(a, b);
        let c = estimate_success(&p, 3, &det, 0.9, 20_000, 43).unwrap();
        assert_ne!(a.estimate.successes, c.estimate.successes);

        let first: Vec<_> = trajectories(&p, 3, &det, 0.9, 50, 42).collect();
        let again: Vec<_> = trajectories(&p, 3, &det, 0.9, 50, 42).collect();
        assert_eq!(first, again);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let p = build_policy(2, 1, 2).unwrap();
        let det = DetectorModel::click_pair(0.8).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_success(&p, 2, &det, 0.95, 30_000, 5).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn zero_trials_rejected() {
        let p = build_policy(2, 1, 1).unwrap();
        assert!(matches!(
            estimate_success(&p, 2, &DetectorModel::ideal(), 1.0, 0, 1),
            Err(Error::Domain(_))
        ));
        assert!(estimate_success(&p, 2, &DetectorModel::ideal(), 1.2, 10, 1).is_err());
    }

    #[test]
    fn trajectory_length_bounded_by_depth() {
        let p = build_policy(4, 1, 3).unwrap();
        for r in trajectories(&p, 4, &DetectorModel::ideal(), 1.0, 2000, 9) {
            assert!(r.outcomes.len() <= 3);
            if r.success {
                assert_eq!(r.outcomes.iter().sum::<usize>(), 3);
                assert_eq!(r.output_photons, 1);
            }
        }
    }

    #[test]
    fn agrees_with_enumeration_on_small_run() {
        let p = build_policy(3, 1, 2).unwrap();
        let det = DetectorModel::ideal();
        let exact = evaluate_policy(&p, 3, &det).unwrap().success_probability;
        let e = estimate_success(&p, 3, &det, 1.0, 100_000, 7).unwrap().estimate;
        assert!(e.z_score(exact).abs() < 4.0, "{e:?} vs {exact}");
    }

    #[test]
    fn json_lines_dump() {
        let p = build_policy(2, 1, 2).unwrap();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &p, 2, &DetectorModel::ideal(), 1.0, 5, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        for line in text.lines() {
            let r: TrajectoryRecord = serde_json::from_str(line).unwrap();
            assert_eq!(r.outcomes.len(), r.transmittances.len());
        }
    }

    #[test]
    fn pooling_adds_counts() {
        let a = Estimate::from_counts(30, 100, 1);
        let b = Estimate::from_counts(70, 100, 2);
        let c = a.pool(&b);
        assert_eq!((c.successes, c.trials, c.value), (100, 200, 0.5));
        assert_eq!(c.std_error, (0.25f64 / 200.0).sqrt());
    }
}
