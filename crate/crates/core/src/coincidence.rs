//! Emulation of the post-selected two-photon coincidence experiment.
//!
//! Light from the source meets `BS1`, whose reflected arm is the `AUX1`
//! port. The transmitted arm crosses the switchable `BS2`, which reflects into
//! `AUX2` and transmits into `OUT`. Each port ends in a balanced splitter
//! feeding two click detectors `D{port}A` and `D{port}B`, so six detectors in
//! all. With feedforward enabled a click on either `AUX1` detector switches
//! `BS2` to full transmission for the same pulse.
//!
//! Port indices: `0 = AUX2`, `1 = AUX1`, `2 = OUT`.
//!
//! Only pulses with exactly two clicks are analysed. A pair with one click on
//! `OUT` and one on an auxiliary port heralds a successful `|2⟩ → |1⟩`
//! conversion. Two photons in the same port only fire both of its detectors
//! half of the time, so same-port pairs are counted twice.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::fock::{binomial_pmf, MAX_PHOTONS};
use crate::montecarlo::{derive_seed, sample_binomial, Substreams};
use crate::output::format_sig;

pub const DETECTORS: usize = 6;
pub const PAIRS: usize = DETECTORS * (DETECTORS - 1) / 2;

/// Mean photon number of the default attenuated coherent source.
pub const DEFAULT_MEAN_PHOTONS: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Port {
    Aux2 = 0,
    Aux1 = 1,
    Out = 2,
}

impl Port {
    pub const ALL: [Port; 3] = [Port::Aux2, Port::Aux1, Port::Out];

    pub fn is_auxiliary(self) -> bool {
        self != Port::Out
    }
}

/// One of the six click detectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Detector(u8);

impl Detector {
    pub fn new(port: Port, arm_b: bool) -> Self {
        Self(2 * port as u8 + arm_b as u8)
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < DETECTORS, "detector index {i} out of range");
        Self(i as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn port(self) -> Port {
        Port::ALL[self.index() / 2]
    }

    pub fn all() -> impl Iterator<Item = Detector> {
        (0..DETECTORS).map(Self::from_index)
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let arm = if self.0 % 2 == 0 { 'A' } else { 'B' };
        write!(f, "D{}{}", self.0 / 2, arm)
    }
}

impl std::str::FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Detector::all()
            .find(|d| d.to_string() == s)
            .ok_or_else(|| Error::Domain(format!("unknown detector '{s}'")))
    }
}

/// Position of the unordered pair `(a, b)`, `a != b`, in `0..PAIRS`.
fn pair_index(a: Detector, b: Detector) -> usize {
    let (i, j) = if a.0 < b.0 {
        (a.index(), b.index())
    } else {
        (b.index(), a.index())
    };
    debug_assert!(i != j);
    // rows of the strict upper triangle, row i has DETECTORS - 1 - i entries
    i * (2 * DETECTORS - i - 1) / 2 + (j - i - 1)
}

/// The 15 unordered detector pairs in index order.
pub fn detector_pairs() -> impl Iterator<Item = (Detector, Detector)> {
    (0..DETECTORS).flat_map(|i| (i + 1..DETECTORS).map(move |j| (Detector::from_index(i), Detector::from_index(j))))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceModel {
    /// Exactly `photons` photons per pulse.
    Fock { photons: usize },
    /// Poissonian photon number with the given mean.
    Coherent { mean_photons: f64 },
}

impl SourceModel {
    pub fn fock(photons: usize) -> Result<Self> {
        if photons > MAX_PHOTONS {
            return Err(Error::Domain(format!("{photons} photons exceed {MAX_PHOTONS}")));
        }
        Ok(Self::Fock { photons })
    }

    pub fn coherent(mean_photons: f64) -> Result<Self> {
        if !(mean_photons > 0.0 && mean_photons.is_finite()) {
            return Err(Error::Domain(format!(
                "mean photon number must be positive, got {mean_photons}"
            )));
        }
        Ok(Self::Coherent { mean_photons })
    }
}

/// Transmittance of each port between its splitter and its detector pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortLosses {
    pub aux1: f64,
    pub aux2: f64,
    pub out: f64,
}

impl PortLosses {
    pub fn new(aux1: f64, aux2: f64, out: f64) -> Result<Self> {
        for (name, x) in [("AUX1", aux1), ("AUX2", aux2), ("OUT", out)] {
            if !(x > 0.0 && x <= 1.0) {
                return Err(Error::Domain(format!("{name} transmittance {x} is outside (0, 1]")));
            }
        }
        Ok(Self { aux1, aux2, out })
    }

    pub fn balanced(transmittance: f64) -> Result<Self> {
        Self::new(transmittance, transmittance, transmittance)
    }

    pub fn lossless() -> Self {
        Self {
            aux1: 1.0,
            aux2: 1.0,
            out: 1.0,
        }
    }

    pub fn of(&self, port: Port) -> f64 {
        match port {
            Port::Aux1 => self.aux1,
            Port::Aux2 => self.aux2,
            Port::Out => self.out,
        }
    }
}

/// Singles and coincidence tallies of an emulation run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CountsRepr", into = "CountsRepr")]
pub struct CoincidenceCounts {
    pub pulses: u64,
    singles: [u64; DETECTORS],
    pairs: [u64; PAIRS],
    /// Pulses with three or more clicks.
    pub higher: u64,
}

impl Default for CoincidenceCounts {
    fn default() -> Self {
        Self::new(0)
    }
}

impl CoincidenceCounts {
    pub fn new(pulses: u64) -> Self {
        Self {
            pulses,
            singles: [0; DETECTORS],
            pairs: [0; PAIRS],
            higher: 0,
        }
    }

    pub fn single(&self, d: Detector) -> u64 {
        self.singles[d.index()]
    }

    pub fn pair(&self, a: Detector, b: Detector) -> u64 {
        self.pairs[pair_index(a, b)]
    }

    pub fn set_single(&mut self, d: Detector, count: u64) {
        self.singles[d.index()] = count;
    }

    pub fn set_pair(&mut self, a: Detector, b: Detector, count: u64) {
        self.pairs[pair_index(a, b)] = count;
    }

    pub fn total_pairs(&self) -> u64 {
        self.pairs.iter().sum()
    }

    /// Records the detectors that clicked on one pulse (bit `i` = detector `i`).
    pub fn record(&mut self, clicks: u8) {
        let fired: Vec<Detector> = Detector::all().filter(|d| clicks & (1 << d.0) != 0).collect();
        for d in &fired {
            self.singles[d.index()] += 1;
        }
        match fired.len() {
            2 => self.pairs[pair_index(fired[0], fired[1])] += 1,
            n if n >= 3 => self.higher += 1,
            _ => {}
        }
    }

    pub fn merge(mut self, other: &CoincidenceCounts) -> Self {
        self.pulses += other.pulses;
        for (a, b) in self.singles.iter_mut().zip(other.singles) {
            *a += b;
        }
        for (a, b) in self.pairs.iter_mut().zip(other.pairs) {
            *a += b;
        }
        self.higher += other.higher;
        self
    }
}

#[derive(Serialize, Deserialize)]
struct CountsRepr {
    #[serde(default)]
    pulses: u64,
    singles: BTreeMap<String, u64>,
    pairs: BTreeMap<String, u64>,
    higher: u64,
}

impl From<CoincidenceCounts> for CountsRepr {
    fn from(c: CoincidenceCounts) -> Self {
        Self {
            pulses: c.pulses,
            singles: Detector::all().map(|d| (d.to_string(), c.single(d))).collect(),
            pairs: detector_pairs()
                .map(|(a, b)| (format!("{a}-{b}"), c.pair(a, b)))
                .collect(),
            higher: c.higher,
        }
    }
}

impl TryFrom<CountsRepr> for CoincidenceCounts {
    type Error = Error;

    fn try_from(r: CountsRepr) -> Result<Self> {
        let mut c = CoincidenceCounts::new(r.pulses);
        c.higher = r.higher;
        for (name, n) in r.singles {
            c.set_single(name.parse()?, n);
        }
        for (name, n) in r.pairs {
            let (a, b) = name
                .split_once('-')
                .ok_or_else(|| Error::Domain(format!("bad pair label '{name}'")))?;
            let (a, b): (Detector, Detector) = (a.parse()?, b.parse()?);
            if a == b {
                return Err(Error::Domain(format!("pair '{name}' repeats a detector")));
            }
            c.set_pair(a, b, n);
        }
        Ok(c)
    }
}

/// Everything needed to emulate a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmulationConfig {
    pub source: SourceModel,
    pub t1: f64,
    /// `BS2` transmittance when no `AUX1` click switched it (always, without
    /// feedforward).
    pub t2: f64,
    pub feedforward: bool,
    pub losses: PortLosses,
    pub detector_efficiency: f64,
    pub pulses: u64,
    pub seed: u64,
}

impl Default for EmulationConfig {
    fn default() -> Self {
        Self {
            source: SourceModel::Coherent {
                mean_photons: DEFAULT_MEAN_PHOTONS,
            },
            t1: 2.0 / 3.0,
            t2: 0.5,
            feedforward: true,
            losses: PortLosses::lossless(),
            detector_efficiency: 1.0,
            pulses: 1_000_000,
            seed: 0,
        }
    }
}

impl EmulationConfig {
    pub fn validate(&self) -> Result<()> {
        check_unit("T1", self.t1)?;
        check_unit("T2", self.t2)?;
        check_unit("detector efficiency", self.detector_efficiency)?;
        PortLosses::new(self.losses.aux1, self.losses.aux2, self.losses.out)?;
        match self.source {
            SourceModel::Fock { photons } => {
                SourceModel::fock(photons)?;
            }
            SourceModel::Coherent { mean_photons } => {
                SourceModel::coherent(mean_photons)?;
            }
        }
        if self.pulses == 0 {
            return Err(Error::Domain("need at least one pulse".into()));
        }
        Ok(())
    }
}

/// Counts plus ground truth the real experiment cannot see.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmulationRun {
    pub counts: CoincidenceCounts,
    /// Two-click pulses that carried three or more photons at the source.
    pub pairs_from_multiphoton_source: u64,
    /// Two-click pulses where three or more photons reached the detectors.
    pub pairs_from_multiphoton_arrivals: u64,
}

#[derive(Clone, Copy, Debug, Default)]
struct PulseOutcome {
    clicks: u8,
    emitted: usize,
    arrived: usize,
}

/// Splits `photons` arriving at `port` onto its two detectors.
fn port_clicks<R: Rng + ?Sized>(rng: &mut R, port: Port, photons: usize) -> u8 {
    let on_a = sample_binomial(rng, photons, 0.5);
    let a = Detector::new(port, false);
    let b = Detector::new(port, true);
    let mut mask = 0;
    if on_a > 0 {
        mask |= 1 << a.0;
    }
    if photons > on_a {
        mask |= 1 << b.0;
    }
    mask
}

fn emulate_pulse<R: Rng + ?Sized>(rng: &mut R, cfg: &EmulationConfig, poisson: Option<&Poisson<f64>>) -> PulseOutcome {
    let emitted = match (cfg.source, poisson) {
        (SourceModel::Fock { photons }, _) => photons,
        (SourceModel::Coherent { .. }, Some(p)) => (p.sample(rng) as usize).min(MAX_PHOTONS),
        (SourceModel::Coherent { .. }, None) => unreachable!("coherent source without sampler"),
    };
    if emitted == 0 {
        return PulseOutcome::default();
    }
    let eta = cfg.detector_efficiency;
    let reflected = sample_binomial(rng, emitted, 1.0 - cfg.t1);
    let at_aux1 = sample_binomial(rng, reflected, cfg.losses.aux1 * eta);
    let aux1 = port_clicks(rng, Port::Aux1, at_aux1);

    let t2 = if cfg.feedforward && aux1 != 0 { 1.0 } else { cfg.t2 };
    let passing = emitted - reflected;
    let tapped = sample_binomial(rng, passing, 1.0 - t2);
    let at_aux2 = sample_binomial(rng, tapped, cfg.losses.aux2 * eta);
    let at_out = sample_binomial(rng, passing - tapped, cfg.losses.out * eta);
    PulseOutcome {
        clicks: aux1 | port_clicks(rng, Port::Aux2, at_aux2) | port_clicks(rng, Port::Out, at_out),
        emitted,
        arrived: at_aux1 + at_aux2 + at_out,
    }
}

#[derive(Clone, Debug, Default)]
struct RunTally {
    counts: CoincidenceCounts,
    source: u64,
    arrivals: u64,
}

/// Emulates `cfg.pulses` pulses, each with its own random substream.
pub fn run_pulses(cfg: &EmulationConfig) -> Result<EmulationRun> {
    cfg.validate()?;
    let poisson = match cfg.source {
        SourceModel::Coherent { mean_photons } => {
            Some(Poisson::new(mean_photons).map_err(|e| Error::Domain(format!("Poisson source: {e}")))?)
        }
        SourceModel::Fock { .. } => None,
    };
    let streams = Substreams::new(cfg.seed);
    let tally = (0..cfg.pulses)
        .into_par_iter()
        .fold(RunTally::default, |mut t, i| {
            let mut rng = streams.stream(i);
            let pulse = emulate_pulse(&mut rng, cfg, poisson.as_ref());
            if pulse.clicks != 0 {
                t.counts.record(pulse.clicks);
                if pulse.clicks.count_ones() == 2 {
                    t.source += (pulse.emitted >= 3) as u64;
                    t.arrivals += (pulse.arrived >= 3) as u64;
                }
            }
            t
        })
        .reduce(RunTally::default, |a, b| RunTally {
            counts: a.counts.merge(&b.counts),
            source: a.source + b.source,
            arrivals: a.arrivals + b.arrivals,
        });
    let mut counts = tally.counts;
    counts.pulses = cfg.pulses;
    Ok(EmulationRun {
        counts,
        pairs_from_multiphoton_source: tally.source,
        pairs_from_multiphoton_arrivals: tally.arrivals,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    /// One click on `OUT`, the other on `AUX1` or `AUX2`.
    Successful,
    /// Both clicks on the same port; weight 2.
    SamePort,
    /// One click on each auxiliary port.
    CrossAuxiliary,
}

impl PairClass {
    pub fn of(a: Detector, b: Detector) -> Self {
        let (p, q) = (a.port(), b.port());
        if p == q {
            PairClass::SamePort
        } else if p == Port::Out || q == Port::Out {
            PairClass::Successful
        } else {
            PairClass::CrossAuxiliary
        }
    }

    pub fn weight(self) -> u64 {
        match self {
            PairClass::SamePort => 2,
            _ => 1,
        }
    }

    pub fn is_successful(self) -> bool {
        self == PairClass::Successful
    }
}

/// Raw coincidence counts by class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TaggedCounts {
    pub successful: u64,
    pub same_port: u64,
    pub cross_auxiliary: u64,
}

impl TaggedCounts {
    pub fn weighted_successful(&self) -> u64 {
        self.successful * PairClass::Successful.weight()
    }

    pub fn weighted_unsuccessful(&self) -> u64 {
        self.same_port * PairClass::SamePort.weight() + self.cross_auxiliary * PairClass::CrossAuxiliary.weight()
    }

    pub fn weighted_total(&self) -> u64 {
        self.weighted_successful() + self.weighted_unsuccessful()
    }
}

/// Classifies every two-click coincidence.
pub fn tag(counts: &CoincidenceCounts) -> TaggedCounts {
    let mut t = TaggedCounts::default();
    for (a, b) in detector_pairs() {
        let n = counts.pair(a, b);
        match PairClass::of(a, b) {
            PairClass::Successful => t.successful += n,
            PairClass::SamePort => t.same_port += n,
            PairClass::CrossAuxiliary => t.cross_auxiliary += n,
        }
    }
    t
}

/// `(N0A+N0B+N2A+N2B) / (all six singles)`, i.e. the fraction of detected
/// light that was transmitted by `BS1`.
pub fn effective_transmittance(counts: &CoincidenceCounts) -> Result<f64> {
    effective_transmittance_with_error(counts).map(|(t, _)| t)
}

/// [`effective_transmittance`] with its binomial standard error.
pub fn effective_transmittance_with_error(counts: &CoincidenceCounts) -> Result<(f64, f64)> {
    let port_total = |p: Port| counts.single(Detector::new(p, false)) + counts.single(Detector::new(p, true));
    let transmitted = port_total(Port::Aux2) + port_total(Port::Out);
    let total = transmitted + port_total(Port::Aux1);
    if total == 0 {
        return Err(Error::Domain("no singles recorded".into()));
    }
    let t = transmitted as f64 / total as f64;
    Ok((t, (t * (1.0 - t) / total as f64).sqrt()))
}

/// Weighted success ratio and its standard error.
///
/// The error propagates multinomial fluctuations of the three raw pair
/// classes through `s / (s + c + 2 d)`, which reduces to the binomial error
/// when there are no same-port pairs.
pub fn effective_success(counts: &CoincidenceCounts) -> Result<(f64, f64)> {
    let t = tag(counts);
    let raw = t.successful + t.same_port + t.cross_auxiliary;
    if raw == 0 {
        return Err(Error::Domain("no two-photon coincidences recorded".into()));
    }
    let n = raw as f64;
    let (s, c, d) = (
        t.successful as f64 / n,
        t.cross_auxiliary as f64 / n,
        t.same_port as f64 / n,
    );
    let total = s + c + 2.0 * d;
    let p = s / total;
    let grad = [
        (c + 2.0 * d) / (total * total),
        -s / (total * total),
        -2.0 * s / (total * total),
    ];
    let freq = [s, c, d];
    let mean: f64 = grad.iter().zip(freq).map(|(g, f)| g * f).sum();
    let second: f64 = grad.iter().zip(freq).map(|(g, f)| g * g * f).sum();
    let variance = ((second - mean * mean) / n).max(0.0);
    Ok((p, variance.sqrt()))
}

/// Where detected photons go, as inferred from singles and pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Routing {
    /// Probability that a detected photon came through `AUX1`.
    aux1: f64,
    /// Share of the other photons reaching `AUX2` when nothing hit `AUX1`.
    aux2: f64,
    /// The same share once an `AUX1` photon has switched `BS2`.
    aux2_switched: f64,
    /// Probability of landing on the `A` detector, per port.
    arm_a: [f64; 3],
}

impl Routing {
    fn estimate(counts: &CoincidenceCounts) -> Self {
        let singles = |p: Port| {
            let a = counts.single(Detector::new(p, false)) as f64;
            (a, a + counts.single(Detector::new(p, true)) as f64)
        };
        let ratio = |num: f64, den: f64, fallback: f64| if den > 0.0 { num / den } else { fallback };
        let (s0, s1, s2) = (singles(Port::Aux2).1, singles(Port::Aux1).1, singles(Port::Out).1);
        let aux2 = ratio(s0, s0 + s2, 0.0);
        let with_aux1 = |other: Port| -> f64 {
            detector_pairs()
                .filter(|(a, b)| {
                    let ports = (a.port(), b.port());
                    ports == (Port::Aux1, other) || ports == (other, Port::Aux1)
                })
                .map(|(a, b)| counts.pair(a, b) as f64)
                .sum()
        };
        let (c0, c2) = (with_aux1(Port::Aux2), with_aux1(Port::Out));
        Self {
            aux1: ratio(s1, s0 + s1 + s2, 0.0),
            aux2,
            aux2_switched: ratio(c0, c0 + c2, aux2),
            arm_a: Port::ALL.map(|p| {
                let (a, total) = singles(p);
                ratio(a, total, 0.5)
            }),
        }
    }

    /// Distribution of the number of distinct detectors fired by `n` detected
    /// photons (index 0..=6).
    fn click_distribution(&self, n: usize) -> [f64; DETECTORS + 1] {
        let port = |p: Port, k: usize| -> [f64; 3] {
            if k == 0 {
                return [1.0, 0.0, 0.0];
            }
            let h = self.arm_a[p as usize];
            let one = h.powi(k as i32) + (1.0 - h).powi(k as i32);
            [0.0, one, 1.0 - one]
        };
        let mut out = [0.0; DETECTORS + 1];
        let aux1 = binomial_pmf(n, self.aux1);
        for (a, pa) in aux1.iter().enumerate() {
            let share = if a > 0 { self.aux2_switched } else { self.aux2 };
            let rest = n - a;
            for (b, pb) in binomial_pmf(rest, share).iter().enumerate() {
                let (x, y, z) = (port(Port::Aux1, a), port(Port::Aux2, b), port(Port::Out, rest - b));
                for (i, px) in x.iter().enumerate() {
                    for (j, py) in y.iter().enumerate() {
                        for (l, pz) in z.iter().enumerate() {
                            out[i + j + l] += pa * pb * px * py * pz;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Estimated fraction of two-click events caused by three or more photons.
///
/// The number of detected photons per pulse is taken as Poissonian with the
/// mean implied by the singles rates. Each detected photon is routed with
/// the port and arm probabilities measured in the same run; a photon on
/// `AUX1` changes the routing of the rest of the pulse exactly as the
/// measured `AUX1` coincidences show. The model gives the ratio of
/// multi-photon two-click events to events with three or more clicks, which
/// scales the observed `higher` tally. Returns 0 when no higher-order event
/// was seen.
pub fn spurious_fraction(counts: &CoincidenceCounts) -> f64 {
    let pairs = counts.total_pairs();
    if counts.higher == 0 || pairs == 0 || counts.pulses == 0 {
        return 0.0;
    }
    let mean: f64 = Detector::all()
        .map(|d| {
            let p = (counts.single(d) as f64 / counts.pulses as f64).min(1.0 - 1e-12);
            -(1.0 - p).ln()
        })
        .sum();
    let routing = Routing::estimate(counts);

    let (mut spurious, mut higher) = (0.0, 0.0);
    // Poisson weight of n photons, built up iteratively
    let mut weight = (-mean).exp() * mean * mean / 2.0;
    for n in 3..=MAX_PHOTONS {
        weight *= mean / n as f64;
        if weight < 1e-300 {
            break;
        }
        let clicks = routing.click_distribution(n);
        spurious += weight * clicks[2];
        higher += weight * clicks[3..].iter().sum::<f64>();
    }
    if higher <= 0.0 {
        return 0.0;
    }
    (spurious / higher * counts.higher as f64 / pairs as f64).clamp(0.0, 1.0)
}

/// Summary of one emulation run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmulationReport {
    pub t_eff: f64,
    pub t_eff_se: f64,
    pub p_exp: f64,
    pub p_exp_se: f64,
    pub spurious_fraction: f64,
    pub counts: CoincidenceCounts,
}

impl EmulationReport {
    pub fn from_counts(counts: CoincidenceCounts) -> Result<Self> {
        let (t_eff, t_eff_se) = effective_transmittance_with_error(&counts)?;
        let (p_exp, p_exp_se) = effective_success(&counts)?;
        Ok(Self {
            t_eff,
            t_eff_se,
            p_exp,
            p_exp_se,
            spurious_fraction: spurious_fraction(&counts),
            counts,
        })
    }
}

/// Emulates and summarizes in one step.
pub fn emulate(cfg: &EmulationConfig) -> Result<EmulationReport> {
    EmulationReport::from_counts(run_pulses(cfg)?.counts)
}

/// Finds the `T1` whose emulated effective transmittance equals `target`
/// to within `1e-5`.
///
/// Every evaluation runs `pilot_pulses` pulses with the configured seed, so
/// the reading is a deterministic function of `T1`. Since `T_eff` tracks
/// `T1` closely, the search steps by the remaining error and falls back to
/// bisection when a step would leave the bracket.
pub fn calibrate_t1(base: &EmulationConfig, target: f64, pilot_pulses: u64) -> Result<f64> {
    check_unit("target T_eff", target)?;
    let reading = |t1: f64| -> Result<f64> {
        let cfg = EmulationConfig {
            t1,
            pulses: pilot_pulses,
            ..*base
        };
        effective_transmittance(&run_pulses(&cfg)?.counts)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut t1 = target;
    for _ in 0..60 {
        let t_eff = reading(t1)?;
        if (t_eff - target).abs() <= 1e-5 {
            return Ok(t1);
        }
        if t_eff < target {
            lo = t1;
        } else {
            hi = t1;
        }
        if hi - lo < 1e-12 {
            break;
        }
        let step = t1 + (target - t_eff);
        t1 = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
    }
    Ok(t1)
}

/// One point of a `T1` sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub t1: f64,
    pub t_eff: f64,
    pub p_exp: f64,
    pub se: f64,
    pub feedforward: bool,
}

impl SweepPoint {
    pub fn scheme(&self) -> &'static str {
        if self.feedforward {
            "feedforward"
        } else {
            "static"
        }
    }
}

/// Runs `base` at every `T1` in `t1_values`; point `i` uses seed
/// `derive_seed(base.seed, i)`.
pub fn sweep(base: &EmulationConfig, t1_values: &[f64]) -> Result<Vec<SweepPoint>> {
    t1_values
        .iter()
        .enumerate()
        .map(|(i, &t1)| {
            let cfg = EmulationConfig {
                t1,
                seed: derive_seed(base.seed, i as u64),
                ..*base
            };
            let report = emulate(&cfg)?;
            Ok(SweepPoint {
                t1,
                t_eff: report.t_eff,
                p_exp: report.p_exp,
                se: report.p_exp_se,
                feedforward: base.feedforward,
            })
        })
        .collect()
}

/// Columns `T_eff,P_exp,SE,scheme`.
pub fn write_sweep_csv<W: Write>(mut w: W, points: &[SweepPoint]) -> Result<()> {
    writeln!(w, "T_eff,P_exp,SE,scheme")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{}",
            format_sig(p.t_eff),
            format_sig(p.p_exp),
            format_sig(p.se),
            p.scheme()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn d(s: &str) -> Detector {
        s.parse().unwrap()
    }

    #[test]
    fn fifteen_pairs_indexed_densely() {
        let idx: Vec<usize> = detector_pairs().map(|(a, b)| pair_index(a, b)).collect();
        assert_eq!(idx, (0..PAIRS).collect::<Vec<_>>());
        assert_eq!(pair_index(d("D2A"), d("D1B")), pair_index(d("D1B"), d("D2A")));
    }

    #[test]
    fn tag_classes() {
        assert_eq!(PairClass::of(d("D2A"), d("D1B")), PairClass::Successful);
        assert_eq!(PairClass::of(d("D0B"), d("D2B")), PairClass::Successful);
        assert_eq!(PairClass::of(d("D1A"), d("D1B")), PairClass::SamePort);
        assert_eq!(PairClass::of(d("D2A"), d("D2B")), PairClass::SamePort);
        assert_eq!(PairClass::of(d("D0A"), d("D1A")), PairClass::CrossAuxiliary);
        assert_eq!(PairClass::SamePort.weight(), 2);
        let classes: Vec<_> = detector_pairs().map(|(a, b)| PairClass::of(a, b)).collect();
        assert_eq!(classes.iter().filter(|c| c.is_successful()).count(), 8);
        assert_eq!(classes.iter().filter(|c| **c == PairClass::SamePort).count(), 3);
        assert_eq!(classes.iter().filter(|c| **c == PairClass::CrossAuxiliary).count(), 4);
    }

    #[test]
    fn tag_weights_on_synthetic_counts() {
        let mut c = CoincidenceCounts::new(100);
        c.set_pair(d("D2A"), d("D1B"), 7);
        c.set_pair(d("D1A"), d("D1B"), 3);
        c.set_pair(d("D0A"), d("D1A"), 5);
        let t = tag(&c);
        assert_eq!((t.weighted_successful(), t.weighted_unsuccessful()), (7, 11));
        assert_eq!(t.weighted_total(), 7 + 5 + 2 * 3);
        assert_eq!(tag(&CoincidenceCounts::new(0)).weighted_total(), 0);
    }

    #[test]
    fn effective_transmittance_examples() {
        let mut c = CoincidenceCounts::new(10);
        for det in Detector::all() {
            c.set_single(det, 4);
        }
        assert_abs_diff_eq!(effective_transmittance(&c).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        c.set_single(d("D1A"), 0);
        c.set_single(d("D1B"), 0);
        assert_eq!(effective_transmittance(&c).unwrap(), 1.0);
        assert!(effective_transmittance(&CoincidenceCounts::new(5)).is_err());
    }

    #[test]
    fn effective_success_edge_cases() {
        let mut c = CoincidenceCounts::new(10);
        c.set_pair(d("D0A"), d("D2B"), 9);
        assert_eq!(effective_success(&c).unwrap(), (1.0, 0.0));
        assert!(effective_success(&CoincidenceCounts::new(10)).is_err());

        // no same-port pairs: plain binomial error
        c.set_pair(d("D0A"), d("D1B"), 3);
        let (p, se) = effective_success(&c).unwrap();
        assert_abs_diff_eq!(p, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(se, (0.75f64 * 0.25 / 12.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn counts_json_layout() {
        let mut c = CoincidenceCounts::new(20);
        c.record(0b000101);
        c.record(0b110000);
        c.record(0b000111);
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["singles"]["D0A"], 2);
        assert_eq!(v["singles"]["D1A"], 2);
        assert_eq!(v["pairs"]["D0A-D1A"], 1);
        assert_eq!(v["pairs"]["D2A-D2B"], 1);
        assert_eq!(v["higher"], 1);
        assert_eq!(v["pairs"].as_object().unwrap().len(), 15);
        let back: CoincidenceCounts = serde_json::from_value(v).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn transparent_first_splitter() {
        let cfg = EmulationConfig {
            source: SourceModel::fock(2).unwrap(),
            t1: 1.0,
            t2: 1.0,
            pulses: 20_000,
            seed: 4,
            ..Default::default()
        };
        let c = run_pulses(&cfg).unwrap().counts;
        let out_pair = c.pair(d("D2A"), d("D2B"));
        assert_eq!(c.total_pairs(), out_pair);
        // both photons on one OUT diode half of the time
        let ratio = out_pair as f64 / 20_000.0;
        assert!((ratio - 0.5).abs() < 0.02, "{ratio}");
        assert_eq!(c.single(d("D1A")) + c.single(d("D1B")), 0);
    }

    #[test]
    fn fock_source_has_no_spurious_pairs() {
        let cfg = EmulationConfig {
            source: SourceModel::fock(2).unwrap(),
            pulses: 50_000,
            seed: 8,
            ..Default::default()
        };
        let run = run_pulses(&cfg).unwrap();
        assert_eq!(run.counts.higher, 0);
        assert_eq!(spurious_fraction(&run.counts), 0.0);
        assert_eq!(run.pairs_from_multiphoton_source, 0);
    }

    #[test]
    fn seeded_emulation_is_reproducible() {
        let cfg = EmulationConfig {
            pulses: 100_000,
            seed: 77,
            ..Default::default()
        };
        assert_eq!(run_pulses(&cfg).unwrap(), run_pulses(&cfg).unwrap());
    }

    #[test]
    fn bad_configs() {
        let bad = [
            EmulationConfig {
                t1: 1.5,
                ..Default::default()
            },
            EmulationConfig {
                pulses: 0,
                ..Default::default()
            },
            EmulationConfig {
                detector_efficiency: -0.1,
                ..Default::default()
            },
            EmulationConfig {
                source: SourceModel::Coherent { mean_photons: 0.0 },
                ..Default::default()
            },
            EmulationConfig {
                losses: PortLosses {
                    aux1: 0.0,
                    aux2: 1.0,
                    out: 1.0,
                },
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(run_pulses(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn sweep_csv_header() {
        let points = [SweepPoint {
            t1: 0.5,
            t_eff: 0.5,
            p_exp: 0.625,
            se: 0.001,
            feedforward: true,
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &points).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "T_eff,P_exp,SE,scheme\n0.5,0.625,0.001,feedforward\n"
        );
    }
}
