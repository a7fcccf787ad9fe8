//! Photon-number (diagonal Fock basis) primitives.
//!
//! Every state handled by this crate is a Fock state or a loss-degraded Fock
//! state, and every measurement is photon counting, so states never develop
//! off-diagonal coherences. A state is therefore just a probability
//! distribution over photon numbers, and the optical elements act on it as
//! binomial kernels:
//!
//! * a beam splitter with intensity transmittance `T` reflects `j` of `m`
//!   photons with probability `C(m,j) T^(m-j) (1-T)^j`;
//! * a loss channel with transmittance `eta` is binomial thinning;
//! * an inefficient detector is a loss channel followed by ideal counting.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_unit, Error, Result};

/// Largest photon number any state may carry.
pub const MAX_PHOTONS: usize = 64;

/// Tolerance on the total probability accepted by public constructors.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Exact binomial coefficient `C(n, k)`.
///
/// The multiplicative recurrence stays exact in `u128` for every `n` up to
/// [`MAX_PHOTONS`] since each partial product is itself a binomial
/// coefficient times at most `n`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// Probabilities of `0..=n` successes in `n` Bernoulli(`p`) trials.
pub(crate) fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let q = 1.0 - p;
    (0..=n)
        .map(|k| binomial(n, k) as f64 * p.powi(k as i32) * q.powi((n - k) as i32))
        .collect()
}

fn check_photons(n: usize) -> Result<()> {
    if n > MAX_PHOTONS {
        Err(Error::Domain(format!(
            "photon number {n} exceeds the supported maximum {MAX_PHOTONS}"
        )))
    } else {
        Ok(())
    }
}

/// Normalized probability distribution over photon numbers `0..=max_photons`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhotonNumberMixture {
    probs: Vec<f64>,
}

impl PhotonNumberMixture {
    /// The pure Fock state `|n⟩`.
    pub fn fock(n: usize) -> Result<Self> {
        check_photons(n)?;
        let mut probs = vec![0.0; n + 1];
        probs[n] = 1.0;
        Ok(Self { probs })
    }

    /// Builds a mixture from probabilities indexed by photon number.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("empty photon-number distribution".into()));
        }
        check_photons(probs.len() - 1)?;
        if let Some((n, p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::Domain(format!("probability of {n} photons is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Largest photon number with a slot in this mixture.
    pub fn max_photons(&self) -> usize {
        self.probs.len() - 1
    }

    /// Probability of exactly `n` photons (zero beyond `max_photons`).
    pub fn prob(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `(photon number, probability)` pairs with non-zero probability.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().copied().enumerate().filter(|(_, p)| *p != 0.0)
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(n, p)| n as f64 * p).sum()
    }

    /// Weight of the single-photon component, `p1`.
    pub fn single_photon_fraction(&self) -> f64 {
        self.prob(1)
    }

    /// Total-variation distance to another mixture.
    pub fn distance(&self, other: &Self) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        0.5 * (0..len).map(|n| (self.prob(n) - other.prob(n)).abs()).sum::<f64>()
    }
}

impl Serialize for PhotonNumberMixture {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<String, f64> = self.iter().map(|(n, p)| (n.to_string(), p)).collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PhotonNumberMixture {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<usize, f64>::deserialize(deserializer)?;
        let max = map.keys().next_back().copied().unwrap_or(0);
        if max > MAX_PHOTONS {
            return Err(serde::de::Error::custom(format!(
                "photon number {max} exceeds {MAX_PHOTONS}"
            )));
        }
        let mut probs = vec![0.0; max + 1];
        for (n, p) in map {
            probs[n] = p;
        }
        Self::from_probs(probs).map_err(serde::de::Error::custom)
    }
}

/// Unnormalized accumulator over photon numbers.
///
/// Used while enumerating outcome trees; call [`WeightedMixture::normalize`]
/// once at the end.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedMixture {
    weights: Vec<f64>,
    total: f64,
}

impl WeightedMixture {
    pub fn new(max_photons: usize) -> Self {
        Self {
            weights: vec![0.0; max_photons + 1],
            total: 0.0,
        }
    }

    /// Grows the support if needed.
    pub fn add(&mut self, n: usize, weight: f64) {
        if n >= self.weights.len() {
            self.weights.resize(n + 1, 0.0);
        }
        self.weights[n] += weight;
        self.total += weight;
    }

    pub fn merge(&mut self, other: &WeightedMixture) {
        for (n, w) in other.weights.iter().enumerate() {
            if *w != 0.0 {
                self.add(n, *w);
            }
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn weight(&self, n: usize) -> f64 {
        self.weights.get(n).copied().unwrap_or(0.0)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `None` when the total weight is zero.
    pub fn normalize(&self) -> Option<PhotonNumberMixture> {
        if self.total <= 0.0 {
            return None;
        }
        let mut probs: Vec<f64> = self.weights.iter().map(|w| w / self.total).collect();
        while probs.len() > 1 && probs[probs.len() - 1] == 0.0 {
            probs.pop();
        }
        Some(PhotonNumberMixture { probs })
    }
}

impl From<&PhotonNumberMixture> for WeightedMixture {
    fn from(m: &PhotonNumberMixture) -> Self {
        Self {
            weights: m.probs.clone(),
            total: m.probs.iter().sum(),
        }
    }
}

/// Lossless beam splitter described by its intensity transmittance `T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamSplitter {
    transmittance: f64,
}

impl BeamSplitter {
    pub fn new(transmittance: f64) -> Result<Self> {
        check_unit("transmittance", transmittance)?;
        Ok(Self { transmittance })
    }

    pub fn transmittance(&self) -> f64 {
        self.transmittance
    }

    /// Probabilities of reflecting `0..=m` photons into the tapped mode.
    pub fn reflection_pmf(&self, m: usize) -> Vec<f64> {
        binomial_pmf(m, 1.0 - self.transmittance)
    }

    pub fn split(&self, m: usize) -> Result<Vec<SplitOutcome>> {
        check_photons(m)?;
        Ok(self
            .reflection_pmf(m)
            .into_iter()
            .enumerate()
            .map(|(j, probability)| SplitOutcome {
                transmitted: m - j,
                reflected: j,
                probability,
            })
            .collect())
    }
}

/// One term of the beam-splitter output distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SplitOutcome {
    pub transmitted: usize,
    pub reflected: usize,
    pub probability: f64,
}

/// Joint distribution of transmitted and reflected photon numbers when `m`
/// photons hit a beam splitter with transmittance `t`.
///
/// Entries are ordered by increasing reflected count.
pub fn splitting_distribution(m: usize, t: f64) -> Result<Vec<SplitOutcome>> {
    BeamSplitter::new(t)?.split(m)
}

/// Loss channel with intensity transmittance `eta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossChannel {
    transmittance: f64,
}

impl LossChannel {
    pub fn new(transmittance: f64) -> Result<Self> {
        check_unit("loss-channel transmittance", transmittance)?;
        Ok(Self { transmittance })
    }

    pub fn transmittance(&self) -> f64 {
        self.transmittance
    }

    pub fn apply(&self, state: &PhotonNumberMixture) -> PhotonNumberMixture {
        let eta = self.transmittance;
        let mut out = vec![0.0; state.probs.len()];
        for (m, p) in state.iter() {
            for (n, k) in binomial_pmf(m, eta).into_iter().enumerate() {
                out[n] += p * k;
            }
        }
        PhotonNumberMixture { probs: out }
    }

    /// Thins an unnormalized accumulator in place of a normalized state.
    pub fn apply_weighted(&self, state: &WeightedMixture) -> WeightedMixture {
        let mut out = WeightedMixture::new(state.weights.len().saturating_sub(1));
        for (m, w) in state.weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for (n, k) in binomial_pmf(m, self.transmittance).into_iter().enumerate() {
                out.add(n, w * k);
            }
        }
        out
    }
}

/// Binomial thinning of `state` by a channel of transmittance `eta`.
pub fn apply_loss(state: &PhotonNumberMixture, eta: f64) -> Result<PhotonNumberMixture> {
    Ok(LossChannel::new(eta)?.apply(state))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Reports the exact number of photons that arrive.
    IdealPnr,
    /// Ideal counting behind a loss channel.
    InefficientPnr,
    /// Two binary detectors behind a balanced splitter; reports 0, 1 or 2 clicks.
    ClickPair,
}

/// Photon-counting detector.
///
/// The outcome label is the reported count: photons for the PNR variants and
/// clicks for [`DetectorKind::ClickPair`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorModel {
    kind: DetectorKind,
    efficiency: f64,
}

impl DetectorModel {
    pub fn ideal() -> Self {
        Self {
            kind: DetectorKind::IdealPnr,
            efficiency: 1.0,
        }
    }

    pub fn inefficient_pnr(efficiency: f64) -> Result<Self> {
        check_unit("detector efficiency", efficiency)?;
        Ok(Self {
            kind: DetectorKind::InefficientPnr,
            efficiency,
        })
    }

    pub fn click_pair(efficiency: f64) -> Result<Self> {
        check_unit("detector efficiency", efficiency)?;
        Ok(Self {
            kind: DetectorKind::ClickPair,
            efficiency,
        })
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// Largest label this detector can report for `photons` incident photons.
    pub fn max_outcome(&self, photons: usize) -> usize {
        match self.kind {
            DetectorKind::ClickPair => photons.min(2),
            _ => photons,
        }
    }

    /// Probability of each outcome label given `photons` incident photons,
    /// indexed by label.
    pub fn response(&self, photons: usize) -> Vec<f64> {
        match self.kind {
            DetectorKind::IdealPnr => {
                let mut r = vec![0.0; photons + 1];
                r[photons] = 1.0;
                r
            }
            DetectorKind::InefficientPnr => binomial_pmf(photons, self.efficiency),
            DetectorKind::ClickPair => {
                let mut r = vec![0.0; photons.min(2) + 1];
                for (n, p) in binomial_pmf(photons, self.efficiency).into_iter().enumerate() {
                    match n {
                        0 => r[0] += p,
                        1 => r[1] += p,
                        _ => {
                            // each photon picks one of the two detectors independently
                            let both = 1.0 - 0.5f64.powi(n as i32 - 1);
                            r[2] += p * both;
                            r[1] += p * (1.0 - both);
                        }
                    }
                }
                r
            }
        }
    }
}

impl fmt::Display for DetectorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DetectorKind::IdealPnr => write!(f, "ideal"),
            DetectorKind::InefficientPnr => write!(f, "pnr:{}", self.efficiency),
            DetectorKind::ClickPair => write!(f, "clicks:{}", self.efficiency),
        }
    }
}

impl FromStr for DetectorModel {
    type Err = Error;

    /// Accepts `ideal`, `pnr:<eta>` and `clicks:<eta>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, eta) = match s.split_once(':') {
            Some((name, eta)) => {
                let eta: f64 = eta
                    .trim()
                    .parse()
                    .map_err(|_| Error::Domain(format!("bad detector efficiency in '{s}'")))?;
                (name.trim(), Some(eta))
            }
            None => (s.trim(), None),
        };
        match (name, eta) {
            ("ideal", None) => Ok(Self::ideal()),
            ("pnr", eta) => Self::inefficient_pnr(eta.unwrap_or(1.0)),
            ("clicks", eta) => Self::click_pair(eta.unwrap_or(1.0)),
            _ => Err(Error::Domain(format!(
                "unknown detector '{s}' (expected ideal, pnr:<eta> or clicks:<eta>)"
            ))),
        }
    }
}

/// One detector outcome together with the photons it absorbed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Detection {
    pub outcome: usize,
    pub probability: f64,
    /// Distribution of the photon number removed from the beam, conditioned
    /// on this outcome.
    pub removed: PhotonNumberMixture,
}

/// Measures `state` with `det`, returning every outcome of non-zero
/// probability in increasing label order.
pub fn detect(state: &PhotonNumberMixture, det: &DetectorModel) -> Vec<Detection> {
    let labels = det.max_outcome(state.max_photons()) + 1;
    let mut acc: Vec<WeightedMixture> = (0..labels).map(|_| WeightedMixture::new(state.max_photons())).collect();
    for (n, p) in state.iter() {
        for (label, r) in det.response(n).into_iter().enumerate() {
            if r > 0.0 {
                acc[label].add(n, p * r);
            }
        }
    }
    acc.into_iter()
        .enumerate()
        .filter_map(|(outcome, w)| {
            let probability = w.total();
            w.normalize().map(|removed| Detection {
                outcome,
                probability,
                removed,
            })
        })
        .collect()
}
