//! Success probability versus output purity for `|2⟩ → |1⟩` conversion with
//! inefficient detectors and a lossy switchable splitter.
//!
//! With detector efficiency `eta` a tap can miss a second photon, so the
//! heralded output is a mixture `p1 |1⟩⟨1| + (1 - p1) |0⟩⟨0|`. The elementary
//! scheme has one tap of transmittance `T`. The feedforward scheme taps at
//! `T1`, passes the beam through a channel of transmittance `eta_o`, and taps
//! again at `T2` unless the first detector fired, in which case the second
//! splitter is switched to full transmission.
//!
//! Both schemes are characterized by the frontier of the best `p1` reachable
//! at each success probability `P`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_unit, Error, Result};
use crate::output::format_sig;

const OUTER_STEP: f64 = 1e-3;
const INNER_SCAN: usize = 64;
const GOLDEN: f64 = 0.618_033_988_749_894_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Elementary,
    Feedforward,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Elementary => "elementary",
            Scheme::Feedforward => "feedforward",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum Settings {
    Elementary { t: f64 },
    Feedforward { t1: f64, t2: f64 },
}

impl Settings {
    pub fn scheme(&self) -> Scheme {
        match self {
            Settings::Elementary { .. } => Scheme::Elementary,
            Settings::Feedforward { .. } => Scheme::Feedforward,
        }
    }
}

/// A `(P, p1)` pair and the settings that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub probability: f64,
    pub p1: f64,
    pub settings: Settings,
    pub eta: f64,
    pub eta_o: f64,
}

/// Elementary single-tap scheme at transmittance `t`.
///
/// `P = 2η(1-T)[1-(1-T)η]` and `p1 = T / [1-(1-T)η]`; `p1` is reported as 0
/// when `P = 0`.
pub fn elementary_point(t: f64, eta: f64) -> Result<TradeoffPoint> {
    check_unit("T", t)?;
    check_unit("eta", eta)?;
    let s = 1.0 - t;
    let denominator = 1.0 - s * eta;
    let probability = 2.0 * eta * s * denominator;
    let p1 = if probability == 0.0 { 0.0 } else { t / denominator };
    Ok(TradeoffPoint {
        probability,
        p1,
        settings: Settings::Elementary { t },
        eta,
        eta_o: 1.0,
    })
}

/// Curly-bracket factor shared by `P` and the `p1` denominator.
fn heralding_factor(t1: f64, t2: f64, eta: f64, eta_o: f64) -> f64 {
    let u = eta_o * (1.0 - t2);
    1.0 - t1 - eta + eta * t1 * (2.0 - t1 - u * (1.0 - t1 + eta_o * t1 * (1.0 - t2))) + eta_o * t1 * (1.0 - t2)
}

fn single_photon_weight(t1: f64, t2: f64, eta_o: f64) -> f64 {
    eta_o * t1 * (1.0 - t1 + eta_o * t1 * t2 * (1.0 - t2))
}

fn feedforward_probability(t1: f64, t2: f64, eta: f64, eta_o: f64) -> f64 {
    2.0 * eta * heralding_factor(t1, t2, eta, eta_o)
}

/// Feedforward scheme with first tap `t1` and second tap `t2` (switched to 1
/// after a first-stage detection), detector efficiency `eta` and transmittance
/// `eta_o` between the two splitters.
pub fn feedforward_point(t1: f64, t2: f64, eta: f64, eta_o: f64) -> Result<TradeoffPoint> {
    check_unit("T1", t1)?;
    check_unit("T2", t2)?;
    check_unit("eta", eta)?;
    check_unit("eta_O", eta_o)?;
    let factor = heralding_factor(t1, t2, eta, eta_o);
    let probability = 2.0 * eta * factor;
    let p1 = if probability == 0.0 {
        0.0
    } else {
        single_photon_weight(t1, t2, eta_o) / factor
    };
    Ok(TradeoffPoint {
        probability,
        p1,
        settings: Settings::Feedforward { t1, t2 },
        eta,
        eta_o,
    })
}

/// Settings and purity at the target probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FeedforwardOptimum {
    pub t1: f64,
    pub t2: f64,
    pub p1: f64,
    pub probability: f64,
}

/// Closed-form optimum at `P = 2/3`, valid when `eta_o (3 eta - 1) ≥ 1`.
pub fn closed_form_optimum(eta: f64, eta_o: f64) -> Option<FeedforwardOptimum> {
    let gate = eta_o * (3.0 * eta - 1.0);
    (gate >= 1.0).then(|| FeedforwardOptimum {
        t1: (3.0 * eta - 1.0) / (3.0 * eta),
        t2: 1.0 - 1.0 / gate,
        p1: 2.0 * eta_o - (1.0 + 2.0 * eta_o) / (3.0 * eta),
        probability: 2.0 / 3.0,
    })
}

/// Golden-section maximization of a unimodal `f` on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut a = hi - GOLDEN * (hi - lo);
    let mut b = lo + GOLDEN * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if hi - lo < 1e-13 {
            break;
        }
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + GOLDEN * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - GOLDEN * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}

/// Grid scan followed by golden-section refinement around the best point.
fn maximize_on_unit(f: impl Fn(f64) -> f64 + Copy) -> f64 {
    let steps = (1.0 / OUTER_STEP).round() as usize;
    let best = (0..=steps)
        .map(|i| i as f64 * OUTER_STEP)
        .max_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap_or(0.0);
    let x = golden_max(f, (best - OUTER_STEP).max(0.0), (best + OUTER_STEP).min(1.0));
    if f(x) >= f(best) {
        x
    } else {
        best
    }
}

/// `T2` maximizing `P` at fixed `T1`: `P` is a concave quadratic in
/// `u = eta_o (1 - T2)`.
fn best_second_tap(t1: f64, eta: f64, eta_o: f64) -> f64 {
    if eta_o == 0.0 {
        return 1.0;
    }
    let linear = t1 * (1.0 - eta * (1.0 - t1));
    let quadratic = eta * t1 * t1;
    let u = if quadratic > 0.0 {
        (linear / (2.0 * quadratic)).clamp(0.0, eta_o)
    } else if linear > 0.0 {
        eta_o
    } else {
        0.0
    };
    (1.0 - u / eta_o).clamp(0.0, 1.0)
}

/// Highest success probability of the feedforward scheme and its settings.
pub fn max_feedforward_probability(eta: f64, eta_o: f64) -> Result<FeedforwardOptimum> {
    check_unit("eta", eta)?;
    check_unit("eta_O", eta_o)?;
    let along = |t1: f64| feedforward_probability(t1, best_second_tap(t1, eta, eta_o), eta, eta_o);
    let t1 = maximize_on_unit(along);
    let t2 = best_second_tap(t1, eta, eta_o);
    let point = feedforward_point(t1, t2, eta, eta_o)?;
    Ok(FeedforwardOptimum {
        t1,
        t2,
        p1: point.p1,
        probability: point.probability,
    })
}

/// Every `T2 ∈ [0, 1]` with `P(t1, T2) = target`.
fn second_taps_for(t1: f64, eta: f64, eta_o: f64, target: f64) -> Vec<f64> {
    let f = |t2: f64| feedforward_probability(t1, t2, eta, eta_o) - target;
    let mut roots = Vec::new();
    let mut a = 0.0;
    let mut fa = f(a);
    if fa == 0.0 {
        roots.push(a);
    }
    for i in 1..=INNER_SCAN {
        let b = i as f64 / INNER_SCAN as f64;
        let fb = f(b);
        if fb == 0.0 {
            roots.push(b);
        } else if fa != 0.0 && (fa < 0.0) != (fb < 0.0) {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    roots
}

fn purity(t1: f64, t2: f64, eta: f64, eta_o: f64) -> f64 {
    let factor = heralding_factor(t1, t2, eta, eta_o);
    if factor <= 0.0 {
        0.0
    } else {
        single_photon_weight(t1, t2, eta_o) / factor
    }
}

/// Point on the constraint curve at `t1` nearest to `hint`, with its `p1`.
fn constrained_near(t1: f64, hint: f64, eta: f64, eta_o: f64, target: f64) -> Option<(f64, f64)> {
    second_taps_for(t1, eta, eta_o, target)
        .into_iter()
        .min_by(|a, b| (a - hint).abs().total_cmp(&(b - hint).abs()))
        .map(|t2| (t2, purity(t1, t2, eta, eta_o)))
}

/// Maximizes `p1` of the feedforward scheme subject to `P = target`.
///
/// An outer grid over `T1` (step `1e-3`) solves the constraint for `T2` by
/// bisection on every bracketed branch; the best point is then polished by a
/// golden-section search along the constraint curve. `target = 0` returns
/// the limiting supremum `p1 = eta_o` at `T1 = T2 = 1`.
pub fn optimize_feedforward(eta: f64, eta_o: f64, target: f64) -> Result<FeedforwardOptimum> {
    check_unit("target P", target)?;
    let best = max_feedforward_probability(eta, eta_o)?;
    if target > best.probability + 1e-9 {
        return Err(Error::Infeasible {
            target,
            achievable: best.probability,
        });
    }
    if target == 0.0 {
        return Ok(FeedforwardOptimum {
            t1: 1.0,
            t2: 1.0,
            p1: eta_o,
            probability: 0.0,
        });
    }
    if target >= best.probability - 1e-9 {
        return Ok(best);
    }

    let steps = (1.0 / OUTER_STEP).round() as usize;
    let mut seed: Option<(f64, f64, f64)> = None;
    for i in 0..=steps {
        let t1 = i as f64 * OUTER_STEP;
        for t2 in second_taps_for(t1, eta, eta_o, target) {
            let p1 = purity(t1, t2, eta, eta_o);
            if seed.is_none_or(|(_, _, q)| p1 > q) {
                seed = Some((t1, t2, p1));
            }
        }
    }
    let (t1, t2, p1) =
        seed.ok_or_else(|| Error::Numeric(format!("no feasible settings found for target P = {target}")))?;

    let along = |x: f64| constrained_near(x, t2, eta, eta_o, target).map_or(f64::NEG_INFINITY, |(_, q)| q);
    let x = golden_max(along, (t1 - OUTER_STEP).max(0.0), (t1 + OUTER_STEP).min(1.0));
    let polished = constrained_near(x, t2, eta, eta_o, target)
        .filter(|(_, q)| *q >= p1)
        .map(|(y, q)| (x, y, q));
    let (t1, t2, p1) = polished.unwrap_or((t1, t2, p1));
    Ok(FeedforwardOptimum {
        t1,
        t2,
        p1,
        probability: feedforward_probability(t1, t2, eta, eta_o),
    })
}

/// Highest success probability of the elementary scheme.
pub fn max_elementary_probability(eta: f64) -> Result<f64> {
    check_unit("eta", eta)?;
    let s = if eta > 0.5 { 1.0 / (2.0 * eta) } else { 1.0 };
    Ok(2.0 * eta * s * (1.0 - eta * s))
}

/// Elementary setting with the highest `p1` at `P = target`.
///
/// `P` grows and `p1` falls with the reflectance up to the probability
/// maximum, so the smallest reflectance meeting the target wins. `target =
/// 0` returns the limit `T = 1`, `p1 = 1`.
pub fn optimize_elementary(eta: f64, target: f64) -> Result<TradeoffPoint> {
    check_unit("target P", target)?;
    let achievable = max_elementary_probability(eta)?;
    if target > achievable + 1e-12 {
        return Err(Error::Infeasible { target, achievable });
    }
    if target == 0.0 {
        return Ok(TradeoffPoint {
            probability: 0.0,
            p1: 1.0,
            settings: Settings::Elementary { t: 1.0 },
            eta,
            eta_o: 1.0,
        });
    }
    let s_max = if eta > 0.5 { 1.0 / (2.0 * eta) } else { 1.0 };
    let (mut lo, mut hi) = (0.0, s_max);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if 2.0 * eta * mid * (1.0 - eta * mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    elementary_point(1.0 - hi, eta)
}

/// Pareto frontiers of both schemes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TradeoffCurve {
    pub elementary: Vec<TradeoffPoint>,
    pub feedforward: Vec<TradeoffPoint>,
}

/// Sweeps `n_points` evenly spaced target probabilities from 0 to each
/// scheme's maximum and records the best `p1` at each.
pub fn tradeoff_curve(eta: f64, eta_o: f64, n_points: usize) -> Result<TradeoffCurve> {
    if n_points < 2 {
        return Err(Error::Domain(format!("need at least 2 points, got {n_points}")));
    }
    let step = |max: f64, i: usize| max * i as f64 / (n_points - 1) as f64;

    let p_elem = max_elementary_probability(eta)?;
    let elementary = (0..n_points)
        .map(|i| optimize_elementary(eta, step(p_elem, i)))
        .collect::<Result<Vec<_>>>()?;

    let p_ff = max_feedforward_probability(eta, eta_o)?.probability;
    let feedforward = (0..n_points)
        .into_par_iter()
        .map(|i| {
            let o = optimize_feedforward(eta, eta_o, step(p_ff, i))?;
            Ok(TradeoffPoint {
                probability: o.probability,
                p1: o.p1,
                settings: Settings::Feedforward { t1: o.t1, t2: o.t2 },
                eta,
                eta_o,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TradeoffCurve {
        elementary,
        feedforward,
    })
}

impl TradeoffCurve {
    /// Columns `scheme,eta,eta_O,T1,T2,P,p1`; `T2` is empty for the
    /// elementary scheme.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "scheme,eta,eta_O,T1,T2,P,p1")?;
        for p in self.elementary.iter().chain(&self.feedforward) {
            let (t1, t2) = match p.settings {
                Settings::Elementary { t } => (format_sig(t), String::new()),
                Settings::Feedforward { t1, t2 } => (format_sig(t1), format_sig(t2)),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                p.settings.scheme().name(),
                format_sig(p.eta),
                format_sig(p.eta_o),
                t1,
                t2,
                format_sig(p.probability),
                format_sig(p.p1)
            )?;
        }
        Ok(())
    }
}

/// `p1` gain of the feedforward scheme over the elementary one at `target`.
pub fn feedforward_advantage(eta: f64, eta_o: f64, target: f64) -> Result<f64> {
    let ff = optimize_feedforward(eta, eta_o, target)?.p1;
    let el = optimize_elementary(eta, target)?.p1;
    Ok(ff - el)
}

/// Smallest `eta_o` at which the feedforward scheme matches the elementary
/// `p1` at `target`, located by bisection. `None` if no `eta_o ≤ 1` does.
pub fn crossover_eta_o(eta: f64, target: f64) -> Result<Option<f64>> {
    let gain = |eta_o: f64| match feedforward_advantage(eta, eta_o, target) {
        Ok(g) => Ok(g),
        Err(Error::Infeasible { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    };
    if gain(1.0)? < 0.0 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if gain(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}
