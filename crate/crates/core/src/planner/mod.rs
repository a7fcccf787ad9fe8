//! Optimal adaptive photon subtraction for `|m⟩ → |n⟩` conversion.
//!
//! A `k`-stage scheme taps the beam at `k` beam splitters in sequence. The
//! transmittance of each splitter is chosen from the outcomes of every
//! earlier detector. Splitting off the first stage leaves an optimal
//! `(k-1)`-stage problem for every possible first outcome, so the best
//! success probability obeys
//!
//! ```text
//! P(m,n|k) = max_T  Σ_{j=0}^{m-n} C(m,j) T^(m-j) (1-T)^j  P(m-j,n|k-1)
//! ```
//!
//! with `P(n,n|k) = 1` and `P(m,n|0) = 0` for `m > n`. [`PmaxTable`] fills
//! these values for a fixed target `n`, and [`build_policy`] unrolls the
//! optimal choices into a decision tree.

mod policy;

use std::io::Write;

pub use policy::{evaluate_policy, evaluate_policy_lossy, NodeStatus, Policy, PolicyEvaluation, PolicyNode};

use crate::error::{check_unit, Error, Result};
use crate::fock::{binomial, MAX_PHOTONS};
use crate::output::format_sig;

/// Default bound on `(m - n) * k_max` accepted by [`PmaxTable::build`].
pub const DEFAULT_WORK_LIMIT: usize = 4096;

/// Number of equal subintervals of `[0, 1]` scanned for sign changes.
const ROOT_SCAN_INTERVALS: usize = 256;
const ROOT_TOLERANCE: f64 = 1e-12;
const TIE_TOLERANCE: f64 = 1e-12;

/// Best transmittance for the first of the remaining stages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageOptimum {
    pub transmittance: f64,
    pub probability: f64,
}

/// Success probability of a scheme whose first splitter has transmittance `t`
/// and whose continuation after `j` subtracted photons succeeds with
/// probability `prior[j]`.
pub fn first_stage_probability(m: usize, n: usize, prior: &[f64], t: f64) -> f64 {
    prior
        .iter()
        .enumerate()
        .take(m - n + 1)
        .map(|(j, p)| binomial(m, j) as f64 * t.powi((m - j) as i32) * (1.0 - t).powi(j as i32) * p)
        .sum()
}

/// `dP/dT` divided by `T^(n-1)`: a polynomial of degree `m - n` whose roots in
/// `[0, 1]` are the interior stationary points of [`first_stage_probability`].
pub fn stationarity_polynomial(m: usize, n: usize, prior: &[f64], t: f64) -> f64 {
    let u = 1.0 - t;
    prior
        .iter()
        .enumerate()
        .take(m - n + 1)
        .map(|(j, p)| {
            let c = binomial(m, j) as f64;
            let e = (m - n - j) as i32;
            let keep = (m - j) as f64 * t.powi(e) * u.powi(j as i32);
            let lose = if j == 0 {
                0.0
            } else {
                j as f64 * t.powi(e + 1) * u.powi(j as i32 - 1)
            };
            c * (keep - lose) * p
        })
        .sum()
}

/// Roots of `f` in `[0, 1]` located by sign changes on a uniform scan and
/// refined by bisection.
fn bracketed_roots(f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut roots = Vec::new();
    let mut a = 0.0;
    let mut fa = f(a);
    if fa == 0.0 {
        roots.push(a);
    }
    for i in 1..=ROOT_SCAN_INTERVALS {
        let b = i as f64 / ROOT_SCAN_INTERVALS as f64;
        let fb = f(b);
        if fb == 0.0 {
            roots.push(b);
        } else if fa != 0.0 && (fa < 0.0) != (fb < 0.0) {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            while hi - lo > ROOT_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
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

/// Maximizes the first-stage success probability over `T ∈ [0, 1]`.
///
/// `prior[j]` is the optimal success probability of the remaining stages
/// after `j` photons were subtracted, for `j = 0..=m-n`. Candidates are the
/// interval endpoints and every bracketed root of
/// [`stationarity_polynomial`]; ties go to the larger transmittance.
pub fn optimal_first_stage(m: usize, n: usize, prior: &[f64]) -> Result<StageOptimum> {
    if m <= n {
        return Err(Error::Domain(format!("need m > n, got m = {m}, n = {n}")));
    }
    if m > MAX_PHOTONS {
        return Err(Error::Domain(format!("m = {m} exceeds {MAX_PHOTONS}")));
    }
    if prior.len() != m - n + 1 {
        return Err(Error::Domain(format!(
            "expected {} prior values, got {}",
            m - n + 1,
            prior.len()
        )));
    }
    for p in prior {
        check_unit("prior probability", *p)?;
    }
    if prior.iter().all(|p| *p == 0.0) {
        return Ok(StageOptimum {
            transmittance: 1.0,
            probability: 0.0,
        });
    }

    let mut candidates = bracketed_roots(|t| stationarity_polynomial(m, n, prior, t));
    candidates.extend([0.0, 1.0]);
    let mut best: Option<StageOptimum> = None;
    for t in candidates {
        let p = first_stage_probability(m, n, prior, t);
        let better = match best {
            None => true,
            Some(b) => {
                p > b.probability + TIE_TOLERANCE || ((p - b.probability).abs() <= TIE_TOLERANCE && t > b.transmittance)
            }
        };
        if better {
            best = Some(StageOptimum {
                transmittance: t,
                probability: p,
            });
        }
    }
    best.ok_or_else(|| Error::Numeric("no candidate transmittance".into()))
}

/// One cell of [`PmaxTable`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableEntry {
    pub probability: f64,
    /// Optimal first-stage transmittance; `None` when no stage is left.
    pub transmittance: Option<f64>,
}

/// Optimal conversion probabilities `P_max(m', n | k)` for `n ≤ m' ≤ m` and
/// `0 ≤ k ≤ k_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct PmaxTable {
    n: usize,
    m: usize,
    k_max: usize,
    /// `entries[m' - n][k]`
    entries: Vec<Vec<TableEntry>>,
}

impl PmaxTable {
    pub fn build(m: usize, n: usize, k_max: usize) -> Result<Self> {
        Self::build_with_limit(m, n, k_max, DEFAULT_WORK_LIMIT)
    }

    /// Fills the table photon surplus by photon surplus, each for `k = 1..=k_max`.
    pub fn build_with_limit(m: usize, n: usize, k_max: usize, work_limit: usize) -> Result<Self> {
        if m < n {
            return Err(Error::Domain(format!("need m ≥ n, got m = {m}, n = {n}")));
        }
        if m > MAX_PHOTONS {
            return Err(Error::Domain(format!("m = {m} exceeds {MAX_PHOTONS}")));
        }
        if k_max == 0 {
            return Err(Error::Domain("need at least one stage".into()));
        }
        let work = (m - n).saturating_mul(k_max);
        if work > work_limit {
            return Err(Error::ResourceLimit {
                what: "(m - n) * k_max",
                requested: work,
                limit: work_limit,
            });
        }

        let done = TableEntry {
            probability: 1.0,
            transmittance: Some(1.0),
        };
        let mut entries = vec![vec![done; k_max + 1]];
        entries[0][0].transmittance = None;
        for surplus in 1..=m - n {
            let mut row = Vec::with_capacity(k_max + 1);
            row.push(TableEntry {
                probability: 0.0,
                transmittance: None,
            });
            for k in 1..=k_max {
                let prior: Vec<f64> = std::iter::once(row[k - 1].probability)
                    .chain((1..=surplus).map(|j| entries[surplus - j][k - 1].probability))
                    .collect();
                let best = optimal_first_stage(n + surplus, n, &prior)?;
                row.push(TableEntry {
                    probability: best.probability,
                    transmittance: Some(best.transmittance),
                });
            }
            entries.push(row);
        }
        Ok(Self { n, m, k_max, entries })
    }

    pub fn target(&self) -> usize {
        self.n
    }

    pub fn max_input(&self) -> usize {
        self.m
    }

    pub fn max_stages(&self) -> usize {
        self.k_max
    }

    pub fn get(&self, m: usize, n: usize, k: usize) -> Option<TableEntry> {
        if n != self.n || m < n {
            return None;
        }
        self.entries.get(m - n)?.get(k).copied()
    }

    /// `P_max(m, n | k)` for this table's target `n`.
    pub fn probability(&self, m: usize, k: usize) -> Option<f64> {
        self.get(m, self.n, k).map(|e| e.probability)
    }

    pub fn first_transmittance(&self, m: usize, k: usize) -> Option<f64> {
        self.get(m, self.n, k).and_then(|e| e.transmittance)
    }

    /// Writes `m,n,k,T1_opt,P_max` rows for every input photon number and
    /// `k ≥ 1`. Pass `Some(m)` to restrict the rows to one input.
    pub fn write_csv<W: Write>(&self, mut w: W, only_input: Option<usize>) -> Result<()> {
        writeln!(w, "m,n,k,T1_opt,P_max")?;
        for (surplus, row) in self.entries.iter().enumerate() {
            let m = self.n + surplus;
            if only_input.is_some_and(|x| x != m) {
                continue;
            }
            for (k, e) in row.iter().enumerate().skip(1) {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    m,
                    self.n,
                    k,
                    format_sig(e.transmittance.unwrap_or(1.0)),
                    format_sig(e.probability)
                )?;
            }
        }
        Ok(())
    }
}

/// Unrolls the optimal adaptive scheme for `|m⟩ → |n⟩` with `k` stages.
///
/// A branch that has already subtracted `m - n` photons passes through the
/// remaining splitters (status `done`); one that subtracted more is a
/// terminal failure. Children are only listed for stages that exist.
pub fn build_policy(m: usize, n: usize, k: usize) -> Result<Policy> {
    let table = PmaxTable::build(m, n, k)?;
    let root = policy_node(&table, m, n, k, 0, 0);
    Policy::new(m, n, k, root)
}

fn policy_node(table: &PmaxTable, m: usize, n: usize, k: usize, used: usize, subtracted: usize) -> PolicyNode {
    if subtracted == m - n {
        return PolicyNode::done();
    }
    if subtracted > m - n {
        return PolicyNode::failed();
    }
    let photons = m - subtracted;
    let t = table
        .first_transmittance(photons, k - used)
        .expect("table covers every reachable subproblem");
    let mut node = PolicyNode::active(t);
    if used + 1 < k {
        for j in 0..=photons {
            node.children
                .insert(j, policy_node(table, m, n, k, used + 1, subtracted + j));
        }
    }
    node
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_block_two_to_one() {
        let s = optimal_first_stage(2, 1, &[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(s.transmittance, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.probability, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn second_block_two_to_one() {
        let s = optimal_first_stage(2, 1, &[0.5, 1.0]).unwrap();
        assert_abs_diff_eq!(s.transmittance, 2.0 / 3.0, epsilon = 1e-11);
        assert_abs_diff_eq!(s.probability, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn three_to_one_single_block() {
        // grid maximum of 3T(1-T)^2, then a Newton polish on its derivative
        let f = |t: f64| 3.0 * t * (1.0 - t).powi(2);
        let mut t = (0..=1_000_000)
            .map(|i| i as f64 * 1e-6)
            .max_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        for _ in 0..5 {
            let d1 = 3.0 * (1.0 - t) * (1.0 - 3.0 * t);
            let d2 = 3.0 * (-(1.0 - 3.0 * t) - 3.0 * (1.0 - t));
            t -= d1 / d2;
        }
        let s = optimal_first_stage(3, 1, &[0.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(s.transmittance, t, epsilon = 1e-11);
        assert_abs_diff_eq!(s.probability, f(t), epsilon = 1e-12);
        assert_abs_diff_eq!(s.transmittance, 1.0 / 3.0, epsilon = 1e-11);
        assert_abs_diff_eq!(s.probability, 4.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_prior() {
        let s = optimal_first_stage(3, 1, &[0.0; 3]).unwrap();
        assert_eq!((s.transmittance, s.probability), (1.0, 0.0));
    }

    #[test]
    fn bad_first_stage_arguments() {
        assert!(optimal_first_stage(1, 1, &[1.0]).is_err());
        assert!(optimal_first_stage(3, 1, &[0.0, 1.0]).is_err());
        assert!(optimal_first_stage(2, 1, &[0.0, 1.5]).is_err());
    }

    #[test]
    fn two_to_one_table() {
        let t = PmaxTable::build(2, 1, 3).unwrap();
        assert_abs_diff_eq!(t.probability(2, 1).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(t.probability(2, 2).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.probability(2, 3).unwrap(), 0.75, epsilon = 1e-12);
        assert_eq!(t.probability(2, 0), Some(0.0));
        assert_eq!(t.probability(1, 3), Some(1.0));
        assert_eq!(t.get(2, 0, 1), None);
    }

    #[test]
    fn three_to_two_table() {
        // 6T - (23/3)T^2 = 0 gives T = 18/23; dense grid confirms the maximum
        let f = |t: f64| 3.0 * t * t - 23.0 / 9.0 * t.powi(3);
        let grid_best = (0..=1_000_000).map(|i| f(i as f64 * 1e-6)).fold(f64::MIN, f64::max);
        let t = PmaxTable::build(3, 2, 2).unwrap();
        assert_abs_diff_eq!(t.probability(3, 1).unwrap(), 4.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.probability(3, 2).unwrap(), 324.0 / 529.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.probability(3, 2).unwrap(), grid_best, epsilon = 1e-10);
        assert_abs_diff_eq!(t.first_transmittance(3, 2).unwrap(), 18.0 / 23.0, epsilon = 1e-10);
    }

    #[test]
    fn nothing_to_subtract() {
        let t = PmaxTable::build(4, 4, 3).unwrap();
        for k in 0..=3 {
            assert_eq!(t.probability(4, k), Some(1.0));
        }
    }

    #[test]
    fn resource_guard() {
        assert!(matches!(
            PmaxTable::build_with_limit(10, 0, 20, 100),
            Err(Error::ResourceLimit { requested: 200, .. })
        ));
        assert!(PmaxTable::build(2, 1, 0).is_err());
        assert!(PmaxTable::build(1, 2, 1).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        PmaxTable::build(2, 1, 2).unwrap().write_csv(&mut buf, Some(2)).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "m,n,k,T1_opt,P_max\n2,1,1,0.5,0.5\n2,1,2,0.666667,0.666667\n"
        );
    }

    #[test]
    fn policy_for_two_stages() {
        let p = build_policy(2, 1, 2).unwrap();
        assert_abs_diff_eq!(p.root.transmittance, 2.0 / 3.0, epsilon = 1e-11);
        assert_eq!(p.root.status, NodeStatus::Active);
        let on0 = &p.root.children[&0];
        assert_eq!(on0.status, NodeStatus::Active);
        assert_abs_diff_eq!(on0.transmittance, 0.5, epsilon = 1e-11);
        let on1 = &p.root.children[&1];
        assert_eq!((on1.status, on1.transmittance), (NodeStatus::Done, 1.0));
        assert_eq!(p.root.children[&2].status, NodeStatus::Failed);
    }

    #[test]
    fn single_stage_policies_have_no_children() {
        let p = build_policy(2, 1, 1).unwrap();
        assert_abs_diff_eq!(p.root.transmittance, 0.5, epsilon = 1e-12);
        assert!(p.root.children.is_empty());
        let p = build_policy(3, 1, 1).unwrap();
        assert_abs_diff_eq!(p.root.transmittance, 1.0 / 3.0, epsilon = 1e-11);
        assert!(p.root.children.is_empty());
    }

    #[test]
    fn trivial_policy() {
        let p = build_policy(3, 3, 1).unwrap();
        assert_eq!(p.root.status, NodeStatus::Done);
        assert_eq!(p.root.transmittance, 1.0);
    }

    #[test]
    fn stationary_points_are_roots() {
        for (m, n, k) in [(4, 1, 3), (5, 0, 2), (6, 2, 4), (8, 3, 3)] {
            let table = PmaxTable::build(m, n, k).unwrap();
            for mm in n + 1..=m {
                for kk in 1..=k {
                    let prior: Vec<f64> = (0..=mm - n)
                        .map(|j| table.probability(mm - j, kk - 1).unwrap())
                        .collect();
                    let t = table.first_transmittance(mm, kk).unwrap();
                    assert!((0.0..=1.0).contains(&t));
                    if t > 0.0 && t < 1.0 {
                        assert!(stationarity_polynomial(mm, n, &prior, t).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
