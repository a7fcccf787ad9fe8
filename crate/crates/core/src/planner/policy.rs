use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::fock::{BeamSplitter, DetectorModel, LossChannel, PhotonNumberMixture, WeightedMixture, MAX_PHOTONS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    /// Taps the beam with the node's transmittance.
    Active,
    /// Target reached; every later splitter is transparent.
    Done,
    /// Too many photons subtracted; the state is lost.
    Failed,
}

/// Decision for one stage given the outcome history that led to it.
///
/// Children are keyed by the count reported at this stage. A missing child
/// means the next stage passes the beam through (`T = 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNode {
    #[serde(rename = "T")]
    pub transmittance: f64,
    #[serde(default)]
    pub children: BTreeMap<usize, PolicyNode>,
    pub status: NodeStatus,
}

impl PolicyNode {
    pub fn active(transmittance: f64) -> Self {
        Self {
            transmittance,
            children: BTreeMap::new(),
            status: NodeStatus::Active,
        }
    }

    pub fn done() -> Self {
        Self {
            transmittance: 1.0,
            children: BTreeMap::new(),
            status: NodeStatus::Done,
        }
    }

    pub fn failed() -> Self {
        Self {
            transmittance: 1.0,
            children: BTreeMap::new(),
            status: NodeStatus::Failed,
        }
    }

    pub fn with_child(mut self, outcome: usize, child: PolicyNode) -> Self {
        self.children.insert(outcome, child);
        self
    }

    /// Transmittance actually applied by this stage.
    pub fn effective_transmittance(&self) -> f64 {
        match self.status {
            NodeStatus::Active => self.transmittance,
            NodeStatus::Done | NodeStatus::Failed => 1.0,
        }
    }

    fn depth(&self) -> usize {
        1 + self.children.values().map(Self::depth).max().unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        check_unit("policy transmittance", self.transmittance)?;
        self.children.values().try_for_each(Self::validate)
    }
}

/// Adaptive subtraction scheme for `|m⟩ → |n⟩` over `k` stages.
///
/// Serializes as the root node's `{"T", "children", "status"}` object with
/// `m`, `n` and `k` alongside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyRepr", into = "PolicyRepr")]
pub struct Policy {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub root: PolicyNode,
}

#[derive(Serialize, Deserialize)]
struct PolicyRepr {
    m: usize,
    n: usize,
    k: usize,
    #[serde(rename = "T")]
    transmittance: f64,
    #[serde(default)]
    children: BTreeMap<usize, PolicyNode>,
    status: NodeStatus,
}

impl TryFrom<PolicyRepr> for Policy {
    type Error = Error;

    fn try_from(r: PolicyRepr) -> Result<Self> {
        let root = PolicyNode {
            transmittance: r.transmittance,
            children: r.children,
            status: r.status,
        };
        Policy::new(r.m, r.n, r.k, root)
    }
}

impl From<Policy> for PolicyRepr {
    fn from(p: Policy) -> Self {
        Self {
            m: p.m,
            n: p.n,
            k: p.k,
            transmittance: p.root.transmittance,
            children: p.root.children,
            status: p.root.status,
        }
    }
}

impl Policy {
    pub fn new(m: usize, n: usize, k: usize, root: PolicyNode) -> Result<Self> {
        let policy = Self { m, n, k, root };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n > self.m || self.m > MAX_PHOTONS {
            return Err(Error::Domain(format!(
                "policy converts {} to {} photons",
                self.m, self.n
            )));
        }
        if self.k == 0 {
            return Err(Error::Domain("policy needs at least one stage".into()));
        }
        let depth = self.root.depth();
        if depth > self.k {
            return Err(Error::Domain(format!(
                "policy tree has depth {depth} but only {} stages",
                self.k
            )));
        }
        self.root.validate()
    }

    /// Non-adaptive scheme: stage `i` always uses `transmittances[i]`.
    ///
    /// Branches that overshoot `m - n` are marked failed; nothing is switched
    /// off once the target is reached.
    pub fn fixed(m: usize, n: usize, transmittances: &[f64]) -> Result<Self> {
        fn build(m: usize, n: usize, ts: &[f64], subtracted: usize) -> PolicyNode {
            if subtracted > m - n {
                return PolicyNode::failed();
            }
            let mut node = PolicyNode::active(ts[0]);
            if ts.len() > 1 {
                for j in 0..=m - subtracted {
                    node.children.insert(j, build(m, n, &ts[1..], subtracted + j));
                }
            }
            node
        }
        if transmittances.is_empty() || n > m {
            return Err(Error::Domain("fixed policy needs m ≥ n and at least one stage".into()));
        }
        Self::new(m, n, transmittances.len(), build(m, n, transmittances, 0))
    }

    /// Two-stage `|2⟩ → |1⟩` scheme that switches the second splitter to
    /// `T = 1` after a first-stage detection and to `t2` otherwise.
    pub fn two_to_one_feedforward(t1: f64, t2: f64) -> Result<Self> {
        let root = PolicyNode::active(t1)
            .with_child(0, PolicyNode::active(t2))
            .with_child(1, PolicyNode::done())
            .with_child(2, PolicyNode::failed());
        Self::new(2, 1, 2, root)
    }

    /// Node reached after the given sequence of outcomes, if it is listed.
    pub fn node_at(&self, history: &[usize]) -> Option<&PolicyNode> {
        let mut node = &self.root;
        for outcome in history {
            if node.status != NodeStatus::Active {
                return None;
            }
            node = node.children.get(outcome)?;
        }
        Some(node)
    }

    /// Transmittance applied at stage `history.len()` after `history`.
    pub fn transmittance_at(&self, history: &[usize]) -> f64 {
        self.node_at(history).map_or(1.0, PolicyNode::effective_transmittance)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Exact outcome statistics of a policy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyEvaluation {
    pub success_probability: f64,
    pub failure_probability: f64,
    /// Output photon-number distribution conditioned on success.
    pub output: Option<PhotonNumberMixture>,
}

/// Enumerates every outcome history of `policy` acting on `|m⟩`.
///
/// A run succeeds when the reported counts add up to `m - policy.n` after
/// the last stage.
pub fn evaluate_policy(policy: &Policy, m: usize, det: &DetectorModel) -> Result<PolicyEvaluation> {
    evaluate_policy_lossy(policy, m, det, 1.0)
}

/// As [`evaluate_policy`], with a loss channel of transmittance `eta_o` in
/// front of every stage after the first.
pub fn evaluate_policy_lossy(policy: &Policy, m: usize, det: &DetectorModel, eta_o: f64) -> Result<PolicyEvaluation> {
    let loss = LossChannel::new(eta_o)?;
    if m < policy.n || m > MAX_PHOTONS {
        return Err(Error::Domain(format!("cannot convert {m} photons to {}", policy.n)));
    }
    let mut walk = Walk {
        det,
        loss,
        depth: policy.k,
        goal: m - policy.n,
        success: WeightedMixture::new(m),
        failure: 0.0,
    };
    let mut start = WeightedMixture::new(m);
    start.add(m, 1.0);
    walk.visit(Some(&policy.root), 0, 0, start);
    Ok(PolicyEvaluation {
        success_probability: walk.success.total(),
        failure_probability: walk.failure,
        output: walk.success.normalize(),
    })
}

struct Walk<'a> {
    det: &'a DetectorModel,
    loss: LossChannel,
    depth: usize,
    goal: usize,
    success: WeightedMixture,
    failure: f64,
}

impl Walk<'_> {
    fn visit(&mut self, node: Option<&PolicyNode>, stage: usize, detected: usize, state: WeightedMixture) {
        let failed = node.is_some_and(|n| n.status == NodeStatus::Failed);
        if detected > self.goal || failed {
            self.failure += state.total();
            return;
        }
        if stage == self.depth {
            if detected == self.goal {
                self.success.merge(&state);
            } else {
                self.failure += state.total();
            }
            return;
        }
        let state = if stage > 0 {
            self.loss.apply_weighted(&state)
        } else {
            state
        };
        let t = node.map_or(1.0, PolicyNode::effective_transmittance);
        let splitter = BeamSplitter::new(t).expect("validated transmittance");

        let mut branches: Vec<WeightedMixture> = Vec::new();
        for (photons, w) in state.weights().iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for (reflected, pr) in splitter.reflection_pmf(photons).into_iter().enumerate() {
                if pr == 0.0 {
                    continue;
                }
                for (label, pl) in self.det.response(reflected).into_iter().enumerate() {
                    if pl == 0.0 {
                        continue;
                    }
                    if branches.len() <= label {
                        branches.resize_with(label + 1, || WeightedMixture::new(0));
                    }
                    branches[label].add(photons - reflected, w * pr * pl);
                }
            }
        }
        let active = node.filter(|n| n.status == NodeStatus::Active);
        for (label, branch) in branches.into_iter().enumerate() {
            if branch.total() > 0.0 {
                let child = active.and_then(|n| n.children.get(&label));
                self.visit(child, stage + 1, detected + label, branch);
            }
        }
    }
}
