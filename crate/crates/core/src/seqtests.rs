//! Online sequential test kernels: rank, t, random walk, and the
//! Huber-robustified M-t, M-random-walk and M^2-random-walk variants,
//! each with two-sided stopping thresholds.
//!
//! Random-walk kinds are iterative with O(1) state. The rank test needs
//! the full sample buffer by definition, and the M-t denominator depends
//! on the final sample mean, so those two buffer their samples.

use crate::{Error, Result};

/// Huber clip: `z` clamped to `[-K, K]`. Odd, non-decreasing, bounded.
pub fn psi(z: f64, clip: f64) -> f64 {
    z.clamp(-clip, clip)
}

/// Node participation under delta-truncation: a node with channel-gain
/// magnitude at or below `delta` never decides and never transmits.
pub fn delta_gate(gain_magnitude: f64, delta: f64) -> bool {
    gain_magnitude > delta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestKind {
    Rank,
    TTest,
    RandomWalk,
    MT,
    MRandomWalk,
    M2RandomWalk,
}

impl TestKind {
    pub fn default_min_samples(self) -> u64 {
        // t-style kinds need n >= 2 for the sample dispersion.
        match self {
            TestKind::TTest | TestKind::MT => 2,
            _ => 1,
        }
    }
}

/// Full specification of one sequential test.
///
/// `gamma0` and `gamma1` are positive magnitudes; the statistic continues
/// while it stays inside `(-gamma0, gamma1)`.
#[derive(Debug, Clone)]
pub struct TestSpec {
    pub kind: TestKind,
    pub mu0: f64,
    pub mu1: f64,
    /// Outer Huber clip K (MT / MRandomWalk / M2RandomWalk).
    pub clip: f64,
    /// Inner clip K1 applied to raw samples (M2RandomWalk only).
    pub inner_clip: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub min_samples: u64,
}

impl TestSpec {
    pub fn new(kind: TestKind, mu0: f64, mu1: f64, gamma0: f64, gamma1: f64) -> Self {
        TestSpec {
            kind,
            mu0,
            mu1,
            clip: 5.0,
            inner_clip: 200.0,
            gamma0,
            gamma1,
            min_samples: kind.default_min_samples(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu1 <= self.mu0 {
            return Err(Error::Config(format!("need mu1 > mu0, got {} <= {}", self.mu1, self.mu0)));
        }
        if self.gamma0 <= 0.0 || self.gamma1 <= 0.0 {
            return Err(Error::Config("thresholds must be positive magnitudes".into()));
        }
        match self.kind {
            TestKind::MT | TestKind::MRandomWalk | TestKind::M2RandomWalk if self.clip <= 0.0 => {
                return Err(Error::Config("Huber clip K must be > 0".into()));
            }
            TestKind::M2RandomWalk if self.inner_clip <= 0.0 => {
                return Err(Error::Config("inner clip K1 must be > 0".into()));
            }
            _ => {}
        }
        if self.min_samples < 1 {
            return Err(Error::Config("min_samples must be >= 1".into()));
        }
        Ok(())
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.mu0 + self.mu1)
    }
}

/// Running state of one sequential test.
#[derive(Debug, Clone)]
pub enum TestState {
    /// Random-walk kinds: cumulative statistic and sample count.
    Walk { t: f64, n: u64 },
    /// t test: streaming count, mean and centered second moment.
    Moments { n: u64, mean: f64, m2: f64 },
    /// Rank and M-t: full sample buffer.
    Buffer { xs: Vec<f64> },
}

impl TestState {
    pub fn new(kind: TestKind) -> Self {
        match kind {
            TestKind::RandomWalk | TestKind::MRandomWalk | TestKind::M2RandomWalk => {
                TestState::Walk { t: 0.0, n: 0 }
            }
            TestKind::TTest => TestState::Moments { n: 0, mean: 0.0, m2: 0.0 },
            TestKind::Rank | TestKind::MT => TestState::Buffer { xs: Vec::new() },
        }
    }

    pub fn count(&self) -> u64 {
        match self {
            TestState::Walk { n, .. } | TestState::Moments { n, .. } => *n,
            TestState::Buffer { xs } => xs.len() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    DecideH0,
    DecideH1,
}

/// Absorb one observation into the test state.
pub fn update(state: &mut TestState, spec: &TestSpec, x: f64) {
    let center = spec.center();
    match (spec.kind, state) {
        (TestKind::RandomWalk, TestState::Walk { t, n }) => {
            *t += x - center;
            *n += 1;
        }
        (TestKind::MRandomWalk, TestState::Walk { t, n }) => {
            *t += psi(x - center, spec.clip);
            *n += 1;
        }
        (TestKind::M2RandomWalk, TestState::Walk { t, n }) => {
            let pre = psi(x, spec.inner_clip);
            *t += psi(pre - center, spec.clip);
            *n += 1;
        }
        (TestKind::TTest, TestState::Moments { n, mean, m2 }) => {
            // Welford recurrence.
            *n += 1;
            let delta = x - *mean;
            *mean += delta / *n as f64;
            *m2 += delta * (x - *mean);
        }
        (TestKind::Rank | TestKind::MT, TestState::Buffer { xs }) => {
            xs.push(x);
        }
        _ => unreachable!("state shape does not match test kind"),
    }
}

/// Current value of the test statistic, or `None` when it is not yet
/// defined (too few samples, or zero sample dispersion).
pub fn statistic(state: &TestState, spec: &TestSpec) -> Option<f64> {
    match (spec.kind, state) {
        (TestKind::RandomWalk | TestKind::MRandomWalk | TestKind::M2RandomWalk, TestState::Walk { t, .. }) => {
            Some(*t)
        }
        (TestKind::TTest, TestState::Moments { n, mean, m2 }) => {
            if *n < 2 {
                return None;
            }
            let s = (m2 / (*n as f64 - 1.0)).sqrt();
            if s == 0.0 {
                return None;
            }
            // As written in the source statistic: factor n, not sqrt(n).
            Some(*n as f64 * (mean - spec.center()) / s)
        }
        (TestKind::MT, TestState::Buffer { xs }) => {
            let n = xs.len();
            if n < 2 {
                return None;
            }
            let mean: f64 = xs.iter().sum::<f64>() / n as f64;
            let num: f64 = xs.iter().map(|x| psi(x - spec.center(), spec.clip)).sum();
            let den: f64 = xs.iter().map(|x| psi(x - mean, spec.clip).powi(2)).sum();
            if den == 0.0 {
                return None;
            }
            Some(num / den.sqrt())
        }
        (TestKind::Rank, TestState::Buffer { xs }) => {
            let n = xs.len();
            if n == 0 {
                return None;
            }
            let ys: Vec<f64> = xs.iter().map(|x| x - spec.center()).collect();
            let ranks = midranks(&ys);
            let t: f64 = ys
                .iter()
                .zip(&ranks)
                .map(|(y, r)| y.signum() * r / (n as f64 + 1.0))
                .sum();
            Some(t)
        }
        _ => unreachable!("state shape does not match test kind"),
    }
}

/// Ranks of `|y|` in ascending order, ties resolved by midranks.
fn midranks(ys: &[f64]) -> Vec<f64> {
    let n = ys.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ys[a].abs().partial_cmp(&ys[b].abs()).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && ys[order[j + 1]].abs() == ys[order[i]].abs() {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Evaluate the stopping rule. Barriers are inclusive: `T >= gamma1`
/// decides H1, `T <= -gamma0` decides H0.
pub fn check(state: &TestState, spec: &TestSpec) -> Decision {
    if state.count() < spec.min_samples {
        return Decision::Continue;
    }
    match statistic(state, spec) {
        None => Decision::Continue,
        Some(t) => {
            if t >= spec.gamma1 {
                Decision::DecideH1
            } else if t <= -spec.gamma0 {
                Decision::DecideH0
            } else {
                Decision::Continue
            }
        }
    }
}
