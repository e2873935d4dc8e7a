//! Distributed state machines: local sensing nodes (energy pipeline ->
//! sequential test -> persistent +-b transmission) and the fusion center
//! (MAC observation -> sequential test -> global decision), plus the
//! per-trial executor.
//!
//! One FC slot corresponds to one local energy sample, i.e. M raw samples
//! per node, and one MAC use.

use crate::channel::{
    energy_block, mac_observation, raw_sample, EnergyConfig, FadingMode, FadingModel, Hypothesis,
    SignalModel,
};
use crate::distributions::{DistributionSpec, RngStream};
use crate::seqtests::{check, delta_gate, update, Decision, TestSpec, TestState};
use crate::Result;

/// Static configuration of one local sensing node.
#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub signal: SignalModel,
    /// Energy-sample formation; `None` feeds raw samples to the test
    /// directly (mean detection).
    pub energy: Option<EnergyConfig>,
    pub test: TestSpec,
    /// Fading of the primary-to-node sensing channel.
    pub sensing_fading: FadingModel,
    /// Transmission magnitudes for H0 / H1 local decisions.
    pub b0: f64,
    pub b1: f64,
    /// Gain-magnitude truncation; 0 disables the gate.
    pub delta: f64,
}

impl NodeConfig {
    pub fn validate(&self) -> Result<()> {
        self.signal.validate()?;
        if let Some(energy) = &self.energy {
            energy.validate()?;
        }
        self.test.validate()?;
        if self.b0 <= 0.0 || self.b1 <= 0.0 {
            return Err(crate::Error::Config("b0 and b1 must be positive".into()));
        }
        if self.delta < 0.0 {
            return Err(crate::Error::Config("delta must be non-negative".into()));
        }
        Ok(())
    }

    /// Raw samples consumed per slot (1 for mean detection).
    pub fn block_len(&self) -> usize {
        self.energy.as_ref().map(|e| e.block_len).unwrap_or(1)
    }
}

/// Full system configuration for one distributed experiment.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub nodes: Vec<NodeConfig>,
    pub fc_noise: DistributionSpec,
    pub fc_test: TestSpec,
    /// Fading of the reporting MAC from nodes to the FC.
    pub reporting_fading: FadingModel,
    pub partial_coherence: bool,
    pub max_slots: u64,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(crate::Error::Config("need at least one node".into()));
        }
        for node in &self.nodes {
            node.validate()?;
        }
        self.fc_noise.validate()?;
        self.fc_test.validate()?;
        if self.max_slots < 1 {
            return Err(crate::Error::Config("max_slots must be >= 1".into()));
        }
        Ok(())
    }
}

/// Live state of one local node during a trial.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub test: TestState,
    /// Latest decision region the test visited; transmission follows it.
    pub latched: Option<Hypothesis>,
    pub gated: bool,
    /// Slot of the first barrier crossing, if any.
    pub first_decision_slot: Option<u64>,
    pub first_decision: Option<Hypothesis>,
    block: Vec<f64>,
    slot: u64,
}

impl NodeState {
    pub fn new(cfg: &NodeConfig, gated: bool) -> Self {
        NodeState {
            test: TestState::new(cfg.test.kind),
            latched: None,
            gated,
            first_decision_slot: None,
            first_decision: None,
            block: Vec::with_capacity(cfg.block_len()),
            slot: 0,
        }
    }

    /// Current transmission: +-b once latched, 0 while silent or gated.
    pub fn transmission(&self, cfg: &NodeConfig) -> f64 {
        if self.gated {
            return 0.0;
        }
        match self.latched {
            Some(Hypothesis::H1) => cfg.b1,
            Some(Hypothesis::H0) => -cfg.b0,
            None => 0.0,
        }
    }
}

/// Feed one raw sample to a node; returns its current transmission.
///
/// Gated nodes short-circuit to 0 without consuming test state. When the
/// M-th raw sample of a block arrives, the energy sample is formed and the
/// test updated; the latched decision is re-evaluated from the current
/// test region, so a walk that later crosses the opposite barrier switches
/// its transmission.
pub fn node_step(node: &mut NodeState, cfg: &NodeConfig, raw: f64) -> f64 {
    if node.gated {
        return 0.0;
    }
    let observation = match &cfg.energy {
        Some(energy) => {
            node.block.push(raw);
            if node.block.len() < energy.block_len {
                return node.transmission(cfg);
            }
            let e = energy_block(&node.block, energy).expect("block length by construction");
            node.block.clear();
            e
        }
        None => raw,
    };
    {
        node.slot += 1;
        update(&mut node.test, &cfg.test, observation);
        match check(&node.test, &cfg.test) {
            Decision::DecideH1 => {
                if node.first_decision.is_none() {
                    node.first_decision = Some(Hypothesis::H1);
                    node.first_decision_slot = Some(node.slot);
                }
                node.latched = Some(Hypothesis::H1);
            }
            Decision::DecideH0 => {
                if node.first_decision.is_none() {
                    node.first_decision = Some(Hypothesis::H0);
                    node.first_decision_slot = Some(node.slot);
                }
                node.latched = Some(Hypothesis::H0);
            }
            Decision::Continue => {}
        }
    }
    node.transmission(cfg)
}

/// Live state of the fusion center during a trial.
#[derive(Debug, Clone)]
pub struct FcState {
    pub test: TestState,
    pub stopped: Option<(Hypothesis, u64)>,
    slot: u64,
}

impl FcState {
    pub fn new(spec: &TestSpec) -> Self {
        FcState { test: TestState::new(spec.kind), stopped: None, slot: 0 }
    }
}

/// Feed one MAC observation to the FC.
pub fn fc_step(fc: &mut FcState, spec: &TestSpec, y: f64) {
    if fc.stopped.is_some() {
        return;
    }
    fc.slot += 1;
    update(&mut fc.test, spec, y);
    match check(&fc.test, spec) {
        Decision::DecideH1 => fc.stopped = Some((Hypothesis::H1, fc.slot)),
        Decision::DecideH0 => fc.stopped = Some((Hypothesis::H0, fc.slot)),
        Decision::Continue => {}
    }
}

/// Outcome of one simulated trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    /// FC decision; `None` if the trial hit `max_slots` without stopping.
    pub decision: Option<Hypothesis>,
    /// FC stopping slot (or `max_slots` when truncated).
    pub stop_slot: u64,
    pub node_stop_slots: Vec<Option<u64>>,
    pub node_first_decisions: Vec<Option<Hypothesis>>,
    pub hypothesis: Hypothesis,
    pub truncated: bool,
    /// Whole trial gated out (single-node delta-truncation only).
    pub gated: bool,
}

/// Simulate one distributed trial end to end.
///
/// Gain draw order is fixed (sensing gains, then reporting gains, then the
/// slot loop) so identical `(config, hypothesis, stream)` reproduce the
/// trial bit-exactly.
pub fn run_trial(cfg: &SystemConfig, hypothesis: Hypothesis, stream: RngStream) -> TrialResult {
    let mut rng = stream.rng();
    let n_nodes = cfg.nodes.len();

    // Slow sensing gains are fixed for the trial; fast gains are drawn per
    // raw sample inside the loop. The delta gate reads the true |H_l| of
    // slow (or constant) gains.
    let trial_gains: Vec<Option<f64>> = cfg
        .nodes
        .iter()
        .map(|n| match n.sensing_fading.mode {
            FadingMode::Fast => None,
            _ => Some(n.sensing_fading.draw_gain(&mut rng)),
        })
        .collect();
    let mut nodes: Vec<NodeState> = cfg
        .nodes
        .iter()
        .zip(&trial_gains)
        .map(|(n, g)| {
            let gated = match g {
                Some(g) => !delta_gate(g.abs(), n.delta),
                None => false, // no per-trial gain to gate on under fast fading
            };
            NodeState::new(n, gated)
        })
        .collect();

    let slow_report_gains: Vec<Option<f64>> = (0..n_nodes)
        .map(|_| match cfg.reporting_fading.mode {
            FadingMode::Fast => None,
            _ => Some(cfg.reporting_fading.draw_gain(&mut rng)),
        })
        .collect();

    let mut fc = FcState::new(&cfg.fc_test);
    let mut transmissions = vec![0.0; n_nodes];
    let mut report_gains = vec![0.0; n_nodes];

    while fc.stopped.is_none() && fc.slot < cfg.max_slots {
        for (i, node_cfg) in cfg.nodes.iter().enumerate() {
            let mut tx = nodes[i].transmission(node_cfg);
            for _ in 0..node_cfg.block_len() {
                let gain = match trial_gains[i] {
                    Some(g) => g,
                    None => node_cfg.sensing_fading.draw_gain(&mut rng),
                };
                let raw = raw_sample(hypothesis, &node_cfg.signal, gain, &mut rng);
                tx = node_step(&mut nodes[i], node_cfg, raw);
            }
            transmissions[i] = tx;
        }
        for (i, slot_gain) in report_gains.iter_mut().enumerate() {
            *slot_gain = match slow_report_gains[i] {
                Some(g) => g,
                None => cfg.reporting_fading.draw_gain(&mut rng),
            };
        }
        let y = mac_observation(
            &transmissions,
            &report_gains,
            &cfg.fc_noise,
            cfg.partial_coherence,
            &mut rng,
        )
        .expect("lists sized by construction");
        fc_step(&mut fc, &cfg.fc_test, y);
    }

    let (decision, stop_slot, truncated) = match fc.stopped {
        Some((h, n)) => (Some(h), n, false),
        None => (None, cfg.max_slots, true),
    };
    TrialResult {
        decision,
        stop_slot,
        node_stop_slots: nodes.iter().map(|n| n.first_decision_slot).collect(),
        node_first_decisions: nodes.iter().map(|n| n.first_decision).collect(),
        hypothesis,
        truncated,
        gated: false,
    }
}

/// Simulate one single-node trial: the node's own test decides, no FC.
///
/// A gated trial (slow-fading gain magnitude at or below delta) returns
/// immediately with no decision; the caller accounts for it per the
/// delta-truncation error budget.
pub fn run_single_trial(
    cfg: &NodeConfig,
    hypothesis: Hypothesis,
    stream: RngStream,
    max_slots: u64,
) -> TrialResult {
    let mut rng = stream.rng();
    let trial_gain = match cfg.sensing_fading.mode {
        FadingMode::Fast => None,
        _ => Some(cfg.sensing_fading.draw_gain(&mut rng)),
    };
    if let Some(g) = trial_gain {
        if !delta_gate(g.abs(), cfg.delta) {
            return TrialResult {
                decision: None,
                stop_slot: 0,
                node_stop_slots: vec![None],
                node_first_decisions: vec![None],
                hypothesis,
                truncated: false,
                gated: true,
            };
        }
    }
    let mut node = NodeState::new(cfg, false);
    while node.first_decision.is_none() && node.slot < max_slots {
        for _ in 0..cfg.block_len() {
            let gain = match trial_gain {
                Some(g) => g,
                None => cfg.sensing_fading.draw_gain(&mut rng),
            };
            let raw = raw_sample(hypothesis, &cfg.signal, gain, &mut rng);
            node_step(&mut node, cfg, raw);
        }
    }
    let truncated = node.first_decision.is_none();
    TrialResult {
        decision: node.first_decision,
        stop_slot: node.first_decision_slot.unwrap_or(max_slots),
        node_stop_slots: vec![node.first_decision_slot],
        node_first_decisions: vec![node.first_decision],
        hypothesis,
        truncated,
        gated: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{bpsk_alphabet, OutlierPlacement};
    use crate::seqtests::TestKind;

    fn basic_node(test: TestSpec) -> NodeConfig {
        NodeConfig {
            signal: SignalModel {
                alphabet: bpsk_alphabet(),
                amplitude: 1.0,
                noise: DistributionSpec::Gaussian { mean: 0.0, variance: 1.0 },
                emi: None,
                outlier: None,
            },
            energy: None,
            test,
            sensing_fading: FadingModel::none(),
            b0: 1.0,
            b1: 1.0,
            delta: 0.0,
        }
    }

    fn near_zero_noise() -> DistributionSpec {
        DistributionSpec::Gaussian { mean: 0.0, variance: 1e-300 }
    }

    #[test]
    fn latched_node_keeps_transmitting() {
        let cfg = basic_node(TestSpec::new(TestKind::RandomWalk, -1.0, 1.0, 2.0, 2.0));
        let mut node = NodeState::new(&cfg, false);
        // Push the walk over gamma1, then feed neutral samples.
        assert_eq!(node_step(&mut node, &cfg, 5.0), 1.0);
        for _ in 0..10 {
            assert_eq!(node_step(&mut node, &cfg, 0.0), 1.0);
        }
    }

    #[test]
    fn silent_while_undecided() {
        let cfg = basic_node(TestSpec::new(TestKind::RandomWalk, -1.0, 1.0, 5.0, 5.0));
        let mut node = NodeState::new(&cfg, false);
        assert_eq!(node_step(&mut node, &cfg, 0.1), 0.0);
    }

    #[test]
    fn transmission_flips_at_crossing_slot() {
        let cfg = basic_node(TestSpec::new(TestKind::RandomWalk, -1.0, 1.0, 2.0, 2.0));
        let mut node = NodeState::new(&cfg, false);
        assert_eq!(node_step(&mut node, &cfg, 1.0), 0.0); // T = 1
        assert_eq!(node_step(&mut node, &cfg, 1.5), 1.0); // T = 2.5 >= 2
        assert_eq!(node.first_decision_slot, Some(2));
    }

    #[test]
    fn opposite_crossing_switches_transmission() {
        let cfg = basic_node(TestSpec::new(TestKind::RandomWalk, -1.0, 1.0, 2.0, 2.0));
        let mut node = NodeState::new(&cfg, false);
        node_step(&mut node, &cfg, 3.0); // latch H1
        assert_eq!(node.transmission(&cfg), 1.0);
        node_step(&mut node, &cfg, -8.0); // walk now at -5: latch H0
        assert_eq!(node.transmission(&cfg), -1.0);
        // First decision is not rewritten.
        assert_eq!(node.first_decision, Some(Hypothesis::H1));
    }

    #[test]
    fn gated_node_stays_silent() {
        let mut cfg = basic_node(TestSpec::new(TestKind::RandomWalk, -1.0, 1.0, 0.5, 0.5));
        cfg.delta = f64::INFINITY;
        let mut node = NodeState::new(&cfg, true);
        for _ in 0..20 {
            assert_eq!(node_step(&mut node, &cfg, 100.0), 0.0);
        }
        assert!(node.first_decision.is_none());
    }

    #[test]
    fn fc_stops_on_crossing() {
        let spec = TestSpec::new(TestKind::RandomWalk, -1.0, 1.0, 5.0, 5.0);
        let mut fc = FcState::new(&spec);
        fc_step(&mut fc, &spec, 4.9);
        assert!(fc.stopped.is_none());
        fc_step(&mut fc, &spec, 0.2);
        assert_eq!(fc.stopped, Some((Hypothesis::H1, 2)));
        // Steps after stopping are ignored.
        fc_step(&mut fc, &spec, -100.0);
        assert_eq!(fc.stopped, Some((Hypothesis::H1, 2)));
    }

    fn deterministic_system() -> SystemConfig {
        // Noise-free everywhere; H1 drives every walk deterministically.
        let mut sig = SignalModel {
            alphabet: vec![(1.0, 1.0)],
            amplitude: 1.0,
            noise: near_zero_noise(),
            emi: None,
            outlier: None,
        };
        sig.outlier = None;
        let node_test = TestSpec::new(TestKind::RandomWalk, 0.0, 1.0, 2.0, 2.0);
        let node = NodeConfig {
            signal: sig,
            energy: Some(EnergyConfig { block_len: 1, exponent: 2.0 }),
            test: node_test,
            sensing_fading: FadingModel::none(),
            b0: 1.0,
            b1: 1.0,
            delta: 0.0,
        };
        let mut fc_test = TestSpec::new(TestKind::M2RandomWalk, -1.0, 1.0, 4.0, 4.0);
        fc_test.inner_clip = 1e6;
        fc_test.clip = 1.0;
        SystemConfig {
            nodes: vec![node; 2],
            fc_noise: near_zero_noise(),
            fc_test,
            reporting_fading: FadingModel::none(),
            partial_coherence: false,
            max_slots: 1000,
        }
    }

    #[test]
    fn deterministic_trial_matches_hand_recursion() {
        // Node energy under H1 is exactly 1 per slot; walk center 0.5, so
        // T_n = n/2 crosses gamma1 = 2 at slot 4 and both nodes transmit
        // +1 from that slot on. FC increment psi(2 - 0; 1) = 1 from slot 4
        // crosses beta1 = 4 at slot 7.
        let cfg = deterministic_system();
        let r = run_trial(&cfg, Hypothesis::H1, RngStream::new(1, 0));
        assert_eq!(r.decision, Some(Hypothesis::H1));
        assert_eq!(r.node_stop_slots, vec![Some(4), Some(4)]);
        assert_eq!(r.stop_slot, 7);
        assert!(!r.truncated);
    }

    #[test]
    fn trial_is_deterministic() {
        let cfg = deterministic_system();
        let a = run_trial(&cfg, Hypothesis::H1, RngStream::new(42, 7));
        let b = run_trial(&cfg, Hypothesis::H1, RngStream::new(42, 7));
        assert_eq!(a.stop_slot, b.stop_slot);
        assert_eq!(a.decision, b.decision);
        assert_eq!(a.node_stop_slots, b.node_stop_slots);
    }

    #[test]
    fn all_gated_fc_decides_by_symmetry() {
        // All nodes gated: FC increments are psi(psi1(Z) - 0) with
        // symmetric Z; P(H1 decision) ~ 0.5 over 1e4 trials.
        let mut cfg = deterministic_system();
        for n in &mut cfg.nodes {
            n.delta = f64::INFINITY;
            n.sensing_fading = FadingModel::new(FadingMode::Slow);
        }
        cfg.fc_noise = DistributionSpec::Gaussian { mean: 0.0, variance: 5.0 };
        cfg.fc_test = {
            let mut t = TestSpec::new(TestKind::M2RandomWalk, -1.0, 1.0, 4.0, 4.0);
            t.inner_clip = 200.0;
            t.clip = 5.0;
            t
        };
        cfg.max_slots = 100_000;
        let trials = 10_000;
        let mut h1 = 0;
        for i in 0..trials {
            let r = run_trial(&cfg, Hypothesis::H0, RngStream::new(100, i));
            assert!(!r.truncated);
            if r.decision == Some(Hypothesis::H1) {
                h1 += 1;
            }
        }
        let p = h1 as f64 / trials as f64;
        assert!((p - 0.5).abs() < 0.015, "p = {p}");
    }

    #[test]
    fn slot_conservation_and_latching_shape() {
        // Transmission sequences are 0...0 then constant +-b.
        let mut cfg = deterministic_system();
        cfg.fc_noise = DistributionSpec::Gaussian { mean: 0.0, variance: 1.0 };
        for n in &mut cfg.nodes {
            n.signal.noise = DistributionSpec::Gaussian { mean: 0.0, variance: 1.0 };
        }
        let node_cfg = cfg.nodes[0].clone();
        let mut node = NodeState::new(&node_cfg, false);
        let mut rng = RngStream::new(5, 0).rng();
        let mut seq = Vec::new();
        for _ in 0..200 {
            let raw = raw_sample(Hypothesis::H1, &node_cfg.signal, 1.0, &mut rng);
            seq.push(node_step(&mut node, &node_cfg, raw));
        }
        let first_nonzero = seq.iter().position(|&x| x != 0.0);
        if let Some(k) = first_nonzero {
            assert!(seq[..k].iter().all(|&x| x == 0.0));
            assert!(seq[k..].iter().all(|&x| x == 1.0 || x == -1.0));
        }
    }

    #[test]
    fn outlier_placement_respected() {
        // H1-only outliers never fire under H0.
        let mut cfg = basic_node(TestSpec::new(TestKind::RandomWalk, -1.0, 1.0, 1e9, 1e9));
        cfg.signal.noise = near_zero_noise();
        cfg.signal.outlier = Some((
            0.5,
            DistributionSpec::Gaussian { mean: 1000.0, variance: 1.0 },
            OutlierPlacement::H1Only,
        ));
        let mut rng = RngStream::new(6, 0).rng();
        for _ in 0..1000 {
            let x = raw_sample(Hypothesis::H0, &cfg.signal, 1.0, &mut rng);
            assert!(x.abs() < 500.0);
        }
        let hits = (0..1000)
            .filter(|_| raw_sample(Hypothesis::H1, &cfg.signal, 1.0, &mut rng) > 500.0)
            .count();
        assert!(hits > 400 && hits < 600, "hits = {hits}");
    }
}
