//! Experiment configuration: a line-oriented sectioned key=value format
//! with a small `kind(param=value, ...)` grammar for distribution specs,
//! plus the assembly step that turns a parsed config and a threshold
//! scale `c` into a runnable target.

use crate::channel::{
    default_shadow, bpsk_alphabet, EnergyConfig, FadingMode, FadingModel, Hypothesis,
    OutlierPlacement, SignalModel,
};
use crate::distributions::DistributionSpec;
use crate::montecarlo::{estimate_means, threshold_schedule, RunTarget, ThresholdSchedule};
use crate::nodes::{NodeConfig, SystemConfig};
use crate::seqtests::{psi, TestKind, TestSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Distributed,
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    Energy,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSection {
    pub mode: RunMode,
    pub nodes: usize,
    pub b0: f64,
    pub b1: f64,
    pub delta: f64,
    pub partial_coherence: bool,
    pub max_slots: u64,
    pub trials: u64,
    pub seed: u64,
    /// Pre-run sample count for estimating test centers and drifts.
    pub means_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSection {
    pub amplitude: f64,
    pub noise: DistributionSpec,
    pub emi: Option<DistributionSpec>,
    pub outlier_epsilon: f64,
    pub outlier_law: Option<DistributionSpec>,
    pub outlier_under: OutlierPlacement,
    pub detector: Detector,
    pub block_len: usize,
    pub exponent: f64,
    pub sensing_fading: FadingMode,
    pub shadow: DistributionSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSection {
    pub kind: TestKind,
    pub clip: f64,
    pub inner_clip: f64,
    pub min_samples: Option<u64>,
    /// Explicit centers; estimated in a pre-run when absent.
    pub mu0: Option<f64>,
    pub mu1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcSection {
    pub noise: DistributionSpec,
    pub kind: TestKind,
    pub clip: f64,
    pub inner_clip: f64,
    pub mu0: Option<f64>,
    pub mu1: Option<f64>,
    pub reporting_fading: FadingMode,
    pub shadow: DistributionSpec,
}

/// Parsed experiment configuration; see `serialize` for the format.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub node: NodeSection,
    pub node_test: TestSection,
    pub fc: FcSection,
    pub sweep: Vec<f64>,
}

fn fmt_kind(kind: TestKind) -> &'static str {
    match kind {
        TestKind::Rank => "rank",
        TestKind::TTest => "ttest",
        TestKind::RandomWalk => "randomwalk",
        TestKind::MT => "mt",
        TestKind::MRandomWalk => "mrandomwalk",
        TestKind::M2RandomWalk => "m2randomwalk",
    }
}

fn parse_kind(s: &str, line: usize) -> Result<TestKind> {
    match s {
        "rank" => Ok(TestKind::Rank),
        "ttest" => Ok(TestKind::TTest),
        "randomwalk" => Ok(TestKind::RandomWalk),
        "mt" => Ok(TestKind::MT),
        "mrandomwalk" => Ok(TestKind::MRandomWalk),
        "m2randomwalk" => Ok(TestKind::M2RandomWalk),
        _ => Err(Error::Config(format!("line {line}: unknown test kind '{s}'"))),
    }
}

fn fmt_fading(mode: FadingMode) -> &'static str {
    match mode {
        FadingMode::None => "none",
        FadingMode::Slow => "slow",
        FadingMode::Fast => "fast",
    }
}

fn parse_fading(s: &str, line: usize) -> Result<FadingMode> {
    match s {
        "none" => Ok(FadingMode::None),
        "slow" => Ok(FadingMode::Slow),
        "fast" => Ok(FadingMode::Fast),
        _ => Err(Error::Config(format!("line {line}: unknown fading mode '{s}'"))),
    }
}

/// Render a distribution spec in the config grammar.
pub fn format_distribution(spec: &DistributionSpec) -> String {
    match spec {
        DistributionSpec::Gaussian { mean, variance } => {
            format!("gaussian(mean={mean}, variance={variance})")
        }
        DistributionSpec::AlphaStable { alpha, scale, skew, location } => {
            format!("stable(alpha={alpha}, scale={scale}, skew={skew}, location={location})")
        }
        DistributionSpec::GaussianMixture(parts) => {
            let join = |f: fn(&(f64, f64, f64)) -> f64| {
                parts.iter().map(|p| f(p).to_string()).collect::<Vec<_>>().join(";")
            };
            format!(
                "mixture(weights={}, means={}, variances={})",
                join(|p| p.0),
                join(|p| p.1),
                join(|p| p.2)
            )
        }
        DistributionSpec::Rayleigh { scale } => format!("rayleigh(scale={scale})"),
        DistributionSpec::LogNormal { log_mean, log_variance } => {
            format!("lognormal(log_mean={log_mean}, log_variance={log_variance})")
        }
        DistributionSpec::Contaminated { base, outlier, epsilon } => format!(
            "contaminated(base={}, outlier={}, epsilon={epsilon})",
            format_distribution(base),
            format_distribution(outlier)
        ),
    }
}

/// Split on `sep` at paren depth 0.
fn split_top_level(s: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            c if c == sep && depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

/// Parse `kind(param=value, ...)`; values may themselves be specs.
pub fn parse_distribution(s: &str) -> Result<DistributionSpec> {
    parse_distribution_at(s, 0)
}

fn parse_distribution_at(s: &str, line: usize) -> Result<DistributionSpec> {
    let s = s.trim();
    let bad = |msg: &str| Error::Config(format!("line {line}: {msg} in distribution '{s}'"));
    let open = s.find('(').ok_or_else(|| bad("missing '('"))?;
    if !s.ends_with(')') {
        return Err(bad("missing closing ')'"));
    }
    let kind = s[..open].trim();
    let body = &s[open + 1..s.len() - 1];
    let mut params: Vec<(&str, &str)> = Vec::new();
    for part in split_top_level(body, ',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let eq = part.find('=').ok_or_else(|| bad("parameter without '='"))?;
        params.push((part[..eq].trim(), part[eq + 1..].trim()));
    }
    let get = |name: &str| -> Result<&str> {
        params
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Config(format!("line {line}: missing parameter '{name}' in '{s}'")))
    };
    let num = |v: &str| -> Result<f64> {
        v.parse::<f64>().map_err(|_| Error::Config(format!("line {line}: bad number '{v}' in '{s}'")))
    };
    let spec = match kind {
        "gaussian" => DistributionSpec::Gaussian {
            mean: num(get("mean")?)?,
            variance: num(get("variance")?)?,
        },
        "stable" => DistributionSpec::AlphaStable {
            alpha: num(get("alpha")?)?,
            scale: num(get("scale")?)?,
            skew: num(get("skew")?)?,
            location: num(get("location")?)?,
        },
        "mixture" => {
            let lists: Vec<Vec<f64>> = ["weights", "means", "variances"]
                .iter()
                .map(|k| {
                    get(k)?.split(';').map(|v| num(v.trim())).collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            if lists[0].len() != lists[1].len() || lists[0].len() != lists[2].len() {
                return Err(bad("mixture lists must have equal length"));
            }
            DistributionSpec::GaussianMixture(
                (0..lists[0].len()).map(|i| (lists[0][i], lists[1][i], lists[2][i])).collect(),
            )
        }
        "rayleigh" => DistributionSpec::Rayleigh { scale: num(get("scale")?)? },
        "lognormal" => DistributionSpec::LogNormal {
            log_mean: num(get("log_mean")?)?,
            log_variance: num(get("log_variance")?)?,
        },
        "contaminated" => DistributionSpec::Contaminated {
            base: Box::new(parse_distribution_at(get("base")?, line)?),
            outlier: Box::new(parse_distribution_at(get("outlier")?, line)?),
            epsilon: num(get("epsilon")?)?,
        },
        _ => return Err(Error::Config(format!("line {line}: unknown distribution kind '{kind}'"))),
    };
    let allowed: &[&str] = match kind {
        "gaussian" => &["mean", "variance"],
        "stable" => &["alpha", "scale", "skew", "location"],
        "mixture" => &["weights", "means", "variances"],
        "rayleigh" => &["scale"],
        "lognormal" => &["log_mean", "log_variance"],
        "contaminated" => &["base", "outlier", "epsilon"],
        _ => unreachable!(),
    };
    for (k, _) in &params {
        if !allowed.contains(k) {
            return Err(Error::Config(format!("line {line}: unknown parameter '{k}' in '{s}'")));
        }
    }
    spec.validate()?;
    Ok(spec)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            system: SystemSection {
                mode: RunMode::Distributed,
                nodes: 5,
                b0: 1.0,
                b1: 1.0,
                delta: 0.0,
                partial_coherence: false,
                max_slots: 1_000_000,
                trials: 10_000,
                seed: 0,
                means_trials: 100_000,
            },
            node: NodeSection {
                amplitude: 1.0,
                noise: DistributionSpec::Gaussian { mean: 0.0, variance: 1.0 },
                emi: None,
                outlier_epsilon: 0.0,
                outlier_law: None,
                outlier_under: OutlierPlacement::H1Only,
                detector: Detector::Energy,
                block_len: 10,
                exponent: 2.0,
                sensing_fading: FadingMode::None,
                shadow: default_shadow(),
            },
            node_test: TestSection {
                kind: TestKind::M2RandomWalk,
                clip: 5.0,
                inner_clip: 200.0,
                min_samples: None,
                mu0: None,
                mu1: None,
            },
            fc: FcSection {
                noise: DistributionSpec::Gaussian { mean: 0.0, variance: 5.0 },
                kind: TestKind::M2RandomWalk,
                clip: 5.0,
                inner_clip: 1e9,
                mu0: None,
                mu1: None,
                reporting_fading: FadingMode::None,
                shadow: default_shadow(),
            },
            sweep: vec![0.1, 0.01, 0.001],
        }
    }
}

impl ExperimentConfig {
    /// Parse the sectioned key=value text; unknown sections or keys are
    /// rejected with a line diagnostic. `nodes` under `[system]` is the
    /// one required field.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut section = String::new();
        let mut saw_nodes = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
                continue;
            }
            if let Some(name) = trimmed.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {line}: unterminated section header")))?;
                section = name.trim().to_string();
                if !["system", "node", "node_test", "fc", "sweep"].contains(&section.as_str()) {
                    return Err(Error::Config(format!("line {line}: unknown section '[{section}]'")));
                }
                continue;
            }
            let eq = trimmed
                .find('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected 'key = value'")))?;
            let key = trimmed[..eq].trim();
            let value = trimmed[eq + 1..].trim();
            let f = |v: &str| -> Result<f64> {
                v.parse().map_err(|_| Error::Config(format!("line {line}: bad number '{v}' for '{key}'")))
            };
            let u = |v: &str| -> Result<u64> {
                v.parse().map_err(|_| Error::Config(format!("line {line}: bad integer '{v}' for '{key}'")))
            };
            let b = |v: &str| -> Result<bool> {
                match v {
                    "true" => Ok(true),
                    "false" => Ok(false),
                    _ => Err(Error::Config(format!("line {line}: bad boolean '{v}' for '{key}'"))),
                }
            };
            match (section.as_str(), key) {
                ("system", "mode") => {
                    cfg.system.mode = match value {
                        "distributed" => RunMode::Distributed,
                        "single" => RunMode::Single,
                        _ => {
                            return Err(Error::Config(format!(
                                "line {line}: mode must be 'distributed' or 'single'"
                            )))
                        }
                    }
                }
                ("system", "nodes") => {
                    cfg.system.nodes = u(value)? as usize;
                    saw_nodes = true;
                }
                ("system", "b0") => cfg.system.b0 = f(value)?,
                ("system", "b1") => cfg.system.b1 = f(value)?,
                ("system", "delta") => cfg.system.delta = f(value)?,
                ("system", "partial_coherence") => cfg.system.partial_coherence = b(value)?,
                ("system", "max_slots") => cfg.system.max_slots = u(value)?,
                ("system", "trials") => cfg.system.trials = u(value)?,
                ("system", "seed") => cfg.system.seed = u(value)?,
                ("system", "means_trials") => cfg.system.means_trials = u(value)? as usize,
                ("node", "amplitude") => cfg.node.amplitude = f(value)?,
                ("node", "noise") => cfg.node.noise = parse_distribution_at(value, line)?,
                ("node", "emi") => cfg.node.emi = Some(parse_distribution_at(value, line)?),
                ("node", "outlier_epsilon") => cfg.node.outlier_epsilon = f(value)?,
                ("node", "outlier_law") => {
                    cfg.node.outlier_law = Some(parse_distribution_at(value, line)?)
                }
                ("node", "outlier_under") => {
                    cfg.node.outlier_under = match value {
                        "h1" => OutlierPlacement::H1Only,
                        "both" => OutlierPlacement::Both,
                        _ => {
                            return Err(Error::Config(format!(
                                "line {line}: outlier_under must be 'h1' or 'both'"
                            )))
                        }
                    }
                }
                ("node", "detector") => {
                    cfg.node.detector = match value {
                        "energy" => Detector::Energy,
                        "mean" => Detector::Mean,
                        _ => {
                            return Err(Error::Config(format!(
                                "line {line}: detector must be 'energy' or 'mean'"
                            )))
                        }
                    }
                }
                ("node", "block_len") => cfg.node.block_len = u(value)? as usize,
                ("node", "exponent") => cfg.node.exponent = f(value)?,
                ("node", "sensing_fading") => cfg.node.sensing_fading = parse_fading(value, line)?,
                ("node", "shadow") => cfg.node.shadow = parse_distribution_at(value, line)?,
                ("node_test", "kind") => cfg.node_test.kind = parse_kind(value, line)?,
                ("node_test", "clip") => cfg.node_test.clip = f(value)?,
                ("node_test", "inner_clip") => cfg.node_test.inner_clip = f(value)?,
                ("node_test", "min_samples") => cfg.node_test.min_samples = Some(u(value)?),
                ("node_test", "mu0") => cfg.node_test.mu0 = Some(f(value)?),
                ("node_test", "mu1") => cfg.node_test.mu1 = Some(f(value)?),
                ("fc", "noise") => cfg.fc.noise = parse_distribution_at(value, line)?,
                ("fc", "kind") => cfg.fc.kind = parse_kind(value, line)?,
                ("fc", "clip") => cfg.fc.clip = f(value)?,
                ("fc", "inner_clip") => cfg.fc.inner_clip = f(value)?,
                ("fc", "mu0") => cfg.fc.mu0 = Some(f(value)?),
                ("fc", "mu1") => cfg.fc.mu1 = Some(f(value)?),
                ("fc", "reporting_fading") => cfg.fc.reporting_fading = parse_fading(value, line)?,
                ("fc", "shadow") => cfg.fc.shadow = parse_distribution_at(value, line)?,
                ("sweep", "c") => {
                    cfg.sweep = value
                        .split(',')
                        .map(|v| f(v.trim()))
                        .collect::<Result<Vec<f64>>>()?;
                }
                ("", _) => {
                    return Err(Error::Config(format!("line {line}: key '{key}' outside any section")))
                }
                _ => {
                    return Err(Error::Config(format!(
                        "line {line}: unknown key '{key}' in section '[{section}]'"
                    )))
                }
            }
        }
        if !saw_nodes {
            return Err(Error::Config("missing required field 'nodes' in [system]".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.system.nodes == 0 {
            return Err(Error::Config("nodes must be >= 1".into()));
        }
        if self.sweep.is_empty() {
            return Err(Error::Config("sweep grid must be non-empty".into()));
        }
        for &c in &self.sweep {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::Config(format!("sweep value {c} outside (0, 1)")));
            }
        }
        if self.node.outlier_law.is_some() && !(0.0..=1.0).contains(&self.node.outlier_epsilon) {
            return Err(Error::Config("outlier_epsilon must lie in [0, 1]".into()));
        }
        self.node.noise.validate()?;
        self.fc.noise.validate()?;
        Ok(())
    }

    /// Canonical text form; `parse(serialize(parse(t)))` is idempotent.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let sys = &self.system;
        s.push_str("[system]\n");
        s.push_str(&format!(
            "mode = {}\n",
            match sys.mode {
                RunMode::Distributed => "distributed",
                RunMode::Single => "single",
            }
        ));
        s.push_str(&format!("nodes = {}\n", sys.nodes));
        s.push_str(&format!("b0 = {}\n", sys.b0));
        s.push_str(&format!("b1 = {}\n", sys.b1));
        s.push_str(&format!("delta = {}\n", sys.delta));
        s.push_str(&format!("partial_coherence = {}\n", sys.partial_coherence));
        s.push_str(&format!("max_slots = {}\n", sys.max_slots));
        s.push_str(&format!("trials = {}\n", sys.trials));
        s.push_str(&format!("seed = {}\n", sys.seed));
        s.push_str(&format!("means_trials = {}\n", sys.means_trials));
        let node = &self.node;
        s.push_str("\n[node]\n");
        s.push_str(&format!("amplitude = {}\n", node.amplitude));
        s.push_str(&format!("noise = {}\n", format_distribution(&node.noise)));
        if let Some(emi) = &node.emi {
            s.push_str(&format!("emi = {}\n", format_distribution(emi)));
        }
        if let Some(law) = &node.outlier_law {
            s.push_str(&format!("outlier_epsilon = {}\n", node.outlier_epsilon));
            s.push_str(&format!("outlier_law = {}\n", format_distribution(law)));
            s.push_str(&format!(
                "outlier_under = {}\n",
                match node.outlier_under {
                    OutlierPlacement::H1Only => "h1",
                    OutlierPlacement::Both => "both",
                }
            ));
        }
        s.push_str(&format!(
            "detector = {}\n",
            match node.detector {
                Detector::Energy => "energy",
                Detector::Mean => "mean",
            }
        ));
        s.push_str(&format!("block_len = {}\n", node.block_len));
        s.push_str(&format!("exponent = {}\n", node.exponent));
        s.push_str(&format!("sensing_fading = {}\n", fmt_fading(node.sensing_fading)));
        s.push_str(&format!("shadow = {}\n", format_distribution(&node.shadow)));
        let t = &self.node_test;
        s.push_str("\n[node_test]\n");
        s.push_str(&format!("kind = {}\n", fmt_kind(t.kind)));
        s.push_str(&format!("clip = {}\n", t.clip));
        s.push_str(&format!("inner_clip = {}\n", t.inner_clip));
        if let Some(m) = t.min_samples {
            s.push_str(&format!("min_samples = {m}\n"));
        }
        if let Some(mu0) = t.mu0 {
            s.push_str(&format!("mu0 = {mu0}\n"));
        }
        if let Some(mu1) = t.mu1 {
            s.push_str(&format!("mu1 = {mu1}\n"));
        }
        let fc = &self.fc;
        s.push_str("\n[fc]\n");
        s.push_str(&format!("noise = {}\n", format_distribution(&fc.noise)));
        s.push_str(&format!("kind = {}\n", fmt_kind(fc.kind)));
        s.push_str(&format!("clip = {}\n", fc.clip));
        s.push_str(&format!("inner_clip = {}\n", fc.inner_clip));
        if let Some(mu0) = fc.mu0 {
            s.push_str(&format!("mu0 = {mu0}\n"));
        }
        if let Some(mu1) = fc.mu1 {
            s.push_str(&format!("mu1 = {mu1}\n"));
        }
        s.push_str(&format!("reporting_fading = {}\n", fmt_fading(fc.reporting_fading)));
        s.push_str(&format!("shadow = {}\n", format_distribution(&fc.shadow)));
        s.push_str("\n[sweep]\n");
        s.push_str(&format!(
            "c = {}\n",
            self.sweep.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
        ));
        s
    }

    /// FNV-1a hash of the canonical text, for report provenance comments.
    pub fn canonical_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for byte in self.serialize().bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    fn signal_model(&self) -> SignalModel {
        let outlier = self
            .node
            .outlier_law
            .clone()
            .map(|law| (self.node.outlier_epsilon, law, self.node.outlier_under));
        SignalModel {
            alphabet: bpsk_alphabet(),
            amplitude: self.node.amplitude,
            noise: self.node.noise.clone(),
            emi: self.node.emi.clone(),
            outlier,
        }
    }

    fn energy(&self) -> Option<EnergyConfig> {
        match self.node.detector {
            Detector::Energy => Some(EnergyConfig {
                block_len: self.node.block_len,
                exponent: self.node.exponent,
            }),
            Detector::Mean => None,
        }
    }

    fn sensing_fading(&self) -> FadingModel {
        FadingModel { mode: self.node.sensing_fading, shadow: self.node.shadow.clone() }
    }

    /// Draw one test observation (energy sample or raw sample) as the
    /// running node would see it.
    pub fn observation<R: rand::Rng>(&self, hyp: Hypothesis, rng: &mut R) -> f64 {
        let sig = self.signal_model();
        let fading = self.sensing_fading();
        match self.energy() {
            Some(energy) => {
                let slow_gain = match fading.mode {
                    FadingMode::Fast => None,
                    _ => Some(fading.draw_gain(rng)),
                };
                let block: Vec<f64> = (0..energy.block_len)
                    .map(|_| {
                        let g = slow_gain.unwrap_or_else(|| fading.draw_gain(rng));
                        crate::channel::raw_sample(hyp, &sig, g, rng)
                    })
                    .collect();
                crate::channel::energy_block(&block, &energy).expect("sized by construction")
            }
            None => {
                let g = fading.draw_gain(rng);
                crate::channel::raw_sample(hyp, &sig, g, rng)
            }
        }
    }

    /// Pre-run estimation of test centers and schedule drifts, then
    /// freeze everything needed to build a target at any `c`.
    pub fn prepare(&self) -> Result<Experiment> {
        self.validate()?;
        let inner = match self.node_test.kind {
            TestKind::M2RandomWalk => self.node_test.inner_clip,
            _ => f64::INFINITY,
        };
        let (mu0, mu1) = match (self.node_test.mu0, self.node_test.mu1) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                let ((m0, _), (m1, _)) = estimate_means(
                    |hyp, rng| psi(self.observation(hyp, rng), inner),
                    self.system.means_trials,
                    self.system.seed,
                )?;
                (m0, m1)
            }
        };
        if mu1 <= mu0 {
            return Err(Error::Config(format!("need mu1 > mu0, got ({mu0}, {mu1})")));
        }
        let center = 0.5 * (mu0 + mu1);
        // Drifts of the (possibly clipped) centered increment feed the
        // threshold schedule; a distinct seed keeps (seed, stream) pairs
        // unique across the two pre-runs.
        let outer = match self.node_test.kind {
            TestKind::MRandomWalk | TestKind::M2RandomWalk | TestKind::MT => self.node_test.clip,
            _ => f64::INFINITY,
        };
        let drift_seed = self.system.seed ^ 0x9e37_79b9_7f4a_7c15;
        let ((d0, _), (d1, _)) = estimate_means(
            |hyp, rng| psi(psi(self.observation(hyp, rng), inner) - center, outer),
            self.system.means_trials,
            drift_seed,
        )?;
        if !(d0 < 0.0 && d1 > 0.0) {
            return Err(Error::Config(format!(
                "test increments must satisfy E0 < 0 < E1, got ({d0}, {d1}); adjust centers"
            )));
        }
        let drifts = vec![(d0, d1); self.system.nodes];
        let fc_mu0 = self.fc.mu0.unwrap_or(-self.system.b0);
        let fc_mu1 = self.fc.mu1.unwrap_or(self.system.b1);
        Ok(Experiment {
            config: self.clone(),
            node_mu: (mu0, mu1),
            node_drifts: drifts,
            fc_mu: (fc_mu0, fc_mu1),
        })
    }
}

/// A config with its pre-run estimates, ready to instantiate at any
/// threshold scale.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    /// Node test centers `(mu0, mu1)`.
    pub node_mu: (f64, f64),
    /// Per-node `(E0, E1)` increment drifts for the threshold schedule.
    pub node_drifts: Vec<(f64, f64)>,
    /// FC test centers.
    pub fc_mu: (f64, f64),
}

impl Experiment {
    pub fn schedule(&self, c: f64) -> Result<ThresholdSchedule> {
        threshold_schedule(c, &self.node_drifts)
    }

    fn node_config(&self, gamma0: f64, gamma1: f64) -> NodeConfig {
        let t = &self.config.node_test;
        let mut spec =
            TestSpec::new(t.kind, self.node_mu.0, self.node_mu.1, gamma0, gamma1);
        spec.clip = t.clip;
        spec.inner_clip = t.inner_clip;
        if let Some(m) = t.min_samples {
            spec.min_samples = m;
        }
        NodeConfig {
            signal: self.config.signal_model(),
            energy: self.config.energy(),
            test: spec,
            sensing_fading: self.config.sensing_fading(),
            b0: self.config.system.b0,
            b1: self.config.system.b1,
            delta: self.config.system.delta,
        }
    }

    /// Build the runnable target at threshold scale `c`.
    pub fn build(&self, c: f64) -> Result<RunTarget> {
        let schedule = self.schedule(c)?;
        match self.config.system.mode {
            RunMode::Single => {
                let (g0, g1) = schedule.node_gammas[0];
                Ok(RunTarget::SingleNode {
                    node: self.node_config(g0, g1),
                    max_slots: self.config.system.max_slots,
                })
            }
            RunMode::Distributed => {
                let nodes = schedule
                    .node_gammas
                    .iter()
                    .map(|&(g0, g1)| self.node_config(g0, g1))
                    .collect();
                let fc = &self.config.fc;
                let mut fc_spec = TestSpec::new(
                    fc.kind,
                    self.fc_mu.0,
                    self.fc_mu.1,
                    schedule.beta0,
                    schedule.beta1,
                );
                fc_spec.clip = fc.clip;
                fc_spec.inner_clip = fc.inner_clip;
                Ok(RunTarget::Distributed(SystemConfig {
                    nodes,
                    fc_noise: fc.noise.clone(),
                    fc_test: fc_spec,
                    reporting_fading: FadingModel {
                        mode: fc.reporting_fading,
                        shadow: fc.shadow.clone(),
                    },
                    partial_coherence: self.config.system.partial_coherence,
                    max_slots: self.config.system.max_slots,
                }))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# example experiment
[system]
mode = distributed
nodes = 5
b0 = 1
b1 = 1
trials = 200
seed = 7

[node]
noise = gaussian(mean=0, variance=1)
emi = stable(alpha=1.8, scale=1, skew=0, location=0)
outlier_epsilon = 0.05
outlier_law = gaussian(mean=0, variance=400)
outlier_under = h1
block_len = 10

[node_test]
kind = m2randomwalk
clip = 5
inner_clip = 200

[fc]
noise = gaussian(mean=0, variance=5)
kind = m2randomwalk

[sweep]
c = 0.1, 0.01, 0.001
";

    #[test]
    fn parses_sample_config() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.system.nodes, 5);
        assert_eq!(cfg.system.trials, 200);
        assert_eq!(cfg.system.seed, 7);
        assert!(matches!(
            cfg.node.emi,
            Some(DistributionSpec::AlphaStable { alpha, .. }) if alpha == 1.8
        ));
        assert_eq!(cfg.node.outlier_epsilon, 0.05);
        assert_eq!(cfg.sweep, vec![0.1, 0.01, 0.001]);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        let text = cfg.serialize();
        let cfg2 = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(text, cfg2.serialize());
    }

    #[test]
    fn missing_required_nodes_field_named() {
        let err = ExperimentConfig::parse("[node]\nnoise = gaussian(mean=0, variance=1)\n")
            .unwrap_err();
        assert!(err.to_string().contains("nodes"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let err =
            ExperimentConfig::parse("[system]\nnodes = 2\nbogus = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("bogus"), "{msg}");
        let err = ExperimentConfig::parse("[wat]\n").unwrap_err();
        assert!(err.to_string().contains("wat"));
    }

    #[test]
    fn distribution_grammar_round_trips() {
        let specs = [
            "gaussian(mean=0.5, variance=2)",
            "stable(alpha=1.8, scale=1, skew=0, location=0)",
            "mixture(weights=0.95;0.05, means=0;0, variances=1;400)",
            "rayleigh(scale=1.5)",
            "lognormal(log_mean=0, log_variance=0.36)",
            "contaminated(base=gaussian(mean=0, variance=1), outlier=gaussian(mean=0, variance=400), epsilon=0.05)",
        ];
        for s in specs {
            let spec = parse_distribution(s).unwrap();
            let text = format_distribution(&spec);
            assert_eq!(parse_distribution(&text).unwrap(), spec, "{s}");
        }
        assert!(parse_distribution("gaussian(mean=0)").is_err());
        assert!(parse_distribution("gaussian(mean=0, variance=1, junk=2)").is_err());
        assert!(parse_distribution("wat(x=1)").is_err());
        assert!(parse_distribution("gaussian(mean=0, variance=-1)").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::parse(SAMPLE).unwrap();
        let mut b = a.clone();
        assert_eq!(a.canonical_hash(), b.canonical_hash());
        b.system.seed = 8;
        assert_ne!(a.canonical_hash(), b.canonical_hash());
    }

    #[test]
    fn prepare_estimates_centers_and_builds() {
        let mut cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        cfg.node.emi = None;
        cfg.node.outlier_law = None;
        cfg.system.means_trials = 20_000;
        let exp = cfg.prepare().unwrap();
        // Energy means for M=10, unit noise, unit amplitude: about (10, 20).
        assert!((exp.node_mu.0 - 10.0).abs() < 0.3, "mu0 = {}", exp.node_mu.0);
        assert!((exp.node_mu.1 - 20.0).abs() < 0.5, "mu1 = {}", exp.node_mu.1);
        assert_eq!(exp.fc_mu, (-1.0, 1.0));
        let target = exp.build(0.01).unwrap();
        target.validate().unwrap();
        match target {
            RunTarget::Distributed(sys) => {
                assert_eq!(sys.nodes.len(), 5);
                let beta = (0.01f64).ln().abs();
                assert!((sys.fc_test.gamma1 - beta).abs() < 1e-12);
            }
            _ => panic!("expected distributed target"),
        }
    }

    #[test]
    fn single_mode_gets_full_log_c_threshold() {
        let text = "\
[system]
mode = single
nodes = 1
[node]
noise = gaussian(mean=0, variance=1)
[node_test]
kind = randomwalk
mu0 = 10
mu1 = 11
[sweep]
c = 0.01
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let exp = cfg.prepare().unwrap();
        let target = exp.build(0.01).unwrap();
        match target {
            RunTarget::SingleNode { node, .. } => {
                let expect = (0.01f64).ln().abs();
                assert!((node.test.gamma0 - expect).abs() < 1e-9);
                assert!((node.test.gamma1 - expect).abs() < 1e-9);
            }
            _ => panic!("expected single-node target"),
        }
    }
}
