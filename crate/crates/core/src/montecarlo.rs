//! Monte-Carlo trial harness: error-probability and mean-delay
//! estimation with confidence intervals, the |log c| threshold schedule,
//! target-driven threshold calibration, and pre-run estimation of the
//! psi1-transformed means that feed M^2 test centers.
//!
//! Trials execute in parallel but aggregation folds an index-ordered
//! vector, so results are independent of thread count and scheduling.

use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::channel::Hypothesis;
use crate::distributions::RngStream;
use crate::nodes::{run_single_trial, run_trial, NodeConfig, SystemConfig, TrialResult};
use crate::{Error, Result};

/// Stream-id block reserved per sweep point; trial streams never collide
/// across points sharing a base seed.
pub const STREAM_BLOCK: u64 = 1 << 32;

/// Stream-id base reserved for pre-run mean estimation.
pub const MEANS_STREAM_BASE: u64 = u64::MAX - STREAM_BLOCK;

/// What a trial runs: the full two-tier system, or one node on its own.
#[derive(Debug, Clone)]
pub enum RunTarget {
    Distributed(SystemConfig),
    SingleNode { node: NodeConfig, max_slots: u64 },
}

impl RunTarget {
    pub fn validate(&self) -> Result<()> {
        match self {
            RunTarget::Distributed(cfg) => cfg.validate(),
            RunTarget::SingleNode { node, max_slots } => {
                node.validate()?;
                if *max_slots < 1 {
                    return Err(Error::Config("max_slots must be >= 1".into()));
                }
                Ok(())
            }
        }
    }

    fn run(&self, hypothesis: Hypothesis, stream: RngStream) -> TrialResult {
        match self {
            RunTarget::Distributed(cfg) => run_trial(cfg, hypothesis, stream),
            RunTarget::SingleNode { node, max_slots } => {
                run_single_trial(node, hypothesis, stream, *max_slots)
            }
        }
    }
}

/// Aggregated performance of one configuration.
///
/// Truncated and gated trials count as errors under both hypotheses and
/// are excluded from the delay means; their counts are reported so no
/// trial disappears silently.
#[derive(Debug, Clone)]
pub struct PerformanceEstimate {
    pub p_fa: f64,
    pub p_fa_hw: f64,
    pub p_md: f64,
    pub p_md_hw: f64,
    pub e0_n: f64,
    pub e0_n_hw: f64,
    pub e1_n: f64,
    pub e1_n_hw: f64,
    pub n_trials: u64,
    pub truncated: [u64; 2],
    pub gated: [u64; 2],
}

impl PerformanceEstimate {
    pub fn mean_error(&self) -> f64 {
        0.5 * (self.p_fa + self.p_md)
    }

    pub fn mean_delay(&self) -> f64 {
        0.5 * (self.e0_n + self.e1_n)
    }
}

/// Run `n_trials` under each hypothesis and aggregate.
///
/// Streams are `stream_base + 2 * trial + hypothesis`; callers partition
/// `stream_base` (multiples of `STREAM_BLOCK`) so no `(seed, stream)` pair
/// is ever reused across sweep points or pre-runs.
pub fn estimate(
    target: &RunTarget,
    n_trials: u64,
    seed: u64,
    stream_base: u64,
) -> Result<PerformanceEstimate> {
    if n_trials < 1 {
        return Err(Error::Config("n_trials must be >= 1".into()));
    }
    target.validate()?;

    let mut p = [0.0f64; 2];
    let mut p_hw = [0.0f64; 2];
    let mut e_n = [0.0f64; 2];
    let mut e_hw = [0.0f64; 2];
    let mut truncated = [0u64; 2];
    let mut gated = [0u64; 2];

    for hyp in [Hypothesis::H0, Hypothesis::H1] {
        let hi = hyp.index();
        let results: Vec<TrialResult> = (0..n_trials)
            .into_par_iter()
            .map(|i| {
                let stream = RngStream::new(seed, stream_base + 2 * i + hi as u64);
                target.run(hyp, stream)
            })
            .collect();

        let mut errors = 0u64;
        let mut count = 0u64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for r in &results {
            let wrong = match (hyp, r.decision) {
                (Hypothesis::H0, Some(Hypothesis::H1)) => true,
                (Hypothesis::H1, Some(Hypothesis::H0)) => true,
                (_, None) => true, // truncated or gated
                _ => false,
            };
            if wrong {
                errors += 1;
            }
            if r.truncated {
                truncated[hi] += 1;
            } else if r.gated {
                gated[hi] += 1;
            } else {
                count += 1;
                sum += r.stop_slot as f64;
                sum_sq += (r.stop_slot as f64).powi(2);
            }
        }
        let frac = errors as f64 / n_trials as f64;
        p[hi] = frac;
        p_hw[hi] = proportion_half_width(errors, n_trials);
        if count > 0 {
            let mean = sum / count as f64;
            e_n[hi] = mean;
            if count > 1 {
                let var = (sum_sq - sum * sum / count as f64) / (count as f64 - 1.0);
                e_hw[hi] = 1.96 * (var.max(0.0) / count as f64).sqrt();
            }
        }
    }

    Ok(PerformanceEstimate {
        p_fa: p[0],
        p_fa_hw: p_hw[0],
        p_md: p[1],
        p_md_hw: p_hw[1],
        e0_n: e_n[0],
        e0_n_hw: e_hw[0],
        e1_n: e_n[1],
        e1_n_hw: e_hw[1],
        n_trials,
        truncated,
        gated,
    })
}

/// 95% half-width of an error proportion; Clopper-Pearson when fewer than
/// 10 errors were seen, normal approximation otherwise.
fn proportion_half_width(errors: u64, n: u64) -> f64 {
    let nf = n as f64;
    let p = errors as f64 / nf;
    if errors >= 10 && n - errors >= 10 {
        return 1.96 * (p * (1.0 - p) / nf).sqrt();
    }
    let k = errors as f64;
    let lower = if errors == 0 {
        0.0
    } else {
        Beta::new(k, nf - k + 1.0).unwrap().inverse_cdf(0.025)
    };
    let upper = if errors == n {
        1.0
    } else {
        Beta::new(k + 1.0, nf - k).unwrap().inverse_cdf(0.975)
    };
    (upper - p).max(p - lower)
}

/// Per-node thresholds and FC thresholds from the scalar `c`:
/// `beta = |log c|`, `gamma_0l = (E0[Xhat_l] / Dtot^0) |log c|`,
/// `gamma_1l = (E1[Xhat_l] / Dtot^1) |log c|`.
#[derive(Debug, Clone)]
pub struct ThresholdSchedule {
    pub beta0: f64,
    pub beta1: f64,
    /// Per-node `(gamma0, gamma1)` magnitudes.
    pub node_gammas: Vec<(f64, f64)>,
}

/// `drifts[l] = (E0[Xhat_l], E1[Xhat_l])` with E0 < 0 < E1.
pub fn threshold_schedule(c: f64, drifts: &[(f64, f64)]) -> Result<ThresholdSchedule> {
    if !(0.0..1.0).contains(&c) || c <= 0.0 {
        return Err(Error::Config(format!("c must be in (0, 1), got {c}")));
    }
    if drifts.is_empty() {
        return Err(Error::Config("need at least one node drift".into()));
    }
    for (i, (e0, e1)) in drifts.iter().enumerate() {
        if !(*e0 < 0.0 && *e1 > 0.0) {
            return Err(Error::Config(format!(
                "node {i} drifts must satisfy E0 < 0 < E1, got ({e0}, {e1})"
            )));
        }
    }
    let log_c = c.ln().abs();
    let d_tot0: f64 = drifts.iter().map(|(e0, _)| e0).sum();
    let d_tot1: f64 = drifts.iter().map(|(_, e1)| e1).sum();
    let node_gammas = drifts
        .iter()
        .map(|(e0, e1)| (e0 / d_tot0 * log_c, e1 / d_tot1 * log_c))
        .collect();
    Ok(ThresholdSchedule { beta0: log_c, beta1: log_c, node_gammas })
}

/// Monte-Carlo means of a psi1-transformed observation under each
/// hypothesis, with 95% half-widths. Errors out when the hypotheses are
/// not separated beyond the confidence intervals.
pub fn estimate_means<F>(mut sample: F, n: usize, seed: u64) -> Result<((f64, f64), (f64, f64))>
where
    F: FnMut(Hypothesis, &mut rand_chacha::ChaCha12Rng) -> f64,
{
    if n < 10_000 {
        return Err(Error::Config("estimate_means needs n >= 10^4".into()));
    }
    let mut out = [(0.0, 0.0); 2];
    for hyp in [Hypothesis::H0, Hypothesis::H1] {
        let mut rng = RngStream::new(seed, MEANS_STREAM_BASE + hyp.index() as u64).rng();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let x = sample(hyp, &mut rng);
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let var = (sum_sq - sum * sum / n as f64) / (n as f64 - 1.0);
        out[hyp.index()] = (mean, 1.96 * (var.max(0.0) / n as f64).sqrt());
    }
    let ((mu0, hw0), (mu1, hw1)) = (out[0], out[1]);
    if mu1 - hw1 <= mu0 + hw0 {
        return Err(Error::Config(format!(
            "hypotheses not separated after psi1: mu0 = {mu0} +- {hw0}, mu1 = {mu1} +- {hw1}"
        )));
    }
    Ok(((mu0, hw0), (mu1, hw1)))
}

/// One point of a threshold sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub c: f64,
    pub estimate: PerformanceEstimate,
}

/// Estimate performance at each `c`; sweep point `i` uses stream
/// partition `i * STREAM_BLOCK` under the shared seed.
pub fn sweep<B>(build: B, cs: &[f64], n_trials: u64, seed: u64) -> Result<Vec<SweepPoint>>
where
    B: Fn(f64) -> Result<RunTarget> + Sync,
{
    cs.iter()
        .enumerate()
        .map(|(i, &c)| {
            let target = build(c)?;
            let estimate = estimate(&target, n_trials, seed, i as u64 * STREAM_BLOCK)?;
            Ok(SweepPoint { c, estimate })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub c: f64,
    pub estimate: PerformanceEstimate,
}

/// Bisection on `log c` for the largest `c` (smallest delay) whose
/// estimated errors meet both targets within their confidence intervals.
pub fn calibrate<B>(
    build: B,
    target_pfa: f64,
    target_pmd: f64,
    n_trials: u64,
    seed: u64,
) -> Result<CalibrationResult>
where
    B: Fn(f64) -> Result<RunTarget> + Sync,
{
    if !(0.0..0.5).contains(&target_pfa)
        || !(0.0..0.5).contains(&target_pmd)
        || target_pfa == 0.0
        || target_pmd == 0.0
    {
        return Err(Error::Config("targets must lie in (0, 0.5)".into()));
    }
    let qualifies = |e: &PerformanceEstimate| {
        e.p_fa <= target_pfa + e.p_fa_hw && e.p_md <= target_pmd + e.p_md_hw
    };
    let mut lo_log = (1e-8f64).ln(); // large thresholds
    let mut hi_log = (0.9f64).ln(); // small thresholds
    let mut best: Option<CalibrationResult> = None;
    let mut closest: Option<CalibrationResult> = None;
    let mut partition = 1u64 << 16; // keep clear of sweep partitions
    for _ in 0..12 {
        let mid = 0.5 * (lo_log + hi_log);
        let c = mid.exp();
        let target = build(c)?;
        let est = estimate(&target, n_trials, seed, partition * STREAM_BLOCK)?;
        partition += 1;
        let better_closest = closest
            .as_ref()
            .map(|prev| {
                (est.p_fa - target_pfa).max(0.0) + (est.p_md - target_pmd).max(0.0)
                    < (prev.estimate.p_fa - target_pfa).max(0.0)
                        + (prev.estimate.p_md - target_pmd).max(0.0)
            })
            .unwrap_or(true);
        if better_closest {
            closest = Some(CalibrationResult { c, estimate: est.clone() });
        }
        if qualifies(&est) {
            let better = best.as_ref().map(|b| c > b.c).unwrap_or(true);
            if better {
                best = Some(CalibrationResult { c, estimate: est });
            }
            lo_log = mid; // qualifying: try smaller thresholds
        } else {
            hi_log = mid;
        }
    }
    best.ok_or_else(|| {
        let msg = match closest {
            Some(cl) => format!(
                "targets ({target_pfa}, {target_pmd}) unreachable; closest at c = {:.4e} with p_fa = {:.4}, p_md = {:.4}",
                cl.c, cl.estimate.p_fa, cl.estimate.p_md
            ),
            None => "no calibration point evaluated".into(),
        };
        Error::Calibration(msg)
    })
}
