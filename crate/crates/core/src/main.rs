//! Command-line front end: `run` sweeps thresholds and emits curve CSV,
//! `analyze` emits the closed-form approximations, `calibrate` picks
//! thresholds for error targets, `selftest` runs the built-in oracle
//! suite and a deterministic reference sweep.
//!
//! Exit codes: 0 success, 1 selftest failure, 2 configuration error,
//! 3 truncation overflow.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sensefuse::analysis::{
    fc_delay_approx, fc_drift_mc, fc_error_approx, lundberg_exponent, order_statistic_means,
    node_stop_gaussian_approx, DriftSchedule, IncrementModel,
};
use sensefuse::channel::Hypothesis;
use sensefuse::config::{Experiment, ExperimentConfig};
use sensefuse::distributions::RngStream;
use sensefuse::montecarlo::{calibrate, estimate, sweep};
use sensefuse::report::{write_curve_csv, CurveRow};
use sensefuse::seqtests::psi;
use sensefuse::Error;

#[derive(Parser)]
#[command(name = "sensefuse", about = "Sequential distributed spectrum sensing simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte-Carlo sweep over the threshold grid; writes curve CSV.
    Run(CommonArgs),
    /// Closed-form bounds and approximations over the same grid.
    Analyze(CommonArgs),
    /// Bisection on the threshold scale to meet error targets.
    Calibrate(CalibrateArgs),
    /// Built-in oracle suite plus a deterministic reference sweep.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config path.
    #[arg(long)]
    config: PathBuf,
    /// Override [system] trials.
    #[arg(long)]
    trials: Option<u64>,
    /// Override [system] seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (never changes numerical output).
    #[arg(long)]
    threads: Option<usize>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the sweep grid, e.g. --sweep 0.1,0.01,0.001.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Target false-alarm probability, in (0, 0.5).
    #[arg(long)]
    target_pfa: f64,
    /// Target missed-detection probability, in (0, 0.5).
    #[arg(long)]
    target_pmd: f64,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run(args) => with_pool(args.threads, || cmd_run(&args)),
        Cmd::Analyze(args) => with_pool(args.threads, || cmd_analyze(&args)),
        Cmd::Calibrate(args) => with_pool(args.common.threads, || cmd_calibrate(&args)),
        Cmd::Selftest(args) => with_pool(args.threads, || cmd_selftest(&args)),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Unsupported(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn with_pool<F: FnOnce() -> sensefuse::Result<u8> + Send>(
    threads: Option<usize>,
    f: F,
) -> sensefuse::Result<u8> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(f)
        }
        None => f(),
    }
}

fn load_config(args: &CommonArgs) -> sensefuse::Result<ExperimentConfig> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(t) = args.trials {
        cfg.system.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.system.seed = s;
    }
    if let Some(sweep) = &args.sweep {
        cfg.sweep = sweep.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: &Option<PathBuf>, content: &[u8]) -> sensefuse::Result<()> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            std::io::stdout()
                .write_all(content)
                .map_err(|e| Error::Config(format!("stdout: {e}")))
        }
    }
}

fn cmd_run(args: &CommonArgs) -> sensefuse::Result<u8> {
    let cfg = load_config(args)?;
    let exp = cfg.prepare()?;
    let points = sweep(
        |c| exp.build(c),
        &cfg.sweep,
        cfg.system.trials,
        cfg.system.seed,
    )?;
    let mut rows = Vec::new();
    let mut overflow = false;
    for p in &points {
        let schedule = exp.schedule(p.c)?;
        if p.estimate.truncated[0] * 2 > cfg.system.trials
            || p.estimate.truncated[1] * 2 > cfg.system.trials
        {
            overflow = true;
        }
        rows.push(CurveRow::from_estimate(p.c, &schedule, &p.estimate));
    }
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, cfg.canonical_hash(), cfg.system.seed, &[], &rows)
        .map_err(|e| Error::Config(format!("write: {e}")))?;
    emit(&args.out, &buf)?;
    if overflow {
        eprintln!("error: more than half the trials hit max_slots; estimates unusable");
        return Ok(3);
    }
    Ok(0)
}

/// Approximation inputs and outputs for one hypothesis at one sweep point.
struct HypApprox {
    delay: Option<f64>,
    schedule: DriftSchedule,
}

fn hyp_approx(
    exp: &Experiment,
    c: f64,
    hyp: Hypothesis,
    rho2: [f64; 2],
    seed: u64,
) -> sensefuse::Result<HypApprox> {
    let cfg = &exp.config;
    let schedule = exp.schedule(c)?;
    let l = cfg.system.nodes;
    let (d0, d1) = exp.node_drifts[0];
    let (g0, g1) = schedule.node_gammas[0];
    let (node_gamma, node_drift, node_rho2, level_step, barrier) = match hyp {
        Hypothesis::H0 => (g0, d0, rho2[0], -cfg.system.b0, -schedule.beta0),
        Hypothesis::H1 => (g1, d1, rho2[1], cfg.system.b1, schedule.beta1),
    };
    let (nt_mean, nt_var) = node_stop_gaussian_approx(node_gamma, node_drift, node_rho2)?;
    let node_params = vec![(nt_mean, nt_var); l];
    let fc_center = 0.5 * (exp.fc_mu.0 + exp.fc_mu.1);
    let mut drifts = Vec::with_capacity(l + 1);
    let mut times = Vec::with_capacity(l + 1);
    for j in 0..=l {
        drifts.push(fc_drift_mc(
            &cfg.fc.noise,
            cfg.fc.inner_clip,
            cfg.fc.clip,
            fc_center,
            j as f64 * level_step,
            50_000,
            RngStream::new(seed ^ 0x517c_c1b7_2722_0a95, (hyp.index() * (l + 1) + j) as u64),
        ));
        times.push(if j == 0 {
            0.0
        } else {
            order_statistic_means(
                &node_params,
                j,
                100_000,
                RngStream::new(
                    seed ^ 0x2545_f491_4f6c_dd1d,
                    (hyp.index() * (l + 1) + j) as u64,
                ),
            )?
        });
    }
    let schedule = DriftSchedule::new(drifts, times)?;
    let delay = fc_delay_approx(&schedule, barrier).ok();
    Ok(HypApprox { delay, schedule })
}

fn cmd_analyze(args: &CommonArgs) -> sensefuse::Result<u8> {
    let cfg = load_config(args)?;
    let exp = cfg.prepare()?;
    let seed = cfg.system.seed;
    // Node increment variances under each hypothesis, for Lemma-2 style
    // stopping-time Gaussians.
    let inner = match cfg.node_test.kind {
        sensefuse::seqtests::TestKind::M2RandomWalk => cfg.node_test.inner_clip,
        _ => f64::INFINITY,
    };
    let outer = match cfg.node_test.kind {
        sensefuse::seqtests::TestKind::MRandomWalk
        | sensefuse::seqtests::TestKind::M2RandomWalk
        | sensefuse::seqtests::TestKind::MT => cfg.node_test.clip,
        _ => f64::INFINITY,
    };
    let center = 0.5 * (exp.node_mu.0 + exp.node_mu.1);
    let mut rho2 = [0.0f64; 2];
    let mut comments = Vec::new();
    for hyp in [Hypothesis::H0, Hypothesis::H1] {
        let mut rng = RngStream::new(seed ^ 0x0060_0bde_ca8f_73ab, hyp.index() as u64).rng();
        let n = 50_000;
        let values: Vec<f64> = (0..n)
            .map(|_| psi(psi(cfg.observation(hyp, &mut rng), inner) - center, outer))
            .collect();
        let model = IncrementModel::Sampled { values };
        rho2[hyp.index()] = model.variance()?;
        let theta = model.mean()?;
        comments.push(format!(
            "h{} theta = {theta}, rho2 = {}",
            hyp.index(),
            rho2[hyp.index()]
        ));
        if hyp == Hypothesis::H0 {
            match lundberg_exponent(&model) {
                Ok(r) => comments.push(format!("h0 lundberg_gamma = {}", r.gamma)),
                Err(_) => comments.push("h0 lundberg_gamma = unsupported".into()),
            }
        }
    }
    let mut rows = Vec::new();
    for &c in &cfg.sweep {
        let schedule = exp.schedule(c)?;
        let a0 = hyp_approx(&exp, c, Hypothesis::H0, rho2, seed)?;
        let a1 = hyp_approx(&exp, c, Hypothesis::H1, rho2, seed)?;
        comments.push(format!("c = {c}: fc drifts under h0 = {:?}", a0.schedule.drifts));
        comments.push(format!("c = {c}: fc drifts under h1 = {:?}", a1.schedule.drifts));
        // P_FA series: pre-change FC increments under H0, barrier beta1,
        // first-decision times under H0.
        let fc_center = 0.5 * (exp.fc_mu.0 + exp.fc_mu.1);
        let inc = IncrementModel::fc_increment_sample(
            &cfg.fc.noise,
            cfg.fc.inner_clip,
            cfg.fc.clip,
            fc_center,
            0.0,
            50_000,
            RngStream::new(seed ^ 0x9e6c_63d0_76cc_4391, 0),
        );
        let (g0, _) = schedule.node_gammas[0];
        let (d0, _) = exp.node_drifts[0];
        let pfa_bounds = node_stop_gaussian_approx(g0, d0, rho2[0])
            .and_then(|(m, v)| {
                fc_error_approx(
                    &inc,
                    schedule.beta1,
                    &vec![(m, v); cfg.system.nodes],
                    (m + 6.0 * v.sqrt()).ceil().min(400.0) as usize,
                )
            })
            .ok();
        rows.push(CurveRow {
            c,
            gamma0: schedule.node_gammas[0].0,
            gamma1: schedule.node_gammas[0].1,
            beta0: schedule.beta0,
            beta1: schedule.beta1,
            p_fa: f64::NAN,
            p_fa_hw: f64::NAN,
            p_md: f64::NAN,
            p_md_hw: f64::NAN,
            e0_n: f64::NAN,
            e0_n_hw: f64::NAN,
            e1_n: f64::NAN,
            e1_n_hw: f64::NAN,
            truncated0: 0,
            truncated1: 0,
            approx_e0_n: a0.delay,
            approx_e1_n: a1.delay,
            approx_p_fa_lo: pfa_bounds.map(|(lo, _)| lo),
            approx_p_fa_hi: pfa_bounds.map(|(_, hi)| hi),
        });
    }
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, cfg.canonical_hash(), seed, &comments, &rows)
        .map_err(|e| Error::Config(format!("write: {e}")))?;
    emit(&args.out, &buf)?;
    Ok(0)
}

fn cmd_calibrate(args: &CalibrateArgs) -> sensefuse::Result<u8> {
    let cfg = load_config(&args.common)?;
    let exp = cfg.prepare()?;
    let result = calibrate(
        |c| exp.build(c),
        args.target_pfa,
        args.target_pmd,
        cfg.system.trials,
        cfg.system.seed,
    )?;
    let schedule = exp.schedule(result.c)?;
    let e = &result.estimate;
    let mut buf = Vec::new();
    let mut push = |s: String| buf.extend_from_slice(s.as_bytes());
    push(format!("# config_hash = {:016x}\n", cfg.canonical_hash()));
    push(format!("# seed = {}\n", cfg.system.seed));
    push(format!("c = {}\n", result.c));
    push(format!("gamma0 = {}\n", schedule.node_gammas[0].0));
    push(format!("gamma1 = {}\n", schedule.node_gammas[0].1));
    push(format!("beta0 = {}\n", schedule.beta0));
    push(format!("beta1 = {}\n", schedule.beta1));
    push(format!("p_fa = {} +- {}\n", e.p_fa, e.p_fa_hw));
    push(format!("p_md = {} +- {}\n", e.p_md, e.p_md_hw));
    push(format!("e0_n = {} +- {}\n", e.e0_n, e.e0_n_hw));
    push(format!("e1_n = {} +- {}\n", e.e1_n, e.e1_n_hw));
    emit(&args.common.out, &buf)?;
    Ok(0)
}

/// Built-in deterministic reference config for the selftest sweep.
fn selftest_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.system.nodes = 3;
    cfg.system.trials = 200;
    cfg.system.seed = seed;
    cfg.system.means_trials = 20_000;
    cfg.node.block_len = 5;
    cfg.fc.noise = sensefuse::distributions::DistributionSpec::Gaussian { mean: 0.0, variance: 2.0 };
    cfg.sweep = vec![0.1, 0.01];
    cfg
}

fn cmd_selftest(args: &SelftestArgs) -> sensefuse::Result<u8> {
    let mut failures = 0u32;
    let mut check = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // Exact kernels.
    check("psi clamp", psi(3.0, 2.0) == 2.0 && psi(-7.0, 2.0) == -2.0 && psi(-0.5, 2.0) == -0.5);
    let sched = sensefuse::montecarlo::threshold_schedule((-4.0f64).exp(), &[(-0.5, 0.5); 5])?;
    check(
        "threshold schedule substitution",
        (sched.beta1 - 4.0).abs() < 1e-12 && (sched.node_gammas[0].0 - 0.8).abs() < 1e-12,
    );
    // Lundberg root of N(-0.5, 1) is exactly 1.
    let lund = lundberg_exponent(&IncrementModel::Gaussian { mean: -0.5, variance: 1.0 })?;
    check("lundberg gaussian root", (lund.gamma - 1.0).abs() < 1e-10);
    // Eq.-(8)-style bracket against a quick Monte-Carlo walk.
    let model = IncrementModel::Gaussian { mean: -0.5, variance: 1.0 };
    let (lo, hi) = sensefuse::analysis::stop_time_bounds(&model, 10.0)?;
    let trials = 4000u64;
    let mut total = 0.0;
    for i in 0..trials {
        let mut rng = RngStream::new(args.seed ^ 0x51ef_17a5, i).rng();
        let mut t = 0.0f64;
        let mut n = 0u64;
        while t > -10.0 {
            t += sensefuse::distributions::draw(
                &sensefuse::distributions::DistributionSpec::Gaussian { mean: -0.5, variance: 1.0 },
                &mut rng,
            );
            n += 1;
        }
        total += n as f64;
    }
    let mc = total / trials as f64;
    check("stop-time bracket", mc >= lo * 0.98 && mc <= hi * 1.02);

    // Deterministic reference sweep; byte-identical across thread counts.
    let cfg = selftest_config(args.seed);
    let exp = cfg.prepare()?;
    let points = sweep(|c| exp.build(c), &cfg.sweep, cfg.system.trials, cfg.system.seed)?;
    let rows: Vec<CurveRow> = points
        .iter()
        .map(|p| {
            let schedule = exp.schedule(p.c).unwrap();
            CurveRow::from_estimate(p.c, &schedule, &p.estimate)
        })
        .collect();
    check("reference sweep ran", rows.len() == cfg.sweep.len());
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, cfg.canonical_hash(), cfg.system.seed, &[], &rows)
        .map_err(|e| Error::Config(format!("write: {e}")))?;
    emit(&args.out, &buf)?;

    // Determinism of the harness itself.
    let again = estimate(&exp.build(cfg.sweep[0])?, cfg.system.trials, cfg.system.seed, 0)?;
    check(
        "estimate reproducible",
        again.p_fa.to_bits() == points[0].estimate.p_fa.to_bits()
            && again.e1_n.to_bits() == points[0].estimate.e1_n.to_bits(),
    );

    Ok(if failures == 0 { 0 } else { 1 })
}
