//! `qbench`: benchmarks of the built-in examples, canonical recipes from
//! test files, and optical setups run against device models.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use qbench::benchmark::{
    det_benchmark, is_ppt, ppt_min_eigenvalue, ppt_offset, prob_benchmark, product_numerical_range, BenchConfig,
    PnrConfig,
};
use qbench::canonical::{canonical_det_test, default_tau, fully_blackbox_test, CanonicalTestRecipe};
use qbench::cv::{
    average_fidelity_oracle, build_setup, device_by_name, run_setup, CvParams, FockCutoff, QuadConfig,
};
use qbench::model::{performance_operator, score_det_direct, score_prob, score_prob_direct, Channel, DetTest, ProbTest};
use qbench::random::{random_channel, random_subchannel};
use qbench::tensor::Operator;
use qbench::{builtins, QbError};

use output::{emit, render, Format};

#[derive(Parser, Debug)]
#[command(name = "qbench", version, about = "Classical thresholds and canonical tests for quantum devices")]
struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format; CSV keeps scalar fields only.
    #[arg(long, value_enum, default_value = "json", global = true)]
    format: Format,
    /// Seed for every randomized step.
    #[arg(long, default_value_t = 0x5eed, global = true)]
    seed: u64,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Measure-and-prepare threshold of a built-in scenario or a test file.
    Benchmark(BenchArgs),
    /// Canonical recipe (one entangled input, one observable) for a test.
    Canonical(CanonicalArgs),
    /// Optical setup for coherent-state transmission run on a device.
    Cv(CvArgs),
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// teleport, chsh, equator, coherent; a size may follow as `teleport:3`.
    #[arg(long, conflicts_with = "omega", required_unless_present = "omega")]
    builtin: Option<String>,
    /// Size of the built-in: teleport dimension (2), equator/coherent state count (3).
    #[arg(long)]
    dim: Option<usize>,
    /// JSON file with an operator Ω, a probabilistic test {omega, sigma_A}, or a
    /// deterministic test {sigma_AR, observable}.
    #[arg(long)]
    omega: Option<PathBuf>,
    /// Multistart count of the product-vector search.
    #[arg(long, default_value_t = 64)]
    restarts: usize,
    /// Grid mesh for the certification bracket [default: 0.05 when a factor is a qubit, off otherwise].
    #[arg(long)]
    grid_mesh: Option<f64>,
    /// Skip the grid bracket.
    #[arg(long)]
    no_grid: bool,
}

#[derive(Args, Debug)]
struct CanonicalArgs {
    /// Test JSON: {sigma_AR, observable} or {omega, sigma_A}.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    test: Option<PathBuf>,
    /// Built-in probabilistic test (same names as `benchmark`).
    #[arg(long)]
    builtin: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Input marginal τ_A as operator JSON [default: σ_A, or the maximally
    /// mixed state on the support of Ω for deterministic tests].
    #[arg(long)]
    tau: Option<PathBuf>,
    /// Fully black-box recipe built on the benchmark minimizer.
    #[arg(long)]
    blackbox: bool,
    #[arg(long, default_value_t = 64)]
    restarts: usize,
}

#[derive(Args, Debug)]
struct CvArgs {
    /// Gain.
    #[arg(long, default_value_t = 1.0)]
    g: f64,
    /// Inverse variance of the Gaussian prior on α.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Inverse variance of the input noise; omit for pure coherent inputs.
    #[arg(long)]
    mu: Option<f64>,
    /// Target gᾱ instead of gα.
    #[arg(long)]
    conjugate: bool,
    /// Fock dimension per mode.
    #[arg(long, default_value_t = 40)]
    cutoff: usize,
    /// Allowed truncation leakage of the input state.
    #[arg(long, default_value_t = 1e-8)]
    leak_tol: f64,
    /// Gauss–Hermite nodes per axis for the oracle and heterodyne device.
    #[arg(long, default_value_t = 24)]
    nodes: usize,
    /// Allowed prior-weighted leakage in the oracle.
    #[arg(long, default_value_t = 1e-5)]
    tail_tol: f64,
    /// identity, scale:q, heterodyne-mp, vacuum, attenuator:t, or a channel JSON file.
    #[arg(long, default_value = "identity")]
    device: String,
    /// Skip the quadrature oracle.
    #[arg(long)]
    no_oracle: bool,
    /// Largest |score − oracle| and truncation leakage reported as certified.
    #[arg(long, default_value_t = 1e-4)]
    agree_tol: f64,
}

enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<QbError> for Failure {
    fn from(e: QbError) -> Self {
        match e {
            QbError::Argument(_)
            | QbError::Json(_)
            | QbError::Contract(_)
            | QbError::Precondition(_)
            | QbError::Invertibility(_)
            | QbError::PptViolation(_)
            | QbError::Refusal(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

/// A finished report and whether its numbers are certified.
struct Outcome {
    report: Value,
    certified: bool,
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors; 2 is reserved for uncertified results.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let res = match &cli.cmd {
        Command::Benchmark(a) => cmd_benchmark(a, cli.seed),
        Command::Canonical(a) => cmd_canonical(a, cli.seed),
        Command::Cv(a) => cmd_cv(a),
    };
    match res {
        Ok(o) => {
            if let Err(e) = emit(&render(&o.report, cli.format), cli.out.as_deref()) {
                eprintln!("error: cannot write report: {e}");
                return ExitCode::from(1);
            }
            if o.certified {
                ExitCode::SUCCESS
            } else {
                eprintln!("warning: result is not certified");
                ExitCode::from(2)
            }
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("QBENCH_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("QBENCH_THREADS must be a positive integer, got '{v}'"))?;
    if n == 0 {
        return Err("QBENCH_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

/// Test input after sniffing the JSON layout.
enum TestInput {
    Omega(Operator),
    Prob(ProbTest),
    Det(DetTest),
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: parse error: {e}", path.display())))
}

fn decode<T: serde::de::DeserializeOwned>(v: Value, path: &Path) -> Result<T, Failure> {
    serde_json::from_value(v).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_test(path: &Path) -> Result<TestInput, Failure> {
    let v = read_json(path)?;
    let keys = |k: &str| v.get(k).is_some();
    if keys("sigma_AR") && keys("observable") {
        let t: DetTest = decode(v, path)?;
        Ok(TestInput::Det(DetTest::new(t.sigma_ar, t.observable)?))
    } else if keys("omega") && keys("sigma_A") {
        let t: ProbTest = decode(v, path)?;
        Ok(TestInput::Prob(ProbTest::new(t.omega, t.sigma_a)?))
    } else if keys("dims") && keys("re") {
        Ok(TestInput::Omega(decode(v, path)?))
    } else {
        Err(Failure::Usage(format!(
            "{}: expected an operator {{dims, re, im}}, {{omega, sigma_A}} or {{sigma_AR, observable}}",
            path.display()
        )))
    }
}

fn builtin(name: &str, dim: Option<usize>) -> Result<builtins::Scenario, Failure> {
    let (base, size) = match name.split_once(':') {
        Some((b, s)) => {
            (b, Some(s.parse::<usize>().map_err(|_| Failure::Usage(format!("bad size in builtin '{name}'")))?))
        }
        None => (name, None),
    };
    Ok(builtins::by_name(base, size.or(dim))?)
}

fn grid_mesh(omega: &Operator, args: &BenchArgs) -> Option<f64> {
    if args.no_grid {
        return None;
    }
    args.grid_mesh.or_else(|| (omega.dims().iter().min() == Some(&2)).then_some(0.05))
}

fn cmd_benchmark(args: &BenchArgs, seed: u64) -> Result<Outcome, Failure> {
    let (label, input, rep) = match (&args.builtin, &args.omega) {
        (Some(name), _) => {
            let s = builtin(name, args.dim)?;
            (s.name.clone(), TestInput::Prob(s.prob_test()?), s.rep)
        }
        (None, Some(path)) => (path.display().to_string(), read_test(path)?, None),
        (None, None) => return Err(Failure::Usage("give --builtin or --omega".into())),
    };
    let omega = match &input {
        TestInput::Omega(o) => o.clone(),
        TestInput::Prob(t) => t.omega.clone(),
        TestInput::Det(t) => performance_operator(t)?,
    };
    let pnr = PnrConfig { restarts: args.restarts, seed, grid_mesh: grid_mesh(&omega, args), ..PnrConfig::default() };
    let plain = PnrConfig { grid_mesh: None, ..pnr.clone() };
    let pnr_omega = product_numerical_range(&omega, &plain)?.value;

    // Non-PPT Ω is shifted by ‖Ω‖₂ I. Scores then move by ‖Ω‖₂ d_A for
    // channels, and for operations only when σ_A = I/d_A.
    let da = omega.dims()[1];
    let (work, offset) = if is_ppt(&omega)? {
        (omega.clone(), 0.0)
    } else {
        if let TestInput::Prob(t) = &input {
            if t.sigma_a.sub(&Operator::maximally_mixed(&[da]))?.norm_fro() > 1e-12 {
                return Err(QbError::PptViolation(ppt_min_eigenvalue(&omega)?).into());
            }
        }
        let (shifted, s) = ppt_offset(&omega);
        (shifted, s * da as f64)
    };

    // A covariant built-in has σ_A = I/d, so its probabilistic threshold is
    // the deterministic closed form.
    let mut report = match (input, rep) {
        (TestInput::Prob(t), None) => {
            let r = prob_benchmark(&ProbTest::new(work, t.sigma_a.clone())?, &pnr)?;
            json!({
                "kind": "probabilistic",
                "value": r.value - offset,
                "lower": r.lower_bound - offset,
                "upper": r.upper_bound - offset,
                "method": r.method,
                "converged": r.converged,
                "certified": r.certified(),
                "grid": r.grid.map(|(lo, hi)| (lo - offset, hi - offset)),
                "tau_min": t.sigma_a,
            })
        }
        (_, rep) => {
            let cfg = BenchConfig { pnr, rep, ..BenchConfig::default() };
            let r = det_benchmark(&work, &cfg)?;
            json!({
                "kind": "deterministic",
                "value": r.value - offset,
                "lower": r.lower - offset,
                "upper": r.upper - offset,
                "method": r.method,
                "converged": r.converged,
                "certified": r.certified(),
                "grid": r.grid.map(|(lo, hi)| (lo - offset, hi - offset)),
                "tau_min": r.tau_min,
            })
        }
    };
    let certified = report["certified"].as_bool().unwrap_or(false);
    let obj = report.as_object_mut().expect("object");
    obj.insert("command".into(), json!("benchmark"));
    obj.insert("input".into(), json!(label));
    obj.insert("offset".into(), json!(offset));
    obj.insert("pnr_omega".into(), json!(pnr_omega));
    obj.insert("restarts".into(), json!(args.restarts));
    obj.insert("seed".into(), json!(seed));
    Ok(Outcome { report, certified })
}

fn cmd_canonical(args: &CanonicalArgs, seed: u64) -> Result<Outcome, Failure> {
    let input = match (&args.test, &args.builtin) {
        (Some(p), _) => read_test(p)?,
        (None, Some(name)) => TestInput::Prob(builtin(name, args.dim)?.prob_test()?),
        (None, None) => return Err(Failure::Usage("give --test or --builtin".into())),
    };
    let tau = match &args.tau {
        Some(p) => {
            let op: Operator = decode(read_json(p)?, p)?;
            Some(op)
        }
        None => None,
    };
    let (omega, sigma_a, det) = match input {
        TestInput::Det(t) => (performance_operator(&t)?, None, Some(t)),
        TestInput::Prob(t) => (t.omega.clone(), Some(t.sigma_a.clone()), None),
        TestInput::Omega(o) => (o, None, None),
    };

    let recipe: CanonicalTestRecipe = if args.blackbox {
        let cfg = BenchConfig {
            pnr: PnrConfig { restarts: args.restarts, seed, ..PnrConfig::default() },
            ..BenchConfig::default()
        };
        fully_blackbox_test(&omega, &cfg)?
    } else {
        let tau = match (tau, &sigma_a) {
            (Some(t), _) => t,
            (None, Some(s)) => s.clone(),
            (None, None) => default_tau(&omega)?,
        };
        canonical_det_test(&omega, &tau)?
    };

    // The black-box recipe realizes Ω shifted by offset/d_A times identity.
    let da = omega.dims()[1] as f64;
    let target = omega.add(&Operator::identity(omega.dims()).scale(recipe.offset / da))?;
    let residual = recipe.residual(&target)?;
    let marginal = if args.blackbox { None } else { sigma_a.as_ref() };
    let check = self_check(&recipe, &omega, marginal, det.as_ref(), seed)?;
    let certified = residual <= 1e-9 && check["abs_diff"].as_f64().is_some_and(|d| d <= 1e-9);
    let mut report = serde_json::to_value(&recipe).map_err(QbError::from)?;
    let obj = report.as_object_mut().expect("object");
    obj.insert("command".into(), json!("canonical"));
    obj.insert("residual".into(), json!(residual));
    obj.insert("self_check".into(), check);
    obj.insert("seed".into(), json!(seed));
    Ok(Outcome { report, certified })
}

/// Scores one seeded channel on the original test and on the recipe: a
/// trace-nonincreasing one when the marginal `σ_A` is given, otherwise a
/// channel.
fn self_check(
    recipe: &CanonicalTestRecipe,
    omega: &Operator,
    sigma_a: Option<&Operator>,
    det: Option<&DetTest>,
    seed: u64,
) -> Result<Value, Failure> {
    let (dout, din) = (omega.dims()[0], omega.dims()[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let canon = recipe.det_test()?;
    if let Some(sigma) = sigma_a {
        let ch = random_subchannel(&mut rng, din, dout, 2);
        let (s0, p0) = score_prob(&ProbTest::new(omega.clone(), sigma.clone())?, &ch)?;
        let (s1, p1) = score_prob_direct(&canon, &ch)?;
        return Ok(json!({
            "channel": "random trace-nonincreasing",
            "score_original": s0, "p_succ_original": p0,
            "score_canonical": s1, "p_succ_canonical": p1,
            "abs_diff": (s0 - s1).abs().max((p0 - p1).abs()),
        }));
    }
    let ch = random_channel(&mut rng, din, dout, 2);
    let s0 = match det {
        Some(t) => score_det_direct(t, &ch)?,
        None => qbench::model::score_det_jam(omega, &qbench::model::jamiolkowski(&ch))?,
    };
    let s1 = score_det_direct(&canon, &ch)? - recipe.offset;
    Ok(json!({
        "channel": "random trace-preserving",
        "score_original": s0,
        "score_canonical": s1,
        "abs_diff": (s0 - s1).abs(),
    }))
}

fn load_device(spec: &str, g: f64, n_max: usize) -> Result<(Channel, String), Failure> {
    let path = Path::new(spec);
    if path.is_file() {
        let ch: Channel = decode(read_json(path)?, path)?;
        if ch.dims_in() != n_max || ch.dims_out() != n_max {
            return Err(Failure::Usage(format!(
                "{spec}: channel acts on {}→{} levels, cutoff is {n_max}",
                ch.dims_in(),
                ch.dims_out()
            )));
        }
        return Ok((ch, format!("file:{spec}")));
    }
    Ok((device_by_name(spec, g, n_max)?, spec.to_string()))
}

fn cmd_cv(args: &CvArgs) -> Result<Outcome, Failure> {
    let params = CvParams::new(args.g, args.lambda, args.mu, args.conjugate)?;
    let cutoff = FockCutoff::new(args.cutoff, args.leak_tol)?;
    let quad = QuadConfig { nodes: args.nodes, tail_tol: args.tail_tol };
    if args.nodes == 0 {
        return Err(Failure::Usage("--nodes must be positive".into()));
    }
    let setup = build_setup(params, cutoff)?;
    let (device, device_label) = load_device(&args.device, args.g, args.cutoff)?;
    let run = run_setup(&setup, &device)?;
    let oracle = if args.no_oracle { None } else { Some(average_fidelity_oracle(&device, &params, &cutoff, &quad)?) };
    let abs_diff = oracle.map(|o| (run.score - o.value).abs());
    let certified = run.leakage <= args.agree_tol && abs_diff.is_none_or(|d| d <= args.agree_tol);
    let report = json!({
        "command": "cv",
        "params": params,
        "device": device_label,
        "cutoff": cutoff,
        "nodes": args.nodes,
        "branch": setup.branch,
        "stages": setup.stages,
        "score": run.score,
        "p_succ": run.p_succ,
        "leakage": run.leakage,
        "quality": run.quality,
        "oracle": oracle.map(|o| o.value),
        "oracle_truncation_bound": oracle.map(|o| o.truncation_bound),
        "abs_diff": abs_diff,
        "agree_tol": args.agree_tol,
        "certified": certified,
    });
    Ok(Outcome { report, certified })
}
