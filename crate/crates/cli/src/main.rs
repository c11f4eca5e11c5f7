use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use zenocert::hybrid::{simulate, Execution, HybridSystem, SimOptions, SystemFile};
use zenocert::poly::parse;
use zenocert::sdp::SdpOptions;
use zenocert::sos::{check_sos, SosCheck};
use zenocert::zeno::{
    bisect, grid_points, monte_carlo_points, sweep, verify, Direction, Formulation, MultiplierPolicy, Outcome,
    RSearch, SynthesisConfig, Verification,
};

mod manifest;
use manifest::RunManifest;

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! outln {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout(), $($arg)*)?
    };
}

#[derive(Parser)]
#[command(name = "zenocert", version, about = "Sum-of-squares certificates of Zeno stability for polynomial hybrid systems")]
struct Cli {
    /// Log progress to stderr (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a Zeno stability certificate
    Verify(VerifyArgs),
    /// Simulate one execution and write the trajectory as CSV
    Simulate(SimulateArgs),
    /// Verify over a grid or Monte-Carlo sample of constants and parameters
    Sweep(SweepArgs),
    /// Bisect on a constant for the extreme certified value
    Bisect(BisectArgs),
    /// Decide whether a polynomial is a sum of squares
    CheckSos(CheckSosArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FormulationArg {
    Auto,
    Nominal,
    Parametric,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum DirectionArg {
    Max,
    Min,
}

#[derive(Args, Serialize)]
struct SynthesisArgs {
    /// Degree of every Lyapunov function
    #[arg(long, default_value_t = 4)]
    degree: u32,
    /// Degree for one mode, MODE=DEGREE
    #[arg(long = "mode-degree", value_parser = parse_mode_degree)]
    mode_degree: Vec<(String, u32)>,
    /// Contraction values tried for one mode at a time
    #[arg(long = "rq-grid", value_delimiter = ',', conflicts_with = "rq")]
    rq_grid: Option<Vec<f64>>,
    /// One fixed contraction value per mode, in mode order
    #[arg(long, value_delimiter = ',')]
    rq: Option<Vec<f64>>,
    /// Retry at two degrees higher after a failed search, up to this degree
    #[arg(long = "max-degree")]
    max_degree: Option<u32>,
    #[arg(long, value_enum, default_value_t = FormulationArg::Auto)]
    formulation: FormulationArg,
    /// Upper bound on multiplier degrees
    #[arg(long = "multiplier-degree")]
    multiplier_degree: Option<u32>,
    /// Also use pairwise products of constraints
    #[arg(long)]
    schmudgen: bool,
    /// Sampling points per mode for post-verification
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-iter", default_value_t = 200)]
    max_iter: usize,
}

impl SynthesisArgs {
    fn config(&self) -> SynthesisConfig {
        let mut c = SynthesisConfig::with_degree(self.degree);
        c.mode_degrees = self.mode_degree.iter().cloned().collect();
        if let Some(g) = &self.rq_grid {
            c.r = RSearch::Grid(g.clone());
        }
        if let Some(r) = &self.rq {
            c.r = RSearch::Fixed(r.clone());
        }
        if let Some(d) = self.max_degree {
            c.escalate = true;
            c.max_degree = d;
        }
        c.formulation = match self.formulation {
            FormulationArg::Auto => Formulation::Auto,
            FormulationArg::Nominal => Formulation::Nominal,
            FormulationArg::Parametric => Formulation::Parametric,
        };
        c.multipliers = MultiplierPolicy {
            max_degree: self.multiplier_degree,
            schmudgen: self.schmudgen,
        };
        c.samples = self.samples;
        c.seed = self.seed;
        c.sdp = SdpOptions {
            max_iter: self.max_iter,
            ..SdpOptions::default()
        };
        c
    }
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    /// System file (JSON)
    system: PathBuf,
    #[command(flatten)]
    synthesis: SynthesisArgs,
    /// Override a constant or fix a parameter, NAME=VALUE
    #[arg(long = "set", value_parser = parse_assignment)]
    set: Vec<(String, f64)>,
    /// Certificate JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    system: PathBuf,
    /// Initial mode and state, e.g. `--init 1 1,0`
    #[arg(long, num_args = 2, value_names = ["MODE", "STATE"], required = true, allow_hyphen_values = true)]
    init: Vec<String>,
    /// Parameter values, NAME=VALUE[,NAME=VALUE...]
    #[arg(long, value_delimiter = ',', value_parser = parse_assignment)]
    params: Vec<(String, f64)>,
    /// Override a constant, NAME=VALUE
    #[arg(long = "set", value_parser = parse_assignment)]
    set: Vec<(String, f64)>,
    #[arg(long, default_value_t = 50.0)]
    horizon: f64,
    #[arg(long = "max-transitions", default_value_t = 100_000)]
    max_transitions: usize,
    /// Trajectory CSV; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    system: PathBuf,
    #[command(flatten)]
    synthesis: SynthesisArgs,
    /// Grid axis, NAME=LO:HI:COUNT or NAME=V1,V2,...
    #[arg(long, value_parser = parse_axis, conflicts_with = "mc")]
    grid: Vec<(String, Vec<f64>)>,
    /// Number of Monte-Carlo points drawn from the --range boxes
    #[arg(long, requires = "range")]
    mc: Option<usize>,
    /// Monte-Carlo range, NAME=LO:HI
    #[arg(long, value_parser = parse_range)]
    range: Vec<(String, f64, f64)>,
    /// Sweep CSV; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct BisectArgs {
    system: PathBuf,
    #[command(flatten)]
    synthesis: SynthesisArgs,
    /// Constant to bisect on
    #[arg(long)]
    param: String,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], required = true, allow_negative_numbers = true)]
    bracket: Vec<f64>,
    #[arg(long, value_enum)]
    direction: DirectionArg,
    #[arg(long, default_value_t = 0.01)]
    tol: f64,
    /// Bisection JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct CheckSosArgs {
    /// Polynomial expression
    expr: String,
    /// Variables, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    vars: Vec<String>,
    /// Print the Gram matrix and its monomial basis
    #[arg(long)]
    gram: bool,
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let value = value.trim().parse().map_err(|e| format!("`{value}`: {e}"))?;
    Ok((name.trim().to_string(), value))
}

fn parse_mode_degree(s: &str) -> Result<(String, u32), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected MODE=DEGREE, got `{s}`"))?;
    let value = value.trim().parse().map_err(|e| format!("`{value}`: {e}"))?;
    Ok((name.trim().to_string(), value))
}

fn parse_axis(s: &str) -> Result<(String, Vec<f64>), String> {
    let (name, spec) = s.split_once('=').ok_or_else(|| format!("expected NAME=..., got `{s}`"))?;
    let nums = |list: &str, sep: char| -> Result<Vec<f64>, String> {
        list.split(sep)
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
            .collect()
    };
    let values = if spec.contains(':') {
        let parts = nums(spec, ':')?;
        let [lo, hi, count] = parts[..] else {
            return Err(format!("expected LO:HI:COUNT, got `{spec}`"));
        };
        if count < 1.0 || count.fract() != 0.0 {
            return Err(format!("count {count} is not a positive integer"));
        }
        let n = count as usize;
        if n == 1 {
            vec![lo]
        } else {
            // snapped to 12 significant digits
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| format!("{:.11e}", lo + step * i as f64).parse().expect("formatted float"))
                .collect()
        }
    } else {
        nums(spec, ',')?
    };
    Ok((name.trim().to_string(), values))
}

fn parse_range(s: &str) -> Result<(String, f64, f64), String> {
    let (name, spec) = s.split_once('=').ok_or_else(|| format!("expected NAME=LO:HI, got `{s}`"))?;
    let (lo, hi) = spec.split_once(':').ok_or_else(|| format!("expected LO:HI, got `{spec}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("`{lo}`: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("`{hi}`: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok((name.trim().to_string(), lo, hi))
}

fn load(path: &Path) -> Result<(SystemFile, Vec<u8>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let file = SystemFile::from_json(text).with_context(|| format!("parsing {}", path.display()))?;
    Ok((file, bytes))
}

/// Constants of the file are overridden, declared parameters are fixed.
fn build(file: &SystemFile, assignments: &[(String, f64)]) -> Result<HybridSystem> {
    let (params, consts): (Vec<_>, Vec<_>) =
        assignments.iter().cloned().partition(|(n, _)| file.parameters.contains(n));
    let system = file.build(&consts)?;
    Ok(if params.is_empty() {
        system
    } else {
        system.instantiate(&params)?
    })
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn json_with_manifest(value: impl Serialize, out: &Path) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    if let Some(obj) = v.as_object_mut() {
        obj.insert("manifest".into(), RunManifest::reference(out).into());
    }
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn print_attempts(v: &Verification) {
    for a in &v.attempts {
        eprintln!(
            "  degrees {:?} r {:?}: {:?} ({}, {} iterations, {:.3}s){}",
            a.degrees,
            a.r,
            a.outcome,
            a.status,
            a.iterations,
            a.solve_seconds,
            a.note.as_ref().map(|n| format!(" {n}")).unwrap_or_default()
        );
    }
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let (file, bytes) = load(&args.system)?;
    let manifest = RunManifest::start("verify", Some((&args.system, &bytes)), args);
    let system = build(&file, &args.set)?;
    let v = verify(&system, &args.synthesis.config())?;
    outln!("verdict: {}", v.outcome);
    outln!("formulation: {}", v.formulation);
    if let Some(cert) = &v.certificate {
        for (mode, f) in system.modes.iter().zip(&cert.functions) {
            outln!("V_{} = {}", mode.id, f);
        }
        outln!("alpha: {}", cert.alpha);
        outln!("gamma: {}", cert.gamma);
        outln!("r: {:?}", cert.r_values);
        outln!("identity residual: {:e}", cert.multipliers.max_identity_residual);
        outln!(
            "sampling: {} violations beyond {:e}",
            cert.sampling.violations(),
            cert.sampling.cert_margin
        );
    } else {
        eprintln!("attempts:");
        print_attempts(&v);
    }
    if let Some(out) = &args.out {
        if let Some(cert) = &v.certificate {
            #[derive(Serialize)]
            struct Record<'a> {
                #[serde(flatten)]
                certificate: &'a zenocert::zeno::ZenoCertificate,
                constants: std::collections::BTreeMap<String, f64>,
                attempts: &'a [zenocert::zeno::Attempt],
            }
            let consts: Vec<_> = args.set.iter().filter(|(n, _)| !file.parameters.contains(n)).cloned().collect();
            let record = Record {
                certificate: cert,
                constants: file.constant_values(&consts)?,
                attempts: &v.attempts,
            };
            std::fs::write(out, json_with_manifest(&record, out)?)
                .with_context(|| format!("writing {}", out.display()))?;
        }
        manifest.finish(v.outcome.as_str(), out)?;
    }
    Ok(v.outcome.exit_code())
}

fn trajectory_csv(system: &HybridSystem, exec: &Execution<f64>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string(), "mode".to_string()];
    header.extend(system.states.iter().cloned());
    w.write_record(&header)?;
    for iv in &exec.intervals {
        for (t, x) in iv.times.iter().zip(&iv.states) {
            let mut rec = vec![t.to_string(), iv.mode.clone()];
            rec.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let (file, bytes) = load(&args.system)?;
    let manifest = RunManifest::start("simulate", Some((&args.system, &bytes)), args);
    let system = file.build(&args.set)?;
    let mode = &args.init[0];
    let x0: Vec<f64> = args.init[1]
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("initial state component `{v}`")))
        .collect::<Result<_>>()?;
    let opts = SimOptions {
        horizon: args.horizon,
        max_transitions: args.max_transitions,
        ..SimOptions::default()
    };
    let exec = simulate(&system, mode, &x0, &args.params, &opts)?;
    let mut text = trajectory_csv(&system, &exec)?;
    let mut verdict = format!("# verdict={} transitions={}", exec.verdict, exec.transitions.len());
    if let Some(t) = exec.zeno_time {
        verdict.push_str(&format!(" zeno_time={t}"));
    }
    if let Some(out) = &args.out {
        verdict.push_str(&format!(" manifest={}", RunManifest::reference(out)));
    }
    text.push_str(&verdict);
    text.push('\n');
    write_output(args.out.as_deref(), &text)?;
    if let Some(out) = &args.out {
        outln!("{}", verdict.trim_start_matches("# "));
        manifest.finish(exec.verdict.as_str(), out)?;
    }
    Ok(0)
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let (file, bytes) = load(&args.system)?;
    let manifest = RunManifest::start("sweep", Some((&args.system, &bytes)), args);
    let points = match args.mc {
        Some(n) => monte_carlo_points(&args.range, n, args.synthesis.seed),
        None if !args.grid.is_empty() => grid_points(&args.grid),
        None => bail!("give --grid axes or --mc with --range boxes"),
    };
    let result = sweep(&file, &args.synthesis.config(), &points);
    let mut text = result.to_csv();
    if let Some(out) = &args.out {
        text.push_str(&format!("# manifest={}\n", RunManifest::reference(out)));
    }
    write_output(args.out.as_deref(), &text)?;
    let summary = format!(
        "{} points: {} certified, {} no-certificate, {} inconclusive",
        result.rows.len(),
        result.count(Outcome::Certified),
        result.count(Outcome::NoCertificate),
        result.count(Outcome::Inconclusive)
    );
    eprintln!("{summary}");
    if let Some(out) = &args.out {
        manifest.finish(&summary, out)?;
    }
    Ok(0)
}

fn cmd_bisect(args: &BisectArgs) -> Result<i32> {
    let (file, bytes) = load(&args.system)?;
    let manifest = RunManifest::start("bisect", Some((&args.system, &bytes)), args);
    let direction = match args.direction {
        DirectionArg::Max => Direction::Maximize,
        DirectionArg::Min => Direction::Minimize,
    };
    let bracket = (args.bracket[0], args.bracket[1]);
    let res = bisect(&file, &args.param, &args.synthesis.config(), bracket, direction, args.tol)?;
    match res.bound {
        Some(b) => outln!("bound: {b}"),
        None => outln!("bound: none"),
    }
    if let Some((good, bad)) = res.final_bracket {
        outln!("final bracket: certified {good}, not certified {bad}");
    }
    if let Some(note) = &res.note {
        outln!("note: {note}");
    }
    if let Some(out) = &args.out {
        std::fs::write(out, json_with_manifest(&res, out)?).with_context(|| format!("writing {}", out.display()))?;
        let outcome = res.bound.map(|b| format!("bound {b}")).unwrap_or_else(|| "no bound".into());
        manifest.finish(&outcome, out)?;
    }
    Ok(0)
}

fn cmd_check_sos(args: &CheckSosArgs) -> Result<i32> {
    let p = parse::<f64>(&args.expr, &args.vars)?;
    let code = match check_sos(&p, &SdpOptions::default())? {
        SosCheck::Sos { basis, gram } => {
            outln!("sos");
            if args.gram {
                let names: Vec<String> = basis
                    .entries()
                    .iter()
                    .map(|m| zenocert::Polynomial::from_terms(&args.vars, [(m.clone(), 1.0)]).to_string())
                    .collect();
                outln!("basis: [{}]", names.join(", "));
                for i in 0..gram.rows() {
                    let row: Vec<String> = (0..gram.cols()).map(|j| gram[(i, j)].to_string()).collect();
                    outln!("[{}]", row.join(", "));
                }
            }
            0
        }
        SosCheck::NotSos { ray } => {
            outln!("not-sos");
            if ray.is_none() {
                outln!("odd degree");
            }
            2
        }
        SosCheck::Inconclusive { status } => {
            outln!("inconclusive ({status:?})");
            3
        }
    };
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bisect(a) => cmd_bisect(a),
        Command::CheckSos(a) => cmd_check_sos(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}
