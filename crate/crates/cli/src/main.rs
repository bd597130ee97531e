use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hlgp::bench::{eval, k_sweep, EvalReport, SolverSetup};
use hlgp::hierarchy::{solve, write_traces, AcceptRule, SolveOptions};
use hlgp::instance::{generate_batch, load_dataset, load_instance, save_dataset, save_instance};
use hlgp::svg::render_svg;
use hlgp::train::rl::{train_rl_from, RlConfig};
use hlgp::train::sl::{bootstrap_sweep, train_sl_from, write_label_cache, SlConfig};
use hlgp::{DecodeMode, DistributionKind, DistributionSpec, EdgeScorePolicy, HlgpError, PermSolverConfig, RoutePlan};

#[derive(Parser, Debug)]
#[command(name = "hlgp", version, about = "Hierarchical learned graph partitioning for CVRP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate random instances as a JSON-lines dataset
    Gen(GenArgs),
    /// Solve one instance and write the route plan
    Solve(SolveArgs),
    /// Train both policies with REINFORCE
    TrainRl(TrainRlArgs),
    /// Train both policies by self-imitation
    TrainSl(TrainSlArgs),
    /// Evaluate a dataset and write per-instance metrics
    Eval(EvalArgs),
    /// Evaluate a dataset for several refinement level counts
    KSweep(KSweepArgs),
    /// Draw a route plan as SVG
    Render(RenderArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Dist {
    Uniform,
    Gaussian,
    Explosion,
    Rotation,
}

impl From<Dist> for DistributionKind {
    fn from(d: Dist) -> Self {
        match d {
            Dist::Uniform => DistributionKind::Uniform,
            Dist::Gaussian => DistributionKind::Gaussian,
            Dist::Explosion => DistributionKind::Explosion,
            Dist::Rotation => DistributionKind::Rotation,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Greedy,
    Sample,
    Beam,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Accept {
    Always,
    #[value(name = "if_better")]
    IfBetter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args, Debug)]
struct DistArgs {
    /// Customer distribution
    #[arg(long, value_enum, default_value = "uniform")]
    distribution: Dist,
    /// Number of customers
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Vehicle capacity
    #[arg(long, default_value_t = 50)]
    capacity: u32,
}

impl DistArgs {
    fn spec(&self, seed: u64) -> DistributionSpec {
        DistributionSpec::new(self.distribution.into(), seed, self.n, self.capacity)
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    dist: DistArgs,
    /// Number of instances; instance i uses seed + i
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Write a single instance object instead of JSON lines (requires --count 1)
    #[arg(long)]
    single: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Global policy checkpoint; zero parameters when omitted
    #[arg(long)]
    global_ckpt: Option<PathBuf>,
    /// Local policy checkpoint; zero parameters when omitted
    #[arg(long)]
    local_ckpt: Option<PathBuf>,
    /// Number of refinement levels
    #[arg(long = "K", default_value_t = 5)]
    k: usize,
    /// Decoding mode for both policies
    #[arg(long, value_enum, default_value = "greedy")]
    mode: Mode,
    /// Beam width when --mode beam
    #[arg(long, default_value_t = 16)]
    beam: usize,
    /// Replacement rule for refined pairs
    #[arg(long, value_enum, default_value = "if_better")]
    accept: Accept,
    /// Restart the global decode on each residual instance
    #[arg(long, value_enum, default_value = "on")]
    restart: OnOff,
    /// Seed for sampling mode
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_policy(path: &Option<PathBuf>) -> hlgp::Result<EdgeScorePolicy> {
    match path {
        Some(p) => EdgeScorePolicy::load(p),
        None => Ok(EdgeScorePolicy::zeros()),
    }
}

impl SolverArgs {
    fn setup(&self) -> hlgp::Result<SolverSetup> {
        if self.beam == 0 {
            return Err(HlgpError::InvalidConfig("--beam must be at least 1".into()));
        }
        let mode = match self.mode {
            Mode::Greedy => DecodeMode::Greedy,
            Mode::Sample => DecodeMode::Sample { seed: self.seed },
            Mode::Beam => DecodeMode::Beam { width: self.beam },
        };
        let opts = SolveOptions {
            levels: self.k,
            global_mode: mode,
            local_mode: mode,
            accept: match self.accept {
                Accept::Always => AcceptRule::Always,
                Accept::IfBetter => AcceptRule::IfBetter,
            },
            restart: matches!(self.restart, OnOff::On),
            ..SolveOptions::default()
        };
        let mut setup = SolverSetup::new(load_policy(&self.global_ckpt)?, load_policy(&self.local_ckpt)?, opts);
        setup.seed = self.seed;
        Ok(setup)
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Instance JSON file
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Route plan output (JSON)
    #[arg(long)]
    out: PathBuf,
    /// Optional partition output (JSON)
    #[arg(long)]
    partition_out: Option<PathBuf>,
    /// Optional per-pair refinement trace (JSON lines)
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Optional SVG plot of the plan
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainRlArgs {
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    /// Sampled trajectories per baseline group
    #[arg(long, default_value_t = 20)]
    samples: usize,
    /// Entropy weight for the global policy
    #[arg(long, default_value_t = 0.1)]
    lambda_g: f64,
    /// Entropy weight for the local policy
    #[arg(long, default_value_t = 0.005)]
    lambda_l: f64,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    instances_per_iter: usize,
    /// Refinement levels used for local training
    #[arg(long = "K-train", default_value_t = 3)]
    k_train: usize,
    /// Train on residual instances as well (on/off)
    #[arg(long, value_enum, default_value = "on")]
    augment: OnOff,
    /// Held-out evaluation period in iterations (0 disables)
    #[arg(long, default_value_t = 0)]
    eval_every: usize,
    #[arg(long, default_value_t = 32)]
    eval_instances: usize,
    /// Checkpoint period in iterations (0 disables)
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for global.json, local.json, log.csv and checkpoints
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct TrainSlArgs {
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    #[arg(long, default_value_t = 100)]
    instances_per_round: usize,
    #[arg(long, default_value_t = 16)]
    beam: usize,
    /// Refinement levels used when labeling
    #[arg(long = "K-label", default_value_t = 3)]
    k_label: usize,
    /// L2 weight for the global policy
    #[arg(long, default_value_t = 1e-6)]
    lambda_g: f64,
    /// L2 weight for the local policy
    #[arg(long, default_value_t = 1e-6)]
    lambda_l: f64,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Updates on sweep labels before self-imitation
    #[arg(long, default_value_t = 200)]
    bootstrap_steps: usize,
    #[arg(long, default_value_t = 4)]
    epochs_per_round: usize,
    #[arg(long, default_value_t = 10)]
    batch_size: usize,
    /// Serialize labels in the order the current policies find most likely
    #[arg(long, value_enum, default_value = "off")]
    policy_order: OnOff,
    /// Start from these checkpoints instead of the sweep bootstrap
    #[arg(long, requires = "init_local")]
    init_global: Option<PathBuf>,
    #[arg(long, requires = "init_global")]
    init_local: Option<PathBuf>,
    /// Write the last round's labels here (JSON lines)
    #[arg(long)]
    label_cache: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for global.json, local.json and log.csv
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Dataset (JSON lines)
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Metrics CSV output
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct KSweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Level counts to evaluate (the --K flag is ignored)
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5")]
    ks: Vec<usize>,
    /// Summary CSV with one row per level count
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Route plan JSON
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn create_dir(dir: &Path) -> hlgp::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HlgpError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> hlgp::Result<()> {
    std::fs::write(path, text).map_err(|e| HlgpError::io(path, e))
}

fn run_gen(a: &GenArgs) -> hlgp::Result<()> {
    let instances = generate_batch(&a.dist.spec(a.seed), a.count)?;
    if a.single {
        if a.count != 1 {
            return Err(HlgpError::InvalidConfig("--single requires --count 1".into()));
        }
        return save_instance(&instances[0], &a.out);
    }
    save_dataset(&instances, &a.out)
}

fn run_solve(a: &SolveArgs) -> hlgp::Result<()> {
    let inst = load_instance(&a.instance)?;
    let setup = a.solver.setup()?;
    let out = solve(&inst, &setup.global, &setup.local, &setup.opts, &setup.perm)?;
    out.plan.save(&a.out)?;
    if let Some(p) = &a.partition_out {
        out.partition.save(p)?;
    }
    if let Some(p) = &a.traces {
        write_traces(&out.traces, p)?;
    }
    if let Some(p) = &a.svg {
        render_svg(&inst, &out.plan, p)?;
    }
    println!("cost {:.6} routes {}", out.cost(), out.plan.tours.len());
    Ok(())
}

fn run_train_rl(a: &TrainRlArgs) -> hlgp::Result<()> {
    let cfg = RlConfig {
        samples_per_instance: a.samples,
        lambda_entropy_global: a.lambda_g,
        lambda_entropy_local: a.lambda_l,
        learning_rate: a.lr,
        iterations: a.iterations,
        instances_per_iter: a.instances_per_iter,
        k_train: a.k_train,
        seed: a.seed,
        augment_subproblems: matches!(a.augment, OnOff::On),
        eval_every: a.eval_every,
        eval_instances: a.eval_instances,
        ..RlConfig::default()
    };
    create_dir(&a.out_dir)?;
    let every = a.checkpoint_every;
    let out = train_rl_from(
        &cfg,
        &a.dist.spec(a.seed),
        EdgeScorePolicy::zeros(),
        EdgeScorePolicy::zeros(),
        |iter, g, l| {
            if every > 0 && (iter + 1) % every == 0 {
                g.save(a.out_dir.join(format!("global_{:06}.json", iter + 1)))?;
                l.save(a.out_dir.join(format!("local_{:06}.json", iter + 1)))?;
            }
            Ok(())
        },
    )?;
    out.global.save(a.out_dir.join("global.json"))?;
    out.local.save(a.out_dir.join("local.json"))?;
    out.log.write_csv(a.out_dir.join("log.csv"))?;
    if let Some(last) = out.log.rows.last() {
        println!("iter {} mean_reward {:.6}", last.iter, last.mean_reward);
    }
    Ok(())
}

fn run_train_sl(a: &TrainSlArgs) -> hlgp::Result<()> {
    let cfg = SlConfig {
        beam_size: a.beam,
        rounds: a.rounds,
        instances_per_round: a.instances_per_round,
        lambda_g: a.lambda_g,
        lambda_l: a.lambda_l,
        learning_rate: a.lr,
        k_label: a.k_label,
        seed: a.seed,
        bootstrap_steps: a.bootstrap_steps,
        epochs_per_round: a.epochs_per_round,
        batch_size: a.batch_size,
        policy_order: a.policy_order == OnOff::On,
        perm: PermSolverConfig::default(),
    };
    create_dir(&a.out_dir)?;
    let spec = a.dist.spec(a.seed);
    let (g, l) = match (&a.init_global, &a.init_local) {
        (Some(g), Some(l)) => (EdgeScorePolicy::load(g)?, EdgeScorePolicy::load(l)?),
        _ => bootstrap_sweep(&cfg, &spec)?,
    };
    let last_round = a.rounds.saturating_sub(1);
    let out = train_sl_from(&cfg, &spec, g, l, |r| {
        if let (Some(path), true) = (&a.label_cache, r.round == last_round) {
            write_label_cache(r.instances, r.labels, path)?;
        }
        Ok(())
    })?;
    out.global.save(a.out_dir.join("global.json"))?;
    out.local.save(a.out_dir.join("local.json"))?;
    out.log.write_csv(a.out_dir.join("log.csv"))?;
    for r in &out.log.rows {
        println!(
            "round {} label_cost {:.6} loss {:.6} accuracy {:.4}",
            r.round, r.mean_label_cost, r.loss, r.step_accuracy
        );
    }
    Ok(())
}

fn run_eval(a: &EvalArgs) -> hlgp::Result<()> {
    let report = eval(&a.dataset, &a.solver.setup()?)?;
    report.write_csv(&a.out)?;
    println!("{}", report.summary());
    Ok(())
}

fn sweep_csv(reports: &[EvalReport], ks: &[usize]) -> String {
    let mut s = String::from("K,avg_cost,std_cost,avg_time_s\n");
    for (k, r) in ks.iter().zip(reports) {
        s.push_str(&format!("{},{},{},{:.2}\n", k, r.avg_cost, r.std_cost, r.avg_time));
    }
    s
}

fn run_k_sweep(a: &KSweepArgs) -> hlgp::Result<()> {
    let instances = load_dataset(&a.dataset)?;
    let reports = k_sweep(&instances, &a.solver.setup()?, &a.ks)?;
    write_text(&a.out, &sweep_csv(&reports, &a.ks))?;
    for r in &reports {
        println!("{}", r.summary());
    }
    Ok(())
}

fn run_render(a: &RenderArgs) -> hlgp::Result<()> {
    let inst = load_instance(&a.instance)?;
    let plan = RoutePlan::load(&a.plan)?;
    render_svg(&inst, &plan, &a.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Solve(a) => run_solve(a),
        Command::TrainRl(a) => run_train_rl(a),
        Command::TrainSl(a) => run_train_sl(a),
        Command::Eval(a) => run_eval(a),
        Command::KSweep(a) => run_k_sweep(a),
        Command::Render(a) => run_render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
