//! `pmp`: inference, exact marginals and certificates for presheaf models.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use presheaf_mp::bp::{bp_run, BpOptions, Init};
use presheaf_mp::energy::{criticality_residual, Hamiltonians, DEFAULT_CRITICAL_TOL, DEFAULT_SECTION_TOL};
use presheaf_mp::io::{self, Model};
use presheaf_mp::mp::{mp_run, MpOptions, StepRule};
use presheaf_mp::oracle;
use presheaf_mp::presheaf::{FieldBundle, DEFAULT_SEARCH_CAP};
use presheaf_mp::Error;

#[derive(Parser)]
#[command(name = "pmp", version, about = "Belief propagation and operator-form message passing on presheaves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run BP or MP and write the beliefs.
    Infer(InferArgs),
    /// Exact marginals by enumeration.
    Exact {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        evidence: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certificates and identities.
    #[command(subcommand)]
    Check(CheckCommand),
    /// Natural transformations.
    #[command(subcommand)]
    Transform(TransformCommand),
    /// Poset utilities.
    #[command(subcommand)]
    Poset(PosetCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Mp,
    Bp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Step {
    Fixed,
    Scaled,
}

#[derive(clap::Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    algo: Algo,
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Random initial messages in [-0.1, 0.1]; zero messages when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// MP step rule.
    #[arg(long, value_enum, default_value_t = Step::Scaled)]
    step: Step,
    #[arg(long)]
    evidence: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Section and criticality residuals of a beliefs file.
    Critical {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        beliefs: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SECTION_TOL)]
        section_tol: f64,
        #[arg(long, default_value_t = DEFAULT_CRITICAL_TOL)]
        critical_tol: f64,
    },
    /// Intertwining residual of message passing under a transformation.
    Intertwine {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        target_model: Option<PathBuf>,
        #[arg(long)]
        transform: PathBuf,
        /// 1: increment intertwining, 3: full-map intertwining with fiber weights.
        #[arg(long, value_parser = ["1", "3"])]
        theorem: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Tree factorization and entropy decomposition residuals.
    Tree {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Free energy at the posterior against -ln P(evidence).
    Variational {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        evidence: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

#[derive(Subcommand)]
enum TransformCommand {
    /// Write the target model with pushed-forward energies.
    Apply {
        #[arg(long)]
        transform: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        target_model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PosetCommand {
    /// Möbius function and overcounting numbers.
    Mobius {
        #[arg(long)]
        model: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Validation(String),
    /// Non-convergence or a residual above tolerance.
    Threshold,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) | Error::Io(_) | Error::InvalidOption(_) => Failure::Usage(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn emit(v: &Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = io::to_pretty(v);
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn threshold(ok: bool) -> Outcome {
    if ok {
        Ok(())
    } else {
        Err(Failure::Threshold)
    }
}

fn with_evidence(model: &Model, evidence: Option<&Path>) -> Result<Hamiltonians, Failure> {
    let Some(path) = evidence else {
        return Ok(model.hamiltonians.clone());
    };
    let spec = model
        .graphical
        .as_ref()
        .ok_or_else(|| Failure::Usage("evidence requires a graphical model".into()))?;
    let obs = io::load_evidence(path, spec)?;
    Ok(oracle::conditioning_to_hamiltonian(spec, &model.presheaf, &model.hamiltonians, &obs)?)
}

fn infer(args: &InferArgs) -> Outcome {
    let model = io::load_model(&args.model)?;
    let h = with_evidence(&model, args.evidence.as_deref())?;
    let f = &model.presheaf;
    let init = args.seed.map_or(Init::Ones, Init::Random);
    let (beliefs, converged) = match args.algo {
        Algo::Bp => {
            let opts = BpOptions {
                max_iters: args.max_iters.unwrap_or(1000),
                tol: args.tol,
                damping: args.damping,
                init,
            };
            let run = bp_run(f, &h, &opts)?;
            eprintln!(
                "bp: converged={} iterations={} change={:e}",
                run.converged, run.state.iteration, run.state.last_delta
            );
            (run.beliefs, run.converged)
        }
        Algo::Mp => {
            let opts = MpOptions {
                max_iters: args.max_iters.unwrap_or(10_000),
                tol: args.tol,
                damping: args.damping,
                init,
                step: match args.step {
                    Step::Fixed => StepRule::Fixed,
                    Step::Scaled => StepRule::Scaled,
                },
            };
            let run = mp_run(f, &h, &model.weights_or_ones(), &opts)?;
            eprintln!(
                "mp: converged={} iterations={} residual={:e}",
                run.converged, run.iterations, run.residual
            );
            (run.beliefs, run.converged)
        }
    };
    emit(&io::bundle_json(f, &beliefs), args.out.as_deref())?;
    threshold(converged)
}

fn exact_marginals(model: &Model, h: &Hamiltonians) -> Result<FieldBundle, Failure> {
    Ok(match &model.graphical {
        Some(spec) => {
            let joint = oracle::exact_joint_hamiltonians(spec, &model.presheaf, h)?;
            oracle::exact_marginals(spec, &joint)
        }
        None => oracle::section_marginals(&model.presheaf, h, DEFAULT_SEARCH_CAP)?.0,
    })
}

fn exact(model: &Path, evidence: Option<&Path>, out: Option<&Path>) -> Outcome {
    let model = io::load_model(model)?;
    let h = with_evidence(&model, evidence)?;
    let m = exact_marginals(&model, &h)?;
    emit(&io::bundle_json(&model.presheaf, &m), out)
}

fn check(cmd: &CheckCommand) -> Outcome {
    match cmd {
        CheckCommand::Critical {
            model,
            beliefs,
            section_tol,
            critical_tol,
        } => {
            let model = io::load_model(model)?;
            let q = io::load_beliefs(beliefs, &model.presheaf)?;
            let c = criticality_residual(&model.presheaf, &model.hamiltonians, &q)?;
            emit(&json!({"r_section": c.section, "r_critical": c.critical}), None)?;
            threshold(c.is_critical(*section_tol, *critical_tol))
        }
        CheckCommand::Intertwine {
            model,
            target_model,
            transform,
            theorem,
            trials,
            seed,
            tol,
        } => {
            let file = io::load_transform_file(transform)?;
            let src_path = model.clone().or(file.source.clone()).ok_or_else(|| {
                Failure::Usage("no source model: pass --model or set `source` in the transform".into())
            })?;
            let tgt_path = target_model.clone().or(file.target.clone()).ok_or_else(|| {
                Failure::Usage("no target model: pass --target-model or set `target` in the transform".into())
            })?;
            let src = io::load_model(&src_path)?;
            let tgt = io::load_model(&tgt_path)?;
            let phi = file.build(&src.presheaf, &tgt.presheaf)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let residual = if theorem == "1" {
                phi.check_theorem1(&src.hamiltonians, &src.weights_or_ones(), &tgt.weights_or_ones(), *trials, &mut rng)?
            } else {
                phi.check_theorem3(&src.hamiltonians, *trials, &mut rng)?
            };
            emit(&json!({"theorem": theorem.parse::<u32>().unwrap_or(0), "trials": trials, "residual": residual}), None)?;
            threshold(residual < *tol)
        }
        CheckCommand::Tree { model, tol } => {
            let model = io::load_model(model)?;
            let spec = model
                .graphical
                .as_ref()
                .ok_or_else(|| Failure::Usage("tree checks require a graphical model".into()))?;
            let joint = oracle::exact_joint_hamiltonians(spec, &model.presheaf, &model.hamiltonians)?;
            let fact = oracle::tree_factorization_check(spec, &joint)?;
            let ent = oracle::entropy_decomposition_check(spec, &joint)?;
            emit(&json!({"factorization": fact, "entropy": ent}), None)?;
            threshold(fact < *tol && ent < *tol)
        }
        CheckCommand::Variational { model, evidence, tol } => {
            let model = io::load_model(model)?;
            let spec = model
                .graphical
                .as_ref()
                .ok_or_else(|| Failure::Usage("the variational check requires a graphical model".into()))?;
            let obs = io::load_evidence(evidence, spec)?;
            let joint = oracle::exact_joint_hamiltonians(spec, &model.presheaf, &model.hamiltonians)?;
            let (matrix, nx, ny, y) = split_joint(spec, &joint, &obs);
            let r = oracle::variational_identity_check(&matrix, nx, ny, y)?;
            emit(&json!({"residual": r}), None)?;
            threshold(r < *tol)
        }
    }
}

/// Rearranges a joint as `P(x, y)` with `y` the observed variables.
fn split_joint(
    spec: &presheaf_mp::GraphicalSpec,
    joint: &[f64],
    obs: &[(usize, usize)],
) -> (Vec<f64>, usize, usize, usize) {
    let observed: Vec<usize> = obs.iter().map(|&(v, _)| v).collect();
    let radix = |vars: &[usize]| vars.iter().map(|&v| spec.domain(v)).product::<usize>();
    let hidden: Vec<usize> = (0..spec.variables().len()).filter(|v| !observed.contains(v)).collect();
    let (nx, ny) = (radix(&hidden), radix(&observed));
    let code = |vars: &[usize], digits: &[usize]| {
        vars.iter()
            .rev()
            .fold(0, |acc, &v| acc * spec.domain(v) + digits[v])
    };
    let mut m = vec![0.0; nx * ny];
    for (k, &p) in joint.iter().enumerate() {
        let d = oracle::decode_joint(spec, k);
        m[code(&hidden, &d) * ny + code(&observed, &d)] += p;
    }
    let mut yd = vec![0; spec.variables().len()];
    obs.iter().for_each(|&(v, s)| yd[v] = s);
    (m, nx, ny, code(&observed, &yd))
}

fn transform(cmd: &TransformCommand) -> Outcome {
    let TransformCommand::Apply {
        transform,
        model,
        target_model,
        out,
    } = cmd;
    let file = io::load_transform_file(transform)?;
    let src_path = model
        .clone()
        .or(file.source.clone())
        .ok_or_else(|| Failure::Usage("no source model: pass --model or set `source` in the transform".into()))?;
    let tgt_path = target_model
        .clone()
        .or(file.target.clone())
        .ok_or_else(|| Failure::Usage("no target structure: set `target` in the transform or pass --target-model".into()))?;
    let src = io::load_model(&src_path)?;
    let tgt = io::load_model(&tgt_path)?;
    let phi = file.build(&src.presheaf, &tgt.presheaf)?;
    let pushed = Model {
        hamiltonians: phi.push_hamiltonian(&src.hamiltonians)?,
        weights: None,
        ..tgt
    };
    emit(&io::model_json(&pushed), out.as_deref())
}

fn mobius(model: &Path) -> Outcome {
    let model = io::load_model(model)?;
    let p = model.poset();
    let mut mu = Map::new();
    for a in 0..p.len() {
        let mut row = Map::new();
        for b in 0..p.len() {
            if p.leq(b, a) {
                row.insert(p.name(b).into(), json!(p.mobius().mu(a, b)));
            }
        }
        mu.insert(p.name(a).into(), Value::Object(row));
    }
    let mut c = Map::new();
    for (a, &v) in p.overcount().iter().enumerate() {
        c.insert(p.name(a).into(), json!(v));
    }
    emit(&json!({"mu": mu, "c": c}), None)
}

fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Infer(args) => infer(args),
        Command::Exact { model, evidence, out } => exact(model, evidence.as_deref(), out.as_deref()),
        Command::Check(c) => check(c),
        Command::Transform(t) => transform(t),
        Command::Poset(PosetCommand::Mobius { model }) => mobius(model),
    }
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Threshold) => ExitCode::from(2),
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
