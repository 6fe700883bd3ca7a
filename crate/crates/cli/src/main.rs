//! Command-line driver: generate instances, build models, solve, verify,
//! refine, and render.

mod output;
mod svg;

use clap::{Parser, Subcommand, ValueEnum};
use output::{FeasibilityDoc, HistoryDoc, SolutionDoc};
use regionflow::dqm::ModelError;
use regionflow::hybrid::{HybridError, SeedStrategy};
use regionflow::instance::InstanceError;
use regionflow::solve::SolveError;
use regionflow::verify::VerifyError;
use regionflow::{
    build_dqm, build_qubo, check_contiguity, run_pipeline, select_seeds, solve_exact, solve_sa,
    theorem1_harness, Assignment, AttributeRule, Instance, PenaltyConfig, PipelineParams,
    SaParams, SampleResult, Seeds, Theorem1Verdict,
};
use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

/// Exhaustive search is the default up to this many variables.
const EXACT_LIMIT: usize = 24;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Parser)]
#[command(
    name = "regionflow",
    version,
    about = "Contiguous regionalization via quadratic models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Form {
    /// Plain binary model, exported as sorted coordinate text.
    Qubo,
    /// Discrete (case-valued) model, exported as structured text.
    Dqm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Sampler {
    /// Exhaustive search for small models, annealing otherwise.
    Auto,
    /// Exhaustive search only (refuses large models).
    Exact,
    /// Seeded multi-restart simulated annealing.
    Sa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Attrs {
    /// Single attribute 0 everywhere.
    Constant,
    /// Attribute `row + col` per cell.
    CoordinateSum,
    /// Uniform values from a seeded generator.
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a rook-adjacency grid instance as JSON.
    GenGrid {
        rows: usize,
        cols: usize,
        /// Target region count.
        #[arg(long)]
        p: usize,
        /// Attribute rule for the generated areas.
        #[arg(long, value_enum, default_value_t = Attrs::CoordinateSum)]
        attrs: Attrs,
        /// Seed for `--attrs random`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a quadratic model and export it as text.
    Build {
        #[arg(long)]
        instance: PathBuf,
        /// Model form to emit.
        #[arg(long, value_enum)]
        form: Form,
        /// Root area ids, comma-separated and ordered by region;
        /// chosen automatically when omitted.
        #[arg(long, value_delimiter = ',')]
        roots: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an instance end to end and write a solution file.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// Root area ids, comma-separated and ordered by region;
        /// chosen automatically when omitted.
        #[arg(long, value_delimiter = ',')]
        roots: Vec<String>,
        #[arg(long, value_enum, default_value_t = Sampler::Auto)]
        sampler: Sampler,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long, default_value_t = 1000)]
        sweeps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a solution file against its instance.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        /// Also search the bounded flow space for an independent
        /// connectivity verdict.
        #[arg(long)]
        theorem1: bool,
    },
    /// Run the decomposition pipeline: seed, grow, refine borders.
    Hybrid {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        iterations: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a solution as an SVG map.
    ExportSvg {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the pipeline on a synthetic grid and print a summary line.
    Bench {
        #[arg(long, default_value_t = 10)]
        rows: usize,
        #[arg(long, default_value_t = 10)]
        cols: usize,
        #[arg(long, default_value_t = 5)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    let started = Instant::now();
    match command {
        Command::GenGrid {
            rows,
            cols,
            p,
            attrs,
            seed,
            out,
        } => gen_grid(rows, cols, p, attrs, seed, &out, started),
        Command::Build {
            instance,
            form,
            roots,
            out,
        } => build(&instance, form, &roots, &out, started),
        Command::Solve {
            instance,
            roots,
            sampler,
            seed,
            restarts,
            sweeps,
            out,
        } => solve(&instance, &roots, sampler, seed, restarts, sweeps, &out, started),
        Command::Verify {
            instance,
            solution,
            theorem1,
        } => verify(&instance, &solution, theorem1),
        Command::Hybrid {
            instance,
            seed,
            iterations,
            out,
        } => hybrid(&instance, seed, iterations, &out, started),
        Command::ExportSvg {
            instance,
            solution,
            out,
        } => export_svg(&instance, &solution, &out, started),
        Command::Bench {
            rows,
            cols,
            p,
            seed,
        } => bench(rows, cols, p, seed),
    }
}

fn gen_grid(
    rows: usize,
    cols: usize,
    p: usize,
    attrs: Attrs,
    seed: u64,
    out: &Path,
    started: Instant,
) -> Result<ExitCode, CliError> {
    let rule = match attrs {
        Attrs::Constant => AttributeRule::Constant,
        Attrs::CoordinateSum => AttributeRule::CoordinateSum,
        Attrs::Random => AttributeRule::SeededRandom { seed },
    };
    let instance = Instance::grid(rows, cols, p, rule)?;
    let config = json!({
        "rows": rows,
        "cols": cols,
        "p": p,
        "attrs": format!("{attrs:?}").to_lowercase(),
        "seed": seed,
    });
    output::write_with_manifest(
        out,
        &instance.to_json_string(),
        "gen-grid",
        config,
        started.elapsed().as_millis(),
    )?;
    Ok(ExitCode::SUCCESS)
}

/// Resolves roots from `--roots` ids, or picks spread seeds automatically.
fn resolve_roots(
    instance: &Instance,
    roots: &[String],
) -> Result<(Seeds, bool), CliError> {
    if roots.is_empty() {
        let seeds = select_seeds(instance, SeedStrategy::GreedyMaxMin)?;
        Ok((seeds, true))
    } else {
        Ok((Seeds::from_names(instance, roots)?, false))
    }
}

fn root_names(instance: &Instance, seeds: &Seeds) -> Vec<String> {
    seeds
        .roots()
        .iter()
        .map(|&root| instance.name(root).to_string())
        .collect()
}

fn penalty_json(penalty: &PenaltyConfig) -> serde_json::Value {
    json!({
        "lambda1": penalty.lambda1,
        "lambda2": penalty.lambda2,
        "lambda3": penalty.lambda3,
        "lambda4": penalty.lambda4,
        "m": penalty.m,
        "l": penalty.l,
        "epsilon": penalty.epsilon,
    })
}

fn build(
    instance_path: &Path,
    form: Form,
    roots: &[String],
    out: &Path,
    started: Instant,
) -> Result<ExitCode, CliError> {
    let instance = Instance::from_path(instance_path)?;
    let (seeds, auto_roots) = resolve_roots(&instance, roots)?;
    let penalty = PenaltyConfig::defaults_for(&instance);
    let text = match form {
        Form::Qubo => build_qubo(&instance, &seeds, &penalty)?.qubo.to_coordinate_text(),
        Form::Dqm => build_dqm(&instance, &seeds, &penalty)?.to_text(),
    };
    let config = json!({
        "instance": instance_path.display().to_string(),
        "form": match form { Form::Qubo => "qubo", Form::Dqm => "dqm" },
        "roots": root_names(&instance, &seeds),
        "auto_roots": auto_roots,
        "penalty": penalty_json(&penalty),
    });
    output::write_with_manifest(out, &text, "build", config, started.elapsed().as_millis())?;
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn solve(
    instance_path: &Path,
    roots: &[String],
    sampler: Sampler,
    seed: u64,
    restarts: usize,
    sweeps: usize,
    out: &Path,
    started: Instant,
) -> Result<ExitCode, CliError> {
    let instance = Instance::from_path(instance_path)?;
    let (seeds, auto_roots) = resolve_roots(&instance, roots)?;
    let penalty = PenaltyConfig::defaults_for(&instance);
    let model = build_qubo(&instance, &seeds, &penalty)?;
    let num_vars = model.qubo.num_vars;
    let use_exact = match sampler {
        Sampler::Exact => true,
        Sampler::Sa => false,
        Sampler::Auto => num_vars <= EXACT_LIMIT,
    };
    let (sampler_name, best): (&str, SampleResult) = if use_exact {
        ("exact", solve_exact(&model.qubo, EXACT_LIMIT)?)
    } else {
        let params = SaParams {
            restarts,
            sweeps,
            seed,
            ..SaParams::default()
        };
        ("sa", solve_sa(&model.qubo, &params)?.remove(0))
    };
    let (assignment, _, report) = model.decode(&instance, &best.bits);
    let doc = SolutionDoc {
        version: 1,
        sampler: sampler_name.to_string(),
        params: json!({
            "seed": seed,
            "restarts": restarts,
            "sweeps": sweeps,
            "penalty": penalty_json(&penalty),
        }),
        seeds: root_names(&instance, &seeds),
        num_vars: Some(num_vars),
        energy: best.energy,
        heterogeneity: instance.heterogeneity(&assignment),
        bits_rle: Some(output::rle_encode(&best.bits)),
        labels: labels_doc(&instance, &assignment),
        feasibility: feasibility_doc(&instance, &report),
        history: None,
    };
    let config = json!({
        "instance": instance_path.display().to_string(),
        "sampler": sampler_name,
        "seed": seed,
        "restarts": restarts,
        "sweeps": sweeps,
        "roots": root_names(&instance, &seeds),
        "auto_roots": auto_roots,
        "penalty": penalty_json(&penalty),
    });
    output::write_with_manifest(
        out,
        &doc.to_pretty_string(),
        "solve",
        config,
        started.elapsed().as_millis(),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn labels_doc(instance: &Instance, assignment: &Assignment) -> BTreeMap<String, usize> {
    assignment
        .external_labels()
        .into_iter()
        .enumerate()
        .map(|(i, label)| (instance.name(i).to_string(), label))
        .collect()
}

fn feasibility_doc(
    instance: &Instance,
    report: &regionflow::FeasibilityReport,
) -> FeasibilityDoc {
    FeasibilityDoc {
        feasible: report.feasible(),
        contiguous: report.contiguous,
        one_hot_violations: report
            .one_hot_violations
            .iter()
            .map(|&area| instance.name(area).to_string())
            .collect(),
        link_violations: report.link_violations.len(),
        conservation_residuals: report
            .conservation_residuals
            .iter()
            .map(|(&area, &residual)| (instance.name(area).to_string(), residual))
            .collect(),
    }
}

fn load_solution(path: &Path) -> Result<SolutionDoc, CliError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("solution file does not parse: {e}")))
}

/// Rebuilds the assignment and seeds recorded in a solution document.
fn assignment_from_doc(
    instance: &Instance,
    doc: &SolutionDoc,
) -> Result<(Assignment, Seeds), CliError> {
    let p = instance.p();
    if doc.seeds.len() != p {
        return Err(CliError::Invalid(format!(
            "solution lists {} seeds but the instance wants {p} regions",
            doc.seeds.len()
        )));
    }
    let mut labels = Vec::with_capacity(instance.num_areas());
    for area in 0..instance.num_areas() {
        let name = instance.name(area);
        let &label = doc
            .labels
            .get(name)
            .ok_or_else(|| CliError::Invalid(format!("solution is missing area {name}")))?;
        if label < 1 || label > p {
            return Err(CliError::Invalid(format!(
                "area {name} has region {label}, outside 1..={p}"
            )));
        }
        labels.push(label);
    }
    let seeds = Seeds::from_names(instance, &doc.seeds)?;
    Ok((Assignment::from_external(&labels), seeds))
}

fn verify(
    instance_path: &Path,
    solution_path: &Path,
    theorem1: bool,
) -> Result<ExitCode, CliError> {
    let instance = Instance::from_path(instance_path)?;
    let doc = load_solution(solution_path)?;
    let (assignment, seeds) = assignment_from_doc(&instance, &doc)?;
    let p = instance.p();
    let report = check_contiguity(&instance, &assignment);
    let mut feasible = true;
    for region in 0..p {
        let status = &report.regions[region];
        let size: usize = status.components.iter().map(Vec::len).sum();
        let state = if size == 0 {
            feasible = false;
            "empty".to_string()
        } else if status.connected() {
            "connected".to_string()
        } else {
            feasible = false;
            format!("split into {} components", status.components.len())
        };
        println!("region {}: size {size}, {state}", region + 1);
    }
    for (region, &root) in seeds.roots().iter().enumerate() {
        if assignment.label(root) != region {
            feasible = false;
            println!(
                "root {} is labeled region {}, not its own region {}",
                instance.name(root),
                assignment.label(root) + 1,
                region + 1
            );
        }
    }
    let heterogeneity = instance.heterogeneity(&assignment);
    println!("heterogeneity: {heterogeneity}");
    if (heterogeneity - doc.heterogeneity).abs() > 1e-6 {
        feasible = false;
        println!(
            "stored heterogeneity {} disagrees with the labeling",
            doc.heterogeneity
        );
    }
    if let (Some(runs), Some(num_vars)) = (&doc.bits_rle, doc.num_vars) {
        let bits = output::rle_decode(runs);
        if bits.len() != num_vars {
            feasible = false;
            println!(
                "stored bit runs decode to {} bits, expected {num_vars}",
                bits.len()
            );
        }
    }
    if theorem1 {
        let m = (instance.num_areas().max(1) - 1) as u64;
        let verdict = theorem1_harness(&instance, &assignment, &seeds, m, 500_000_000)?;
        let connected = report.all_connected();
        match verdict {
            Theorem1Verdict::Found { .. } => {
                println!("flow search: balanced within-region flows exist");
                if !connected {
                    feasible = false;
                    println!("flow search disagrees with the contiguity check");
                }
            }
            Theorem1Verdict::NoneExists { .. } => {
                println!("flow search: no balanced within-region flows");
                if connected {
                    feasible = false;
                    println!("flow search disagrees with the contiguity check");
                }
            }
            Theorem1Verdict::Inconclusive => {
                println!("flow search: budget exhausted before a verdict");
            }
        }
    }
    println!("verdict: {}", if feasible { "feasible" } else { "infeasible" });
    Ok(if feasible {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn hybrid(
    instance_path: &Path,
    seed: u64,
    iterations: usize,
    out: &Path,
    started: Instant,
) -> Result<ExitCode, CliError> {
    let instance = Instance::from_path(instance_path)?;
    let params = PipelineParams {
        sa: SaParams::with_seed(seed),
        max_iterations: iterations,
        ..PipelineParams::default()
    };
    let state = run_pipeline(&instance, &params)?;
    let contiguous = check_contiguity(&instance, &state.assignment).all_connected();
    let doc = SolutionDoc {
        version: 1,
        sampler: "hybrid".to_string(),
        params: json!({
            "seed": seed,
            "iterations": iterations,
            "exact_threshold": params.exact_threshold,
        }),
        seeds: root_names(&instance, &state.seeds),
        num_vars: None,
        energy: state.heterogeneity,
        heterogeneity: state.heterogeneity,
        bits_rle: None,
        labels: labels_doc(&instance, &state.assignment),
        feasibility: FeasibilityDoc {
            feasible: contiguous,
            contiguous,
            one_hot_violations: Vec::new(),
            link_violations: 0,
            conservation_residuals: BTreeMap::new(),
        },
        history: Some(
            state
                .history
                .iter()
                .map(|r| HistoryDoc {
                    heterogeneity_before: r.heterogeneity_before,
                    heterogeneity_after: r.heterogeneity_after,
                    moved: r.moved,
                    rejected: r.rejected,
                })
                .collect(),
        ),
    };
    let config = json!({
        "instance": instance_path.display().to_string(),
        "seed": seed,
        "iterations": iterations,
        "roots": root_names(&instance, &state.seeds),
        "auto_roots": true,
    });
    output::write_with_manifest(
        out,
        &doc.to_pretty_string(),
        "hybrid",
        config,
        started.elapsed().as_millis(),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn export_svg(
    instance_path: &Path,
    solution_path: &Path,
    out: &Path,
    started: Instant,
) -> Result<ExitCode, CliError> {
    let instance = Instance::from_path(instance_path)?;
    let doc = load_solution(solution_path)?;
    let (assignment, seeds) = assignment_from_doc(&instance, &doc)?;
    let svg = svg::render(&instance, &assignment, &seeds).map_err(CliError::Invalid)?;
    let config = json!({
        "instance": instance_path.display().to_string(),
        "solution": solution_path.display().to_string(),
    });
    output::write_with_manifest(out, &svg, "export-svg", config, started.elapsed().as_millis())?;
    Ok(ExitCode::SUCCESS)
}

fn bench(rows: usize, cols: usize, p: usize, seed: u64) -> Result<ExitCode, CliError> {
    let instance = Instance::grid(rows, cols, p, AttributeRule::SeededRandom { seed })?;
    let params = PipelineParams {
        sa: SaParams::with_seed(seed),
        ..PipelineParams::default()
    };
    let started = Instant::now();
    let state = run_pipeline(&instance, &params)?;
    let elapsed = started.elapsed();
    println!(
        "areas={} p={p} heterogeneity={} rounds={} wall_clock_ms={}",
        instance.num_areas(),
        state.heterogeneity,
        state.history.len(),
        elapsed.as_millis()
    );
    Ok(ExitCode::SUCCESS)
}
