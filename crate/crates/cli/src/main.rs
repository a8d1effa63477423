//! Command-line driver for the adaptation benchmarks.
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anisomesh::adapt::{adapt_drive, remesh, remesh_metric, AdaptOutcome, AdaptParams, MetricKind};
use anisomesh::bench::{convergence_study, dmp_check, grading_diagnostic};
use anisomesh::fem::ProblemSpec;
use anisomesh::io::{read_medit, read_mtr, write_convergence_csv, write_medit, write_mtr, write_svg, write_trace_csv, Window};
use anisomesh::mesh::{Mesh, Point};
use anisomesh::problems::{AnisoDiffusionProblem, CornerProblem, VariationalProblem};
use anisomesh::remesh::RemeshParams;
use anisomesh::{Error, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

#[derive(Parser, Debug)]
#[command(version, about = "Anisotropic mesh adaptation driven by hierarchical basis error estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Laplace problem on a sector with a reentrant corner.
    Corner(RunArgs),
    /// Nonlinear variational problem solved by Newton's method.
    Varprob(RunArgs),
    /// Anisotropic diffusion around a square hole.
    Anisodiff(RunArgs),
    /// Error slopes of the corner problem over a ladder of element counts.
    Convergence(LadderArgs),
    /// Remeshes a MEDIT mesh to a vertex metric read from an `.mtr` file.
    Adapt(RemeshArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Stopping tolerance on the mesh quality.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 25)]
    max_iter: usize,
    /// Relative update tolerance of the Gauss-Seidel sweeps.
    #[arg(long, default_value_t = 0.01)]
    sweep_tol: f64,
    /// Seed of the remesher's random perturbations.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// SVG zoom window `x,y,w,h`.
    #[arg(long)]
    zoom: Option<Window>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// uniform, hb, hessian, vp, dmp-h or dmp-hb; defaults per problem.
    #[arg(long)]
    metric: Option<MetricKind>,
    /// Target element count.
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct LadderArgs {
    #[arg(long, default_value = "hb")]
    metric: MetricKind,
    /// Ascending target element counts.
    #[arg(long, value_delimiter = ',', default_value = "1000,4000,16000,64000")]
    ladder: Vec<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct RemeshArgs {
    /// Input mesh in MEDIT format.
    #[arg(long)]
    mesh: PathBuf,
    /// Vertex metric in `.mtr` format.
    #[arg(long)]
    mtr: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn params(common: &Common, n: usize) -> AdaptParams {
    let mut p = AdaptParams::new(n);
    p.eps = common.eps;
    p.max_iterations = common.max_iter;
    p.sweep_tol = common.sweep_tol;
    p.remesh.seed = common.seed;
    p
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn write_outcome(out: &AdaptOutcome, problem: &ProblemSpec, kind: MetricKind, common: &Common, p: &AdaptParams) -> Result<()> {
    let dir = &common.out;
    let stem = format!("{}-{kind}", problem.name);
    write_trace_csv(&out.trace, dir.join(format!("{stem}-trace.csv")))?;
    write_medit(&out.mesh, dir.join(format!("{stem}.mesh")))?;
    let (metric, _) = remesh_metric(problem, kind, &out.mesh, &out.solution, &out.estimate, p, p.target_elements as f64)?;
    write_mtr(&metric, dir.join(format!("{stem}.mtr")))?;
    write_svg(&out.mesh, Some(&out.solution), common.zoom, dir.join(format!("{stem}.svg")))?;
    Ok(())
}

fn run(problem: ProblemSpec, mesh: impl Fn(usize) -> Mesh, kind: MetricKind, n: usize, common: &Common) -> Result<AdaptOutcome> {
    out_dir(&common.out)?;
    let p = params(common, n);
    let out = adapt_drive(&problem, kind, &mesh(n), &p)?;
    let last = out.trace.last().expect("trace is never empty");
    println!(
        "{} [{kind}]: {} iterations, converged {}, N = {}, Q_mesh = {:.4}, min u = {:.3e}, max u = {:.6}, max AR = {:.1}",
        problem.name,
        out.trace.records.len() - 1,
        out.trace.converged,
        last.elements,
        last.q_mesh,
        last.min_u,
        last.max_u,
        last.max_aspect_ratio
    );
    if let (Some(l2), Some(h1)) = (last.l2_error, last.h1_error) {
        println!("  L2 error {l2:.4e}, H1 error {h1:.4e}");
    }
    write_outcome(&out, &problem, kind, common, &p)?;
    Ok(out)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Corner(a) => {
            let c = CornerProblem::default();
            let out = run(c.spec(), |n| c.mesh(n), a.metric.unwrap_or(MetricKind::Hb), a.n.unwrap_or(1225), &a.common)?;
            if let Ok(s) = grading_diagnostic(&out.mesh, Point::zeros()) {
                println!("  grading slope {s:.3}");
            }
        }
        Command::Varprob(a) => {
            let v = VariationalProblem;
            run(v.spec(), |n| v.mesh(n), a.metric.unwrap_or(MetricKind::Vp), a.n.unwrap_or(1200), &a.common)?;
        }
        Command::Anisodiff(a) => {
            let d = AnisoDiffusionProblem;
            let out = run(d.spec(), |n| d.mesh(n), a.metric.unwrap_or(MetricKind::DmpHb), a.n.unwrap_or(4300), &a.common)?;
            let r = dmp_check(&out.solution, (0.0, 2.0));
            println!("  undershoot {:.3e}, overshoot {:.3e}", r.undershoot, r.overshoot);
        }
        Command::Convergence(a) => {
            if a.ladder.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter("the ladder must be ascending".into()));
            }
            out_dir(&a.common.out)?;
            let c = CornerProblem::default();
            let p = params(&a.common, a.ladder[0]);
            let (table, _) = convergence_study(&c.spec(), a.metric, |n| c.mesh(n), &a.ladder, &p)?;
            for r in &table.rows {
                println!(
                    "N {:>6}  L2 {:.4e}  H1 {:.4e}  Q {:.4}  sweeps {}  converged {}",
                    r.realized_n, r.l2_error, r.h1_error, r.q_mesh, r.sweeps, r.converged
                );
            }
            println!("slopes: L2 {:.3}, H1 {:.3}", table.l2_slope, table.h1_slope);
            write_convergence_csv(&table, a.common.out.join(format!("convergence-{}.csv", a.metric)))?;
        }
        Command::Adapt(a) => {
            out_dir(&a.out)?;
            let mesh = read_medit(&a.mesh)?;
            let metric = read_mtr(&a.mtr)?;
            let rp = RemeshParams { seed: a.seed, ..Default::default() };
            let (next, stats) = remesh(&mesh, &metric, &rp)?;
            info!("{stats:?}");
            println!("{} -> {} triangles", mesh.num_triangles(), next.num_triangles());
            write_medit(&next, a.out.join("adapted.mesh"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
