use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use smlm_l0::baseline::local_maxima;
use smlm_l0::eval::{jaccard_sweep, EvalOptions, JaccardTable, Matching, DEFAULT_TOLERANCES_NM};
use smlm_l0::io::{self, HistogramWeight};
use smlm_l0::manifest::{manifest_path, RunManifest};
use smlm_l0::operator::{ForwardOperator, OperatorSpec, PsfSpec};
use smlm_l0::sim::{default_noise_sigma, simulate, sum_frames, FrameStack, Phantom, SimulationSpec};
use smlm_l0::solver::{solve_frame, OuterRecord, RhoFinal, SolverConfig};
use smlm_l0::{Error, GridGeometry, MoleculeSet};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 100_000;

#[derive(Parser, Debug)]
#[command(name = "smlm-l0", version, about = "Grid-based sparse localization for SMLM frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate frames and their ground truth.
    Simulate(SimulateArgs),
    /// Sum consecutive frames of a stack.
    Sum(SumArgs),
    /// Reconstruct molecules frame by frame.
    Localize(LocalizeArgs),
    /// Jaccard indices of reconstructions against a ground truth.
    Evaluate(EvaluateArgs),
    /// Render molecules as an 8-bit PGM histogram on the fine grid.
    Render(RenderArgs),
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Fine pixels per coarse pixel along each axis.
    #[arg(long, default_value_t = 4)]
    upsample: usize,
    /// Coarse pixel size in nm.
    #[arg(long, default_value_t = 100.0)]
    pixel_nm: f64,
}

#[derive(Args, Debug, Clone)]
struct PsfArgs {
    /// PSF full width at half maximum in nm.
    #[arg(long, default_value_t = 258.21)]
    fwhm_nm: f64,
    /// Use the continuous 1/(sqrt(2 pi) sigma) prefactor instead of a unit-sum kernel.
    #[arg(long)]
    literal_kernel: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PhantomKind {
    Uniform,
    Tubes,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Coarse frame size M (frames are M x M).
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    psf: PsfArgs,
    #[arg(long)]
    frames: usize,
    #[arg(long, default_value_t = 10)]
    molecules_per_frame: usize,
    #[arg(long, value_enum, default_value_t = PhantomKind::Tubes)]
    phantom: PhantomKind,
    #[arg(long, default_value_t = 8)]
    tubes: usize,
    #[arg(long, default_value_t = 30.0)]
    tube_width_nm: f64,
    /// Border, in fine pixels, kept free by the uniform phantom.
    #[arg(long, default_value_t = 8)]
    margin_px: usize,
    #[arg(long, default_value_t = 500.0)]
    intensity_min: f64,
    #[arg(long, default_value_t = 1500.0)]
    intensity_max: f64,
    /// Standard deviation of the additive Gaussian noise
    /// [default: 1% of the brightest single-molecule pixel].
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep continuous positions instead of fine pixel centres.
    #[arg(long)]
    off_grid: bool,
    #[arg(long)]
    out_stack: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
}

#[derive(Args, Debug)]
struct SumArgs {
    #[arg(long)]
    group: usize,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, requires = "truth_out")]
    truth_in: Option<PathBuf>,
    #[arg(long, requires = "truth_in")]
    truth_out: Option<PathBuf>,
    /// Keep a trailing group with fewer frames.
    #[arg(long)]
    keep_partial: bool,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    /// Sparse reconstruction under the budget k.
    L0,
    /// Local maxima of the back-projection, at most k per frame.
    Baseline,
}

#[derive(Args, Debug)]
struct LocalizeArgs {
    #[arg(long)]
    in_stack: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    psf: PsfArgs,
    /// Sparsity budget per frame.
    #[arg(long, default_value_t = 170.0)]
    k: f64,
    #[arg(long, default_value_t = 1e-4)]
    rho0: f64,
    #[arg(long, default_value_t = 10.0)]
    rho_growth: f64,
    /// `auto` for the bound computed from the frame, or a number.
    #[arg(long, default_value = "auto")]
    rho_final: String,
    /// Proximal weight of the x-step (`inf` disables it).
    #[arg(long)]
    c: Option<f64>,
    /// Proximal weight of the u-step.
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    fista_tol: Option<f64>,
    #[arg(long)]
    fista_max_iter: Option<usize>,
    #[arg(long)]
    pam_tol: Option<f64>,
    #[arg(long)]
    pam_max_iter: Option<usize>,
    #[arg(long)]
    gap_tol: Option<f64>,
    /// Skip the support refit when the coupling gap stays open.
    #[arg(long)]
    no_fallback: bool,
    #[arg(long, value_enum, default_value_t = Method::L0)]
    method: Method,
    /// Relative threshold of the baseline method.
    #[arg(long, default_value_t = 0.05)]
    baseline_threshold: f64,
    /// Worker threads; frames are distributed over them.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    out_molecules: PathBuf,
    #[arg(long)]
    out_trace: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MatchingArg {
    Greedy,
    Optimal,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    truth: PathBuf,
    /// One or more reconstructions; each becomes a table row.
    #[arg(long, required = true, num_args = 1..)]
    recon: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TOLERANCES_NM)]
    tolerances: Vec<f64>,
    #[arg(long, value_enum, default_value_t = MatchingArg::Greedy)]
    matching: MatchingArg,
    /// Shift added to reconstructed x coordinates before matching.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    offset_x_nm: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    offset_y_nm: f64,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[command(flatten)]
    grid: GridArgs,
    /// CSV copy of the table; the text table goes to stdout.
    #[arg(long)]
    out_table: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightArg {
    Count,
    Intensity,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    molecules: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = WeightArg::Count)]
    weight: WeightArg,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[command(flatten)]
    grid: GridArgs,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA },
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a, args),
        Command::Sum(a) => cmd_sum(a, args),
        Command::Localize(a) => cmd_localize(a, args),
        Command::Evaluate(a) => cmd_evaluate(a, args),
        Command::Render(a) => cmd_render(a, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn geometry(size: usize, grid: &GridArgs) -> Result<GridGeometry, Failure> {
    GridGeometry::new(size, grid.upsample, grid.pixel_nm).map_err(|e| Failure::usage(e.to_string()))
}

fn psf_spec(psf: &PsfArgs, g: &GridGeometry) -> Result<PsfSpec, Failure> {
    let p = PsfSpec::from_fwhm_nm(psf.fwhm_nm, g.fine_pixel_nm()).map_err(|e| Failure::usage(e.to_string()))?;
    if psf.literal_kernel {
        PsfSpec::new(p.sigma_fine_px, p.kernel_radius_px, false).map_err(|e| Failure::usage(e.to_string()))
    } else {
        Ok(p)
    }
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs, args: Vec<String>) -> CliResult {
    let g = geometry(a.size, &a.grid)?;
    let psf = psf_spec(&a.psf, &g)?;
    let phantom = match a.phantom {
        PhantomKind::Uniform => Phantom::RandomUniform {
            molecules_per_frame: a.molecules_per_frame,
            margin_px: a.margin_px,
        },
        PhantomKind::Tubes => Phantom::Tubes {
            molecules_per_frame: a.molecules_per_frame,
            tubes: a.tubes,
            width_nm: a.tube_width_nm,
        },
    };
    let op_spec = OperatorSpec::new(g, psf).map_err(|e| Failure::usage(e.to_string()))?;
    let noise_sigma = match a.noise_sigma {
        Some(s) => s,
        None => default_noise_sigma(&ForwardOperator::new(op_spec), a.intensity_max),
    };
    let spec = SimulationSpec {
        geometry: g,
        psf,
        phantom,
        intensity_range: (a.intensity_min, a.intensity_max),
        noise_sigma,
        frames: a.frames,
        rng_seed: a.seed,
        off_grid: a.off_grid,
    };
    spec.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let (stack, truth) = simulate(&spec)?;
    io::write_stack(&a.out_stack, &stack)?;
    io::write_molecules(&a.out_truth, &truth)?;

    let mut m = RunManifest::new("simulate", args);
    m.geometry = Some(g);
    m.psf = Some(psf);
    m.simulation = Some(spec);
    m.output("stack", &a.out_stack);
    m.output("truth", &a.out_truth);
    m.write(&manifest_path(&a.out_stack))?;
    Ok(())
}

fn cmd_sum(a: SumArgs, args: Vec<String>) -> CliResult {
    if a.group == 0 {
        return Err(Failure::usage("--group must be at least 1"));
    }
    let stack = io::read_stack(&a.input, a.grid.upsample, a.grid.pixel_nm)?;
    let summed = sum_frames(&stack, a.group, a.keep_partial)?;
    io::write_stack(&a.out, &summed)?;

    let mut m = RunManifest::new("sum", args);
    m.geometry = Some(*stack.geometry());
    m.input("stack", &a.input);
    m.output("stack", &a.out);
    m.extra.insert("group".into(), a.group.into());
    if let (Some(tin), Some(tout)) = (&a.truth_in, &a.truth_out) {
        let truth = io::read_molecules(tin, *stack.geometry())?;
        io::write_molecules(tout, &truth.regroup_frames(a.group)?)?;
        m.input("truth", tin);
        m.output("truth", tout);
    }
    m.write(&manifest_path(&a.out))?;
    Ok(())
}

fn solver_config(a: &LocalizeArgs) -> Result<SolverConfig, Failure> {
    let mut cfg = SolverConfig {
        k: a.k,
        rho0: a.rho0,
        rho_growth: a.rho_growth,
        support_fallback: !a.no_fallback,
        ..SolverConfig::default()
    };
    cfg.rho_final = match a.rho_final.trim() {
        "auto" => RhoFinal::TheoremBound,
        v => RhoFinal::Value(
            v.parse()
                .map_err(|_| Failure::usage(format!("--rho-final must be `auto` or a number, got {v:?}")))?,
        ),
    };
    if let Some(c) = a.c {
        cfg.c = c;
    }
    if let Some(b) = a.b {
        cfg.b = b;
    }
    if let Some(v) = a.fista_tol {
        cfg.fista_tol = v;
    }
    if let Some(v) = a.fista_max_iter {
        cfg.fista_max_iter = v;
    }
    if let Some(v) = a.pam_tol {
        cfg.pam_tol = v;
    }
    if let Some(v) = a.pam_max_iter {
        cfg.pam_max_iter = v;
    }
    if let Some(v) = a.gap_tol {
        cfg.gap_tol = v;
    }
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(cfg)
}

fn format_trace(rows: &[(usize, Vec<OuterRecord>)]) -> String {
    let mut s = String::from("frame,outer_iter,rho,objective,gap,l0\n");
    for (frame, trace) in rows {
        for r in trace {
            let _ = writeln!(
                s,
                "{frame},{},{:.6e},{:.10e},{:.6e},{}",
                r.outer_iter, r.rho, r.objective, r.gap, r.l0
            );
        }
    }
    s
}

fn cmd_localize(a: LocalizeArgs, args: Vec<String>) -> CliResult {
    if a.threads == 0 {
        return Err(Failure::usage("--threads must be at least 1"));
    }
    if !(0.0..=1.0).contains(&a.baseline_threshold) {
        return Err(Failure::usage("--baseline-threshold must lie in [0, 1]"));
    }
    let cfg = solver_config(&a)?;
    let stack: FrameStack = io::read_stack(&a.in_stack, a.grid.upsample, a.grid.pixel_nm)?;
    let g = *stack.geometry();
    let psf = psf_spec(&a.psf, &g)?;
    let op = ForwardOperator::new(OperatorSpec::new(g, psf)?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads)
        .build()
        .map_err(|e| Failure::usage(format!("cannot start {} threads: {e}", a.threads)))?;

    type FrameOut = Result<(MoleculeSet, Vec<OuterRecord>), Error>;
    let results: Vec<FrameOut> = match a.method {
        Method::L0 => {
            let spectral = if stack.is_empty() {
                None
            } else {
                Some(op.estimate_spectral(POWER_TOL, POWER_MAX_ITER)?)
            };
            pool.install(|| {
                stack
                    .frames()
                    .par_iter()
                    .map(|f| {
                        let spectral = spectral.as_ref().expect("nonempty stack");
                        solve_frame(f, &op, spectral, &cfg).map(|r| (r.molecules, r.outcome.trace))
                    })
                    .collect()
            })
        }
        Method::Baseline => pool.install(|| {
            stack
                .frames()
                .par_iter()
                .map(|f| local_maxima(f, &op, cfg.k, a.baseline_threshold).map(|m| (m, Vec::new())))
                .collect()
        }),
    };

    let mut molecules = MoleculeSet::empty(g);
    let mut traces = Vec::new();
    let mut worst: Option<Failure> = None;
    for (frame, res) in stack.frames().iter().zip(results) {
        match res {
            Ok((mols, trace)) => {
                molecules.extend(mols)?;
                traces.push((frame.frame_index(), trace));
            }
            Err(e) => {
                eprintln!("frame {}: {e}", frame.frame_index());
                let f = Failure::from(e);
                if worst.as_ref().is_none_or(|w| f.code > w.code) {
                    worst = Some(f);
                }
            }
        }
    }
    io::write_molecules(&a.out_molecules, &molecules)?;
    if let Some(path) = &a.out_trace {
        write_text(path, &format_trace(&traces))?;
    }

    let mut m = RunManifest::new("localize", args);
    m.geometry = Some(g);
    m.psf = Some(psf);
    m.solver = Some(cfg);
    m.threads = Some(a.threads);
    m.input("stack", &a.in_stack);
    m.output("molecules", &a.out_molecules);
    if let Some(path) = &a.out_trace {
        m.output("trace", path);
    }
    let method = match a.method {
        Method::L0 => "l0",
        Method::Baseline => "baseline",
    };
    m.extra.insert("method".into(), method.into());
    if let Method::Baseline = a.method {
        m.extra.insert("baseline_threshold".into(), a.baseline_threshold.into());
    }
    m.write(&manifest_path(&a.out_molecules))?;

    match worst {
        None => Ok(()),
        Some(f) => Err(Failure {
            code: f.code,
            message: format!("some frames failed; last reported error: {}", f.message),
        }),
    }
}

fn row_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_evaluate(a: EvaluateArgs, args: Vec<String>) -> CliResult {
    if a.tolerances.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Failure::usage("tolerances must be positive"));
    }
    let g = geometry(a.size, &a.grid)?;
    let opts = EvalOptions {
        matching: match a.matching {
            MatchingArg::Greedy => Matching::Greedy,
            MatchingArg::Optimal => Matching::Optimal,
        },
        offset_nm: (a.offset_x_nm, a.offset_y_nm),
    };
    let truth = io::read_molecules(&a.truth, g)?;
    let mut table = JaccardTable::new(a.tolerances.clone());
    for path in &a.recon {
        let recon = io::read_molecules(path, g)?;
        let results = jaccard_sweep(&truth, &recon, &a.tolerances, &opts)?;
        table.push_row(row_name(path), &results)?;
    }
    print!("{}", table.to_text());

    if let Some(out) = &a.out_table {
        write_text(out, &table.to_csv())?;
        let mut m = RunManifest::new("evaluate", args);
        m.geometry = Some(g);
        m.input("truth", &a.truth);
        for (i, p) in a.recon.iter().enumerate() {
            m.input(&format!("recon{i}"), p);
        }
        m.output("table", out);
        m.extra.insert("evaluation".into(), serde_json::to_value(opts).expect("options serialize"));
        m.write(&manifest_path(out))?;
    }
    Ok(())
}

fn cmd_render(a: RenderArgs, args: Vec<String>) -> CliResult {
    let g = geometry(a.size, &a.grid)?;
    let mols = io::read_molecules(&a.molecules, g)?;
    let weight = match a.weight {
        WeightArg::Count => HistogramWeight::Count,
        WeightArg::Intensity => HistogramWeight::Intensity,
    };
    io::render_histogram(&mols, &g, weight, &a.out)?;
    let mut m = RunManifest::new("render", args);
    m.geometry = Some(g);
    m.input("molecules", &a.molecules);
    m.output("image", &a.out);
    m.write(&manifest_path(&a.out))?;
    Ok(())
}
