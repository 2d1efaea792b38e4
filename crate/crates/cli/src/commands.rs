//! One function per subcommand. Each writes its results into the output
//! directory; solver failures are also recorded there before returning.

use std::path::{Path, PathBuf};
use std::time::Instant;

use choquard_core::diagnostics::{diagnose, verify_level_inequalities};
use choquard_core::riesz::{convolve, convolve_direct, convolve_direct_at};
use choquard_core::solver::{self, ContinuationRecord};
use choquard_core::{io, Choquard, DiagnosticsReport, EnergyBreakdown, Field, Grid, RieszKernel, SolveReport, Solution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{load_config, Mode, RunConfig, AUTO_BOX_START, AUTO_BOX_TAIL};
use crate::{CliError, Command, RunArgs};

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Groundstate(args) => with_run(Mode::Groundstate, args, groundstate),
        Command::Nodal(args) => with_run(Mode::Nodal, args, nodal),
        Command::Continuation(args) => with_run(Mode::Continuation, args, continuation),
        Command::Levels(args) => with_run(Mode::Levels, args, levels),
        Command::Validate(args) => with_run(Mode::Validate, args, validate),
        Command::ConvolveBench { dim, points_per_axis, alpha, box_length, seed } => {
            let alpha = alpha.unwrap_or(if dim == 3 { 2.0 } else { dim as f64 / 2.0 });
            convolve_bench(dim, points_per_axis, alpha, box_length, seed)
        }
    }
}

#[derive(Serialize)]
struct Failure<'a> {
    mode: &'a str,
    error: String,
}

/// Loads and validates the config, prepares the output directory with a
/// copy of the config, runs `body`, and records a solver failure as
/// `<mode>.json`.
fn with_run(
    mode: Mode,
    args: RunArgs,
    body: impl FnOnce(&RunConfig, &Path) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let config = load_config(&args.config, mode)?;
    let out = args
        .output_dir
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --output-dir or set `output_dir`".into()))?;
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    let original = std::fs::read(&args.config).map_err(|e| CliError::Config(e.to_string()))?;
    io::write_atomic(&out.join("config.json"), &original)?;
    let result = body(&config, &out);
    if let Err(CliError::Solver(e)) = &result {
        let failure = Failure { mode: mode.name(), error: e.to_string() };
        io::write_json(&out.join(format!("{}.json", mode.name())), &failure)?;
    }
    result
}

fn progress(msg: impl AsRef<str>) {
    eprintln!("[choquard] {}", msg.as_ref());
}

/// Model at exponent `p` on the configured grid. Without an explicit box
/// length the box is grown around the groundstate at `p_box`; that
/// groundstate is returned when `p_box == p`.
fn build_model(config: &RunConfig, p: f64, p_box: f64) -> Result<(Choquard, Option<Solution>), CliError> {
    let params = config.params(p)?;
    let (length, gs) = match config.box_length {
        Some(l) => (l, None),
        None => {
            progress(format!("choosing the box length from the groundstate at p = {p_box}"));
            let (l, gs) = solver::auto_box_length(
                config.params(p_box)?,
                config.points_per_axis,
                &config.solver(),
                AUTO_BOX_START,
                AUTO_BOX_TAIL,
            )?;
            progress(format!("box length L = {l}"));
            (l, (p_box == p).then_some(gs))
        }
    };
    let grid = Grid::new(config.dim, config.points_per_axis, length)?;
    Ok((Choquard::new(grid, params)?, gs))
}

fn store_field(out: &Path, name: &str, solution: &mut Solution) -> Result<PathBuf, CliError> {
    let path = out.join(name);
    io::write_field(&path, &solution.field)?;
    solution.report.field_path = Some(PathBuf::from(name));
    Ok(path)
}

#[derive(Serialize)]
struct GroundstateOutput {
    box_length: f64,
    report: SolveReport,
    diagnostics: DiagnosticsReport,
}

fn groundstate(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let p = config.p.expect("validated");
    let (model, known) = build_model(config, p, p)?;
    let mut gs = match known {
        Some(gs) => gs,
        None => solver::groundstate_solve(&model, &config.solver())?,
    };
    progress(format!("c0 = {} after {} iterations", gs.report.level, gs.report.iterations));
    store_field(out, "groundstate.chqf", &mut gs)?;
    let diagnostics = diagnose(&model, &gs.field, config.degenerate_tol)?;
    let output = GroundstateOutput { box_length: model.grid().box_length(), report: gs.report, diagnostics };
    io::write_json(&out.join("groundstate.json"), &output)?;
    Ok(())
}

#[derive(Serialize)]
struct NodalOutput {
    box_length: f64,
    groundstate: SolveReport,
    nodal: SolveReport,
    diagnostics: DiagnosticsReport,
}

fn nodal(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let p = config.p.expect("validated");
    let cfg = config.solver();
    let (model, known) = build_model(config, p, p)?;
    let mut gs = match known {
        Some(gs) => gs,
        None => solver::groundstate_solve(&model, &cfg)?,
    };
    progress(format!("c0 = {}", gs.report.level));
    let seed = match &config.field {
        Some(path) => {
            let field = io::read_field(path)?;
            if field.grid() != model.grid() {
                return Err(CliError::Config(format!("warm start {} is on a different grid", path.display())));
            }
            field
        }
        None => solver::nodal_seed(&gs.field, cfg.seed_offset(model.grid())),
    };
    let mut sol = solver::nodal_solve(&model, &cfg, Some(&seed))?;
    progress(format!("c_nod = {} after {} iterations", sol.report.level, sol.report.iterations));
    let diagnostics = verify_level_inequalities(&model, &gs, &sol, cfg.degenerate_tol)?;
    store_field(out, "groundstate.chqf", &mut gs)?;
    store_field(out, "nodal.chqf", &mut sol)?;
    let output = NodalOutput {
        box_length: model.grid().box_length(),
        groundstate: gs.report,
        nodal: sol.report,
        diagnostics,
    };
    io::write_json(&out.join("nodal.json"), &output)?;
    Ok(())
}

#[derive(Serialize)]
struct ContinuationOutput {
    box_length: f64,
    schedule: Vec<f64>,
    records: Vec<ContinuationRecord>,
    polished: SolveReport,
    diagnostics: DiagnosticsReport,
    warnings: Vec<String>,
}

fn continuation(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let schedule = config.schedule();
    let cfg = config.solver();
    let (base, _) = build_model(config, schedule[0], 2.0)?;
    progress(format!("continuation over p = {schedule:?}"));
    let run = solver::continuation_run(&base, &cfg, &schedule)?;
    for w in &run.warnings {
        progress(format!("warning: {w}"));
    }
    io::write_continuation_csv(&out.join("continuation.csv"), &run.records)?;
    let mut polished = run.nodal.last().expect("non-empty run").clone();
    let c0 = run.groundstates.last().expect("non-empty run");
    let quadratic = base.with_p(2.0)?;
    let diagnostics = verify_level_inequalities(&quadratic, c0, &polished, cfg.degenerate_tol)?;
    store_field(out, "nodal_p2.chqf", &mut polished)?;
    progress(format!("A2 = {} with 2 c0 = {}", polished.report.level, 2.0 * c0.report.level));
    let output = ContinuationOutput {
        box_length: base.grid().box_length(),
        schedule,
        records: run.records,
        polished: polished.report,
        diagnostics,
        warnings: run.warnings,
    };
    io::write_json(&out.join("continuation.json"), &output)?;
    Ok(())
}

#[derive(Serialize)]
struct LevelRow {
    p: f64,
    c0_p: f64,
    residual: f64,
    pohozaev_residual: f64,
    iterations: usize,
}

fn levels(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let values = config.p_values.clone().expect("validated");
    let p_box = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let (base, _) = build_model(config, p_box, p_box)?;
    let curve = solver::level_curve(&base, &config.solver(), &values)?;
    let rows: Vec<LevelRow> = curve
        .iter()
        .map(|(p, s)| LevelRow {
            p: *p,
            c0_p: s.report.level,
            residual: s.report.residual,
            pohozaev_residual: s.report.pohozaev_residual,
            iterations: s.report.iterations,
        })
        .collect();
    let mut csv = String::from("p,c0_p\n");
    for r in &rows {
        csv.push_str(&format!("{:e},{:e}\n", r.p, r.c0_p));
    }
    io::write_atomic(&out.join("levels.csv"), csv.as_bytes())?;
    #[derive(Serialize)]
    struct LevelsOutput<'a> {
        box_length: f64,
        levels: &'a [LevelRow],
    }
    io::write_json(&out.join("levels.json"), &LevelsOutput { box_length: base.grid().box_length(), levels: &rows })?;
    Ok(())
}

#[derive(Serialize)]
struct ValidateOutput {
    field: PathBuf,
    energy: EnergyBreakdown,
    diagnostics: DiagnosticsReport,
}

fn validate(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let path = config.field.clone().expect("validated");
    let field = io::read_field(&path)?;
    if field.grid().dim() != config.dim {
        return Err(CliError::Config(format!(
            "field is {}-dimensional, config says {}",
            field.grid().dim(),
            config.dim
        )));
    }
    let model = Choquard::new(*field.grid(), config.params(config.p.expect("validated"))?)?;
    let output = ValidateOutput {
        energy: model.energy(&field)?,
        diagnostics: diagnose(&model, &field, config.degenerate_tol)?,
        field: path,
    };
    println!("{}", serde_json::to_string_pretty(&output).map_err(choquard_core::Error::from)?);
    io::write_json(&out.join("validate.json"), &output)?;
    Ok(())
}

#[derive(Serialize)]
struct BenchOutput {
    dim: usize,
    points_per_axis: usize,
    alpha: f64,
    kernel_seconds: f64,
    fft_seconds: f64,
    direct_seconds: f64,
    /// `Mᴺ` when the full direct sum fits, otherwise the spot-check count.
    compared_points: usize,
    max_relative_error: f64,
}

const SPOT_CHECKS: usize = 32;

fn convolve_bench(dim: usize, m: usize, alpha: f64, box_length: f64, seed: u64) -> Result<(), CliError> {
    let grid = Grid::new(dim, m, box_length).map_err(|e| CliError::Config(e.to_string()))?;
    let start = Instant::now();
    let kernel = RieszKernel::cached(grid, alpha).map_err(|e| CliError::Config(e.to_string()))?;
    let kernel_seconds = start.elapsed().as_secs_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = Field::from_values(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;

    let start = Instant::now();
    let fast = convolve(&kernel, &v)?;
    let fft_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let (points, slow): (Vec<usize>, Vec<f64>) = match convolve_direct(&kernel, &v) {
        Ok(f) => ((0..grid.len()).collect(), f.into_values()),
        Err(choquard_core::Error::GridTooLarge { .. }) => {
            let pts: Vec<usize> = (0..SPOT_CHECKS).map(|_| rng.gen_range(0..grid.len())).collect();
            let vals = convolve_direct_at(&kernel, &v, &pts)?;
            (pts, vals)
        }
        Err(e) => return Err(e.into()),
    };
    let direct_seconds = start.elapsed().as_secs_f64();
    let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = points
        .iter()
        .zip(&slow)
        .map(|(&i, s)| (fast.values()[i] - s).abs())
        .fold(0.0f64, f64::max)
        / scale;
    let output = BenchOutput {
        dim,
        points_per_axis: m,
        alpha,
        kernel_seconds,
        fft_seconds,
        direct_seconds,
        compared_points: points.len(),
        max_relative_error: err,
    };
    println!("{}", serde_json::to_string_pretty(&output).map_err(choquard_core::Error::from)?);
    Ok(())
}
