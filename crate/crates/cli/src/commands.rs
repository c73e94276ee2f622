use std::io::Write;
use std::path::Path;

use origami_core::analysis::{classify_with, RigidityReport};
use origami_core::collision::Collider;
use origami_core::constraints::{is_flat_state, ConstraintSystem, LoopKind};
use origami_core::genericity::{dual_graph, is_generically_rigid, is_generically_rigid_checked};
use origami_core::model::{CreasePattern, FoldState};
use origami_core::singlevertex::{classify_vertex, explore_vertex, solve_degree3, Degree3Case, Degree3Solution, SingleVertexCase, VertexSpace};
use origami_core::tracking::{compose_forest, FoldPath, Termination, TrackOptions, Tracker};
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::{CliError, EXIT_INFEASIBLE, EXIT_OK};
use crate::obj::write_obj;
use crate::Command;

pub fn run(command: &Command, cfg: &RunConfig) -> Result<i32, CliError> {
    match command {
        Command::Validate { file } => validate(file, cfg),
        Command::Analyze { file, rho } => analyze(file, rho.as_deref(), cfg),
        Command::Track {
            file,
            rho,
            direction,
            flex,
            reverse,
            steps,
            target,
            compose,
            collisions,
            obj_dir,
        } => {
            let req = TrackRequest {
                rho: rho.as_deref(),
                direction: direction.as_deref(),
                flex: *flex,
                reverse: *reverse,
                steps: *steps,
                target: target.as_deref(),
                compose: *compose,
                collisions: *collisions,
                obj_dir: obj_dir.as_deref(),
            };
            track(file, &req, cfg)
        }
        Command::ExportObj { file, rho, path } => export_obj(file, rho.as_deref(), path.as_deref(), cfg),
        Command::Generic { file, dot, check, seed } => generic(file, dot.as_deref(), *check, *seed, cfg),
        Command::SolveVertex { alphas, samples } => solve_vertex(alphas, *samples, cfg),
        Command::ShowConfig => {
            emit(cfg, &to_json(cfg))?;
            Ok(EXIT_OK)
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(path.display().to_string(), e))
}

fn emit(cfg: &RunConfig, text: &str) -> Result<(), CliError> {
    match &cfg.output {
        Some(p) => write(p, text),
        None => print_stdout(text),
    }
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_stdout(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io("stdout".into(), e)),
        _ => Ok(()),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

/// Pattern files carry their own angle unit, so `degrees` does not apply.
fn load(path: &Path) -> Result<CreasePattern, CliError> {
    Ok(CreasePattern::from_json(&read(path)?)?)
}

fn system(pattern: &CreasePattern, cfg: &RunConfig) -> ConstraintSystem {
    ConstraintSystem::build(pattern).with_tolerance(cfg.residual_tol)
}

fn parse_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Argument(format!("'{}' is not a number", s.trim())))
        })
        .collect()
}

/// Folding angles from the command line, or the pattern's initial state.
fn state(pattern: &CreasePattern, text: Option<&str>, cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let rho = match text {
        Some(t) => parse_list(t)?.into_iter().map(|v| cfg.angle(v)).collect(),
        None => pattern.initial_rho().to_vec(),
    };
    if rho.len() != pattern.num_inner_creases() {
        return Err(CliError::Argument(format!(
            "expected {} folding angles, got {}",
            pattern.num_inner_creases(),
            rho.len()
        )));
    }
    Ok(FoldState::new(rho)?.rho)
}

#[derive(Serialize)]
struct ValidateReport {
    valid: bool,
    vertices: usize,
    panels: usize,
    inner_creases: usize,
    outer_creases: usize,
    inner_vertices: usize,
    holes: usize,
    base_panel: usize,
    developable: bool,
    vertex_loops: usize,
    hole_loops: usize,
    residual_dim: usize,
    hole_residuals: usize,
    initial_residual: f64,
}

fn validate(file: &Path, cfg: &RunConfig) -> Result<i32, CliError> {
    let p = load(file)?;
    let s = system(&p, cfg);
    let hole_residuals = s
        .loops
        .iter()
        .filter(|l| !matches!(l.kind, LoopKind::Vertex { .. }))
        .map(|l| l.dim())
        .sum();
    let report = ValidateReport {
        valid: true,
        vertices: p.vertices().len(),
        panels: p.panels().len(),
        inner_creases: p.num_inner_creases(),
        outer_creases: p.creases().len() - p.num_inner_creases(),
        inner_vertices: p.inner_vertices().len(),
        holes: p.holes().len(),
        base_panel: p.base_panel(),
        developable: p.is_developable(1e-9),
        vertex_loops: s.num_vertex_loops(),
        hole_loops: s.num_hole_loops(),
        residual_dim: s.dim(),
        hole_residuals,
        initial_residual: s.max_norm(p.initial_rho()),
    };
    emit(cfg, &to_json(&report))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct AnalyzeReport {
    rho: Vec<f64>,
    flat: bool,
    #[serde(flatten)]
    report: RigidityReport,
}

fn analyze(file: &Path, rho: Option<&str>, cfg: &RunConfig) -> Result<i32, CliError> {
    let p = load(file)?;
    let s = system(&p, cfg);
    let rho = state(&p, rho, cfg)?;
    let report = classify_with(&s, &rho, cfg.rank_tol)?;
    let out = AnalyzeReport {
        flat: is_flat_state(&rho),
        rho,
        report,
    };
    emit(cfg, &to_json(&out))?;
    Ok(EXIT_OK)
}

struct TrackRequest<'a> {
    rho: Option<&'a str>,
    direction: Option<&'a str>,
    flex: usize,
    reverse: bool,
    steps: usize,
    target: Option<&'a str>,
    compose: bool,
    collisions: bool,
    obj_dir: Option<&'a Path>,
}

#[derive(Serialize)]
struct TrackReport {
    mode: &'static str,
    start: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    direction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reached: Option<bool>,
    /// Index of the start state within a composed path.
    #[serde(skip_serializing_if = "Option::is_none")]
    start_index: Option<usize>,
    path: FoldPath,
}

fn track_options(cfg: &RunConfig) -> TrackOptions {
    let mut opts = TrackOptions::with_step(cfg.step);
    opts.max_steps = cfg.max_steps;
    opts.newton.max_iter = cfg.max_iter;
    opts.newton.rank_tol = cfg.rank_tol;
    opts
}

fn track(file: &Path, req: &TrackRequest, cfg: &RunConfig) -> Result<i32, CliError> {
    let p = load(file)?;
    let s = system(&p, cfg);
    let start = state(&p, req.rho, cfg)?;
    let opts = track_options(cfg);
    let collider = Collider::new(&p).with_eps(cfg.collision_eps);
    let mut tracker = Tracker::new(&s, opts);
    if req.collisions {
        tracker = tracker.with_collider(&collider);
    }
    let sign = if req.reverse { -1.0 } else { 1.0 };

    let report = if req.compose {
        let composed = compose_forest(&p, &start, None, &opts)?;
        TrackReport {
            mode: "compose",
            start,
            direction: None,
            target: None,
            reached: None,
            start_index: Some(composed.start),
            path: composed.path,
        }
    } else if let Some(t) = req.target {
        let target = state(&p, Some(t), cfg)?;
        let r = tracker.track_to(&start, &target)?;
        TrackReport {
            mode: "target",
            start,
            direction: None,
            target: Some(target),
            reached: Some(r.reached),
            start_index: None,
            path: r.path,
        }
    } else {
        let direction = match req.direction {
            Some(d) => parse_list(d)?,
            None => flex_column(&s, &start, req.flex, cfg)?,
        };
        let direction: Vec<f64> = direction.into_iter().map(|x| sign * x).collect();
        let path = tracker.track_flex(&start, &direction, req.steps)?;
        TrackReport {
            mode: "flex",
            start,
            direction: Some(direction),
            target: None,
            reached: None,
            start_index: None,
            path,
        }
    };

    if let Some(dir) = req.obj_dir {
        write_frames(&p, &s, &report.path.rhos(), dir)?;
    }
    emit(cfg, &to_json(&report))?;
    let locked = match report.reached {
        Some(reached) => !reached,
        None => report.path.termination == Termination::NoFlex || report.path.len() <= 1,
    };
    Ok(if locked { EXIT_INFEASIBLE } else { EXIT_OK })
}

/// Column `k` of the flex basis at `rho`; a zero vector when there is no
/// flex, which the tracker reports as `NoFlex`.
fn flex_column(s: &ConstraintSystem, rho: &[f64], k: usize, cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let report = classify_with(s, rho, cfg.rank_tol)?;
    if report.deg == 0 {
        return Ok(vec![0.0; rho.len()]);
    }
    if k >= report.deg {
        return Err(CliError::Argument(format!("flex index {k} out of range, deg is {}", report.deg)));
    }
    Ok(report.flex_basis.column(k).iter().copied().collect())
}

fn write_frames(p: &CreasePattern, s: &ConstraintSystem, rhos: &[Vec<f64>], dir: &Path) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.display().to_string(), e))?;
    let mut files = Vec::with_capacity(rhos.len());
    for (k, rho) in rhos.iter().enumerate() {
        let path = dir.join(format!("frame_{k:04}.obj"));
        write(&path, &write_obj(p, s, rho)?)?;
        files.push(path.display().to_string());
    }
    Ok(files)
}

/// States from `track` output, a bare `FoldPath`, or a list of angle lists.
fn path_states(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let v: Value = serde_json::from_str(text).map_err(|e| CliError::Argument(format!("path JSON: {e}")))?;
    let bad = || CliError::Argument("path JSON has no samples".into());
    let samples = v
        .get("path")
        .and_then(|p| p.get("samples"))
        .or_else(|| v.get("samples"))
        .unwrap_or(&v)
        .as_array()
        .ok_or_else(bad)?;
    samples
        .iter()
        .map(|s| {
            let rho = s.get("rho").unwrap_or(s);
            serde_json::from_value::<Vec<f64>>(rho.clone()).map_err(|_| bad())
        })
        .collect()
}

fn export_obj(file: &Path, rho: Option<&str>, path: Option<&Path>, cfg: &RunConfig) -> Result<i32, CliError> {
    let p = load(file)?;
    let s = system(&p, cfg);
    match path {
        Some(path) => {
            let dir = cfg
                .output
                .clone()
                .ok_or_else(|| CliError::Argument("--path needs --output DIR for the frame files".into()))?;
            let rhos = path_states(&read(path)?)?;
            for r in &rhos {
                FoldState::new(r.clone())?;
            }
            let files = write_frames(&p, &s, &rhos, &dir)?;
            print_stdout(&to_json(&serde_json::json!({ "frames": files })))?;
        }
        None => {
            let rho = state(&p, rho, cfg)?;
            emit(cfg, write_obj(&p, &s, &rho)?.trim_end())?;
        }
    }
    Ok(EXIT_OK)
}

fn generic(file: &Path, dot: Option<&Path>, check: usize, seed: u64, cfg: &RunConfig) -> Result<i32, CliError> {
    let p = load(file)?;
    let report = if check > 0 {
        is_generically_rigid_checked(&p, check, seed)
    } else {
        is_generically_rigid(&p)
    };
    if let Some(d) = dot {
        write(d, &dual_graph(&p).to_dot())?;
    }
    emit(cfg, &to_json(&report))?;
    Ok(if report.generically_rigid { EXIT_OK } else { EXIT_INFEASIBLE })
}

#[derive(Serialize)]
struct VertexReport {
    #[serde(flatten)]
    case: SingleVertexCase,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<Degree3Solution>,
    /// Converged states of the numeric sweep over the first angle.
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<Vec<Vec<f64>>>,
}

fn solve_vertex(alphas: &str, samples: usize, cfg: &RunConfig) -> Result<i32, CliError> {
    let alphas: Vec<f64> = parse_list(alphas)?.into_iter().map(|a| cfg.angle(a)).collect();
    let case = classify_vertex(&alphas)?;
    let (closed_form, sweep) = if case.degree == 3 {
        (Some(solve_degree3(&alphas)?), None)
    } else {
        (None, Some(explore_vertex(&alphas, 0, samples, None)))
    };
    let empty = case.space == VertexSpace::Empty
        || closed_form.as_ref().is_some_and(|c| c.case == Degree3Case::Empty)
        || sweep.as_ref().is_some_and(|s| s.is_empty());
    let report = VertexReport {
        case,
        closed_form,
        samples: sweep,
    };
    emit(cfg, &to_json(&report))?;
    Ok(if empty { EXIT_INFEASIBLE } else { EXIT_OK })
}
