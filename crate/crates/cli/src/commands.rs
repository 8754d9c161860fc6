use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use orthant_games::costs::{BranchKind, CostFamily};
use orthant_games::game::{evaluate_value_by_play, rollout, FeedbackPolicy, Game, GameRollout, RandomCandidate};
use orthant_games::presets::{verify_geometry, verify_preset_geometry, CheckStatus};
use orthant_games::solver::{
    level_set_points, radial_extend, read_values_csv, solve_finite, solve_mintime, verify_eq_4_2, verify_thm_4_3,
    write_level_set_csv, write_values_csv, FieldKind, SolveStats, StoppingProblem,
};
use orthant_games::{ConstraintGeometry, SolverError, ValueField};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{GridConfig, RunConfig, StoppingConfig};
use crate::{Failure, EXIT_CONVERGENCE, EXIT_GEOMETRY, EXIT_MISSING, EXIT_UNSUPPORTED};

pub const MANIFEST: &str = "manifest.json";
pub const VALUES: &str = "values.csv";
pub const LEVEL_SET: &str = "level_set.csv";
pub const PLAY_DIR: &str = "play";

/// Tolerance of the finite/stationary identity check.
const EQ42_TOL: f64 = 0.03;
/// Share of smooth nodes whose residual must pass.
const RESIDUAL_SHARE: f64 = 0.95;
/// Allowed gap between the value and the cost of a value-greedy play.
const PLAY_TOL: f64 = 0.05;
/// Allowed excess of a heuristic adversary's cost over the value.
const SANDWICH_TOL: f64 = 0.08;
const ADVERSARIES: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SolveMode {
    Finite,
    Mintime,
}

impl SolveMode {
    fn parse(s: &str) -> Result<Self, Failure> {
        match s {
            "finite" => Ok(SolveMode::Finite),
            "mintime" => Ok(SolveMode::Mintime),
            other => Err(Failure::new(EXIT_UNSUPPORTED, format!("unsupported solve mode {other:?}; use finite or mintime"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            SolveMode::Finite => "finite",
            SolveMode::Mintime => "mintime",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchInfo {
    pub name: String,
    pub kind: BranchKind,
    pub c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Probe {
    pub t: f64,
    pub x: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Files {
    pub values: String,
    pub level_set: String,
}

/// Everything `play` needs to reload a solved field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: String,
    pub kind: FieldKind,
    pub d: usize,
    pub grid: GridConfig,
    pub horizon_steps: Option<usize>,
    pub branches: Vec<BranchInfo>,
    pub stopping: Option<StoppingConfig>,
    pub clamp_fraction: f64,
    pub stats: SolveStats,
    pub level_set: f64,
    pub level_set_points: usize,
    pub probes: Vec<Probe>,
    pub seed: u64,
    pub files: Files,
}

fn solver_failure(e: SolverError) -> Failure {
    match e {
        SolverError::GeometryUnverified | SolverError::Geometry(_) => Failure::new(EXIT_GEOMETRY, e.to_string()),
        SolverError::NotCondition41(_) => Failure::new(
            EXIT_UNSUPPORTED,
            format!("the stationary min-time solve does not support this cost family: {e}"),
        ),
        SolverError::NonConvergence { .. } => Failure::new(EXIT_CONVERGENCE, e.to_string()),
        SolverError::Io(_) | SolverError::Csv(_) => Failure::io(e.to_string()),
        other => Failure::config(other.to_string()),
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn branch_info(f: &CostFamily) -> Vec<BranchInfo> {
    f.branches().iter().map(|b| BranchInfo { name: b.name().to_string(), kind: b.kind(), c: b.constant() }).collect()
}

/// Runs the geometry checks; exit 2 when independence or completely-S fails.
pub fn check(cfg: &RunConfig) -> Result<Value, Failure> {
    let report = match (&cfg.geometry, &cfg.network) {
        (None, Some(spec)) => verify_preset_geometry(spec).map_err(|e| Failure::config(e.to_string()))?,
        _ => verify_geometry(&cfg.geometry()?).map_err(|e| Failure::new(EXIT_GEOMETRY, e.to_string()))?,
    };
    let pass = report.usable() && report.independent == CheckStatus::Pass;
    Ok(json!({
        "command": "check",
        "pass": pass,
        "report": report,
        "exit_code": if pass { 0 } else { EXIT_GEOMETRY },
    }))
}

/// Solves in memory. A stationary solve that did not converge comes back as
/// the field plus `false`.
fn solve_field(
    cfg: &RunConfig,
    mode: SolveMode,
    g: &ConstraintGeometry,
    f: &CostFamily,
    data: &StoppingProblem,
) -> Result<(ValueField, bool), Failure> {
    let grid = cfg.grid(g.dim())?;
    let result = match mode {
        SolveMode::Finite => solve_finite(g, f, &grid, data, &cfg.finite_options()),
        SolveMode::Mintime => solve_mintime(g, f, &grid, &cfg.mintime_options()),
    };
    match result {
        Ok(v) => Ok((v, true)),
        Err(SolverError::NonConvergence { field, .. }) => Ok((*field, false)),
        Err(e) => Err(solver_failure(e)),
    }
}

fn probes(v: &ValueField) -> Vec<Probe> {
    let d = v.grid().d;
    [0.5, 1.0]
        .into_iter()
        .filter(|s| v.kind() == FieldKind::Stationary || *s <= v.grid().x_max)
        .map(|s| {
            let x = vec![s; d];
            let value = match v.kind() {
                FieldKind::Finite => v.value(0.0, &x),
                FieldKind::Stationary => radial_extend(v, &x),
            };
            Probe { t: 0.0, x, value }
        })
        .collect()
}

/// Solves and writes `values.csv`, `level_set.csv` and `manifest.json`.
/// Artifacts are written even when the min-time iteration stops without
/// converging; the exit code is then 3.
pub fn solve(cfg: &RunConfig, mode: &str) -> Result<Value, Failure> {
    let mode = SolveMode::parse(mode)?;
    let g = cfg.geometry()?;
    let f = cfg.costs()?;
    let data = cfg.stopping_problem();
    let (v, converged) = solve_field(cfg, mode, &g, &f, &data)?;

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    write_values_csv(&v, create(&dir.join(VALUES))?).map_err(solver_failure)?;
    let points = level_set_points(&v, 0, cfg.level_set);
    write_level_set_csv(&points, v.grid().d, create(&dir.join(LEVEL_SET))?).map_err(solver_failure)?;

    let manifest = Manifest {
        mode: mode.name().to_string(),
        kind: v.kind(),
        d: v.grid().d,
        grid: cfg.grid,
        horizon_steps: (mode == SolveMode::Finite).then_some(cfg.horizon_steps),
        branches: branch_info(&f),
        stopping: (mode == SolveMode::Finite).then_some(cfg.stopping),
        clamp_fraction: v.stats().clamp_fraction,
        stats: v.stats().clone(),
        level_set: cfg.level_set,
        level_set_points: points.len(),
        probes: probes(&v),
        seed: cfg.seed,
        files: Files { values: VALUES.to_string(), level_set: LEVEL_SET.to_string() },
    };
    let path = dir.join(MANIFEST);
    serde_json::to_writer_pretty(create(&path)?, &manifest).map_err(|e| io_failure(&path, e))?;

    Ok(json!({
        "command": "solve",
        "converged": converged,
        "output_dir": dir,
        "manifest": manifest,
        "exit_code": if converged { 0 } else { EXIT_CONVERGENCE },
    }))
}

fn load_manifest(dir: &Path) -> Result<Manifest, Failure> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::new(EXIT_MISSING, format!("no solved manifest at {}: {e}; run solve first", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::new(EXIT_MISSING, format!("unreadable manifest {}: {e}", path.display())))
}

fn write_trace(dir: &Path, name: &str, r: &GameRollout) -> Result<(), Failure> {
    r.write_path_csv(create(&dir.join(format!("{name}_path.csv")))?)
        .map_err(|e| Failure::io(e.to_string()))?;
    r.write_events_json(create(&dir.join(format!("{name}_events.json")))?)
        .map_err(|e| Failure::io(e.to_string()))
}

/// Replays a solved field: the feedback policy against the value-greedy
/// maximizer and against three seeded random adversaries.
pub fn play(cfg: &RunConfig, x0: &[f64], t0: f64) -> Result<Value, Failure> {
    let dir = &cfg.output_dir;
    let manifest = load_manifest(dir)?;
    let g = cfg.geometry()?;
    let f = cfg.costs()?;
    let grid = cfg.grid(g.dim())?;
    if manifest.d != g.dim() || manifest.grid != cfg.grid || manifest.branches.len() != f.len() {
        return Err(Failure::config("the manifest was solved for a different grid or network; run solve again"));
    }
    if x0.len() != g.dim() || x0.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Failure::config(format!("--x0 must list {} nonnegative coordinates", g.dim())));
    }
    let values_path = dir.join(&manifest.files.values);
    let file = File::open(&values_path)
        .map_err(|e| Failure::new(EXIT_MISSING, format!("{}: {e}", values_path.display())))?;
    let v = read_values_csv(file, &grid, manifest.kind, f.len(), manifest.stats.clone())
        .map_err(|e| Failure::new(EXIT_MISSING, format!("{}: {e}", values_path.display())))?;

    let stopping = manifest.stopping.unwrap_or_default();
    let data = StoppingProblem::affine(stopping.scale, stopping.offset);
    let (game, value) = match manifest.kind {
        FieldKind::Finite => {
            if !(0.0..=1.0).contains(&t0) {
                return Err(Failure::config(format!("--t0 must lie in [0, 1], got {t0}")));
            }
            (Game::finite(&g, &f, &data), v.value(t0, x0))
        }
        FieldKind::Stationary => (Game::min_time(&g, &f, t0 + cfg.play.horizon), radial_extend(&v, x0)),
    };
    let rate_grid = cfg.solver.rate_grid;
    let play_err = |e: orthant_games::game::GameError| Failure::config(e.to_string());

    let out = dir.join(PLAY_DIR);
    fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;
    let greedy = evaluate_value_by_play(&game, &v, &rate_grid, x0, t0, cfg.play.dt, cfg.play.depth).map_err(play_err)?;
    write_trace(&out, "value_greedy", &greedy)?;

    let mut adversaries = Vec::new();
    for i in 0..ADVERSARIES {
        let seed = cfg.seed.wrapping_add(i);
        let mut max = RandomCandidate::new(seed, &f, &rate_grid, cfg.play.hold);
        let mut min = FeedbackPolicy::new(&v);
        let r = rollout(&game, &mut max, &mut min, x0, t0, cfg.play.dt).map_err(play_err)?;
        write_trace(&out, &format!("adversary_{}", i + 1), &r)?;
        adversaries.push(json!({
            "seed": seed,
            "cost": r.cost,
            "outcome": r.outcome,
            "within_bound": r.cost <= value + SANDWICH_TOL,
        }));
    }
    let gap = (greedy.cost - value).abs();
    Ok(json!({
        "command": "play",
        "x0": x0,
        "t0": t0,
        "value": value,
        "play_cost": greedy.cost,
        "outcome": greedy.outcome,
        "gap": gap,
        "tolerance": PLAY_TOL,
        "consistent": gap <= PLAY_TOL,
        "adversaries": adversaries,
        "sandwich_tolerance": SANDWICH_TOL,
        "trace_dir": out,
    }))
}

/// Solves in memory and runs the finite/stationary identity check, the
/// differential checks, or both. Reports carry a `pass` flag; the exit code
/// is 0 whenever the checks ran.
pub fn verify(cfg: &RunConfig, which: &str) -> Result<Value, Failure> {
    let (eq42, thm43) = match which {
        "eq42" => (true, false),
        "thm43" => (false, true),
        "all" => (true, true),
        other => return Err(Failure::config(format!("unknown check {other:?}; use eq42, thm43 or all"))),
    };
    let g = cfg.geometry()?;
    let f = cfg.costs()?;
    let (stationary, converged) = solve_field(cfg, SolveMode::Mintime, &g, &f, &StoppingProblem::time_to_go())?;
    if !converged {
        return Err(Failure::new(EXIT_CONVERGENCE, "the min-time iteration did not converge"));
    }
    let mut out = json!({ "command": "verify", "which": which });
    let mut pass = true;
    if eq42 {
        let (finite, _) = solve_field(cfg, SolveMode::Finite, &g, &f, &StoppingProblem::time_to_go())?;
        let report = verify_eq_4_2(&finite, &stationary).map_err(solver_failure)?;
        let ok = report.max_discrepancy <= EQ42_TOL;
        pass &= ok;
        out["eq42"] = json!({ "pass": ok, "tolerance": EQ42_TOL, "report": report });
    }
    if thm43 {
        let report = verify_thm_4_3(&stationary, &g, &f, None).map_err(solver_failure)?;
        let ok = report.residual_pass_fraction >= RESIDUAL_SHARE && report.b_scan_violations == 0;
        pass &= ok;
        out["thm43"] = json!({ "pass": ok, "residual_share": RESIDUAL_SHARE, "report": report });
    }
    out["pass"] = json!(pass);
    Ok(out)
}
