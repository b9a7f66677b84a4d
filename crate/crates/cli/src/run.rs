//! Command dispatch.

use std::f64::consts::PI;
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use degell::analysis::{self, CoercivityConfig, EmbeddingConfig, MuckenhouptConfig, Table};
use degell::operator::{
    derivative_weak_form_residual, theta_weak_form_residual, weak_form_residual,
};
use degell::{assemble, norms_of, Game, Grid, GridFunction, StudyResult, Verdict};

use crate::config::{Command, RunConfig, StudySection};
use crate::report::{GameOutcome, RunReport, RunResult, SolveOutcome, VerifyOutcome, VerifyRow};
use crate::RunError;

/// Result of a run: the report plus the tables that accompany it.
pub struct RunOutput {
    pub report: RunReport,
    pub tables: Vec<(String, Table)>,
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    let started = Utc::now();
    let clock = Instant::now();
    let (verdict, result, tables) = match cfg.command {
        Command::Solve => solve(cfg)?,
        Command::Verify => verify(cfg)?,
        Command::Study => study(cfg)?,
        Command::Game => game(cfg)?,
    };
    let report = RunReport {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started: started.to_rfc3339_opts(SecondsFormat::Millis, true),
        finished: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        wall_time: clock.elapsed().as_secs_f64(),
        config: cfg.clone(),
        verdict,
        result,
        tables: tables.iter().map(|(n, _)| format!("{n}.csv")).collect(),
    };
    Ok(RunOutput { report, tables })
}

type Parts = (Option<Verdict>, RunResult, Vec<(String, Table)>);

fn grid_of(cfg: &RunConfig) -> Result<Grid, RunError> {
    let (nx, ny) = cfg
        .grid
        .dims()
        .ok_or_else(|| RunError::Parse("grid size missing".into()))?;
    Ok(Grid::new(nx, ny, cfg.grid.alpha)?)
}

fn solve_on(
    cfg: &RunConfig,
    grid: Grid,
) -> Result<(GridFunction, GridFunction, degell::SolveReport), RunError> {
    let source = cfg
        .source
        .as_ref()
        .ok_or_else(|| RunError::Parse("[source] missing".into()))?;
    let f = source.sample(grid)?;
    let op = assemble(grid, cfg.solver.scheme);
    let solver = op.factorize(cfg.solver.kind)?;
    let (u, report) = solver.solve(&f, cfg.solver.tol)?;
    Ok((f, u, report))
}

fn solve(cfg: &RunConfig) -> Result<Parts, RunError> {
    let grid = grid_of(cfg)?;
    let (f, u, report) = solve_on(cfg, grid)?;
    let mut table = Table::new(&["i", "j", "x", "y", "f", "u"]);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            table.push(vec![
                i as f64,
                j as f64,
                grid.x(i),
                grid.y(j),
                f.at(i, j),
                u.at(i, j),
            ]);
        }
    }
    let outcome = SolveOutcome {
        nx: grid.nx(),
        ny: grid.ny(),
        scheme: cfg.solver.scheme.name().to_string(),
        norms: norms_of(&u, true),
        source_l2: norms_of(&f, false).l2,
        solve: report,
    };
    Ok((
        None,
        RunResult::Solve(outcome),
        vec![("solution".into(), table)],
    ))
}

fn verify(cfg: &RunConfig) -> Result<Parts, RunError> {
    let grid = grid_of(cfg)?;
    let (f, u, report) = solve_on(cfg, grid)?;
    let theta = cfg.solver.theta;
    let mut rows = Vec::new();
    let mut table = Table::new(&["k", "l", "weak", "derivative", "theta_weighted"]);
    for k in 1..=3u32 {
        for l in 1..=3u32 {
            let phi = GridFunction::from_fn(grid, |x, y| {
                (k as f64 * PI * x).sin() * (l as f64 * PI * y).sin()
            });
            let row = VerifyRow {
                k,
                l,
                weak: weak_form_residual(&u, &f, &phi)?,
                derivative: derivative_weak_form_residual(&u, &f, &phi)?,
                theta_weighted: theta_weak_form_residual(&u, &f, &phi, theta)?,
            };
            table.push(vec![
                k as f64,
                l as f64,
                row.weak,
                row.derivative,
                row.theta_weighted,
            ]);
            rows.push(row);
        }
    }
    let max_abs_residual = rows
        .iter()
        .flat_map(|r| [r.weak, r.derivative, r.theta_weighted])
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let outcome = VerifyOutcome {
        nx: grid.nx(),
        ny: grid.ny(),
        theta,
        solve: report,
        rows,
        max_abs_residual,
    };
    Ok((
        None,
        RunResult::Verify(outcome),
        vec![("residuals".into(), table)],
    ))
}

fn study(cfg: &RunConfig) -> Result<Parts, RunError> {
    let s: &StudySection = cfg
        .study
        .as_ref()
        .ok_or_else(|| RunError::Parse("[study] missing".into()))?;
    let levels = s.levels.clone().unwrap_or_else(|| s.kind.default_levels());
    let thr = &s.thresholds;
    let alpha = cfg.grid.alpha;
    let seed = cfg.seed.unwrap_or(0);
    use crate::config::StudyKind::*;
    let result: StudyResult = match s.kind {
        Convergence => {
            analysis::convergence_study(cfg.solver.scheme, &levels, s.manufactured, alpha, thr)?
        }
        Energy => {
            let family = s
                .family
                .clone()
                .unwrap_or_else(analysis::default_energy_family);
            analysis::energy_estimate_study(&family, &levels, alpha, cfg.solver.scheme, thr)?
        }
        Coercivity => {
            let c = CoercivityConfig {
                theta: cfg.solver.theta,
                n_samples: s.samples.unwrap_or(200),
                seed,
                n: *levels
                    .last()
                    .ok_or_else(|| RunError::Parse("study.levels is empty".into()))?,
                alpha,
                ..CoercivityConfig::default()
            };
            analysis::coercivity_check(&c, thr)?
        }
        Inclusion => analysis::strict_inclusion_demo(&levels, alpha, thr)?,
        Embedding => {
            let d = EmbeddingConfig::default();
            let c = EmbeddingConfig {
                n_functions: s.samples.unwrap_or(d.n_functions),
                exponents: s.exponents.clone().unwrap_or(d.exponents),
                levels: levels.clone(),
                seed,
                alpha,
                margin: d.margin,
            };
            analysis::embedding_study(&c, thr)?
        }
        Muckenhoupt => {
            let d = MuckenhouptConfig::default();
            let c = MuckenhouptConfig {
                n_balls: s.samples.unwrap_or(d.n_balls),
                seed,
                min_radius: s.min_radius.unwrap_or(d.min_radius),
                alpha,
            };
            analysis::muckenhoupt_study(&c, thr)?
        }
    };
    let mut tables = Vec::new();
    if !result.levels.is_empty() {
        tables.push(("levels".to_string(), result.level_table()));
    }
    if let Some(samples) = &result.samples {
        tables.push(("samples".to_string(), samples.clone()));
    }
    Ok((Some(result.verdict), RunResult::Study(result), tables))
}

fn game(cfg: &RunConfig) -> Result<Parts, RunError> {
    let gc = cfg
        .game_config()
        .ok_or_else(|| RunError::Parse("[game] missing".into()))?;
    let game = Game::new(gc)?;
    let nash = game.nash_solve()?;
    let mut iterations = Table::new(&["sweep", "residual", "j1", "j2", "inner1", "inner2"]);
    for (k, r) in nash.br_residuals.iter().enumerate() {
        let inner = nash.inner_iterations.get(k).copied().unwrap_or([0, 0]);
        iterations.push(vec![
            (k + 1) as f64,
            *r,
            nash.j1_history.get(k).copied().unwrap_or(f64::NAN),
            nash.j2_history.get(k).copied().unwrap_or(f64::NAN),
            inner[0] as f64,
            inner[1] as f64,
        ]);
    }
    let grid = *game.grid();
    let mut fields = Table::new(&["i", "j", "x", "y", "g", "f1", "f2", "state"]);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            fields.push(vec![
                i as f64,
                j as f64,
                grid.x(i),
                grid.y(j),
                game.leader().at(i, j),
                nash.f1_star.at(i, j),
                nash.f2_star.at(i, j),
                nash.state.at(i, j),
            ]);
        }
    }
    let cert = &nash.certificate;
    let outcome = GameOutcome {
        j1: nash.j1,
        j2: nash.j2,
        converged: nash.converged,
        certified: nash.certified,
        certification_margin: nash.certification_margin,
        certification_margins: cert.margins,
        certification_tolerances: cert.tolerances,
        deviations: cert.deviations,
        br_iterations: nash.br_iterations,
        br_residuals: nash.br_residuals.clone(),
        fixed_point_residuals: nash.fixed_point_residuals,
        control_norms: nash.control_norms,
        radii: [game.config().m1, game.config().m2],
        order: nash.order.clone(),
        gradient_convention: nash.gradient_convention.clone(),
    };
    let verdict = Verdict::from_bool(nash.converged && nash.certified);
    Ok((
        Some(verdict),
        RunResult::Game(outcome),
        vec![("iterations".into(), iterations), ("fields".into(), fields)],
    ))
}
