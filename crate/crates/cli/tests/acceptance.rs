//! Acceptance checks, one line per criterion: `[criterion N] PASS|FAIL`.
//! Each check recomputes its pass condition from the raw metrics rather than
//! trusting the study verdicts.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use degell::analysis::{
    coercivity_check, convergence_study, default_energy_family, embedding_study,
    energy_estimate_study, muckenhoupt_study, strict_inclusion_demo, CoercivityConfig,
    EmbeddingConfig, MuckenhouptConfig,
};
use degell::fields::Manufactured;
use degell::game::{control_norm, Follower};
use degell::{Game, GameConfig, GridFunction, Scheme, Thresholds};
use degell_cli::report::write_outputs;
use degell_cli::{parse_config, run};

type Check = Result<String, String>;

const BENCHMARK: &str = include_str!("../configs/benchmark_game.toml");

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn benchmark() -> GameConfig {
    parse_config(BENCHMARK).unwrap().game_config().unwrap()
}

fn convergence() -> Check {
    let start = Instant::now();
    let thr = Thresholds::default();
    let levels = [16, 32, 64, 128];
    let mut worst = Vec::new();
    for alpha in [0.5, 1.0] {
        for (scheme, need) in [(Scheme::Upwind, 0.9), (Scheme::Centered, 1.5)] {
            let r =
                convergence_study(scheme, &levels, Manufactured::SinSin, alpha, &thr).map_err(e)?;
            let h = r.metric("h").unwrap();
            let err = r.metric("l2_error").unwrap();
            let min = (0..3)
                .map(|k| (err[k] / err[k + 1]).ln() / (h[k] / h[k + 1]).ln())
                .fold(f64::INFINITY, f64::min);
            ensure(
                min >= need,
                format!("alpha={alpha} {scheme:?}: L2 order {min:.3} < {need}"),
            )?;
            worst.push(format!("{}@{alpha}={min:.3}", scheme.name()));
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(30), format!("took {t:?}"))?;
    Ok(format!(
        "min L2 orders {} in {:.1}s",
        worst.join(" "),
        t.as_secs_f64()
    ))
}

fn energy() -> Check {
    let thr = Thresholds::default();
    let family = default_energy_family();
    ensure(family.len() == 5, "family must have 5 members")?;
    let r =
        energy_estimate_study(&family, &[16, 32, 64, 128], 0.5, Scheme::Upwind, &thr).map_err(e)?;
    let mut growth = Vec::new();
    for k in 0..family.len() {
        let ratio = r.metric(&format!("ratio_{k}")).ok_or("missing ratio")?;
        let g = ratio[ratio.len() - 1] / ratio[0];
        ensure(g <= 1.2, format!("member {k}: growth {g:.4} > 1.2"))?;
        growth.push(format!("{g:.3}"));
    }
    Ok(format!("growth 128/16 per member [{}]", growth.join(", ")))
}

fn coercivity() -> Check {
    let cfg = CoercivityConfig {
        theta: 1.0,
        n_samples: 200,
        n: 64,
        seed: 0,
        ..CoercivityConfig::default()
    };
    let r = coercivity_check(&cfg, &Thresholds::default()).map_err(e)?;
    let samples = r.samples.as_ref().ok_or("no samples")?;
    ensure(samples.rows.len() == 200, "expected 200 samples")?;
    let a = samples.columns.iter().position(|c| c == "a_vv").unwrap();
    let d = samples
        .columns
        .iter()
        .position(|c| c == "delta_w11_sq")
        .unwrap();
    let violations = samples
        .rows
        .iter()
        .filter(|row| row[a].partial_cmp(&row[d]).is_none_or(|o| o.is_lt()))
        .count();
    ensure(violations == 0, format!("{violations} violations"))?;
    let min = samples
        .rows
        .iter()
        .map(|row| row[a] / row[d])
        .fold(f64::INFINITY, f64::min);
    Ok(format!(
        "0/200 violations, min a(v,v)/(delta |v|^2) = {min:.3}"
    ))
}

fn inclusion() -> Check {
    let levels = [16, 32, 64, 128, 256];
    let r = strict_inclusion_demo(&levels, 0.5, &Thresholds::default()).map_err(e)?;
    let w11 = r.metric("w11").unwrap();
    let dy = r.metric("dy_l2").unwrap();
    let plateau = &w11[1..];
    let lo = plateau.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = plateau.iter().copied().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    ensure(spread <= 0.05, format!("w11 spread {spread:.4}"))?;
    ensure(
        dy.windows(2).all(|w| w[1] > w[0]),
        format!("dy not increasing: {dy:?}"),
    )?;
    Ok(format!(
        "w11 spread {spread:.4}, dy_l2 {:.3} -> {:.3}",
        dy[0],
        dy[dy.len() - 1]
    ))
}

fn embedding() -> Check {
    let cfg = EmbeddingConfig {
        n_functions: 100,
        seed: 0,
        ..EmbeddingConfig::default()
    };
    let r = embedding_study(&cfg, &Thresholds::default()).map_err(e)?;
    ensure(r.levels == vec![64, 128], "levels")?;
    let mut out = Vec::new();
    for q in [2, 3, 4] {
        let m = r
            .metric(&format!("max_ratio_q{q}"))
            .ok_or("missing metric")?;
        let g = m[1] / m[0];
        ensure(g <= 1.1, format!("q={q}: growth {g:.4}"))?;
        out.push(format!("q{q}:{g:.4}"));
    }
    Ok(format!("growth 128/64 {}", out.join(" ")))
}

fn muckenhoupt() -> Check {
    let cfg = MuckenhouptConfig {
        n_balls: 500,
        seed: 0,
        ..MuckenhouptConfig::default()
    };
    let r = muckenhoupt_study(&cfg, &Thresholds::default()).map_err(e)?;
    let m = |k: &str| r.metric(k).map(|v| v[0]).ok_or(format!("missing {k}"));
    let unit = m("a2_unit")?;
    ensure(
        (unit - 1.0).abs() <= 1e-9,
        format!("unit weight A2 = {unit}"),
    )?;
    let sqrt = m("a2_sqrt")?;
    ensure(
        sqrt.is_finite() && m("a2_sqrt_diverged")? == 0.0,
        format!("x^(1/2): {sqrt}"),
    )?;
    ensure(m("a2_inverse_cube_diverged")? == 1.0, "x^-3 not flagged")?;
    Ok(format!(
        "A2(1) = {unit:.12}, A2(x^1/2) = {sqrt:.4}, x^-3 diverged"
    ))
}

fn gradient() -> Check {
    let game = Game::new(benchmark()).map_err(e)?;
    // a generic interior point of both balls
    let g = *game.grid();
    let f1 = game.project(
        Follower::First,
        &GridFunction::from_fn(g, |x, y| 0.3 + x * y),
    );
    let f2 = game.project(
        Follower::Second,
        &GridFunction::from_fn(g, |x, y| 0.2 - x + y),
    );
    let mut worst: f64 = 0.0;
    for (i, seed) in [(Follower::First, 11), (Follower::Second, 12)] {
        let samples = game
            .gradient_check(i, &f1, &f2, 20, 1e-4, seed)
            .map_err(e)?;
        ensure(samples.len() == 20, "expected 20 directions")?;
        for s in &samples {
            ensure(
                s.relative_error < 1e-5,
                format!("follower {}: {s:?}", i.index()),
            )?;
            worst = worst.max(s.relative_error);
        }
    }
    Ok(format!("max relative error {worst:.2e} over 40 directions"))
}

fn nash() -> Check {
    let start = Instant::now();
    let cfg = benchmark();
    ensure(
        cfg.deviation_samples == 200,
        "benchmark must sample 200 deviations",
    )?;
    let game = Game::new(cfg.clone()).map_err(e)?;
    let r = game.nash_solve().map_err(e)?;
    let last = *r.br_residuals.last().ok_or("no sweeps")?;
    ensure(
        r.converged && last <= 1e-8,
        format!("not converged: last residual {last:e}"),
    )?;
    ensure(
        r.br_iterations <= 200,
        format!("{} sweeps", r.br_iterations),
    )?;
    let c = &r.certificate;
    ensure(c.deviations >= 200, format!("{} deviations", c.deviations))?;
    for (k, j) in [r.j1, r.j2].into_iter().enumerate() {
        let floor = -1e-8 * (1.0 + j);
        ensure(
            c.margins[k] >= floor,
            format!("follower {} margin {:e} < {floor:e}", k + 1, c.margins[k]),
        )?;
    }
    ensure(r.certified, "certificate rejected")?;
    let norms = [control_norm(&r.f1_star), control_norm(&r.f2_star)];
    ensure(
        norms[0] <= cfg.m1 + 1e-12 && norms[1] <= cfg.m2 + 1e-12,
        format!("infeasible: {norms:?}"),
    )?;
    let fp = r.fixed_point_residuals;
    ensure(
        fp[0] <= 10.0 * cfg.br_tol && fp[1] <= 10.0 * cfg.br_tol,
        format!("fixed-point residuals {fp:?}"),
    )?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(120), format!("took {t:?}"))?;
    Ok(format!(
        "{} sweeps, margins [{:.2e}, {:.2e}], fixed point [{:.1e}, {:.1e}], |f| [{:.3e}, {:.3e}], {:.1}s",
        r.br_iterations, c.margins[0], c.margins[1], fp[0], fp[1], norms[0], norms[1], t.as_secs_f64()
    ))
}

fn trivial_games() -> Check {
    let mut cfg = benchmark();
    cfg.nx = 32;
    cfg.ny = 32;
    cfg.m1 = 0.0;
    cfg.m2 = 0.0;
    let r = Game::new(cfg.clone())
        .and_then(|g| g.nash_solve())
        .map_err(e)?;
    ensure(
        r.f1_star.is_zero() && r.f2_star.is_zero(),
        "controls not zero",
    )?;
    ensure(
        r.certified && r.certification_margin == 0.0,
        format!("margin {}", r.certification_margin),
    )?;

    let game = Game::new(benchmark()).map_err(e)?;
    let g = *game.grid();
    let zero = GridFunction::zeros(g);
    let y0 = game.state_with(&zero, &zero, &zero).map_err(e)?;
    ensure(y0.is_zero(), "nonzero state for zero data")?;

    let f1 = game.project(
        Follower::First,
        &GridFunction::from_fn(g, |x, y| (3.0 * x).sin() + y),
    );
    let f2 = game.project(
        Follower::Second,
        &GridFunction::from_fn(g, |x, y| x - y * y),
    );
    let full = game.state_with(game.leader(), &f1, &f2).map_err(e)?;
    let mut sum = game.state_with(game.leader(), &zero, &zero).map_err(e)?;
    sum.axpy(1.0, &game.state_with(&zero, &f1, &zero).map_err(e)?);
    sum.axpy(1.0, &game.state_with(&zero, &zero, &f2).map_err(e)?);
    let gap = (&full - &sum).max_abs();
    ensure(gap <= 1e-10, format!("superposition gap {gap:e}"))?;
    Ok(format!(
        "zero-radius game certified with margin 0, superposition gap {gap:.1e}"
    ))
}

fn determinism() -> Check {
    let configs = [
        ("muckenhoupt", "command = \"study\"\nseed = 4\n[study]\nkind = \"muckenhoupt\"\nsamples = 200\n".to_string()),
        ("coercivity", "command = \"study\"\nseed = 4\n[study]\nkind = \"coercivity\"\nlevels = [32]\nsamples = 50\n".to_string()),
        ("embedding", "command = \"study\"\nseed = 4\n[study]\nkind = \"embedding\"\nlevels = [32, 64]\nsamples = 20\n".to_string()),
        ("game", BENCHMARK.replace("nx = 64", "nx = 24").replace("ny = 64", "ny = 24")),
    ];
    let mut compared = 0;
    for (name, text) in &configs {
        let cfg = parse_config(text).map_err(e)?;
        let dirs = [
            tempfile::tempdir().map_err(e)?,
            tempfile::tempdir().map_err(e)?,
        ];
        let mut tables = Vec::new();
        for d in &dirs {
            let out = run(&cfg).map_err(e)?;
            write_outputs(d.path(), &out.report, &out.tables).map_err(e)?;
            tables = out.report.tables.clone();
        }
        ensure(!tables.is_empty(), format!("{name}: no tables"))?;
        for t in &tables {
            let a = fs::read(dirs[0].path().join(t)).map_err(e)?;
            let b = fs::read(dirs[1].path().join(t)).map_err(e)?;
            ensure(a == b, format!("{name}/{t} differs"))?;
            compared += 1;
        }
    }
    Ok(format!(
        "{compared} tables byte-identical across repeated runs"
    ))
}

fn main() {
    let checks: [(usize, fn() -> Check); 10] = [
        (1, convergence),
        (2, energy),
        (3, coercivity),
        (4, inclusion),
        (5, embedding),
        (6, muckenhoupt),
        (7, gradient),
        (8, nash),
        (9, trivial_games),
        (10, determinism),
    ];
    let mut failed = 0;
    for (n, check) in checks {
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("[criterion {n}] PASS  {detail}"),
            Err(why) => {
                failed += 1;
                println!("[criterion {n}] FAIL  {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
