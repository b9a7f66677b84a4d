use degell::GameConfig;
use degell_cli::config::{locate, Command, StudyKind};
use degell_cli::parse_config;

const BENCHMARK: &str = include_str!("../configs/benchmark_game.toml");

#[test]
fn benchmark_config_matches_library_benchmark() {
    let cfg = parse_config(BENCHMARK).unwrap();
    assert_eq!(cfg.command, Command::Game);
    assert_eq!(cfg.game_config().unwrap(), GameConfig::benchmark());
}

#[test]
fn shipped_configs_parse() {
    for text in [
        include_str!("../configs/convergence.toml"),
        include_str!("../configs/muckenhoupt.toml"),
        include_str!("../configs/solve.toml"),
    ] {
        parse_config(text).unwrap();
    }
}

#[test]
fn alpha_out_of_range_is_located() {
    let text =
        "command = \"solve\"\n\n[grid]\nn = 8\nalpha = 2.0\n\n[source]\nkind = \"constant\"\n";
    let err = parse_config(text).unwrap_err();
    assert_eq!(err.field, "grid.alpha");
    assert_eq!(err.line, Some(5));
    assert!(err.message.contains("(0, 1]"), "{}", err.message);
    assert!(err.to_string().starts_with("line 5: grid.alpha"));
}

#[test]
fn sampling_studies_need_a_seed() {
    let text = "command = \"study\"\n[study]\nkind = \"embedding\"\n";
    let err = parse_config(text).unwrap_err();
    assert_eq!(err.field, "seed");
    let ok =
        parse_config("command = \"study\"\nseed = 3\n[study]\nkind = \"embedding\"\n").unwrap();
    assert_eq!(ok.study.unwrap().kind, StudyKind::Embedding);
}

#[test]
fn game_needs_a_seed() {
    let text = BENCHMARK.replace("seed = 0\n", "");
    assert_eq!(parse_config(&text).unwrap_err().field, "seed");
}

#[test]
fn unknown_keys_are_rejected_with_a_line() {
    let text = "command = \"solve\"\n[grid]\nn = 8\nalhpa = 0.5\n";
    let err = parse_config(text).unwrap_err();
    assert!(err.message.contains("alhpa"), "{}", err.message);
    assert_eq!(err.line, Some(4));
}

#[test]
fn syntax_errors_report_a_line() {
    let err = parse_config("command = \"solve\"\n[grid\n").unwrap_err();
    assert_eq!(err.line, Some(2));
}

#[test]
fn defaults_are_recorded() {
    let cfg = parse_config(include_str!("../configs/solve.toml")).unwrap();
    for key in ["solver.scheme", "solver.tol", "solver.theta", "solver.kind"] {
        assert!(cfg.defaults_applied.iter().any(|k| k == key), "{key}");
    }
    assert!(!cfg.defaults_applied.iter().any(|k| k == "grid.alpha"));
    assert!(!cfg.defaults_applied.iter().any(|k| k == "output_dir"));
}

#[test]
fn level_override_caps_studies() {
    let mut cfg = parse_config(include_str!("../configs/convergence.toml")).unwrap();
    cfg.apply_level_override(32);
    assert_eq!(cfg.study.unwrap().levels.unwrap(), vec![16, 32]);
    let mut game = parse_config(BENCHMARK).unwrap();
    game.apply_level_override(16);
    assert_eq!(game.game.unwrap().nx, 16);
}

#[test]
fn locate_scans_sections() {
    let text = "a = 1\n[s]\na = 2\n[t]\nb = 3\n";
    assert_eq!(locate(text, "", "a"), Some(1));
    assert_eq!(locate(text, "s", "a"), Some(3));
    assert_eq!(locate(text, "t", "b"), Some(5));
    assert_eq!(locate(text, "t", "a"), None);
}
