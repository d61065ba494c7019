use std::path::Path;
use std::process::{Command, Output};

fn asgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asgd")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value_of(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key} in output"))
        .to_string()
}

/// Data rows with the wall-time column dropped.
fn stable_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| if l.starts_with('#') { l.to_string() } else { l.rsplit_once(',').map_or(l, |(a, _)| a).to_string() })
        .collect()
}

#[test]
fn paper_cutoffs() {
    let o = asgd(&["cutoffs"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(value_of(&text, "k_ddagger"), "0");
    assert_eq!(value_of(&text, "k_hat"), "2");
    assert_eq!(value_of(&text, "k_dagger"), "6");
    assert_eq!(value_of(&text, "k_star"), "17");
    assert_eq!(value_of(&text, "c").parse::<f64>().unwrap(), 0.9750000000000001);
}

#[test]
fn heavy_ball_has_no_ddagger_or_hat_segment() {
    let o = asgd(&["--set", "regime=\"shb\"", "--set", "c=0.9", "--set", "gamma=0.5", "cutoffs"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(value_of(&text, "k_ddagger"), "0");
    assert_eq!(value_of(&text, "k_hat"), "0");
}

#[test]
fn malformed_spectrum_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "spectrum = \"poly\"\n").unwrap();
    let o = asgd(&["--config", cfg.to_str().unwrap(), "cutoffs"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(asgd(&["--spectrum-custom", "0.5,x", "cutoffs"]).status.code(), Some(2));
    assert_eq!(asgd(&["--set", "colour=1", "cutoffs"]).status.code(), Some(2));
}

#[test]
fn ambiguous_preset_refuses_to_guess() {
    let o = asgd(&["figure", "figA2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--spectrum-custom"));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let eigs: Vec<String> = (1..=12).map(|k| 0.5f64.powi(k).to_string()).collect();
    let o = asgd(&["figure", "figA2", "--spectrum-custom", &eigs.join(","), "--engines", "oracle", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for panel in ["e1", "e10"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("figA2_{panel}.csv"))).unwrap();
        assert!(csv.contains("# eigenvalues = [0.5, 0.25, 0.125,"));
        assert!(csv.contains("# d = 12"));
        assert_eq!(csv.lines().filter(|l| l.starts_with("oracle,")).count(), 20);
    }
}

#[test]
fn csv_is_deterministic() {
    let run = |dir: &Path| {
        let o = asgd(&[
            "simulate", "--seed", "7", "--reps", "3", "--set", "d=30", "--set", "s=[10,40]", "--set", "n=40", "--threads", "3",
            "--out", dir.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stable_rows(&dir.join("montecarlo.csv"))
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let rows = run(a.path());
    assert_eq!(rows, run(b.path()));
    let header = rows.iter().position(|l| l.starts_with("engine,")).unwrap();
    // (asgd, sgd) x (s = 10, 40) x (3 reps + mean)
    assert_eq!(rows.len() - header - 1, 16);
}

#[test]
fn config_file_layers_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "d = 40\nseed = 3\ns = [20]\nn = 60\nw0 = \"e_2\"\n").unwrap();
    let out = dir.path().join("out");
    let o = asgd(&["--config", cfg.to_str().unwrap(), "--seed", "5", "oracle", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("oracle.csv")).unwrap();
    let embedded: String = csv.lines().skip(1).filter_map(|l| l.strip_prefix("# ")).map(|l| format!("{l}\n")).collect();
    let table: toml::Table = embedded.parse().unwrap();
    assert_eq!(table["seed"].as_integer(), Some(5));
    assert_eq!(table["d"].as_integer(), Some(40));
    assert_eq!(table["w0"].as_str(), Some("e_2"));

    // The embedded config reproduces the same rows.
    let replay = dir.path().join("replay.toml");
    std::fs::write(&replay, &embedded).unwrap();
    let out2 = dir.path().join("out2");
    let o = asgd(&["--config", replay.to_str().unwrap(), "oracle", "--out", out2.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stable_rows(&out.join("oracle.csv")), stable_rows(&out2.join("oracle.csv")));
}

#[test]
fn sweep_marks_infeasible_kappa() {
    let o = asgd(&["sweep-kappa", "--kappas", "0,1,5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("0,warning,")));
    let gammas: Vec<f64> = text
        .lines()
        .filter(|l| l.contains(",ok,"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(gammas.len(), 2);
    assert!(gammas[0] <= gammas[1]);
}

#[test]
fn verify_passes_and_detects_injected_faults() {
    let o = asgd(&["verify", "--seed", "0"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let dir = tempfile::tempdir().unwrap();
    for fault in ["bound", "power"] {
        let o = asgd(&["verify", "--inject-fault", fault, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{fault}");
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify_replay.json")).unwrap()).unwrap();
        assert!(!json.as_array().unwrap().is_empty());
    }
}

#[test]
fn unknown_preset_is_a_config_error() {
    assert_eq!(asgd(&["figure", "fig9"]).status.code(), Some(2));
    assert_eq!(asgd(&["--threads", "0", "cutoffs"]).status.code(), Some(2));
}
