use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bistable_moran::lineage::History;
use bistable_moran_cli::commands::{load_run, RunMetadata, RunSummary};
use bistable_moran_cli::io;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bistable-moran"))
}

fn exec(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn ok(cmd: &mut Command) -> Output {
    let out = exec(cmd);
    assert!(out.status.success(), "command failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_config(dir: &Path, duration: f64, seeds: &[u64], k0: usize) -> PathBuf {
    let cfg = serde_json::json!({
        "version": 1,
        "params": { "n": 4, "N": 30, "alpha": 0.5, "s0": 1.0, "m": 2.0 },
        "window_width": 24.0,
        "duration": duration,
        "seeds": seeds,
        "sample": { "k0": k0, "K0": 2.0, "seed": 5 },
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn simulate(config: &Path, out: &Path) {
    ok(bin().args(["simulate", "--config"]).arg(config).arg("--out").arg(out));
}

#[test]
fn same_config_gives_byte_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), 1.0, &[3], 2);
    simulate(&config, &tmp.path().join("a"));
    simulate(&config, &tmp.path().join("b"));
    let (a, b) = (files(&tmp.path().join("a")), files(&tmp.path().join("b")));
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn two_seeds_give_two_directories_differing_only_in_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), 0.5, &[1, 2], 2);
    let out = tmp.path().join("runs");
    simulate(&config, &out);
    let read = |s: u64| -> RunMetadata {
        serde_json::from_slice(&fs::read(out.join(format!("seed-{s}/metadata.json"))).unwrap()).unwrap()
    };
    let (m1, mut m2) = (read(1), read(2));
    assert_eq!((m1.seed, m2.seed), (1, 2));
    m2.seed = 1;
    assert_eq!(m1, m2);
    let e1 = fs::read(out.join("seed-1/events.jsonl")).unwrap();
    let e2 = fs::read(out.join("seed-2/events.jsonl")).unwrap();
    assert_ne!(e1, e2);
}

#[test]
fn zero_duration_has_only_initial_rows_and_empty_log() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), 0.0, &[4], 2);
    let out = tmp.path().join("runs");
    simulate(&config, &out);
    let dir = out.join("seed-4");
    let snaps = io::read_snapshots(fs::File::open(dir.join("snapshots.csv")).unwrap(), 30).unwrap();
    assert_eq!(snaps.len(), 1);
    assert_eq!(snaps[0].time, 0.0);
    let stored = load_run(&dir).unwrap();
    assert!(stored.log.is_empty());
    assert_eq!(stored.initial, stored.final_state);
}

#[test]
fn stored_outputs_reproduce_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), 1.5, &[6], 2);
    let out = tmp.path().join("runs");
    simulate(&config, &out);
    let dir = out.join("seed-6");
    let summary: RunSummary = serde_json::from_slice(&fs::read(dir.join("summary.json")).unwrap()).unwrap();
    let snaps = io::read_snapshots(fs::File::open(dir.join("snapshots.csv")).unwrap(), 30).unwrap();
    let fronts: Vec<(f64, f64)> =
        snaps.iter().filter_map(|s| s.front_site(30).map(|f| (s.time, f64::from(f) / 4.0))).collect();
    assert_eq!(fronts, summary.fronts);
    let stored = load_run(&dir).unwrap();
    assert_eq!(stored.log.len(), summary.events_logged);
    assert_eq!(stored.final_state.front_position().ok(), summary.final_front);
    // Replaying the stored log from the stored initial state lands on the
    // stored final state.
    let history = History::new(stored.initial.clone(), stored.log.clone()).unwrap();
    let replayed = history.state_at(history.end_time()).unwrap();
    assert_eq!(replayed.counts(), stored.final_state.counts());
}

#[test]
fn trace_writes_paths_and_tau_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), 1.0, &[8], 3);
    let out = tmp.path().join("runs");
    simulate(&config, &out);
    let run = out.join("seed-8");
    let trace = |to: &str| {
        ok(bin().arg("trace").arg(&run).arg("--config").arg(&config).arg("--out").arg(tmp.path().join(to)));
        (fs::read(tmp.path().join(to).join("lineages.csv")).unwrap(), fs::read(tmp.path().join(to).join("tau.csv")).unwrap())
    };
    let (l1, t1) = trace("t1");
    let (l2, t2) = trace("t2");
    assert_eq!((l1.clone(), t1.clone()), (l2, t2));
    let paths = io::read_lineages(l1.as_slice()).unwrap();
    assert_eq!(paths.len(), 3);
    assert_eq!(io::read_tau(t1.as_slice(), 3).unwrap().size(), 3);
}

#[test]
fn single_sample_has_no_finite_tau() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), 1.0, &[9], 1);
    let out = tmp.path().join("runs");
    simulate(&config, &out);
    ok(bin().arg("trace").arg(out.join("seed-9")).arg("--config").arg(&config));
    let tau = fs::read_to_string(out.join("seed-9/tau.csv")).unwrap();
    assert_eq!(tau.lines().count(), 1, "{tau}");
}

#[test]
fn too_many_samples_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), 0.5, &[10], 100_000);
    let out = tmp.path().join("runs");
    simulate(&config, &out);
    let res = exec(bin().arg("trace").arg(out.join("seed-10")).arg("--config").arg(&config));
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("type-A"), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(
        &path,
        r#"{"version":1,"params":{"n":4,"N":30,"alpha":0.5,"s0":1,"m":2},"duration":1,"seeds":[1],"durration":2}"#,
    )
    .unwrap();
    let res = exec(bin().args(["simulate", "--config"]).arg(&path).arg("--out").arg(tmp.path()));
    assert!(!res.status.success());
}

#[test]
fn verify_reports_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    ok(bin().args(["verify", "analytic", "kingman", "--out"]).arg(tmp.path()));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("verify-kingman.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["criteria"][0]["id"], 9);

    let skipped = exec(bin().args(["verify", "kingman", "--budget", "0"]));
    assert!(!skipped.status.success());
    let report: serde_json::Value = serde_json::from_slice(&skipped.stdout).unwrap();
    assert_eq!(report["status"], "skipped");

    assert!(!exec(bin().args(["verify", "bogus"])).status.success());
}

#[test]
fn kingman_and_pde_commands_write_files() {
    let tmp = tempfile::tempdir().unwrap();
    ok(bin().args(["kingman", "--k", "3", "--count", "5", "--out"]).arg(tmp.path()));
    let tau = fs::read_to_string(tmp.path().join("kingman_tau.csv")).unwrap();
    assert_eq!(tau.lines().count(), 1 + 5 * 3);
    let config = write_config(tmp.path(), 1.0, &[1], 2);
    ok(bin().args(["pde", "--config"]).arg(&config).arg("--out").arg(tmp.path()));
    let fields = io::read_fields(fs::File::open(tmp.path().join("pde.csv")).unwrap(), 4).unwrap();
    assert_eq!(fields.len(), 11);
    ok(bin().args(["sde", "--config"]).arg(&config).arg("--out").arg(tmp.path()).args(["--z0", "-1.5"]));
    let sde = fs::read_to_string(tmp.path().join("sde.csv")).unwrap();
    assert!(sde.lines().nth(1).unwrap().starts_with("1,0,-1.5"));
}
