use std::path::PathBuf;
use std::process::{Command, Output};

use bounded_alloc::harness::verify::{GOLDEN_SUMMARY_HEADER, GOLDEN_TRIAL_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bounded-alloc"))
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bounded-alloc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const RUN_CONFIG: &str = "\
problem.n = 2^12
problem.k = 512
problem.m = 320
policy.kind = tiered
run.trials = 3
run.base_seed = 4
";

/// CSV body without the wall_time column.
fn deterministic_part(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

#[test]
fn run_writes_per_trial_csv() {
    let cfg = scratch("run.cfg", RUN_CONFIG);
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "# policy=tiered n=4096 k=512 m=320 offer_mode=uniform_with_rep trials=3 base_seed=4"
    );
    assert_eq!(lines.next().unwrap(), GOLDEN_TRIAL_HEADER);
    assert_eq!(lines.count(), 3);
}

#[test]
fn run_is_reproducible_and_overridable() {
    let cfg = scratch("repro.cfg", RUN_CONFIG);
    let outfile = cfg.with_file_name("repro.csv");
    let a = bin().args(["--threads", "1", "run", "--config"]).arg(&cfg).output().unwrap();
    let b = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&outfile).output().unwrap();
    assert!(a.status.success() && b.status.success());
    let written = std::fs::read_to_string(&outfile).unwrap();
    assert_eq!(deterministic_part(&stdout(&a)), deterministic_part(&written));

    let c = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--override", "run.base_seed=5", "--override", "run.trials=2"])
        .output()
        .unwrap();
    let text = stdout(&c);
    assert!(text.starts_with("# policy=tiered") && text.contains("trials=2 base_seed=5"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn configuration_errors_exit_2() {
    let bad = scratch("bad.cfg", "problem.n = 64\nproblem.k = 2\npolicy.kind = nonsense\n");
    let o = bin().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let o = bin().args(["run", "--config", "/nonexistent/file.cfg"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    // tiered matching cannot be built with no memory
    let unbuildable = scratch("unbuildable.cfg", "problem.n = 4096\nproblem.k = 2\nproblem.m = 0\npolicy.kind = tiered\n");
    let o = bin().args(["run", "--config"]).arg(&unbuildable).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let good = scratch("good.cfg", RUN_CONFIG);
    let o = bin().args(["run", "--config"]).arg(&good).args(["--override", "problem.z=1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let o = bin().args(["bounds", "--n", "0", "--k", "1", "--m", "1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let cfg = scratch("sweep.cfg", "policy.kind = random\nproblem.n = 1\nproblem.k = 1\nrun.trials = 2\n");
    let grid = scratch(
        "sweep.grid",
        "grid.n = 1024, 2048\ngrid.k = 2, 8\ngrid.km_over_n = 0.1, 1\ngrid.policy = greedy, tiered\n",
    );
    let o = bin().args(["sweep", "--config"]).arg(&cfg).arg("--grid").arg(&grid).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# trials=2 base_seed=0");
    assert_eq!(lines.next().unwrap(), GOLDEN_SUMMARY_HEADER);
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 16);
    // greedy rows never error; tiered cells far below threshold do
    assert!(rows.iter().filter(|r| r.contains(",greedy,")).all(|r| r.ends_with(',')));

    let empty = scratch("empty.grid", "grid.n = 64\ngrid.k = 2\ngrid.m = 8\n");
    let o = bin().args(["sweep", "--config"]).arg(&cfg).arg("--grid").arg(&empty).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bounds_table() {
    let o = bin().args(["bounds", "--n", "1048576", "--k", "8", "--m", "1024"]).output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("asymptotic, constants suppressed"));
    assert!(text.contains("thm2_load_lower      1.7262"), "{text}");
    assert!(text.contains("col2_threshold_t     4096000"));

    let o = bin().args(["bounds", "--n", "1000000", "--k", "1", "--m", "1"]).output().unwrap();
    let text = stdout(&o);
    assert!(text.contains("random_alloc_load    5.2615"), "{text}");
    assert!(text.contains("greedy_load          unavailable"));
}
