use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bbplan(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbplan")).args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn gen_plan_schedule_gantt_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&bbplan(&["gen", "--problem", "1", "--jobs", "20", "--out", "p1.json"], d));
    let out = ok(&bbplan(
        &["plan", "--instance", "p1.json", "--algo", "mcts", "--budget", "sims:20", "--out", "plan.json", "--tree-svg", "tree.svg"],
        d,
    ));
    assert!(out.starts_with("objective "), "{out}");
    let plan: Vec<usize> = serde_json::from_str(&fs::read_to_string(d.join("plan.json")).unwrap()).unwrap();
    let mut sorted = plan.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    assert!(fs::read_to_string(d.join("tree.svg")).unwrap().contains("class=\"cell\""));

    ok(&bbplan(&["schedule", "--instance", "p1.json", "--plan", "plan.json", "--out", "s.csv"], d));
    let csv = fs::read_to_string(d.join("s.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
    assert_eq!(csv.lines().next(), Some("job_id,machine,start,end"));

    ok(&bbplan(&["gantt", "--instance", "p1.json", "--plan", "plan.json", "--out", "g.svg", "--bound"], d));
    let svg = fs::read_to_string(d.join("g.svg")).unwrap();
    assert_eq!(svg.matches("class=\"bar\"").count(), 20);
    assert_eq!(svg.matches("class=\"bound\"").count(), 1);
}

#[test]
fn resource_instances_write_a_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&bbplan(&["gen", "--problem", "3", "--jobs", "30", "--machines", "4", "--out", "p3.json"], d));
    assert!(d.join("p3.pool.json").exists());
    ok(&bbplan(&["plan", "--instance", "p3.json", "--pool", "p3.pool.json", "--algo", "spt", "--out", "plan.json"], d));
    ok(&bbplan(
        &["schedule", "--instance", "p3.json", "--pool", "p3.pool.json", "--plan", "plan.json", "--out", "s.csv", "--log", "log.csv"],
        d,
    ));
    let log = fs::read_to_string(d.join("log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("job_id,process,carrier,rack,d_j,s_j,c_j"));
    assert_eq!(log.lines().count(), 31);
}

#[test]
fn experiment_check_mode_sets_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base = "problem = problem1\njobs = 20\nseeds = 2\nalgorithms = flat, random\nbudget = sims:50\n";
    fs::write(d.join("good.cfg"), format!("{base}expect = flat <= random\n")).unwrap();
    fs::write(d.join("bad.cfg"), format!("{base}expect = random < 1.0\n")).unwrap();
    let out = ok(&bbplan(&["experiment", "--config", "good.cfg", "--out", "good", "--check"], d));
    assert!(out.contains("PASS flat <= random"));
    let rows = fs::read_to_string(d.join("good/results.csv")).unwrap();
    assert_eq!(rows.lines().next(), Some("problem,algo,enhancements,seed,objective,ratio,wall_ms,instance"));
    assert_eq!(rows.lines().count(), 5);
    assert!(fs::read_to_string(d.join("good/summary.json")).unwrap().contains("ci95"));

    let bad = bbplan(&["experiment", "--config", "bad.cfg", "--out", "bad", "--check"], d);
    assert_eq!(bad.status.code(), Some(2));
    // without --check the same failure only prints
    assert!(bbplan(&["experiment", "--config", "bad.cfg", "--out", "bad"], d).status.success());
}

#[test]
fn invalid_config_names_the_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("x.cfg"), "jobs = 20\nspeed = fast\n").unwrap();
    let out = bbplan(&["experiment", "--config", "x.cfg"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown keys: speed"));
}

#[test]
fn surrogate_train_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&bbplan(&["gen", "--problem", "1", "--jobs", "20", "--out", "p1.json"], d));
    let out = ok(&bbplan(
        &["surrogate", "train", "--instance", "p1.json", "--plans", "30", "--epochs", "5", "--out", "m.json"],
        d,
    ));
    assert!(out.starts_with("loss "));
    let out = ok(&bbplan(
        &["surrogate", "eval", "--instance", "p1.json", "--model", "m.json", "--plans", "5", "--search-sims", "5"],
        d,
    ));
    assert!(out.contains("r2 ") && out.contains("surrogate-planned ratio"), "{out}");
}

#[test]
fn abstraction_prints_a_hierarchy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&bbplan(&["gen", "--problem", "1", "--jobs", "20", "--out", "p1.json"], d));
    let out = ok(&bbplan(&["abstraction", "--instance", "p1.json", "--kind", "detached"], d));
    let line = out.trim();
    assert!(line.starts_with('(') && line.ends_with(')'));
    for j in 0..20 {
        assert!(line.split(|c: char| !c.is_ascii_digit()).any(|t| t == j.to_string()));
    }
}
