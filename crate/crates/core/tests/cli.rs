use std::path::Path;
use std::process::{Command, Output};

fn deferlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deferlab"))
        .args(args)
        .env_remove("DEFERLAB_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn bound_prints_the_hand_computed_value() {
    let o = deferlab(&[
        "bound",
        "--d",
        "2",
        "--n",
        "100",
        "--delta",
        "0.1",
        "--km",
        "1",
        "--kr",
        "1",
        "--perr",
        "0.5",
        "--train-loss",
        "0",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "3.1138");
    let o = deferlab(&[
        "bound", "--d", "2", "--n", "100", "--delta", "0.1", "--km", "1", "--kr", "1", "--perr",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn perfect_grouped_expert_scores_one_when_deferring_everything() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    let o = deferlab(&[
        "gen",
        "--preset",
        "grouped",
        "--K",
        "10",
        "--C",
        "10",
        "--out",
        p(&g),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = deferlab(&["eval", "--data", p(&g.join("test.csv")), "--defer-all"]);
    assert!(o.status.success());
    assert!(
        stdout(&o).starts_with("system_acc=1.0000 coverage=0.0000"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn gen_train_eval_round_trip_uses_only_emitted_files() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    let t = dir.path().join("t");
    let m = dir.path().join("m");
    let e = dir.path().join("e");
    assert!(deferlab(&[
        "gen",
        "--d",
        "4",
        "--n",
        "200",
        "--seed",
        "2",
        "--out",
        p(&s)
    ])
    .status
    .success());
    for f in [
        "train.csv",
        "val.csv",
        "test.csv",
        "run.cfg",
        "planted.txt",
        "meta.txt",
    ] {
        assert!(s.join(f).exists(), "{f}");
    }
    let o = deferlab(&[
        "train",
        "--data",
        p(&s.join("train.csv")),
        "--val",
        p(&s.join("val.csv")),
        "--method",
        "confidence",
        "--epochs",
        "20",
        "--out",
        p(&t),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = deferlab(&[
        "milp",
        "--data",
        p(&s.join("train.csv")),
        "--time-limit",
        "30",
        "--out",
        p(&m),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for model in [
        t.join("model.txt"),
        m.join("pair.txt"),
        s.join("planted.txt"),
    ] {
        let o = deferlab(&[
            "eval",
            "--data",
            p(&s.join("test.csv")),
            "--model",
            p(&model),
            "--out",
            p(&e),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for f in ["report.csv", "curve.csv", "curve.svg"] {
            assert!(e.join(f).exists());
        }
    }
    let report = std::fs::read_to_string(e.join("report.csv")).unwrap();
    assert!(report.starts_with("coverage,system_acc,clf_acc_nondef,hum_acc_def,n_points\n"));
}

#[test]
fn bench_is_reproducible_from_its_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    let args = |out: &Path| {
        vec![
            "bench".to_string(),
            "--d".into(),
            "3".into(),
            "--n".into(),
            "120".into(),
            "--test-size".into(),
            "300".into(),
            "--methods".into(),
            "rs,selective,milp".into(),
            "--trials".into(),
            "2".into(),
            "--epochs".into(),
            "10".into(),
            "--seed".into(),
            "9".into(),
            "--out".into(),
            out.to_str().unwrap().to_string(),
        ]
    };
    let run = |v: Vec<String>| {
        let refs: Vec<&str> = v.iter().map(String::as_str).collect();
        let o = deferlab(&refs);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(args(&a));
    run(args(&b));
    let results = |d: &Path| std::fs::read_to_string(d.join("results.csv")).unwrap();
    assert_eq!(results(&a), results(&b));
    let header = results(&a).lines().next().unwrap().to_string();
    assert_eq!(
        header,
        "method,trial,coverage,system_acc,clf_acc_nondef,hum_acc_def"
    );
    assert_eq!(results(&a).lines().count(), 1 + 2 * 3);
    run(vec![
        "bench".into(),
        "--config".into(),
        p(&a.join("run.cfg")).into(),
        "--out".into(),
        p(&c).into(),
    ]);
    assert_eq!(results(&a), results(&c));
    assert!(a.join("curves.svg").exists());
    assert!(a.join("curves").join("rs_trial1.csv").exists());
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let flag = dir.path().join("flag");
    let env = dir.path().join("env");
    assert!(deferlab(&[
        "gen",
        "--d",
        "2",
        "--n",
        "50",
        "--seed",
        "5",
        "--out",
        p(&flag)
    ])
    .status
    .success());
    let o = Command::new(env!("CARGO_BIN_EXE_deferlab"))
        .args(["gen", "--d", "2", "--n", "50", "--out", p(&env)])
        .env("DEFERLAB_SEED", "5")
        .output()
        .unwrap();
    assert!(o.status.success());
    let read = |d: &Path| std::fs::read_to_string(d.join("train.csv")).unwrap();
    assert_eq!(read(&flag), read(&env));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x0,y,h\n0.5,1,1\n0.25,1\n").unwrap();
    let o = deferlab(&[
        "train",
        "--data",
        p(&bad),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let cfg = dir.path().join("x.cfg");
    std::fs::write(&cfg, "[train]\nepochs = 5\nmomentum = 0.9\n").unwrap();
    let o = deferlab(&[
        "gen",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    assert_eq!(deferlab(&["nonsense"]).status.code(), Some(1));
    assert_eq!(deferlab(&["--help"]).status.code(), Some(0));

    let s = dir.path().join("s");
    assert!(deferlab(&["gen", "--d", "2", "--n", "60", "--out", p(&s)])
        .status
        .success());
    let o = deferlab(&[
        "train",
        "--data",
        p(&s.join("train.csv")),
        "--lr",
        "1e308",
        "--epochs",
        "3",
        "--out",
        p(&dir.path().join("t")),
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(!dir.path().join("t").join("model.txt").exists());
}
