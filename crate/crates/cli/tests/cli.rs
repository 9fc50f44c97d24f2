use std::path::Path;
use std::process::{Command, Output};

fn modelmix(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modelmix"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth(dir: &Path, days: &str) {
    ok(&modelmix(
        &[
            "synth",
            "--family",
            "heston",
            "--params",
            "kappa=2,theta=0.04,sigma_v=0.4,rho=-0.7,v0=0.04",
            "--days",
            days,
            "--seed",
            "5",
            "--noise",
            "0.002",
            "--out",
            "data.csv",
        ],
        dir,
    ));
}

fn setup(dir: &Path) {
    synth(dir, "2");
    std::fs::write(
        dir.join("universe.txt"),
        "heston,kappa=2,theta=0.04,sigma_v=0.4,rho=-0.7,v0=0.04\nblack_scholes,sigma=0.2\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("run.cfg"),
        "data = data.csv\nuniverse = universe.txt\nlambda = 2\ngnuplot = true\n",
    )
    .unwrap();
}

#[test]
fn synth_then_run_writes_the_contracted_rows() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    ok(&modelmix(
        &["run", "--config", "run.cfg", "--out", "out"],
        dir.path(),
    ));
    let text = std::fs::read_to_string(dir.path().join("out/posterior.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 3);
    for f in [
        "manifest.txt",
        "plot_combined.gp",
        "products_moves.csv",
        "family_options.csv",
    ] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let fam = std::fs::read_to_string(dir.path().join("out/family_combined.csv")).unwrap();
    let mut sums = std::collections::BTreeMap::<String, f64>::new();
    for line in fam.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        *sums.entry(parts[0].to_string()).or_default() += parts[2].parse::<f64>().unwrap();
    }
    assert!(sums.values().all(|s| (s - 1.0).abs() < 1e-12));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    ok(&modelmix(
        &["run", "--config", "run.cfg", "--out", "a"],
        dir.path(),
    ));
    ok(&modelmix(
        &["run", "--config", "run.cfg", "--out", "b"],
        dir.path(),
    ));
    for f in [
        "posterior.csv",
        "posterior_combined.csv",
        "products_combined.csv",
        "manifest.txt",
    ] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "30");
    let a = std::fs::read(dir.path().join("data.csv")).unwrap();
    synth(dir.path(), "30");
    assert_eq!(a, std::fs::read(dir.path().join("data.csv")).unwrap());
}

#[test]
fn build_universe_writes_a_loadable_universe() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "90");
    std::fs::write(
        dir.path().join("build.cfg"),
        "data = data.csv\nfamilies = black_scholes,cev\nsnapshots = 2\niterations = 40\nrestarts = 1\nwindow = 60\npoints = 3\nlambda = 1\n",
    )
    .unwrap();
    ok(&modelmix(
        &["build-universe", "--config", "build.cfg"],
        dir.path(),
    ));
    let text = std::fs::read_to_string(dir.path().join("universe.txt")).unwrap();
    assert!(text.starts_with("# snapshot_dates = "));
    let log = std::fs::read_to_string(dir.path().join("prune_log.csv")).unwrap();
    assert_eq!(
        log.lines().next().unwrap(),
        "date,family,best_instance_id,ell_best"
    );
    std::fs::write(
        dir.path().join("run.cfg"),
        "data = data.csv\nuniverse = universe.txt\nlambda = 1\nmodes = combined\n",
    )
    .unwrap();
    ok(&modelmix(
        &["run", "--config", "run.cfg", "--out", "out"],
        dir.path(),
    ));
    let manifest = std::fs::read_to_string(dir.path().join("out/manifest.txt")).unwrap();
    assert!(manifest.contains("universe.snapshot_dates = "));
}

#[test]
fn failures_exit_with_their_category() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let code = |out: Output| out.status.code().unwrap();

    std::fs::write(
        dir.path().join("bad.cfg"),
        "data = data.csv\nuniverse = universe.txt\nlamda = 2\n",
    )
    .unwrap();
    let out = modelmix(&["run", "--config", "bad.cfg", "--out", "o"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
    assert_eq!(code(out), 3);

    std::fs::write(
        dir.path().join("broken.csv"),
        "date,spot,rate,expiry,moneyness,vol\n2020-01-02,abc,0,1,1,0.2\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("d.cfg"),
        "data = broken.csv\nuniverse = universe.txt\nlambda = 2\n",
    )
    .unwrap();
    assert_eq!(
        code(modelmix(
            &["run", "--config", "d.cfg", "--out", "o"],
            dir.path()
        )),
        4
    );

    assert_eq!(
        code(modelmix(
            &["run", "--config", "missing.cfg", "--out", "o"],
            dir.path()
        )),
        6
    );

    let out = modelmix(
        &[
            "synth", "--family", "heston", "--params", "kappa=-1", "--out", "x.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(out), 2);
    assert_eq!(
        code(modelmix(
            &["synth", "--family", "nonsense", "--out", "x.csv"],
            dir.path()
        )),
        2
    );
}
