use std::path::Path;
use std::process::{Command, Output};

fn shflab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shflab")).args(args).current_dir(dir).output().expect("spawn shflab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn calibrate_prints_the_coupling_record() {
    let dir = tempfile::tempdir().unwrap();
    let o = shflab(&["calibrate", "--N", "256", "--theta", "-1", "--check"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    assert_eq!(keys, ["N", "R_N", "beta_N", "sigma2", "theta"]);
    assert_eq!(v["N"], 256);
    assert_eq!(v["theta"], -1.0);
    let (s2, b) = (v["sigma2"].as_f64().unwrap(), v["beta_N"].as_f64().unwrap());
    assert!((b.tanh().powi(2) - s2).abs() < 1e-14);
    // R_N < 1 leaves no admissible β for the default walk.
    let o = shflab(&["calibrate", "--N", "256", "--walk", "default"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("outside (0, 1)"));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "N = 128\ntheta = 0.5\n").unwrap();
    let from_file = shflab(&["calibrate", "--config", "c.toml"], dir.path());
    let overridden = shflab(&["calibrate", "--config", "c.toml", "--theta", "0"], dir.path());
    let a: serde_json::Value = serde_json::from_str(&stdout(&from_file)).unwrap();
    let b: serde_json::Value = serde_json::from_str(&stdout(&overridden)).unwrap();
    assert_eq!(a["theta"], 0.5);
    assert_eq!(b["theta"], 0.0);
    assert_eq!(a["N"], 128);
    std::fs::write(dir.path().join("bad.toml"), "N = 128\nbogus = 1\n").unwrap();
    let o = shflab(&["calibrate", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn kernel_and_renewal_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = shflab(&["kernel", "--nmax", "12", "--out", "k.csv", "--check"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("k.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,q_n0,R_n,llt_deviation"));
    assert_eq!(lines.count(), 12);

    let o = shflab(&["renewal", "--N", "256", "--out", "u.csv", "--check"], dir.path());
    assert!(stderr(&o).contains("U_N(n) > 0"));
    let csv = std::fs::read_to_string(dir.path().join("u.csv")).unwrap();
    assert!(csv.starts_with("n,U_N,G_prediction,rel_err\n"));
    assert_eq!(csv.lines().count(), 257);
    // A tolerance the N = 512 table cannot meet fails the check with status 2.
    let o = shflab(&["renewal", "--N", "512", "--walk", "default", "--tol", "0.01", "--check"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[FAIL]"));
}

#[test]
fn simulate_writes_series_and_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sim.toml"),
        "N = 32\nt = 0.5\nphi = \"bump:0,0,0.5\"\npsi = \"gauss:0,0,0.3\"\nreplicas = 50\nseed = 9\n",
    )
    .unwrap();
    let mut bytes = Vec::new();
    for (threads, out) in [("1", "a"), ("3", "b")] {
        let o = shflab(
            &["simulate", "--config", "sim.toml", "--replicas", "6", "--threads", threads, "--out", out, "--check"],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let csv = std::fs::read(dir.path().join(out).join("simulate.csv")).unwrap();
        let json = std::fs::read(dir.path().join(out).join("simulate.json")).unwrap();
        bytes.push((csv, json));
    }
    assert_eq!(bytes[0], bytes[1]);
    let csv = String::from_utf8(bytes[0].0.clone()).unwrap();
    assert!(csv.starts_with("replica,k,z,martingale,qv,residual\n"));
    assert_eq!(csv.lines().count(), 1 + 6 * 17);
    let meta: serde_json::Value = serde_json::from_slice(&bytes[0].1).unwrap();
    assert_eq!(meta["config"]["replicas"], 6);
    assert_eq!(meta["config"]["seed"], 9);
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert!(meta["config_digest"].as_str().unwrap().len() == 64);
}

#[test]
fn variance_qv_scan_and_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let o = shflab(
        &["variance", "--N", "16", "--t", "0.5", "--phi", "bump:0,0,0.5", "--replicas", "50", "--out", "v.json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("v.json")).unwrap()).unwrap();
    for k in ["exact_dp", "mc_mean", "mc_var", "se", "oracle_continuum", "config_digest", "coupling"] {
        assert!(!v[k].is_null(), "{k}");
    }
    let o = shflab(
        &["qv-scan", "--N", "32", "--t", "0.25", "--phi", "bump:0,0,0.5", "--eps-list", "0.2,0.1", "--replicas", "4", "--out", "q"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("q/qv_scan.csv")).unwrap();
    assert!(csv.starts_with("replica,eps,qv_renorm,qv_exact,abs_diff\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    let o = shflab(
        &[
            "peaks", "--N", "16", "--t", "0.5", "--phi", "bump:0,0,0.5", "--eps-list", "0.1", "--lambda-list", "2,4",
            "--region", "-1,-1,1,1", "--replicas", "2", "--out", "p",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("p/peaks.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    // Missing lists are a configuration error.
    let o = shflab(&["peaks", "--N", "16", "--t", "0.5", "--phi", "bump:0,0,0.5"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn specialfn_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = shflab(&["specialfn", "--theta", "0", "--t-grid", "1e-4:1:5", "--out", "s.csv", "--check"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(csv.starts_with("t,f_1,G_theta,G_hat,asymptotic_ratio\n"));
    assert_eq!(csv.lines().count(), 6);
    let o = shflab(&["oracle", "--theta", "0", "--t", "1", "--a", "0.1", "--check"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["first_moment_psi_one"], 1.0);
    assert!(v["variance_psi_one"].as_f64().unwrap() > 0.0);
}
