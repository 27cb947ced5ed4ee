use std::path::Path;
use std::process::{Command, Output};

use lspcm::postprocess::PosteriorSummary;
use lspcm::sampler::RunManifest;

fn lspcm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lspcm"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = lspcm(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const SMALL_FIT: [&str; 10] = ["--chains", "2", "--iters", "400", "--burnin", "100", "--thin", "10", "--seed", "3"];

fn simulate_and_fit(dir: &Path) {
    ok(&["simulate", "--scenario", "1", "--seed", "5", "--out", "sim"], dir);
    let mut args = vec!["fit", "sim/network_0.csv", "--out", "fit"];
    args.extend(SMALL_FIT);
    ok(&args, dir);
}

#[test]
fn simulate_is_reproducible_and_complete() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        ok(&["simulate", "--scenario", "1", "--replicates", "3", "--seed", "7", "--out", "."], d);
    }
    for r in 0..3 {
        for name in [format!("network_{r}.csv"), format!("truth_{r}.json")] {
            let x = std::fs::read(a.path().join(&name)).unwrap();
            assert_eq!(x, std::fs::read(b.path().join(&name)).unwrap(), "{name}");
        }
    }
    assert!(!a.path().join("network_3.csv").exists());
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(lspcm(&["simulate", "--scenario", "3"], d.path()).status.code(), Some(2));
    assert_eq!(lspcm(&["frobnicate"], d.path()).status.code(), Some(2));
    assert_eq!(lspcm(&["fit"], d.path()).status.code(), Some(2));
    std::fs::write(d.path().join("net.csv"), "0,1\n1,0\n").unwrap();
    assert_eq!(lspcm(&["fit", "net.csv", "--nu", "-1"], d.path()).status.code(), Some(2));
    assert_eq!(lspcm(&["fit", "net.csv", "--chains", "0"], d.path()).status.code(), Some(2));
}

#[test]
fn invalid_network_exits_1() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("net.csv"), "0,1\n2,0\n").unwrap();
    let out = lspcm(&["fit", "net.csv"], d.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-binary"));
    assert_eq!(lspcm(&["fit", "missing.csv"], d.path()).status.code(), Some(1));
}

#[test]
fn fit_writes_traces_and_manifest() {
    let d = tempfile::tempdir().unwrap();
    simulate_and_fit(d.path());
    let m = RunManifest::read(&d.path().join("fit/manifest.json")).unwrap();
    assert_eq!(m.chains.len(), 2);
    assert_ne!(m.chains[0].stream, m.chains[1].stream);
    assert_eq!(m.config.iterations, 400);
    for c in &m.chains {
        assert_eq!(c.samples, 30);
        let text = std::fs::read_to_string(d.path().join("fit").join(&c.trace_file)).unwrap();
        assert_eq!(text.lines().count(), 30);
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v["iteration"].as_u64().unwrap() > 100);
        }
    }
}

#[test]
fn postprocess_and_report() {
    let d = tempfile::tempdir().unwrap();
    simulate_and_fit(d.path());
    ok(&["postprocess", "--run", "fit", "--out", "post"], d.path());
    let plain = PosteriorSummary::read_json(&d.path().join("post/summary.json")).unwrap();
    assert!(plain.ari.is_none() && plain.pc.is_none());
    assert_eq!(plain.samples, 60);
    assert_eq!(plain.diagnostics.len(), 2);
    assert!(plain.p_interval.0 <= plain.p_mode && plain.p_mode <= plain.p_interval.1);
    assert!(plain.g_interval.0 <= plain.g_mode && plain.g_mode <= plain.g_interval.1);

    ok(&["postprocess", "--run", "fit", "--truth", "sim/truth_0.json"], d.path());
    let first = std::fs::read(d.path().join("fit/summary.json")).unwrap();
    let psm = std::fs::read_to_string(d.path().join("fit/psm.csv")).unwrap();
    assert_eq!(psm.lines().count(), 50);
    for f in ["positions.csv", "p_hist.csv", "g_hist.csv"] {
        assert!(d.path().join("fit").join(f).exists(), "{f}");
    }
    ok(&["postprocess", "--run", "fit", "--truth", "sim/truth_0.json"], d.path());
    assert_eq!(first, std::fs::read(d.path().join("fit/summary.json")).unwrap());
    let s = PosteriorSummary::read_json(&d.path().join("fit/summary.json")).unwrap();
    assert!(s.ari.is_some() && s.pc.is_some());
    let mut labels = s.pear_partition.clone();
    labels.sort_unstable();
    labels.dedup();
    assert_eq!(labels, (1..=s.pear_clusters).collect::<Vec<_>>());

    let out = ok(&["report", "fit/summary.json", "--csv", "table.csv"], d.path());
    let text = String::from_utf8(out.stdout).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["nu", "p_m", "G_m", "ARI", "PC"]);
    assert_eq!(text.lines().count(), 2);
    let csv = std::fs::read_to_string(d.path().join("table.csv")).unwrap();
    assert!(csv.starts_with("nu,p_m,G_m,ARI,PC\n"));
}

#[test]
fn corrupt_trace_names_the_line() {
    let d = tempfile::tempdir().unwrap();
    simulate_and_fit(d.path());
    let path = d.path().join("fit/chain_1.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[2] = lines[2].replace("\"alpha\"", "\"beta\"");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = lspcm(&["postprocess", "--run", "fit"], d.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_with_flag_override() {
    let d = tempfile::tempdir().unwrap();
    ok(&["simulate", "--scenario", "1", "--seed", "5", "--out", "sim"], d.path());
    std::fs::write(
        d.path().join("run.cfg"),
        "network = sim/network_0.csv\nout = fit\nchains = 1\niters = 300\nburnin = 100\nthin = 50\nnu = 0.1\nno_adapt = true\n",
    )
    .unwrap();
    ok(&["--config", "run.cfg", "fit", "--nu", "0.05", "--thin", "20"], d.path());
    let m = RunManifest::read(&d.path().join("fit/manifest.json")).unwrap();
    assert_eq!(m.config.hp.nu, 0.05);
    assert_eq!(m.config.thin, 20);
    assert_eq!(m.config.iterations, 300);
    assert!(!m.config.adapt_dimensions);
    assert_eq!(m.chains[0].samples, 10);
}
