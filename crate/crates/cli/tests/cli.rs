use std::process::Command;

use serde_json::Value;

fn furstlab(args: &[&str], cache: &std::path::Path) -> (Value, i32) {
    let out = Command::new(env!("CARGO_BIN_EXE_furstlab"))
        .args(args)
        .env("FURSTLAB_CACHE", cache)
        .output()
        .expect("spawn furstlab");
    let report = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (report, out.status.code().unwrap_or(-1))
}

#[test]
fn topology_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (r, code) = furstlab(&["topo", "enum", "--d", "4"], dir.path());
    assert_eq!(code, 0);
    assert_eq!(r["counts"]["topologies"], 40);
    assert_eq!(r["counts"]["arrows"], 92);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (r, code) = furstlab(&["topo", "enum", "--d", "9"], dir.path());
    assert_eq!(code, 1);
    assert_eq!(r["status"], "input_error");
    let (r, code) = furstlab(&["--config", "rot2", "lyapdim", "--steps", "10000"], dir.path());
    assert_eq!(code, 2, "{r}");
    assert_eq!(r["error"]["kind"], "spectrum_not_simple");
}

#[test]
fn cloud_files_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("c.flgc");
    let csv = dir.path().join("c.csv");
    let report = dir.path().join("r.json");
    let cache = dir.path().join("cache");
    let args = [
        "--measure",
        "sl2z-free",
        "--seed",
        "5",
        "--out",
        report.to_str().unwrap(),
        "measure",
        "sample",
        "--points",
        "2000",
        "--depth",
        "200",
        "--cloud",
        cloud.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ];
    let (a, code) = furstlab(&args, &cache);
    assert_eq!(code, 0, "{a}");
    let bytes = std::fs::read(&cloud).unwrap();
    assert_eq!(&bytes[..4], b"FLGC");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 2001);
    assert!(report.exists());
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 1);
    // second run is served from the cache and reports the same thing
    let (b, _) = furstlab(&args, &cache);
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("timestamp");
        v
    };
    assert_eq!(strip(a), strip(b));
    assert_eq!(std::fs::read(&cloud).unwrap(), bytes);
}
