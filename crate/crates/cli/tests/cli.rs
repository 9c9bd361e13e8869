use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use ctrace::crypto::{enc, keygen};
use ctrace_cli::service::Client;
use ctrace_cli::wire::{b64, write_frame, Request, MAX_FRAME};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctrace"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn simulate(scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("simulate")
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn close_pair_passes_with_one_contact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = simulate(&scenario("close_pair.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let inf = &report["infections"][0];
    assert_eq!(inf["contacts"], serde_json::json!(["bob"]));
    assert_eq!(inf["report"]["contact_ids"].as_array().unwrap().len(), 1);
    assert_eq!(inf["bands"]["carol"]["band"], "MUST_NOT");
    assert_eq!(report["pass"], true);
}

#[test]
fn protocol_and_seed_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = simulate(&scenario("close_pair.json"), &out, &["--protocol", "cs", "--seed", "99"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["protocol"], "cs");
    assert_eq!(report["seed"], 99);
    assert_eq!(report["infections"][0]["contacts"], serde_json::json!(["bob"]));
}

#[test]
fn expected_false_positive_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = simulate(&scenario("relayer.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["infections"][0]["verdict"]["soundness_violations"], serde_json::json!(["bob"]));
    assert_eq!(report["adversaries"][0]["kind"], "relayer");
    assert!(report["adversaries"][0]["delivered"].as_u64().unwrap() > 0);
}

#[test]
fn unexpected_violation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut s: Value = serde_json::from_str(&fs::read_to_string(scenario("relayer.json")).unwrap()).unwrap();
    s.as_object_mut().unwrap().remove("expect_false_positive");
    let path = dir.path().join("s.json");
    fs::write(&path, s.to_string()).unwrap();
    let o = simulate(&path, &dir.path().join("r.json"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invalid_scenarios_exit_two_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            r#"{"duration":100,"seed":1,"devices":[{"name":"a","waypoints":[{"t":5,"x":0,"y":0},{"t":5,"x":1,"y":0}]}]}"#,
            "devices[0].waypoints[1].t",
        ),
        (r#"{"duration":100,"seed":1,"devices":[],"colour":"red"}"#, "colour"),
        (r#"{"params":{"T":"long"},"duration":100,"seed":1,"devices":[]}"#, "params.T"),
        (
            r#"{"duration":100,"seed":1,"devices":[{"name":"a","waypoints":[{"t":0,"x":0,"y":0}]}],"infections":[{"device":"z","t":1}]}"#,
            "infections[0].device",
        ),
    ];
    for (i, (text, field)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.json"));
        fs::write(&path, text).unwrap();
        let o = simulate(&path, &dir.path().join("out.json"), &[]);
        assert_eq!(o.status.code(), Some(2), "case {i}");
        assert!(stderr(&o).contains(field), "case {i}: {}", stderr(&o));
    }
    let o = simulate(&dir.path().join("missing.json"), &dir.path().join("out.json"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.json"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(bin().arg("simulate").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(2));
    let o = bin()
        .args(["simulate", "--scenario", "x", "--out", "y", "--protocol", "smoke-signals"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        assert_eq!(simulate(&scenario("commute.json"), out, &[]).status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn trace_flag_writes_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let o = simulate(
        &scenario("close_pair.json"),
        &dir.path().join("r.json"),
        &["--trace", trace.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.lines().count() > 100);
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["event"].is_string());
    }
}

#[test]
fn keygen_refuses_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let key = dir.path().join("authority.key");
    let first = bin().arg("keygen").arg("--out").arg(&key).output().unwrap();
    assert_eq!(first.status.code(), Some(0));
    let printed = String::from_utf8(first.stdout).unwrap();
    let pub_file = fs::read_to_string(dir.path().join("authority.key.pub")).unwrap();
    assert_eq!(printed.trim(), pub_file.trim());
    assert_eq!(printed.trim().len(), 64);

    let again = bin().arg("keygen").arg("--out").arg(&key).output().unwrap();
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("authority.key"));

    let forced = bin().arg("keygen").arg("--out").arg(&key).arg("--force").output().unwrap();
    assert_eq!(forced.status.code(), Some(0));
    assert_ne!(String::from_utf8(forced.stdout).unwrap(), printed);
}

struct Server {
    child: Child,
    addr: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_server(dir: &Path) -> Server {
    let key = dir.join("authority.key");
    assert!(bin().arg("keygen").arg("--out").arg(&key).output().unwrap().status.success());
    let mut child = bin()
        .args(["serve", "--listen", "127.0.0.1:0", "--authority-key"])
        .arg(&key)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("banner").to_string();
    Server { child, addr }
}

#[test]
fn serve_rejects_a_corrupted_key_file() {
    let dir = tempfile::tempdir().unwrap();
    let key = dir.path().join("bad.key");
    fs::write(&key, "not a key").unwrap();
    let o = bin()
        .args(["serve", "--listen", "127.0.0.1:0", "--authority-key"])
        .arg(&key)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.key"));
}

#[test]
fn serve_store_lookup_prune_over_the_wire() {
    let dir = tempfile::tempdir().unwrap();
    let server = start_server(dir.path());
    let mut client = Client::connect(&server.addr).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let pk = keygen(&mut rng).pk;
    let blob = enc(&pk, b"epoch data", &mut rng);

    let r = client
        .request(&Request::Store { pk: b64(pk.as_bytes()), blob: b64(&blob.to_bytes()), now: 100 })
        .unwrap();
    assert!(r.ok);
    let r = client.request(&Request::Lookup { keys: vec![b64(pk.as_bytes())] }).unwrap();
    let blobs = r.blobs.unwrap();
    assert_eq!(blobs.len(), 1);
    assert_eq!(blobs[0].blob, b64(&blob.to_bytes()));
    let r = client.request(&Request::Prune { now: 15 * 86_400 }).unwrap();
    assert_eq!(r.removed, Some(1));
}

#[test]
fn malformed_and_oversized_frames_keep_the_connection() {
    let dir = tempfile::tempdir().unwrap();
    let server = start_server(dir.path());
    let mut client = Client::connect(&server.addr).unwrap();

    let r = client.request_raw(b"{\"op\":\"store\"").unwrap();
    assert!(!r.ok);
    assert!(r.err.unwrap().contains("malformed"));

    let huge = vec![b' '; MAX_FRAME + 1];
    write_frame(client.writer(), &huge).unwrap();
    let r = client.read_response().unwrap();
    assert!(!r.ok);
    assert!(r.err.unwrap().contains("exceeds"));

    let r = client.request(&Request::Prune { now: 0 }).unwrap();
    assert_eq!(r.removed, Some(0));
}

#[test]
fn concurrent_clients_see_each_others_writes() {
    let dir = tempfile::tempdir().unwrap();
    let server = start_server(dir.path());
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let pk = keygen(&mut rng).pk;
    let blobs: Vec<Vec<u8>> = (0..8).map(|_| enc(&pk, b"x", &mut rng).to_bytes()).collect();
    std::thread::scope(|s| {
        for b in &blobs {
            let addr = server.addr.clone();
            s.spawn(move || {
                let mut c = Client::connect(addr).unwrap();
                let r = c.request(&Request::Store { pk: b64(pk.as_bytes()), blob: b64(b), now: 0 }).unwrap();
                assert!(r.ok);
            });
        }
    });
    let mut c = Client::connect(&server.addr).unwrap();
    let got = c.request(&Request::Lookup { keys: vec![b64(pk.as_bytes())] }).unwrap().blobs.unwrap();
    let mut got: Vec<String> = got.into_iter().map(|b| b.blob).collect();
    let mut want: Vec<String> = blobs.iter().map(|b| b64(b)).collect();
    got.sort();
    want.sort();
    assert_eq!(got, want);
    c.writer().flush().unwrap();
}
