use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use blockvit::keyfile::keys_from_json;
use blockvit::ppm::write_ppm;
use blockvit_core::{Image, KeySet};
use serde_json::Value;

fn blockvit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockvit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn ramp(w: usize, h: usize) -> Image {
    let levels: Vec<u8> = (0..w * h * 3).map(|i| (i * 37 % 256) as u8).collect();
    Image::from_levels(w, h, 3, &levels).unwrap()
}

#[test]
fn keygen_from_master_seed_and_explicit() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(&blockvit(dir.path(), &["keygen", "--seed", "9", "--out", "k.json"]));
    let keys = keys_from_json(&fs::read_to_string(dir.path().join("k.json")).unwrap()).unwrap();
    assert_eq!(keys, KeySet::from_master_seed(9));
    assert_eq!(v["k1"], format!("{:016x}", keys.k1));

    ok_json(&blockvit(dir.path(), &["keygen", "--k1", "1", "--k2", "2", "--k3", "255", "--out", "e.json"]));
    let text = fs::read_to_string(dir.path().join("e.json")).unwrap();
    assert_eq!(keys_from_json(&text).unwrap(), KeySet::new(1, 2, 255));
    assert!(text.contains("\"00000000000000ff\""));

    let both = blockvit(dir.path(), &["keygen", "--seed", "1", "--k1", "1", "--k2", "2", "--k3", "3", "--out", "x"]);
    assert!(!both.status.success());
    assert!(!blockvit(dir.path(), &["keygen", "--k1", "1", "--out", "x"]).status.success());
}

#[test]
fn encrypt_then_decrypt_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("a.ppm"), write_ppm(&ramp(32, 24)).unwrap()).unwrap();
    ok_json(&blockvit(p, &["keygen", "--seed", "3", "--out", "k.json"]));
    ok_json(&blockvit(p, &["encrypt", "--in", "a.ppm", "--out", "b.ppm", "--keys", "k.json", "--block", "8"]));
    ok_json(&blockvit(p, &["decrypt", "--in", "b.ppm", "--out", "c.ppm", "--keys", "k.json", "--block", "8"]));
    let (a, b, c) = (
        fs::read(p.join("a.ppm")).unwrap(),
        fs::read(p.join("b.ppm")).unwrap(),
        fs::read(p.join("c.ppm")).unwrap(),
    );
    assert_ne!(a, b);
    assert_eq!(a, c);
}

#[test]
fn keyspace_reports_full_scale() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(&blockvit(
        dir.path(),
        &["keyspace", "--width", "224", "--height", "224", "--block", "16", "--channels", "3"],
    ));
    assert!((v["log2_O"].as_f64().unwrap() - 8237.0).abs() <= 1.0);
    assert_eq!(v["W_b"], 14);
    let v = ok_json(&blockvit(dir.path(), &["keyspace", "--width", "4", "--height", "4", "--block", "2", "--channels", "1"]));
    assert_eq!(v["O"], "3456");
    let bad = blockvit(dir.path(), &["keyspace", "--width", "10", "--height", "4", "--block", "3", "--channels", "1"]);
    assert!(!bad.status.success());
    assert!(bad.stdout.is_empty());
}

#[test]
fn builder_client_provider_round() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let v = ok_json(&blockvit(
        p,
        &[
            "train-toy", "--out", "m.vtw", "--epochs", "2", "--lr", "0.01", "--seed", "1", "--n-per-class", "2",
            "--test-per-class", "1", "--export-test", "test",
        ],
    ));
    assert_eq!(v["epoch_loss"].as_array().unwrap().len(), 2);
    ok_json(&blockvit(p, &["keygen", "--seed", "4", "--out", "k.json"]));
    ok_json(&blockvit(p, &["transform-model", "--in", "m.vtw", "--out", "me.vtw", "--keys", "k.json"]));

    let v = ok_json(&blockvit(p, &["verify-equivalence", "--model", "m.vtw", "--keys", "k.json", "--n", "10", "--seed", "1"]));
    assert_eq!(v["kind"], "equivalence");
    assert!(v["metrics"]["max_abs_logit_diff"].as_f64().unwrap() <= 1e-4);
    ok_json(&blockvit(p, &["verify-equivalence", "--model", "m.vtw", "--n", "5"]));
    let strict = blockvit(p, &["verify-equivalence", "--model", "m.vtw", "--n", "5", "--tol=-1"]);
    assert_eq!(strict.status.code(), Some(1));
    serde_json::from_slice::<Value>(&strict.stdout).expect("report still printed");

    // the provider sees only the encrypted image and the transformed model
    let img = fs::read_dir(p.join("test/3")).unwrap().next().unwrap().unwrap().path();
    fs::copy(&img, p.join("x.ppm")).unwrap();
    ok_json(&blockvit(p, &["encrypt", "--in", "x.ppm", "--out", "xe.ppm", "--keys", "k.json", "--block", "8"]));
    let plain = ok_json(&blockvit(p, &["infer", "--model", "m.vtw", "--image", "x.ppm"]));
    let enc = ok_json(&blockvit(p, &["infer", "--model", "me.vtw", "--image", "xe.ppm"]));
    assert_eq!(plain["argmax"], enc["argmax"]);
    for (a, b) in plain["logits"].as_array().unwrap().iter().zip(enc["logits"].as_array().unwrap()) {
        assert!((a.as_f64().unwrap() - b.as_f64().unwrap()).abs() <= 1e-4);
    }

    let v = ok_json(&blockvit(
        p,
        &["attack", "--model", "me.vtw", "--dataset", "test", "--keys", "k.json", "--n-keys", "4", "--csv", "a.csv"],
    ));
    assert_eq!(v["kind"], "random_key_attack");
    assert_eq!(v["per_trial"].as_array().unwrap().len(), 4);
    for m in ["q1", "median", "q3", "whisker_low", "whisker_high", "correct_key_accuracy"] {
        assert!(v["metrics"][m].is_number(), "{m}");
    }
    let csv = fs::read_to_string(p.join("a.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("trial,k1,k2,k3,accuracy\n"));

    let v = ok_json(&blockvit(p, &["attack", "--model", "me.vtw", "--dataset", "test", "--keys", "k.json", "--mode", "plain"]));
    assert_eq!(v["kind"], "plain_attack");
    assert_eq!(v["metrics"]["prediction_mismatches"], 0.0);
}

#[test]
fn errors_go_to_stderr_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let missing = blockvit(p, &["infer", "--model", "nope.vtw", "--image", "nope.ppm"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(missing.stdout.is_empty());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.vtw"));

    assert!(!blockvit(p, &["keyspace", "--width", "4", "--bogus", "1"]).status.success());
    assert!(!blockvit(p, &[]).status.success());

    fs::write(p.join("g.ppm"), b"P5\n1 1\n255\n\x00").unwrap();
    fs::write(p.join("k.json"), b"{\"k1\":\"1\",\"k2\":\"2\",\"k3\":\"3\"}").unwrap();
    let bad = blockvit(p, &["encrypt", "--in", "g.ppm", "--out", "o.ppm", "--keys", "k.json"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("P6"));
}
