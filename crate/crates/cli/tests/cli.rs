use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cardauth");
const KEY: &str = "000102030405060708090a0b0c0d0e0f";

fn cardauth(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("CARDAUTH_SEED")
        .output()
        .expect("run cardauth")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 stdout")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn repl_transcript(script: &Path, seed: &str) -> String {
    let input = std::fs::File::open(script).expect("script");
    let out = Command::new(BIN)
        .args(["repl", "--echo", "--seed", seed])
        .stdin(input)
        .output()
        .expect("run repl");
    assert_eq!(out.status.code(), Some(0));
    stdout(&out)
}

#[test]
fn rc4pr_file_roundtrip_reports_subkeys() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("plain.bin");
    let enc = dir.path().join("enc.bin");
    let dec = dir.path().join("dec.bin");
    let data: Vec<u8> = (0..321u32).map(|i| (i * 7 + 3) as u8).collect();
    std::fs::write(&plain, &data).unwrap();

    let o = cardauth(&[
        "rc4pr",
        "encrypt",
        "--key",
        KEY,
        "--in",
        plain.to_str().unwrap(),
        "--out",
        enc.to_str().unwrap(),
        "-v",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "subkeys: 21\n");
    assert_ne!(std::fs::read(&enc).unwrap(), data);

    let o = cardauth(&[
        "rc4pr",
        "decrypt",
        "--key",
        KEY,
        "--in",
        enc.to_str().unwrap(),
        "--out",
        dec.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&dec).unwrap(), data);
}

#[test]
fn rc4pr_rejects_short_key_as_usage_error() {
    let o = cardauth(&[
        "rc4pr",
        "encrypt",
        "--key",
        "000102030405060",
        "--in",
        "x",
        "--out",
        "y",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = cardauth(&[
        "rc4pr",
        "encrypt",
        "--key",
        "0001020304050607",
        "--in",
        "x",
        "--out",
        "y",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rc4pr_missing_input_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent");
    let out = dir.path().join("out");
    let o = cardauth(&[
        "rc4pr",
        "encrypt",
        "--key",
        KEY,
        "--in",
        missing.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(cardauth(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cardauth(&[]).status.code(), Some(2));
}

#[test]
fn keygen_from_sample_primes() {
    let o = cardauth(&["keygen", "227", "331", "7"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("public: 75137-7\n"), "{text}");
    assert!(text.contains("private: 75137-31963\n"), "{text}");
}

#[test]
fn keygen_rejects_composite_inputs() {
    let o = cardauth(&["keygen", "6", "35", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not prime"));
}

#[test]
fn keygen_random_is_seed_deterministic() {
    let a = cardauth(&["keygen", "--random", "16", "--seed", "1"]);
    let b = cardauth(&["keygen", "--random", "16", "--seed", "1"]);
    let c = cardauth(&["keygen", "--random", "16", "--seed", "2"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn keygen_needs_exactly_one_input_form() {
    assert_eq!(cardauth(&["keygen"]).status.code(), Some(2));
    assert_eq!(cardauth(&["keygen", "227", "331"]).status.code(), Some(2));
}

#[test]
fn bench_single_block_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("sixteen");
    std::fs::write(&f, [0u8; 16]).unwrap();
    let o = cardauth(&["bench", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(
        text.starts_with("=====File # [1] =====\nThe file size: 16 Bytes\n"),
        "{text}"
    );
    assert!(text.contains("The number of subkeys: 1\n"));
    assert!(text.contains("=====Total Result of encrypt 1 files=====\n"));
}

#[test]
fn bench_marks_unreadable_file_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good");
    std::fs::write(&good, [1u8; 40]).unwrap();
    let bad = dir.path().join("missing");
    let o = cardauth(&[
        "bench",
        "--machine-readable",
        good.to_str().unwrap(),
        bad.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["rows"][0]["subkeys"], 3);
    assert!(json["rows"][0].get("error").is_none());
    assert!(json["rows"][1]["error"].is_string());
    assert_eq!(json["total"]["size_bytes"], 40);
}

#[test]
fn scenario_bundled_and_from_file() {
    let o = cardauth(&["scenario", "--bundled", "happy-path"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).ends_with("PASSED\n"));

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/three-strikes.scn");
    let o = cardauth(&["scenario", path.to_str().unwrap(), "--log"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("--- event log ---\n#0001 "), "{text}");
}

#[test]
fn scenario_missing_file_is_usage_error() {
    assert_eq!(
        cardauth(&["scenario", "/nonexistent/x.scn"]).status.code(),
        Some(2)
    );
    assert_eq!(
        cardauth(&["scenario", "--bundled", "nope"]).status.code(),
        Some(2)
    );
}

#[test]
fn scenario_failed_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.scn");
    std::fs::write(
        &f,
        "actor a \"A\" a@mail.sim 0790000001\nregister a\nexpect stale\n",
    )
    .unwrap();
    let o = cardauth(&["scenario", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stdout(&o).contains("FAIL line 2: register a"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn repl_seed_falls_back_to_environment() {
    let run = |seed: &str| {
        let mut child = Command::new(BIN)
            .args(["repl"])
            .env("CARDAUTH_SEED", seed)
            .stdin(std::process::Stdio::piped())
            .stdout(std::process::Stdio::piped())
            .spawn()
            .unwrap();
        drop(child.stdin.take());
        String::from_utf8(child.wait_with_output().unwrap().stdout).unwrap()
    };
    assert!(run("9").starts_with("cardauth client, seed 9."));
}

fn check_golden(name: &str) {
    let actual = repl_transcript(&golden(&format!("{name}.in")), "1");
    let path = golden(&format!("{name}.out"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        actual,
        expected,
        "transcript drifted from {}",
        path.display()
    );
}

#[test]
fn repl_session_matches_golden() {
    check_golden("session");
}

#[test]
fn repl_lockout_matches_golden() {
    check_golden("lockout");
    let text = std::fs::read_to_string(golden("lockout.out")).unwrap();
    assert!(text.contains("account locked; type: activate CODE"));
    assert!(text.contains("logged in as user2"));
}

#[test]
fn repl_card_view_shows_card_layout() {
    let text = std::fs::read_to_string(golden("session.out")).unwrap();
    let labels = [
        "User_Id =====> ",
        "outh_code =====> ",
        "pin_code =====> ",
        "S_Key =====> ",
        "server_pub_key =====> ",
        "private_key =====> ",
        "public_key =====> ",
    ];
    let mut at = text.find("> card view").expect("card view in transcript");
    for label in labels {
        let next = text[at..]
            .find(label)
            .unwrap_or_else(|| panic!("missing {label}"));
        at += next;
    }
}
