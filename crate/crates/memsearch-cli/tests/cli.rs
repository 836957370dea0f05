//! CLI behavior through the real binary: exit codes, output shapes, and a
//! small ingest/search round trip with the in-process service.

use std::path::Path;
use std::process::Command;

fn memsearch() -> Command {
    Command::new(env!("CARGO_BIN_EXE_memsearch"))
}

fn gen_dataset(dir: &Path) -> std::path::PathBuf {
    let dataset = dir.join("locomo.json");
    let out = memsearch()
        .args(["dev", "gen-dataset", "--out"])
        .arg(&dataset)
        .output()
        .unwrap();
    assert!(out.status.success());
    dataset
}

#[test]
fn missing_dataset_file_exits_nonzero_with_the_path() {
    let out = memsearch()
        .args(["ingest", "--dataset", "/nonexistent/nowhere.json"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nowhere.json"), "{stderr}");
}

#[test]
fn ingest_embed_search_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = gen_dataset(dir.path());
    let banks = dir.path().join("banks");

    let out = memsearch()
        .args(["ingest", "--dataset"])
        .arg(&dataset)
        .args(["--bank-dir"])
        .arg(&banks)
        .args(["--embed-dim", "32"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("conv-48"), "{stdout}");
    assert!(stdout.contains("681"), "{stdout}");

    // Re-running ingest is an idempotent refresh.
    let again = memsearch()
        .args(["ingest", "--dataset"])
        .arg(&dataset)
        .args(["--bank-dir"])
        .arg(&banks)
        .args(["--embed-dim", "32"])
        .output()
        .unwrap();
    assert!(again.status.success());

    let out = memsearch()
        .args(["embed", "--bank-dir"])
        .arg(&banks)
        .args(["--bank"])
        .arg(banks.join("conv-50"))
        .args(["--embed-dim", "32"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = memsearch()
        .args(["search", "--bank-dir"])
        .arg(&banks)
        .args(["--embed-dim", "32"])
        .args([
            "--conversation",
            "conv-50",
            "--mode",
            "keyword",
            "--keywords",
            "tournament",
            "--speaker",
            "Nate",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("relevant memories using keyword_search (filtered by: speaker: Nate)"),
        "{stdout}"
    );
    assert!(stdout.contains("won my second tournament"), "{stdout}");

    // No matches still prints the header.
    let out = memsearch()
        .args(["search", "--bank-dir"])
        .arg(&banks)
        .args(["--embed-dim", "32"])
        .args(["--conversation", "conv-50", "--mode", "keyword", "--keywords", "zzzqqq"])
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains("Found 0 relevant memories"));

    // Semantic search needs embeddings (conv-50 embedded above).
    let out = memsearch()
        .args(["search", "--bank-dir"])
        .arg(&banks)
        .args(["--embed-dim", "32"])
        .args(["--conversation", "conv-50", "--mode", "semantic", "--query", "video game tournaments", "--top-k", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("score ").count(), 3, "{stdout}");
}

#[test]
fn bad_mode_flag_is_rejected() {
    let out = memsearch()
        .args(["search", "--conversation", "x", "--mode", "fuzzy"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("semantic or keyword"));
}
