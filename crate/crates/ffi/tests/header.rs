use std::path::Path;
use std::process::Command;

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/capt_bench.h")).unwrap()
}

fn exported_functions() -> Vec<String> {
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    src.lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap().to_owned())
        .collect()
}

#[test]
fn header_declares_every_export() {
    let h = header();
    let fns = exported_functions();
    assert!(fns.len() >= 20, "found only {fns:?}");
    for f in fns {
        assert!(h.contains(&format!(" {f}(")) || h.contains(&format!("*{f}(")), "{f} missing from header");
    }
    for ty in ["CaptInventory", "CaptCorpus", "CaptStatus", "CAPT_STATUS_OK", "CAPT_STATUS_PANIC"] {
        assert!(h.contains(ty), "{ty} missing from header");
    }
    assert!(h.contains("typedef struct CaptInventory CaptInventory;"));
}

/// Compiles examples/demo.c against the static library and runs it.
#[test]
fn c_example_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libcapt_bench_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("demo");
    let status = Command::new("cc")
        .arg(root.join("examples/demo.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("46 phones"));
    assert!(stdout.contains("S=1 I=1 PER=0.6667"));
    assert!(stdout.contains("TP=1 F1=1.0000"));
    assert!(stdout.contains("accuracy=8 total=8"));
    assert!(stdout.contains("prompt starts with <|MDD|>"));
}
