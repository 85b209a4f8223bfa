use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ebookhmm::{needleman_wunsch, normalize_text, sequence_identity, Alphabet, ScoringScheme};
use serde_json::Value;
use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_ebookhmm");
const TRUTH: &str = include_str!("../../../fixtures/gull_rock.txt");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("run ebookhmm")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three short synthetic editions of the first part of the fixture.
fn editions(dir: &Path) -> Vec<PathBuf> {
    let truth = dir.join("truth.txt");
    let short: String = TRUTH.lines().take(3).map(|l| format!("{l}\n")).collect();
    std::fs::write(&truth, short).unwrap();
    let out = dir.join("editions");
    ok(&["synth", "--truth", s(&truth), "-o", s(&out), "--editions", "3", "--page-height", "6"]);
    (1..=3).map(|i| out.join(format!("edition-{i:02}.txt"))).collect()
}

#[test]
fn alphabet_is_reproducible_and_keeps_mandatory_symbols() {
    let dir = tempfile::tempdir().unwrap();
    let eds = editions(dir.path());
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    ok(&["alphabet", s(&eds[0]), s(&eds[1]), "-o", s(&a)]);
    ok(&["alphabet", s(&eds[0]), s(&eds[1]), "-o", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let only_a = dir.path().join("a.txt");
    std::fs::write(&only_a, "aaaa").unwrap();
    let out = ok(&["alphabet", s(&only_a), "-o", s(&a)]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "4");
    let alphabet = Alphabet::load(&a).unwrap();
    assert_eq!(alphabet.symbols(), &['\n', '\u{c}', ' ', 'a']);

    assert_eq!(run(&["alphabet", "-o", s(&a)]).status.code(), Some(2));
}

#[test]
fn align_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let eds = editions(dir.path());
    let out = ok(&["align", s(&eds[0]), s(&eds[1])]);
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();

    let alphabet = Alphabet::default_text();
    let a = normalize_text(&std::fs::read_to_string(&eds[0]).unwrap(), &alphabet);
    let b = normalize_text(&std::fs::read_to_string(&eds[1]).unwrap(), &alphabet);
    let aln = needleman_wunsch(&a, &b, &ScoringScheme::default()).unwrap();
    let stats = sequence_identity(&aln);
    assert_eq!(json["score"].as_i64().unwrap(), aln.score);
    assert_eq!(json["matches"].as_u64().unwrap() as usize, stats.matches);
    assert_eq!(json["identity"].as_f64().unwrap(), stats.identity);
    assert_eq!(json["top"], "edition-01");
}

#[test]
fn step_by_step_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let eds: Vec<String> = editions(d).iter().map(|p| s(p).to_string()).collect();
    let p = |name: &str| s(&d.join(name)).to_string();
    let with_inputs = |args: &[&str]| {
        let mut v: Vec<&str> = args.to_vec();
        v.extend(eds.iter().map(String::as_str));
        ok(&v)
    };
    with_inputs(&["msa", "-o", &p("m.txt")]);
    assert!(d.join("m.json").exists());
    ok(&["build", "--msa", &p("m.txt"), "-o", &p("model.json")]);

    with_inputs(&["train", "--model", &p("model.json"), "--epochs", "0", "-o", &p("m0.json")]);
    assert_eq!(std::fs::read(d.join("model.json")).unwrap(), std::fs::read(d.join("m0.json")).unwrap());

    with_inputs(&[
        "train", "--model", &p("model.json"), "--msa", &p("m.txt"), "--epochs", "2", "-o", &p("m2.json"),
        "--trace", &p("trace.json"),
    ]);
    let trace: Value = serde_json::from_str(&std::fs::read_to_string(d.join("trace.json")).unwrap()).unwrap();
    assert!(trace["epochs"].as_u64().unwrap() >= 1);

    let out = ok(&["consensus", "--model", &p("model.json")]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("CHAPTER I."));
}

#[test]
fn eval_of_identical_texts_is_100() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("t.txt");
    std::fs::write(&f, "<p>Rosa Dartle</p>").unwrap();
    let report = dir.path().join("r.json");
    let out = ok(&["eval", "--candidate", s(&f), "--reference", s(&f), "-o", s(&report)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("100.00\t100.00\t100.00"));
    let json: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["percent_match"].as_f64(), Some(100.0));
}

#[test]
fn pipeline_needs_two_editions() {
    let dir = tempfile::tempdir().unwrap();
    let eds = editions(dir.path());
    let out = run(&["pipeline", s(&eds[0]), "-o", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least two print editions"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = d.join("missing.txt");
    let present = d.join("present.txt");
    std::fs::write(&present, "a").unwrap();
    assert_eq!(run(&["pipeline", s(&missing), s(&present), "-o", s(&d.join("o"))]).status.code(), Some(3));
    let bad_utf8 = d.join("bad.txt");
    std::fs::write(&bad_utf8, [b'a', 0xff]).unwrap();
    assert_eq!(run(&["align", s(&bad_utf8), s(&present)]).status.code(), Some(3));
    assert_eq!(
        run(&["pipeline", s(&present), s(&present), "--gap-threshold", "0", "-o", s(&d.join("o"))]).status.code(),
        Some(2)
    );
    // "a" against an empty edition: the only column is half gaps, so no
    // match columns survive and no model can be built.
    let empty = d.join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(run(&["pipeline", s(&present), s(&empty), "-o", s(&d.join("o"))]).status.code(), Some(4));
}

#[test]
fn config_file_flags_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let eds = editions(d);
    let names: Vec<String> = eds.iter().map(|p| format!("\"editions/{}\"", p.file_name().unwrap().to_str().unwrap())).collect();
    let config = d.join("run.toml");
    std::fs::write(
        &config,
        format!(
            "inputs = [{}]\noutput_dir = \"out\"\nreference = \"truth.txt\"\ngap_threshold = 0.4\nrefinement_rounds = 1\n\
             [pseudocounts]\nemission = 0.5\n[training]\nenabled = true\nepochs = 2\n",
            names.join(", ")
        ),
    )
    .unwrap();
    ok(&["pipeline", "--config", s(&config), "--gap-threshold", "0.6", "--no-train"]);
    let out = d.join("out");
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let c = &manifest["config"];
    assert_eq!(c["gap_threshold"].as_f64(), Some(0.6));
    assert_eq!(c["refinement_rounds"].as_u64(), Some(1));
    assert_eq!(c["pseudocounts"]["emission_pseudocount"].as_f64(), Some(0.5));
    assert_eq!(c["pseudocounts"]["transition_pseudocount"].as_f64(), Some(1.0));
    assert_eq!(c["training"]["enabled"].as_bool(), Some(false));
    assert_eq!(c["scoring"]["match_score"].as_i64(), Some(1));

    let outputs = manifest["outputs"].as_array().unwrap();
    let listed: Vec<&str> = outputs.iter().map(|o| o["path"].as_str().unwrap()).collect();
    for f in ["alphabet.json", "msa.txt", "msa.json", "model.json", "consensus.txt", "report.json", "report.txt"] {
        assert!(listed.contains(&f), "{f} missing from manifest");
    }
    for o in outputs {
        let bytes = std::fs::read(out.join(o["path"].as_str().unwrap())).unwrap();
        assert_eq!(o["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
    assert!(!out.join("training.json").exists());
}
