use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn labelsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labelsynth")).args(args).env_remove("LABELSYNTH_PALETTE").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn background_generate_verify_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (bg, out) = (tmp.path().join("bg"), tmp.path().join("out"));
    let o = labelsynth(&["background", "--out", s(&bg), "--count", "2", "--seed", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = labelsynth(&["generate", "--input", s(&bg), "--out", s(&out), "--group", "2", "--count", "2", "--seed", "8", "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("summary.json").exists());

    for i in 0..2 {
        let img = out.join(format!("labels/{i:04}.png"));
        let meta = out.join(format!("meta/{i:04}.json"));
        let o = labelsynth(&["verify", "--image", s(&img), "--meta", s(&meta), "--json"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
        let text = String::from_utf8(o.stdout).unwrap();
        assert!(text.contains("\"placement_safety\""), "{text}");
    }
}

#[test]
fn strip_removes_generated_classes() {
    let tmp = tempfile::tempdir().unwrap();
    let (bg, out, clean) = (tmp.path().join("bg"), tmp.path().join("out"), tmp.path().join("clean"));
    assert!(labelsynth(&["background", "--out", s(&bg), "--seed", "1"]).status.success());
    assert!(labelsynth(&["generate", "--input", s(&bg), "--out", s(&out), "--group", "1", "--seed", "1"]).status.success());
    let o = labelsynth(&["strip", "--input", s(&out.join("labels")), "--out", s(&clean)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(clean.join("0000.png")).unwrap(), fs::read(bg.join("bg_0000.png")).unwrap());
}

#[test]
fn scene_command_prints_canonical_form_or_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.scene");
    fs::write(&good, "scene { object pathology {} }").unwrap();
    let o = labelsynth(&["scene", s(&good)]);
    assert!(o.status.success());
    let canonical = String::from_utf8(o.stdout).unwrap();
    fs::write(&good, &canonical).unwrap();
    assert_eq!(String::from_utf8(labelsynth(&["scene", s(&good)]).stdout).unwrap(), canonical);

    let bad = tmp.path().join("bad.scene");
    fs::write(&bad, "scene {\n  object pathology { pivots: 7 }\n}\n").unwrap();
    let o = labelsynth(&["scene", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.starts_with(&format!("{}:2:", bad.display())), "{err}");
}

#[test]
fn bad_arguments_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let o = labelsynth(&["generate", "--input", s(tmp.path()), "--out", s(&tmp.path().join("o")), "--group", "9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("group must be between 1 and 5"));
    // clap usage errors
    assert_eq!(labelsynth(&["generate"]).status.code(), Some(2));
}
