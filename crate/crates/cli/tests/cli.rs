use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use uem_core::data::{load_scube, synth_scene, ResponseCurve};
use uem_core::optics::encode_wem;

fn uem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uem")).args(args).output().expect("spawn uem")
}

fn ok(args: &[&str]) {
    let o = uem(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_is_deterministic_and_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.scube"), dir.path().join("b.scube"));
    for f in [&a, &b] {
        ok(&["synth", "--h", "6", "--w", "5", "--bands", "4", "--seed", "3", "--out", p(f)]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let lib = synth_scene(3, 6, 5, 4, 1.5).unwrap();
    assert_eq!(load_scube(&a).unwrap(), lib);
}

#[test]
fn encode_matches_library_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cube_path = dir.path().join("c.scube");
    let out = dir.path().join("enc");
    ok(&["synth", "--h", "4", "--w", "3", "--bands", "5", "--seed", "1", "--out", p(&cube_path)]);
    ok(&["encode", "--variant", "wem", "--cube", p(&cube_path), "--out", p(&out)]);

    let cube = load_scube(&cube_path).unwrap();
    let r = ResponseCurve::camera_like(cube.wavelengths_nm()).unwrap();
    let rgb = encode_wem(&cube.to_tensor(), &r).unwrap();
    assert_eq!(fs::read_to_string(out.join("rgb.csv")).unwrap(), uem_cli::rgb_csv(&rgb));
    assert!(out.join("rgb.png").exists());
}

#[test]
fn eval_writes_rows_and_mean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "data.synth_train = 2\ndata.synth_val = 1\ndata.height = 8\ndata.width = 8\ndata.bands = 4\n\
         train.batch_size = 2\ndecoder.hidden = 4\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    ok(&["train", "--config", p(&cfg), "--encoder", "wem-p", "--epochs", "1", "--out", p(&run)]);
    for f in ["checkpoint.uemc", "report.json", "loss.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let cubes: Vec<_> = (0..2).map(|i| dir.path().join(format!("e{i}.scube"))).collect();
    for (i, c) in cubes.iter().enumerate() {
        let seed = (10 + i).to_string();
        ok(&["synth", "--h", "8", "--w", "8", "--bands", "4", "--seed", &seed, "--out", p(c)]);
    }
    let table = dir.path().join("eval.csv");
    let ckpt = run.join("checkpoint.uemc");
    ok(&["eval", "--checkpoint", p(&ckpt), "--cube", p(&cubes[0]), "--cube", p(&cubes[1]), "--out", p(&table)]);
    let text = fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "cube,psnr,psnr_si,sam,ergas");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("mean,"));
    let col = |l: &str| -> f64 { l.split(',').nth(1).unwrap().parse().unwrap() };
    let mean = (col(lines[1]) + col(lines[2])) / 2.0;
    assert!((col(lines[3]) - mean).abs() <= 1e-9 * mean.abs().max(1.0));

    let viz = dir.path().join("viz");
    ok(&["export-viz", "--checkpoint", p(&ckpt), "--out", p(&viz)]);
    assert!(viz.join("response.csv").exists());
}

#[test]
fn exit_codes() {
    assert_eq!(uem(&["--help"]).status.code(), Some(0));
    assert_eq!(uem(&["synth", "--h", "x"]).status.code(), Some(1));
    assert_eq!(uem(&["synth", "--h", "2", "--w", "2", "--bands", "2"]).status.code(), Some(1));
    let o = uem(&["eval", "--checkpoint", "/nonexistent", "--cube", "/nonexistent", "--out", "/tmp/x.csv"]);
    assert_eq!(o.status.code(), Some(2));
}
