use std::path::Path;
use std::process::{Command, Output};

fn pcwbeta(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcwbeta"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn version_reports_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let a = pcwbeta(dir.path(), &["--version"]);
    assert!(a.status.success(), "{}", text(&a));
    let line = String::from_utf8(a.stdout).unwrap();
    let hash = line.trim().rsplit(' ').next().unwrap().to_string();
    assert!(line.starts_with("pcwbeta ") && hash.len() == 16, "{line}");

    let b = pcwbeta(dir.path(), &["--version", "--resolution", "24"]);
    let other = String::from_utf8(b.stdout).unwrap();
    assert!(!other.contains(&hash), "{other}");
}

#[test]
fn malformed_key_is_named_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[geometry]\nr = 0.3\n\n[solver]\nresolutoin = 16\n").unwrap();
    let o = pcwbeta(dir.path(), &["--config", "run.toml", "bands"]);
    assert!(!o.status.success());
    let msg = text(&o);
    assert!(msg.contains("resolutoin") && msg.contains("line 5"), "{msg}");
}

#[test]
fn uniform_bands_are_folded_light_lines() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "[geometry]\nstructure = \"uniform\"\nn = 2.0\n\n[study]\nk_list = [0.0, 0.1, 0.25, 0.4, 0.5]\nbands = 3\n",
    )
    .unwrap();
    let o = pcwbeta(dir.path(), &["--config", "run.toml", "--output", "out", "bands"]);
    assert!(o.status.success(), "{}", text(&o));
    let mut rdr = csv::Reader::from_path(dir.path().join("out/bands.csv")).unwrap();
    let mut seen = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let k: f64 = rec[0].parse().unwrap();
        let band: usize = rec[1].parse().unwrap();
        let w: f64 = rec[2].parse().unwrap();
        if band == 0 {
            assert!((w - k.abs() / 2.0).abs() < 1e-8, "k {k}: {w}");
            seen += 1;
        }
    }
    assert_eq!(seen, 5);
    assert!(dir.path().join("out/config.toml").exists());
}

#[test]
fn emitter_inside_a_hole_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "[geometry]\nm = 2\nl_periods = 9\n\n[solver]\nresolution = 16\ngap = [0.205, 0.27]\n",
    )
    .unwrap();
    let hole_y = format!("{}", 3f64.sqrt());
    let o = pcwbeta(
        dir.path(),
        &["--config", "run.toml", "--output", "out", "emit", "--x", "0", "--y", &hole_y],
    );
    assert!(!o.status.success());
    assert!(text(&o).contains("hole"), "{}", text(&o));
}
