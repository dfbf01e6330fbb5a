//! End-to-end checks through the actual binary: exit codes, file outputs,
//! and config-file handling.

use std::path::Path;
use std::process::Command;

fn dualtv() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualtv"))
}

#[test]
fn quick_denoise_run_writes_csv_and_image() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let img = dir.path().join("restored.pgm");
    let output = dualtv()
        .args([
            "denoise",
            "--synthetic",
            "blocks",
            "--width",
            "24",
            "--height",
            "24",
            "--delta",
            "4",
            "--outer-iterations",
            "4",
            "--local-max-iterations",
            "40",
            "--reference-iterations",
            "2000",
            "--omit-wall-time",
        ])
        .arg("--out-csv")
        .arg(&csv)
        .arg("--out-image")
        .arg(&img)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("psnr restored"), "summary missing: {stdout}");

    let csv_text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = csv_text.lines();
    assert!(lines.next().unwrap().starts_with("# dualtv"));
    assert_eq!(
        lines.next().unwrap(),
        "iter,energy,gap,rel_gap,duality_gap,decrease_lhs,decrease_rhs,wall_s,psnr"
    );
    assert_eq!(csv_text.lines().count(), 4 + 3); // comment + header + 5 records

    let pgm = std::fs::read(&img).unwrap();
    assert!(pgm.starts_with(b"P5\n24 24\n255\n"));
}

#[test]
fn config_file_feeds_the_run_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        "synthetic = blocks\nwidth = 24\nheight = 24\ndelta = 4\n\
         outer-iterations = 2\nlocal-max-iterations = 30\nreference-iterations = 1000\n\
         lambda = 5\n",
    )
    .unwrap();
    let output = dualtv()
        .args(["denoise", "--config"])
        .arg(&cfg)
        .args(["--lambda", "7"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("lambda = 7"), "flag must override the file: {stdout}");
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    // Configuration error: tau outside (0, 1/colors].
    let out = dualtv()
        .args([
            "denoise", "--tau", "0.9", "--width", "24", "--height", "24", "--delta", "4",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "config failures exit with 2");

    // I/O error: missing input image.
    let out = dualtv()
        .args(["denoise", "--image", "/nonexistent/image.pgm"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "I/O failures exit with 3");

    // Config error detected at decomposition time: overlap too large.
    let out = dualtv()
        .args([
            "denoise",
            "--width",
            "24",
            "--height",
            "24",
            "--delta",
            "11",
            "--outer-iterations",
            "1",
            "--reference-iterations",
            "10",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_subcommand_passes() {
    let out = dualtv().arg("selftest").output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("selftest: all checks passed"), "{stdout}");
    assert!(stdout.lines().filter(|l| l.starts_with("[ok]")).count() >= 7);
}

#[test]
fn sweep_delta_writes_per_point_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("sweep");
    let out = dualtv()
        .args([
            "sweep-delta",
            "--deltas",
            "2,4",
            "--width",
            "32",
            "--height",
            "32",
            "--domains",
            "2x2",
            "--outer-iterations",
            "6",
            "--local-max-iterations",
            "40",
            "--reference-iterations",
            "2000",
            "--omit-wall-time",
        ])
        .arg("--csv-prefix")
        .arg(&prefix)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(Path::new(&dir.path().join("sweep-delta2.csv")).exists());
    assert!(Path::new(&dir.path().join("sweep-delta4.csv")).exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("overlap sweep"));
    assert!(stdout.contains("threshold nonincreasing in delta"));
}

#[test]
fn compare_reports_both_solvers() {
    let out = dualtv()
        .args([
            "compare",
            "--width",
            "24",
            "--height",
            "24",
            "--delta",
            "4",
            "--outer-iterations",
            "30",
            "--local-max-iterations",
            "200",
            "--fista-iterations",
            "3000",
            "--reference-iterations",
            "3000",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("schwarz"));
    assert!(stdout.contains("fista"));
    assert!(stdout.contains("relative energy difference"));
}
