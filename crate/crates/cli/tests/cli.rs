use std::path::Path;
use std::process::{Command, Output};

fn einsel(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_einsel"));
    cmd.args(args).env_remove("EINSEL_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("EINSEL_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const CLOSED: &str = "[system]\nfock_dim = 8\n[bath]\ncutoff = 0.01\ncoupling_sq = 0.0\n[solver]\nperiods = 1\nsteps_per_period = 400\n";

#[test]
fn evolve_writes_trajectory_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "closed.toml", CLOSED);
    let out = dir.path().join("out");
    let o = einsel(
        &["evolve", "--config", &cfg, "--out", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trajectory.csv", "resolved.toml", "manifest.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let traj = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let header: Vec<&str> = traj.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "entropy").unwrap();
    for line in traj.lines().skip(1) {
        let h: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert!(h.abs() < 1e-8);
    }
}

#[test]
fn env_var_sets_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "closed.toml", CLOSED);
    let env_dir = dir.path().join("from_env");
    let o = einsel(&["kernels", "--config", &cfg], Some(&env_dir));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(env_dir.join("kernels.csv").exists());

    // --out still wins over the environment.
    let flag_dir = dir.path().join("from_flag");
    let o = einsel(
        &[
            "kernels",
            "--config",
            &cfg,
            "--out",
            flag_dir.to_str().unwrap(),
        ],
        Some(&env_dir),
    );
    assert!(o.status.success());
    assert!(flag_dir.join("kernels.csv").exists());
}

#[test]
fn config_error_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "typo.toml", "[bath]\ncutof = 0.01\n");
    let o = einsel(
        &[
            "coeffs",
            "--config",
            &cfg,
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cutof"));
}

#[test]
fn truncation_abort_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "hot.toml",
        "[bath]\ncutoff = 0.01\ncoupling_sq = 1e4\n[solver]\nperiods = 1\nengine = \"channels\"\n[initial]\nkind = \"number\"\nn = 14\n",
    );
    let out = dir.path().join("out");
    let o = einsel(
        &["evolve", "--config", &cfg, "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn quadrature_rejection_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    // 64 nodes cannot resolve a window 10^4 times narrower than the k range.
    let cfg = write(
        dir.path(),
        "wide.toml",
        "[bath]\ncutoff = 0.01\nk_max = 100.0\n[solver]\nperiods = 1\n",
    );
    let o = einsel(
        &[
            "kernels",
            "--config",
            &cfg,
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(
        o.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn degenerate_spectrum_exits_with_five() {
    let dir = tempfile::tempdir().unwrap();
    // Scaling Ω far below the level tolerance collapses the Bohr spectrum.
    let cfg = write(
        dir.path(),
        "flat.toml",
        "[system]\nfrequency = 1e-10\nfock_dim = 4\n[bath]\ncutoff = 0.01\n[solver]\nperiods = 1\n",
    );
    let o = einsel(
        &[
            "rates",
            "--config",
            &cfg,
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(
        o.status.code(),
        Some(5),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn plot_renders_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "closed.toml", CLOSED);
    let out = dir.path().join("out");
    assert!(einsel(
        &["coeffs", "--config", &cfg, "--out", out.to_str().unwrap()],
        None
    )
    .status
    .success());
    let csv = out.join("coefficients.csv");
    let o = einsel(
        &[
            "plot",
            "coefficient_traces",
            "--input",
            csv.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = std::fs::read_to_string(out.join("coefficients.svg")).unwrap();
    assert!(svg.starts_with("<svg"));

    let o = einsel(
        &["plot", "offdiag_decay", "--input", csv.to_str().unwrap()],
        None,
    );
    assert!(!o.status.success());
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    let o = einsel(&[], None);
    assert_eq!(o.status.code(), Some(2));
}
