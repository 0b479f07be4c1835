use std::path::Path;
use std::process::{Command, Output};

fn ser(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ser"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn ser")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header
        .iter()
        .position(|h| *h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    lines
        .map(|l| l.split(',').nth(idx).unwrap().to_string())
        .collect()
}

fn numbers(csv: &str, name: &str) -> Vec<f64> {
    column(csv, name)
        .iter()
        .map(|s| s.parse().unwrap())
        .collect()
}

#[test]
fn glm_sweep_defaults_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = ser(dir.path(), &["glm-sweep", "--out", "g.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
    let ser_col = numbers(&csv, "ser");
    let mi = numbers(&csv, "mi");
    assert!(ser_col.windows(2).all(|w| w[1] > w[0]));
    for (s, i) in ser_col.iter().zip(&mi) {
        assert!((s - i).abs() <= 1e-8 * (1.0 + i));
    }
    let manifest = std::fs::read_to_string(dir.path().join("g.csv.manifest")).unwrap();
    for key in [
        "tool = ser",
        "subcommand = glm-sweep",
        "config.seed = 1",
        "config.m = 10",
        "column.ser = nats",
        "snr_definition",
    ] {
        assert!(manifest.contains(key), "manifest lacks {key}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "model = glm\nm = 4\nt = 6\nseed = 9\nsnr_grid_db = -5:5:20\n",
    )
    .unwrap();
    for out in ["a.csv", "b.csv"] {
        let o = ser(
            dir.path(),
            &["glm-sweep", "--config", "run.cfg", "--out", out],
        );
        assert_eq!(code(&o), 0);
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "seed = 3\nsnr_grid_db = 0,10\n").unwrap();
    let o = ser(
        dir.path(),
        &[
            "glm-sweep",
            "--config",
            "run.cfg",
            "--seed",
            "4",
            "--log-base",
            "bits",
            "--out",
            "x.csv",
        ],
    );
    assert_eq!(code(&o), 0);
    let manifest = std::fs::read_to_string(dir.path().join("x.csv.manifest")).unwrap();
    assert!(manifest.contains("config.seed = 4"));
    assert!(manifest.contains("log_base = bits"));
    assert!(manifest.contains("column.mi = bits"));
}

#[test]
fn zero_budget_gives_zero_rates() {
    let dir = tempfile::tempdir().unwrap();
    let o = ser(
        dir.path(),
        &[
            "glm-sweep",
            "--set",
            "power=0",
            "--snr-grid=-inf",
            "--out",
            "z.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("z.csv")).unwrap();
    for name in ["mi", "ser"] {
        let v = numbers(&csv, name);
        assert_eq!(v.len(), 1);
        assert!(v[0].abs() < 1e-12, "{name} = {}", v[0]);
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ser(dir.path(), &["glm-sweep", "--set", "m=0"])), 2);
    assert_eq!(
        code(&ser(dir.path(), &["glm-sweep", "--set", "bogus=1"])),
        2
    );
    assert_eq!(
        code(&ser(dir.path(), &["glm-sweep", "--config", "missing.cfg"])),
        2
    );
    std::fs::write(dir.path().join("d.cfg"), "model = delay\n").unwrap();
    assert_eq!(
        code(&ser(dir.path(), &["glm-sweep", "--config", "d.cfg"])),
        2
    );
    assert_eq!(code(&ser(dir.path(), &["waterfill"])), 2);
}

#[test]
fn semiglm_modes() {
    let dir = tempfile::tempdir().unwrap();
    for mode in [
        "equal_eigs_aligned",
        "random_eigs_aligned",
        "random_eigs_random_ur",
    ] {
        let o = ser(
            dir.path(),
            &[
                "semiglm-sweep",
                "--f-mode",
                mode,
                "--out",
                &format!("{mode}.csv"),
            ],
        );
        assert_eq!(
            code(&o),
            0,
            "{mode}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let read = |m: &str| std::fs::read_to_string(dir.path().join(format!("{m}.csv"))).unwrap();
    let eq = read("equal_eigs_aligned");
    for (s, i) in numbers(&eq, "ser_mmse").iter().zip(numbers(&eq, "mi_opt")) {
        assert!((s - i).abs() <= 1e-7 * (1.0 + i));
    }
    let al = read("random_eigs_aligned");
    let (sm, ss, mi) = (
        numbers(&al, "ser_mi"),
        numbers(&al, "ser_mmse"),
        numbers(&al, "mi_opt"),
    );
    assert!(sm
        .iter()
        .zip(&ss)
        .all(|(a, b)| a <= &(b + 1e-9 * (1.0 + b))));
    assert!(ss.iter().zip(&mi).any(|(s, i)| i - s > 1e-6));
    let ur = read("random_eigs_random_ur");
    for (u, a) in numbers(&ur, "mi_opt").iter().zip(&mi) {
        assert!(*u <= a + 1e-9 * (1.0 + a));
    }
}

#[test]
fn delay_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = ser(
        dir.path(),
        &[
            "delay-sweep",
            "--set",
            "b_rms_sq_grid=1,2",
            "--set",
            "sigma_eta_sq=0.5",
            "--snr-grid=-inf,0,10",
            "--out",
            "d.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let rate = numbers(&csv, "ser");
    let crb = numbers(&csv, "sigma_crb_sq");
    assert_eq!(&rate[..2], &[0.0, 0.0]);
    for k in [2, 4] {
        assert!((crb[k] / crb[k + 1] - 2.0).abs() < 1e-12);
        assert!((rate[k] - (1.0 + 0.5 / crb[k]).ln()).abs() < 1e-12);
    }
}

#[test]
fn waterfill_direct_and_inverse() {
    let dir = tempfile::tempdir().unwrap();
    let o = ser(
        dir.path(),
        &[
            "waterfill",
            "--floors",
            "1,2,3",
            "--budget",
            "2",
            "--out",
            "w.csv",
        ],
    );
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(dir.path().join("w.csv")).unwrap();
    assert_eq!(numbers(&csv, "level"), vec![1.5, 0.5, 0.0]);
    assert_eq!(column(&csv, "mode_index"), vec!["0", "1", "2"]);

    let o = ser(
        dir.path(),
        &[
            "waterfill",
            "--variances",
            "4,1",
            "--distortion",
            "1",
            "--out",
            "r.csv",
        ],
    );
    assert_eq!(code(&o), 0);
    let manifest = std::fs::read_to_string(dir.path().join("r.csv.manifest")).unwrap();
    let rate: f64 = manifest
        .lines()
        .find_map(|l| l.strip_prefix("rate = "))
        .expect("rate line")
        .parse()
        .unwrap();
    assert!((rate - 16f64.ln()).abs() < 1e-12);
}

#[test]
fn validate_passes_and_zero_tolerance_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ok = ser(dir.path(), &["validate", "--sizes", "2,4"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    let again = ser(dir.path(), &["validate", "--sizes", "2,4"]);
    assert_eq!(ok.stdout, again.stdout);

    let bad = ser(dir.path(), &["validate", "--sizes", "2", "--tol", "0"]);
    assert_eq!(code(&bad), 1);
    let text = String::from_utf8_lossy(&bad.stdout);
    assert!(text.contains("FAIL"));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("failed checks"));
}
