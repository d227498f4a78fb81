use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "[experiment]\nseed = 11\n\n[data]\ntrain_images = 120\nval_images = 30\nvideos = 2\n\n[train]\nrealizations = 1\nepochs = 2\n\n[analysis]\nmc_trials = 3\n";

fn nslab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nslab"))
        .current_dir(dir)
        .env_remove("NSLAB_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn tiny_config(dir: &Path) -> String {
    fs::write(dir.join("tiny.ini"), TINY).unwrap();
    "tiny.ini".into()
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = nslab(dir.path(), &["gen-data"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("seed"));
    fs::write(dir.path().join("bad.ini"), "[experiment]\nseed=1\n[data]\nvidoes=3\n").unwrap();
    let out = nslab(dir.path(), &["gen-data", "--config", "bad.ini"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("vidoes"));
}

#[test]
fn missing_inputs_exit_3_with_file_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = nslab(dir.path(), &["train", "--seed", "1", "--out", "o"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let out = nslab(dir.path(), &["report", "--seed", "1", "--out", "o"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("avenonsmooth.csv") && stderr(&out).contains("r2_summary.csv"));
    let out = nslab(dir.path(), &["gen-data", "--config", "absent.ini"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    for out in ["a", "b"] {
        let o = nslab(dir.path(), &["gen-data", "--config", &cfg, "--out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("120 training images, 30 validation images, 2 videos"));
    }
    let a = read_dir_bytes(&dir.path().join("a"));
    assert_eq!(a, read_dir_bytes(&dir.path().join("b")));
    assert_eq!(a.len(), 8);
    // a different seed changes the data
    nslab(dir.path(), &["gen-data", "--config", &cfg, "--out", "c", "--seed", "12"]);
    assert_ne!(a, read_dir_bytes(&dir.path().join("c")));
}

#[test]
fn env_var_overrides_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_nslab"))
        .current_dir(dir.path())
        .env("NSLAB_OUT", dir.path().join("from-env"))
        .args(["gen-data", "--config", &cfg, "--out", "from-flag"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("from-env/data/train/manifest.txt").exists());
    assert!(!dir.path().join("from-flag").exists());
}

#[test]
fn rotation_dataset_counts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("rot.ini"),
        "[experiment]\nseed=3\n[data]\nkind=mnist-rotation\ntemplates=3\nangles=4\nval_angles=2\nvideos=1\n",
    )
    .unwrap();
    let out = nslab(dir.path(), &["gen-data", "--config", "rot.ini", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("12 training images, 6 validation images, 1 videos"));
    let manifest = fs::read_to_string(dir.path().join("o/data/videos/v000/manifest.txt")).unwrap();
    assert!(manifest.contains("count=100"), "{manifest}");
}

#[test]
fn full_pipeline_reruns_identically_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = nslab(dir.path(), &["all", "--config", &cfg, "--out", "run", "--jobs", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("reference 0.944") && stdout.contains("reference 0.842"), "{stdout}");
    let root = dir.path().join("run");
    let first = read_dir_bytes(&root);
    assert!(first.iter().any(|(p, _)| p.ends_with("channels/relu_maxpool_r00.txt")));

    // every command again from scratch in a second directory
    let out = nslab(dir.path(), &["all", "--config", &cfg, "--out", "run2", "--jobs", "1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(first, read_dir_bytes(&dir.path().join("run2")));

    // report is idempotent
    let manifest = fs::read(root.join("reports/manifest.txt")).unwrap();
    assert_eq!(code(&nslab(dir.path(), &["report", "--config", &cfg, "--out", "run"])), 0);
    assert_eq!(manifest, fs::read(root.join("reports/manifest.txt")).unwrap());

    let table = root.join("reports/r2_summary.csv");
    let text = fs::read_to_string(&table).unwrap();
    fs::write(&table, text.replacen("\nconv2,actual,", "\nconv2,actual,1,", 1)).unwrap();
    let out = nslab(dir.path(), &["report", "--config", &cfg, "--out", "run"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("r2_summary.csv"), "{}", stderr(&out));
}
