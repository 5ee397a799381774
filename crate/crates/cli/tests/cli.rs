use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const FAST: &str = r#"
seed = 11
scale = 0.05

[ude]
epochs = 10

[gezo]
epochs = 3
"#;

fn ude(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ude"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn ude")
}

fn ok(args: &[&str]) -> Output {
    let out = ude(args);
    assert!(
        out.status.success(),
        "ude {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

struct Workspace {
    dir: TempDir,
    config: PathBuf,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, config).unwrap();
        Self { dir, config: path }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn args<'a>(&'a self, cmd: &[&'a str], out: &'a str) -> Vec<&'a str> {
        let mut v = vec!["--config", self.config.to_str().unwrap(), "--out", out];
        v.extend_from_slice(cmd);
        v
    }

    fn run(&self, cmd: &[&str]) -> Output {
        let out = self.out();
        ok(&self.args(cmd, out.to_str().unwrap()))
    }
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn full_pipeline_writes_reports_and_manifests() {
    let ws = Workspace::new(FAST);
    let stdout = ws.run(&["run", "--all"]).stdout;
    let out = ws.out();
    let csv = read(out.join("report.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,EO_n,EO_p,DI,Acc");
    assert!(lines[1].starts_with("erm,"));
    assert!(lines[2].starts_with("ude,"));
    assert_eq!(lines.len(), 3);
    for row in &lines[1..] {
        for v in row.split(',').skip(1) {
            let v: f64 = v.parse().unwrap();
            assert!(v.is_finite() && v >= 0.0, "{row}");
        }
    }
    assert!(String::from_utf8_lossy(&stdout).contains("erm,"));

    let report: serde_json::Value = serde_json::from_str(&read(out.join("report.json"))).unwrap();
    assert!(report["erm"]["eo_pos"].is_number());
    assert!(report["ude"]["one_minus_di_abs"].is_number());
    assert!(report["sa_edited_accuracy"].is_number());

    for cmd in ["generate", "train-sa", "learn-edit", "train-disease", "evaluate"] {
        let m: serde_json::Value = serde_json::from_str(&read(out.join(format!("manifests/{cmd}.json")))).unwrap();
        assert_eq!(m["command"], cmd);
        assert_eq!(m["seed"], 11);
        assert!(!m["outputs"].as_array().unwrap().is_empty(), "{cmd} lists no outputs");
    }
}

#[test]
fn evaluate_without_edit_reports_erm_only() {
    let ws = Workspace::new(FAST);
    ws.run(&["generate"]);
    ws.run(&["train-sa"]);
    ws.run(&["train-disease"]);
    assert!(!ws.out().join("ude_head").exists());
    ws.run(&["evaluate"]);
    let csv = read(ws.out().join("report.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("erm,"));
    let report: serde_json::Value = serde_json::from_str(&read(ws.out().join("report.json"))).unwrap();
    assert!(report["ude"].is_null());
}

#[test]
fn replaying_a_manifest_reproduces_artifacts() {
    let ws = Workspace::new(FAST);
    ws.run(&["generate"]);
    ws.run(&["train-sa"]);
    ws.run(&["learn-edit"]);
    let first = ws.out();
    let second = ws.dir.path().join("replay");
    let second_s = second.to_str().unwrap();
    for cmd in ["generate", "train-sa", "learn-edit"] {
        let manifest = first.join(format!("manifests/{cmd}.json"));
        ok(&["--config", manifest.to_str().unwrap(), "--out", second_s, cmd]);
    }
    for f in [
        "data/train/images.udet",
        "data/train/sa_labels.u8",
        "data/train/disease_labels.u8",
        "data/test/images.udet",
        "sa_head",
        "edit/eps.udet",
    ] {
        let (a, b) = (first.join(f), second.join(f));
        if a.is_dir() {
            for entry in std::fs::read_dir(&a).unwrap() {
                let name = entry.unwrap().file_name();
                assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{f}/{name:?}");
            }
        } else {
            assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{f}");
        }
    }
}

#[test]
fn seed_override_changes_the_data() {
    let ws = Workspace::new(FAST);
    ws.run(&["generate"]);
    let other = ws.dir.path().join("other");
    ok(&["--config", ws.config.to_str().unwrap(), "--out", other.to_str().unwrap(), "--seed", "12", "generate"]);
    let f = "data/train/images.udet";
    assert_ne!(std::fs::read(ws.out().join(f)).unwrap(), std::fs::read(other.join(f)).unwrap());
}

#[test]
fn noise_map_exports_grid_and_mask() {
    let ws = Workspace::new(FAST);
    ws.run(&["generate"]);
    ws.run(&["train-sa"]);
    ws.run(&["learn-edit"]);
    ws.run(&["noise-map", "--top-fraction", "0.1"]);
    let map = read(ws.out().join("noise_map.csv"));
    let rows: Vec<Vec<f64>> = map
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.len() == 16));
    let max = rows.iter().flatten().cloned().fold(f64::MIN, f64::max);
    let min = rows.iter().flatten().cloned().fold(f64::MAX, f64::min);
    assert!((max - 1.0).abs() < 1e-6 && min.abs() < 1e-6, "range [{min}, {max}]");

    let mask = read(ws.out().join("noise_mask.csv"));
    let set = mask.lines().flat_map(|l| l.split(',')).filter(|v| *v == "1").count();
    assert!(set > 0 && set <= 26, "{set} pixels masked");
    let m: serde_json::Value = serde_json::from_str(&read(ws.out().join("manifests/noise-map.json"))).unwrap();
    assert_eq!(m["extra"]["masked_pixels"], set);
    assert!(m["extra"]["sa_region_mean"].is_number());
}

#[test]
fn lambda_sweep_writes_one_row_per_value() {
    let ws = Workspace::new(FAST);
    ws.run(&["sweep", "--param", "lambda", "--values", "0.01,1"]);
    let csv = read(ws.out().join("sweep_lambda.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "value,EO_n,EO_p,DI,Acc,SA_acc,eps_norm,seed");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.01,"));
    assert!(lines[2].starts_with("1,"));
    let norm = |l: &str| l.split(',').nth(6).unwrap().parse::<f64>().unwrap();
    assert!(norm(lines[2]) < norm(lines[1]));
}

#[test]
fn local_iteration_sweep_runs_zeroth_order() {
    let ws = Workspace::new(FAST);
    ws.run(&["sweep", "--param", "local-iters", "--values", "2"]);
    let m: serde_json::Value =
        serde_json::from_str(&read(ws.out().join("manifests/sweep-local_iters.json"))).unwrap();
    assert_eq!(m["extra"]["rows"].as_array().unwrap().len(), 1);
    let bad = ude(&ws.args(&["sweep", "--param", "local-iters", "--values", "1.5"], ws.out().to_str().unwrap()));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn whitebox_against_remote_oracle_is_a_config_error() {
    let ws = Workspace::new(&format!("mode = \"whitebox\"\noracle = {{ remote = \"127.0.0.1:9\" }}\n{FAST}"));
    let out = ude(&ws.args(&["learn-edit"], ws.out().to_str().unwrap()));
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exit_codes() {
    let ws = Workspace::new("seed = \"not a number\"\n");
    let out = ude(&ws.args(&["generate"], ws.out().to_str().unwrap()));
    assert_eq!(out.status.code(), Some(2));

    let ws = Workspace::new(FAST);
    let out = ude(&ws.args(&["evaluate"], ws.out().to_str().unwrap()));
    assert_eq!(out.status.code(), Some(1), "missing inputs");

    let ws = Workspace::new(&format!("mode = \"gezo\"\noracle = {{ remote = \"127.0.0.1:9\" }}\n{FAST}"));
    ws.run(&["generate"]);
    ws.run(&["train-sa"]);
    let out = ude(&ws.args(&["learn-edit"], ws.out().to_str().unwrap()));
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn served_oracle_drives_a_remote_gezo_edit() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let addr = format!("127.0.0.1:{port}");
    let local = Workspace::new(&format!("mode = \"gezo\"\n{FAST}"));
    local.run(&["generate"]);
    local.run(&["train-sa"]);
    let mut server = Command::new(env!("CARGO_BIN_EXE_ude"))
        .args(local.args(&["serve", "--address", &addr], local.out().to_str().unwrap()))
        .env("RUST_LOG", "warn")
        .spawn()
        .unwrap();
    let mut up = false;
    for _ in 0..100 {
        if std::net::TcpStream::connect(&addr).is_ok() {
            up = true;
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    assert!(up, "server did not start");

    let remote_cfg = format!("mode = \"gezo\"\noracle = {{ remote = \"{addr}\" }}\n{FAST}");
    std::fs::write(&local.config, &remote_cfg).unwrap();
    let remote_out = local.dir.path().join("remote");
    for sub in ["data", "encoder", "sa_head"] {
        copy_tree(&local.out().join(sub), &remote_out.join(sub));
    }
    let result = ude(&local.args(&["learn-edit"], remote_out.to_str().unwrap()));
    server.kill().ok();
    server.wait().ok();
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));

    std::fs::write(&local.config, format!("mode = \"gezo\"\n{FAST}")).unwrap();
    local.run(&["learn-edit"]);
    assert_eq!(
        std::fs::read(local.out().join("edit/eps.udet")).unwrap(),
        std::fs::read(remote_out.join("edit/eps.udet")).unwrap()
    );
}

fn copy_tree(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}
