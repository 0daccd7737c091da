use std::f64::consts::FRAC_PI_2;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_halfbox"))
        .args(args)
        .output()
        .expect("binary runs")
}

struct Csv {
    config: serde_json::Value,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn parse(out: &Output) -> Self {
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let text = String::from_utf8(out.stdout.clone()).unwrap();
        assert!(!text.contains('\r'));
        let mut lines = text.lines();
        let comment = lines.next().unwrap();
        let config =
            serde_json::from_str(comment.strip_prefix("# ").expect("config comment")).unwrap();
        let header = lines.next().unwrap().split(',').map(String::from).collect();
        let rows = lines
            .map(|l| l.split(',').map(String::from).collect())
            .collect();
        Csv {
            config,
            header,
            rows,
        }
    }

    fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).unwrap()
    }

    fn floats(&self, name: &str) -> Vec<f64> {
        let c = self.col(name);
        self.rows.iter().map(|r| r[c].parse().unwrap()).collect()
    }
}

fn singlet_density(x1: f64, x2: f64) -> f64 {
    let phi1 = |x: f64| (2.0 / std::f64::consts::PI).sqrt() * x.cos();
    let phi2 = |x: f64| (2.0 / std::f64::consts::PI).sqrt() * (2.0 * x).sin();
    let a = (phi1(x1) * phi2(x2) - phi2(x1) * phi1(x2)) / 2f64.sqrt();
    a * a
}

#[test]
fn correlation_row() {
    let out = run(&[
        "correlation",
        "--s",
        "0",
        "--t",
        "0",
        "--walkers",
        "2000",
        "--basis",
        "8",
        "--coarse-basis",
        "0",
    ]);
    let csv = Csv::parse(&out);
    assert_eq!(
        csv.header,
        [
            "s",
            "t",
            "analytic",
            "operator",
            "mc_value",
            "mc_stderr",
            "walkers",
            "failed"
        ]
    );
    assert_eq!(csv.rows.len(), 1);
    let expected = -(8.0 / (3.0 * std::f64::consts::PI)).powi(2);
    assert!((csv.floats("analytic")[0] - expected).abs() < 1e-12);
    assert!((csv.floats("operator")[0] - expected).abs() < 1e-10);
    let (mc, err) = (csv.floats("mc_value")[0], csv.floats("mc_stderr")[0]);
    assert!((mc - expected).abs() < 4.0 * err, "{mc} ± {err}");
    assert_eq!(csv.config["walkers"], 2000);
    assert_eq!(csv.config["seed"], 42);
}

#[test]
fn reruns_are_byte_identical() {
    let args = [
        "correlation",
        "--s",
        "0",
        "--t",
        "1.2",
        "--walkers",
        "300",
        "--seed",
        "9",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = run(&[
        "correlation",
        "--s",
        "0",
        "--t",
        "1.2",
        "--walkers",
        "300",
        "--seed",
        "10",
    ]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn floats_round_trip() {
    let csv = Csv::parse(&run(&[
        "correlation",
        "--s",
        "0",
        "--t",
        "0.1",
        "--walkers",
        "10",
    ]));
    let text = &csv.rows[0][csv.col("analytic")];
    let value: f64 = text.parse().unwrap();
    assert_eq!(value.to_string(), *text);
    assert_eq!(
        value,
        -(0.3f64).cos() * (8.0 / (3.0 * std::f64::consts::PI)).powi(2)
    );
}

#[test]
fn json_output() {
    let out = run(&[
        "correlation",
        "--s",
        "0",
        "--t",
        "0.5",
        "--walkers",
        "50",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let obj = v.as_object().unwrap();
    assert_eq!(obj.len(), 2);
    assert_eq!(v["config"]["command"], "correlation");
    let records = v["records"].as_array().unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(
        records[0]["walkers"].as_u64().unwrap() + records[0]["failed"].as_u64().unwrap(),
        50
    );
}

#[test]
fn config_errors_exit_with_two() {
    for args in [
        &["correlation", "--s", "0", "--t", "1", "--walkers", "0"][..],
        &["correlation", "--s", "1", "--t", "0"],
        &["correlation", "--s", "0", "--t", "1", "--first-axis", "3"],
        &["figures", "7"],
        &["signal", "--lambda", "cosine"],
        &["signal", "--bits", "012"],
        &["signal", "--alpha", "1.5"],
        &[
            "correlation",
            "--basis",
            "4",
            "--coarse-basis",
            "8",
            "--s",
            "0",
            "--t",
            "1",
        ],
        &["bogus"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty());
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn figure_one_density() {
    let csv = Csv::parse(&run(&["figures", "1", "--points", "41", "--basis", "4"]));
    assert_eq!(csv.header, ["x1", "x2", "density"]);
    assert_eq!(csv.rows.len(), 41 * 41);
    let (x1, x2, d) = (csv.floats("x1"), csv.floats("x2"), csv.floats("density"));
    for i in 0..d.len() {
        assert!((d[i] - singlet_density(x1[i], x2[i])).abs() < 1e-12);
    }
    let max = d.iter().cloned().fold(0.0, f64::max);
    let oracle_max = (0..41 * 41)
        .map(|k| {
            let x = |j: usize| -FRAC_PI_2 + std::f64::consts::PI * j as f64 / 40.0;
            singlet_density(x(k / 41), x(k % 41))
        })
        .fold(0.0, f64::max);
    assert!((max - oracle_max).abs() < 1e-12);
    // a single mirror pair on the anti-diagonal
    let peaks: Vec<(f64, f64)> = (0..d.len())
        .filter(|&i| d[i] > max - 1e-12)
        .map(|i| (x1[i], x2[i]))
        .collect();
    assert_eq!(peaks.len(), 2, "{peaks:?}");
    for (a, b) in &peaks {
        assert!((a + b).abs() < 1e-12 && a.abs() > 0.1);
    }
    assert_eq!(peaks[0].0, -peaks[1].0);
}

#[test]
fn figure_two_sheets() {
    let csv = Csv::parse(&run(&["figures", "2", "--points", "31", "--steps", "6"]));
    assert_eq!(csv.header, ["sheet", "t", "x2", "density"]);
    assert_eq!(csv.rows.len(), 3 * 7 * 31);
    let sheet = csv.col("sheet");
    let d = csv.floats("density");
    let mixture: Vec<f64> = csv
        .rows
        .iter()
        .zip(&d)
        .filter(|(r, _)| r[sheet] == "mixture")
        .map(|(_, v)| *v)
        .collect();
    for (k, v) in mixture.iter().enumerate() {
        assert!((v - mixture[k % 31]).abs() < 1e-8);
    }
    let plus: Vec<f64> = csv
        .rows
        .iter()
        .zip(&d)
        .filter(|(r, _)| r[sheet] == "plus")
        .map(|(_, v)| *v)
        .collect();
    assert!(plus.chunks(31).any(|c| (c[10] - c[20]).abs() > 1e-3));
}

#[test]
fn figure_three_paths_stay_in_the_box() {
    let csv = Csv::parse(&run(&[
        "figures",
        "3",
        "--trajectories",
        "3",
        "--steps",
        "20",
        "--basis",
        "8",
    ]));
    assert_eq!(csv.header, ["id", "t", "x1", "x2"]);
    assert_eq!(csv.rows.len(), 3 * 21);
    assert!(csv
        .floats("x1")
        .iter()
        .chain(&csv.floats("x2"))
        .all(|x| x.abs() < FRAC_PI_2));
    let x1 = csv.floats("x1");
    assert!(x1.iter().all(|x| *x == x1[0]) || x1.windows(2).any(|w| w[0] != w[1]));
}

#[test]
fn signal_at_equilibrium_is_silent() {
    let out = run(&[
        "signal",
        "--bits",
        "0101",
        "--trials",
        "25",
        "--walkers",
        "2000",
        "--basis",
        "8",
        "--coarse-basis",
        "0",
    ]);
    let csv = Csv::parse(&out);
    assert_eq!(
        csv.header,
        [
            "trial",
            "position",
            "bit",
            "ks_statistic",
            "p_value",
            "detected",
            "power_estimate"
        ]
    );
    assert_eq!(csv.rows.len(), 100);
    let power = csv.config["power"].as_f64().unwrap();
    let false_alarms = csv.config["false_alarm_rate"].as_f64().unwrap();
    assert!(
        power <= 0.15 && false_alarms <= 0.15,
        "{power} {false_alarms}"
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("power"));
}

#[test]
fn signal_with_knowledge_is_detected() {
    let out = run(&[
        "signal",
        "--lambda",
        "sin",
        "--bits",
        "1",
        "--trials",
        "10",
        "--walkers",
        "2000",
        "--basis",
        "8",
        "--coarse-basis",
        "0",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["config"]["power"].as_f64().unwrap() > 0.9);
    assert_eq!(v["records"].as_array().unwrap().len(), 10);
}
