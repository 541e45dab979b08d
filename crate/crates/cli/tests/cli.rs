use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn diskel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diskel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = diskel(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn generate(dir: &Path, name: &str, proto: &str, seed: &str, rotation: &str) -> String {
    let out = p(dir, name);
    ok(&[
        "generate",
        "--proto",
        proto,
        "--seed",
        seed,
        "--rotation",
        rotation,
        "--noise",
        "0.5",
        "-o",
        &out,
    ]);
    out
}

#[test]
fn extract_and_self_match() {
    let t = tempfile::tempdir().unwrap();
    let mask = generate(t.path(), "hand.pbm", "hand", "1", "0");
    let desc = p(t.path(), "hand.json");
    ok(&["extract", &mask, "-o", &desc]);
    let out = ok(&["match", &desc, &desc, "--pairs"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("1.000000"));
    assert_eq!(lines.next(), Some("idxA,idxB,pair_score"));
    let pairs: Vec<&str> = lines.collect();
    assert!(!pairs.is_empty());
    for (k, line) in pairs.iter().enumerate() {
        assert_eq!(*line, format!("{k},{k},1.000000"));
    }
    assert_eq!(ok(&["match", &desc, &desc, "--pose-epsilon", "4"]).trim(), "1.000000");
    assert_eq!(ok(&["match", &desc, &desc, "--sensitive", "t,s,r"]).trim(), "1.000000");
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let bad = p(t.path(), "bad.json");
    fs::write(&bad, "not json").unwrap();
    assert_eq!(diskel(&["match", &bad, &bad]).status.code(), Some(2));
    assert_eq!(
        diskel(&["generate", "--proto", "teapot", "-o", &p(t.path(), "x.pbm")])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(diskel(&["match"]).status.code(), Some(2));
    let missing = p(t.path(), "missing.json");
    assert_eq!(diskel(&["match", &missing, &missing]).status.code(), Some(1));

    let holed = p(t.path(), "holed.pbm");
    fs::write(&holed, "P1 5 5\n11111\n11111\n11011\n11111\n11111\n").unwrap();
    let out = diskel(&["extract", &holed, "-o", &p(t.path(), "h.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hole"));
}

#[test]
fn index_query_evaluate() {
    let t = tempfile::tempdir().unwrap();
    let db = t.path().join("db");
    fs::create_dir(&db).unwrap();
    let mut labels = String::from("file,label\n");
    for (i, proto) in ["blob", "hand"].iter().enumerate() {
        for (k, rot) in ["0", "90"].iter().enumerate() {
            let name = format!("{proto}-{k}.pbm");
            generate(&db, &name, proto, &(2 * i + k).to_string(), rot);
            labels += &format!("{name},{proto}\n");
        }
    }
    fs::write(db.join("broken.pbm"), "P1 3 3\n111\n101\n111\n").unwrap();
    let labels_path = p(t.path(), "labels.csv");
    fs::write(&labels_path, labels).unwrap();

    let index = p(t.path(), "index.json");
    let out = ok(&["index", db.to_str().unwrap(), "--labels", &labels_path, "-o", &index]);
    assert!(out.contains("4 entries, 1 failures"), "{out}");
    let again = p(t.path(), "index2.json");
    ok(&["index", db.to_str().unwrap(), "--labels", &labels_path, "-o", &again]);
    assert_eq!(fs::read(&index).unwrap(), fs::read(&again).unwrap());

    let probe = p(t.path(), "probe.json");
    ok(&["extract", &p(&db, "hand-0.pbm"), "-o", &probe]);
    let hits = ok(&["query", &index, &probe, "-k", "10"]);
    let rows: Vec<&str> = hits.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("1,hand-0,1.0000"), "{hits}");

    let report = t.path().join("report");
    let out = ok(&["evaluate", &index, "-o", report.to_str().unwrap()]);
    assert!(out.contains("bulls_eye"));
    let be = fs::read_to_string(report.join("bullseye.txt")).unwrap();
    assert!(be.starts_with("# self excluded"));
    let pr = fs::read_to_string(report.join("pr.csv")).unwrap();
    assert_eq!(pr.lines().count(), 11);
    let scores = fs::read_to_string(report.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 17);
}

#[test]
fn render_outputs() {
    let t = tempfile::tempdir().unwrap();
    let mask = generate(t.path(), "hand.pbm", "hand", "3", "0");
    let desc = p(t.path(), "hand.json");
    ok(&["extract", &mask, "-o", &desc]);
    let n: usize = {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&desc).unwrap()).unwrap();
        let d = &v["alternatives"][0]["halves"];
        d[0].as_array().unwrap().len() + d[1].as_array().unwrap().len()
    };
    for input in [&mask, &desc] {
        let svg = p(t.path(), "out.svg");
        ok(&["render", input, "-o", &svg]);
        let s = fs::read_to_string(&svg).unwrap();
        assert!(s.starts_with("<svg"));
        assert_eq!(s.matches("<circle").count(), n);
        assert_eq!(s.matches("class=\"axis\"").count(), 2);
    }
}

#[test]
fn mean_and_warp() {
    let t = tempfile::tempdir().unwrap();
    let mut descs = Vec::new();
    for (i, rot) in ["0", "90", "30"].iter().enumerate() {
        let mask = generate(t.path(), &format!("h{i}.pbm"), "hand", &i.to_string(), rot);
        let d = p(t.path(), &format!("h{i}.json"));
        ok(&["extract", &mask, "-o", &d]);
        descs.push(d);
    }
    let mean = p(t.path(), "mean.csv");
    let lm = t.path().join("lm");
    ok(&[
        "mean",
        &descs[0],
        &descs[1],
        &descs[2],
        "-o",
        &mean,
        "--landmarks-dir",
        lm.to_str().unwrap(),
    ]);
    let rows = fs::read_to_string(&mean).unwrap();
    assert_eq!(rows.lines().next(), Some("x,y"));
    let n = rows.lines().count() - 1;
    assert!(n >= 3);

    // landmark CSVs give the same mean as descriptors
    let sets: Vec<String> = (0..3).map(|i| p(&lm, &format!("h{i}.csv"))).collect();
    let mean2 = p(t.path(), "mean2.csv");
    ok(&["mean", &sets[0], &sets[1], &sets[2], "-o", &mean2]);
    assert_eq!(rows, fs::read_to_string(&mean2).unwrap());

    // warping the source landmarks onto themselves is the identity
    let out = p(t.path(), "warped.csv");
    ok(&["warp", &sets[0], "--source", &sets[0], "--target", &sets[0], "-o", &out]);
    let parse = |s: &str| -> Vec<(f64, f64)> {
        s.lines()
            .skip(1)
            .map(|l| {
                let (a, b) = l.split_once(',').unwrap();
                (a.parse().unwrap(), b.parse().unwrap())
            })
            .collect()
    };
    let before = parse(&fs::read_to_string(&sets[0]).unwrap());
    let after = parse(&fs::read_to_string(&out).unwrap());
    for (a, b) in before.iter().zip(&after) {
        assert!((a.0 - b.0).abs() < 1e-6 && (a.1 - b.1).abs() < 1e-6);
    }
    ok(&[
        "warp",
        &p(t.path(), "h0.pbm"),
        "--source",
        &sets[0],
        "--target",
        &mean,
        "--align",
        "-o",
        &out,
    ]);
}
