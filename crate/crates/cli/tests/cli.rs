use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("semcert-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn semcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semcert")).args(args).output().unwrap()
}

fn brightness_args<'a>(images: &'a str, model: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "certify",
        "--model",
        model,
        "--dataset",
        "json",
        "--images-path",
        images,
        "--threat",
        "brightness_contrast",
        "--fixed-contrast",
        "0",
        "--mode",
        "weighted,spl",
        "--out",
        out,
    ]
}

#[test]
fn certify_is_deterministic() {
    let (images, model) = (data("brightness_point.json"), data("brightness_2_4_2.json"));
    // the output path is echoed in the report, so both runs write to the same file
    let out = scratch("report.json");
    let mut reports = Vec::new();
    for _ in 0..2 {
        let run = semcert(&brightness_args(&images, &model, out.to_str().unwrap()));
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
        reports.push(std::fs::read(&out).unwrap());
    }
    let (ja, jb) = (&reports[0], &reports[1]);
    assert_eq!(ja, jb);
    let report: serde_json::Value = serde_json::from_slice(ja).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let radius = rows[1]["certification"]["certified_radius"].as_f64().unwrap();
    assert!(radius > 0.1 && radius < 0.1398);
}

#[test]
fn enumerate_writes_csv() {
    let csv = scratch("enum.csv");
    let run = semcert(&[
        "enumerate",
        "--model",
        &data("mnist_mlp_3x100.json"),
        "--images-path",
        &data("mnist/t10k-images-idx3-ubyte"),
        "--labels-path",
        &data("mnist/t10k-labels-idx1-ubyte"),
        "--indices",
        "0..2",
        "--threat",
        "occlusion",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("image_index,label,predicted,mode,threat"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn bad_configs_exit_with_one() {
    let model = data("mnist_mlp_3x100.json");
    let (images, labels) = (
        data("mnist/t10k-images-idx3-ubyte"),
        data("mnist/t10k-labels-idx1-ubyte"),
    );
    let base = ["--model", &model, "--images-path", &images, "--labels-path", &labels];
    // occlusion is enumerated, not certified
    let run = semcert(&[&["certify"][..], &base, &["--threat", "occlusion", "--indices", "0"]].concat());
    assert_eq!(run.status.code(), Some(1));
    let run = semcert(
        &[
            &["enumerate"][..],
            &base,
            &["--threat", "occlusion", "--indices", "99999"],
        ]
        .concat(),
    );
    assert_eq!(run.status.code(), Some(1));
    let run = semcert(&["certify", "--model", "/nonexistent.json", "--images-path", &images]);
    assert_eq!(run.status.code(), Some(1));
}
