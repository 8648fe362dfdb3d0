use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oasis::tensorio::{read_tensor, write_tensor, TensorData, TensorFile};

fn oasis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oasis"))
        .args(args)
        .env_remove("OASIS_CONFIG")
        .output()
        .expect("binary runs")
}

fn data(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(rel)
        .display()
        .to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_symbols(dir: &Path, name: &str, symbols: Vec<i8>) -> PathBuf {
    let p = dir.join(name);
    let t = TensorFile::symbols(vec![symbols.len() as u32], symbols).unwrap();
    std::fs::write(&p, write_tensor(&t)).unwrap();
    p
}

#[test]
fn analyze_table_and_json() {
    let o = oasis(&["analyze", &data("specs/tiny_resnet_vww.net")]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("conv2d"));
    assert!(text.contains(&(56u64 * 56 * 128 * 3 * 49).to_string()));

    let o = oasis(&["analyze", "--json", &data("specs/tiny_resnet_vww.net")]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["workload"]["output_shape"]["channels"], 4);
}

#[test]
fn malformed_spec_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.net");
    std::fs::write(&p, "input 3x8x8\nconv k3\n").unwrap();
    let o = oasis(&["analyze", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn compress_decompress_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let symbols: Vec<i8> = (0..5000).map(|i| ((i * 7919) % 15) as i8 - 7).collect();
    let t = write_symbols(dir.path(), "x.oast", symbols.clone());
    let stream = dir.path().join("x.oash");
    let o = oasis(&[
        "compress",
        t.to_str().unwrap(),
        "--bits",
        "4",
        "--out",
        stream.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let back = dir.path().join("y.oast");
    let o = oasis(&[
        "decompress",
        stream.to_str().unwrap(),
        "--out",
        back.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let t = read_tensor(&std::fs::read(&back).unwrap()).unwrap();
    assert_eq!(t.into_data(), TensorData::I8(symbols));
}

#[test]
fn compress_all_zero_is_one_bit() {
    let dir = tempfile::tempdir().unwrap();
    let t = write_symbols(dir.path(), "z.oast", vec![0; 1000]);
    let o = oasis(&["compress", "--json", t.to_str().unwrap(), "--bits", "4"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["avg_code_length"], 1.0);
    assert!(dir.path().join("z.oash").exists());
}

#[test]
fn compress_rejects_out_of_range_symbols() {
    let dir = tempfile::tempdir().unwrap();
    let t = write_symbols(dir.path(), "r.oast", vec![0, 9]);
    let o = oasis(&["compress", t.to_str().unwrap(), "--bits", "4"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn compress_with_foreign_codebook() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_symbols(dir.path(), "a.oast", vec![0, 0, 1, -1, 2]);
    let b = write_symbols(dir.path(), "b.oast", vec![2, 2, 2]);
    let c = write_symbols(dir.path(), "c.oast", vec![3]);
    assert!(oasis(&["compress", a.to_str().unwrap(), "--bits", "4"])
        .status
        .success());
    let table = dir.path().join("a.oash");
    let ok = oasis(&[
        "compress",
        b.to_str().unwrap(),
        "--bits",
        "4",
        "--codebook",
        table.to_str().unwrap(),
    ]);
    assert!(ok.status.success());
    let missing = oasis(&[
        "compress",
        c.to_str().unwrap(),
        "--bits",
        "4",
        "--codebook",
        table.to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn fitted_synthetic_stream_is_near_target() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("s.oast");
    let o = oasis(&["fit-sigma", "--target", "1.57", "--bits", "4"]);
    let sigma = stdout(&o).trim().to_string();
    let o = oasis(&[
        "synth",
        "--sigma",
        &sigma,
        "--count",
        "100000",
        "--seed",
        "3",
        "--out",
        t.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let o = oasis(&["compress", "--json", t.to_str().unwrap(), "--bits", "4"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let avg = v["avg_code_length"].as_f64().unwrap();
    assert!((avg - 1.57).abs() < 0.02, "{avg}");
}

#[test]
fn energy_report_both_topologies() {
    let o = oasis(&["energy", &data("scenarios/vww_swinvit.toml")]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("in-sensor") && text.contains("baseline"));
    assert!(text.contains("baseline / in-sensor energy"));

    let o = oasis(&["energy", "--json", &data("scenarios/vww_swinvit.toml")]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let r = v["baseline_over_in_sensor"].as_f64().unwrap();
    assert!((2.0..=4.5).contains(&r), "{r}");
}

#[test]
fn bad_topology_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.toml");
    std::fs::write(
        &p,
        format!(
            "name = 'x'\nencoder = '{}'\nquant_bits = 4\n[effective_bits]\nsource = 'fixed'\nvalue = 1.5\n[topology]\ntsv_bandwidth_multiple = 0.5\n",
            data("specs/tiny_resnet_vww.net")
        ),
    )
    .unwrap();
    assert_eq!(
        oasis(&["energy", p.to_str().unwrap()]).status.code(),
        Some(4)
    );

    std::fs::write(
        &p,
        format!(
            "name = 'x'\nencoder = '{}'\nbackend = '{}'\nquant_bits = 4\n[effective_bits]\nsource = 'fixed'\nvalue = 1.5\n",
            data("specs/tiny_resnet_vww.net"),
            data("specs/eyenet_encoder.net")
        ),
    )
    .unwrap();
    assert_eq!(
        oasis(&["energy", p.to_str().unwrap()]).status.code(),
        Some(4)
    );
}

#[test]
fn config_override_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("energy.toml");
    std::fs::write(&cfg, "e_byte_inf = 200e-12\n").unwrap();
    let run = |env: Option<&Path>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_oasis"));
        c.args(["energy", "--json", &data("scenarios/identity.toml")]);
        match env {
            Some(p) => c.env("OASIS_CONFIG", p),
            None => c.env_remove("OASIS_CONFIG"),
        };
        let v: serde_json::Value = serde_json::from_slice(&c.output().unwrap().stdout).unwrap();
        v["baseline"]["e_inf"].as_f64().unwrap()
    };
    let plain = run(None);
    let doubled = run(Some(&cfg));
    assert!((doubled - 2.0 * plain).abs() < 1e-15);
}

#[test]
fn sweep_single_point_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = oasis(&[
        "sweep",
        &data("grids/single_point.toml"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2);

    let grid = dir.path().join("g.toml");
    std::fs::write(
        &grid,
        format!(
            "name = 'g'\nencoder_template = '{}'\nd_values = [4, 5]\ns_values = [4]\nbit_values = [4]\ntopologies = ['in-sensor']\nliterature_rows = false\n[effective_bits]\nsource = 'synthetic'\nsigma = 0.5\ncount = 1000\n",
            data("specs/tiny_swinvit_vww.template.net")
        ),
    )
    .unwrap();
    let o = oasis(&[
        "sweep",
        grid.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["status"], "ok");
    assert_eq!(rows[1]["status"], "error");
    assert!(rows[1]["note"].as_str().unwrap().contains("heads"));
}

#[test]
fn eyetrack_report() {
    let o = oasis(&["eyetrack"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("128.0x"));
    assert!(text.contains("364.8x"));
}

#[test]
fn sweep_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_oasis"))
            .args([
                "sweep",
                &data("grids/vww_swinvit.toml"),
                "--seed",
                "9",
                "--out",
            ])
            .arg(&out)
            .env("RAYON_NUM_THREADS", threads)
            .env_remove("OASIS_CONFIG")
            .output()
            .unwrap();
        assert!(o.status.success());
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "4");
    let c = run("c.csv", "4");
    assert_eq!(a, b);
    assert_eq!(b, c);
}
