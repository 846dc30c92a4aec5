use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fastspec::chains::{random, ApplyMode, ChainKind, TransformChain};
use fastspec::graph::{erdos_renyi, laplacian, to_matrix_market};
use fastspec::linalg::DenseMatrix;
use fastspec_cli::{format_vector, parse_vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn fastspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastspec")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_file(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, contents).unwrap();
    p
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn factorize_sym_writes_chain_and_report() {
    let dir = TempDir::new().unwrap();
    let lap = laplacian(&erdos_renyi(16, 0.3, 1, false).unwrap());
    let input = write_file(&dir, "lap.mtx", &to_matrix_market(&lap));
    let out = dir.path().join("chain.json");
    let res = fastspec(&[
        "factorize", "--sym", "--input", path_str(&input), "--g", "64", "--spectrum", "update", "--eps", "1e-2",
        "--mode", "polish", "--out", path_str(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let chain = TransformChain::deserialize(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!((chain.kind(), chain.n(), chain.len()), (ChainKind::G, 16, 64));
    let rep = report(&dir.path().join("chain.json.report.json"));
    assert_eq!(rep["flops"], 6 * 64);
    assert_eq!(rep["config"]["budget"], 64);
    let rel = rep["final_rel_error"].as_f64().unwrap();
    assert!(rel < rep["init_trace"][0].as_f64().unwrap());
    assert!(!rep["sweep_trace"].as_array().unwrap().is_empty());
}

#[test]
fn factorize_general_from_edge_list() {
    let dir = TempDir::new().unwrap();
    let edges = write_file(&dir, "g.txt", "n 5 directed\n0 1\n1 2\n2 3\n3 4\n4 0 2.5\n# comment\n1 3\n");
    let out = dir.path().join("t.json");
    let rep = dir.path().join("r.json");
    let res = fastspec(&[
        "factorize", "--general", "--graph", path_str(&edges), "--m", "12", "--out", path_str(&out), "--report",
        path_str(&rep),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let chain = TransformChain::deserialize(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(chain.kind(), ChainKind::T);
    assert_eq!(report(&rep)["config"]["branch"], "general");
}

#[test]
fn flag_mismatch_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let input = write_file(&dir, "lap.mtx", &to_matrix_market(&DenseMatrix::identity(3)));
    let out = dir.path().join("c.json");
    let res = fastspec(&["factorize", "--general", "--input", path_str(&input), "--g", "512", "--out", path_str(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).starts_with("error[usage]:"), "{}", stderr(&res));
    assert!(!out.exists());

    let both = fastspec(&["factorize", "--sym", "--general", "--input", path_str(&input), "--g", "1", "--out", "x"]);
    assert_eq!(both.status.code(), Some(2));
    let no_spectrum =
        fastspec(&["factorize", "--sym", "--input", path_str(&input), "--g", "1", "--spectrum", "original", "--out", "x"]);
    assert_eq!(no_spectrum.status.code(), Some(2));
}

#[test]
fn two_by_two_is_exact() {
    let dir = TempDir::new().unwrap();
    let input = write_file(
        &dir,
        "s.mtx",
        "%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 2\n2 1 1\n2 2 2\n",
    );
    let out = dir.path().join("c.json");
    let res = fastspec(&["factorize", "--sym", "--input", path_str(&input), "--g", "1", "--out", path_str(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let rep = report(&dir.path().join("c.json.report.json"));
    assert!(rep["final_rel_error"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn input_problems_exit_3() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("c.json");
    let missing = dir.path().join("nope.mtx");
    let res = fastspec(&["factorize", "--sym", "--input", path_str(&missing), "--g", "1", "--out", path_str(&out)]);
    assert_eq!(res.status.code(), Some(3));
    assert!(stderr(&res).starts_with("error[io]:"));

    let bad = write_file(&dir, "bad.mtx", "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n");
    let res = fastspec(&["factorize", "--sym", "--input", path_str(&bad), "--g", "1", "--out", path_str(&out)]);
    assert_eq!(res.status.code(), Some(3));

    let asym = write_file(&dir, "a.mtx", "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 1.0\n");
    let res = fastspec(&["factorize", "--sym", "--input", path_str(&asym), "--g", "1", "--out", path_str(&out)]);
    assert_eq!(res.status.code(), Some(3));
    assert!(stderr(&res).starts_with("error[not_symmetric]:"));
}

#[test]
fn apply_identity_chain_returns_input() {
    let dir = TempDir::new().unwrap();
    let chain = write_file(&dir, "id.json", &TransformChain::empty(ChainKind::G, 4).serialize());
    let x = vec![1.5, -2.0, 0.25, 1e-3];
    let input = write_file(&dir, "x.txt", &format_vector(&x));
    let res = fastspec(&["apply", "--chain", path_str(&chain), "--input", path_str(&input)]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(parse_vector(&String::from_utf8(res.stdout).unwrap()).unwrap(), x);
}

fn run_apply(dir: &TempDir, chain: &Path, input: &Path, mode: &str) -> Vec<f64> {
    let out = dir.path().join(format!("y-{mode}.txt"));
    let res = fastspec(&["apply", "--chain", path_str(chain), "--input", path_str(input), "--mode", mode, "--out", path_str(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    parse_vector(&fs::read_to_string(out).unwrap()).unwrap()
}

#[test]
fn apply_matches_dense_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dir = TempDir::new().unwrap();
    let n = 12;
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let input = write_file(&dir, "x.txt", &format_vector(&x));
    for (name, chain) in [("g", random::g_chain(&mut rng, n, 40)), ("t", random::t_chain(&mut rng, n, 40))] {
        let path = write_file(&dir, &format!("{name}.json"), &chain.serialize());
        let dense = chain.to_dense();
        let inv = chain.to_dense_inverse().unwrap();
        assert!(max_diff(&run_apply(&dir, &path, &input, "forward"), &dense.matvec(&x).unwrap()) <= 1e-10);
        assert!(max_diff(&run_apply(&dir, &path, &input, "transpose"), &dense.transpose().matvec(&x).unwrap()) <= 1e-10);
        assert!(max_diff(&run_apply(&dir, &path, &input, "inverse"), &inv.matvec(&x).unwrap()) <= 1e-10);
        let it = run_apply(&dir, &path, &input, "inverse-transpose");
        assert!(max_diff(&it, &inv.transpose().matvec(&x).unwrap()) <= 1e-10);
        let recon = chain.reconstruct().unwrap();
        assert!(max_diff(&run_apply(&dir, &path, &input, "reconstruct"), &recon.matvec(&x).unwrap()) <= 1e-10);
    }
}

#[test]
fn inverse_of_g_chain_is_its_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dir = TempDir::new().unwrap();
    let chain = random::g_chain(&mut rng, 6, 10);
    let path = write_file(&dir, "g.json", &chain.serialize());
    let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let input = write_file(&dir, "x.txt", &format_vector(&x));
    let inv = run_apply(&dir, &path, &input, "inverse");
    assert_eq!(inv, run_apply(&dir, &path, &input, "transpose"));
    assert_eq!(inv, chain.apply(&x, ApplyMode::Transpose).unwrap());
}

#[test]
fn apply_dimension_mismatch_exits_3() {
    let dir = TempDir::new().unwrap();
    let chain = write_file(&dir, "id.json", &TransformChain::empty(ChainKind::T, 4).serialize());
    let input = write_file(&dir, "x.txt", "1\n2\n3\n");
    let res = fastspec(&["apply", "--chain", path_str(&chain), "--input", path_str(&input)]);
    assert_eq!(res.status.code(), Some(3));
    assert!(stderr(&res).starts_with("error[dimension_mismatch]:"), "{}", stderr(&res));
}

fn bench(dir: &TempDir, name: &str, extra: &[&str]) -> (Output, PathBuf) {
    let out = dir.path().join(format!("{name}.csv"));
    let mut args = vec!["bench", "--out", path_str(&out)];
    args.extend_from_slice(extra);
    let res = fastspec(&args);
    (res, out)
}

#[test]
fn bench_reports_flops_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let args = ["--method", "g", "--n", "64", "--alphas", "1", "--seeds", "2"];
    let (res, out) = bench(&dir, "a", &args);
    assert!(res.status.success(), "{}", stderr(&res));
    let body = fs::read_to_string(&out).unwrap();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header = reader.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        [
            "method", "n", "alpha", "seed", "budget", "rel_error_sq", "flops", "speedup_vs_dense",
            "wall_time_factorize", "wall_time_apply"
        ]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(&r[0], "g");
        assert_eq!(&r[4], "384");
        assert_eq!(&r[6], (6 * 384).to_string());
        assert_eq!(r[7].parse::<f64>().unwrap(), 2.0 * 64.0 * 64.0 / 2304.0);
        assert_eq!(&r[8], "");
    }
    let summary = fs::read_to_string(dir.path().join("a.summary.csv")).unwrap();
    assert!(summary.starts_with("method,n,alpha,budget,count,mean_rel_error_sq,std_rel_error_sq,"));
    assert_eq!(summary.lines().count(), 2);

    let (again, out2) = bench(&dir, "b", &args);
    assert!(again.status.success());
    assert_eq!(body, fs::read_to_string(out2).unwrap());
}

#[test]
fn bench_on_a_file_and_with_timing() {
    let dir = TempDir::new().unwrap();
    let lap = laplacian(&erdos_renyi(12, 0.4, 2, true).unwrap());
    let input = write_file(&dir, "d.mtx", &to_matrix_market(&lap));
    let (res, out) =
        bench(&dir, "f", &["--method", "t", "--graph", "file", "--file", path_str(&input), "--alphas", "0.5,1", "--timing"]);
    assert!(res.status.success(), "{}", stderr(&res));
    let body = fs::read_to_string(out).unwrap();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[8].parse::<f64>().is_ok() && r[9].parse::<f64>().is_ok()));
}

#[test]
fn bench_rejects_bad_combinations() {
    let dir = TempDir::new().unwrap();
    let (res, _) = bench(&dir, "x", &["--method", "g", "--n", "16", "--alphas", "1", "--directed"]);
    assert_eq!(res.status.code(), Some(2));
    let (res, _) = bench(&dir, "y", &["--method", "jacobi", "--n", "16", "--alphas", "-1"]);
    assert_eq!(res.status.code(), Some(2));
    let (res, _) = bench(&dir, "z", &["--method", "t", "--graph", "file", "--alphas", "1"]);
    assert_eq!(res.status.code(), Some(2));
    let (res, _) = bench(&dir, "w", &["--method", "warp", "--n", "16", "--alphas", "1"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).starts_with("error[usage]:"));
}

#[test]
fn thread_variable_is_validated() {
    let res = Command::new(env!("CARGO_BIN_EXE_fastspec"))
        .args(["apply", "--chain", "x", "--input", "y"])
        .env("FASTSPEC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("FASTSPEC_THREADS"));
}

#[test]
fn help_exits_cleanly() {
    let res = fastspec(&["--help"]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("factorize"));
}
