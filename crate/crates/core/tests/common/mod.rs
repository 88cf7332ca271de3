#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use sepnmf::linalg::{inverse, orthonormalize, DenseMatrix};
use sepnmf::rng::Stream;
use sepnmf::spa::tie_argmax;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sepnmf")
}

pub fn sepnmf(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn sepnmf")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `U diag(s) Vᵀ` with k leading singular values in [1, 1.5] and a tail below
/// 0.1, so `YᵀY` stays well conditioned in the projector oracle.
pub fn conditioned(d: usize, m: usize, k: usize, seed: u64) -> DenseMatrix {
    let mut s = Stream::new(seed);
    let u = orthonormalize(&s.gaussian_matrix(d, d)).unwrap();
    let v = orthonormalize(&s.gaussian_matrix(m, d)).unwrap();
    let sv: Vec<f64> = (0..d)
        .map(|i| if i < k { 1.0 + 0.5 * s.uniform() } else { 0.1 * s.uniform() })
        .collect();
    u.scale_cols(&sv).matmul_t(&v).unwrap()
}

/// SPA with an explicit d×d projector rebuilt every round.
pub fn naive_spa(a: &DenseMatrix, k: usize) -> Vec<usize> {
    let d = a.rows();
    let mut proj = DenseMatrix::identity(d);
    let mut out = Vec::new();
    for _ in 0..k {
        let r = proj.matmul(a).unwrap();
        let norms: Vec<f64> = (0..a.cols()).map(|j| r.col(j).iter().map(|x| x * x).sum()).collect();
        let j = tie_argmax(&norms);
        out.push(j);
        let t = r.col(j).to_vec();
        let tt: f64 = t.iter().map(|x| x * x).sum();
        let step = DenseMatrix::from_fn(d, d, |i, l| f64::from(u8::from(i == l)) - t[i] * t[l] / tt);
        proj = step.matmul(&proj).unwrap();
    }
    out
}

/// Simplex-constrained least squares by enumerating every support and
/// solving its equality KKT system.
pub fn exhaustive_abundance(f: &DenseMatrix, a: &[f64]) -> Vec<f64> {
    let k = f.cols();
    let g = f.t_matmul(f).unwrap();
    let b = f.t_matvec(a);
    let objective = |w: &[f64]| {
        let fw = f.matvec(w);
        fw.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
    };
    let mut best = (f64::INFINITY, vec![0.0; k]);
    for mask in 1u32..(1 << k) {
        let sup: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        let s = sup.len();
        let sys = DenseMatrix::from_fn(s + 1, s + 1, |i, j| match (i < s, j < s) {
            (true, true) => g[(sup[i], sup[j])],
            (true, false) | (false, true) => 1.0,
            _ => 0.0,
        });
        let Ok(inv) = inverse(&sys) else { continue };
        let mut rhs: Vec<f64> = sup.iter().map(|&i| b[i]).collect();
        rhs.push(1.0);
        let sol = inv.matvec(&rhs);
        if sol[..s].iter().any(|&x| x < -1e-14) {
            continue;
        }
        let mut w = vec![0.0; k];
        for (c, &i) in sup.iter().enumerate() {
            w[i] = sol[c].max(0.0);
        }
        let obj = objective(&w);
        if obj < best.0 {
            best = (obj, w);
        }
    }
    best.1
}

fn is_timing_key(k: &str) -> bool {
    k == "timing" || k.contains("seconds")
}

/// Drops timing fields from a JSON value, including `seconds` columns of
/// suite tables.
pub fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !is_timing_key(k));
            let cols: Vec<usize> = map
                .get("header")
                .and_then(Value::as_array)
                .map(|h| {
                    h.iter()
                        .enumerate()
                        .filter(|(_, c)| c.as_str().is_some_and(is_timing_key))
                        .map(|(i, _)| i)
                        .collect()
                })
                .unwrap_or_default();
            for key in ["header", "rows"] {
                let Some(Value::Array(items)) = map.get_mut(key) else { continue };
                let drop_from = |row: &mut Vec<Value>| {
                    for &c in cols.iter().rev() {
                        if c < row.len() {
                            row.remove(c);
                        }
                    }
                };
                if key == "header" {
                    drop_from(items);
                } else {
                    for row in items.iter_mut() {
                        if let Value::Array(r) = row {
                            drop_from(r);
                        }
                    }
                }
            }
            for (_, x) in map.iter_mut() {
                strip_timing(x);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// CSV text without columns whose header mentions seconds.
pub fn strip_csv_timing(text: &str) -> String {
    let mut lines = text.lines();
    let Some(header) = lines.next() else { return String::new() };
    let cols: Vec<&str> = header.split(',').collect();
    let keep: Vec<usize> = (0..cols.len()).filter(|&i| !is_timing_key(cols[i])).collect();
    let pick = |l: &str| {
        let cells: Vec<&str> = l.split(',').collect();
        keep.iter().map(|&i| cells.get(i).copied().unwrap_or("")).collect::<Vec<_>>().join(",")
    };
    std::iter::once(header).chain(lines).map(pick).collect::<Vec<_>>().join("\n")
}

/// File contents with timing removed, ready for comparison.
pub fn normalized(path: &Path) -> Vec<u8> {
    let bytes = fs::read(path).unwrap();
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let mut v: Value = serde_json::from_slice(&bytes).unwrap();
            strip_timing(&mut v);
            serde_json::to_vec(&v).unwrap()
        }
        Some("csv") => strip_csv_timing(std::str::from_utf8(&bytes).unwrap()).into_bytes(),
        _ => bytes,
    }
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Every subcommand, run into `root`. Returns each command's stdout, minus
/// runs whose stdout carries timings.
pub fn run_all_commands(root: &Path) -> Result<Vec<Vec<u8>>, String> {
    let r = |name: &str| root.join(name);
    let inst = r("inst");
    let cube = r("cube");
    let a_mtx = inst.join("A.mtx");
    let cube_bin = cube.join("A.bin");
    let meta = inst.join("meta.json");
    let mut cmds: Vec<(Vec<String>, bool)> = Vec::new();
    let mut add = |args: &[&str], stdout_stable: bool| {
        cmds.push((args.iter().map(|s| s.to_string()).collect(), stdout_stable))
    };
    add(&["synth", "-d", "20", "-m", "200", "-k", "4", "--delta", "1.5", "--seed", "7", "-o", p(&inst)], true);
    add(
        &["synth", "-d", "12", "-m", "48", "-k", "3", "--delta", "0.05", "--seed", "9", "--format", "bin", "--height", "6", "--width", "8", "-o", p(&cube)],
        true,
    );
    for method in ["spa", "rand", "svd"] {
        let report = r(&format!("approx_{method}.json"));
        let mut args = vec!["approx", p(&a_mtx), "-k", "4", "--method", method, "--seed", "3", "--report", p(&report)];
        if method == "spa" {
            args.push("--bounds");
        }
        add(&args, true);
    }
    for method in ["spa", "pspa", "mpspa", "erspa", "merspa", "prewhiten", "spaspa"] {
        let report = r(&format!("select_{method}.json"));
        add(&["select", p(&a_mtx), "-k", "4", "--method", method, "--truth", p(&meta), "--report", p(&report)], true);
    }
    let batch = r("batch.csv");
    let batch_json = r("batch.json");
    add(
        &["select", "--instances", "2", "-d", "12", "-m", "60", "-k", "3", "--delta-scales", "0,1", "--qs", "1,5", "--seed", "5", "--jobs", "2", "-o", p(&batch), "--report", p(&batch_json)],
        true,
    );
    let um = r("unmix");
    add(&["unmix", p(&cube_bin), "-k", "3", "--method", "mpspa", "-q", "4", "--library", p(&cube_bin), "--expect-match", "pspa", "--format", "csv", "-o", p(&um)], true);
    for (suite, stable) in [("fig1", true), ("fig2", true), ("tab2", false)] {
        let out = r(&format!("bench_{suite}"));
        add(&["bench", suite, "--scale", "tiny", "--instances", "2", "--seed", "11", "--jobs", "2", "-o", p(&out)], stable);
    }
    let mut stdouts = Vec::new();
    for (args, stable) in cmds {
        let out = Command::new(bin()).args(&args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
        }
        if stable {
            stdouts.push(out.stdout);
        }
    }
    Ok(stdouts)
}

/// Runs every subcommand twice with the same flags and compares all outputs
/// with timing removed. Returns the number of files compared.
pub fn cli_determinism() -> Result<usize, String> {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out_a = run_all_commands(a.path())?;
    let out_b = run_all_commands(b.path())?;
    // stdout mentions output paths, which differ between the two roots
    let scrub = |o: &[u8], root: &Path| String::from_utf8_lossy(o).replace(p(root), "<root>");
    for (i, (x, y)) in out_a.iter().zip(&out_b).enumerate() {
        if scrub(x, a.path()) != scrub(y, b.path()) {
            return Err(format!("stdout of command {i} differs"));
        }
    }
    let files = files_under(a.path());
    if files != files_under(b.path()) {
        return Err("different file sets".into());
    }
    for f in &files {
        let is_timed_text = f.ends_with("bench_tab2/summary.txt");
        if is_timed_text {
            continue;
        }
        if normalized(&a.path().join(f)) != normalized(&b.path().join(f)) {
            return Err(format!("{} differs", f.display()));
        }
    }
    Ok(files.len())
}
