#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn dca() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dca"));
    cmd.env_remove("DCA_THREADS").env("RUST_LOG", "warn");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    dca().args(args).output().expect("binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path to contents of every file under `root`.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/");
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Runs the checked-in pipeline fixture into `out`.
pub fn run_golden_pipeline(out: &Path, threads: &str) -> Output {
    run(&[
        "--config",
        path_str(&fixture("pipeline.toml")),
        "--threads",
        threads,
        "pipeline",
        "-i",
        path_str(&fixture("pipeline.tsv")),
        "--gmt",
        path_str(&fixture("pipeline.gmt")),
        "-o",
        path_str(out),
    ])
}

/// Files that differ from the golden tree, plus missing and unexpected ones.
pub fn golden_mismatches(out: &Path) -> Vec<String> {
    let want = read_tree(&fixture("golden/pipeline"));
    let mut got = read_tree(out);
    got.remove("manifest.json");
    let mut bad = Vec::new();
    for (name, bytes) in &want {
        match got.get(name) {
            None => bad.push(format!("missing {name}")),
            Some(b) if b != bytes => bad.push(format!("differs {name}")),
            _ => {}
        }
    }
    bad.extend(
        got.keys()
            .filter(|k| !want.contains_key(*k))
            .map(|k| format!("unexpected {k}")),
    );
    bad
}

/// Exact `P(X >= k)` for `X ~ Binomial(m, a / b)` by rational summation.
pub fn exact_upper_tail(k: u64, m: u64, a: u64, b: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > m {
        return 0.0;
    }
    let a_big = BigUint::from(a);
    let c_big = BigUint::from(b - a);
    let mut binom = BigUint::one();
    let mut a_pow = a_big.pow(m as u32);
    let mut c_pow = BigUint::one();
    let mut sum = BigUint::zero();
    let mut j = m;
    loop {
        sum += &binom * &a_pow * &c_pow;
        if j == k {
            break;
        }
        binom = binom * BigUint::from(j) / BigUint::from(m - j + 1);
        a_pow /= &a_big;
        c_pow *= &c_big;
        j -= 1;
    }
    let den = BigUint::from(b).pow(m as u32);
    if sum.is_zero() {
        return 0.0;
    }
    let shift = den.bits() as i64 - sum.bits() as i64 + 80;
    let q = if shift >= 0 {
        (sum << shift as u64) / &den
    } else {
        sum / (den << (-shift) as u64)
    };
    q.to_f64().unwrap() * 2f64.powi(-(shift as i32))
}
