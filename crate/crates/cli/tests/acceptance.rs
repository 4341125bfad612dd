//! Criterion 10 of the acceptance gate: the file artifacts of `gen-data`,
//! `train` (single-threaded), and `calibrate` with the surrogate pricer are
//! byte-reproducible under fixed seeds, independent of the worker thread
//! count. Criteria 1-9 live in the core crate's acceptance test.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

fn deepcal(dir: &Path, args: &[&str], env_threads: Option<&str>) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_deepcal"));
    cmd.current_dir(dir).args(args).env_remove("DEEPCAL_THREADS");
    if let Some(threads) = env_threads {
        cmd.env("DEEPCAL_THREADS", threads);
    }
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "deepcal {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
}

fn bytes(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn criterion_10_artifact_determinism() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut failures: Vec<String> = Vec::new();

    // gen-data: rerun identity, thread-count independence, and the
    // DEEPCAL_THREADS mirror. 3,000 paths spans several scheduling chunks.
    let gen = |out: &str, extra: &[&str], env_threads: Option<&str>| {
        let mut args = vec![
            "gen-data", "--model", "duan", "--kind", "call", "--n", "40", "--paths", "3000",
            "--seed", "7", "--out", out,
        ];
        args.extend_from_slice(extra);
        deepcal(dir, &args, env_threads);
    };
    gen("a.csv", &["--threads", "1"], None);
    gen("a2.csv", &["--threads", "1"], None);
    gen("b.csv", &["--threads", "2"], None);
    gen("c.csv", &[], Some("2"));
    let a = bytes(dir, "a.csv");
    if a != bytes(dir, "a2.csv") {
        failures.push("gen-data differs between identical reruns".into());
    }
    if a != bytes(dir, "b.csv") {
        failures.push("gen-data differs between --threads 1 and --threads 2".into());
    }
    if a != bytes(dir, "c.csv") {
        failures.push("gen-data differs between --threads 2 and DEEPCAL_THREADS=2".into());
    }
    if !dir.join("a.csv.manifest.json").exists() {
        failures.push("gen-data wrote no manifest".into());
    }

    // train, single-threaded: two runs from the same data and seed.
    let train = |net: &str, trace: &str| {
        deepcal(
            dir,
            &[
                "train", "--data", "a.csv", "--out", net, "--trace", trace, "--hidden", "8",
                "--max-epochs", "12", "--seed", "3", "--threads", "1",
            ],
            None,
        );
    };
    train("n1.txt", "t1.csv");
    train("n2.txt", "t2.csv");
    if bytes(dir, "n1.txt") != bytes(dir, "n2.txt") {
        failures.push("train produced different networks on identical runs".into());
    }
    if bytes(dir, "t1.csv") != bytes(dir, "t2.csv") {
        failures.push("train produced different MSE traces on identical runs".into());
    }

    // calibrate with the surrogate pricer: thread-count independence.
    std::fs::write(
        dir.join("chain.csv"),
        "date,spot,rate,strike,maturity_days,kind,bid,ask\n\
         2021-06-09,100.0,0.01,80,100,put,0.55,0.65\n\
         2021-06-09,100.0,0.01,90,100,put,1.55,1.65\n\
         2021-06-09,100.0,0.01,96,100,put,2.70,2.80\n\
         2021-06-09,100.0,0.01,105,100,call,2.90,3.00\n\
         2021-06-09,100.0,0.01,112,100,call,1.30,1.40\n\
         2021-06-09,100.0,0.01,120,100,call,0.45,0.55\n",
    )
    .unwrap();
    let calibrate = |out: &str, threads: &str| {
        deepcal(
            dir,
            &[
                "calibrate", "--chain", "chain.csv", "--model", "duan", "--pricer", "ann",
                "--call-net", "n1.txt", "--put-net", "n1.txt", "--starts", "3", "--max-iters",
                "15", "--out", out, "--threads", threads,
            ],
            None,
        );
    };
    calibrate("f1.csv", "1");
    calibrate("f2.csv", "2");
    if bytes(dir, "f1.csv") != bytes(dir, "f2.csv") {
        failures.push("calibrate differs between --threads 1 and --threads 2".into());
    }

    let elapsed = start.elapsed().as_secs_f64();
    if failures.is_empty() {
        println!(
            "criterion 10 (artifact determinism): PASS - gen-data x4, train x2, \
             calibrate x2 byte-identical, {elapsed:.1}s"
        );
    } else {
        panic!(
            "criterion 10 (artifact determinism): FAIL - {}",
            failures.join("; ")
        );
    }
}
