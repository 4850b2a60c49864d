//! Acceptance gate: one line per criterion, non-zero exit if any fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{
    dense_generalized_eigen, exhaustive_cmc, naive_covariances, random_distance_matrix, random_matrix, random_spd,
    random_tensor, rel_frobenius, MatrixXqda,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;
use txreid::eval::{run_on, Descriptor};
use txreid::{
    cmc, cross_covariances, distance_matrix, fit, solve_xqda, split_to_tensor, synth_dataset, Alignment,
    CovariancePair, CrossViewSamples, ExperimentConfig, Matrix, TargetDim, Tensor3, TxqdaConfig, View,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    check(took < limit, || format!("took {took:.2?}, limit {limit:?}"))
}

fn xqda_degeneracy() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for inst in 0..20 {
        let ids = rng.random_range(5..=50);
        let dim = rng.random_range(2..=30);
        let r = rng.random_range(1..=dim);
        let noise = rng.random_range(0.1..1.5);
        let (a, b) = synth_dataset(ids, dim, noise, inst).map_err(|e| e.to_string())?;
        let x = split_to_tensor(&a, View::A, dim).map_err(|e| e.to_string())?;
        let y = split_to_tensor(&b, View::B, dim).map_err(|e| e.to_string())?;
        let cfg = TxqdaConfig {
            target_dims: [TargetDim::Explicit(1), TargetDim::Explicit(r)],
            ..TxqdaConfig::default()
        };
        let model = fit(&x, &y, &cfg).map_err(|e| format!("instance {inst}: {e}"))?;
        let ours = distance_matrix(&x, &y, &model).map_err(|e| e.to_string())?;
        let (xa, xb) = (x.tensor.slice_vectors(), y.tensor.slice_vectors());
        let oracle = MatrixXqda::fit(&xa, &x.labels, &xb, &y.labels, r, cfg.lambda).distances(&xa, &xb);
        let err = rel_frobenius(&ours.values, &oracle);
        worst = worst.max(err);
        check(err <= 1e-8, || format!("instance {inst} (ids {ids}, dim {dim}, r {r}): rel err {err:.3e}"))?;
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!("20 instances, worst rel err {worst:.2e}, {:.2?}", start.elapsed()))
}

fn covariance_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    let mut verified = 0;
    for case in 0..60 {
        let d = rng.random_range(1..=15);
        let positions = rng.random_range(1..=3);
        let ids = rng.random_range(2..=10u32);
        let view = |rng: &mut ChaCha8Rng| {
            let (mut labels, mut pos) = (Vec::new(), Vec::new());
            while labels.len() + positions <= 50 && (labels.is_empty() || rng.random_bool(0.85)) {
                let id = rng.random_range(0..ids);
                for p in 0..positions {
                    labels.push(id);
                    pos.push(p);
                }
            }
            (random_matrix(rng, d, labels.len()), labels, pos)
        };
        let (xa, la, pa) = view(&mut rng);
        let (xb, lb, pb) = view(&mut rng);
        let s = CrossViewSamples::new(xa, la, pa, xb, lb, pb).map_err(|e| e.to_string())?;
        for alignment in [Alignment::Aligned, Alignment::All] {
            let (si, se, ni, ne) = naive_covariances(&s, alignment);
            let fast = match cross_covariances(&s, alignment) {
                Ok(c) => c,
                // no intra or no extra pairs: the oracle's mean is undefined too
                Err(_) if ni == 0 || ne == 0 => continue,
                Err(e) => return Err(format!("case {case}: {e}")),
            };
            check((fast.n_intra, fast.n_extra) == (ni, ne), || format!("case {case}: pair counts differ"))?;
            let err = rel_frobenius(&fast.sigma_i, &si).max(rel_frobenius(&fast.sigma_e, &se));
            worst = worst.max(err);
            check(err <= 1e-10, || format!("case {case} ({alignment:?}): rel err {err:.3e}"))?;
            verified += 1;
        }
    }
    check(verified >= 50, || format!("only {verified} cases had both pair kinds"))?;
    Ok(format!("{verified} verified cases, worst rel err {worst:.2e}"))
}

fn eigen_residuals() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst: f64 = 0.0;
    for pair in 0..100 {
        let d = rng.random_range(1..=40);
        let cov = CovariancePair {
            sigma_i: random_spd(&mut rng, d),
            sigma_e: random_spd(&mut rng, d),
            n_intra: 1,
            n_extra: 1,
        };
        let sol = solve_xqda(&cov, TargetDim::Explicit(d), 0.0).map_err(|e| format!("pair {pair}: {e}"))?;
        let (oracle, _) = dense_generalized_eigen(&cov.sigma_e, &cov.sigma_i);
        for (k, &lam) in sol.eigvals.iter().enumerate() {
            let w = sol.w.column(k);
            let res = (&cov.sigma_e * w - &cov.sigma_i * w * lam).norm() / w.norm();
            worst = worst.max(res);
            check(res < 1e-8, || format!("pair {pair}, eigenpair {k}: residual {res:.3e}"))?;
            check((lam - oracle[k]).abs() <= 1e-8 * oracle[k].abs().max(1.0), || {
                format!("pair {pair}: eigenvalue {lam} vs oracle {}", oracle[k])
            })?;
        }
    }
    Ok(format!("100 SPD pairs, worst residual {worst:.2e}"))
}

fn tensor_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst: f64 = 0.0;
    let count = 1200;
    for case in 0..count {
        let dims = [rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=8)];
        let t = random_tensor(&mut rng, dims);
        for mode in 1..=3 {
            let m = t.unfold(mode).map_err(|e| e.to_string())?;
            let back = Tensor3::refold(&m, mode, dims).map_err(|e| e.to_string())?;
            check(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()), || {
                format!("case {case}: mode-{mode} roundtrip not bit-exact")
            })?;
        }
        let mats: Vec<Matrix> = dims
            .iter()
            .map(|&n| {
                let rows = rng.random_range(1..=8);
                random_matrix(&mut rng, rows, n)
            })
            .collect();
        for (p, q) in [(1, 2), (1, 3), (2, 3)] {
            let run = |a: usize, b: usize| -> Result<Matrix, String> {
                let r = t.mode_product(&mats[a - 1], a).and_then(|r| r.mode_product(&mats[b - 1], b));
                r.and_then(|r| r.unfold(1)).map_err(|e| e.to_string())
            };
            let err = rel_frobenius(&run(p, q)?, &run(q, p)?);
            worst = worst.max(err);
            check(err <= 1e-12, || format!("case {case}: modes {p},{q} disagree by {err:.3e}"))?;
        }
    }
    Ok(format!("{count} tensors up to (8,8,8), worst cross-order rel err {worst:.2e}"))
}

fn cmc_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for case in 0..200 {
        let d = random_distance_matrix(&mut rng, 20);
        let g = d.gallery_labels.len();
        let rates = cmc(&d, g).map_err(|e| e.to_string())?.rates;
        check(rates == exhaustive_cmc(&d, g), || format!("case {case}: differs from enumeration"))?;
        check(rates.windows(2).all(|p| p[0] <= p[1]), || format!("case {case}: decreasing curve"))?;
        check(rates[g - 1] == 1.0, || format!("case {case}: terminal rate {}", rates[g - 1]))?;
    }
    Ok("200 matrices up to 20x20, exact".into())
}

fn synth_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        "part_len = 8\ndims = [4, 8]\nfolds = 10\n[[descriptor]]\nname = \"synth\"\nview_a = \"-\"\nview_b = \"-\"\n",
        Path::new("."),
    )
    .expect("static config")
}

/// Mean rank-1 over every (Dim, fold) cell; any failed cell is an error.
fn synth_rank1(noise: f64, seed: u64) -> Result<Vec<f64>, String> {
    let (a, b) = synth_dataset(50, 40, noise, seed).map_err(|e| e.to_string())?;
    let descriptors = vec![Descriptor {
        name: "synth".into(),
        features: a.merged(&b).map_err(|e| e.to_string())?,
    }];
    let report = run_on(&synth_config(), &descriptors, 1).map_err(|e| e.to_string())?;
    if let Some(bad) = report.cells.iter().find_map(|c| c.error.clone()) {
        return Err(bad);
    }
    Ok(report.sweep.iter().map(|s| s.mean_cmc.as_ref().map_or(0.0, |c| c[0])).collect())
}

fn synthetic_end_to_end() -> Outcome {
    let start = Instant::now();
    let clean = synth_rank1(0.0, 0)?;
    check(clean.iter().all(|&r| r == 1.0), || format!("noise 0 rank-1 per Dim {clean:?}"))?;
    let noisy = synth_rank1(2.0, 0)?;
    check(noisy.iter().all(|&r| r < 1.0), || format!("noise 2.0 rank-1 per Dim {noisy:?}"))?;
    let mut means = Vec::new();
    for noise in [0.0, 0.5, 2.0] {
        let mut total = 0.0;
        for seed in 0..5 {
            let per_dim = synth_rank1(noise, seed)?;
            total += per_dim.iter().sum::<f64>() / per_dim.len() as f64;
        }
        means.push(total / 5.0);
    }
    check(means.windows(2).all(|p| p[0] >= p[1]), || format!("5-seed means {means:?} increase"))?;
    within(Duration::from_secs(60), start)?;
    Ok(format!(
        "noise 0 rank-1 {clean:?}, noise 2 rank-1 {noisy:.3?}, 5-seed means {means:.3?}, {:.2?}",
        start.elapsed()
    ))
}

fn txreid(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_txreid"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("txreid {}: {}", args[0], String::from_utf8_lossy(&out.stderr).trim())
    })
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn write_config(dir: &TempDir, body: &str) -> Result<String, String> {
    let cfg = path(dir, "exp.toml");
    let text = format!("{body}\n[[descriptor]]\nname = \"user\"\nview_a = \"a.csv\"\nview_b = \"b.csv\"\n");
    std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn determinism() -> Outcome {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    txreid(&["synth", "--ids", "40", "--dim", "32", "--noise", "0.8", "--seed", "5", "--out-a", &a, "--out-b", &b])?;
    let cfg = write_config(&dir, "part_len = 8\ndims = [4, 8]\nfolds = 4\nseed = 9")?;
    let (r1, r2) = (path(&dir, "r1.json"), path(&dir, "r2.json"));
    for out in [&r1, &r2] {
        txreid(&["eval", "--config", &cfg, "--out", out, "--threads", "1", "--no-timestamp"])?;
    }
    let (x, y) = (std::fs::read(&r1).map_err(|e| e.to_string())?, std::fs::read(&r2).map_err(|e| e.to_string())?);
    check(x == y, || "reports differ".into())?;
    Ok(format!("two runs, {} identical bytes", x.len()))
}

fn reference_plumbing() -> Outcome {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    txreid(&["synth", "--ids", "200", "--dim", "500", "--noise", "0.7", "--seed", "11", "--out-a", &a, "--out-b", &b])?;
    let cfg = write_config(&dir, "part_len = 250\nmode1_dim = 1\nranks = [1, 5, 10, 20]")?;
    let out = path(&dir, "report.json");
    txreid(&["eval", "--config", &cfg, "--out", &out, "--threads", "1", "--no-timestamp"])?;
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&out).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let sweep = report["sweep"].as_array().ok_or("report has no sweep")?;
    let dims: Vec<u64> = sweep.iter().filter_map(|s| s["dim"].as_u64()).collect();
    check(dims == [50, 100, 150, 200, 250], || format!("swept dims {dims:?}"))?;
    let mut rows = Vec::new();
    for s in sweep {
        let ranks: Vec<u64> = s["rank_rates"].as_array().into_iter().flatten().filter_map(|r| r["rank"].as_u64()).collect();
        check(ranks == [1, 5, 10, 20], || format!("Dim {}: rank rows {ranks:?}", s["dim"]))?;
        check(s["folds_ok"] == 10, || format!("Dim {}: failed folds {}", s["dim"], s["folds_failed"]))?;
        rows.push(format!("{}:{:.3}", s["dim"], s["rank_rates"][0]["rate"].as_f64().unwrap_or(f64::NAN)));
    }
    Ok(format!("Dim sweep complete, rank-1 {}", rows.join(" ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("xqda-degeneracy oracle", xqda_degeneracy),
        ("covariance oracle", covariance_oracle),
        ("eigen residuals", eigen_residuals),
        ("tensor algebra", tensor_algebra),
        ("cmc correctness", cmc_correctness),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("determinism", determinism),
        ("reference-target plumbing", reference_plumbing),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
