//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use phyauth::channel::{read_trace, write_trace, TraceFormat};
use phyauth::eval::{
    build_stream, m_sweep, operating_point, run_experiment, sweep_roc_on, write_roc_csv, DetectorKind,
    ExperimentConfig, RocCurve, Stream,
};
use phyauth::gmm::{e_step, fit, m_step, FitInfo, FitOptions, GaussianComponent, GmmModel, InitStrategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn desk(blocks: usize) -> ExperimentConfig {
    ExperimentConfig {
        num_test_blocks: blocks,
        ..Default::default()
    }
}

// Six points, two components, one EM iteration against a hand-written
// evaluation of the E and M steps.
fn em_oracle() -> Outcome {
    let xs = [-2.1, -1.7, -0.4, 0.6, 1.9, 2.8];
    let (w, mu, var) = ([0.3, 0.7], [-1.0, 1.5], [0.8, 1.6]);
    let ridge = 1e-6;

    let pdf = |x: f64, m: f64, v: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
    let mut r = [[0.0; 2]; 6];
    for (i, &x) in xs.iter().enumerate() {
        let a = w[0] * pdf(x, mu[0], var[0]);
        let b = w[1] * pdf(x, mu[1], var[1]);
        r[i] = [a / (a + b), b / (a + b)];
    }
    let mut expect = Vec::new();
    for k in 0..2 {
        let nk: f64 = r.iter().map(|ri| ri[k]).sum();
        let m = r.iter().zip(&xs).map(|(ri, x)| ri[k] * x).sum::<f64>() / nk;
        let raw = r.iter().zip(&xs).map(|(ri, x)| ri[k] * (x - m) * (x - m)).sum::<f64>() / nk;
        let v = raw + (ridge * raw).max(1e-10);
        expect.push((nk / 6.0, m, v));
    }

    let comp = |k: usize| GaussianComponent {
        weight: w[k],
        mean: DVector::from_element(1, mu[k]),
        covariance: DMatrix::from_element(1, 1, var[k]),
    };
    let model = GmmModel::new(vec![comp(0), comp(1)], FitInfo::default()).unwrap();
    let data = DMatrix::from_column_slice(6, 1, &xs);
    let (resp, _) = e_step(&model, &data).unwrap();
    let step = m_step(&data, &resp, ridge).unwrap();

    let mut worst: f64 = 0.0;
    for (i, ri) in r.iter().enumerate() {
        for (k, rik) in ri.iter().enumerate() {
            worst = worst.max((resp.matrix()[(i, k)] - rik).abs());
        }
    }
    for (c, (ew, em, ev)) in step.components.iter().zip(&expect) {
        worst = worst.max((c.weight - ew).abs());
        worst = worst.max((c.mean[0] - em).abs());
        worst = worst.max((c.covariance[(0, 0)] - ev).abs());
    }
    outcome(worst <= 1e-12, format!("max abs deviation {worst:.2e}"))
}

fn random_dataset(seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(1..=8);
    let n = rng.random_range(20..=200);
    let clusters = rng.random_range(1..=3);
    let centres: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..m).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    let scales: Vec<f64> = (0..clusters).map(|_| rng.random_range(0.2..2.0)).collect();
    let mut data = DMatrix::zeros(n, m);
    for i in 0..n {
        let c = rng.random_range(0..clusters);
        for j in 0..m {
            let z: f64 = rng.sample(StandardNormal);
            data[(i, j)] = centres[c][j] + scales[c] * z;
        }
    }
    data
}

fn em_invariants() -> Outcome {
    let datasets = 500;
    let mut failures = Vec::new();
    for seed in 0..datasets {
        let data = random_dataset(seed);
        let opts = FitOptions {
            init: InitStrategy::RandomPoints { seed },
            n_init: 1,
            ..Default::default()
        };
        let model = match fit(&data, &opts, None) {
            Ok(m) => m,
            Err(e) => {
                failures.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let trace = &model.fit_info.log_likelihood_trace;
        if trace.windows(2).any(|w| w[1] < w[0] - 1e-8) {
            failures.push(format!("seed {seed}: log-likelihood decreased"));
        }
        let (resp, _) = e_step(&model, &data).unwrap();
        for row in resp.matrix().row_iter() {
            if (row.sum() - 1.0).abs() > 1e-12 {
                failures.push(format!("seed {seed}: responsibility row sums to {}", row.sum()));
                break;
            }
        }
        let wsum: f64 = model.weights().iter().sum();
        if (wsum - 1.0).abs() > 1e-12 {
            failures.push(format!("seed {seed}: weights sum to {wsum}"));
        }
        for c in model.components() {
            if c.covariance != c.covariance.transpose() || c.covariance.clone().cholesky().is_none() {
                failures.push(format!("seed {seed}: covariance not symmetric positive definite"));
            }
        }
    }
    let detail = match failures.first() {
        None => format!("{datasets} datasets"),
        Some(f) => format!("{} failures, first: {f}", failures.len()),
    };
    outcome(failures.is_empty(), detail)
}

fn separated_recovery() -> Outcome {
    let cfg = ExperimentConfig {
        snr_db: 30.0,
        m_subcarriers: 48,
        block_size: 1000,
        num_test_blocks: 10,
        ..Default::default()
    };
    let c = run_experiment(&cfg, DetectorKind::Gmm, 0.5).unwrap();
    outcome(
        c.p_d() >= 0.99 && c.p_fa() <= 0.01,
        format!("p_d {:.4}, p_fa {:.4}", c.p_d(), c.p_fa()),
    )
}

fn roc_valid(curve: &RocCurve, stream: &Stream) -> Result<(), String> {
    let eve = stream.eve_count() as u64;
    let bob = stream.test.len() as u64 - eve;
    let first = curve.points.first().ok_or("empty curve")?;
    let last = curve.points.last().unwrap();
    if (first.p_fa, first.p_d) != (0.0, 0.0) || (last.p_fa, last.p_d) != (1.0, 1.0) {
        return Err("missing an endpoint".into());
    }
    if curve.points.windows(2).any(|w| w[0].p_fa > w[1].p_fa) {
        return Err("not sorted by p_fa".into());
    }
    for p in &curve.points {
        if !(0.0..=1.0).contains(&p.p_fa) || !(0.0..=1.0).contains(&p.p_d) {
            return Err(format!("rate outside [0, 1] at threshold {}", p.threshold));
        }
        if p.counts.eve_total() != eve || p.counts.bob_total() != bob {
            return Err(format!(
                "counts do not match stream totals at threshold {}",
                p.threshold
            ));
        }
    }
    if !(0.0..=1.0).contains(&curve.auc) {
        return Err("auc outside [0, 1]".into());
    }
    Ok(())
}

struct Curves {
    checked: usize,
    errors: Vec<String>,
}

impl Curves {
    fn check(&mut self, label: &str, curve: &RocCurve, stream: &Stream) {
        self.checked += 1;
        if let Err(e) = roc_valid(curve, stream) {
            self.errors.push(format!("{label}: {e}"));
        }
    }
}

fn gmm_vs_mse(curves: &mut Curves) -> Outcome {
    let cfg = desk(10);
    let stream = build_stream(&cfg).unwrap();
    let gmm = sweep_roc_on(&stream, &cfg, DetectorKind::Gmm).unwrap();
    let mse = sweep_roc_on(&stream, &cfg, DetectorKind::Mse).unwrap();
    curves.check("gmm", &gmm, &stream);
    curves.check("mse", &mse, &stream);
    let g = operating_point(&gmm, 0.0583).unwrap();
    let m = operating_point(&mse, 0.0583).unwrap();
    outcome(
        gmm.auc >= mse.auc && g.p_d >= m.p_d,
        format!(
            "auc gmm {:.6} mse {:.6}; p_d gmm {:.4} (p_fa {:.4}) mse {:.4} (p_fa {:.4})",
            gmm.auc, mse.auc, g.p_d, g.p_fa, m.p_d, m.p_fa
        ),
    )
}

fn m_monotonicity(curves: &mut Curves) -> Outcome {
    let cfg = desk(10);
    let full = build_stream(&ExperimentConfig {
        m_subcarriers: cfg.profile.active_carriers,
        ..cfg.clone()
    })
    .unwrap();
    let sweep = m_sweep(&cfg, DetectorKind::Gmm).unwrap();
    let mut p_d = Vec::new();
    for (m, curve) in &sweep {
        curves.check(&format!("gmm M={m}"), curve, &full);
        p_d.push(operating_point(curve, 0.01).unwrap().p_d);
    }
    let monotone = p_d.windows(2).all(|w| w[0] <= w[1]);
    let gap = p_d.last().unwrap() - p_d.first().unwrap();
    let listing: Vec<String> = sweep
        .iter()
        .zip(&p_d)
        .map(|((m, _), p)| format!("M={m}: {p:.4}"))
        .collect();
    outcome(
        monotone && gap >= 0.0,
        format!("p_d at 1%: {}; gap {gap:.4}", listing.join(", ")),
    )
}

fn null_test(curves: &mut Curves) -> Outcome {
    let mut cfg = desk(10);
    cfg.seeds.eve_link = cfg.seeds.bob_link;
    let stream = build_stream(&cfg).unwrap();
    let mut aucs = Vec::new();
    for kind in [DetectorKind::Gmm, DetectorKind::Mse] {
        let curve = sweep_roc_on(&stream, &cfg, kind).unwrap();
        curves.check(&format!("null {kind}"), &curve, &stream);
        aucs.push(curve.auc);
    }
    outcome(
        aucs.iter().all(|a| (0.45..=0.55).contains(a)),
        format!("auc gmm {:.4} mse {:.4}", aucs[0], aucs[1]),
    )
}

fn simulate_and_evaluate(cfg: &ExperimentConfig) -> Vec<Vec<u8>> {
    let mut trace = Vec::new();
    write_trace(&mut trace, &build_stream(cfg).unwrap().to_records(), TraceFormat::Csv).unwrap();
    let stream = Stream::from_records(read_trace(trace.as_slice(), TraceFormat::Csv).unwrap());
    [DetectorKind::Gmm, DetectorKind::Mse]
        .iter()
        .map(|&kind| {
            let mut csv = Vec::new();
            write_roc_csv(&mut csv, &sweep_roc_on(&stream, cfg, kind).unwrap()).unwrap();
            csv
        })
        .collect()
}

fn determinism() -> Outcome {
    let cfg = desk(3);
    let a = simulate_and_evaluate(&cfg);
    let b = simulate_and_evaluate(&cfg);
    outcome(
        a == b,
        format!("{} ROC files, {} bytes", a.len(), a.iter().map(Vec::len).sum::<usize>()),
    )
}

fn main() {
    let mut curves = Curves {
        checked: 0,
        errors: Vec::new(),
    };
    let mut results: Vec<(u32, &str, Outcome, Duration)> = Vec::new();
    let mut run = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        results.push((id, name, o, t.elapsed()));
    };
    run(1, "EM single-iteration oracle", &mut em_oracle);
    run(2, "EM invariant suite", &mut em_invariants);
    run(3, "separated-cluster recovery", &mut separated_recovery);
    run(4, "GMM vs MSE ordering", &mut || gmm_vs_mse(&mut curves));
    run(5, "M monotonicity", &mut || m_monotonicity(&mut curves));
    run(7, "indistinguishable-channel null test", &mut || null_test(&mut curves));
    let roc = outcome(
        curves.errors.is_empty(),
        match curves.errors.first() {
            None => format!("{} curves checked", curves.checked),
            Some(e) => e.clone(),
        },
    );
    run(6, "ROC validity", &mut || Outcome {
        pass: roc.pass,
        detail: roc.detail.clone(),
    });
    run(8, "determinism", &mut determinism);
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, o, elapsed) in &results {
        let status = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("criterion {id} {status}: {name}: {} [{:.2?}]", o.detail, elapsed);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
