//! Acceptance criteria. Each test prints one PASS/FAIL line (bypassing the
//! harness's output capture) and fails when the criterion is not met,
//! including its time budget. A global lock keeps timings independent.

use std::io::Write as _;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use cworld_core::cl::{agem_project, fisher_diag_gaussian, Method, MethodState, Projection, Reservoir};
use cworld_core::metrics::{
    average_performance, backward_transfer, bootstrap_ci, forgetting, forward_transfer, load_run, mean_over_tasks,
    reference_transfer, PerformanceLog, TrainingCurve, TransferMatrix, DEFAULT_RESAMPLES,
};
use cworld_core::nn::mlp::{head, split_gaussian, trunk};
use cworld_core::nn::{forward_critic, value_and_gradient, GradientVector, NetworkConfig};
use cworld_core::runner::{run_experiment, run_seed, Control, ExperimentConfig, Progress};
use cworld_core::sac::{evaluate_with, popart_update, ActionMode, EvalTask, PopArtStats};
use cworld_core::Rng;
use ndarray::Array2;
use rand::{Rng as _, SeedableRng};
use rand_distr::StandardNormal;

static LOCK: Mutex<()> = Mutex::new(());

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Runs `check` under the lock, prints the verdict line and asserts it.
fn criterion(id: u32, name: &str, budget: Duration, check: impl FnOnce() -> (bool, String)) {
    let _guard = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (ok, detail) = check();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let verdict = if ok && in_time { "PASS" } else { "FAIL" };
    let line = format!(
        "[acceptance] criterion {id:>2} {verdict}: {name}: {detail} ({:.1}s, budget {:.0}s)\n",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    std::io::stderr().write_all(line.as_bytes()).expect("stderr");
    assert!(ok, "criterion {id} failed: {detail}");
    assert!(in_time, "criterion {id} exceeded its time budget: {elapsed:?}");
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

#[test]
fn criterion_01_gradient_correctness() {
    criterion(1, "analytic vs central finite-difference gradients on 100 random nets", secs(5), || {
        let mut rng = Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let input = rng.random_range(2..6);
            let heads = rng.random_range(1..4);
            let action = rng.random_range(1..3);
            // Width >= 3: a 2-wide layer norm outputs +-1 and leaves only roundoff.
            let net = NetworkConfig::new(input, heads, 2 * action)
                .with_hidden(rng.random_range(1..4), rng.random_range(3..9));
            let params = net.init(&mut rng);
            let k = rng.random_range(0..heads);
            let rows = 3;
            let x = Array2::from_shape_fn((rows, input), |_| rng.random_range(-1.0..1.0));
            let cm = Array2::from_shape_fn((rows, action), |_| rng.random_range(-1.0..1.0));
            let cs = Array2::from_shape_fn((rows, action), |_| rng.random_range(-1.0..1.0));
            let loss = |p: &cworld_core::nn::ParameterBlock| {
                value_and_gradient(p, |tape, vars| {
                    let xv = tape.constant(x.clone());
                    let h = trunk(tape, &net, vars, xv);
                    let out = head(tape, &net, vars, h, k);
                    let (mean, log_std) = split_gaussian(tape, out, action);
                    let a = tape.constant(cm.clone());
                    let b = tape.constant(cs.clone());
                    let sq = tape.square(mean);
                    let t1 = tape.mul(sq, a);
                    let t2 = tape.mul(log_std, b);
                    let s1 = tape.sum(t1);
                    let s2 = tape.sum(t2);
                    tape.add(s1, s2)
                })
                .unwrap()
            };
            let (_, g) = loss(&params);
            let h = 1e-5;
            for i in 0..params.total_count() {
                let mut up = params.values().to_vec();
                up[i] += h;
                let mut down = params.values().to_vec();
                down[i] -= h;
                let fu = loss(&params.with_values(up).unwrap()).0;
                let fd = loss(&params.with_values(down).unwrap()).0;
                let numeric = (fu - fd) / (2.0 * h);
                let err = (g.values[i] - numeric).abs();
                let rel = if numeric.abs() < 1e-8 { err } else { err / g.values[i].abs().max(numeric.abs()) };
                worst = worst.max(rel);
            }
        }
        (worst < 1e-4, format!("max relative error {worst:.2e} (< 1e-4)"))
    });
}

fn gaussian_kl(m0: &[f64], s0: &[f64], m1: &[f64], s1: &[f64]) -> f64 {
    m0.iter()
        .zip(s0)
        .zip(m1.iter().zip(s1))
        .map(|((a, s), (b, t))| (t / s).ln() + (s * s + (a - b) * (a - b)) / (2.0 * t * t) - 0.5)
        .sum()
}

#[test]
fn criterion_02_fisher_fidelity() {
    criterion(2, "Gaussian Fisher diagonal vs finite-difference KL curvature", secs(5), || {
        let mut rng = Rng::seed_from_u64(2);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let d = rng.random_range(1..6);
            let m: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
            let s: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..2.0)).collect();
            let b: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            // mu(t) = m + a t, sigma(t) = s exp(b t) around t = 0.
            let at = |t: f64| -> (Vec<f64>, Vec<f64>) {
                (
                    m.iter().zip(&a).map(|(m, a)| m + a * t).collect(),
                    s.iter().zip(&b).map(|(s, b)| s * (b * t).exp()).collect(),
                )
            };
            let dsigma: Vec<f64> = s.iter().zip(&b).map(|(s, b)| s * b).collect();
            let analytic = fisher_diag_gaussian(&a, &dsigma, &s).unwrap();
            let h = 1e-4;
            let (mp, sp) = at(h);
            let (mm, sm) = at(-h);
            let numeric = (gaussian_kl(&m, &s, &mp, &sp) + gaussian_kl(&m, &s, &mm, &sm)) / (h * h);
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(1e-12));
        }
        (worst < 1e-2, format!("max relative error {worst:.2e} (< 1e-2)"))
    });
}

fn paper_matrix() -> TransferMatrix {
    TransferMatrix::parse(&std::fs::read_to_string(fixture("cw10_transfer_matrix.json")).unwrap()).unwrap()
}

#[test]
fn criterion_03_reference_transfer_regression() {
    criterion(3, "reference transfer of the CW20 ordering", secs(1), || {
        let m = paper_matrix();
        let seq: Vec<usize> = (0..10).chain(0..10).collect();
        let rt = reference_transfer(&m, &seq).unwrap();
        ((rt - 0.46).abs() <= 0.01, format!("RT = {rt:.4} (0.46 +- 0.01)"))
    });
}

#[test]
fn criterion_04_metric_oracles() {
    criterion(4, "metric oracles on constructed curves and fixtures", secs(1), || {
        let mut errs = Vec::new();
        let mut close = |what: &str, got: f64, want: f64, tol: f64| {
            if (got - want).abs() > tol {
                errs.push(format!("{what}: {got} != {want}"));
            }
        };
        // Closed-form curves on a 10-point grid over two tasks.
        let grid: Vec<u64> = (1..=20).map(|k| k * 5).collect();
        let rise: Vec<f64> = (0..20).map(|k| if k < 10 { 0.1 * (k + 1) as f64 } else { 0.25 }).collect();
        let flat = vec![0.5; 20];
        let log = PerformanceLog::new(2, 50, grid, vec![rise, flat], 0).unwrap();
        // End of task 0 is index 9: mean(0.8, 0.9, 1.0, 0.25, 0.25) = 0.64.
        close("forgetting", forgetting(&log, 0).unwrap(), 0.64 - 0.25, 1e-9);
        close("backward transfer", backward_transfer(&log, 0).unwrap(), 0.0, 1e-9);
        close("performance", average_performance(&log, 100).unwrap(), 0.375, 1e-9);
        // AUC over steps 5..50 of 0.1..1.0 is the trapezoid mean 0.55.
        let c = log.training_curve(0).unwrap();
        close("auc", c.auc(), 0.55, 1e-9);
        let reference = TrainingCurve::new(c.steps.clone(), vec![0.1; 10]).unwrap();
        close("forward transfer", forward_transfer(&c, &reference).unwrap(), 0.45 / 0.9, 1e-9);

        #[derive(serde::Deserialize)]
        struct FtFixture {
            reference: TrainingCurve,
            curve: TrainingCurve,
        }
        let ft: FtFixture = serde_json::from_str(&std::fs::read_to_string(fixture("ft_curve.json")).unwrap()).unwrap();
        let ft_value = forward_transfer(&ft.curve, &ft.reference).unwrap();
        close("paper forward transfer", ft_value, 0.10, 1e-9);

        let finetune = load_run(&fixture("cw20/finetune")).unwrap();
        let f0 = forgetting(&finetune.logs[0], 0).unwrap();
        close("paper fine-tuning forgetting of task 0", f0, 0.86, 1e-9);
        let ewc = load_run(&fixture("cw20/ewc")).unwrap();
        let b = mean_over_tasks(&ewc.logs[0], backward_transfer).unwrap();
        close("paper EWC backward transfer", b, 0.04, 1e-9);
        let packnet = load_run(&fixture("cw20/packnet")).unwrap();
        let p = average_performance(&packnet.logs[0], 20_000_000).unwrap();
        close("paper PackNet performance", p, 0.80, 1e-9);
        let detail = format!("FT {ft_value:.10}, F0 {f0:.10}, B(EWC) {b:.10}, P(PackNet) {p:.10}");
        (errs.is_empty(), if errs.is_empty() { detail } else { errs.join("; ") })
    });
}

#[test]
fn criterion_05_agem_properties() {
    criterion(5, "A-GEM projection on 1e5 random pairs", secs(5), || {
        let mut rng = Rng::seed_from_u64(5);
        let mut worst_dot = f64::INFINITY;
        let mut violations = 0;
        for _ in 0..100_000 {
            let d = rng.random_range(1..33);
            let scale = 10f64.powf(rng.random_range(-3.0..3.0));
            let mut draw = || GradientVector::new((0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect());
            let g_new = draw();
            let g_old = draw();
            let (p, kind) = agem_project(&g_new, &g_old);
            let dot = p.dot(&g_old) / (g_old.norm() * g_old.norm()).max(1e-300);
            worst_dot = worst_dot.min(dot);
            if dot < -1e-9 {
                violations += 1;
            }
            match kind {
                Projection::Satisfied => {
                    if p != g_new {
                        violations += 1;
                    }
                }
                Projection::Projected => {
                    // Projecting the result again must change nothing.
                    let (again, _) = agem_project(&p, &g_old);
                    let diff: f64 = again.values.iter().zip(&p.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    if diff > 1e-9 * p.norm().max(1.0) {
                        violations += 1;
                    }
                }
                Projection::Degenerate => {}
            }
        }
        (
            violations == 0,
            format!("{violations} violations, min <p, g_old>/|g_old|^2 = {worst_dot:.2e} (>= -1e-9)"),
        )
    });
}

#[test]
fn criterion_06_packnet_zero_forgetting() {
    criterion(6, "PackNet keeps task-1 parameters and behaviour over a 3-task sequence", secs(600), || {
        let mut cfg = ExperimentConfig::new("triplet-7", Method::PackNet);
        cfg.seeds = vec![0];
        let tasks = cfg.validate().unwrap();
        let eval_deterministic = |state: &cworld_core::sac::RunState| -> f64 {
            let actor = state.actor_for(0);
            let t = [EvalTask {
                spec: &tasks[0],
                task_id: 0,
                actor: &actor,
            }];
            let mut rng = Rng::seed_from_u64(606);
            evaluate_with(&state.agent.actor_net, state.heads, &t, 20, ActionMode::Deterministic, &mut rng).unwrap()[0]
        };
        let mut after_first = None;
        let mut at_end = None;
        run_seed(&cfg, &tasks, 0, None, |p| {
            if let Progress::TaskFinished { task, state } = p {
                let MethodState::PackNet(pn) = &state.method else {
                    panic!("packnet state expected")
                };
                let snapshot = (state.agent.actor.values().to_vec(), pn.masks.owner.clone(), eval_deterministic(state));
                match task {
                    0 => after_first = Some(snapshot),
                    2 => at_end = Some(snapshot),
                    _ => {}
                }
            }
            Control::Continue
        })
        .unwrap();
        let (v1, owner1, s1) = after_first.unwrap();
        let (v3, owner3, s3) = at_end.unwrap();
        let owned: Vec<usize> = (0..v1.len()).filter(|&i| owner1[i] == 1).collect();
        let identical = owned.iter().all(|&i| v1[i].to_bits() == v3[i].to_bits() && owner3[i] == 1);
        (
            identical && !owned.is_empty() && s1 == s3,
            format!(
                "{} owned parameters bit-identical: {identical}; deterministic success {s1:.2} -> {s3:.2}",
                owned.len()
            ),
        )
    });
}

#[test]
fn criterion_07_reservoir_statistics() {
    criterion(7, "reservoir inclusion frequencies", secs(60), || {
        let (cap, stream, trials) = (100usize, 1000usize, 10_000usize);
        let mut rng = Rng::seed_from_u64(7);
        let mut hits = vec![0u32; stream];
        for _ in 0..trials {
            let mut r = Reservoir::new(cap);
            for i in 0..stream {
                r.insert(i, &mut rng);
            }
            for &i in r.items() {
                hits[i] += 1;
            }
        }
        let p = cap as f64 / stream as f64;
        // Per-item frequencies over `trials` Bernoulli draws.
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let probes = [0, 1, cap - 1, cap, stream / 2, stream - 1];
        let mut worst: f64 = 0.0;
        for &i in &probes {
            worst = worst.max((hits[i] as f64 / trials as f64 - p).abs() / sigma);
        }
        // Blocks of 100 consecutive items, each an average of 100 items.
        for block in hits.chunks(100) {
            let f = block.iter().map(|&h| h as f64).sum::<f64>() / (block.len() * trials) as f64;
            worst = worst.max((f - p).abs() / (sigma / (block.len() as f64).sqrt()));
        }
        let within = hits
            .iter()
            .filter(|&&h| (h as f64 / trials as f64 - p).abs() <= 3.0 * sigma)
            .count();
        (
            worst <= 3.0,
            format!("max deviation {worst:.2} sigma over probes and blocks; {within}/{stream} items within 3 sigma"),
        )
    });
}

#[test]
fn criterion_08_sac_learnability() {
    criterion(8, "SynthReach-easy success >= 0.8 within 50K steps (median of 5 seeds)", secs(600), || {
        let mut cfg = ExperimentConfig::new("SynthReach-easy", Method::FineTune);
        cfg.steps_per_task = 50_000;
        let tasks = cfg.validate().unwrap();
        let mut reached: Vec<f64> = (0..5u64)
            .map(|seed| {
                let mut at = f64::INFINITY;
                run_seed(&cfg, &tasks, seed, None, |p| match p {
                    Progress::Evaluated { step, rates } if rates[0] >= 0.8 => {
                        at = step as f64;
                        Control::Stop
                    }
                    _ => Control::Continue,
                })
                .unwrap();
                at
            })
            .collect();
        let shown = format!("{reached:?}");
        let m = median(&mut reached);
        (m <= 50_000.0, format!("steps to 0.8 per seed {shown}, median {m}"))
    });
}

fn task_one_forgetting(cfg: &ExperimentConfig) -> (Vec<f64>, Vec<f64>) {
    let tasks = cfg.validate().unwrap();
    cfg.seeds
        .iter()
        .map(|&seed| {
            let run = run_seed(cfg, &tasks, seed, None, |_| Control::Continue).unwrap();
            let log = PerformanceLog::from_records(&run.records, tasks.len(), cfg.steps_per_task as u64).unwrap();
            (forgetting(&log, 0).unwrap(), average_performance(&log, log.total_steps()).unwrap())
        })
        .unzip()
}

#[test]
fn criterion_09_method_ordering() {
    criterion(9, "forgetting ordering on an interfering pair (5 seeds)", secs(1800), || {
        let pair = |method: Method| {
            let mut cfg = ExperimentConfig::new("SynthPair-interfere", method);
            cfg.steps_per_task = 20_000;
            cfg
        };
        let (mut ft, _) = task_one_forgetting(&pair(Method::FineTune));
        let ft_med = median(&mut ft);
        // Lambda chosen by median final performance, ties to the smaller value.
        let mut best: Option<(f64, f64, f64)> = None;
        for lambda in [1e3, 1e4, 1e5] {
            let mut cfg = pair(Method::Ewc);
            cfg.hyperparams.lambda = Some(lambda);
            let (mut f, mut p) = task_one_forgetting(&cfg);
            let (fm, pm) = (median(&mut f), median(&mut p));
            if best.is_none_or(|(_, _, bp)| pm > bp) {
                best = Some((lambda, fm, pm));
            }
        }
        let (lambda, ewc_med, _) = best.unwrap();
        let (mut pn, _) = task_one_forgetting(&pair(Method::PackNet));
        let pn_med = median(&mut pn);
        (
            ft_med >= 0.4 && ewc_med <= 0.2 && pn_med <= 0.05,
            format!(
                "median forgetting: fine-tuning {ft_med:.3} (>= 0.4), EWC {ewc_med:.3} at lambda {lambda:e} (<= 0.2), PackNet {pn_med:.3} (<= 0.05)"
            ),
        )
    });
}

#[test]
fn criterion_10_popart_preserves_outputs() {
    criterion(10, "PopArt keeps de-normalized predictions", secs(1), || {
        let mut rng = Rng::seed_from_u64(10);
        let net = NetworkConfig::new(6, 1, 1).with_hidden(2, 16);
        let mut params = net.init(&mut rng);
        let stats = PopArtStats {
            mean: 3.0,
            second_moment: 9.0 + 4.0,
            count: 40,
            ..PopArtStats::default()
        };
        let targets: Vec<f64> = (0..128).map(|_| 20.0 + 5.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let inputs: Vec<Vec<f64>> = (0..100).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let before: Vec<f64> = inputs
            .iter()
            .map(|x| stats.denormalize(forward_critic(&params, &net, x, &[], 0).unwrap()))
            .collect();
        let (w, b) = net.head_entries(0);
        let u = popart_update(&stats, &targets, params.slice(w), params.slice(b)).unwrap();
        params.slice_mut(w).copy_from_slice(&u.weights);
        params.slice_mut(b).copy_from_slice(&u.bias);
        let worst = inputs
            .iter()
            .zip(&before)
            .map(|(x, y)| (u.stats.denormalize(forward_critic(&params, &net, x, &[], 0).unwrap()) - y).abs())
            .fold(0.0, f64::max);
        let moved = (u.stats.mean - stats.mean).abs() > 1e-3;
        (worst < 1e-6 && moved, format!("max change {worst:.2e} (< 1e-6), mean {} -> {:.4}", stats.mean, u.stats.mean))
    });
}

#[test]
fn criterion_11_bootstrap_coverage() {
    criterion(11, "90% bootstrap interval coverage over 1000 trials", secs(60), || {
        let mut rng = Rng::seed_from_u64(11);
        let (trials, n) = (1000, 100);
        let mut covered = 0;
        for _ in 0..trials {
            let xs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let (lo, hi) = bootstrap_ci(&xs, 0.9, DEFAULT_RESAMPLES, &mut rng).unwrap();
            if lo <= 0.0 && 0.0 <= hi {
                covered += 1;
            }
        }
        let rate = covered as f64 / trials as f64;
        ((0.85..=0.95).contains(&rate), format!("coverage {rate:.3} with {n} draws per trial (0.90 +- 0.05)"))
    });
}

#[test]
fn criterion_12_determinism() {
    criterion(12, "byte-identical logs and checkpoints across repeated runs", secs(600), || {
        let root = tempfile::tempdir().unwrap();
        let mut mismatched = Vec::new();
        for &method in Method::ALL.iter() {
            let mut cfg = ExperimentConfig::new("SynthPair-interfere", method);
            cfg.steps_per_task = 2_000;
            cfg.seeds = vec![3];
            cfg.sac.uniform_steps = 500;
            cfg.sac.warmup_steps = 200;
            cfg.hyperparams.importance_samples = 256;
            cfg.hyperparams.packnet_finetune_steps = 200;
            let dir = root.path().join(method.name());
            cfg.output_dir = Some(dir.clone());
            let mut bytes = Vec::new();
            for _ in 0..2 {
                let _ = std::fs::remove_dir_all(&dir);
                let manifest = run_experiment(&cfg).unwrap();
                assert!(manifest.all_completed(), "{} failed: {:?}", method.name(), manifest.seeds);
                let mut files: Vec<_> = walk(&dir);
                files.sort();
                bytes.push(
                    files
                        .iter()
                        .map(|f| (f.strip_prefix(&dir).unwrap().to_path_buf(), std::fs::read(f).unwrap()))
                        .collect::<Vec<_>>(),
                );
            }
            if bytes[0] != bytes[1] {
                mismatched.push(method.name());
            }
        }
        (
            mismatched.is_empty(),
            format!("{} methods compared, mismatches: {mismatched:?}", Method::ALL.len()),
        )
    });
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
