//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use fisgan_cli::{ExperimentFile, Overrides};
use fisgan_core::config::{Mode, TrainConfig};
use fisgan_core::data::{
    load_idx, read_metrics, render_image_grid, write_idx_images, write_idx_labels, IdxImages, MetricRow, MetricsWriter,
};
use fisgan_core::eval::{frechet_distance, GaussianMoments};
use fisgan_core::flows::{standard_normal, standard_normal_log_density, FlowArch, FlowKind, FlowModel};
use fisgan_core::gan::train;
use fisgan_core::importance::{allocate_counts, build_flow_dataset, importance_weights, AugmentCov, LatentBatch};
use fisgan_core::linalg::SymMatrix;
use fisgan_core::nn::{Activation, MlpNet};
use fisgan_core::norms::NormKind;
use fisgan_core::optim::AdamState;
use fisgan_core::Tensor2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

const H: f64 = 1e-5;

fn central_diff(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let o = p[i];
            p[i] = o + H;
            let plus = f(&p);
            p[i] = o - H;
            let minus = f(&p);
            p[i] = o;
            (plus - minus) / (2.0 * H)
        })
        .collect()
}

fn numeric_jacobian(x: &[f64], outputs: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Tensor2 {
    let mut jac = Tensor2::zeros(outputs, x.len());
    let mut p = x.to_vec();
    for c in 0..x.len() {
        let o = p[c];
        p[c] = o + H;
        let plus = f(&p);
        p[c] = o - H;
        let minus = f(&p);
        p[c] = o;
        for r in 0..outputs {
            jac.set(r, c, (plus[r] - minus[r]) / (2.0 * H));
        }
    }
    jac
}

/// log|det| by partial-pivoting elimination.
fn log_abs_det(m: &Tensor2) -> f64 {
    let n = m.rows();
    let mut a = m.clone();
    let mut acc = 0.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a.get(i, col).abs().total_cmp(&a.get(j, col).abs())).unwrap();
        for k in 0..n {
            let t = a.get(col, k);
            a.set(col, k, a.get(piv, k));
            a.set(piv, k, t);
        }
        let d = a.get(col, col);
        acc += d.abs().ln();
        for r in col + 1..n {
            let f = a.get(r, col) / d;
            for k in col..n {
                a.set(r, k, a.get(r, k) - f * a.get(col, k));
            }
        }
    }
    acc
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let acts = [Activation::Tanh, Activation::Sigmoid, Activation::LeakyRelu(0.2), Activation::Identity];
    let (mut worst_grad, mut worst_jac): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let sizes = [rng.gen_range(2..6), rng.gen_range(3..8), rng.gen_range(3..8), rng.gen_range(1..4)];
        let hidden = acts[rng.gen_range(0..4)];
        let output = acts[rng.gen_range(0..4)];
        let mut net = MlpNet::glorot(&sizes, hidden, output, &mut rng).map_err(|e| e.to_string())?;
        for k in 0..3 {
            net.layer_mut(k).bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        }
        let x = Tensor2::from_fn(3, sizes[0], |_, _| rng.gen_range(-1.5..1.5));
        let up = Tensor2::from_fn(3, sizes[3], |_, _| rng.gen_range(-1.0..1.0));
        let loss = |n: &MlpNet, x: &Tensor2| -> f64 {
            n.predict(x).unwrap().data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = net.forward(&x).map_err(|e| e.to_string())?;
        let (grads, dx) = net.backward(&cache, &up).map_err(|e| e.to_string())?;
        let numeric = central_diff(&net.param_slices().concat(), |p| {
            let mut probe = net.clone();
            let mut off = 0;
            for block in probe.param_slices_mut() {
                block.copy_from_slice(&p[off..off + block.len()]);
                off += block.len();
            }
            loss(&probe, &x)
        });
        for (a, b) in grads.slices().concat().iter().zip(&numeric) {
            worst_grad = worst_grad.max(rel_err(*a, *b));
        }
        let numeric_dx = central_diff(x.data(), |xs| loss(&net, &Tensor2::from_vec(x.rows(), x.cols(), xs.to_vec()).unwrap()));
        for (a, b) in dx.data().iter().zip(&numeric_dx) {
            worst_grad = worst_grad.max(rel_err(*a, *b));
        }
        let z: Vec<f64> = x.row(0).to_vec();
        let jac = net.jacobian_wrt_input(&z).map_err(|e| e.to_string())?;
        let num = numeric_jacobian(&z, sizes[3], |p| net.predict(&Tensor2::from_vec(1, p.len(), p.to_vec()).unwrap()).unwrap().into_vec());
        for (a, b) in jac.data().iter().zip(num.data()) {
            worst_jac = worst_jac.max(rel_err(*a, *b));
        }
    }
    ensure(worst_grad < 1e-4 && worst_jac < 1e-4, || {
        format!("worst relative error: gradients {worst_grad:.2e}, Jacobians {worst_jac:.2e}")
    })?;
    Ok(format!("20 nets, worst relative error: gradients {worst_grad:.2e}, Jacobians {worst_jac:.2e}"))
}

fn criterion_2() -> Check {
    let arch = FlowArch { depth: 4, hidden: 16, hidden_layers: 2, scale_clamp: 3.0 };
    let (mut rt, mut ld_err, mut zero): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for kind in FlowKind::ALL {
        for dim in [2, 4, 8] {
            let mut rng = ChaCha8Rng::seed_from_u64(10 + dim as u64);
            let fresh = FlowModel::new(kind, dim, &FlowArch::default(), &mut rng).map_err(|e| e.to_string())?;
            let z = standard_normal(200, dim, &mut rng);
            for (row, l) in z.iter_rows().zip(fresh.log_prob(&z).map_err(|e| e.to_string())?) {
                zero = zero.max((l - standard_normal_log_density(row)).abs());
            }

            let mut flow = FlowModel::new(kind, dim, &arch, &mut rng).map_err(|e| e.to_string())?;
            flow.jitter_parameters(0.3, &mut rng);
            let x = z.map(|v| 2.0 * v);
            let (h, _) = flow.forward_map(&x).map_err(|e| e.to_string())?;
            rt = rt.max(flow.inverse_map(&h).map_err(|e| e.to_string())?.max_abs_diff(&x));
            for row in x.iter_rows().take(5) {
                let (_, ld) = flow.forward_map(&Tensor2::from_vec(1, dim, row.to_vec()).unwrap()).map_err(|e| e.to_string())?;
                let jac = numeric_jacobian(row, dim, |p| flow.forward_map(&Tensor2::from_vec(1, dim, p.to_vec()).unwrap()).unwrap().0.into_vec());
                ld_err = ld_err.max(rel_err(ld[0], log_abs_det(&jac)));
            }
        }
    }
    let detail = format!("round trip {rt:.1e}, log-det rel err {ld_err:.1e}, zero-init log_prob {zero:.1e}");
    ensure(rt < 1e-6 && ld_err < 1e-4 && zero < 1e-10, || detail.clone())?;
    Ok(detail)
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_sum, mut violations, mut checked) = (0.0f64, 0usize, 0usize);
    while checked < 10_000 {
        let n = rng.gen_range(1..50);
        let g: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..10.0) }).collect();
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        checked += 1;
        let w = importance_weights(&g).map_err(|e| e.to_string())?;
        worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
        let total = rng.gen_range(1..2000);
        let plan = allocate_counts(&w, total).map_err(|e| e.to_string())?;
        if plan.counts.iter().sum::<usize>() != total {
            return Err(format!("counts sum {} != {total}", plan.counts.iter().sum::<usize>()));
        }
        for a in 0..n {
            for b in 0..n {
                if g[a] > g[b] && plan.counts[a] < plan.counts[b] {
                    violations += 1;
                }
            }
        }
    }
    let detail = format!("10000 vectors, worst |sum p - 1| = {worst_sum:.1e}, {violations} monotonicity violations");
    ensure(worst_sum <= 1e-12 && violations == 0, || detail.clone())?;
    Ok(detail)
}

fn criterion_4() -> Check {
    let m = |mean: Vec<f64>, var: Vec<f64>| GaussianMoments { mean, cov: SymMatrix::diagonal(&var) };
    let cov = Tensor2::from_rows(&[vec![2.0, 0.3, 0.1], vec![0.3, 1.0, -0.2], vec![0.1, -0.2, 0.5]]).unwrap();
    let cov = SymMatrix::new(&cov).map_err(|e| e.to_string())?;
    let a = GaussianMoments { mean: vec![0.5, -1.0, 2.0], cov: cov.clone() };
    let d = [1.0, 2.0, -0.5];
    let b = GaussianMoments { mean: a.mean.iter().zip(d).map(|(x, y)| x + y).collect(), cov };
    let same = frechet_distance(&a, &a).map_err(|e| e.to_string())?;
    let shift = frechet_distance(&a, &b).map_err(|e| e.to_string())?;
    let scalar = frechet_distance(&m(vec![0.0], vec![1.0]), &m(vec![3.0], vec![4.0])).map_err(|e| e.to_string())?;
    let detail = format!("identical {same:.1e}, shift {shift:.12} (want 5.25), 1-D {scalar:.12} (want 10)");
    ensure(same.abs() <= 1e-8 && (shift - 5.25).abs() <= 1e-8 && (scalar - 10.0).abs() <= 1e-8, || detail.clone())?;
    Ok(detail)
}

fn criterion_5() -> Check {
    let mut fractions = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let jitter = standard_normal(64, 2, &mut rng);
        let latents = Tensor2::from_fn(64, 2, |r, c| {
            let sign = if r < 32 { 1.0 } else { -1.0 };
            sign * [2.5, 0.0][c] + 0.3 * jitter.get(r, c)
        });
        let mut batch = LatentBatch::new(latents);
        batch.set_norms((0..64).map(|r| if r < 32 { 3.0 } else { 1.0 }).collect()).map_err(|e| e.to_string())?;
        let data = build_flow_dataset(&batch, 512, AugmentCov::Identity, &mut rng).map_err(|e| e.to_string())?;
        let arch = FlowArch { depth: 4, hidden: 32, ..FlowArch::default() };
        let mut flow = FlowModel::new(FlowKind::RealNvp, 2, &arch, &mut rng).map_err(|e| e.to_string())?;
        flow.fit(&data, 30, 64, &mut AdamState::new(1e-3), &mut rng).map_err(|e| e.to_string())?;
        let samples = flow.sample(10_000, &mut rng).map_err(|e| e.to_string())?;
        let heavy = samples.iter_rows().filter(|p| p[0] > 0.0).count();
        fractions.push(heavy as f64 / 1e4);
    }
    let passing = fractions.iter().filter(|&&f| f >= 0.6).count();
    let detail = format!("heavy-cluster fractions {fractions:.3?}, {passing}/5 seeds at >= 0.6");
    ensure(passing >= 4, || detail.clone())?;
    Ok(detail)
}

fn experiment(name: &str) -> ExperimentFile {
    ExperimentFile::load(&workspace().join("configs").join(name))
        .and_then(|e| e.resolve(&Overrides::default()))
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Median proxy FID at iterations 500 and 1000 for each mode over five seeds.
fn directional(name: &str) -> Result<(bool, String), String> {
    let exp = experiment(name);
    let data = exp.load_dataset().map_err(|e| e.to_string())?;
    let configs: Vec<TrainConfig> = [Mode::Baseline, Mode::Fis]
        .into_iter()
        .flat_map(|mode| (0..5).map(move |seed| (mode, seed)))
        .map(|(mode, seed)| TrainConfig { mode, seed, max_iters: 1000, eval_interval: 100, wall_clock: false, ..exp.train.clone() })
        .collect();
    let runs: Vec<Result<Vec<MetricRow>, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| s.spawn(|| train(c.clone(), &data, &mut ()).map(|r| r.0.rows).map_err(|e| e.to_string())))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let at = |mode: Mode, it: u64| {
        median(
            configs
                .iter()
                .zip(&runs)
                .filter(|(c, _)| c.mode == mode)
                .map(|(_, rows)| rows.iter().find(|r| r.iteration == it).expect("eval row").proxy_fid)
                .collect(),
        )
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for it in [500, 1000] {
        let (b, f) = (at(Mode::Baseline, it), at(Mode::Fis, it));
        ok &= f < b;
        parts.push(format!("@{it} baseline {b:.4} fis {f:.4}"));
    }
    Ok((ok, format!("{name}: {}", parts.join(", "))))
}

fn criterion_6() -> Check {
    let (ring_ok, ring) = directional("ring.json")?;
    let (mnist_ok, mnist) = directional("mnist8.json")?;
    let detail = format!("{ring}; {mnist}");
    ensure(ring_ok && mnist_ok, || detail.clone())?;
    Ok(detail)
}

fn fisgan(args: &[&str]) -> Result<Vec<String>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fisgan"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("fisgan {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).lines().map(str::to_string).collect())
}

fn mean_norm_ms(run_dir: &Path) -> Result<f64, String> {
    let text = fs::read_to_string(run_dir.join("refreshes.csv")).map_err(|e| e.to_string())?;
    let v: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    ensure(!v.is_empty(), || format!("no refreshes in {}", run_dir.display()))?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

fn criterion_7() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = workspace().join("configs/ring.json");
    let (c, out) = (cfg.to_str().unwrap(), tmp.path().to_str().unwrap());
    let expected: Vec<u64> = (0..=10).map(|k| k * 100).collect();
    let mut parts = Vec::new();
    let mut dirs = Vec::new();
    for (axis, values) in [("norm", vec!["frobenius", "nuclear"]), ("flow", vec!["realnvp", "maf", "iaf"])] {
        let lines = fisgan(&["ablate", "--config", c, "--out", out, "--max-iters", "1000", "--axis", axis, "--values", &values.join(",")])?;
        let table = read_metrics(&tmp.path().join(format!("ablate-{axis}.csv"))).map_err(|e| e.to_string())?;
        for v in &values {
            let its: Vec<u64> = table.rows.iter().filter(|r| r.0.as_deref() == Some(*v)).map(|r| r.1.iteration).collect();
            ensure(its == expected, || format!("{axis}={v}: iterations {its:?}"))?;
        }
        parts.push(format!("{axis}: {} runs x 11 rows", values.len()));
        if axis == "norm" {
            dirs = lines.iter().map(PathBuf::from).collect();
        }
    }
    let frob = mean_norm_ms(&dirs[0])?;
    let nuc = mean_norm_ms(&dirs[1])?;
    let detail = format!("{}; norm time per refresh frobenius {frob:.3} ms, nuclear {nuc:.3} ms", parts.join(", "));
    ensure(nuc > frob, || detail.clone())?;
    Ok(detail)
}

fn criterion_8() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(workspace().join("configs/ring.json")).unwrap()).unwrap();
    v["train"]["wall_clock"] = false.into();
    v["out"] = tmp.path().to_str().unwrap().into();
    let cfg = tmp.path().join("ring.json");
    fs::write(&cfg, v.to_string()).unwrap();
    let c = cfg.to_str().unwrap();

    let run = |extra: &[&str]| -> Result<PathBuf, String> {
        let mut args = vec!["train", "--config", c];
        args.extend_from_slice(extra);
        Ok(PathBuf::from(fisgan(&args)?.pop().unwrap_or_default()))
    };
    let read = |p: PathBuf| fs::read(p).map_err(|e| e.to_string());
    let a = read(run(&["--max-iters", "1000"])?.join("metrics.csv"))?;
    let b = read(run(&["--max-iters", "1000"])?.join("metrics.csv"))?;
    ensure(a == b, || "two identical runs wrote different metrics".into())?;

    let full = run(&["--max-iters", "1000"])?;
    let part = run(&["--max-iters", "500"])?;
    let ckpt = part.join("final.ckpt");
    run(&["--max-iters", "1000", "--resume", ckpt.to_str().unwrap()])?;
    ensure(read(full.join("metrics.csv"))? == read(part.join("metrics.csv"))?, || {
        "500 + resume 500 metrics differ from 1000".into()
    })?;
    ensure(read(full.join("final.ckpt"))? == read(ckpt.clone())?, || "resumed final checkpoint differs".into())?;
    let rows = read_metrics(&full.join("metrics.csv")).map_err(|e| e.to_string())?.rows.len();
    Ok(format!("identical CSVs across reruns; 500 + resume 500 matches 1000 ({rows} rows, checkpoint bytes equal)"))
}

fn criterion_9() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    // IDX: arbitrary bytes survive write, load and de-normalization.
    let images = IdxImages { count: 7, rows: 5, cols: 5, pixels: (0..175).map(|_| rng.gen()).collect() };
    let labels: Vec<u8> = (0..7).map(|_| rng.gen_range(0..10)).collect();
    let (ip, lp) = (tmp.path().join("img.idx"), tmp.path().join("lbl.idx"));
    write_idx_images(&ip, &images).map_err(|e| e.to_string())?;
    write_idx_labels(&lp, &labels).map_err(|e| e.to_string())?;
    let d = load_idx(&ip, Some(&lp)).map_err(|e| e.to_string())?;
    let back: Vec<u8> = d.samples.data().iter().map(|&x| ((x + 1.0) * 127.5).round() as u8).collect();
    ensure(back == images.pixels && d.labels.as_deref() == Some(&labels[..]), || "IDX round trip changed bytes".into())?;
    let fixture = [0u8, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 51, 204, 1, 2, 3, 4];
    fs::write(&ip, fixture).unwrap();
    let d = load_idx(&ip, None).map_err(|e| e.to_string())?;
    ensure(d.samples.row(0) == [-1.0, 1.0, -0.6, 0.6], || format!("fixture pixels {:?}", d.samples.row(0)))?;

    // PGM: byte-exact against independently generated golden files.
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for (file, count, cols) in [("grid4_cols2.pgm", 4, 2), ("grid3_cols2.pgm", 3, 2), ("grid5_cols5.pgm", 5, 5)] {
        let samples = Tensor2::from_fn(count, 9, |k, p| -1.0 + 2.0 * ((9 * k + p) % 17) as f64 / 16.0);
        let ours = render_image_grid(&samples, 3, cols, (-1.0, 1.0)).map_err(|e| e.to_string())?;
        ensure(ours == fs::read(golden.join(file)).map_err(|e| e.to_string())?, || format!("{file} differs"))?;
    }

    // CSV: values survive to 12 significant digits.
    let csv = tmp.path().join("m.csv");
    let mut w = MetricsWriter::create(&csv).map_err(|e| e.to_string())?;
    let mut sent = Vec::new();
    for i in 0..200u64 {
        let f = |rng: &mut ChaCha8Rng| rng.gen_range(-1.0f64..1.0) * 10f64.powi(rng.gen_range(-8..9));
        let row = MetricRow {
            iteration: i * 100,
            mode: if i % 2 == 0 { Mode::Fis } else { Mode::Baseline },
            flow_kind: FlowKind::ALL[i as usize % 3],
            norm_kind: if i % 3 == 0 { NormKind::Nuclear } else { NormKind::Frobenius },
            seed: rng.gen(),
            proxy_fid: f(&mut rng).abs(),
            d_loss: f(&mut rng),
            g_loss: f(&mut rng),
            wall_ms: rng.gen_range(0..1_000_000),
        };
        w.write(&row).map_err(|e| e.to_string())?;
        sent.push(row);
    }
    let got = read_metrics(&csv).map_err(|e| e.to_string())?.rows;
    let mut worst: f64 = 0.0;
    for ((_, g), s) in got.iter().zip(&sent) {
        ensure((g.iteration, g.mode, g.flow_kind, g.norm_kind, g.seed, g.wall_ms) == (s.iteration, s.mode, s.flow_kind, s.norm_kind, s.seed, s.wall_ms), || {
            format!("row {} fields differ", s.iteration)
        })?;
        for (a, b) in [(g.proxy_fid, s.proxy_fid), (g.d_loss, s.d_loss), (g.g_loss, s.g_loss)] {
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    ensure(got.len() == sent.len() && worst <= 5e-12, || format!("CSV relative error {worst:.1e}"))?;
    Ok(format!("IDX bytes exact, 3 golden PGMs byte-exact, CSV worst relative error {worst:.1e} over 200 rows"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, u64, fn() -> Check); 9] = [
        ("gradient oracle", 30, criterion_1),
        ("flow exactness", 120, criterion_2),
        ("weight and count conservation", 10, criterion_3),
        ("Frechet closed forms", 5, criterion_4),
        ("density targeting", 120, criterion_5),
        ("directional acceleration", 1800, criterion_6),
        ("ablation harness", 2700, criterion_7),
        ("reproducibility and resume", 600, criterion_8),
        ("format conformance", 60, criterion_9),
    ];
    let mut failed = Vec::new();
    for (k, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let within = took <= Duration::from_secs(*limit);
        let (status, detail) = match (&result, within) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over the {limit} s budget")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        println!("criterion {} ({name}): {status}: {detail} [{:.1} s]", k + 1, took.as_secs_f64());
        if status == "FAIL" {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
