//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. The model criteria drive the `mcrom` binary through
//! `run --fast` for every preset, twice, in separate output roots.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use mcrom_core::dataset::{build_snapshots, sample_parameters, scale_minmax, SamplePlan, SampleStrategy, SnapshotSet};
use mcrom_core::dlrom::{loss_and_gradients, DlRomModel, ParamNorm};
use mcrom_core::fom::{
    solve_burgers, solve_parabolic_from, BurgersConfig, FomProblem, Mesh1D, ParabolicProblem, Region, TimeGrid, TriMesh,
};
use mcrom_core::linalg::{dot, thin_svd, DenseMatrix};
use mcrom_core::nn::arch::{Arch, ArchPreset};
use mcrom_core::nn::{LayerKind, LayerKind::*, Network, Tensor};
use mcrom_core::pod::{pod_offline, pod_online_parabolic, pod_online_parabolic_direct, ReducedOperatorSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let s: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    d / s.max(1e-300)
}

fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Relative error of parameter and input gradients of `⟨w, f(x)⟩` against central differences.
fn layer_check(input: Vec<usize>, layers: Vec<LayerKind>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::new(input.clone(), layers, seed).unwrap();
    let batch = 2;
    let mut shape = vec![batch];
    shape.extend(&input);
    let x = Tensor::new(shape.clone(), random(batch * net.input_len(), &mut rng)).unwrap();
    let (y, tape) = net.forward(&x).unwrap();
    let w = Tensor::new(y.shape().to_vec(), random(y.len(), &mut rng)).unwrap();
    let (gp, gx) = net.backward(&tape, &w).unwrap();
    let f = |net: &Network, x: &Tensor| dot(net.predict(x).unwrap().data(), w.data());
    let h = 1e-6;
    let mut fd_p = vec![0.0; net.params.len()];
    for k in 0..fd_p.len() {
        net.params[k] += h;
        let a = f(&net, &x);
        net.params[k] -= 2.0 * h;
        let b = f(&net, &x);
        net.params[k] += h;
        fd_p[k] = (a - b) / (2.0 * h);
    }
    let mut fd_x = vec![0.0; x.len()];
    for k in 0..fd_x.len() {
        let mut xp = x.clone();
        xp.data_mut()[k] += h;
        let mut xm = x.clone();
        xm.data_mut()[k] -= h;
        fd_x[k] = (f(&net, &xp) - f(&net, &xm)) / (2.0 * h);
    }
    let ep = if fd_p.is_empty() { 0.0 } else { rel(&gp, &fd_p) };
    ep.max(rel(gx.data(), &fd_x))
}

fn toy_arch() -> Arch {
    Arch {
        preset: ArchPreset::Conv1d256,
        n_dofs: 8,
        latent: 2,
        n_params: 1,
        encoder: vec![
            Reshape { shape: vec![1, 8] },
            Conv1d { cin: 1, cout: 2, k: 3, s: 2, p: 1 },
            Elu,
            Reshape { shape: vec![8] },
            Dense { inp: 8, out: 2 },
        ],
        decoder: vec![
            Dense { inp: 2, out: 8 },
            Elu,
            Reshape { shape: vec![2, 4] },
            ConvTranspose1d { cin: 2, cout: 1, k: 3, s: 2, p: 1, op: 1 },
            Reshape { shape: vec![8] },
        ],
        psi: vec![Dense { inp: 2, out: 6 }, Elu, Dense { inp: 6, out: 2 }],
    }
}

fn toy_set() -> SnapshotSet {
    let mut p = Vec::new();
    let mut s = Vec::new();
    for mu in [1.0, 2.0] {
        for k in 0..3 {
            let t = 0.5 * k as f64;
            p.push(vec![mu, t]);
            s.push((0..8).map(|i| (-t * mu).exp() * ((i as f64 + 1.0) * 0.3 * mu).sin()).collect::<Vec<f64>>());
        }
    }
    SnapshotSet::new(DenseMatrix::from_columns(&p).unwrap(), DenseMatrix::from_columns(&s).unwrap()).unwrap()
}

fn loss_check() -> f64 {
    let set = scale_minmax(&toy_set()).unwrap();
    let arch = toy_arch();
    assert!(arch.n_weights() <= 2000);
    let mut model = DlRomModel::init(&arch, set.scaling.unwrap(), ParamNorm::fit(&set.p), 3).unwrap();
    let (alpha, beta) = (0.3, 0.7);
    let (_, grads) = loss_and_gradients(&model, &set.s, &set.p, alpha, beta).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for net in 0..3 {
        let n = grads[net].len();
        let mut fd = vec![0.0; n];
        for k in 0..n {
            let mut eval = |d: f64| {
                let params = match net {
                    0 => &mut model.encoder.params,
                    1 => &mut model.decoder.params,
                    _ => &mut model.psi.params,
                };
                params[k] += d;
                let (t, _) = loss_and_gradients(&model, &set.s, &set.p, alpha, beta).unwrap();
                let params = match net {
                    0 => &mut model.encoder.params,
                    1 => &mut model.decoder.params,
                    _ => &mut model.psi.params,
                };
                params[k] -= d;
                t.total(alpha, beta)
            };
            fd[k] = (eval(h) - eval(-h)) / (2.0 * h);
        }
        worst = worst.max(rel(&grads[net], &fd));
    }
    worst
}

fn criterion_1() -> Outcome {
    let cases: Vec<(&str, Vec<usize>, Vec<LayerKind>)> = vec![
        ("dense", vec![5], vec![Dense { inp: 5, out: 4 }]),
        ("conv1d", vec![2, 9], vec![Conv1d { cin: 2, cout: 3, k: 3, s: 2, p: 1 }]),
        ("conv2d", vec![2, 5, 6], vec![Conv2d { cin: 2, cout: 3, k: 3, s: 2, p: 1 }]),
        ("convtranspose1d", vec![3, 4], vec![ConvTranspose1d { cin: 3, cout: 2, k: 3, s: 2, p: 1, op: 1 }]),
        ("convtranspose2d", vec![3, 3, 4], vec![ConvTranspose2d { cin: 3, cout: 2, k: 3, s: 2, p: 1, op: 1 }]),
        ("elu", vec![12], vec![Elu]),
        ("reshape", vec![12], vec![Reshape { shape: vec![3, 4] }]),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (i, (name, input, layers)) in cases.into_iter().enumerate() {
        let e = layer_check(input, layers, 10 + i as u64);
        worst = worst.max(e);
        parts.push(format!("{name} {e:.1e}"));
    }
    let e = loss_check();
    worst = worst.max(e);
    parts.push(format!("dlrom-loss {e:.1e}"));
    outcome(worst <= 1e-5, format!("max relative gradient error {worst:.2e} <= 1e-5 ({})", parts.join(", ")))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ey: f64 = 0.0;
    for _ in 0..5 {
        let a = DenseMatrix::from_fn(12, 8, |_, _| rng.gen_range(-1.0..1.0));
        let svd = thin_svd(&a, 0.0).unwrap();
        for k in 1..8 {
            let err = a.sub(&svd.reconstruct(Some(k))).frobenius_norm();
            let tail = svd.sigma[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
            ey = ey.max((err - tail).abs());
        }
    }

    let cfg = BurgersConfig::new(Mesh1D::uniform(64, 1.0).unwrap(), TimeGrid::new(1.0, 20).unwrap());
    let params = sample_parameters(&SamplePlan::new(SampleStrategy::Equidistant, 3, vec![(0.5, 2.0)], 0)).unwrap();
    let set = build_snapshots(&FomProblem::Burgers(cfg), &params).unwrap();
    let rank = thin_svd(&set.s, 1e-12).unwrap().rank();
    let recon = pod_offline(&set, rank).unwrap().projection_error(&set.s);

    let mesh = TriMesh::generate(4).unwrap();
    let nodes = mesh.n_nodes();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let problem = ParabolicProblem::new(mesh, grid).unwrap();
    let params =
        sample_parameters(&SamplePlan::new(SampleStrategy::LatinHypercube, 6, vec![(1.0, 10.0), (0.1, 10.0)], 2))
            .unwrap();
    let set = build_snapshots(&FomProblem::Parabolic(problem.clone()), &params).unwrap();
    let basis = pod_offline(&set, 6).unwrap();
    let ops = ReducedOperatorSet::new(&basis, problem.operators()).unwrap();
    let mut sep: f64 = 0.0;
    for (m0, m1) in [(1.0, 0.1), (4.2, 3.3), (9.956, 6.8453)] {
        let a = pod_online_parabolic(&basis, &ops, m0, m1, &grid).unwrap();
        let b = pod_online_parabolic_direct(&basis, &problem, m0, m1).unwrap();
        for (x, y) in a.lifted.states.iter().zip(&b.lifted.states) {
            let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
            sep = sep.max(x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / scale);
        }
    }
    outcome(
        ey <= 1e-9 && recon <= 1e-8 && sep <= 1e-10 && nodes <= 200,
        format!(
            "Eckart-Young gap {ey:.1e} <= 1e-9; full-rank ({rank}) reconstruction {recon:.1e} <= 1e-8; separable vs direct {sep:.1e} <= 1e-10 on {nodes} DOFs"
        ),
    )
}

fn square_mesh(k: usize) -> TriMesh {
    let h = 2.0 / k as f64;
    let nodes: Vec<[f64; 2]> =
        (0..=k).flat_map(|j| (0..=k).map(move |i| [-1.0 + i as f64 * h, -1.0 + j as f64 * h])).collect();
    let id = |i: usize, j: usize| j * (k + 1) + i;
    let mut cells = Vec::new();
    for j in 0..k {
        for i in 0..k {
            cells.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            cells.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let tags = vec![Some(Region::Outer); cells.len()];
    TriMesh::new(nodes, cells, tags).unwrap()
}

fn interp(coords: &[f64], values: &[f64], x: f64) -> f64 {
    let i = coords.partition_point(|&c| c <= x).clamp(1, coords.len() - 1);
    let s = (x - coords[i - 1]) / (coords[i] - coords[i - 1]);
    values[i - 1] * (1.0 - s) + values[i] * s
}

fn criterion_3() -> Outcome {
    // sin(πx)sin(πy) decays by exactly (1 + 2π²Δt)^{-1} per backward-Euler step.
    let grid = TimeGrid::new(0.05, 10).unwrap();
    let decay = (1.0 + 2.0 * PI * PI * grid.dt()).powi(-(grid.n_steps() as i32));
    let errors: Vec<f64> = [8, 16, 32, 64]
        .iter()
        .map(|&k| {
            let mesh = square_mesh(k);
            let u0: Vec<f64> = mesh.nodes().iter().map(|p| (PI * p[0]).sin() * (PI * p[1]).sin()).collect();
            let problem = ParabolicProblem::new(mesh, grid).unwrap();
            let traj = solve_parabolic_from(&problem, 1.0, &u0).unwrap();
            let e: Vec<f64> = traj.final_state().iter().zip(&u0).map(|(a, b)| a - b * decay).collect();
            dot(&e, &problem.operators().mass.matvec(&e)).sqrt()
        })
        .collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order = orders[1..].iter().cloned().fold(f64::INFINITY, f64::min);

    let bgrid = TimeGrid::new(1.0, 400).unwrap();
    let coarse = Mesh1D::uniform(256, 1.0).unwrap();
    let fine = Mesh1D::uniform(1024, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for mu in [0.5, 2.0, 100.0, 1000.0] {
        let a = solve_burgers(&coarse, &bgrid, mu, 1e-10, 25).unwrap();
        let b = solve_burgers(&fine, &bgrid, mu, 1e-10, 25).unwrap();
        for t in [0.5, 1.0] {
            let k = bgrid.nearest_step(t);
            let r: Vec<f64> = coarse.coords().iter().map(|&x| interp(fine.coords(), &b.states[k], x)).collect();
            worst = worst.max(rel(&a.states[k], &r));
        }
    }
    outcome(
        order >= 1.9 && worst <= 0.05,
        format!("heat spatial order {order:.3} >= 1.9 (orders {orders:.3?}); Burgers 256 vs 1024 max relative l2 {worst:.2e} <= 5e-2"),
    )
}

/// Reports of one preset run.
struct Run {
    dir: PathBuf,
    summary: BTreeMap<String, String>,
}

impl Run {
    fn table(&self, name: &str) -> Vec<BTreeMap<String, String>> {
        let mut r = csv::Reader::from_path(self.dir.join("reports").join(name)).unwrap();
        let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
        r.records().map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(String::from)).collect()).collect()
    }

    fn value(&self, key: &str) -> f64 {
        self.summary.get(key).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)
    }
}

fn run_preset(root: &Path, preset: &str) -> Result<Run, String> {
    let t = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_mcrom"))
        .args(["run", "--preset", preset, "--fast", "--out"])
        .arg(root)
        .env("RUST_LOG", "warn")
        .status()
        .map_err(|e| e.to_string())?;
    eprintln!(
        "  run --fast --preset {preset} into {}: {status} after {:.0} s",
        root.display(),
        t.elapsed().as_secs_f64()
    );
    if !status.success() {
        return Err(format!("{preset} exited with {status}"));
    }
    let dir = root.join(preset);
    let text = std::fs::read_to_string(dir.join("reports/summary.txt")).map_err(|e| e.to_string())?;
    let summary =
        text.lines().filter_map(|l| l.split_once(" = ")).map(|(k, v)| (k.to_string(), v.to_string())).collect();
    Ok(Run { dir, summary })
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for sub in ["reports", "plots"] {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir.join(sub))
            .map(|d| d.filter_map(|e| e.ok().map(|e| e.path())).collect())
            .unwrap_or_default();
        files.retain(|p| p.extension().is_some_and(|e| e == "csv"));
        files.sort();
        out.extend(files);
    }
    out
}

fn class_errors(run: &Run, model: &str) -> BTreeMap<u32, f64> {
    run.table("class_errors.csv")
        .into_iter()
        .filter(|r| r["model"] == model)
        .filter_map(|r| Some((r["class"].parse().ok()?, r["error"].parse().ok()?)))
        .collect()
}

fn timing(run: &Run, kind: &str) -> Vec<(usize, f64)> {
    run.table("timing_summary.csv")
        .into_iter()
        .filter(|r| r["kind"] == kind)
        .map(|r| (r["n"].parse().unwrap(), r["mean_seconds"].parse().unwrap()))
        .collect()
}

fn criterion_4(diff: &Run) -> Outcome {
    let acc = diff.value("svm_accuracy");
    outcome(acc >= 0.90, format!("burgers-diffusion held-out SVM accuracy {acc:.4} >= 0.90"))
}

fn criterion_5(conv: &Run, diff: &Run) -> Outcome {
    let g = |r: &Run| -> f64 {
        r.table("dataset.csv")
            .into_iter()
            .find(|row| row["set"] == "train")
            .map_or(f64::NAN, |row| row["log10_gamma"].parse().unwrap())
    };
    let (a, b) = (g(conv), g(diff));
    outcome(a < 2.0 && b > 2.0, format!("log10 gamma: [100, 1000] {a:.3} < 2, [0.5, 2] {b:.3} > 2"))
}

fn criterion_6(diff: &Run, para: &Run) -> Outcome {
    let total = diff.value("error_total.mcrom.n10");
    let mc = class_errors(diff, "mcrom");
    let mono = class_errors(diff, "dlrom");
    let mut ok = total <= 5e-2;
    let mut parts = Vec::new();
    for c in 3..=6u32 {
        match (mc.get(&c), mono.get(&c)) {
            (Some(a), Some(b)) => {
                ok &= *b >= 10.0 * a;
                parts.push(format!("class {c}: {b:.2e} vs {a:.2e}"));
            }
            _ => parts.push(format!("class {c}: empty")),
        }
    }
    let probe = para.table("probe.csv");
    let at = |model: &str, t: f64| {
        probe
            .iter()
            .find(|r| r["model"] == model && (r["t"].parse::<f64>().unwrap() - t).abs() < 1e-9)
            .and_then(|r| r["error"].parse::<f64>().ok())
            .unwrap_or(f64::NAN)
    };
    let mut pparts = Vec::new();
    for t in [0.2, 1.25, 2.2, 2.7] {
        let (a, b) = (at("mcrom", t), at("dlrom", t));
        ok &= a < 5e-2;
        if t >= 1.25 {
            ok &= b > 0.5;
        }
        pparts.push(format!("t={t}: {a:.2e} / {b:.2e}"));
    }
    outcome(
        ok,
        format!(
            "Burgers MC-ROM E_total {total:.3e} <= 5e-2, monolithic vs MC-ROM per class >= x10 ({}); parabolic probe MC-ROM < 5e-2 / monolithic > 0.5 for t >= 1.25 ({})",
            parts.join(", "),
            pparts.join(", ")
        ),
    )
}

fn criterion_7(conv: &Run, diff: &Run) -> Outcome {
    let mc = timing(diff, "mcrom");
    let (lo, hi) = mc.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &(_, t)| (a.min(t), b.max(t)));
    let mean = mc.iter().map(|p| p.1).sum::<f64>() / mc.len() as f64;
    let spread = (hi - lo) / mean;
    let pod = timing(conv, "pod");
    let increasing = pod.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1);
    let fom = timing(diff, "fom")[0].1;
    let speedup = fom / hi;
    let ns: Vec<usize> = mc.iter().map(|p| p.0).collect();
    outcome(
        mc.len() == 5 && spread < 0.25 && pod.len() == 5 && increasing && speedup >= 10.0,
        format!(
            "MC-ROM spread {spread:.3} < 0.25 over n = {ns:?}; POD-Burgers means {:?} strictly increasing = {increasing}; FOM / slowest MC-ROM = {speedup:.1} >= 10",
            pod.iter().map(|p| format!("{:.2e}", p.1)).collect::<Vec<_>>()
        ),
    )
}

fn criterion_8(conv: &Run, diff: &Run) -> Outcome {
    let (dl, pod) = (conv.value("error_total.dlrom.n5"), conv.value("error_total.pod.n5"));
    let mc = diff.value("error_total.mcrom.n10");
    let rows: Vec<(usize, f64)> = diff
        .table("error_vs_n.csv")
        .into_iter()
        .filter(|r| r["model"] == "pod")
        .filter_map(|r| Some((r["n"].parse().ok()?, r["error_total"].parse().ok()?)))
        .collect();
    let above6: Vec<&(usize, f64)> = rows.iter().filter(|r| r.0 >= 6).collect();
    let pod_wins = !above6.is_empty() && above6.iter().all(|r| r.1 < mc);
    let crossover = diff.summary.get("pod_crossover_vs_mcrom").cloned();
    let diffusion_ok = pod_wins || crossover.is_some();
    outcome(
        dl < pod && diffusion_ok,
        format!(
            "convection n=5: DL-ROM {dl:.3e} < POD {pod:.3e}; diffusion: POD < MC-ROM ({mc:.3e}) for all n >= 6 = {pod_wins}, reported crossover n = {}",
            crossover.unwrap_or_else(|| "missing".into())
        ),
    )
}

fn criterion_9(first: &[(String, Run)], second: &[(String, Run)]) -> Outcome {
    let mut compared = 0;
    let mut diffs = Vec::new();
    for ((preset, a), (_, b)) in first.iter().zip(second) {
        for path in csv_files(&a.dir) {
            let name = path.file_name().unwrap().to_string_lossy().to_string();
            if name.starts_with("timing") {
                continue;
            }
            let other = b.dir.join(path.strip_prefix(&a.dir).unwrap());
            compared += 1;
            if std::fs::read(&path).ok() != std::fs::read(&other).ok() {
                diffs.push(format!("{preset}/{name}"));
            }
        }
    }
    outcome(
        diffs.is_empty() && compared > 0,
        format!("{compared} CSV files compared across two `run --fast` passes of all presets; differing: {diffs:?} (wall-clock timing files excluded)"),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, o: Outcome| {
        println!("[{}] criterion {id} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };
    report(1, "gradient suite", criterion_1());
    report(2, "POD oracles", criterion_2());
    report(3, "FOM verification", criterion_3());

    let tmp = tempfile::tempdir().unwrap();
    let presets = ["burgers-convection", "burgers-diffusion", "parabolic-2d"];
    let mut passes: Vec<Vec<(String, Run)>> = Vec::new();
    let mut failure = None;
    for pass in ["a", "b"] {
        let root = tmp.path().join(pass);
        let mut runs = Vec::new();
        for p in presets {
            match run_preset(&root, p) {
                Ok(r) => runs.push((p.to_string(), r)),
                Err(e) => failure = Some(e),
            }
        }
        passes.push(runs);
    }
    if let Some(e) = failure {
        for (id, name) in [
            (4, "classifier"),
            (5, "severity"),
            (6, "generalization"),
            (7, "timing"),
            (8, "accuracy ordering"),
            (9, "determinism"),
        ] {
            report(id, name, outcome(false, format!("preset run failed: {e}")));
        }
    } else {
        let get = |p: &str| &passes[0].iter().find(|r| r.0 == p).unwrap().1;
        let (conv, diff, para) = (get(presets[0]), get(presets[1]), get(presets[2]));
        report(4, "classifier", criterion_4(diff));
        report(5, "severity", criterion_5(conv, diff));
        report(6, "generalization", criterion_6(diff, para));
        report(7, "timing", criterion_7(conv, diff));
        report(8, "accuracy ordering", criterion_8(conv, diff));
        report(9, "determinism", criterion_9(&passes[0], &passes[1]));
    }

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
