use mcrom_core::dataset::{MagnitudeBands, Scaling, SnapshotSet};
use mcrom_core::dlrom::{DlRomModel, ParamNorm};
use mcrom_core::linalg::DenseMatrix;
use mcrom_core::mcrom::{mcrom_train, ClassStatus, McRomConfig, McRomError, McRomModel};
use mcrom_core::metrics::{error_total, trajectory_ratio, ErrorReport, TotalAccumulator};
use mcrom_core::nn::arch::{Arch, ArchPreset};
use mcrom_core::nn::{LayerKind::*, TrainConfig};
use mcrom_core::svm::{smo, svm_train, SvmModel, KKT_TOL};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `per` points around each centre, as `2 x N` columns with 1-based labels.
fn blobs(centres: &[[f64; 2]], per: usize, spread: f64, seed: u64) -> (DenseMatrix, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per {
            cols.push(vec![
                centre[0] + spread * rng.gen_range(-1.0..1.0),
                centre[1] + spread * rng.gen_range(-1.0..1.0),
            ]);
            labels.push(c as u32 + 1);
        }
    }
    (DenseMatrix::from_columns(&cols).unwrap(), labels)
}

fn rbf(g: f64, a: &[f64], b: &[f64]) -> f64 {
    (-g * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp()
}

#[test]
fn smo_solution_satisfies_kkt_conditions() {
    let (x, labels) = blobs(&[[0.0, 0.0], [1.5, 1.0]], 25, 0.9, 3);
    let pts: Vec<Vec<f64>> = (0..x.cols()).map(|j| x.column(j)).collect();
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let k = DenseMatrix::from_fn(pts.len(), pts.len(), |i, j| rbf(0.8, &pts[i], &pts[j]));
    let c = 2.0;
    let res = smo(&k, &y, c, KKT_TOL, 100_000).unwrap();
    assert!(res.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
    let balance: f64 = res.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
    assert!(balance.abs() < 1e-10, "Σ α y = {balance:e}");
    let f = |t: usize| (0..pts.len()).map(|s| res.alpha[s] * y[s] * k[(s, t)]).sum::<f64>() - res.rho;
    for t in 0..pts.len() {
        let margin = y[t] * f(t);
        let a = res.alpha[t];
        if a > 1e-9 && a < c - 1e-9 {
            assert!((margin - 1.0).abs() <= 2.0 * KKT_TOL, "free SV {t}: y f = {margin}");
        } else if a <= 1e-9 {
            assert!(margin >= 1.0 - 2.0 * KKT_TOL, "non-SV {t}: y f = {margin}");
        } else {
            assert!(margin <= 1.0 + 2.0 * KKT_TOL, "bound SV {t}: y f = {margin}");
        }
    }
}

#[test]
fn separable_blobs_are_learned() {
    let centres = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
    let (x, labels) = blobs(&centres, 20, 1.0, 1);
    let m = svm_train(&x, &labels, 1.0).unwrap();
    assert_eq!(m.predict_columns(&x).unwrap(), labels);
    let (test, tl) = blobs(&centres, 10, 1.0, 2);
    assert_eq!(m.predict_columns(&test).unwrap(), tl);
    assert_eq!(m.machines.len(), 3);
}

#[test]
fn classifier_text_round_trip_predicts_identically() {
    let (x, labels) = blobs(&[[0.0, 0.0], [3.0, 0.0]], 15, 2.0, 4);
    let m = svm_train(&x, &labels, 1.0).unwrap();
    let back = SvmModel::from_text(&m.to_text()).unwrap();
    assert_eq!(m, back);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn training_order_does_not_change_predictions(seed in any::<u64>()) {
        let centres = [[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]];
        let (x, labels) = blobs(&centres, 12, 1.0, 9);
        let mut perm: Vec<usize> = (0..labels.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let xp = x.select_columns(&perm);
        let lp: Vec<u32> = perm.iter().map(|&j| labels[j]).collect();
        let a = svm_train(&x, &labels, 1.0).unwrap();
        let b = svm_train(&xp, &lp, 1.0).unwrap();
        let (grid, _) = blobs(&centres, 8, 1.5, 11);
        prop_assert_eq!(a.predict_columns(&grid).unwrap(), b.predict_columns(&grid).unwrap());
    }

    #[test]
    fn streaming_total_equals_batch(lens in prop::collection::vec(1usize..5, 1..6), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = TotalAccumulator::default();
        let mut ratios = Vec::new();
        for (k, &len) in lens.iter().enumerate() {
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..len)
                .map(|_| ((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(), (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                .collect();
            for (r, p) in &pairs {
                acc.push(k, r, p);
            }
            ratios.push(trajectory_ratio(pairs.iter().map(|(a, b)| (a.as_slice(), b.as_slice()))));
        }
        let (stream, _) = acc.finish();
        let (batch, _) = error_total(&ratios);
        prop_assert!((stream - batch).abs() <= 1e-12);
    }
}

#[test]
fn total_is_ratio_of_sums_not_mean_of_instants() {
    let p = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
    let reference = DenseMatrix::from_rows(&[vec![1.0, 3.0]]).unwrap();
    let pred = DenseMatrix::from_rows(&[vec![0.0, 3.0]]).unwrap();
    let r = ErrorReport::compute("m", 1, "d", &p, &reference, &pred).unwrap();
    assert_eq!(r.total, 0.25);
    let instants: Vec<f64> = r.instants.iter().map(|e| e.value.unwrap()).collect();
    assert_eq!(instants, vec![1.0, 0.0]);
}

fn toy_arch() -> Arch {
    Arch {
        preset: ArchPreset::Conv1d256,
        n_dofs: 4,
        latent: 2,
        n_params: 1,
        encoder: vec![Dense { inp: 4, out: 3 }, Elu, Dense { inp: 3, out: 2 }],
        decoder: vec![Dense { inp: 2, out: 3 }, Elu, Dense { inp: 3, out: 4 }],
        psi: vec![Dense { inp: 2, out: 4 }, Elu, Dense { inp: 4, out: 2 }],
    }
}

/// Decaying states on 4 points whose magnitudes span three bands.
fn decaying_set() -> SnapshotSet {
    let mut p = Vec::new();
    let mut s = Vec::new();
    for mu in [1.0, 2.0] {
        for k in 0..6 {
            let t = k as f64;
            p.push(vec![mu, t]);
            s.push((1..=4).map(|i| 10f64.powf(-t * mu / 2.5) * i as f64 / 4.0).collect::<Vec<f64>>());
        }
    }
    SnapshotSet::new(DenseMatrix::from_columns(&p).unwrap(), DenseMatrix::from_columns(&s).unwrap()).unwrap()
}

#[test]
fn offline_training_covers_every_populated_class() {
    let set = decaying_set();
    let bands = MagnitudeBands::new(vec![1e-1, 1e-3]).unwrap();
    let cfg = McRomConfig {
        train: TrainConfig { epochs: 5, batch_size: 4, ..Default::default() },
        transfer: true,
        svm_c: 1.0,
    };
    let (model, log) = mcrom_train(&set, &bands, &toy_arch(), &cfg).unwrap();
    assert_eq!(log.len(), 3);
    for row in &log {
        assert!(row.columns > 0);
        match &row.status {
            ClassStatus::Trained { warm_started, .. } => assert_eq!(*warm_started, row.class > 1),
            other => panic!("class {} {other:?}", row.class),
        }
    }
    assert_eq!(model.subnets.keys().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
    let (pred, routes) = model.infer(&set.p).unwrap();
    assert_eq!(pred.shape(), set.s.shape());
    assert_eq!(routes.len(), set.n_cols());

    let mut partial = model.clone();
    partial.subnets.remove(&3);
    let low = DenseMatrix::from_rows(&[vec![2.0], vec![5.0]]).unwrap();
    assert_eq!(model.route(&low).unwrap(), vec![3]);
    assert!(matches!(partial.infer(&low), Err(McRomError::Routing { class: 3, .. })));
}

fn preset_model(seed: u64) -> DlRomModel {
    let arch = ArchPreset::Conv1d256.build(256, 3, 1).unwrap();
    let norm = ParamNorm { min: vec![0.5, 0.0], max: vec![2.0, 2.0] };
    DlRomModel::init(&arch, Scaling { min: 0.0, max: 1.0 }, norm, seed).unwrap()
}

#[test]
fn single_class_model_is_the_plain_network() {
    let net = preset_model(2);
    let q = DenseMatrix::from_rows(&[vec![0.7, 1.9, 1.2], vec![0.0, 0.4, 2.0]]).unwrap();
    let (pred, routes) = McRomModel::single(net.clone()).infer(&q).unwrap();
    assert_eq!(routes, vec![1, 1, 1]);
    assert_eq!(pred, net.infer(&q).unwrap());
}

#[test]
fn model_directory_round_trip() {
    let (x, labels) = blobs(&[[0.7, 0.2], [1.6, 1.5]], 6, 0.2, 5);
    let classifier = svm_train(&x, &labels, 1.0).unwrap();
    let model = McRomModel {
        bands: MagnitudeBands::new(vec![1e-2]).unwrap(),
        classifier,
        subnets: [(1, preset_model(1)), (2, preset_model(2))].into_iter().collect(),
    };
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    model.save(dir).unwrap();
    let back = McRomModel::load(dir).unwrap();
    assert_eq!(model, back);
    std::fs::write(dir.join("manifest.txt"), "mcrom-manifest 1\nbogus line\n").unwrap();
    assert!(matches!(McRomModel::load(dir), Err(McRomError::Manifest(_))));
}
