//! Experiment stages and the artifact directory they fill.
//!
//! Layout under `<root>/<name>`: `manifest.txt`, `data/`, `models/`,
//! `reports/` (CSV and `summary.txt`), `plots/`, and a `FAILED` marker when a
//! stage aborted. Snapshot sets are cached under `<root>/cache`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use mcrom_core::dataset::{
    build_snapshots, class_counts, gamma_severity, label_by_magnitude, midpoints, read_snapshots, sample_parameters,
    split_indices, write_snapshot_csv, write_snapshots, MagnitudeBands, SamplePlan, SnapshotSet,
};
use mcrom_core::dlrom::{dlrom_train, DlRomModel, LossReport, ParamNorm};
use mcrom_core::fom::{BurgersConfig, FomProblem, Mesh1D, ParabolicProblem, TimeGrid, TriMesh};
use mcrom_core::linalg::DenseMatrix;
use mcrom_core::mcrom::{mcrom_train, ClassStatus, McRomConfig, McRomModel};
use mcrom_core::metrics::{class_error, error_single, time_interleaved, trajectories, ErrorReport, TimedQuery};
use mcrom_core::pod::{pod_offline, pod_online_burgers, pod_online_parabolic, PodBasis, PodError, ReducedOperatorSet};
use mcrom_core::svm::svm_train;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ModelKind, ProblemKind, TestStrategy};
use crate::{plots, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Generate,
    TrainPod,
    TrainDlRom,
    TrainMcRom,
    Evaluate,
    Bench,
    EmitPlots,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::TrainPod => "train-pod",
            Stage::TrainDlRom => "train-dlrom",
            Stage::TrainMcRom => "train-mcrom",
            Stage::Evaluate => "evaluate",
            Stage::Bench => "bench",
            Stage::EmitPlots => "emit-plots",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ArtifactDir {
    pub root: PathBuf,
    pub dir: PathBuf,
}

impl ArtifactDir {
    pub fn new(root: impl Into<PathBuf>, name: &str) -> Self {
        let root = root.into();
        let dir = root.join(name);
        Self { root, dir }
    }

    pub fn data(&self) -> PathBuf {
        self.dir.join("data")
    }

    pub fn models(&self) -> PathBuf {
        self.dir.join("models")
    }

    pub fn reports(&self) -> PathBuf {
        self.dir.join("reports")
    }

    pub fn plots(&self) -> PathBuf {
        self.dir.join("plots")
    }

    pub fn cache(&self) -> PathBuf {
        self.root.join("cache")
    }

    pub fn failed_marker(&self) -> PathBuf {
        self.dir.join("FAILED")
    }

    fn create(&self) -> Result<(), CliError> {
        for d in [self.data(), self.models(), self.reports(), self.plots()] {
            fs::create_dir_all(&d).map_err(|e| CliError::Io(format!("{}: {e}", d.display())))?;
        }
        Ok(())
    }
}

/// Shortest round-trip text of a float.
pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), fmt)
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn missing(path: &Path, stage: Stage) -> CliError {
    CliError::Io(format!("{} not found; run `{}` first", path.display(), stage.name()))
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<FomProblem, CliError> {
    let grid = TimeGrid::new(cfg.t_final, cfg.n_t)?;
    Ok(match cfg.problem {
        ProblemKind::Burgers => FomProblem::Burgers(BurgersConfig::new(Mesh1D::uniform(cfg.n_h, 1.0)?, grid)),
        ProblemKind::Parabolic => FomProblem::Parabolic(ParabolicProblem::new(TriMesh::generate(cfg.mesh_m)?, grid)?),
    })
}

/// Training and test parameter vectors of the experiment.
pub fn parameter_sets(cfg: &ExperimentConfig) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), CliError> {
    let plan = SamplePlan::new(cfg.train_strategy, cfg.n_train, cfg.ranges.clone(), cfg.sample_seed);
    let drawn = sample_parameters(&plan)?;
    Ok(match cfg.test_strategy {
        TestStrategy::Split => {
            let (a, b) = split_indices(drawn.len(), cfg.split_ratio, cfg.sample_seed)?;
            (a.iter().map(|&i| drawn[i].clone()).collect(), b.iter().map(|&i| drawn[i].clone()).collect())
        }
        TestStrategy::Midpoints => {
            if cfg.ranges.len() != 1 {
                return Err(CliError::Config("midpoint test sets need a single parameter".into()));
            }
            let first: Vec<f64> = drawn.iter().map(|p| p[0]).collect();
            let test = midpoints(&first).into_iter().map(|m| vec![m]).collect();
            (drawn, test)
        }
        TestStrategy::Equidistant => {
            let plan = SamplePlan::new(
                mcrom_core::dataset::SampleStrategy::Equidistant,
                cfg.n_test,
                cfg.ranges.clone(),
                cfg.sample_seed,
            );
            (drawn, sample_parameters(&plan)?)
        }
    })
}

/// Content hash of a discretization and a list of parameter vectors.
pub fn snapshot_key(problem: &FomProblem, params: &[Vec<f64>]) -> String {
    let mut h = Sha256::new();
    h.update(problem.describe().as_bytes());
    for mu in params {
        h.update(b";");
        for v in mu {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Solves or loads from `cache`.
pub fn cached_snapshots(problem: &FomProblem, params: &[Vec<f64>], cache: &Path) -> Result<SnapshotSet, CliError> {
    let key = snapshot_key(problem, params);
    let path = cache.join(format!("{key}.bin"));
    if path.exists() {
        match read_snapshots(&path) {
            Ok(set) => {
                info!("snapshot cache hit {}", &key[..12]);
                return Ok(set);
            }
            Err(e) => warn!("ignoring unreadable cache entry {}: {e}", path.display()),
        }
    }
    info!("solving {} full-order trajectories", params.len());
    let set = build_snapshots(problem, params)?;
    fs::create_dir_all(cache)?;
    let tmp = cache.join(format!("{key}.tmp"));
    write_snapshots(&tmp, &set)?;
    fs::rename(&tmp, &path)?;
    Ok(set)
}

fn bands_of(cfg: &ExperimentConfig) -> Result<MagnitudeBands, CliError> {
    if cfg.bands.is_empty() {
        Ok(MagnitudeBands::single())
    } else {
        Ok(MagnitudeBands::new(cfg.bands.clone()).map_err(|e| CliError::Config(e.to_string()))?)
    }
}

/// One experiment bound to its artifact directory.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub art: ArtifactDir,
    pub problem: FomProblem,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig, root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let art = ArtifactDir::new(root, &cfg.name);
        let problem = build_problem(&cfg)?;
        Ok(Self { cfg, art, problem })
    }

    /// The stages `run` executes for the selected models.
    pub fn plan(&self) -> Vec<Stage> {
        let mut s = vec![Stage::Generate];
        for (m, st) in [
            (ModelKind::Pod, Stage::TrainPod),
            (ModelKind::DlRom, Stage::TrainDlRom),
            (ModelKind::McRom, Stage::TrainMcRom),
        ] {
            if self.cfg.has(m) {
                s.push(st);
            }
        }
        s.extend([Stage::Evaluate, Stage::Bench, Stage::EmitPlots]);
        s
    }

    pub fn run_all(&self) -> Result<(), CliError> {
        for stage in self.plan() {
            self.run_stage(stage)?;
        }
        Ok(())
    }

    /// Runs one stage. A failure leaves earlier artifacts in place and writes `FAILED`.
    pub fn run_stage(&self, stage: Stage) -> Result<(), CliError> {
        self.art.create()?;
        fs::write(self.art.dir.join("manifest.txt"), self.cfg.manifest_text())?;
        info!("[{}] stage {}", self.cfg.name, stage.name());
        let out = match stage {
            Stage::Generate => self.generate().map(drop),
            Stage::TrainPod => self.train_pod(),
            Stage::TrainDlRom => self.train_dlrom(),
            Stage::TrainMcRom => self.train_mcrom(),
            Stage::Evaluate => self.evaluate(),
            Stage::Bench => self.bench(),
            Stage::EmitPlots => plots::emit_plots(&self.art.dir).map(drop),
        };
        let marker = self.art.failed_marker();
        match out {
            Ok(()) => {
                if marker.exists() {
                    fs::remove_file(&marker)?;
                }
                Ok(())
            }
            Err(e) => {
                let e = e.context(stage.name());
                let _ = fs::write(&marker, format!("stage = {}\nerror = {e}\n", stage.name()));
                Err(e)
            }
        }
    }

    fn data_key(&self, train: &[Vec<f64>], test: &[Vec<f64>]) -> String {
        format!("{}\n{}\n", snapshot_key(&self.problem, train), snapshot_key(&self.problem, test))
    }

    /// Training and test snapshot sets, regenerated when the stored ones belong to another config.
    pub fn data(&self) -> Result<(SnapshotSet, SnapshotSet), CliError> {
        let (train_p, test_p) = parameter_sets(&self.cfg)?;
        let key = self.data_key(&train_p, &test_p);
        let dir = self.art.data();
        if fs::read_to_string(dir.join("key.txt")).is_ok_and(|k| k == key) {
            if let (Ok(a), Ok(b)) = (read_snapshots(dir.join("train.bin")), read_snapshots(dir.join("test.bin"))) {
                return Ok((a, b));
            }
        }
        self.generate()
    }

    fn generate(&self) -> Result<(SnapshotSet, SnapshotSet), CliError> {
        let (train_p, test_p) = parameter_sets(&self.cfg)?;
        let cache = self.art.cache();
        let mut train = cached_snapshots(&self.problem, &train_p, &cache)?;
        let mut test = cached_snapshots(&self.problem, &test_p, &cache)?;
        let bands = bands_of(&self.cfg)?;
        train.labels = Some(label_by_magnitude(&train, &bands));
        test.labels = Some(label_by_magnitude(&test, &bands));

        let dir = self.art.data();
        write_snapshots(dir.join("train.bin"), &train)?;
        write_snapshots(dir.join("test.bin"), &test)?;
        fs::write(dir.join("key.txt"), self.data_key(&train_p, &test_p))?;

        let rep = self.art.reports();
        write_snapshot_csv(rep.join("snapshots_train.csv"), &train)?;
        write_snapshot_csv(rep.join("snapshots_test.csv"), &test)?;
        let mut w = writer(&rep.join("dataset.csv"))?;
        w.write_record(["set", "parameters", "columns", "n_dofs", "gamma", "log10_gamma"])?;
        let mut c = writer(&rep.join("classes.csv"))?;
        c.write_record(["set", "class", "band", "columns"])?;
        for (name, set, n) in [("train", &train, train_p.len()), ("test", &test, test_p.len())] {
            let g = gamma_severity(set);
            info!("{name}: {n} parameters, {} columns, log10 gamma = {:.3}", set.n_cols(), g.log10());
            w.write_record([
                name.into(),
                n.to_string(),
                set.n_cols().to_string(),
                set.n_dofs().to_string(),
                fmt(g),
                fmt(g.log10()),
            ])?;
            let counts = class_counts(set.labels.as_deref().unwrap_or_default(), bands.n_classes());
            for (k, count) in counts.iter().enumerate() {
                let class = k as u32 + 1;
                c.write_record([name.into(), class.to_string(), bands.describe(class), count.to_string()])?;
            }
        }
        w.flush()?;
        c.flush()?;
        Ok((train, test))
    }

    fn pod_path(&self) -> PathBuf {
        self.art.models().join("pod.bin")
    }

    fn pod_max_n(&self) -> usize {
        self.cfg.pod_sweep.iter().chain(&self.cfg.timing_sweep).copied().max().unwrap_or(1)
    }

    fn train_pod(&self) -> Result<(), CliError> {
        let (train, _) = self.data()?;
        let basis = match pod_offline(&train, self.pod_max_n()) {
            Err(PodError::Truncation { requested, rank }) => {
                warn!("snapshot matrix has rank {rank}; keeping {rank} of {requested} modes");
                pod_offline(&train, rank)?
            }
            other => other?,
        };
        basis.save(self.pod_path())?;
        let mut w = writer(&self.art.reports().join("pod_singular_values.csv"))?;
        w.write_record(["mode", "sigma", "training_projection_error"])?;
        for k in 1..=basis.n() {
            let e = basis.truncate(k)?.projection_error(&train.unscaled().s);
            w.write_record([k.to_string(), fmt(basis.sigma[k - 1]), fmt(e)])?;
        }
        w.flush()?;
        Ok(())
    }

    fn arch(&self, n: usize) -> Result<mcrom_core::nn::arch::Arch, CliError> {
        self.cfg.arch.build(self.problem.n_dofs(), n, self.problem.n_params()).map_err(CliError::Config)
    }

    fn train_dlrom(&self) -> Result<(), CliError> {
        let (train, _) = self.data()?;
        let (model, report) = dlrom_train(&train, &self.arch(self.cfg.latent)?, &self.cfg.train)?;
        model.save(self.art.models().join("dlrom.bin"))?;
        let mut w = loss_writer(&self.art.reports().join("loss_dlrom.csv"))?;
        write_loss(&mut w, 1, &report)?;
        w.flush()?;
        let mut t = training_writer(&self.art.reports().join("training_dlrom.csv"))?;
        t.write_record(training_row(1, train.n_cols(), &report, false))?;
        t.flush()?;
        Ok(())
    }

    fn train_mcrom(&self) -> Result<(), CliError> {
        let (train, _) = self.data()?;
        let mc = McRomConfig { train: self.cfg.train.clone(), transfer: self.cfg.transfer, svm_c: self.cfg.svm_c };
        let (model, log) = mcrom_train(&train, &bands_of(&self.cfg)?, &self.arch(self.cfg.latent)?, &mc)?;
        let dir = self.art.models().join("mcrom");
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        model.save(&dir)?;
        let mut w = loss_writer(&self.art.reports().join("loss_mcrom.csv"))?;
        let mut t = training_writer(&self.art.reports().join("training_mcrom.csv"))?;
        let mut failed = Vec::new();
        for row in &log {
            match &row.status {
                ClassStatus::Trained { report, warm_started } => {
                    write_loss(&mut w, row.class, report)?;
                    t.write_record(training_row(row.class, row.columns, report, *warm_started))?;
                }
                ClassStatus::Empty => t.write_record([
                    row.class.to_string(),
                    "0".into(),
                    "empty".into(),
                    "".into(),
                    "".into(),
                    "".into(),
                    "".into(),
                    "".into(),
                ])?,
                ClassStatus::Failed(msg) => {
                    failed.push(format!("class {}: {msg}", row.class));
                    t.write_record([
                        row.class.to_string(),
                        row.columns.to_string(),
                        "failed".into(),
                        "".into(),
                        "".into(),
                        "".into(),
                        "".into(),
                        "".into(),
                    ])?
                }
            }
        }
        w.flush()?;
        t.flush()?;
        if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::Numerical(failed.join("; ")))
        }
    }

    fn load_pod(&self) -> Result<PodBasis, CliError> {
        let p = self.pod_path();
        if !p.exists() {
            return Err(missing(&p, Stage::TrainPod));
        }
        Ok(PodBasis::load(p)?)
    }

    fn load_dlrom(&self) -> Result<DlRomModel, CliError> {
        let p = self.art.models().join("dlrom.bin");
        if !p.exists() {
            return Err(missing(&p, Stage::TrainDlRom));
        }
        Ok(DlRomModel::load(p)?)
    }

    fn load_mcrom(&self) -> Result<McRomModel, CliError> {
        let p = self.art.models().join("mcrom");
        if !p.join("manifest.txt").exists() {
            return Err(missing(&p, Stage::TrainMcRom));
        }
        Ok(McRomModel::load(p)?)
    }

    /// Reduced online solve for one parameter vector, lifted to every instant.
    fn pod_trajectory(
        &self,
        basis: &PodBasis,
        ops: Option<&ReducedOperatorSet>,
        mu: &[f64],
    ) -> Result<Vec<Vec<f64>>, CliError> {
        let sol = match (&self.problem, ops) {
            (FomProblem::Burgers(cfg), _) => pod_online_burgers(basis, cfg, mu[0])?,
            (FomProblem::Parabolic(p), Some(ops)) => pod_online_parabolic(basis, ops, mu[0], mu[1], &p.grid())?,
            (FomProblem::Parabolic(_), None) => return Err(CliError::Numerical("missing reduced operators".into())),
        };
        Ok(sol.lifted.states)
    }

    fn reduced_ops(&self, basis: &PodBasis) -> Result<Option<ReducedOperatorSet>, CliError> {
        match &self.problem {
            FomProblem::Parabolic(p) => Ok(Some(ReducedOperatorSet::new(basis, p.operators())?)),
            FomProblem::Burgers(_) => Ok(None),
        }
    }

    fn evaluate(&self) -> Result<(), CliError> {
        let (_, test) = self.data()?;
        let test = test.unscaled();
        let bands = bands_of(&self.cfg)?;
        let labels = label_by_magnitude(&test, &bands);
        let trajs = trajectories(&test.p);
        let test_params: Vec<Vec<f64>> =
            trajs.iter().map(|r| test.query(r.start)[..self.problem.n_params()].to_vec()).collect();

        let mut reports: Vec<ErrorReport> = Vec::new();
        let mut class_rows: Vec<(String, usize, Vec<Option<f64>>)> = Vec::new();
        let classes = 1..=bands.n_classes() as u32;
        let mut record = |model: &str, n: usize, pred: &DenseMatrix| -> Result<ErrorReport, CliError> {
            let per_class = classes.clone().map(|c| class_error(&test.p, &test.s, pred, &labels, c)).collect();
            class_rows.push((model.to_string(), n, per_class));
            Ok(ErrorReport::compute(model, n, &self.cfg.name, &test.p, &test.s, pred)?)
        };
        let mut projection: BTreeMap<usize, f64> = BTreeMap::new();
        let mut pod_failures: BTreeMap<usize, String> = BTreeMap::new();
        let mut nets: Vec<(ModelKind, McRomModel)> = Vec::new();

        if self.cfg.has(ModelKind::Pod) {
            let full = self.load_pod()?;
            for &n in &self.cfg.pod_sweep {
                if n > full.n() {
                    pod_failures.insert(n, format!("skipped: basis has rank {}", full.n()));
                    continue;
                }
                let basis = full.truncate(n)?;
                projection.insert(n, basis.projection_error(&test.s));
                let ops = self.reduced_ops(&basis)?;
                let mut pred = DenseMatrix::zeros(test.n_dofs(), test.n_cols());
                let mut failure = None;
                for (r, mu) in trajs.iter().zip(&test_params) {
                    match self.pod_trajectory(&basis, ops.as_ref(), mu) {
                        Ok(states) => {
                            for (j, s) in r.clone().zip(&states) {
                                pred.set_column(j, s);
                            }
                        }
                        Err(e) => {
                            failure = Some(format!("mu = {mu:?}: {e}"));
                            break;
                        }
                    }
                }
                match failure {
                    Some(f) => {
                        warn!("POD n = {n} failed: {f}");
                        pod_failures.insert(n, format!("failed: {f}"));
                    }
                    None => reports.push(record("pod", n, &pred)?),
                }
            }
        }
        if self.cfg.has(ModelKind::DlRom) {
            nets.push((ModelKind::DlRom, McRomModel::single(self.load_dlrom()?)));
        }
        if self.cfg.has(ModelKind::McRom) {
            nets.push((ModelKind::McRom, self.load_mcrom()?));
        }
        let mut routes_mc = None;
        for (kind, model) in &nets {
            let (pred, routes) = model.infer(&test.p)?;
            if *kind == ModelKind::McRom {
                routes_mc = Some(routes);
            }
            reports.push(record(kind.name(), self.cfg.latent, &pred)?);
        }

        let rep = self.art.reports();
        let np = self.problem.n_params();
        let mu_cols = (0..np).map(|d| format!("mu{d}"));

        let mut w = writer(&rep.join("errors_instant.csv"))?;
        let mut header = vec!["model".to_string(), "n".into(), "column".into(), "trajectory".into()];
        header.extend(mu_cols.clone());
        header.extend(["t".into(), "class".into(), "error".into()]);
        w.write_record(&header)?;
        for r in &reports {
            for e in &r.instants {
                let mut rec = vec![r.model.clone(), r.n.to_string(), e.column.to_string(), e.trajectory.to_string()];
                rec.extend(e.query.iter().map(|v| fmt(*v)));
                rec.push(labels[e.column].to_string());
                rec.push(opt(e.value));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;

        let mut w = writer(&rep.join("errors_param.csv"))?;
        let mut header = vec!["model".to_string(), "n".into(), "trajectory".into()];
        header.extend(mu_cols.clone());
        header.push("error".into());
        w.write_record(&header)?;
        for r in &reports {
            for (k, e) in r.per_trajectory.iter().enumerate() {
                let mut rec = vec![r.model.clone(), r.n.to_string(), k.to_string()];
                rec.extend(test_params[k].iter().map(|v| fmt(*v)));
                rec.push(opt(*e));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;

        let mut w = writer(&rep.join("error_vs_n.csv"))?;
        w.write_record([
            "model",
            "n",
            "error_total",
            "excluded_trajectories",
            "excluded_instants",
            "projection_error",
            "status",
        ])?;
        let mut rows: Vec<(String, usize, [String; 5])> = reports
            .iter()
            .map(|r| {
                let proj = if r.model == "pod" { opt(projection.get(&r.n).copied()) } else { String::new() };
                (
                    r.model.clone(),
                    r.n,
                    [
                        fmt(r.total),
                        r.excluded_trajectories.to_string(),
                        r.excluded_instants.to_string(),
                        proj,
                        "ok".into(),
                    ],
                )
            })
            .collect();
        for (n, f) in &pod_failures {
            let total = if f.starts_with("skipped") { String::new() } else { fmt(f64::INFINITY) };
            rows.push((
                "pod".into(),
                *n,
                [total, String::new(), String::new(), opt(projection.get(n).copied()), f.clone()],
            ));
        }
        rows.sort_by(|a, b| (a.0.as_str(), a.1).cmp(&(b.0.as_str(), b.1)));
        for (m, n, rest) in &rows {
            let mut rec = vec![m.clone(), n.to_string()];
            rec.extend(rest.iter().cloned());
            w.write_record(&rec)?;
        }
        w.flush()?;

        let mut w = writer(&rep.join("class_errors.csv"))?;
        w.write_record(["model", "n", "class", "band", "columns", "error"])?;
        let counts = class_counts(&labels, bands.n_classes());
        for (model, n, errs) in &class_rows {
            for (k, e) in errs.iter().enumerate() {
                let class = k as u32 + 1;
                w.write_record([
                    model.clone(),
                    n.to_string(),
                    class.to_string(),
                    bands.describe(class),
                    counts[k].to_string(),
                    opt(*e),
                ])?;
            }
        }
        w.flush()?;

        let mut summary = String::new();
        let _ = writeln!(summary, "preset = {}", self.cfg.preset.name());
        let _ = writeln!(summary, "name = {}", self.cfg.name);
        let _ = writeln!(summary, "fast = {}", self.cfg.fast);
        let _ = writeln!(summary, "n_dofs = {}", self.problem.n_dofs());
        let _ = writeln!(summary, "test_parameters = {}", test_params.len());
        let _ = writeln!(summary, "test_columns = {}", test.n_cols());
        let _ = writeln!(summary, "log10_gamma_test = {}", fmt(gamma_severity(&test).log10()));
        for r in &reports {
            let _ = writeln!(summary, "error_total.{}.n{} = {}", r.model, r.n, fmt(r.total));
        }
        for (n, f) in &pod_failures {
            let _ = writeln!(summary, "error_total.pod.n{n} = {}", f.split(':').next().unwrap_or("failed"));
        }

        if let Some(routes) = routes_mc {
            let k = bands.n_classes();
            let mut confusion = vec![vec![0usize; k]; k];
            for (t, p) in labels.iter().zip(&routes) {
                confusion[*t as usize - 1][*p as usize - 1] += 1;
            }
            let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
            let accuracy = correct as f64 / labels.len() as f64;
            info!("classifier accuracy {accuracy:.4}");
            let mut w = writer(&rep.join("classifier.csv"))?;
            w.write_record(["true_class", "predicted_class", "count"])?;
            for (i, row) in confusion.iter().enumerate() {
                for (j, c) in row.iter().enumerate() {
                    w.write_record([(i + 1).to_string(), (j + 1).to_string(), c.to_string()])?;
                }
            }
            w.flush()?;
            let _ = writeln!(summary, "svm_accuracy = {}", fmt(accuracy));
        }

        let reference = ["mcrom", "dlrom"].iter().find_map(|m| reports.iter().find(|r| r.model == *m));
        if let (Some(reference), true) = (reference, self.cfg.has(ModelKind::Pod)) {
            let pod: Vec<(usize, f64)> = self
                .cfg
                .pod_sweep
                .iter()
                .filter(|&&n| !pod_failures.get(&n).is_some_and(|f| f.starts_with("skipped")))
                .map(|&n| (n, reports.iter().find(|r| r.model == "pod" && r.n == n).map_or(f64::INFINITY, |r| r.total)))
                .collect();
            let crossover = crossover_n(&pod, reference.total);
            let _ = writeln!(
                summary,
                "pod_crossover_vs_{} = {}",
                reference.model,
                crossover.map_or("none".to_string(), |n| n.to_string())
            );
        }

        if !self.cfg.probe.is_empty() {
            self.probe(&nets, &mut summary)?;
        }
        fs::write(rep.join("summary.txt"), summary)?;
        Ok(())
    }

    fn probe(&self, nets: &[(ModelKind, McRomModel)], summary: &mut String) -> Result<(), CliError> {
        let grid = self.problem.grid();
        let mut w = writer(&self.art.reports().join("probe.csv"))?;
        let mut header = vec!["model".to_string(), "n".into()];
        header.extend((0..self.problem.n_params()).map(|d| format!("mu{d}")));
        header.extend(["t".into(), "routed_class".into(), "error".into()]);
        w.write_record(&header)?;
        let pod = if self.cfg.has(ModelKind::Pod) { Some(self.load_pod()?) } else { None };
        let truth = cached_snapshots(&self.problem, &self.cfg.probe, &self.art.cache())?;
        let n_t = grid.n_steps() + 1;
        for (q, mu) in self.cfg.probe.iter().enumerate() {
            let steps: Vec<usize> = self.cfg.probe_times.iter().map(|&t| grid.nearest_step(t)).collect();
            let mut rows: Vec<(String, usize, usize, Option<u32>, Option<f64>)> = Vec::new();
            for (kind, model) in nets {
                let mut p = DenseMatrix::zeros(mu.len() + 1, steps.len());
                for (j, &k) in steps.iter().enumerate() {
                    let mut col = mu.clone();
                    col.push(grid.time(k));
                    p.set_column(j, &col);
                }
                let (pred, routes) = model.infer(&p)?;
                for (j, &k) in steps.iter().enumerate() {
                    let e = error_single(&truth.column(q * n_t + k), &pred.column(j)).ok();
                    rows.push((kind.name().into(), self.cfg.latent, k, Some(routes[j]), e));
                }
            }
            if let Some(full) = &pod {
                for &n in self.cfg.pod_sweep.iter().filter(|&&n| n <= full.n()) {
                    let basis = full.truncate(n)?;
                    let ops = self.reduced_ops(&basis)?;
                    let states = self.pod_trajectory(&basis, ops.as_ref(), mu).ok();
                    for &k in &steps {
                        let e = states.as_ref().and_then(|s| error_single(&truth.column(q * n_t + k), &s[k]).ok());
                        rows.push(("pod".into(), n, k, None, e));
                    }
                }
            }
            for (model, n, k, route, e) in rows {
                let mut rec = vec![model.clone(), n.to_string()];
                rec.extend(mu.iter().map(|v| fmt(*v)));
                rec.extend([fmt(grid.time(k)), route.map_or(String::new(), |c| c.to_string()), opt(e)]);
                w.write_record(&rec)?;
                if model != "pod" {
                    let key = mu.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(":");
                    let _ = writeln!(summary, "probe.{model}.{key}.t{} = {}", fmt(grid.time(k)), opt(e));
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Online timing of FOM, POD and the network surrogate for one test parameter.
    fn bench(&self) -> Result<(), CliError> {
        let (train, test) = self.data()?;
        let trajs = trajectories(&test.p);
        let np = self.problem.n_params();
        let mu: Vec<f64> = test.query(trajs[trajs.len() / 2].start)[..np].to_vec();
        let reps = self.cfg.timing_reps;
        let nd = self.problem.n_dofs();

        self.problem.solve(&mu)?;
        let mut pods = Vec::new();
        if self.cfg.has(ModelKind::Pod) {
            let full = self.load_pod()?;
            for &n in &self.cfg.timing_sweep {
                if n > full.n() {
                    warn!("POD timing at n = {n} skipped: basis has rank {}", full.n());
                    continue;
                }
                let basis = full.truncate(n)?;
                let ops = self.reduced_ops(&basis)?;
                self.pod_trajectory(&basis, ops.as_ref(), &mu).map_err(|e| e.context(&format!("POD n = {n}")))?;
                pods.push((n, basis, ops));
            }
        }

        let kind = if self.cfg.has(ModelKind::McRom) {
            Some(ModelKind::McRom)
        } else if self.cfg.has(ModelKind::DlRom) {
            Some(ModelKind::DlRom)
        } else {
            None
        };
        let mut nets = Vec::new();
        let mut query = mu.clone();
        query.push(self.problem.grid().t_final());
        let q = DenseMatrix::from_vec(np + 1, 1, query)?;
        if let Some(kind) = kind {
            let bands = bands_of(&self.cfg)?;
            let classifier = match (kind, self.load_mcrom()) {
                (ModelKind::McRom, Ok(m)) => Some(m.classifier),
                (ModelKind::McRom, Err(_)) => {
                    let raw = train.unscaled();
                    Some(svm_train(&raw.p, &label_by_magnitude(&raw, &bands), self.cfg.svm_c)?)
                }
                _ => None,
            };
            let scaling = train.scaling.unwrap_or(mcrom_core::dataset::Scaling { min: 0.0, max: 1.0 });
            let norm = ParamNorm::fit(&train.p);
            for &n in &self.cfg.timing_sweep {
                let arch = self.arch(n)?;
                let net =
                    |c: u32| DlRomModel::init(&arch, scaling, norm.clone(), self.cfg.train.seed.wrapping_add(c as u64));
                let model = match &classifier {
                    Some(cl) => McRomModel {
                        bands: bands.clone(),
                        classifier: cl.clone(),
                        subnets: (1..=bands.n_classes() as u32)
                            .map(|c| net(c).map(|m| (c, m)))
                            .collect::<Result<_, _>>()?,
                    },
                    None => McRomModel::single(net(1)?),
                };
                model.infer(&q)?;
                nets.push((kind.name(), n, model));
            }
        }

        let mut queries: Vec<TimedQuery> = vec![(
            "fom".into(),
            nd,
            nd,
            Box::new(|| {
                std::hint::black_box(self.problem.solve(&mu).ok());
            }),
        )];
        for (n, basis, ops) in &pods {
            let mu = &mu;
            queries.push((
                "pod".into(),
                *n,
                nd,
                Box::new(move || {
                    std::hint::black_box(self.pod_trajectory(basis, ops.as_ref(), mu).ok());
                }),
            ));
        }
        for (name, n, model) in &nets {
            let q = &q;
            queries.push((
                name.to_string(),
                *n,
                nd,
                Box::new(move || {
                    std::hint::black_box(model.infer(q).ok());
                }),
            ));
        }
        let out = time_interleaved(&mut queries, reps);
        drop(queries);

        let rep = self.art.reports();
        let mut w = writer(&rep.join("timing.csv"))?;
        w.write_record(["kind", "n", "n_dofs", "rep", "seconds"])?;
        let mut s = writer(&rep.join("timing_summary.csv"))?;
        s.write_record(["kind", "n", "n_dofs", "reps", "mean_seconds", "std_seconds"])?;
        for r in &out {
            for (i, t) in r.samples.iter().enumerate() {
                w.write_record([r.kind.clone(), r.n.to_string(), r.n_dofs.to_string(), i.to_string(), fmt(*t)])?;
            }
            s.write_record([
                r.kind.clone(),
                r.n.to_string(),
                r.n_dofs.to_string(),
                r.samples.len().to_string(),
                fmt(r.mean),
                fmt(r.std),
            ])?;
            info!("timing {} n={}: {:.3e} s", r.kind, r.n, r.mean);
        }
        w.flush()?;
        s.flush()?;
        Ok(())
    }
}

/// Smallest `n` from which POD stays below `reference` for every larger `n` of the sweep.
pub fn crossover_n(pod: &[(usize, f64)], reference: f64) -> Option<usize> {
    let mut sorted = pod.to_vec();
    sorted.sort_by_key(|p| p.0);
    let mut best = None;
    for &(n, e) in sorted.iter().rev() {
        if e < reference {
            best = Some(n);
        } else {
            break;
        }
    }
    best
}

fn loss_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    let mut w = writer(path)?;
    w.write_record([
        "class",
        "epoch",
        "lr",
        "train_rec",
        "train_latent",
        "train_total",
        "val_rec",
        "val_latent",
        "val_total",
    ])?;
    Ok(w)
}

fn write_loss(w: &mut csv::Writer<fs::File>, class: u32, r: &LossReport) -> Result<(), CliError> {
    for e in &r.epochs {
        w.write_record([
            class.to_string(),
            e.epoch.to_string(),
            fmt(e.lr),
            fmt(e.train.h),
            fmt(e.train.n),
            fmt(e.train.total(r.alpha, r.beta)),
            fmt(e.val.h),
            fmt(e.val.n),
            fmt(e.val.total(r.alpha, r.beta)),
        ])?;
    }
    Ok(())
}

fn training_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    let mut w = writer(path)?;
    w.write_record([
        "class",
        "columns",
        "status",
        "epochs",
        "best_epoch",
        "best_val",
        "stopped_early",
        "warm_started",
    ])?;
    Ok(w)
}

fn training_row(class: u32, columns: usize, r: &LossReport, warm: bool) -> [String; 8] {
    [
        class.to_string(),
        columns.to_string(),
        "trained".into(),
        r.epochs.len().to_string(),
        r.best_epoch.to_string(),
        fmt(r.best_val),
        r.stopped_early.to_string(),
        warm.to_string(),
    ]
}
