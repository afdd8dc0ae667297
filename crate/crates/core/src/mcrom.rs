//! Magnitude-classified reduced model: an SVM dispatcher over per-class subnets.

use std::collections::BTreeMap;
use std::path::Path;

use crate::dataset::{class_counts, label_by_magnitude, DatasetError, MagnitudeBands, SnapshotSet};
use crate::dlrom::{dlrom_train_from, DlRomError, DlRomModel, LossReport};
use crate::linalg::DenseMatrix;
use crate::nn::arch::Arch;
use crate::nn::TrainConfig;
use crate::svm::{svm_train, SvmError, SvmModel};

#[derive(Debug, thiserror::Error)]
pub enum McRomError {
    #[error("query {column} routed to class {class}, which has no subnet")]
    Routing { column: usize, class: u32 },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    DlRom(#[from] DlRomError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct McRomModel {
    pub bands: MagnitudeBands,
    pub classifier: SvmModel,
    pub subnets: BTreeMap<u32, DlRomModel>,
}

/// What happened to one class during offline training.
#[derive(Clone, Debug)]
pub enum ClassStatus {
    Trained { report: LossReport, warm_started: bool },
    Empty,
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct ClassTraining {
    pub class: u32,
    pub columns: usize,
    pub status: ClassStatus,
}

/// Options of [`mcrom_train`].
#[derive(Clone, Debug)]
pub struct McRomConfig {
    pub train: TrainConfig,
    pub transfer: bool,
    pub svm_c: f64,
}

/// Labels the data, fits the classifier, then trains one subnet per class
/// from class 1 downwards. With `transfer`, each subnet starts from the last
/// trained one.
pub fn mcrom_train(
    set: &SnapshotSet,
    bands: &MagnitudeBands,
    arch: &Arch,
    cfg: &McRomConfig,
) -> Result<(McRomModel, Vec<ClassTraining>), McRomError> {
    let raw = set.unscaled();
    let labels = label_by_magnitude(&raw, bands);
    let counts = class_counts(&labels, bands.n_classes());
    log::info!("class populations {counts:?}");
    let classifier = svm_train(&raw.p, &labels, cfg.svm_c)?;

    let mut subnets = BTreeMap::new();
    let mut log_rows = Vec::new();
    let mut previous: Option<DlRomModel> = None;
    for class in 1..=bands.n_classes() as u32 {
        let idx: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] == class).collect();
        if idx.is_empty() {
            log::warn!("class {class} has no training data, skipped");
            log_rows.push(ClassTraining { class, columns: 0, status: ClassStatus::Empty });
            continue;
        }
        let mut part = raw.select(&idx);
        part.labels = None;
        let train_cfg = TrainConfig { seed: cfg.train.seed.wrapping_add(class as u64), ..cfg.train.clone() };
        let init = if cfg.transfer { previous.as_ref() } else { None };
        match dlrom_train_from(&part, arch, &train_cfg, init) {
            Ok((model, report)) => {
                log_rows.push(ClassTraining {
                    class,
                    columns: idx.len(),
                    status: ClassStatus::Trained { report, warm_started: init.is_some() },
                });
                previous = Some(model.clone());
                subnets.insert(class, model);
            }
            Err(e) => {
                log::error!("class {class} failed: {e}");
                log_rows.push(ClassTraining { class, columns: idx.len(), status: ClassStatus::Failed(e.to_string()) });
            }
        }
    }
    Ok((McRomModel { bands: bands.clone(), classifier, subnets }, log_rows))
}

impl McRomModel {
    /// Wraps a single trained model with a constant classifier.
    pub fn single(model: DlRomModel) -> Self {
        let d = model.arch.n_params + 1;
        let classifier = SvmModel {
            classes: vec![1],
            gamma: 1.0,
            c: 1.0,
            mean: vec![0.0; d],
            std: vec![1.0; d],
            machines: Vec::new(),
        };
        Self { bands: MagnitudeBands::single(), classifier, subnets: BTreeMap::from([(1, model)]) }
    }

    /// Predicted class of every query column.
    pub fn route(&self, queries: &DenseMatrix) -> Result<Vec<u32>, McRomError> {
        Ok(self.classifier.predict_columns(queries)?)
    }

    /// Routes each column, then decodes it with that class's subnet.
    pub fn infer(&self, queries: &DenseMatrix) -> Result<(DenseMatrix, Vec<u32>), McRomError> {
        let routes = self.route(queries)?;
        let n_dofs = self.subnets.values().next().map_or(0, DlRomModel::n_dofs);
        let mut out = DenseMatrix::zeros(n_dofs, queries.cols());
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (j, &c) in routes.iter().enumerate() {
            groups.entry(c).or_default().push(j);
        }
        for (class, cols) in groups {
            let net = self.subnets.get(&class).ok_or(McRomError::Routing { column: cols[0], class })?;
            let pred = net.infer(&queries.select_columns(&cols))?;
            for (k, &j) in cols.iter().enumerate() {
                out.set_column(j, &pred.column(k));
            }
        }
        Ok((out, routes))
    }

    /// Writes `manifest.txt`, `classifier.svm` and one `subnet-<c>.bin` per class.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), McRomError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.classifier.save(dir.join("classifier.svm"))?;
        let mut m = String::from("mcrom-manifest 1\n");
        m += &format!(
            "bands {}\nclassifier classifier.svm\n",
            self.bands.edges().iter().map(|e| format!("{e:?}")).collect::<Vec<_>>().join(" ")
        );
        for (c, net) in &self.subnets {
            let name = format!("subnet-{c}.bin");
            net.save(dir.join(&name))?;
            m += &format!("subnet {c} {name}\n");
        }
        std::fs::write(dir.join("manifest.txt"), m)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, McRomError> {
        let dir = dir.as_ref();
        let text = std::fs::read_to_string(dir.join("manifest.txt"))?;
        let bad = |s: &str| McRomError::Manifest(s.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("mcrom-manifest 1") {
            return Err(bad("missing header"));
        }
        let mut bands = None;
        let mut classifier = None;
        let mut subnets = BTreeMap::new();
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                ["bands", edges @ ..] => {
                    let e = edges
                        .iter()
                        .map(|s| s.parse::<f64>().map_err(|_| bad("band edge")))
                        .collect::<Result<Vec<_>, _>>()?;
                    bands = Some(MagnitudeBands::new(e)?);
                }
                ["classifier", file] => classifier = Some(SvmModel::load(dir.join(file))?),
                ["subnet", c, file] => {
                    let c: u32 = c.parse().map_err(|_| bad("class id"))?;
                    subnets.insert(c, DlRomModel::load(dir.join(file))?);
                }
                [] => {}
                _ => return Err(McRomError::Manifest(format!("unrecognized line `{line}`"))),
            }
        }
        Ok(Self {
            bands: bands.ok_or_else(|| bad("no bands"))?,
            classifier: classifier.ok_or_else(|| bad("no classifier"))?,
            subnets,
        })
    }
}
