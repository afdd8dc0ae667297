//! Encoder / parameter map / decoder reduced model with joint training.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{scale_minmax, split_indices, DatasetError, Scaling, SnapshotSet};
use crate::linalg::DenseMatrix;
use crate::nn::arch::{Arch, ArchPreset};
use crate::nn::{adam_step, AdamState, Network, NnError, Tensor, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum DlRomError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("bad query: {0}")]
    Query(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-row min-max map of the parameter matrix; constant rows map to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamNorm {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ParamNorm {
    pub fn fit(p: &DenseMatrix) -> Self {
        let (min, max) = (0..p.rows())
            .map(|i| p.row(i).iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))))
            .unzip();
        Self { min, max }
    }

    pub fn apply(&self, row: usize, x: f64) -> f64 {
        let w = self.max[row] - self.min[row];
        if w > 0.0 {
            (x - self.min[row]) / w
        } else {
            0.0
        }
    }

    /// Normalized queries as a `(B, rows)` tensor.
    pub fn tensor(&self, p: &DenseMatrix) -> Tensor {
        let (r, b) = p.shape();
        let data = (0..b).flat_map(|j| (0..r).map(move |i| (i, j))).map(|(i, j)| self.apply(i, p[(i, j)])).collect();
        Tensor::new(vec![b, r], data).expect("sized")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DlRomModel {
    pub arch: Arch,
    pub encoder: Network,
    pub decoder: Network,
    pub psi: Network,
    pub scaling: Scaling,
    pub param_norm: ParamNorm,
}

impl DlRomModel {
    /// Fresh Kaiming-initialized networks.
    pub fn init(arch: &Arch, scaling: Scaling, param_norm: ParamNorm, seed: u64) -> Result<Self, DlRomError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            arch: arch.clone(),
            encoder: Network::with_rng(vec![arch.n_dofs], arch.encoder.clone(), &mut rng)?,
            decoder: Network::with_rng(vec![arch.latent], arch.decoder.clone(), &mut rng)?,
            psi: Network::with_rng(vec![arch.n_params + 1], arch.psi.clone(), &mut rng)?,
            scaling,
            param_norm,
        })
    }

    pub fn latent(&self) -> usize {
        self.arch.latent
    }

    pub fn n_dofs(&self) -> usize {
        self.arch.n_dofs
    }

    fn check_queries(&self, q: &DenseMatrix) -> Result<(), DlRomError> {
        if q.rows() != self.arch.n_params + 1 {
            return Err(DlRomError::Query(format!(
                "{} query rows, model expects {}",
                q.rows(),
                self.arch.n_params + 1
            )));
        }
        Ok(())
    }

    /// `Ψ(t, μ)` for every query column, as a `(B, n)` tensor.
    pub fn latent_map(&self, queries: &DenseMatrix) -> Result<Tensor, DlRomError> {
        self.check_queries(queries)?;
        Ok(self.psi.predict(&self.param_norm.tensor(queries))?)
    }

    /// Unscaled predictions, one column per query.
    pub fn infer(&self, queries: &DenseMatrix) -> Result<DenseMatrix, DlRomError> {
        let z = self.latent_map(queries)?;
        let y = self.decoder.predict(&z)?;
        let (b, nh) = (queries.cols(), self.n_dofs());
        Ok(DenseMatrix::from_fn(nh, b, |i, j| self.scaling.invert(y.data()[j * nh + i])))
    }

    /// Latent code of scaled states given as columns.
    pub fn encode(&self, states: &DenseMatrix) -> Result<DenseMatrix, DlRomError> {
        if states.rows() != self.n_dofs() {
            return Err(DlRomError::Query(format!("state length {} != {}", states.rows(), self.n_dofs())));
        }
        let x = Tensor::new(vec![states.cols(), states.rows()], states.transpose().into_vec())?;
        let e = self.encoder.predict(&x)?;
        let n = self.latent();
        Ok(DenseMatrix::from_fn(n, states.cols(), |i, j| e.data()[j * n + i]))
    }

    /// Copies all weights from `other` when the layouts agree.
    pub fn warm_start_from(&mut self, other: &DlRomModel) -> bool {
        let same = self.encoder.layers() == other.encoder.layers()
            && self.decoder.layers() == other.decoder.layers()
            && self.psi.layers() == other.psi.layers();
        if same {
            self.encoder.params.clone_from(&other.encoder.params);
            self.decoder.params.clone_from(&other.decoder.params);
            self.psi.params.clone_from(&other.psi.params);
        }
        same
    }

    pub fn write(&self, w: &mut impl Write) -> Result<(), DlRomError> {
        w.write_all(b"MCDL")?;
        w.write_all(&1u32.to_le_bytes())?;
        let name = self.arch.preset.name().as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        for d in [self.arch.n_dofs, self.arch.latent, self.arch.n_params] {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let pn = &self.param_norm;
        for v in [self.scaling.min, self.scaling.max].iter().chain(&pn.min).chain(&pn.max) {
            w.write_all(&v.to_le_bytes())?;
        }
        self.encoder.write_weights(w)?;
        self.decoder.write_weights(w)?;
        self.psi.write_weights(w)?;
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self, DlRomError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"MCDL" || read_u32(r)? != 1 {
            return Err(DlRomError::Format("not a model file".into()));
        }
        let len = read_u32(r)? as usize;
        if len > 64 {
            return Err(DlRomError::Format("architecture name too long".into()));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let preset: ArchPreset = String::from_utf8_lossy(&name).parse().map_err(DlRomError::Format)?;
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *d = u64::from_le_bytes(b) as usize;
        }
        if dims.iter().any(|&d| d > 1 << 24) {
            return Err(DlRomError::Format(format!("implausible dims {dims:?}")));
        }
        let arch = preset.build(dims[0], dims[1], dims[2]).map_err(DlRomError::Format)?;
        let mut f = vec![0.0; 2 + 2 * (dims[2] + 1)];
        for v in &mut f {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        let rows = dims[2] + 1;
        let scaling = Scaling { min: f[0], max: f[1] };
        let param_norm = ParamNorm { min: f[2..2 + rows].to_vec(), max: f[2 + rows..].to_vec() };
        let mut model = Self::init(&arch, scaling, param_norm, 0)?;
        model.encoder.read_weights(r)?;
        model.decoder.read_weights(r)?;
        model.psi.read_weights(r)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DlRomError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DlRomError> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, DlRomError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Mean per-sample squared norms of the two loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub h: f64,
    pub n: f64,
}

impl LossTerms {
    pub fn total(&self, alpha: f64, beta: f64) -> f64 {
        alpha * self.h + beta * self.n
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train: LossTerms,
    pub val: LossTerms,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub alpha: f64,
    pub beta: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were returned.
    pub best_epoch: usize,
    pub best_val: f64,
    pub stopped_early: bool,
}

impl LossReport {
    pub fn final_train(&self) -> LossTerms {
        self.epochs.last().map(|r| r.train).unwrap_or_default()
    }

    /// First epoch whose validation total reaches `target`.
    pub fn epochs_to_reach(&self, target: f64) -> Option<usize> {
        self.epochs.iter().find(|r| r.val.total(self.alpha, self.beta) <= target).map(|r| r.epoch)
    }
}

/// Samples-major copies of the training data.
struct Batches {
    nh: usize,
    rows: usize,
    u: Vec<f64>,
    q: Vec<f64>,
}

impl Batches {
    fn new(s: &DenseMatrix, q: &Tensor) -> Self {
        Self { nh: s.rows(), rows: q.shape()[1], u: s.transpose().into_vec(), q: q.data().to_vec() }
    }

    fn gather(&self, idx: &[usize]) -> (Tensor, Tensor) {
        let mut u = Vec::with_capacity(idx.len() * self.nh);
        let mut q = Vec::with_capacity(idx.len() * self.rows);
        for &j in idx {
            u.extend_from_slice(&self.u[j * self.nh..(j + 1) * self.nh]);
            q.extend_from_slice(&self.q[j * self.rows..(j + 1) * self.rows]);
        }
        (
            Tensor::new(vec![idx.len(), self.nh], u).expect("sized"),
            Tensor::new(vec![idx.len(), self.rows], q).expect("sized"),
        )
    }
}

struct Step {
    terms: LossTerms,
    grads: Option<[Vec<f64>; 3]>,
}

fn evaluate(
    model: &DlRomModel,
    u: &Tensor,
    q: &Tensor,
    alpha: f64,
    beta: f64,
    grads: bool,
) -> Result<Step, DlRomError> {
    let b = u.batch() as f64;
    let (z, tz) = model.psi.forward(q)?;
    let (y, ty) = model.decoder.forward(&z)?;
    let (e, te) = model.encoder.forward(u)?;
    let dh: Vec<f64> = y.data().iter().zip(u.data()).map(|(a, b)| a - b).collect();
    let dn: Vec<f64> = z.data().iter().zip(e.data()).map(|(a, b)| a - b).collect();
    let terms =
        LossTerms { h: dh.iter().map(|v| v * v).sum::<f64>() / b, n: dn.iter().map(|v| v * v).sum::<f64>() / b };
    if !grads {
        return Ok(Step { terms, grads: None });
    }
    let up_y = Tensor::new(y.shape().to_vec(), dh.iter().map(|v| 2.0 * alpha * v / b).collect())?;
    let (g_dec, dz) = model.decoder.backward(&ty, &up_y)?;
    let up_z: Vec<f64> = dz.data().iter().zip(&dn).map(|(a, d)| a + 2.0 * beta * d / b).collect();
    let (g_psi, _) = model.psi.backward(&tz, &Tensor::new(z.shape().to_vec(), up_z)?)?;
    let up_e = Tensor::new(e.shape().to_vec(), dn.iter().map(|d| -2.0 * beta * d / b).collect())?;
    let (g_enc, _) = model.encoder.backward(&te, &up_e)?;
    Ok(Step { terms, grads: Some([g_enc, g_dec, g_psi]) })
}

/// Batch loss `(1/B) Σ α‖u − dec(Ψ(q))‖² + β‖Ψ(q) − enc(u)‖²` for scaled
/// `states` and raw `queries` (one column each), with parameter gradients of
/// the encoder, decoder and Ψ in that order.
pub fn loss_and_gradients(
    model: &DlRomModel,
    states: &DenseMatrix,
    queries: &DenseMatrix,
    alpha: f64,
    beta: f64,
) -> Result<(LossTerms, [Vec<f64>; 3]), DlRomError> {
    model.check_queries(queries)?;
    if states.rows() != model.n_dofs() || states.cols() != queries.cols() {
        return Err(DlRomError::Query(format!("states {:?} do not match {} queries", states.shape(), queries.cols())));
    }
    let u = Tensor::new(vec![states.cols(), states.rows()], states.transpose().into_vec())?;
    let step = evaluate(model, &u, &model.param_norm.tensor(queries), alpha, beta, true)?;
    Ok((step.terms, step.grads.expect("requested")))
}

/// Loss terms over all columns of `idx`, evaluated in chunks.
fn mean_terms(model: &DlRomModel, data: &Batches, idx: &[usize], chunk: usize) -> Result<LossTerms, DlRomError> {
    let mut acc = LossTerms::default();
    for c in idx.chunks(chunk.max(1)) {
        let (u, q) = data.gather(c);
        let t = evaluate(model, &u, &q, 1.0, 1.0, false)?.terms;
        acc.h += t.h * c.len() as f64;
        acc.n += t.n * c.len() as f64;
    }
    let n = idx.len().max(1) as f64;
    Ok(LossTerms { h: acc.h / n, n: acc.n / n })
}

/// Columns held out for validation. Datasets under five columns are validated on themselves.
const MIN_SPLIT: usize = 5;
const TRAIN_RATIO: f64 = 0.8;

/// Trains from Kaiming initialization.
pub fn dlrom_train(set: &SnapshotSet, arch: &Arch, cfg: &TrainConfig) -> Result<(DlRomModel, LossReport), DlRomError> {
    dlrom_train_from(set, arch, cfg, None)
}

/// Trains on `set` (scaled to `[0, 1]` here when it is not already), optionally
/// warm-started from `init` when its layout matches `arch`.
pub fn dlrom_train_from(
    set: &SnapshotSet,
    arch: &Arch,
    cfg: &TrainConfig,
    init: Option<&DlRomModel>,
) -> Result<(DlRomModel, LossReport), DlRomError> {
    cfg.validate()?;
    if arch.n_dofs != set.n_dofs() || arch.n_params != set.n_params() {
        return Err(DlRomError::Config(format!(
            "architecture expects {} dofs and {} parameters, data has {} and {}",
            arch.n_dofs,
            arch.n_params,
            set.n_dofs(),
            set.n_params()
        )));
    }
    let scaled = if set.scaling.is_some() { set.clone() } else { scale_minmax(set)? };
    let scaling = scaled.scaling.expect("scaled");
    let norm = ParamNorm::fit(&scaled.p);
    let mut model = DlRomModel::init(arch, scaling, norm.clone(), cfg.seed)?;
    if let Some(src) = init {
        if !model.warm_start_from(src) {
            log::warn!("warm start skipped: layouts differ");
        }
    }
    let data = Batches::new(&scaled.s, &norm.tensor(&scaled.p));

    let n = scaled.n_cols();
    let (train_idx, val_idx) = if n < MIN_SPLIT {
        ((0..n).collect::<Vec<_>>(), (0..n).collect())
    } else {
        split_indices(n, TRAIN_RATIO, cfg.seed)?
    };

    let (alpha, beta) = (cfg.alpha, cfg.beta);
    let sched = cfg.schedule();
    let mut opt = [&model.encoder, &model.decoder, &model.psi].map(|net| AdamState::new(net.n_params(), cfg.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order = train_idx.clone();
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut since_best = 0;
    let mut report =
        LossReport { alpha, beta, epochs: Vec::new(), best_epoch: 0, best_val: f64::INFINITY, stopped_early: false };

    for epoch in 0..cfg.epochs {
        let lr = sched.rate(epoch);
        opt.iter_mut().for_each(|o| o.lr = lr);
        order.shuffle(&mut rng);
        let mut acc = LossTerms::default();
        for batch in order.chunks(cfg.batch_size) {
            let (u, q) = data.gather(batch);
            let step = evaluate(&model, &u, &q, alpha, beta, true)?;
            let total = step.terms.total(alpha, beta);
            if !total.is_finite() {
                return Err(DlRomError::Divergence { epoch, loss: total });
            }
            acc.h += step.terms.h * batch.len() as f64;
            acc.n += step.terms.n * batch.len() as f64;
            let [ge, gd, gp] = step.grads.expect("requested");
            adam_step(&mut opt[0], &mut model.encoder.params, &ge);
            adam_step(&mut opt[1], &mut model.decoder.params, &gd);
            adam_step(&mut opt[2], &mut model.psi.params, &gp);
        }
        let m = order.len() as f64;
        let train = LossTerms { h: acc.h / m, n: acc.n / m };
        let val = mean_terms(&model, &data, &val_idx, 256)?;
        let v = val.total(alpha, beta);
        if !v.is_finite() {
            return Err(DlRomError::Divergence { epoch, loss: v });
        }
        report.epochs.push(EpochRecord { epoch, lr, train, val });
        if v < best.0 {
            best = (v, epoch, model.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    log::info!("trained {} epochs, best validation {:.3e} at epoch {}", report.epochs.len(), best.0, best.1);
    report.best_epoch = best.1;
    report.best_val = best.0;
    Ok((best.2, report))
}
