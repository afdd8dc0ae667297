use crate::dataset::DatasetError;
use crate::dlrom::DlRomError;
use crate::fom::FomError;
use crate::linalg::LinalgError;
use crate::mcrom::McRomError;
use crate::metrics::MetricsError;
use crate::nn::NnError;
use crate::pod::PodError;
use crate::svm::SvmError;

/// Top-level error of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fom(#[from] FomError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Pod(#[from] PodError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    DlRom(#[from] DlRomError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    McRom(#[from] McRomError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
