//! Experiment runner: presets, config files, artifact directories and plot data.

pub mod app;
pub mod config;
pub mod pipeline;
pub mod plots;

use mcrom_core::dataset::DatasetError;
use mcrom_core::dlrom::DlRomError;
use mcrom_core::mcrom::McRomError;
use mcrom_core::nn::NnError;
use mcrom_core::pod::PodError;
use mcrom_core::svm::SvmError;

pub use config::{ExperimentConfig, ModelKind, Preset};
pub use pipeline::{ArtifactDir, Stage};

/// Environment variable naming the output root.
pub const OUTPUT_ENV: &str = "MCROM_OUTPUT";
pub const DEFAULT_OUTPUT: &str = "runs";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    /// Prefixes the message, keeping the kind.
    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Config,
    Numerical,
    Io,
}

fn make(kind: Kind, msg: String) -> CliError {
    match kind {
        Kind::Config => CliError::Config(msg),
        Kind::Numerical => CliError::Numerical(msg),
        Kind::Io => CliError::Io(msg),
    }
}

fn dataset_kind(e: &DatasetError) -> Kind {
    match e {
        DatasetError::Plan(_) | DatasetError::Split(_) => Kind::Config,
        DatasetError::Format(_) | DatasetError::Io(_) | DatasetError::Csv(_) => Kind::Io,
        _ => Kind::Numerical,
    }
}

fn nn_kind(e: &NnError) -> Kind {
    match e {
        NnError::Config(_) => Kind::Config,
        NnError::Checkpoint(_) | NnError::Io(_) => Kind::Io,
        _ => Kind::Numerical,
    }
}

fn dlrom_kind(e: &DlRomError) -> Kind {
    match e {
        DlRomError::Config(_) => Kind::Config,
        DlRomError::Format(_) | DlRomError::Io(_) => Kind::Io,
        DlRomError::Nn(e) => nn_kind(e),
        DlRomError::Dataset(e) => dataset_kind(e),
        _ => Kind::Numerical,
    }
}

fn svm_kind(e: &SvmError) -> Kind {
    match e {
        SvmError::Config(_) => Kind::Config,
        SvmError::Format(_) | SvmError::Io(_) => Kind::Io,
        _ => Kind::Numerical,
    }
}

macro_rules! numeric_from {
    ($($t:ty => $f:expr),* $(,)?) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                let kind: fn(&$t) -> Kind = $f;
                make(kind(&e), e.to_string())
            }
        }
    )*};
}

numeric_from! {
    DatasetError => dataset_kind,
    NnError => nn_kind,
    DlRomError => dlrom_kind,
    SvmError => svm_kind,
    McRomError => |e| match e {
        McRomError::Manifest(_) | McRomError::Io(_) => Kind::Io,
        McRomError::DlRom(e) => dlrom_kind(e),
        McRomError::Svm(e) => svm_kind(e),
        McRomError::Dataset(e) => dataset_kind(e),
        McRomError::Routing { .. } => Kind::Numerical,
    },
    PodError => |e| match e {
        PodError::Truncation { .. } => Kind::Config,
        PodError::Dataset(e) => dataset_kind(e),
        _ => Kind::Numerical,
    },
    mcrom_core::fom::FomError => |e| match e {
        mcrom_core::fom::FomError::Parameter(_) | mcrom_core::fom::FomError::Mesh(_) | mcrom_core::fom::FomError::Setup(_) => Kind::Config,
        _ => Kind::Numerical,
    },
    mcrom_core::metrics::MetricsError => |_| Kind::Numerical,
    mcrom_core::linalg::LinalgError => |_| Kind::Numerical,
}
