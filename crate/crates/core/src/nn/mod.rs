//! Small reverse-mode network engine: dense, 1D/2D convolution and
//! transposed convolution, ELU, reshape, Kaiming init and Adam.

pub mod arch;
mod layers;
mod network;
mod optim;

pub use layers::{conv_out, deconv_out, elu, LayerKind};
pub use network::{kaiming_uniform_init, Network, Tape, KAIMING_GAIN};
pub use optim::{adam_step, AdamState, LrSchedule, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("layer {layer}: {message}")]
    Shape { layer: usize, message: String },
    #[error("invalid state: {0}")]
    State(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense `f64` tensor, row-major, batch axis first.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NnError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(NnError::Shape {
                layer: 0,
                message: format!(
                    "shape {shape:?} holds {} values, got {}",
                    shape.iter().product::<usize>(),
                    data.len()
                ),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of samples along the leading axis.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Sample `i` as a flat slice.
    pub fn sample(&self, i: usize) -> &[f64] {
        let per = self.data.len() / self.batch().max(1);
        &self.data[i * per..(i + 1) * per]
    }
}
