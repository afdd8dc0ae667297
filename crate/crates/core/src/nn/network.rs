use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{self, LayerKind};
use super::{NnError, Tensor};

/// Gain applied to the Kaiming-uniform bound.
pub const KAIMING_GAIN: f64 = 1.0;

/// Weights `U(−b, b)` with `b = gain · sqrt(6 / fan_in)`, biases zero,
/// returned flattened as `[W, b]`.
pub fn kaiming_uniform_init(kind: &LayerKind, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if !kind.has_params() {
        return Vec::new();
    }
    let n_w: usize = kind.weight_shape().iter().product();
    let bound = KAIMING_GAIN * (6.0 / kind.fan_in() as f64).sqrt();
    let mut out: Vec<f64> = (0..n_w).map(|_| rng.gen_range(-bound..=bound)).collect();
    out.resize(n_w + kind.bias_len(), 0.0);
    out
}

/// Activations recorded by a forward pass, consumed by [`Network::backward`].
#[derive(Clone, Debug, Default)]
pub struct Tape {
    batch: usize,
    /// Input of every layer followed by the final output.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn is_empty(&self) -> bool {
        self.acts.is_empty()
    }
}

/// Sequential network with all parameters in one flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<LayerKind>,
    /// Per-sample shapes: input, then the output of each layer.
    shapes: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    pub params: Vec<f64>,
}

impl Network {
    /// Validates shapes and initializes parameters from `seed`.
    pub fn new(input: Vec<usize>, layers: Vec<LayerKind>, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(input, layers, &mut rng)
    }

    pub fn with_rng(input: Vec<usize>, layers: Vec<LayerKind>, rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        let mut shapes = vec![input];
        for (i, l) in layers.iter().enumerate() {
            let next = layers::check_shape(i, l, shapes.last().expect("nonempty"))?;
            shapes.push(next);
        }
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        let mut params = Vec::new();
        for l in &layers {
            offsets.push(params.len());
            params.extend(kaiming_uniform_init(l, rng));
        }
        offsets.push(params.len());
        Ok(Self { layers, shapes, offsets, params })
    }

    pub fn layers(&self) -> &[LayerKind] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("nonempty")
    }

    /// Per-sample output shape after each layer.
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes[1..]
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_len(&self) -> usize {
        self.input_shape().iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    /// Parameter slice of layer `i`.
    pub fn layer_params(&self, i: usize) -> &[f64] {
        &self.params[self.offsets[i]..self.offsets[i + 1]]
    }

    fn batch_of(&self, x: &Tensor) -> Result<usize, NnError> {
        let per: usize = self.input_len();
        let tail = &x.shape()[1.min(x.shape().len())..];
        if x.shape().is_empty() || tail.iter().product::<usize>() != per {
            return Err(NnError::Shape {
                layer: 0,
                message: format!("input {:?} does not match per-sample shape {:?}", x.shape(), self.input_shape()),
            });
        }
        Ok(x.shape()[0])
    }

    fn run(&self, x: &Tensor, record: bool) -> Result<(Tensor, Tape), NnError> {
        let batch = self.batch_of(x)?;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(if record { self.layers.len() + 1 } else { 0 });
        let mut cur = x.data().to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let out_len = batch * self.shapes[i + 1].iter().product::<usize>();
            let mut next = vec![0.0; out_len];
            layers::forward(l, &self.shapes[i], &self.shapes[i + 1], batch, self.layer_params(i), &cur, &mut next);
            if record {
                acts.push(std::mem::replace(&mut cur, next));
            } else {
                cur = next;
            }
        }
        let mut shape = vec![batch];
        shape.extend(self.output_shape());
        if record {
            acts.push(cur.clone());
        }
        Ok((Tensor::new(shape, cur)?, Tape { batch, acts }))
    }

    /// Batched forward pass recording activations.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tape), NnError> {
        self.run(x, true)
    }

    /// Forward pass without recording.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.run(x, false)?.0)
    }

    /// Gradients of `⟨upstream, f(x)⟩` with respect to the parameters and the input.
    pub fn backward(&self, tape: &Tape, upstream: &Tensor) -> Result<(Vec<f64>, Tensor), NnError> {
        if tape.is_empty() {
            return Err(NnError::State("backward called without a recorded forward pass".into()));
        }
        let batch = tape.batch;
        if upstream.len() != batch * self.output_len() {
            return Err(NnError::Shape {
                layer: self.layers.len(),
                message: format!("upstream gradient {:?} does not match the output", upstream.shape()),
            });
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut dy = upstream.data().to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let mut dx = vec![0.0; tape.acts[i].len()];
            let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
            layers::backward(
                l,
                &self.shapes[i],
                &self.shapes[i + 1],
                batch,
                &self.params[lo..hi],
                &tape.acts[i],
                &tape.acts[i + 1],
                &dy,
                &mut grads[lo..hi],
                &mut dx,
            );
            dy = dx;
        }
        let mut shape = vec![batch];
        shape.extend(self.input_shape());
        Ok((grads, Tensor::new(shape, dy)?))
    }

    /// Writes named per-layer tensors: `MCNN`, `u32` version, `u32` entry
    /// count, then per entry a length-prefixed name, `u32` rank, `u64` dims
    /// and little-endian `f64` data.
    pub fn write_weights(&self, w: &mut impl Write) -> Result<(), NnError> {
        let mut entries: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if !l.has_params() {
                continue;
            }
            let p = self.layer_params(i);
            let n_w: usize = l.weight_shape().iter().product();
            entries.push((format!("{i}.{}.weight", l.name()), l.weight_shape(), &p[..n_w]));
            entries.push((format!("{i}.{}.bias", l.name()), vec![l.bias_len()], &p[n_w..]));
        }
        w.write_all(b"MCNN")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(entries.len() as u32).to_le_bytes())?;
        for (name, shape, data) in entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(shape.len() as u32).to_le_bytes())?;
            for d in shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Loads weights written by [`Network::write_weights`] for the same architecture.
    pub fn read_weights(&mut self, r: &mut impl Read) -> Result<(), NnError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"MCNN" || read_u32(r)? != 1 {
            return Err(NnError::Checkpoint("not a weight file".into()));
        }
        let count = read_u32(r)? as usize;
        let mut expected = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if l.has_params() {
                let n_w: usize = l.weight_shape().iter().product();
                expected.push((format!("{i}.{}.weight", l.name()), l.weight_shape(), self.offsets[i], n_w));
                expected.push((
                    format!("{i}.{}.bias", l.name()),
                    vec![l.bias_len()],
                    self.offsets[i] + n_w,
                    l.bias_len(),
                ));
            }
        }
        if count != expected.len() {
            return Err(NnError::Checkpoint(format!("{count} tensors stored, {} expected", expected.len())));
        }
        let mut params = self.params.clone();
        for (name, shape, off, len) in expected {
            let nlen = read_u32(r)? as usize;
            if nlen > 256 {
                return Err(NnError::Checkpoint("tensor name too long".into()));
            }
            let mut buf = vec![0u8; nlen];
            r.read_exact(&mut buf)?;
            let got = String::from_utf8_lossy(&buf).into_owned();
            let rank = read_u32(r)? as usize;
            if rank > 8 {
                return Err(NnError::Checkpoint(format!("tensor `{got}` has rank {rank}")));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                dims.push(u64::from_le_bytes(b) as usize);
            }
            if got != name || dims != shape {
                return Err(NnError::Checkpoint(format!("found `{got}` {dims:?}, expected `{name}` {shape:?}")));
            }
            let mut raw = vec![0u8; len * 8];
            r.read_exact(&mut raw)?;
            for (dst, c) in params[off..off + len].iter_mut().zip(raw.chunks_exact(8)) {
                *dst = f64::from_le_bytes(c.try_into().expect("8 bytes"));
            }
        }
        self.params = params;
        Ok(())
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
