//! Encoder, decoder and parameter-map layouts.

use std::fmt;
use std::str::FromStr;

use super::LayerKind::{self, *};

/// Hidden layers and width of the parameter-to-latent map.
pub const PSI_DEPTH: usize = 10;
pub const PSI_WIDTH: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArchPreset {
    /// 2D convolutions on a 16x16 reshape of a length-256 vector.
    Conv2d256,
    /// 1D convolutions on a length-256 vector.
    Conv1d256,
    /// Dense adapter to 4096, then 2D convolutions on 64x64.
    Conv2d4096,
    /// Dense adapter to 256 around the 1D convolution stack.
    Conv1dAdapted,
}

impl ArchPreset {
    pub const ALL: [ArchPreset; 4] =
        [ArchPreset::Conv2d256, ArchPreset::Conv1d256, ArchPreset::Conv2d4096, ArchPreset::Conv1dAdapted];

    pub fn name(self) -> &'static str {
        match self {
            ArchPreset::Conv2d256 => "conv2d-256",
            ArchPreset::Conv1d256 => "conv1d-256",
            ArchPreset::Conv2d4096 => "conv2d-4096",
            ArchPreset::Conv1dAdapted => "conv1d-adapted",
        }
    }

    /// Builds the layout for `n_dofs` inputs, latent size `n` and `n_params` parameters.
    pub fn build(self, n_dofs: usize, n: usize, n_params: usize) -> Result<Arch, String> {
        let fixed = matches!(self, ArchPreset::Conv2d256 | ArchPreset::Conv1d256);
        if fixed && n_dofs != 256 {
            return Err(format!("{} needs 256 degrees of freedom, got {n_dofs}", self.name()));
        }
        if n == 0 || n_dofs == 0 {
            return Err("latent size and input length must be positive".into());
        }
        let (encoder, decoder) = match self {
            ArchPreset::Conv2d256 => (conv2d_256_encoder(n), conv2d_256_decoder(n)),
            ArchPreset::Conv1d256 => (conv1d_encoder(n), conv1d_decoder(n)),
            ArchPreset::Conv2d4096 => conv2d_4096(n_dofs, n),
            ArchPreset::Conv1dAdapted => {
                let mut enc = vec![Dense { inp: n_dofs, out: 256 }];
                enc.extend(conv1d_encoder(n));
                let mut dec = conv1d_decoder(n);
                dec.push(Reshape { shape: vec![256] });
                dec.push(Dense { inp: 256, out: n_dofs });
                (enc, dec)
            }
        };
        Ok(Arch {
            preset: self,
            n_dofs,
            latent: n,
            n_params,
            encoder: with_elu(encoder),
            decoder: with_elu(decoder),
            psi: with_elu(psi_layers(n_params + 1, n)),
        })
    }
}

impl fmt::Display for ArchPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchPreset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ArchPreset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown architecture `{s}`"))
    }
}

/// Layer lists of the three networks. The encoder takes `[n_dofs]`, the
/// decoder `[latent]` and the parameter map `[n_params + 1]` (time appended).
#[derive(Clone, Debug, PartialEq)]
pub struct Arch {
    pub preset: ArchPreset,
    pub n_dofs: usize,
    pub latent: usize,
    pub n_params: usize,
    pub encoder: Vec<LayerKind>,
    pub decoder: Vec<LayerKind>,
    pub psi: Vec<LayerKind>,
}

impl Arch {
    pub fn n_weights(&self) -> usize {
        [&self.encoder, &self.decoder, &self.psi].iter().flat_map(|l| l.iter()).map(LayerKind::n_params).sum()
    }
}

/// Inserts ELU after every weighted layer except the last one.
fn with_elu(layers: Vec<LayerKind>) -> Vec<LayerKind> {
    let last = layers.iter().rposition(LayerKind::has_params);
    let mut out = Vec::with_capacity(layers.len() * 2);
    for (i, l) in layers.into_iter().enumerate() {
        let weighted = l.has_params();
        out.push(l);
        if weighted && Some(i) != last {
            out.push(Elu);
        }
    }
    out
}

fn psi_layers(inp: usize, n: usize) -> Vec<LayerKind> {
    let mut v = vec![Dense { inp, out: PSI_WIDTH }];
    v.extend((1..PSI_DEPTH).map(|_| Dense { inp: PSI_WIDTH, out: PSI_WIDTH }));
    v.push(Dense { inp: PSI_WIDTH, out: n });
    v
}

fn c2(cin: usize, cout: usize, s: usize) -> LayerKind {
    Conv2d { cin, cout, k: 5, s, p: 2 }
}

fn t2(cin: usize, cout: usize, s: usize, p: usize) -> LayerKind {
    ConvTranspose2d { cin, cout, k: 5, s, p, op: 0 }
}

fn conv2d_256_encoder(n: usize) -> Vec<LayerKind> {
    vec![
        Reshape { shape: vec![1, 16, 16] },
        c2(1, 8, 1),
        c2(8, 16, 2),
        c2(16, 32, 2),
        c2(32, 64, 2),
        Reshape { shape: vec![256] },
        Dense { inp: 256, out: 256 },
        Dense { inp: 256, out: n },
    ]
}

fn conv2d_256_decoder(n: usize) -> Vec<LayerKind> {
    vec![
        Dense { inp: n, out: 256 },
        Dense { inp: 256, out: 256 },
        Reshape { shape: vec![64, 2, 2] },
        t2(64, 64, 3, 2),
        t2(64, 32, 3, 1),
        t2(32, 16, 1, 1),
        t2(16, 1, 1, 1),
        Reshape { shape: vec![256] },
    ]
}

fn conv1d_encoder(n: usize) -> Vec<LayerKind> {
    let c1 = |cin, cout| Conv1d { cin, cout, k: 5, s: 2, p: 2 };
    vec![
        Reshape { shape: vec![1, 256] },
        c1(1, 4),
        c1(4, 8),
        c1(8, 16),
        c1(16, 16),
        Reshape { shape: vec![256] },
        Dense { inp: 256, out: 256 },
        Dense { inp: 256, out: n },
    ]
}

fn conv1d_decoder(n: usize) -> Vec<LayerKind> {
    let t1 = |cin, cout, p, op| ConvTranspose1d { cin, cout, k: 5, s: 2, p, op };
    vec![
        Dense { inp: n, out: 256 },
        Dense { inp: 256, out: 256 },
        Reshape { shape: vec![16, 16] },
        t1(16, 16, 1, 0),
        t1(16, 8, 2, 0),
        t1(8, 4, 2, 0),
        t1(4, 1, 3, 1),
    ]
}

fn conv2d_4096(n_dofs: usize, n: usize) -> (Vec<LayerKind>, Vec<LayerKind>) {
    let enc = vec![
        Dense { inp: n_dofs, out: 4096 },
        Reshape { shape: vec![1, 64, 64] },
        c2(1, 8, 1),
        c2(8, 16, 2),
        c2(16, 32, 2),
        c2(32, 64, 2),
        Reshape { shape: vec![4096] },
        Dense { inp: 4096, out: 256 },
        Dense { inp: 256, out: n },
    ];
    let dec = vec![
        Dense { inp: n, out: 256 },
        Dense { inp: 256, out: 4096 },
        Reshape { shape: vec![64, 8, 8] },
        t2(64, 64, 3, 2),
        t2(64, 32, 3, 2),
        t2(32, 16, 1, 2),
        t2(16, 1, 1, 2),
        Reshape { shape: vec![4096] },
        Dense { inp: 4096, out: n_dofs },
    ];
    (enc, dec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(input: Vec<usize>, layers: &[LayerKind]) -> Vec<Vec<usize>> {
        let mut cur = input;
        let mut out = Vec::new();
        for l in layers {
            cur = l.output_shape(&cur).unwrap();
            if !matches!(l, Elu) {
                out.push(cur.clone());
            }
        }
        out
    }

    #[test]
    fn elu_placement() {
        let a = ArchPreset::Conv1d256.build(256, 5, 1).unwrap();
        assert!(!matches!(a.encoder.last(), Some(Elu)));
        assert!(!matches!(a.psi.last(), Some(Elu)));
        assert_eq!(a.psi.iter().filter(|l| matches!(l, Elu)).count(), PSI_DEPTH);
        assert_eq!(a.decoder.iter().filter(|l| matches!(l, Elu)).count(), 5);
    }

    #[test]
    fn name_round_trip() {
        for p in ArchPreset::ALL {
            assert_eq!(p.name().parse::<ArchPreset>().unwrap(), p);
        }
        assert!("nope".parse::<ArchPreset>().is_err());
        assert!(ArchPreset::Conv2d256.build(300, 5, 1).is_err());
    }

    #[test]
    fn adapted_shapes() {
        let a = ArchPreset::Conv1dAdapted.build(145, 5, 2).unwrap();
        assert_eq!(trace(vec![145], &a.encoder).last().unwrap(), &vec![5]);
        assert_eq!(trace(vec![5], &a.decoder).last().unwrap(), &vec![145]);
        assert_eq!(trace(vec![3], &a.psi).last().unwrap(), &vec![5]);
    }

    #[test]
    fn conv2d_256_shapes() {
        let a = ArchPreset::Conv2d256.build(256, 7, 1).unwrap();
        let enc = trace(vec![256], &a.encoder);
        let want: Vec<Vec<usize>> = vec![
            vec![1, 16, 16],
            vec![8, 16, 16],
            vec![16, 8, 8],
            vec![32, 4, 4],
            vec![64, 2, 2],
            vec![256],
            vec![256],
            vec![7],
        ];
        assert_eq!(enc, want);
        let dec = trace(vec![7], &a.decoder);
        let want: Vec<Vec<usize>> = vec![
            vec![256],
            vec![256],
            vec![64, 2, 2],
            vec![64, 4, 4],
            vec![32, 12, 12],
            vec![16, 14, 14],
            vec![1, 16, 16],
            vec![256],
        ];
        assert_eq!(dec, want);
    }

    #[test]
    fn conv1d_256_shapes() {
        let a = ArchPreset::Conv1d256.build(256, 7, 1).unwrap();
        let enc = trace(vec![256], &a.encoder);
        let want: Vec<Vec<usize>> =
            vec![vec![1, 256], vec![4, 128], vec![8, 64], vec![16, 32], vec![16, 16], vec![256], vec![256], vec![7]];
        assert_eq!(enc, want);
        let dec = trace(vec![7], &a.decoder);
        let want: Vec<Vec<usize>> =
            vec![vec![256], vec![256], vec![16, 16], vec![16, 33], vec![8, 65], vec![4, 129], vec![1, 256]];
        assert_eq!(dec, want);
    }

    #[test]
    fn conv2d_4096_shapes() {
        let a = ArchPreset::Conv2d4096.build(5776, 5, 2).unwrap();
        let enc = trace(vec![5776], &a.encoder);
        let want: Vec<Vec<usize>> = vec![
            vec![4096],
            vec![1, 64, 64],
            vec![8, 64, 64],
            vec![16, 32, 32],
            vec![32, 16, 16],
            vec![64, 8, 8],
            vec![4096],
            vec![256],
            vec![5],
        ];
        assert_eq!(enc, want);
        let dec = trace(vec![5], &a.decoder);
        let want: Vec<Vec<usize>> = vec![
            vec![256],
            vec![4096],
            vec![64, 8, 8],
            vec![64, 22, 22],
            vec![32, 64, 64],
            vec![16, 64, 64],
            vec![1, 64, 64],
            vec![4096],
            vec![5776],
        ];
        assert_eq!(dec, want);
    }
}
