//! RPN classification score maps, sigmoid activation, and the high-pass
//! filter bank applied before RoI extraction.
//!
//! The filter of record is unsharp masking with a uniform surround:
//! `2*identity - box`, which keeps unit DC gain while boosting isolated
//! peaks and blurring the edges of wide plateaus. Arbitrary user-supplied
//! weights are accepted as custom kernels.

use crate::tensor::Tensor;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Rank-3 score grid, row-major with the channel index fastest:
/// `values[(i * width + j) * channels + c]`. One channel per anchor per
/// location.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    values: Vec<f64>,
}

impl ScoreMap {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            values: vec![0.0; height * width * channels],
        }
    }

    pub fn from_values(
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x{} map needs {} values, got {}",
                height,
                width,
                channels,
                height * width * channels,
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            values: vec![value; height * width * channels],
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, c: usize) -> usize {
        (i * self.width + j) * self.channels + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.values[self.idx(i, j, c)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        let ix = self.idx(i, j, c);
        self.values[ix] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// From a rank-3 `[h, w, c]` tensor, or rank-2 `[h, w]` as one channel.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (h, w, c) = match t.dims.as_slice() {
            [h, w, c] => (*h, *w, *c),
            [h, w] => (*h, *w, 1),
            other => {
                return Err(Error::ShapeMismatch(format!(
                    "expected rank-2 or rank-3 tensor, got dims {:?}",
                    other
                )))
            }
        };
        Self::from_values(h, w, c, t.data.iter().map(|&v| v as f64).collect())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            dims: vec![self.height, self.width, self.channels],
            data: self.values.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// Elementwise logistic function `1 / (1 + e^-x)`.
pub fn sigmoid_map(m: &ScoreMap) -> ScoreMap {
    ScoreMap {
        height: m.height,
        width: m.width,
        channels: m.channels,
        values: m.values.iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Unsharp,
    Gaussian,
    Laplacian,
    /// Laplacian applied after a 3x3 Gaussian, materialized as the composed
    /// stencil.
    Log,
    Identity,
    Custom,
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            KernelKind::Unsharp => "unsharp",
            KernelKind::Gaussian => "gaussian",
            KernelKind::Laplacian => "laplacian",
            KernelKind::Log => "log",
            KernelKind::Identity => "identity",
            KernelKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unsharp" => Ok(KernelKind::Unsharp),
            "gaussian" => Ok(KernelKind::Gaussian),
            "laplacian" => Ok(KernelKind::Laplacian),
            "log" => Ok(KernelKind::Log),
            "identity" => Ok(KernelKind::Identity),
            "custom" => Ok(KernelKind::Custom),
            other => Err(Error::UnsupportedKernel {
                kind: other.into(),
                size: 0,
            }),
        }
    }
}

/// Square convolution stencil with odd side length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub size: usize,
    pub weights: Vec<f64>,
    pub kind: KernelKind,
}

impl Kernel {
    /// User-supplied weights (the config escape hatch for drop-in stencils).
    pub fn from_weights(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(Error::UnsupportedKernel {
                kind: "custom".into(),
                size,
            });
        }
        if weights.len() != size * size {
            return Err(Error::ShapeMismatch(format!(
                "{size}x{size} kernel needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        Ok(Self {
            size,
            weights,
            kind: KernelKind::Custom,
        })
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn box_minus_two_identity(size: usize) -> Vec<f64> {
    let n = size * size;
    let w = -1.0 / n as f64;
    let mut weights = vec![w; n];
    weights[n / 2] += 2.0;
    weights
}

fn gaussian_weights(size: usize) -> Vec<f64> {
    // Binomial rows: [1,2,1]/4 and [1,4,6,4,1]/16.
    let row: Vec<f64> = match size {
        3 => vec![1.0, 2.0, 1.0],
        5 => vec![1.0, 4.0, 6.0, 4.0, 1.0],
        _ => unreachable!(),
    };
    let norm: f64 = row.iter().sum();
    let mut weights = Vec::with_capacity(size * size);
    for a in &row {
        for b in &row {
            weights.push(a * b / (norm * norm));
        }
    }
    weights
}

fn laplacian_weights(size: usize) -> Vec<f64> {
    match size {
        3 => vec![0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0],
        5 => vec![
            0.0, 0.0, 1.0, 0.0, 0.0, //
            0.0, 1.0, 2.0, 1.0, 0.0, //
            1.0, 2.0, -16.0, 2.0, 1.0, //
            0.0, 1.0, 2.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, 0.0,
        ],
        _ => unreachable!(),
    }
}

/// Full 2-D convolution of two square stencils (support grows to a+b-1).
fn compose_stencils(a: &[f64], an: usize, b: &[f64], bn: usize) -> (Vec<f64>, usize) {
    let n = an + bn - 1;
    let mut out = vec![0.0; n * n];
    for ia in 0..an {
        for ja in 0..an {
            for ib in 0..bn {
                for jb in 0..bn {
                    out[(ia + ib) * n + (ja + jb)] += a[ia * an + ja] * b[ib * bn + jb];
                }
            }
        }
    }
    (out, n)
}

/// Construct one of the supported stencils.
///
/// Supported pairs: unsharp/gaussian/laplacian/identity at 3 or 5, and log
/// at 3 (whose composed support is 5x5, reflected in the returned `size`).
pub fn make_kernel(kind: KernelKind, size: usize) -> Result<Kernel> {
    let err = || Error::UnsupportedKernel {
        kind: kind.to_string(),
        size,
    };
    match (kind, size) {
        (KernelKind::Unsharp, 3 | 5) => Ok(Kernel {
            size,
            weights: box_minus_two_identity(size),
            kind,
        }),
        (KernelKind::Gaussian, 3 | 5) => Ok(Kernel {
            size,
            weights: gaussian_weights(size),
            kind,
        }),
        (KernelKind::Laplacian, 3 | 5) => Ok(Kernel {
            size,
            weights: laplacian_weights(size),
            kind,
        }),
        (KernelKind::Log, 3) => {
            let (weights, n) = compose_stencils(&gaussian_weights(3), 3, &laplacian_weights(3), 3);
            Ok(Kernel {
                size: n,
                weights,
                kind,
            })
        }
        (KernelKind::Identity, 3 | 5) => {
            let mut weights = vec![0.0; size * size];
            weights[size * size / 2] = 1.0;
            Ok(Kernel {
                size,
                weights,
                kind,
            })
        }
        _ => Err(err()),
    }
}

/// Per-channel 2-D cross-correlation with replicate border padding; output
/// shape equals input shape.
pub fn convolve2d(m: &ScoreMap, k: &Kernel) -> Result<ScoreMap> {
    if k.size > m.height || k.size > m.width {
        return Err(Error::KernelLargerThanMap {
            kernel: k.size,
            height: m.height,
            width: m.width,
        });
    }
    let r = (k.size / 2) as i64;
    let mut out = ScoreMap::zeros(m.height, m.width, m.channels);
    for i in 0..m.height {
        for j in 0..m.width {
            for c in 0..m.channels {
                let mut acc = 0.0;
                for u in 0..k.size {
                    let ii = (i as i64 + u as i64 - r).clamp(0, m.height as i64 - 1) as usize;
                    for v in 0..k.size {
                        let jj = (j as i64 + v as i64 - r).clamp(0, m.width as i64 - 1) as usize;
                        acc += k.weights[u * k.size + v] * m.get(ii, jj, c);
                    }
                }
                out.set(i, j, c, acc);
            }
        }
    }
    Ok(out)
}

/// High-pass filter step: convolve a sigmoid-activated map and clamp back to
/// `[0, 1]` so downstream top-k selection still sees score-like values.
pub fn apply_hpf(m: &ScoreMap, k: &Kernel) -> Result<ScoreMap> {
    let mut out = convolve2d(m, k)?;
    for v in out.values.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(out)
}
