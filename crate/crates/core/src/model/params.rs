use rand::Rng;

use super::{LocalSimMode, ModelConfig, WeightMode};
use crate::dense::Matrix;
use crate::error::{Error, Result};

/// Two-layer perceptron `affine -> ReLU -> affine`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    /// `in x hidden`
    pub w1: Matrix,
    /// `1 x hidden`
    pub b1: Matrix,
    /// `hidden x out`
    pub w2: Matrix,
    /// `1 x out`
    pub b2: Matrix,
}

pub(crate) struct MlpCache {
    pub input: Matrix,
    pub pre: Matrix,
    pub hidden: Matrix,
}

impl Mlp {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: Matrix::zeros(input, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::zeros(hidden, output),
            b2: Matrix::zeros(1, output),
        }
    }

    fn init(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: uniform(input, hidden, input, rng),
            b1: uniform(1, hidden, input, rng),
            w2: uniform(hidden, output, hidden, rng),
            b2: uniform(1, output, hidden, rng),
        }
    }

    pub(crate) fn forward(&self, input: Matrix) -> Result<(Matrix, MlpCache)> {
        let mut pre = input.matmul(&self.w1)?;
        pre.add_row_broadcast(&self.b1)?;
        let hidden = pre.map(|v| v.max(0.0));
        let mut out = hidden.matmul(&self.w2)?;
        out.add_row_broadcast(&self.b2)?;
        Ok((out, MlpCache { input, pre, hidden }))
    }

    /// Returns parameter gradients and the gradient with respect to the input.
    pub(crate) fn backward(&self, cache: &MlpCache, d_out: &Matrix) -> Result<(Mlp, Matrix)> {
        let w2 = cache.hidden.transpose_matmul(d_out)?;
        let b2 = d_out.col_sums();
        let mut d_pre = d_out.matmul_transpose(&self.w2)?;
        for (g, &p) in d_pre.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
            if p <= 0.0 {
                *g = 0.0;
            }
        }
        let w1 = cache.input.transpose_matmul(&d_pre)?;
        let b1 = d_pre.col_sums();
        let d_input = d_pre.matmul_transpose(&self.w1)?;
        Ok((Mlp { w1, b1, w2, b2 }, d_input))
    }

    fn tensors(&self) -> [&Matrix; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> [&mut Matrix; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
fn uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Matrix {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

/// Every learned tensor of the head. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters {
    /// `d x z`
    pub w_identity: Matrix,
    /// `K` matrices `d x z`
    pub w_low: Vec<Matrix>,
    /// `K` matrices `d x z`
    pub w_high: Vec<Matrix>,
    /// `2 -> h_ls -> 1`
    pub mlp_ls: Mlp,
    /// `2 -> h_alpha -> 3K`
    pub mlp_alpha: Mlp,
    /// `(K + 1) z x C`
    pub w_out: Matrix,
    /// `1 x 3K`, used only with graph-level weights.
    pub graph_alpha: Matrix,
}

impl ModelParameters {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (d, z, k) = (cfg.in_dim, cfg.hidden, cfg.layers);
        Self {
            w_identity: Matrix::zeros(d, z),
            w_low: vec![Matrix::zeros(d, z); k],
            w_high: vec![Matrix::zeros(d, z); k],
            mlp_ls: Mlp::zeros(2, cfg.h_ls, 1),
            mlp_alpha: Mlp::zeros(2, cfg.h_alpha, cfg.alpha_width()),
            w_out: Matrix::zeros(cfg.rep_width(), cfg.classes),
            graph_alpha: Matrix::zeros(1, cfg.alpha_width()),
        }
    }

    /// Uniform fan-in initialization. The graph-level weights have fan-in 1.
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let (d, z, k) = (cfg.in_dim, cfg.hidden, cfg.layers);
        let w_identity = uniform(d, z, d, rng);
        let w_low = (0..k).map(|_| uniform(d, z, d, rng)).collect();
        let w_high = (0..k).map(|_| uniform(d, z, d, rng)).collect();
        let mlp_ls = Mlp::init(2, cfg.h_ls, 1, rng);
        let mlp_alpha = Mlp::init(2, cfg.h_alpha, cfg.alpha_width(), rng);
        let w_out = uniform(cfg.rep_width(), cfg.classes, cfg.rep_width(), rng);
        let graph_alpha = uniform(1, cfg.alpha_width(), 1, rng);
        Self {
            w_identity,
            w_low,
            w_high,
            mlp_ls,
            mlp_alpha,
            w_out,
            graph_alpha,
        }
    }

    /// Tensors in canonical order: identity, low layers, high layers, the
    /// LocalSim perceptron, the weight perceptron, output, graph weights.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut v = vec![&self.w_identity];
        v.extend(self.w_low.iter());
        v.extend(self.w_high.iter());
        v.extend(self.mlp_ls.tensors());
        v.extend(self.mlp_alpha.tensors());
        v.push(&self.w_out);
        v.push(&self.graph_alpha);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![&mut self.w_identity];
        v.extend(self.w_low.iter_mut());
        v.extend(self.w_high.iter_mut());
        v.extend(self.mlp_ls.tensors_mut());
        v.extend(self.mlp_alpha.tensors_mut());
        v.push(&mut self.w_out);
        v.push(&mut self.graph_alpha);
        v
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let k = self.w_low.len();
        let mut v = vec!["w_identity".to_string()];
        v.extend((0..k).map(|l| format!("w_low[{l}]")));
        v.extend((0..k).map(|l| format!("w_high[{l}]")));
        for p in ["mlp_ls", "mlp_alpha"] {
            v.extend(["w1", "b1", "w2", "b2"].iter().map(|t| format!("{p}.{t}")));
        }
        v.push("w_out".into());
        v.push("graph_alpha".into());
        v
    }

    /// Which tensors the forward pass reads under `cfg`, in canonical order.
    pub fn active_mask(&self, cfg: &ModelConfig) -> Vec<bool> {
        let k = self.w_low.len();
        let ls = cfg.weight_mode == WeightMode::NodeLevel && cfg.localsim_mode == LocalSimMode::Refined;
        let alpha = cfg.weight_mode == WeightMode::NodeLevel;
        let mut v = vec![true; 1 + 2 * k];
        v.extend([ls; 4]);
        v.extend([alpha; 4]);
        v.push(true);
        v.push(cfg.weight_mode == WeightMode::GraphLevel);
        v
    }

    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let want = ModelParameters::zeros(cfg);
        if self.w_low.len() != cfg.layers || self.w_high.len() != cfg.layers {
            return Err(Error::input(format!(
                "parameters hold {} layers, config expects {}",
                self.w_low.len(),
                cfg.layers
            )));
        }
        for ((a, b), name) in self.tensors().iter().zip(want.tensors()).zip(want.tensor_names()) {
            if a.shape() != b.shape() {
                return Err(Error::input(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.as_slice().len()).sum()
    }

    /// Flattened copy in canonical order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.as_slice().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_values() {
            return Err(Error::input("flat parameter vector has the wrong length"));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let len = t.as_slice().len();
            t.as_mut_slice().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }
}
