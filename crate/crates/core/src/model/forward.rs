use rand::{Rng, RngCore};

use super::params::{Mlp, MlpCache};
use super::{LocalSimMode, ModelConfig, ModelParameters, WeightMode};
use crate::dense::{dot, FeatureMatrix, Matrix};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::localsim::{edge_sim_features, neighborhood_mean, EdgeSimFeatures, LocalSimVector};
use crate::propagation::PropagationStack;

/// Everything the head reads that does not change during training.
pub struct ModelInput<'a> {
    pub graph: &'a SparseGraph,
    pub features: &'a FeatureMatrix,
    pub stack: &'a PropagationStack,
    /// `(d_ij, d_ij^2)` per directed entry, computed from the raw features.
    pub edge_feats: EdgeSimFeatures,
    /// Naive LocalSim over the same similarities.
    pub naive_phi: Vec<f64>,
}

impl<'a> ModelInput<'a> {
    pub fn new(
        graph: &'a SparseGraph,
        features: &'a FeatureMatrix,
        stack: &'a PropagationStack,
        sim_kind: crate::localsim::SimilarityKind,
    ) -> Result<Self> {
        if features.rows() != graph.n() {
            return Err(Error::input(format!(
                "feature matrix has {} rows, graph has {} nodes",
                features.rows(),
                graph.n()
            )));
        }
        if stack.n() != graph.n() || stack.d() != features.cols() {
            return Err(Error::input(format!(
                "propagation stack is {}x{}, features are {}x{}",
                stack.n(),
                stack.d(),
                features.rows(),
                features.cols()
            )));
        }
        let edge_feats = edge_sim_features(graph, features, sim_kind)?;
        let naive_phi = neighborhood_mean(graph, &edge_feats.d)?;
        Ok(Self {
            graph,
            features,
            stack,
            edge_feats,
            naive_phi,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    fn check(&self, cfg: &ModelConfig) -> Result<()> {
        if self.stack.layers() != cfg.layers {
            return Err(Error::input(format!(
                "propagation stack has {} layers, model expects {}",
                self.stack.layers(),
                cfg.layers
            )));
        }
        if self.features.cols() != cfg.in_dim {
            return Err(Error::input(format!(
                "features have {} columns, model expects {}",
                self.features.cols(),
                cfg.in_dim
            )));
        }
        Ok(())
    }
}

/// Row-stochastic class probabilities (`n x C`).
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    pub probs: Matrix,
}

impl PredictionMatrix {
    /// Arg-max class per node; ties go to the lowest class index.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.probs.rows())
            .map(|i| {
                let row = self.probs.row(i);
                let mut best = 0;
                for (c, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// Per-node fusion weights, each `n x K`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionWeights {
    pub alpha_identity: Matrix,
    pub alpha_low: Matrix,
    pub alpha_high: Matrix,
}

impl FusionWeights {
    fn from_packed(packed: &Matrix, layers: usize) -> Self {
        let n = packed.rows();
        let block = |offset: usize| {
            let mut m = Matrix::zeros(n, layers);
            for i in 0..n {
                m.row_mut(i)
                    .copy_from_slice(&packed.row(i)[offset..offset + layers]);
            }
            m
        };
        Self {
            alpha_identity: block(0),
            alpha_low: block(layers),
            alpha_high: block(2 * layers),
        }
    }
}

/// `phi_i = mean_{j in N(i)} MLP_ls([d_ij, d_ij^2])`.
pub fn refined_localsim(mlp_ls: &Mlp, edge_feats: &EdgeSimFeatures, g: &SparseGraph) -> Result<LocalSimVector> {
    Ok(LocalSimVector {
        phi: refined_phi(mlp_ls, edge_feats, g)?.0,
    })
}

fn refined_phi(mlp_ls: &Mlp, edge_feats: &EdgeSimFeatures, g: &SparseGraph) -> Result<(Vec<f64>, MlpCache)> {
    if edge_feats.len() != g.directed_entry_count() {
        return Err(Error::input(format!(
            "edge features have {} entries, graph has {} directed entries",
            edge_feats.len(),
            g.directed_entry_count()
        )));
    }
    let mut input = Matrix::zeros(edge_feats.len(), 2);
    for (e, (&d, &d_sq)) in edge_feats.d.iter().zip(&edge_feats.d_sq).enumerate() {
        input[(e, 0)] = d;
        input[(e, 1)] = d_sq;
    }
    let (out, cache) = mlp_ls.forward(input)?;
    let phi = neighborhood_mean(g, out.as_slice())?;
    Ok((phi, cache))
}

fn phi_features(phi: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(phi.len(), 2);
    for (i, &p) in phi.iter().enumerate() {
        m[(i, 0)] = p;
        m[(i, 1)] = p * p;
    }
    m
}

/// `[alpha_I, alpha_L, alpha_H] = MLP_alpha([phi, phi^2])`, unconstrained.
pub fn fusion_weights(mlp_alpha: &Mlp, phi: &LocalSimVector, layers: usize) -> Result<FusionWeights> {
    if mlp_alpha.w2.cols() != 3 * layers {
        return Err(Error::input(format!(
            "weight perceptron emits {} values, {} layers need {}",
            mlp_alpha.w2.cols(),
            layers,
            3 * layers
        )));
    }
    let (packed, _) = mlp_alpha.forward(phi_features(&phi.phi))?;
    Ok(FusionWeights::from_packed(&packed, layers))
}

/// Intermediate values of one forward pass.
pub struct Forward {
    pub prediction: PredictionMatrix,
    pub logits: Matrix,
    /// LocalSim used for the weights (empty in graph-level mode).
    pub phi: Vec<f64>,
    /// Packed fusion weights, `n x 3K`.
    pub alpha: Matrix,
    pre_identity: Matrix,
    h_identity: Matrix,
    mask_identity: Option<Matrix>,
    pre_low: Vec<Matrix>,
    h_low: Vec<Matrix>,
    mask_low: Vec<Option<Matrix>>,
    pre_high: Vec<Matrix>,
    h_high: Vec<Matrix>,
    mask_high: Vec<Option<Matrix>>,
    ls_cache: Option<MlpCache>,
    alpha_cache: Option<MlpCache>,
    rep: Matrix,
}

impl Forward {
    pub fn fusion_weights(&self, layers: usize) -> FusionWeights {
        FusionWeights::from_packed(&self.alpha, layers)
    }
}

fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut dyn RngCore) -> Matrix {
    let keep = 1.0 / (1.0 - p);
    let data = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

fn relu_dropout(pre: &Matrix, mask: Option<&Matrix>) -> Matrix {
    let mut h = pre.map(|v| v.max(0.0));
    if let Some(m) = mask {
        for (v, &k) in h.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *v *= k;
        }
    }
    h
}

fn relu_dropout_backward(d_h: &mut Matrix, pre: &Matrix, mask: Option<&Matrix>) {
    for (i, (g, &p)) in d_h.as_mut_slice().iter_mut().zip(pre.as_slice()).enumerate() {
        if p <= 0.0 {
            *g = 0.0;
        } else if let Some(m) = mask {
            *g *= m.as_slice()[i];
        }
    }
}

fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut probs = logits.clone();
    for i in 0..probs.rows() {
        let row = probs.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    probs
}

/// `-ln softmax(row)[label]`, stabilized with log-sum-exp.
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Runs the head. `rng` is required when `training` and dropout is positive.
pub fn forward(
    params: &ModelParameters,
    cfg: &ModelConfig,
    input: &ModelInput<'_>,
    training: bool,
    rng: Option<&mut dyn RngCore>,
) -> Result<Forward> {
    cfg.validate()?;
    input.check(cfg)?;
    params.check_shapes(cfg)?;
    let n = input.n();
    let k = cfg.layers;
    let z = cfg.hidden;
    let use_dropout = training && cfg.dropout > 0.0;
    let mut rng = match (use_dropout, rng) {
        (true, Some(r)) => Some(r),
        (true, None) => return Err(Error::input("dropout during training needs a random generator")),
        (false, _) => None,
    };
    let mut next_mask = || rng.as_mut().map(|r| dropout_mask(n, z, cfg.dropout, &mut **r));

    let pre_identity = input.features.matmul(&params.w_identity)?;
    let mask_identity = next_mask();
    let h_identity = relu_dropout(&pre_identity, mask_identity.as_ref());

    let mut pre_low = Vec::with_capacity(k);
    let mut h_low = Vec::with_capacity(k);
    let mut mask_low = Vec::with_capacity(k);
    let mut pre_high = Vec::with_capacity(k);
    let mut h_high = Vec::with_capacity(k);
    let mut mask_high = Vec::with_capacity(k);
    for l in 0..k {
        let pre = input.stack.low_layers[l].matmul(&params.w_low[l])?;
        let mask = next_mask();
        h_low.push(relu_dropout(&pre, mask.as_ref()));
        pre_low.push(pre);
        mask_low.push(mask);

        let pre = input.stack.high_layers[l].matmul(&params.w_high[l])?;
        let mask = next_mask();
        h_high.push(relu_dropout(&pre, mask.as_ref()));
        pre_high.push(pre);
        mask_high.push(mask);
    }

    let (phi, alpha, ls_cache, alpha_cache) = match cfg.weight_mode {
        WeightMode::NodeLevel => {
            let (phi, ls_cache) = match cfg.localsim_mode {
                LocalSimMode::Naive => (input.naive_phi.clone(), None),
                LocalSimMode::Refined => {
                    let (phi, cache) = refined_phi(&params.mlp_ls, &input.edge_feats, input.graph)?;
                    (phi, Some(cache))
                }
            };
            let (alpha, cache) = params.mlp_alpha.forward(phi_features(&phi))?;
            (phi, alpha, ls_cache, Some(cache))
        }
        WeightMode::GraphLevel => {
            let mut alpha = Matrix::zeros(n, cfg.alpha_width());
            alpha.add_row_broadcast(&params.graph_alpha)?;
            (Vec::new(), alpha, None, None)
        }
    };

    let mut rep = Matrix::zeros(n, cfg.rep_width());
    for i in 0..n {
        let a = alpha.row(i);
        let hi = h_identity.row(i);
        let row = rep.row_mut(i);
        row[..z].copy_from_slice(hi);
        for l in 0..k {
            let (ai, al, ah) = (a[l], a[k + l], a[2 * k + l]);
            let hl = h_low[l].row(i);
            let hh = h_high[l].row(i);
            for (c, out) in row[(l + 1) * z..(l + 2) * z].iter_mut().enumerate() {
                *out = ai * hi[c] + al * hl[c] + ah * hh[c];
            }
        }
    }
    let logits = rep.matmul(&params.w_out)?;
    let probs = softmax_rows(&logits);

    Ok(Forward {
        prediction: PredictionMatrix { probs },
        logits,
        phi,
        alpha,
        pre_identity,
        h_identity,
        mask_identity,
        pre_low,
        h_low,
        mask_low,
        pre_high,
        h_high,
        mask_high,
        ls_cache,
        alpha_cache,
        rep,
    })
}

/// Inference-mode class probabilities.
pub fn predict(params: &ModelParameters, cfg: &ModelConfig, input: &ModelInput<'_>) -> Result<PredictionMatrix> {
    Ok(forward(params, cfg, input, false, None)?.prediction)
}

/// Accuracy of the arg-max prediction over the masked nodes.
pub fn evaluate(
    params: &ModelParameters,
    cfg: &ModelConfig,
    input: &ModelInput<'_>,
    labels: &[usize],
    mask: &[bool],
) -> Result<f64> {
    let pred = predict(params, cfg, input)?;
    accuracy(&pred, labels, mask)
}

pub(crate) fn accuracy(pred: &PredictionMatrix, labels: &[usize], mask: &[bool]) -> Result<f64> {
    if labels.len() != pred.probs.rows() || mask.len() != labels.len() {
        return Err(Error::input("labels/mask length differs from node count"));
    }
    let picked = pred.argmax();
    let (hit, total) = mask
        .iter()
        .zip(labels.iter().zip(&picked))
        .filter(|(&m, _)| m)
        .fold((0usize, 0usize), |(h, t), (_, (y, p))| (h + usize::from(y == p), t + 1));
    if total == 0 {
        return Err(Error::input("cannot evaluate accuracy on an empty mask"));
    }
    Ok(hit as f64 / total as f64)
}

/// Mean cross-entropy over the masked nodes (0 for an empty mask).
pub(crate) fn masked_cross_entropy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, (&m, &y)) in mask.iter().zip(labels).enumerate() {
        if m {
            sum += cross_entropy(logits.row(i), y);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub struct LossAndGrads {
    pub loss: f64,
    /// Cross-entropy part of `loss`.
    pub data_loss: f64,
    pub grads: ModelParameters,
    pub forward: Forward,
}

/// Mean masked cross-entropy plus `weight_decay / 2` times the squared norm
/// of every tensor the forward pass reads, with its exact gradient.
pub fn loss_and_gradients(
    params: &ModelParameters,
    cfg: &ModelConfig,
    input: &ModelInput<'_>,
    labels: &[usize],
    mask: &[bool],
    weight_decay: f64,
    training: bool,
    rng: Option<&mut dyn RngCore>,
) -> Result<LossAndGrads> {
    let n = input.n();
    if labels.len() != n || mask.len() != n {
        return Err(Error::input("labels/mask length differs from node count"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= cfg.classes) {
        return Err(Error::input(format!("label {bad} is outside [0, {})", cfg.classes)));
    }
    let fwd = forward(params, cfg, input, training, rng)?;
    let k = cfg.layers;
    let z = cfg.hidden;
    let count = mask.iter().filter(|&&m| m).count();
    let data_loss = masked_cross_entropy(&fwd.logits, labels, mask);

    let mut d_logits = Matrix::zeros(n, cfg.classes);
    if count > 0 {
        let inv = 1.0 / count as f64;
        for i in (0..n).filter(|&i| mask[i]) {
            let row = d_logits.row_mut(i);
            for (c, (g, &p)) in row.iter_mut().zip(fwd.prediction.probs.row(i)).enumerate() {
                *g = (p - if c == labels[i] { 1.0 } else { 0.0 }) * inv;
            }
        }
    }

    let mut grads = ModelParameters::zeros(cfg);
    grads.w_out = fwd.rep.transpose_matmul(&d_logits)?;
    let d_rep = d_logits.matmul_transpose(&params.w_out)?;

    let mut d_alpha = Matrix::zeros(n, cfg.alpha_width());
    let mut d_h_identity = Matrix::zeros(n, z);
    let mut d_h_low = vec![Matrix::zeros(n, z); k];
    let mut d_h_high = vec![Matrix::zeros(n, z); k];
    for i in 0..n {
        let dr = d_rep.row(i);
        let a = fwd.alpha.row(i);
        let hi = fwd.h_identity.row(i);
        let mut acc: Vec<f64> = dr[..z].to_vec();
        for l in 0..k {
            let dz = &dr[(l + 1) * z..(l + 2) * z];
            let hl = fwd.h_low[l].row(i);
            let hh = fwd.h_high[l].row(i);
            d_alpha[(i, l)] = dot(dz, hi);
            d_alpha[(i, k + l)] = dot(dz, hl);
            d_alpha[(i, 2 * k + l)] = dot(dz, hh);
            let (ai, al, ah) = (a[l], a[k + l], a[2 * k + l]);
            for c in 0..z {
                acc[c] += ai * dz[c];
            }
            for (g, &v) in d_h_low[l].row_mut(i).iter_mut().zip(dz) {
                *g = al * v;
            }
            for (g, &v) in d_h_high[l].row_mut(i).iter_mut().zip(dz) {
                *g = ah * v;
            }
        }
        d_h_identity.row_mut(i).copy_from_slice(&acc);
    }

    relu_dropout_backward(&mut d_h_identity, &fwd.pre_identity, fwd.mask_identity.as_ref());
    grads.w_identity = input.features.transpose_matmul(&d_h_identity)?;
    for l in 0..k {
        relu_dropout_backward(&mut d_h_low[l], &fwd.pre_low[l], fwd.mask_low[l].as_ref());
        grads.w_low[l] = input.stack.low_layers[l].transpose_matmul(&d_h_low[l])?;
        relu_dropout_backward(&mut d_h_high[l], &fwd.pre_high[l], fwd.mask_high[l].as_ref());
        grads.w_high[l] = input.stack.high_layers[l].transpose_matmul(&d_h_high[l])?;
    }

    match cfg.weight_mode {
        WeightMode::GraphLevel => {
            grads.graph_alpha = d_alpha.col_sums();
        }
        WeightMode::NodeLevel => {
            let cache = fwd.alpha_cache.as_ref().expect("node-level forward caches the weight perceptron");
            let (g_alpha, d_in) = params.mlp_alpha.backward(cache, &d_alpha)?;
            grads.mlp_alpha = g_alpha;
            if let Some(ls_cache) = fwd.ls_cache.as_ref() {
                let g = input.graph;
                let mut d_edge = Matrix::zeros(g.directed_entry_count(), 1);
                for i in 0..n {
                    let r = g.row_range(i);
                    if r.is_empty() {
                        continue;
                    }
                    let d_phi = d_in[(i, 0)] + 2.0 * fwd.phi[i] * d_in[(i, 1)];
                    let share = d_phi / r.len() as f64;
                    for e in r {
                        d_edge[(e, 0)] = share;
                    }
                }
                grads.mlp_ls = params.mlp_ls.backward(ls_cache, &d_edge)?.0;
            }
        }
    }

    let mut decay = 0.0;
    let active = params.active_mask(cfg);
    for ((p, g), on) in params.tensors().into_iter().zip(grads.tensors_mut()).zip(active) {
        if !on {
            continue;
        }
        if weight_decay != 0.0 {
            decay += p.sum_squares();
            g.axpy(weight_decay, p)?;
        }
    }
    let loss = data_loss + 0.5 * weight_decay * decay;
    Ok(LossAndGrads {
        loss,
        data_loss,
        grads,
        forward: fwd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localsim::{naive_localsim, SimilarityKind};
    use crate::model::Mlp;
    use crate::propagation::{precompute_bundle, PropagationConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (SparseGraph, Matrix, Vec<usize>) {
        let g = SparseGraph::from_edges(&[(0, 1), (1, 2), (2, 3), (3, 0), (1, 4), (4, 5)], 6).unwrap();
        let x = Matrix::from_rows(&[
            vec![1.0, 0.2, -0.3],
            vec![0.4, -1.0, 0.0],
            vec![0.0, 0.5, 0.9],
            vec![-0.7, 0.1, 0.3],
            vec![0.2, 0.2, 0.2],
            vec![1.5, -0.4, 0.8],
        ])
        .unwrap();
        (g, x, vec![0, 1, 0, 1, 2, 2])
    }

    fn cfg(k: usize) -> ModelConfig {
        ModelConfig {
            layers: k,
            in_dim: 3,
            hidden: 4,
            classes: 3,
            h_ls: 5,
            h_alpha: 6,
            sim_kind: SimilarityKind::Cosine,
            dropout: 0.0,
            weight_mode: WeightMode::NodeLevel,
            localsim_mode: LocalSimMode::Refined,
        }
    }

    fn stack(g: &SparseGraph, x: &Matrix, k: usize) -> PropagationStack {
        let pc = PropagationConfig {
            layers: k,
            ..PropagationConfig::default()
        };
        precompute_bundle(g, x, &pc).unwrap()
    }

    #[test]
    fn zero_parameters_give_uniform_predictions() {
        let (g, x, labels) = setup();
        let s = stack(&g, &x, 2);
        let c = cfg(2);
        let input = ModelInput::new(&g, &x, &s, c.sim_kind).unwrap();
        let p = ModelParameters::zeros(&c);
        let pred = predict(&p, &c, &input).unwrap();
        for i in 0..6 {
            for &v in pred.probs.row(i) {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let out = loss_and_gradients(&p, &c, &input, &labels, &[true; 6], 0.0, false, None).unwrap();
        assert!((out.loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_leaves_only_decay() {
        let (g, x, labels) = setup();
        let s = stack(&g, &x, 2);
        let c = cfg(2);
        let input = ModelInput::new(&g, &x, &s, c.sim_kind).unwrap();
        let p = ModelParameters::init(&c, &mut ChaCha8Rng::seed_from_u64(3));
        let wd = 0.01;
        let out = loss_and_gradients(&p, &c, &input, &labels, &[false; 6], wd, false, None).unwrap();
        let active = p.active_mask(&c);
        let norm: f64 = p
            .tensors()
            .iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(t, _)| t.sum_squares())
            .sum();
        assert!((out.loss - 0.5 * wd * norm).abs() < 1e-14);
        assert_eq!(out.data_loss, 0.0);
        for ((g, t), a) in out.grads.tensors().iter().zip(p.tensors()).zip(active) {
            let want = if a { t.scale(wd) } else { Matrix::zeros(t.rows(), t.cols()) };
            assert!(g.max_abs_diff(&want) < 1e-15);
        }
    }

    #[test]
    fn refined_reduces_to_naive_with_pass_through_perceptron() {
        let (g, x, _) = setup();
        let feats = edge_sim_features(&g, &x, SimilarityKind::Cosine).unwrap();
        // hidden units: relu(d) and relu(-d); output = u0 - u1 = d
        let mut mlp = Mlp::zeros(2, 2, 1);
        mlp.w1[(0, 0)] = 1.0;
        mlp.w1[(0, 1)] = -1.0;
        mlp.w2[(0, 0)] = 1.0;
        mlp.w2[(1, 0)] = -1.0;
        let refined = refined_localsim(&mlp, &feats, &g).unwrap();
        let naive = naive_localsim(&g, &x, SimilarityKind::Cosine).unwrap();
        for (a, b) in refined.phi.iter().zip(&naive.phi) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn refined_separates_equal_mean_neighborhoods() {
        // node 0: d in {0, 1}; node 3: d in {0.5, 0.5}
        let g = SparseGraph::from_edges(&[(0, 1), (0, 2), (3, 4), (3, 5)], 6).unwrap();
        let mut d = vec![0.0; g.directed_entry_count()];
        let r0 = g.row_range(0);
        d[r0.start + 1] = 1.0;
        for p in g.row_range(3) {
            d[p] = 0.5;
        }
        let feats = EdgeSimFeatures {
            d_sq: d.iter().map(|v| v * v).collect(),
            d,
        };
        let naive = neighborhood_mean(&g, &feats.d).unwrap();
        assert_eq!(naive[0], naive[3]);
        // one hidden unit reading d^2 only
        let mut mlp = Mlp::zeros(2, 1, 1);
        mlp.w1[(1, 0)] = 1.0;
        mlp.w2[(0, 0)] = 1.0;
        let phi = refined_localsim(&mlp, &feats, &g).unwrap().phi;
        assert!((phi[0] - 0.5).abs() < 1e-15);
        assert!((phi[3] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_perceptrons_are_constant() {
        let (g, x, _) = setup();
        let feats = edge_sim_features(&g, &x, SimilarityKind::Euclidean).unwrap();
        let mut mlp = Mlp::zeros(2, 3, 1);
        mlp.b2[(0, 0)] = 0.25;
        let phi = refined_localsim(&mlp, &feats, &g).unwrap().phi;
        assert!(phi.iter().all(|&p| p == 0.25));

        let w = fusion_weights(&Mlp::zeros(2, 4, 6), &LocalSimVector { phi: vec![0.3; 6] }, 2).unwrap();
        assert_eq!(w.alpha_identity.shape(), (6, 2));
        assert!(w.alpha_low.as_slice().iter().all(|&v| v == 0.0));

        let mlp = Mlp {
            w1: Matrix::from_rows(&[vec![0.5, -1.0], vec![0.2, 0.3]]).unwrap(),
            b1: Matrix::from_rows(&[vec![0.1, 0.4]]).unwrap(),
            w2: Matrix::from_vec(2, 9, (0..18).map(|v| v as f64 * 0.1 - 0.5).collect()).unwrap(),
            b2: Matrix::filled(1, 9, 0.05),
        };
        let w = fusion_weights(&mlp, &LocalSimVector { phi: vec![-0.4; 5] }, 3).unwrap();
        for m in [&w.alpha_identity, &w.alpha_low, &w.alpha_high] {
            assert_eq!(m.shape(), (5, 3));
            for i in 1..5 {
                assert_eq!(m.row(i), m.row(0));
            }
        }
        assert!(fusion_weights(&mlp, &LocalSimVector { phi: vec![0.0; 5] }, 2).is_err());
    }

    #[test]
    fn layer_mismatch_is_an_input_error() {
        let (g, x, _) = setup();
        let s = stack(&g, &x, 2);
        let c = cfg(3);
        let input = ModelInput::new(&g, &x, &s, c.sim_kind).unwrap();
        let p = ModelParameters::zeros(&c);
        assert!(matches!(predict(&p, &c, &input), Err(Error::Input(_))));
    }

    #[test]
    fn dropout_zero_ignores_training_flag() {
        let (g, x, _) = setup();
        let s = stack(&g, &x, 2);
        let c = cfg(2);
        let input = ModelInput::new(&g, &x, &s, c.sim_kind).unwrap();
        let p = ModelParameters::init(&c, &mut ChaCha8Rng::seed_from_u64(1));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = forward(&p, &c, &input, true, Some(&mut rng)).unwrap();
        let b = forward(&p, &c, &input, false, None).unwrap();
        assert_eq!(a.prediction, b.prediction);

        let with_drop = ModelConfig { dropout: 0.5, ..c };
        assert!(forward(&p, &with_drop, &input, true, None).is_err());
        let d = forward(&p, &with_drop, &input, true, Some(&mut rng)).unwrap();
        assert_ne!(d.prediction, b.prediction);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let pred = PredictionMatrix {
            probs: Matrix::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.8], vec![1.0 / 3.0; 3][..2].to_vec()]).unwrap(),
        };
        assert_eq!(pred.argmax(), vec![0, 1, 0]);
        assert!(accuracy(&pred, &[0, 1, 1], &[false; 3]).is_err());
        assert_eq!(accuracy(&pred, &[0, 1, 1], &[true, false, false]).unwrap(), 1.0);
        assert_eq!(accuracy(&pred, &[0, 1, 1], &[false, false, true]).unwrap(), 0.0);
    }
}
