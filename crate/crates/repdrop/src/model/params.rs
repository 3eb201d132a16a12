use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;

/// Weights of one transformer block.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub w_q: Array2<f64>,
    pub b_q: Array1<f64>,
    pub w_k: Array2<f64>,
    pub b_k: Array1<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w_fc: Array2<f64>,
    pub b_fc: Array1<f64>,
    pub w_proj: Array2<f64>,
    pub b_proj: Array1<f64>,
}

/// All model weights. The output projection is tied to `tok_emb`, so logits
/// are `h . tok_emb^T` and there is no separate unembedding matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    /// (vocab, d_model)
    pub tok_emb: Array2<f64>,
    /// (max_len, d_model) learned absolute position embeddings.
    pub pos_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Array1<f64>,
    pub lnf_b: Array1<f64>,
}

/// Gradients share the parameter layout exactly.
pub type Gradients = Parameters;

const INIT_STD: f64 = 0.02;

fn normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    // Box-Muller keeps initialization reproducible across platforms.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random::<f64>();
    std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn normal_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| normal(rng, INIT_STD))
}

impl Parameters {
    /// GPT-style initialization: N(0, 0.02^2) for embeddings and weight
    /// matrices, zero biases, unit layer-norm gains.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.d_model;
        let layers = (0..cfg.layers)
            .map(|_| LayerParams {
                ln1_g: Array1::ones(d),
                ln1_b: Array1::zeros(d),
                w_q: normal_mat(&mut rng, d, d),
                b_q: Array1::zeros(d),
                w_k: normal_mat(&mut rng, d, d),
                b_k: Array1::zeros(d),
                w_v: normal_mat(&mut rng, d, d),
                b_v: Array1::zeros(d),
                w_o: normal_mat(&mut rng, d, d),
                b_o: Array1::zeros(d),
                ln2_g: Array1::ones(d),
                ln2_b: Array1::zeros(d),
                w_fc: normal_mat(&mut rng, d, cfg.d_ff),
                b_fc: Array1::zeros(cfg.d_ff),
                w_proj: normal_mat(&mut rng, cfg.d_ff, d),
                b_proj: Array1::zeros(d),
            })
            .collect();
        Parameters {
            tok_emb: normal_mat(&mut rng, cfg.vocab, d),
            pos_emb: normal_mat(&mut rng, cfg.max_len, d),
            layers,
            lnf_g: Array1::ones(d),
            lnf_b: Array1::zeros(d),
        }
    }

    /// Every tensor zero, layer-norm gains included. The resulting model
    /// emits all-zero logits — the uniform distribution — independent of
    /// context, which several probes rely on.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let layers = (0..cfg.layers)
            .map(|_| LayerParams {
                ln1_g: Array1::zeros(d),
                ln1_b: Array1::zeros(d),
                w_q: Array2::zeros((d, d)),
                b_q: Array1::zeros(d),
                w_k: Array2::zeros((d, d)),
                b_k: Array1::zeros(d),
                w_v: Array2::zeros((d, d)),
                b_v: Array1::zeros(d),
                w_o: Array2::zeros((d, d)),
                b_o: Array1::zeros(d),
                ln2_g: Array1::zeros(d),
                ln2_b: Array1::zeros(d),
                w_fc: Array2::zeros((d, cfg.d_ff)),
                b_fc: Array1::zeros(cfg.d_ff),
                w_proj: Array2::zeros((cfg.d_ff, d)),
                b_proj: Array1::zeros(d),
            })
            .collect();
        Parameters {
            tok_emb: Array2::zeros((cfg.vocab, d)),
            pos_emb: Array2::zeros((cfg.max_len, d)),
            layers,
            lnf_g: Array1::zeros(d),
            lnf_b: Array1::zeros(d),
        }
    }

    /// Flat views over every tensor in a fixed, documented order:
    /// tok_emb, pos_emb, then per layer
    /// (ln1_g, ln1_b, w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o,
    ///  ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj), then lnf_g, lnf_b.
    /// The optimizer state and the checkpoint format both assume this order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(4 + 16 * self.layers.len());
        out.push(self.tok_emb.as_slice().unwrap());
        out.push(self.pos_emb.as_slice().unwrap());
        for l in &self.layers {
            out.push(l.ln1_g.as_slice().unwrap());
            out.push(l.ln1_b.as_slice().unwrap());
            out.push(l.w_q.as_slice().unwrap());
            out.push(l.b_q.as_slice().unwrap());
            out.push(l.w_k.as_slice().unwrap());
            out.push(l.b_k.as_slice().unwrap());
            out.push(l.w_v.as_slice().unwrap());
            out.push(l.b_v.as_slice().unwrap());
            out.push(l.w_o.as_slice().unwrap());
            out.push(l.b_o.as_slice().unwrap());
            out.push(l.ln2_g.as_slice().unwrap());
            out.push(l.ln2_b.as_slice().unwrap());
            out.push(l.w_fc.as_slice().unwrap());
            out.push(l.b_fc.as_slice().unwrap());
            out.push(l.w_proj.as_slice().unwrap());
            out.push(l.b_proj.as_slice().unwrap());
        }
        out.push(self.lnf_g.as_slice().unwrap());
        out.push(self.lnf_b.as_slice().unwrap());
        out
    }

    /// Mutable counterpart of [`Parameters::slices`], same order.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(4 + 16 * self.layers.len());
        out.push(self.tok_emb.as_slice_mut().unwrap());
        out.push(self.pos_emb.as_slice_mut().unwrap());
        for l in &mut self.layers {
            out.push(l.ln1_g.as_slice_mut().unwrap());
            out.push(l.ln1_b.as_slice_mut().unwrap());
            out.push(l.w_q.as_slice_mut().unwrap());
            out.push(l.b_q.as_slice_mut().unwrap());
            out.push(l.w_k.as_slice_mut().unwrap());
            out.push(l.b_k.as_slice_mut().unwrap());
            out.push(l.w_v.as_slice_mut().unwrap());
            out.push(l.b_v.as_slice_mut().unwrap());
            out.push(l.w_o.as_slice_mut().unwrap());
            out.push(l.b_o.as_slice_mut().unwrap());
            out.push(l.ln2_g.as_slice_mut().unwrap());
            out.push(l.ln2_b.as_slice_mut().unwrap());
            out.push(l.w_fc.as_slice_mut().unwrap());
            out.push(l.b_fc.as_slice_mut().unwrap());
            out.push(l.w_proj.as_slice_mut().unwrap());
            out.push(l.b_proj.as_slice_mut().unwrap());
        }
        out.push(self.lnf_g.as_slice_mut().unwrap());
        out.push(self.lnf_b.as_slice_mut().unwrap());
        out
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// self += c * other, tensor by tensor.
    pub fn scaled_add(&mut self, c: f64, other: &Parameters) {
        let mut mine = self.slices_mut();
        let theirs = other.slices();
        assert_eq!(mine.len(), theirs.len(), "parameter layout mismatch");
        for (a, b) in mine.iter_mut().zip(theirs) {
            assert_eq!(a.len(), b.len(), "parameter tensor shape mismatch");
            for (x, y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for s in self.slices_mut() {
            for x in s {
                *x *= c;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|&x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}
