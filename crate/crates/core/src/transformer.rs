//! The hardmax-gated transformer class and its rescaled velocity wrapper.
//!
//! A network maps x ∈ ℝ^d to ℝ^{d_out} by patchifying x into l tokens of
//! dimension d_patch, embedding tokens together with one-hot position columns,
//! alternating attention and feedforward layers (both with skip connections),
//! reading out the first token, and radially clamping the output into the
//! ball of radius B. Attention gates token interactions with a column-wise
//! hardmax of the key-query scores; the gate is excluded from gradients.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LfError, Result};
use crate::field::VelocityField;
use crate::tensor::{Tape, Tensor};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransformerSpec {
    /// Input dimension, d = d_patch · l.
    pub d: usize,
    /// Output dimension.
    pub d_out: usize,
    /// Token count.
    pub l: usize,
    /// Patch dimension.
    pub d_patch: usize,
    /// Attention/feedforward layer pairs.
    pub n_layers: usize,
    /// Heads per attention layer; d_model = h · d_v.
    pub h: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub d_ff: usize,
    /// Output-norm bound B (radial clamp at readout).
    pub output_bound: f64,
    /// Lipschitz budget γ, enforced softly via weight clipping during training.
    pub lipschitz_budget: f64,
    /// Advisory sparsity budget (nonzero-parameter count), reported not enforced.
    pub sparsity_budget: Option<u64>,
}

impl TransformerSpec {
    pub fn d_model(&self) -> usize {
        self.h * self.d_v
    }

    pub fn validate(&self) -> Result<()> {
        if self.d != self.d_patch * self.l {
            return Err(LfError::Config(format!(
                "d = {} must equal d_patch*l = {}*{}",
                self.d, self.d_patch, self.l
            )));
        }
        let dims = [
            self.d, self.d_out, self.l, self.d_patch, self.h, self.d_k, self.d_v, self.d_ff,
        ];
        if dims.iter().any(|&x| x == 0) {
            return Err(LfError::Config("all dimensions must be >= 1".to_string()));
        }
        if !self.output_bound.is_finite() || self.output_bound <= 0.0 {
            return Err(LfError::Config("output bound must be positive".to_string()));
        }
        Ok(())
    }

    /// Default patch layout for a given input dimension: a single token up to
    /// dimension 8, two tokens beyond (padding the input with zeros when the
    /// dimension is odd).
    pub fn default_layout(dim: usize) -> (usize, usize) {
        if dim <= 8 {
            (dim, 1)
        } else {
            (dim.div_ceil(2), 2)
        }
    }
}

/// One attention head: W_Q, W_K are d_k×d_model, W_V is d_v×d_model,
/// W_O is d_model×d_v.
#[derive(Debug, Clone)]
pub struct HeadWeights {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
}

/// One attention + feedforward layer pair.
#[derive(Debug, Clone)]
pub struct LayerWeights {
    pub heads: Vec<HeadWeights>,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Debug, Clone)]
pub struct TransformerNet {
    pub spec: TransformerSpec,
    pub a_in: Tensor,
    pub b_in: Tensor,
    pub layers: Vec<LayerWeights>,
    pub a_out: Tensor,
    pub b_out: Tensor,
}

impl TransformerNet {
    /// All-zero weights (forward output is then clamp(b_out)).
    pub fn zeros(spec: TransformerSpec) -> Result<TransformerNet> {
        spec.validate()?;
        let dm = spec.d_model();
        let layers = (0..spec.n_layers)
            .map(|_| LayerWeights {
                heads: (0..spec.h)
                    .map(|_| HeadWeights {
                        w_q: Tensor::zeros(spec.d_k, dm),
                        w_k: Tensor::zeros(spec.d_k, dm),
                        w_v: Tensor::zeros(spec.d_v, dm),
                        w_o: Tensor::zeros(dm, spec.d_v),
                    })
                    .collect(),
                w1: Tensor::zeros(spec.d_ff, dm),
                b1: Tensor::zeros(spec.d_ff, 1),
                w2: Tensor::zeros(dm, spec.d_ff),
                b2: Tensor::zeros(dm, 1),
            })
            .collect();
        Ok(TransformerNet {
            a_in: Tensor::zeros(dm, spec.d_patch + spec.l),
            b_in: Tensor::zeros(dm, 1),
            a_out: Tensor::zeros(spec.d_out, dm),
            b_out: Tensor::zeros(spec.d_out, 1),
            layers,
            spec,
        })
    }

    /// Uniform init in [−1/√fan_in, 1/√fan_in]; biases start at zero.
    pub fn init<R: Rng>(spec: TransformerSpec, rng: &mut R) -> Result<TransformerNet> {
        let mut net = TransformerNet::zeros(spec)?;
        let fill = |t: &Tensor, rng: &mut R| -> Tensor {
            let fan_in = t.cols();
            let a = 1.0 / (fan_in as f64).sqrt();
            let data: Vec<f64> = (0..t.rows() * t.cols())
                .map(|_| rng.gen_range(-a..a))
                .collect();
            Tensor::matrix(t.rows(), t.cols(), data).unwrap()
        };
        net.a_in = fill(&net.a_in, rng);
        for layer in &mut net.layers {
            for head in &mut layer.heads {
                head.w_q = fill(&head.w_q, rng);
                head.w_k = fill(&head.w_k, rng);
                head.w_v = fill(&head.w_v, rng);
                head.w_o = fill(&head.w_o, rng);
            }
            layer.w1 = fill(&layer.w1, rng);
            layer.w2 = fill(&layer.w2, rng);
        }
        net.a_out = fill(&net.a_out, rng);
        Ok(net)
    }

    /// Canonical parameter order, stable across runs and serialization.
    pub fn param_names(spec: &TransformerSpec) -> Vec<String> {
        let mut names = vec!["a_in".to_string(), "b_in".to_string()];
        for r in 0..spec.n_layers {
            for s in 0..spec.h {
                for w in ["w_q", "w_k", "w_v", "w_o"] {
                    names.push(format!("layer{r}.head{s}.{w}"));
                }
            }
            for w in ["ff.w1", "ff.b1", "ff.w2", "ff.b2"] {
                names.push(format!("layer{r}.{w}"));
            }
        }
        names.push("a_out".to_string());
        names.push("b_out".to_string());
        names
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.a_in, &self.b_in];
        for layer in &self.layers {
            for head in &layer.heads {
                out.extend([&head.w_q, &head.w_k, &head.w_v, &head.w_o]);
            }
            out.extend([&layer.w1, &layer.b1, &layer.w2, &layer.b2]);
        }
        out.extend([&self.a_out, &self.b_out]);
        out
    }

    /// Rebuild the network with parameters transformed in canonical order.
    pub fn map_params(&self, mut f: impl FnMut(&Tensor) -> Tensor) -> TransformerNet {
        TransformerNet {
            spec: self.spec.clone(),
            a_in: f(&self.a_in),
            b_in: f(&self.b_in),
            layers: self
                .layers
                .iter()
                .map(|layer| LayerWeights {
                    heads: layer
                        .heads
                        .iter()
                        .map(|head| HeadWeights {
                            w_q: f(&head.w_q),
                            w_k: f(&head.w_k),
                            w_v: f(&head.w_v),
                            w_o: f(&head.w_o),
                        })
                        .collect(),
                    w1: f(&layer.w1),
                    b1: f(&layer.b1),
                    w2: f(&layer.w2),
                    b2: f(&layer.b2),
                })
                .collect(),
            a_out: f(&self.a_out),
            b_out: f(&self.b_out),
        }
    }

    /// Clone with every parameter registered on the tape for training.
    pub fn tracked(&self, tape: &Tape) -> TransformerNet {
        self.map_params(|t| tape.watch(t))
    }

    /// Nonzero-parameter count (the sparsity measure J).
    pub fn nonzero_count(&self) -> u64 {
        self.params()
            .iter()
            .map(|t| t.data().iter().filter(|&&x| x != 0.0).count() as u64)
            .sum()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_impl(x, None)
    }

    /// Forward pass that also reports the max absolute value over all
    /// intermediate token matrices.
    pub fn forward_with_stats(&self, x: &Tensor) -> Result<(Tensor, f64)> {
        let mut max_abs = 0.0;
        let out = self.forward_impl(x, Some(&mut max_abs))?;
        Ok((out, max_abs))
    }

    fn forward_impl(&self, x: &Tensor, mut stats: Option<&mut f64>) -> Result<Tensor> {
        if x.data().len() != self.spec.d {
            return Err(LfError::Dimension(format!(
                "forward: input length {} vs d = {}",
                x.data().len(),
                self.spec.d
            )));
        }
        let tokens = patchify(x, self.spec.d_patch, self.spec.l)?;
        let mut z = embed_input(&tokens, &self.a_in, &self.b_in)?;
        let mut observe = |t: &Tensor| {
            if let Some(m) = stats.as_deref_mut() {
                for v in t.data() {
                    *m = m.max(v.abs());
                }
            }
        };
        observe(&z);
        for layer in &self.layers {
            z = attention_layer(&z, &layer.heads)?;
            observe(&z);
            z = feedforward_layer(&z, &layer.w1, &layer.b1, &layer.w2, &layer.b2)?;
            observe(&z);
        }
        let z1 = z.first_col();
        let out = self.a_out.matmul(&z1)?.add(&self.b_out)?;
        Ok(out.clamp_norm(self.spec.output_bound))
    }
}

/// Split x into l contiguous patches of dimension d_patch (token = column).
pub fn patchify(x: &Tensor, d_patch: usize, l: usize) -> Result<Tensor> {
    x.to_tokens(d_patch, l)
}

/// Z₀ = A_in·[X; I_l] + b_in·𝟙ᵀ — position encoding via the identity block.
pub fn embed_input(tokens: &Tensor, a_in: &Tensor, b_in: &Tensor) -> Result<Tensor> {
    let l = tokens.cols();
    let stacked = tokens.concat_rows(&Tensor::eye(l))?;
    a_in.matmul(&stacked)?.add_col(b_in)
}

/// Skip connection plus per-head gated interaction:
/// Z + Σ_s W_O (W_V Z) [ (W_K Z)ᵀ(W_Q Z) ⊙ σ_H((W_K Z)ᵀ(W_Q Z)) ].
/// The hardmax factor is detached: gradients flow only through the scores.
pub fn attention_layer(z: &Tensor, heads: &[HeadWeights]) -> Result<Tensor> {
    let mut out = z.clone();
    for head in heads {
        let q = head.w_q.matmul(z)?;
        let k = head.w_k.matmul(z)?;
        let scores = k.transpose().matmul(&q)?;
        let gate = scores.detach().hardmax_cols();
        let gated = scores.hadamard(&gate)?;
        let v = head.w_v.matmul(z)?;
        let contrib = head.w_o.matmul(&v.matmul(&gated)?)?;
        out = out.add(&contrib)?;
    }
    Ok(out)
}

/// Y + W₂·relu(W₁Y + b₁𝟙ᵀ) + b₂𝟙ᵀ, applied token-wise.
pub fn feedforward_layer(
    y: &Tensor,
    w1: &Tensor,
    b1: &Tensor,
    w2: &Tensor,
    b2: &Tensor,
) -> Result<Tensor> {
    let hidden = w1.matmul(y)?.add_col(b1)?.relu();
    y.add(&w2.matmul(&hidden)?)?.add_col(b2)
}

/// Largest singular value estimate by power iteration on AᵀA.
pub fn operator_norm(m: &Tensor, iters: usize) -> f64 {
    let (r, c) = (m.rows(), m.cols());
    // deterministic non-degenerate start
    let mut v: Vec<f64> = (0..c).map(|j| 1.0 + (j as f64) * 1e-3).collect();
    let a = m.data();
    let mut sigma = 0.0;
    for _ in 0..iters {
        // u = A v
        let mut u = vec![0.0; r];
        for i in 0..r {
            u[i] = (0..c).map(|j| a[i * c + j] * v[j]).sum();
        }
        // w = Aᵀ u
        let mut w = vec![0.0; c];
        for j in 0..c {
            w[j] = (0..r).map(|i| a[i * c + j] * u[i]).sum();
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        sigma = (u.iter().map(|x| x * x).sum::<f64>() / (vnorm * vnorm)).sqrt();
        for j in 0..c {
            v[j] = w[j] / norm;
        }
    }
    sigma
}

// ---------------------------------------------------------------------------
// serialization

#[derive(Serialize, Deserialize)]
struct NetDocument {
    spec: TransformerSpec,
    weights: BTreeMap<String, Vec<f64>>,
}

impl TransformerNet {
    pub fn to_json(&self) -> Result<String> {
        let names = TransformerNet::param_names(&self.spec);
        let params = self.params();
        debug_assert_eq!(names.len(), params.len());
        let weights: BTreeMap<String, Vec<f64>> = names
            .into_iter()
            .zip(params)
            .map(|(n, p)| (n, p.data().to_vec()))
            .collect();
        Ok(serde_json::to_string_pretty(&NetDocument {
            spec: self.spec.clone(),
            weights,
        })?)
    }

    pub fn from_json(text: &str) -> Result<TransformerNet> {
        let doc: NetDocument = serde_json::from_str(text)?;
        let mut net = TransformerNet::zeros(doc.spec.clone())?;
        let names = TransformerNet::param_names(&doc.spec);
        let mut values = Vec::with_capacity(names.len());
        {
            let shapes: Vec<(usize, usize)> =
                net.params().iter().map(|p| (p.rows(), p.cols())).collect();
            for (name, (r, c)) in names.iter().zip(shapes) {
                let data = doc.weights.get(name).ok_or_else(|| {
                    LfError::Config(format!("checkpoint missing weight {name}"))
                })?;
                values.push(Tensor::matrix(r, c, data.clone())?);
            }
        }
        let mut it = values.into_iter();
        net = net.map_params(|_| it.next().unwrap());
        Ok(net)
    }
}

// ---------------------------------------------------------------------------
// rescaled velocity wrapper

/// A velocity field v(x,t) = ṽ(proj/rescale(x), t/T) with the inner network
/// taking the box-projected, [0,1]-rescaled spatial input plus scaled time.
#[derive(Debug, Clone)]
pub struct RescaledVelocityNet {
    pub inner: TransformerNet,
    /// Latent dimension d (inner input dimension covers d+1 with zero padding).
    pub latent_dim: usize,
    /// Box radius R: spatial input projected onto [−R, R]^d.
    pub box_radius: f64,
    /// Horizon T; time is fed as t/T.
    pub horizon: f64,
}

impl RescaledVelocityNet {
    pub fn new(
        inner: TransformerNet,
        latent_dim: usize,
        box_radius: f64,
        horizon: f64,
    ) -> Result<RescaledVelocityNet> {
        if inner.spec.d < latent_dim + 1 {
            return Err(LfError::Config(format!(
                "inner input dim {} cannot hold d+1 = {}",
                inner.spec.d,
                latent_dim + 1
            )));
        }
        if inner.spec.d_out != latent_dim {
            return Err(LfError::Config(format!(
                "inner output dim {} vs latent dim {latent_dim}",
                inner.spec.d_out
            )));
        }
        if !(0.0 < horizon && horizon < 1.0) || box_radius <= 0.0 {
            return Err(LfError::Config(
                "need 0 < T < 1 and R > 0".to_string(),
            ));
        }
        Ok(RescaledVelocityNet {
            inner,
            latent_dim,
            box_radius,
            horizon,
        })
    }

    /// Spec for the inner network given the latent dimension: input covers
    /// d+1 coordinates (time appended), zero-padded to d_patch·l.
    pub fn inner_spec(
        latent_dim: usize,
        n_layers: usize,
        h: usize,
        d_k: usize,
        d_v: usize,
        d_ff: usize,
        output_bound: f64,
        lipschitz_budget: f64,
    ) -> TransformerSpec {
        let (d_patch, l) = TransformerSpec::default_layout(latent_dim + 1);
        TransformerSpec {
            d: d_patch * l,
            d_out: latent_dim,
            l,
            d_patch,
            n_layers,
            h,
            d_k,
            d_v,
            d_ff,
            output_bound,
            lipschitz_budget,
            sparsity_budget: None,
        }
    }

    /// Spatial Lipschitz budget of the wrapper: γ/2R.
    pub fn gamma_x(&self) -> f64 {
        self.inner.spec.lipschitz_budget / (2.0 * self.box_radius)
    }

    /// Time Lipschitz budget: γ/T.
    pub fn gamma_t(&self) -> f64 {
        self.inner.spec.lipschitz_budget / self.horizon
    }

    /// Inner-network input for (x, t): project to [−R,R]^d, rescale to
    /// [0,1]^d, append t/T, pad with zeros.
    pub fn inner_input(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        if x.len() != self.latent_dim {
            return Err(LfError::Dimension(format!(
                "velocity input length {} vs d = {}",
                x.len(),
                self.latent_dim
            )));
        }
        if !(0.0..=self.horizon).contains(&t) {
            return Err(LfError::Contract(format!(
                "t = {t} outside [0, {}]",
                self.horizon
            )));
        }
        let r = self.box_radius;
        let mut input = vec![0.0; self.inner.spec.d];
        for (i, &xi) in x.iter().enumerate() {
            input[i] = (xi.clamp(-r, r) + r) / (2.0 * r);
        }
        input[self.latent_dim] = t / self.horizon;
        Ok(input)
    }

    /// Forward through an explicit inner network (tracked weights during
    /// training share this path).
    pub fn velocity_with(&self, inner: &TransformerNet, x: &[f64], t: f64) -> Result<Tensor> {
        let input = Tensor::col(self.inner_input(x, t)?)?;
        inner.forward(&input)
    }
}

impl VelocityField for RescaledVelocityNet {
    fn dim(&self) -> usize {
        self.latent_dim
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn velocity(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.velocity_with(&self.inner, x, t)?.data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn small_spec() -> TransformerSpec {
        TransformerSpec {
            d: 2,
            d_out: 1,
            l: 1,
            d_patch: 2,
            n_layers: 2,
            h: 2,
            d_k: 2,
            d_v: 3,
            d_ff: 5,
            output_bound: 10.0,
            lipschitz_budget: 50.0,
            sparsity_budget: None,
        }
    }

    #[test]
    fn patchify_blocks_and_identity() {
        let x = Tensor::col(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let tok = patchify(&x, 2, 2).unwrap();
        assert_eq!(tok.data(), &[1.0, 3.0, 2.0, 4.0]); // cols [1,2],[3,4]
        let single = patchify(&x, 4, 1).unwrap();
        assert_eq!(single.data(), x.data());
    }

    #[test]
    fn embed_constant_and_position_columns() {
        let tokens = Tensor::matrix(1, 3, vec![0.3, 0.6, 0.9]).unwrap();
        // A_in = 0, b_in = c
        let z = embed_input(
            &tokens,
            &Tensor::zeros(2, 4),
            &Tensor::col(vec![7.0, -1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(z.data(), &[7.0, 7.0, 7.0, -1.0, -1.0, -1.0]);

        // A_in selecting the identity block reproduces one-hot positions
        let mut a = vec![0.0; 3 * 4];
        for j in 0..3 {
            a[j * 4 + 1 + j] = 1.0;
        }
        let a_in = Tensor::matrix(3, 4, a).unwrap();
        let z = embed_input(&tokens, &a_in, &Tensor::zeros(3, 1)).unwrap();
        assert_eq!(z.data(), Tensor::eye(3).data());
    }

    #[test]
    fn embed_matches_per_column_recomputation() {
        let mut rng = substream(3, "embed");
        let tokens =
            Tensor::matrix(2, 3, crate::rng::standard_normal_vec(&mut rng, 6)).unwrap();
        let a_in = Tensor::matrix(4, 5, crate::rng::standard_normal_vec(&mut rng, 20)).unwrap();
        let b_in = Tensor::col(crate::rng::standard_normal_vec(&mut rng, 4)).unwrap();
        let z = embed_input(&tokens, &a_in, &b_in).unwrap();
        for j in 0..3 {
            let mut col_in = vec![tokens.data()[j], tokens.data()[3 + j], 0.0, 0.0, 0.0];
            col_in[2 + j] = 1.0;
            for i in 0..4 {
                let want: f64 = (0..5).map(|k| a_in.data()[i * 5 + k] * col_in[k]).sum::<f64>()
                    + b_in.data()[i];
                assert!((z.data()[i * 3 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_zero_wo_is_identity() {
        let mut rng = substream(4, "attn");
        let spec = small_spec();
        let mut net = TransformerNet::init(spec.clone(), &mut rng).unwrap();
        for layer in &mut net.layers {
            for head in &mut layer.heads {
                head.w_o = Tensor::zeros(spec.d_model(), spec.d_v);
            }
        }
        let z = Tensor::matrix(spec.d_model(), 1, crate::rng::standard_normal_vec(&mut rng, 6))
            .unwrap();
        let y = attention_layer(&z, &net.layers[0].heads).unwrap();
        assert_eq!(y.data(), z.data());
    }

    #[test]
    fn attention_single_head_single_token_recomputation() {
        let mut rng = substream(5, "attn1");
        let dm = 4;
        let head = HeadWeights {
            w_q: Tensor::matrix(2, dm, crate::rng::standard_normal_vec(&mut rng, 2 * dm)).unwrap(),
            w_k: Tensor::matrix(2, dm, crate::rng::standard_normal_vec(&mut rng, 2 * dm)).unwrap(),
            w_v: Tensor::matrix(dm, dm, crate::rng::standard_normal_vec(&mut rng, dm * dm))
                .unwrap(),
            w_o: Tensor::matrix(dm, dm, crate::rng::standard_normal_vec(&mut rng, dm * dm))
                .unwrap(),
        };
        let z = Tensor::col(crate::rng::standard_normal_vec(&mut rng, dm)).unwrap();
        let y = attention_layer(&z, std::slice::from_ref(&head)).unwrap();
        // l=1: hardmax of the 1x1 score is 1, so y = z + W_O W_V z (qᵀk)
        let q = head.w_q.matmul(&z).unwrap();
        let k = head.w_k.matmul(&z).unwrap();
        let qtk: f64 = q.data().iter().zip(k.data()).map(|(a, b)| a * b).sum();
        let direct = z
            .add(
                &head
                    .w_o
                    .matmul(&head.w_v.matmul(&z).unwrap())
                    .unwrap()
                    .scale(qtk),
            )
            .unwrap();
        for (a, b) in y.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn feedforward_zero_w2_is_identity_plus_bias() {
        let mut rng = substream(6, "ff");
        let y = Tensor::matrix(3, 2, crate::rng::standard_normal_vec(&mut rng, 6)).unwrap();
        let out = feedforward_layer(
            &y,
            &Tensor::matrix(4, 3, crate::rng::standard_normal_vec(&mut rng, 12)).unwrap(),
            &Tensor::zeros(4, 1),
            &Tensor::zeros(3, 4),
            &Tensor::zeros(3, 1),
        )
        .unwrap();
        assert_eq!(out.data(), y.data());
    }

    #[test]
    fn feedforward_matches_direct_recomputation() {
        let mut rng = substream(7, "ff2");
        let y = Tensor::matrix(3, 2, crate::rng::standard_normal_vec(&mut rng, 6)).unwrap();
        let w1 = Tensor::matrix(4, 3, crate::rng::standard_normal_vec(&mut rng, 12)).unwrap();
        let b1 = Tensor::col(crate::rng::standard_normal_vec(&mut rng, 4)).unwrap();
        let w2 = Tensor::matrix(3, 4, crate::rng::standard_normal_vec(&mut rng, 12)).unwrap();
        let b2 = Tensor::col(crate::rng::standard_normal_vec(&mut rng, 3)).unwrap();
        let out = feedforward_layer(&y, &w1, &b1, &w2, &b2).unwrap();
        for j in 0..2 {
            for i in 0..3 {
                let mut hidden = vec![0.0; 4];
                for p in 0..4 {
                    let pre: f64 = (0..3).map(|k| w1.data()[p * 3 + k] * y.data()[k * 2 + j]).sum::<f64>()
                        + b1.data()[p];
                    hidden[p] = pre.max(0.0);
                }
                let want: f64 = y.data()[i * 2 + j]
                    + (0..4).map(|p| w2.data()[i * 4 + p] * hidden[p]).sum::<f64>()
                    + b2.data()[i];
                assert!((out.data()[i * 2 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_net_outputs_clamped_bias() {
        let mut net = TransformerNet::zeros(small_spec()).unwrap();
        net.b_out = Tensor::col(vec![3.0]).unwrap();
        let out = net.forward(&Tensor::col(vec![0.1, 0.2]).unwrap()).unwrap();
        assert_eq!(out.data(), &[3.0]);
    }

    #[test]
    fn forward_respects_output_bound() {
        let mut rng = substream(8, "bound");
        let mut spec = small_spec();
        spec.output_bound = 0.5;
        let net = TransformerNet::init(spec, &mut rng).unwrap();
        for _ in 0..1000 {
            let x = Tensor::col(crate::rng::standard_normal_vec(&mut rng, 2)).unwrap();
            let out = net.forward(&x).unwrap();
            let n = out.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn serialization_round_trip_is_bit_exact() {
        let mut rng = substream(9, "serde");
        let net = TransformerNet::init(small_spec(), &mut rng).unwrap();
        let json = net.to_json().unwrap();
        let back = TransformerNet::from_json(&json).unwrap();
        assert_eq!(net.spec, back.spec);
        for (a, b) in net.params().iter().zip(back.params()) {
            assert_eq!(a.data(), b.data());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn operator_norm_matches_known_matrix() {
        // diag(3, 1) has spectral norm 3
        let m = Tensor::matrix(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((operator_norm(&m, 30) - 3.0).abs() < 1e-9);
        assert_eq!(operator_norm(&Tensor::zeros(3, 2), 10), 0.0);
    }

    #[test]
    fn velocity_wrapper_projects_and_rescales() {
        let mut rng = substream(10, "vel");
        let spec = RescaledVelocityNet::inner_spec(1, 1, 2, 2, 3, 4, 8.0, 20.0);
        let inner = TransformerNet::init(spec, &mut rng).unwrap();
        let v = RescaledVelocityNet::new(inner, 1, 1.0, 0.9).unwrap();

        // far outside the box equals the projection
        let a = v.velocity(&[100.0], 0.5).unwrap();
        let b = v.velocity(&[1.0], 0.5).unwrap();
        assert_eq!(a, b);

        // R=1, x=1 maps the spatial input to 1
        let input = v.inner_input(&[1.0], 0.0).unwrap();
        assert_eq!(input[0], 1.0);
        assert_eq!(input[1], 0.0);

        assert!(v.velocity(&[0.0], 0.95).is_err());
        assert!(v.velocity(&[0.0], -0.01).is_err());
    }

    #[test]
    fn forward_continuity_probe() {
        let mut rng = substream(12, "cont");
        let net = TransformerNet::init(small_spec(), &mut rng).unwrap();
        for _ in 0..200 {
            let x = crate::rng::standard_normal_vec(&mut rng, 2);
            let y0 = net.forward(&Tensor::col(x.clone()).unwrap()).unwrap();
            let eps = 1e-7;
            let xp = vec![x[0] + eps / (2f64).sqrt(), x[1] + eps / (2f64).sqrt()];
            let y1 = net.forward(&Tensor::col(xp).unwrap()).unwrap();
            let diff: f64 = y0
                .data()
                .iter()
                .zip(y1.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            // local Lipschitz estimate from a coarser finite difference
            let h = 1e-3;
            let xq = vec![x[0] + h / (2f64).sqrt(), x[1] + h / (2f64).sqrt()];
            let y2 = net.forward(&Tensor::col(xq).unwrap()).unwrap();
            let local = y0
                .data()
                .iter()
                .zip(y2.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                / h;
            assert!(diff <= 10.0 * (local + 1.0) * eps);
        }
    }
}
