//! Encoder/decoder pre-training on the unit cube.
//!
//! The encoder maps data points y ∈ [0,1]^D to latents in [0,1]^d (a hard
//! clamp after readout makes the range constraint structural); the decoder
//! maps latents back to ℝ^D. Both are transformer networks trained jointly by
//! minimizing mean squared reconstruction error.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{LfError, Result};
use crate::flow::Adam;
use crate::oracle::DiscreteTarget;
use crate::rng::substream;
use crate::tensor::{Tape, Tensor};
use crate::transformer::{TransformerNet, TransformerSpec};

/// Jointly trained encoder (D → d, range ⊆ [0,1]^d) and decoder (d → D).
#[derive(Debug, Clone)]
pub struct AutoencoderPair {
    pub encoder: TransformerNet,
    pub decoder: TransformerNet,
}

impl AutoencoderPair {
    pub fn new(encoder: TransformerNet, decoder: TransformerNet) -> Result<AutoencoderPair> {
        if encoder.spec.d_out != decoder.spec.d {
            return Err(LfError::Config(format!(
                "encoder output dim {} vs decoder input dim {}",
                encoder.spec.d_out, decoder.spec.d
            )));
        }
        Ok(AutoencoderPair { encoder, decoder })
    }

    pub fn data_dim(&self) -> usize {
        self.encoder.spec.d
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.spec.d_out
    }

    /// Encode one point; output clamped into [0,1]^d.
    pub fn encode(&self, y: &[f64]) -> Result<Vec<f64>> {
        let out = self.encoder.forward(&Tensor::col(y.to_vec())?)?;
        Ok(out.clamp_unit_box().data().to_vec())
    }

    /// Decode one latent; inputs are projected onto [0,1]^d first (the
    /// decoder's domain).
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim() {
            return Err(LfError::Dimension(format!(
                "latent has dim {}, decoder expects {}",
                z.len(),
                self.latent_dim()
            )));
        }
        let projected: Vec<f64> = z.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
        Ok(self
            .decoder
            .forward(&Tensor::col(projected)?)?
            .data()
            .to_vec())
    }
}

/// m data points inside [0,1]^D.
#[derive(Debug, Clone)]
pub struct PretrainSet {
    points: Vec<Vec<f64>>,
}

impl PretrainSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<PretrainSet> {
        if points.is_empty() {
            return Err(LfError::Contract("empty pre-train set".to_string()));
        }
        let d = points[0].len();
        for p in &points {
            if p.len() != d {
                return Err(LfError::Dimension("ragged pre-train set".to_string()));
            }
            if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(LfError::Contract(
                    "pre-train point outside the unit cube".to_string(),
                ));
            }
        }
        Ok(PretrainSet { points })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// Mean squared reconstruction error (1/m)Σ‖(D∘E)(yᵢ) − yᵢ‖².
pub fn reconstruction_loss(pair: &AutoencoderPair, data: &PretrainSet) -> Result<f64> {
    let mut total = 0.0;
    for y in data.points() {
        let yhat = pair.decode(&pair.encode(y)?)?;
        total += y
            .iter()
            .zip(&yhat)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainLogRow {
    pub epoch: u64,
    pub loss: f64,
}

fn batch_loss_tensor(
    encoder: &TransformerNet,
    decoder: &TransformerNet,
    data: &PretrainSet,
    batch: &[usize],
) -> Result<Tensor> {
    let mut total = Tensor::scalar(0.0)?;
    for &i in batch {
        let y = Tensor::col(data.points()[i].clone())?;
        let z = encoder.forward(&y)?.clamp_unit_box();
        let yhat = decoder.forward(&z)?;
        total = total.add(&y.sub(&yhat)?.sum_squares())?;
    }
    Ok(total.scale(1.0 / batch.len() as f64))
}

/// Minimize reconstruction error jointly over both networks with Adam.
/// Biases at the readouts start at 0.5 so the latent clamp and the cube-valued
/// targets begin unsaturated.
pub fn pretrain(
    enc_spec: TransformerSpec,
    dec_spec: TransformerSpec,
    data: &PretrainSet,
    cfg: &PretrainConfig,
) -> Result<(AutoencoderPair, Vec<PretrainLogRow>)> {
    if enc_spec.d != data.dim() {
        return Err(LfError::Config(format!(
            "encoder input dim {} vs data dim {}",
            enc_spec.d,
            data.dim()
        )));
    }
    if cfg.batch_size == 0 || cfg.learning_rate <= 0.0 {
        return Err(LfError::Config("invalid pre-train config".to_string()));
    }
    let mut init_rng = substream(cfg.seed, "pretrain-init");
    let mut encoder = TransformerNet::init(enc_spec, &mut init_rng)?;
    let mut decoder = TransformerNet::init(dec_spec, &mut init_rng)?;
    encoder.b_out = Tensor::col(vec![0.5; encoder.spec.d_out])?;
    decoder.b_out = Tensor::col(vec![0.5; decoder.spec.d_out])?;
    let mut pair = AutoencoderPair::new(encoder, decoder)?;

    let sizes: Vec<usize> = pair
        .encoder
        .params()
        .iter()
        .chain(pair.decoder.params().iter())
        .map(|p| p.data().len())
        .collect();
    let mut adam = Adam::new(cfg.learning_rate, &sizes);
    let mut shuffle_rng = substream(cfg.seed, "pretrain-shuffle");
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs + 1);
    log.push(PretrainLogRow {
        epoch: 0,
        loss: reconstruction_loss(&pair, data)?,
    });

    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut shuffle_rng);
        for batch in indices.chunks(cfg.batch_size) {
            let tape = Tape::new();
            let enc = pair.encoder.tracked(&tape);
            let dec = pair.decoder.tracked(&tape);
            let loss = batch_loss_tensor(&enc, &dec, data, batch)?;
            if !loss.item().is_finite() {
                return Err(LfError::Divergence(format!(
                    "pre-training loss became {} at epoch {epoch}",
                    loss.item()
                )));
            }
            let grads = tape.backward(&loss)?;
            let tracked: Vec<&Tensor> = enc.params().into_iter().chain(dec.params()).collect();
            let mut values: Vec<Vec<f64>> =
                tracked.iter().map(|p| p.data().to_vec()).collect();
            let grad_values: Vec<Vec<f64>> = tracked.iter().map(|p| grads.get(p)).collect();
            adam.step(&mut values, &grad_values);
            let mut it = values.into_iter();
            let mut next = |p: &Tensor| {
                Tensor::matrix(p.rows(), p.cols(), it.next().unwrap()).unwrap()
            };
            pair.encoder = pair.encoder.map_params(&mut next);
            pair.decoder = pair.decoder.map_params(&mut next);
        }
        let loss = reconstruction_loss(&pair, data)?;
        if !loss.is_finite() {
            return Err(LfError::Divergence(format!(
                "reconstruction loss became {loss} at epoch {epoch}"
            )));
        }
        log.push(PretrainLogRow {
            epoch: epoch as u64 + 1,
            loss,
        });
    }
    Ok((pair, log))
}

/// Encode a batch into a uniform-weight discrete target (the empirical latent
/// distribution fed to flow matching). Points outside the cube are clamped
/// with a warning.
pub fn encode_batch(pair: &AutoencoderPair, batch: &[Vec<f64>]) -> Result<DiscreteTarget> {
    if batch.is_empty() {
        return Err(LfError::Contract("empty batch".to_string()));
    }
    let mut clamped = 0usize;
    let mut atoms = Vec::with_capacity(batch.len());
    for y in batch {
        let inside = y.iter().all(|&x| (0.0..=1.0).contains(&x));
        if !inside {
            clamped += 1;
        }
        let y: Vec<f64> = y.iter().map(|&x| x.clamp(0.0, 1.0)).collect();
        atoms.push(pair.encode(&y)?);
    }
    if clamped > 0 {
        eprintln!("warning: clamped {clamped} out-of-cube points before encoding");
    }
    DiscreteTarget::uniform(atoms)
}

/// Decode a batch of latents.
pub fn decode_batch(pair: &AutoencoderPair, latents: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    latents.iter().map(|z| pair.decode(z)).collect()
}

/// Smooth 1-manifold inside [0,1]^4, parametrized by s ~ U[0,1].
pub fn curve_in_cube(m: usize, seed: u64) -> PretrainSet {
    let mut rng = substream(seed, "curve-in-cube");
    let points = (0..m)
        .map(|_| {
            let s: f64 = rng.gen_range(0.0..1.0);
            vec![
                s,
                s * s,
                0.5 + 0.45 * (std::f64::consts::PI * s).sin(),
                0.5 - 0.45 * (std::f64::consts::PI * s).cos(),
            ]
        })
        .collect();
    PretrainSet::new(points).unwrap()
}

/// Smooth 2-manifold inside [0,1]^8, parametrized by (u, v) ~ U[0,1]².
pub fn plane_in_cube(m: usize, seed: u64) -> PretrainSet {
    let mut rng = substream(seed, "plane-in-cube");
    let pi = std::f64::consts::PI;
    let points = (0..m)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..1.0);
            let v: f64 = rng.gen_range(0.0..1.0);
            vec![
                u,
                v,
                u * v,
                u * u,
                v * v,
                0.5 + 0.45 * (pi * u).sin(),
                0.5 + 0.45 * (pi * v).sin(),
                0.5 * (u + v),
            ]
        })
        .collect();
    PretrainSet::new(points).unwrap()
}
