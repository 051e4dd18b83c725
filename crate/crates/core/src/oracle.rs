//! Closed-form reference quantities for discrete targets.
//!
//! For a target π₁ = Σ w_j δ_{a_j} on [0,1]^d and the interpolant
//! X_t = t·X₁ + √(1−t²)·X₀, the conditional law of X₁ given X_t = x is an
//! exact softmax over atoms, which makes the regression-optimal velocity
//! field, its time derivative, and its spatial Jacobian all computable in
//! closed form. These serve as oracles for training and sampling tests.

use serde::{Deserialize, Serialize};

use crate::error::{LfError, Result};
use crate::field::VelocityField;

/// Finitely supported target measure on the unit cube.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteTarget {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteTarget {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<DiscreteTarget> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(LfError::Config(format!(
                "{} atoms vs {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let d = atoms[0].len();
        if d == 0 {
            return Err(LfError::Config("zero-dimensional atoms".to_string()));
        }
        for a in &atoms {
            if a.len() != d {
                return Err(LfError::Dimension("ragged atom list".to_string()));
            }
            if a.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(LfError::Contract(format!(
                    "atom {a:?} outside [0,1]^{d}"
                )));
            }
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(LfError::Contract("negative or non-finite weight".to_string()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(LfError::Contract(format!("weights sum to {total}")));
        }
        // renormalize away the residual rounding so invariants are exact
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(DiscreteTarget { atoms, weights })
    }

    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<DiscreteTarget> {
        let n = atoms.len();
        DiscreteTarget::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn single(atom: Vec<f64>) -> Result<DiscreteTarget> {
        DiscreteTarget::new(vec![atom], vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Prior mean Σ w_j a_j.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            for (mi, &ai) in m.iter_mut().zip(a) {
                *mi += w * ai;
            }
        }
        m
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> &[f64] {
        &self.atoms[crate::rng::sample_weighted(rng, &self.weights)]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse `{"atoms": [[...],...], "weights": [...]}`; weights may be
    /// omitted for a uniform target.
    pub fn from_json(text: &str) -> Result<DiscreteTarget> {
        #[derive(Deserialize)]
        struct Doc {
            atoms: Vec<Vec<f64>>,
            weights: Option<Vec<f64>>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        match doc.weights {
            Some(w) => DiscreteTarget::new(doc.atoms, w),
            None => DiscreteTarget::uniform(doc.atoms),
        }
    }

    /// Uniform-weight target from a CSV point cloud.
    pub fn from_csv(text: &str) -> Result<DiscreteTarget> {
        DiscreteTarget::uniform(crate::csvio::parse_point_cloud(text)?)
    }
}

/// t·x1 + √(1−t²)·x0.
pub fn interpolate(x0: &[f64], x1: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(LfError::Contract(format!("interpolate: t = {t}")));
    }
    let s = (1.0 - t * t).sqrt();
    Ok(x0.iter().zip(x1).map(|(&a, &b)| t * b + s * a).collect())
}

/// The regression target x1 − (t/√(1−t²))·x0.
pub fn regression_label(x0: &[f64], x1: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&t) {
        return Err(LfError::Contract(format!(
            "regression_label singular at t = {t}"
        )));
    }
    let c = t / (1.0 - t * t).sqrt();
    Ok(x0.iter().zip(x1).map(|(&a, &b)| b - c * a).collect())
}

/// Exact velocity field for a discrete target, valid on t ∈ [0, T].
#[derive(Debug, Clone)]
pub struct OracleField {
    pub target: DiscreteTarget,
    pub horizon: f64,
}

/// Posterior moments of X₁ given X_t = x.
struct Posterior {
    p: Vec<f64>,
    mean: Vec<f64>,
}

/// Observed maxima vs theoretical bounds over a sample set.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub max_abs_velocity_coord: f64,
    pub velocity_coord_bound: f64,
    pub velocity_ok: bool,
    pub max_dt_norm: f64,
    pub dt_norm_bound: f64,
    pub dt_ok: bool,
    pub max_grad_op_norm: f64,
    pub grad_op_norm_bound: f64,
    pub grad_ok: bool,
}

impl OracleField {
    pub fn new(target: DiscreteTarget, horizon: f64) -> Result<OracleField> {
        if !(0.5 < horizon && horizon < 1.0) {
            return Err(LfError::Config(format!(
                "horizon T = {horizon} must lie in (1/2, 1)"
            )));
        }
        Ok(OracleField { target, horizon })
    }

    /// Conditional atom probabilities p_j ∝ w_j·exp(−‖x−t·a_j‖²/(2(1−t²))),
    /// stabilized by a max shift. At t = 0 the conditional equals the prior.
    pub fn posterior_weights(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        if !(0.0..1.0).contains(&t) {
            return Err(LfError::Contract(format!("posterior_weights: t = {t}")));
        }
        if t == 0.0 {
            return Ok(self.target.weights().to_vec());
        }
        let var = 2.0 * (1.0 - t * t);
        let logits: Vec<f64> = self
            .target
            .atoms()
            .iter()
            .zip(self.target.weights())
            .map(|(a, &w)| {
                let sq: f64 = x
                    .iter()
                    .zip(a)
                    .map(|(&xi, &ai)| (xi - t * ai) * (xi - t * ai))
                    .sum();
                w.ln() - sq / var
            })
            .collect();
        let shift = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = logits.iter().map(|l| (l - shift).exp()).collect();
        let z: f64 = unnorm.iter().sum();
        Ok(unnorm.iter().map(|u| u / z).collect())
    }

    fn posterior(&self, x: &[f64], t: f64) -> Result<Posterior> {
        let p = self.posterior_weights(x, t)?;
        let d = self.target.dim();
        let mut mean = vec![0.0; d];
        for (a, &pj) in self.target.atoms().iter().zip(&p) {
            for (mi, &ai) in mean.iter_mut().zip(a) {
                *mi += pj * ai;
            }
        }
        Ok(Posterior { p, mean })
    }

    /// v*(x,t) = (𝔼[X₁|X_t=x] − t·x)/(1−t²).
    pub fn true_velocity(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(LfError::Contract(format!(
                "true_velocity: t = {t} outside [0, {}]",
                self.horizon
            )));
        }
        let post = self.posterior(x, t)?;
        let s = 1.0 - t * t;
        Ok(post
            .mean
            .iter()
            .zip(x)
            .map(|(&m, &xi)| (m - t * xi) / s)
            .collect())
    }

    /// Score-parameterized form v* = (1/t)∇log π_t(x) + x/t, usable as a
    /// cross-check away from the t = 0 singularity.
    pub fn score_form_velocity(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        if t < 1e-3 || t > self.horizon {
            return Err(LfError::Contract(format!(
                "score form requires 1e-3 <= t <= T, got {t}"
            )));
        }
        // ∇log π_t(x) = (t·m − x)/(1−t²) for the Gaussian-mixture marginal
        let post = self.posterior(x, t)?;
        let s = 1.0 - t * t;
        Ok(post
            .mean
            .iter()
            .zip(x)
            .map(|(&m, &xi)| ((t * m - xi) / s) / t + xi / t)
            .collect())
    }

    /// ∂ₜv* from the posterior mean, covariance, and third-moment coupling.
    pub fn true_velocity_dt(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        if t <= 0.0 || t > self.horizon {
            return Err(LfError::Contract(format!(
                "true_velocity_dt: t = {t} outside (0, {}]",
                self.horizon
            )));
        }
        let d = self.target.dim();
        let post = self.posterior(x, t)?;
        let m = &post.mean;
        // C·x with C = 𝔼[X₁X₁ᵀ|x] − m mᵀ
        let mut cx = vec![0.0; d];
        let mdotx: f64 = m.iter().zip(x).map(|(&mi, &xi)| mi * xi).sum();
        for (a, &pj) in self.target.atoms().iter().zip(&post.p) {
            let adotx: f64 = a.iter().zip(x).map(|(&ai, &xi)| ai * xi).sum();
            for (ci, &ai) in cx.iter_mut().zip(a) {
                *ci += pj * ai * adotx;
            }
        }
        for (ci, &mi) in cx.iter_mut().zip(m) {
            *ci -= mi * mdotx;
        }
        // 𝔼[X₁‖X₁‖²|x] and 𝔼[‖X₁‖²|x]
        let mut e3 = vec![0.0; d];
        let mut e2 = 0.0;
        for (a, &pj) in self.target.atoms().iter().zip(&post.p) {
            let asq: f64 = a.iter().map(|&ai| ai * ai).sum();
            e2 += pj * asq;
            for (ei, &ai) in e3.iter_mut().zip(a) {
                *ei += pj * ai * asq;
            }
        }
        let s = 1.0 - t * t;
        let (s2, s3) = (s * s, s * s * s);
        let c1 = -(1.0 + t * t) / s2;
        let c2 = 2.0 * t / s2;
        let c3 = (1.0 + t * t) / s3;
        let c4 = -t / s3;
        Ok((0..d)
            .map(|i| c1 * x[i] + c2 * m[i] + c3 * cx[i] + c4 * (e3[i] - m[i] * e2))
            .collect())
    }

    /// ∇v*(x,t) = t/(1−t²)²·Cov[X₁|X_t=x] − t/(1−t²)·I, row-major d×d.
    pub fn true_velocity_grad(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        if t <= 0.0 || t > self.horizon {
            return Err(LfError::Contract(format!(
                "true_velocity_grad: t = {t} outside (0, {}]",
                self.horizon
            )));
        }
        let d = self.target.dim();
        let post = self.posterior(x, t)?;
        let m = &post.mean;
        let mut cov = vec![0.0; d * d];
        for (a, &pj) in self.target.atoms().iter().zip(&post.p) {
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] += pj * a[i] * a[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= m[i] * m[j];
            }
        }
        let s = 1.0 - t * t;
        let scale = t / (s * s);
        let diag = t / s;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = scale * cov[i * d + j];
            }
            out[i * d + i] -= diag;
        }
        Ok(out)
    }

    /// Theoretical bound on |v*_i|: (1+R)/(1−T²).
    pub fn velocity_coord_bound(&self, box_radius: f64) -> f64 {
        (1.0 + box_radius) / (1.0 - self.horizon * self.horizon)
    }

    /// Theoretical bound on ‖∂ₜv*‖ over [−R,R]^d × [0,T].
    pub fn dt_norm_bound(&self, box_radius: f64) -> f64 {
        let t = self.horizon;
        let d = self.target.dim() as f64;
        let s = 1.0 - t * t;
        let r = box_radius;
        d.sqrt() * (1.0 + t * t) * r / (s * s)
            + 2.0 * d.sqrt() * t / (s * s)
            + 2.0 * d.powf(1.5) * (1.0 + t * t) * r / (s * s * s)
            + 2.0 * d.powf(1.5) * t / (s * s * s)
    }

    /// Theoretical bound on ‖∇v*‖_op: T·d/(1−T²)².
    pub fn grad_op_norm_bound(&self) -> f64 {
        let t = self.horizon;
        let s = 1.0 - t * t;
        t * self.target.dim() as f64 / (s * s)
    }

    /// Evaluate all three bounds over a sample set in [−R,R]^d × (0,T].
    pub fn check_bounds(&self, samples: &[(Vec<f64>, f64)], box_radius: f64) -> Result<BoundsReport> {
        let mut max_v: f64 = 0.0;
        let mut max_dt: f64 = 0.0;
        let mut max_grad: f64 = 0.0;
        let d = self.target.dim();
        for (x, t) in samples {
            let v = self.true_velocity(x, *t)?;
            for vi in &v {
                max_v = max_v.max(vi.abs());
            }
            if *t > 0.0 {
                let dt = self.true_velocity_dt(x, *t)?;
                max_dt = max_dt.max(dt.iter().map(|a| a * a).sum::<f64>().sqrt());
                let grad = self.true_velocity_grad(x, *t)?;
                let g = crate::tensor::Tensor::matrix(d, d, grad)?;
                max_grad = max_grad.max(crate::transformer::operator_norm(&g, 20));
            }
        }
        let vb = self.velocity_coord_bound(box_radius);
        let db = self.dt_norm_bound(box_radius);
        let gb = self.grad_op_norm_bound();
        Ok(BoundsReport {
            max_abs_velocity_coord: max_v,
            velocity_coord_bound: vb,
            velocity_ok: max_v <= vb,
            max_dt_norm: max_dt,
            dt_norm_bound: db,
            dt_ok: max_dt <= db,
            max_grad_op_norm: max_grad,
            grad_op_norm_bound: gb,
            grad_ok: max_grad <= gb,
        })
    }
}

impl VelocityField for OracleField {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn velocity(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.true_velocity(x, t)
    }
}
