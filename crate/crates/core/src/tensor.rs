//! Dense 2-D tensors with reverse-mode automatic differentiation.
//!
//! Everything is f64 and row-major. Vectors are column matrices `[r, 1]`,
//! scalars are `[1, 1]`. Tensors are immutable values; a [`Tape`] records the
//! primitive operations of one training step and is consumed by
//! [`Tape::backward`].

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use crate::error::{LfError, Result};

type BackFn = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

struct OpRecord {
    inputs: Vec<usize>,
    back: BackFn,
}

struct TapeInner {
    /// Value length per node (leaves and op outputs alike).
    lens: Vec<usize>,
    /// `None` for leaves.
    ops: Vec<Option<OpRecord>>,
    consumed: bool,
}

/// Single-writer record of primitive operations for one backward pass.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                lens: Vec::new(),
                ops: Vec::new(),
                consumed: false,
            })),
        }
    }

    fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    fn push(&self, len: usize, op: Option<OpRecord>) -> usize {
        let mut inner = self.inner.borrow_mut();
        assert!(!inner.consumed, "tape already consumed by backward");
        inner.lens.push(len);
        inner.ops.push(op);
        inner.lens.len() - 1
    }

    /// Register a leaf tensor on this tape. The returned tensor shares the
    /// data buffer and participates in gradient computation.
    pub fn watch(&self, t: &Tensor) -> Tensor {
        let id = self.push(t.data.len(), None);
        Tensor {
            shape: t.shape.clone(),
            data: Arc::clone(&t.data),
            node: Some(Node {
                tape: self.clone(),
                id,
            }),
        }
    }

    /// Reverse sweep from a scalar loss. Consumes the tape: every recorded
    /// node is visited exactly once and no further operations may be taped.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        if loss.data.len() != 1 {
            return Err(LfError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape
            )));
        }
        let node = loss.node.as_ref().ok_or_else(|| {
            LfError::Contract("loss tensor is not on a tape".to_string())
        })?;
        if !self.same_tape(&node.tape) {
            return Err(LfError::Contract(
                "loss was produced on a different tape".to_string(),
            ));
        }
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(LfError::Contract("tape already consumed".to_string()));
        }
        inner.consumed = true;

        let n = inner.lens.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[node.id] = Some(vec![1.0]);
        for id in (0..n).rev() {
            let Some(g) = grads[id].take() else { continue };
            if let Some(op) = &inner.ops[id] {
                let input_grads = (op.back)(&g);
                debug_assert_eq!(input_grads.len(), op.inputs.len());
                for (&src, ig) in op.inputs.iter().zip(input_grads) {
                    match &mut grads[src] {
                        Some(acc) => {
                            for (a, b) in acc.iter_mut().zip(&ig) {
                                *a += b;
                            }
                        }
                        slot => *slot = Some(ig),
                    }
                }
            } else {
                // leaf: keep its gradient
                grads[id] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }
}

/// Result of a backward pass, keyed by tape node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. a taped tensor. Exactly zero (None folded
    /// to zeros) when the loss does not depend on it.
    pub fn get(&self, t: &Tensor) -> Vec<f64> {
        match &t.node {
            Some(node) => self.grads[node.id]
                .clone()
                .unwrap_or_else(|| vec![0.0; t.data.len()]),
            None => vec![0.0; t.data.len()],
        }
    }
}

#[derive(Clone)]
struct Node {
    tape: Tape,
    id: usize,
}

/// Immutable dense matrix of f64 with optional tape participation.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    node: Option<Node>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .field("tracked", &self.node.is_some())
            .finish()
    }
}

/// Raw row-major matrix product, shared by forward and backward paths.
pub(crate) fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

impl Tensor {
    /// Construct from external data. Rejects NaN/Inf and length mismatches.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(LfError::Dimension(format!(
                "shape {:?} needs {} entries, got {}",
                shape,
                len,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(LfError::NonFinite(format!(
                "tensor construction saw {bad}"
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Arc::new(data),
            node: None,
        })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        Tensor::new(&[rows, cols], data)
    }

    pub fn col(data: Vec<f64>) -> Result<Tensor> {
        let n = data.len();
        Tensor::new(&[n, 1], data)
    }

    pub fn scalar(x: f64) -> Result<Tensor> {
        Tensor::new(&[1, 1], vec![x])
    }

    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor {
            shape: vec![rows, cols],
            data: Arc::new(vec![0.0; rows * cols]),
            node: None,
        }
    }

    pub fn eye(n: usize) -> Tensor {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor {
            shape: vec![n, n],
            data: Arc::new(data),
            node: None,
        }
    }

    // internal: trusted result of an op, shape already consistent
    fn from_op(shape: Vec<usize>, data: Vec<f64>, node: Option<Node>) -> Tensor {
        Tensor {
            shape,
            data: Arc::new(data),
            node,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() > 1 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Whether this tensor participates in gradient computation.
    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Same value, cut off from the tape.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            node: None,
        }
    }

    fn node_of(inputs: &[&Tensor]) -> Option<Tape> {
        let mut tape: Option<Tape> = None;
        for t in inputs {
            if let Some(node) = &t.node {
                match &tape {
                    None => tape = Some(node.tape.clone()),
                    Some(existing) => {
                        assert!(
                            existing.same_tape(&node.tape),
                            "operands live on different tapes"
                        );
                    }
                }
            }
        }
        tape
    }

    /// Record an op whose inputs are `inputs` (taped ones only contribute).
    fn record(
        inputs: &[&Tensor],
        shape: Vec<usize>,
        data: Vec<f64>,
        back: impl Fn(&[f64]) -> Vec<Vec<f64>> + 'static,
    ) -> Tensor {
        match Self::node_of(inputs) {
            None => Tensor::from_op(shape, data, None),
            Some(tape) => {
                // untracked inputs get node id usize::MAX and their grads are
                // dropped; `back` must still return one entry per input
                let ids: Vec<usize> = inputs
                    .iter()
                    .map(|t| t.node.as_ref().map_or(usize::MAX, |n| n.id))
                    .collect();
                let tracked: Vec<usize> =
                    ids.iter().copied().filter(|&i| i != usize::MAX).collect();
                let keep: Vec<bool> = ids.iter().map(|&i| i != usize::MAX).collect();
                let filtered = move |g: &[f64]| -> Vec<Vec<f64>> {
                    back(g)
                        .into_iter()
                        .zip(&keep)
                        .filter_map(|(ig, &k)| if k { Some(ig) } else { None })
                        .collect()
                };
                let id = tape.push(
                    data.len(),
                    Some(OpRecord {
                        inputs: tracked,
                        back: Box::new(filtered),
                    }),
                );
                Tensor::from_op(shape, data, Some(Node { tape, id }))
            }
        }
    }

    fn check_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(LfError::Dimension(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(LfError::Dimension(format!(
                "matmul: [{m}x{k}] by [{k2}x{n}]"
            )));
        }
        let out = mm(&self.data, &other.data, m, k, n);
        let (a, b) = (Arc::clone(&self.data), Arc::clone(&other.data));
        Ok(Tensor::record(&[self, other], vec![m, n], out, move |g| {
            // dL/dA = G Bᵀ, dL/dB = Aᵀ G
            let bt = transpose_raw(&b, k, n);
            let at = transpose_raw(&a, m, k);
            vec![mm(g, &bt, m, n, k), mm(&at, g, k, m, n)]
        }))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "add")?;
        let out: Vec<f64> = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor::record(
            &[self, other],
            self.shape.clone(),
            out,
            move |g| vec![g.to_vec(), g.to_vec()],
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "sub")?;
        let out: Vec<f64> = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor::record(
            &[self, other],
            self.shape.clone(),
            out,
            move |g| vec![g.to_vec(), g.iter().map(|x| -x).collect()],
        ))
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "hadamard")?;
        let out: Vec<f64> = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .collect();
        let (a, b) = (Arc::clone(&self.data), Arc::clone(&other.data));
        Ok(Tensor::record(
            &[self, other],
            self.shape.clone(),
            out,
            move |g| {
                vec![
                    g.iter().zip(b.iter()).map(|(g, b)| g * b).collect(),
                    g.iter().zip(a.iter()).map(|(g, a)| g * a).collect(),
                ]
            },
        ))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let out: Vec<f64> = self.data.iter().map(|x| c * x).collect();
        Tensor::record(&[self], self.shape.clone(), out, move |g| {
            vec![g.iter().map(|x| c * x).collect()]
        })
    }

    /// Matrix plus column broadcast: `[r,c] + [r,1]·𝟙ᵀ`.
    pub fn add_col(&self, v: &Tensor) -> Result<Tensor> {
        let (r, c) = (self.rows(), self.cols());
        if v.rows() != r || v.cols() != 1 {
            return Err(LfError::Dimension(format!(
                "add_col: [{r}x{c}] + {:?}",
                v.shape
            )));
        }
        let mut out = self.data.to_vec();
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] += v.data[i];
            }
        }
        Ok(Tensor::record(&[self, v], self.shape.clone(), out, move |g| {
            let mut gv = vec![0.0; r];
            for i in 0..r {
                for j in 0..c {
                    gv[i] += g[i * c + j];
                }
            }
            vec![g.to_vec(), gv]
        }))
    }

    pub fn relu(&self) -> Tensor {
        let out: Vec<f64> = self.data.iter().map(|&x| x.max(0.0)).collect();
        let a = Arc::clone(&self.data);
        Tensor::record(&[self], self.shape.clone(), out, move |g| {
            // subgradient 0 at x = 0
            vec![g
                .iter()
                .zip(a.iter())
                .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                .collect()]
        })
    }

    /// Column-wise zero-temperature softmax limit: mass 1/|argmax| on every
    /// maximal entry of each column. Never tape-tracked; its derivative is
    /// defined as identically zero.
    pub fn hardmax_cols(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for j in 0..c {
            let mut best = f64::NEG_INFINITY;
            for i in 0..r {
                best = best.max(self.data[i * c + j]);
            }
            let count = (0..r).filter(|&i| self.data[i * c + j] == best).count();
            let mass = 1.0 / count as f64;
            for i in 0..r {
                if self.data[i * c + j] == best {
                    out[i * c + j] = mass;
                }
            }
        }
        Tensor::from_op(vec![r, c], out, None)
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let out = transpose_raw(&self.data, r, c);
        Tensor::record(&[self], vec![c, r], out, move |g| {
            vec![transpose_raw(g, c, r)]
        })
    }

    /// First column as an `[r,1]` tensor (transformer readout).
    pub fn first_col(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let out: Vec<f64> = (0..r).map(|i| self.data[i * c]).collect();
        Tensor::record(&[self], vec![r, 1], out, move |g| {
            let mut gi = vec![0.0; r * c];
            for i in 0..r {
                gi[i * c] = g[i];
            }
            vec![gi]
        })
    }

    /// Stack vertically: `[r1,c]` over `[r2,c]`.
    pub fn concat_rows(&self, other: &Tensor) -> Result<Tensor> {
        let c = self.cols();
        if other.cols() != c {
            return Err(LfError::Dimension(format!(
                "concat_rows: {:?} over {:?}",
                self.shape, other.shape
            )));
        }
        let (r1, r2) = (self.rows(), other.rows());
        let mut out = self.data.to_vec();
        out.extend_from_slice(&other.data);
        Ok(Tensor::record(
            &[self, other],
            vec![r1 + r2, c],
            out,
            move |g| vec![g[..r1 * c].to_vec(), g[r1 * c..].to_vec()],
        ))
    }

    /// Reshape a flat `[d,1]` vector into `[d_patch, l]` tokens, token j being
    /// the j-th contiguous block.
    pub fn to_tokens(&self, d_patch: usize, l: usize) -> Result<Tensor> {
        if self.data.len() != d_patch * l || self.cols() != 1 {
            return Err(LfError::Dimension(format!(
                "to_tokens: {:?} into {d_patch}x{l}",
                self.shape
            )));
        }
        let mut out = vec![0.0; d_patch * l];
        for j in 0..l {
            for s in 0..d_patch {
                out[s * l + j] = self.data[j * d_patch + s];
            }
        }
        Ok(Tensor::record(
            &[self],
            vec![d_patch, l],
            out,
            move |g| {
                let mut gi = vec![0.0; d_patch * l];
                for j in 0..l {
                    for s in 0..d_patch {
                        gi[j * d_patch + s] = g[s * l + j];
                    }
                }
                vec![gi]
            },
        ))
    }

    pub fn sum(&self) -> Tensor {
        let s: f64 = self.data.iter().sum();
        let n = self.data.len();
        Tensor::record(&[self], vec![1, 1], vec![s], move |g| vec![vec![g[0]; n]])
    }

    /// Σ xᵢ² as a scalar.
    pub fn sum_squares(&self) -> Tensor {
        let s: f64 = self.data.iter().map(|x| x * x).sum();
        let a = Arc::clone(&self.data);
        Tensor::record(&[self], vec![1, 1], vec![s], move |g| {
            vec![a.iter().map(|x| 2.0 * x * g[0]).collect()]
        })
    }

    /// Radial clamp: identity when ‖x‖ ≤ b, else scaled onto the sphere of
    /// radius b.
    pub fn clamp_norm(&self, b: f64) -> Tensor {
        let norm = self.data.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= b {
            let out = self.data.to_vec();
            return Tensor::record(&[self], self.shape.clone(), out, |g| {
                vec![g.to_vec()]
            });
        }
        let scale = b / norm;
        let out: Vec<f64> = self.data.iter().map(|x| scale * x).collect();
        let a = Arc::clone(&self.data);
        Tensor::record(&[self], self.shape.clone(), out, move |g| {
            // J = (b/n)(I − x̂ x̂ᵀ)
            let dot: f64 = a.iter().zip(g.iter()).map(|(x, g)| x * g).sum();
            vec![a
                .iter()
                .zip(g.iter())
                .map(|(x, g)| scale * (g - x * dot / (norm * norm)))
                .collect()]
        })
    }

    /// Elementwise clamp into [0,1]; gradient passes strictly inside.
    pub fn clamp_unit_box(&self) -> Tensor {
        let out: Vec<f64> = self.data.iter().map(|x| x.clamp(0.0, 1.0)).collect();
        let a = Arc::clone(&self.data);
        Tensor::record(&[self], self.shape.clone(), out, move |g| {
            vec![g
                .iter()
                .zip(a.iter())
                .map(|(g, &x)| if x > 0.0 && x < 1.0 { *g } else { 0.0 })
                .collect()]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_projector() {
        let a = t(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let i2 = Tensor::eye(2);
        assert_eq!(i2.matmul(&a).unwrap().data(), a.data());

        let p = t(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = t(2, 2, &[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(p.matmul(&b).unwrap().data(), &[5.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn matmul_against_triple_loop() {
        let mut rng = crate::rng::substream(11, "matmul-oracle");
        let a_data = crate::rng::standard_normal_vec(&mut rng, 12);
        let b_data = crate::rng::standard_normal_vec(&mut rng, 8);
        let a = t(3, 4, &a_data);
        let b = t(4, 2, &b_data);
        let c = a.matmul(&b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut want = 0.0;
                for k in 0..4 {
                    want += a_data[i * 4 + k] * b_data[k * 2 + j];
                }
                assert!((c.data()[i * 2 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch_errors() {
        let a = t(2, 3, &[0.0; 6]);
        let b = t(2, 3, &[0.0; 6]);
        assert!(matches!(a.matmul(&b), Err(LfError::Dimension(_))));
    }

    #[test]
    fn construction_rejects_nonfinite() {
        assert!(Tensor::new(&[1, 2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::new(&[1, 2], vec![1.0, f64::INFINITY]).is_err());
        assert!(Tensor::new(&[2, 2], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn relu_values_and_gradient() {
        let tape = Tape::new();
        let x = tape.watch(&t(3, 1, &[-1.0, 0.0, 2.0]));
        let y = x.relu();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let loss = y.sum();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&x), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_all_negative_is_zero() {
        let x = t(2, 2, &[-3.0, -0.5, -1e-9, -7.0]);
        assert_eq!(x.relu().data(), &[0.0; 4]);
    }

    #[test]
    fn hardmax_basic_and_ties() {
        let x = t(3, 1, &[1.0, 3.0, 2.0]);
        assert_eq!(x.hardmax_cols().data(), &[0.0, 1.0, 0.0]);

        let tie = t(2, 1, &[2.0, 2.0]);
        assert_eq!(tie.hardmax_cols().data(), &[0.5, 0.5]);

        let m = t(2, 2, &[1.0, 4.0, 3.0, 0.0]);
        assert_eq!(m.hardmax_cols().data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn hardmax_never_tracked() {
        let tape = Tape::new();
        let x = tape.watch(&t(2, 1, &[1.0, 2.0]));
        assert!(!x.hardmax_cols().is_tracked());
    }

    #[test]
    fn backward_square() {
        let tape = Tape::new();
        let x = tape.watch(&Tensor::scalar(3.0).unwrap());
        let loss = x.hadamard(&x).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&x), vec![6.0]);
    }

    #[test]
    fn backward_rejects_nonscalar_loss() {
        let tape = Tape::new();
        let x = tape.watch(&t(2, 1, &[1.0, 2.0]));
        let y = x.relu();
        assert!(matches!(
            tape.backward(&y),
            Err(LfError::Contract(_))
        ));
    }

    #[test]
    fn unrelated_leaf_gets_zero_grad() {
        let tape = Tape::new();
        let x = tape.watch(&Tensor::scalar(2.0).unwrap());
        let z = tape.watch(&Tensor::scalar(5.0).unwrap());
        let loss = x.sum_squares();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&z), vec![0.0]);
        assert_eq!(grads.get(&x), vec![4.0]);
    }

    #[test]
    fn tape_consumed_after_backward() {
        let tape = Tape::new();
        let x = tape.watch(&Tensor::scalar(1.0).unwrap());
        let loss = x.sum_squares();
        tape.backward(&loss).unwrap();
        assert!(tape.backward(&loss).is_err());
    }

    #[test]
    fn tokens_round_trip() {
        let x = t(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let tok = x.to_tokens(2, 2).unwrap();
        // columns [1,2] and [3,4]
        assert_eq!(tok.data(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn clamp_norm_respects_bound() {
        let x = t(2, 1, &[3.0, 4.0]);
        let y = x.clamp_norm(1.0);
        let n = y.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
        let z = x.clamp_norm(10.0);
        assert_eq!(z.data(), x.data());
    }
}
