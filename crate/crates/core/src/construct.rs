//! Exact transformer weight constructions.
//!
//! Attention layers that read a chosen input coordinate, multiply, or square
//! a running value; feedforward layers that shift and scale bookkeeping rows;
//! monomial networks built by binary exponentiation; multi-head networks
//! computing several monomials in parallel; and polynomial approximators that
//! read out a linear combination of monomials.
//!
//! Coordinate layout inside each head block of width d_patch+l+4 (0-based):
//! rows 0..d_patch hold the token's input patch, row d_patch is the constant
//! 1, rows d_patch+1..d_patch+l+1 are one-hot positions, and the last three
//! rows are bookkeeping: a scratch slot, the accumulator, and a product slot.

use crate::error::{LfError, Result};
use crate::tensor::Tensor;
use crate::transformer::{HeadWeights, LayerWeights, TransformerNet, TransformerSpec};

/// Patch layout of a construction (block width = d_patch + l + 4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub d_patch: usize,
    pub l: usize,
}

impl Dims {
    pub fn new(d_patch: usize, l: usize) -> Result<Dims> {
        if d_patch == 0 || l == 0 {
            return Err(LfError::Config("need d_patch, l >= 1".to_string()));
        }
        Ok(Dims { d_patch, l })
    }

    /// Width of one head block.
    pub fn block(&self) -> usize {
        self.d_patch + self.l + 4
    }

    /// Row of the constant-one coordinate.
    fn one(&self) -> usize {
        self.d_patch
    }

    /// Row of the one-hot position of token j.
    fn pos(&self, j: usize) -> usize {
        self.d_patch + 1 + j
    }

    /// Scratch row (holds the current power of the input coordinate).
    fn scratch(&self) -> usize {
        self.d_patch + self.l + 1
    }

    /// Accumulator row (holds the running product).
    fn acc(&self) -> usize {
        self.d_patch + self.l + 2
    }

    /// Product row (attention layers add their result here).
    fn prod(&self) -> usize {
        self.d_patch + self.l + 3
    }
}

fn nnz(data: &[f64]) -> u64 {
    data.iter().filter(|&&x| x != 0.0).count() as u64
}

fn sparse(rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> Tensor {
    let mut data = vec![0.0; rows * cols];
    for &(i, j, v) in entries {
        data[i * cols + j] = v;
    }
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Attention head that adds x_j^(k) − u to the scratch row of token 1 and
/// leaves every other token unchanged. Requires B > 2·max|x| over the inputs
/// the layer will see; j, k are 0-based.
pub fn build_linear_reader(dims: Dims, j: usize, k: usize, u: f64, b: f64) -> Result<HeadWeights> {
    if j >= dims.l || k >= dims.d_patch {
        return Err(LfError::Config(format!(
            "reader indices j={j}, k={k} out of range for {dims:?}"
        )));
    }
    if b <= 0.0 {
        return Err(LfError::Config("reader margin B must be > 0".to_string()));
    }
    let m = dims.block();
    Ok(HeadWeights {
        w_q: sparse(2, m, &[(0, dims.pos(0), 1.0), (1, dims.pos(0), b)]),
        w_k: sparse(
            2,
            m,
            &[(0, k, 1.0), (0, dims.one(), -u - b), (1, dims.pos(j), 1.0)],
        ),
        w_v: sparse(m, m, &[(dims.scratch(), dims.one(), 1.0)]),
        w_o: Tensor::eye(m),
    })
}

/// Attention head that adds b₁·a_j + B to the product row of token 1, where
/// a_j is token j's scratch value and b₁ is token 1's accumulator value.
/// Requires B > 2|b₁|·max|a_r|.
pub fn build_multiplier(dims: Dims, j: usize, b: f64) -> Result<HeadWeights> {
    if j >= dims.l {
        return Err(LfError::Config(format!(
            "multiplier index j={j} out of range for {dims:?}"
        )));
    }
    if b <= 0.0 {
        return Err(LfError::Config("multiplier margin B must be > 0".to_string()));
    }
    let m = dims.block();
    Ok(HeadWeights {
        w_q: sparse(2, m, &[(0, dims.acc(), 1.0), (1, dims.pos(0), b)]),
        w_k: sparse(2, m, &[(0, dims.scratch(), 1.0), (1, dims.pos(j), 1.0)]),
        w_v: sparse(m, m, &[(dims.prod(), dims.one(), 1.0)]),
        w_o: Tensor::eye(m),
    })
}

/// Attention head that adds a² to the product row of token 1, where a is
/// token 1's scratch value (other tokens must hold scratch 0).
pub fn build_squarer(dims: Dims) -> HeadWeights {
    let m = dims.block();
    HeadWeights {
        // d_k = 2 for uniformity; the second query/key row is zero
        w_q: sparse(2, m, &[(0, dims.scratch(), 1.0)]),
        w_k: sparse(2, m, &[(0, dims.scratch(), 1.0)]),
        w_v: sparse(m, m, &[(dims.prod(), dims.one(), 1.0)]),
        w_o: Tensor::eye(m),
    }
}

/// Bookkeeping rewrites performed by the accumulator feedforward layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccumulatorVariant {
    /// accumulator ← α·(prod − B); scratch and prod zeroed.
    Move,
    /// accumulator ← α·(prod − B); scratch kept, prod zeroed.
    MoveKeep,
    /// scratch ← prod; accumulator kept, prod zeroed.
    CopyBack,
    /// accumulator kept; scratch and prod zeroed.
    Clear,
}

/// Token-wise feedforward weights rewriting the three bookkeeping rows:
/// the accumulator becomes α·(y^prod − B·y^one) (for the Move variants) and
/// the other rows are kept, copied, or zeroed per the variant. At most 18
/// nonzero parameters. Requires d_ff ≥ 8.
pub fn build_accumulator(
    dims: Dims,
    alpha: f64,
    b: f64,
    variant: AccumulatorVariant,
    d_ff: usize,
) -> Result<(Tensor, Tensor, Tensor, Tensor)> {
    if d_ff < 8 {
        return Err(LfError::Config(format!(
            "accumulator needs d_ff >= 8, got {d_ff}"
        )));
    }
    let m = dims.block();
    use AccumulatorVariant::*;
    let mut w1: Vec<(usize, usize, f64)> = Vec::new();
    let mut w2: Vec<(usize, usize, f64)> = Vec::new();
    // hidden rows 0,1: ±scratch; 2,3: ±acc; 4,5: ±(prod − B·one) scaled by α
    // in w2; 6,7: ±prod
    if matches!(variant, Move | CopyBack | Clear) {
        w1.push((0, dims.scratch(), 1.0));
        w1.push((1, dims.scratch(), -1.0));
        w2.push((dims.scratch(), 0, -1.0));
        w2.push((dims.scratch(), 1, 1.0));
    }
    if matches!(variant, Move | MoveKeep) {
        w1.push((2, dims.acc(), 1.0));
        w1.push((3, dims.acc(), -1.0));
        w2.push((dims.acc(), 2, -1.0));
        w2.push((dims.acc(), 3, 1.0));
        w1.push((4, dims.prod(), 1.0));
        w1.push((5, dims.prod(), -1.0));
        if b != 0.0 {
            w1.push((4, dims.one(), -b));
            w1.push((5, dims.one(), b));
        }
        if alpha != 0.0 {
            w2.push((dims.acc(), 4, alpha));
            w2.push((dims.acc(), 5, -alpha));
        }
    }
    // ±prod rows, used both to zero prod and (CopyBack) to add it to scratch
    w1.push((6, dims.prod(), 1.0));
    w1.push((7, dims.prod(), -1.0));
    w2.push((dims.prod(), 6, -1.0));
    w2.push((dims.prod(), 7, 1.0));
    if variant == CopyBack {
        w2.push((dims.scratch(), 6, 1.0));
        w2.push((dims.scratch(), 7, -1.0));
    }
    Ok((
        sparse(d_ff, m, &w1),
        Tensor::zeros(d_ff, 1),
        sparse(m, d_ff, &w2),
        Tensor::zeros(m, 1),
    ))
}

/// Exponent vector over the flattened input coordinates (coordinate i of the
/// flat input belongs to token i / d_patch, patch row i % d_patch).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exponents: Vec<u32>,
    dims: Dims,
}

impl MultiIndex {
    pub fn new(exponents: Vec<u32>, dims: Dims) -> Result<MultiIndex> {
        if exponents.len() != dims.d_patch * dims.l {
            return Err(LfError::Dimension(format!(
                "{} exponents for {dims:?}",
                exponents.len()
            )));
        }
        Ok(MultiIndex { exponents, dims })
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Total degree ‖n‖₁.
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// η_n(x) = Π xᵢ^{nᵢ}.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }
}

/// All multi-indices of total degree ≤ max_degree on d coordinates.
pub fn enumerate_multi_indices(dims: Dims, max_degree: u32) -> Vec<MultiIndex> {
    let d = dims.d_patch * dims.l;
    let mut out = Vec::new();
    let mut cur = vec![0u32; d];
    fn rec(
        cur: &mut Vec<u32>,
        pos: usize,
        left: u32,
        dims: Dims,
        out: &mut Vec<MultiIndex>,
    ) {
        if pos == cur.len() {
            out.push(MultiIndex::new(cur.clone(), dims).unwrap());
            return;
        }
        for e in 0..=left {
            cur[pos] = e;
            rec(cur, pos + 1, left - e, dims, out);
        }
        cur[pos] = 0;
    }
    rec(&mut cur, 0, max_degree, dims, &mut out);
    out
}

/// Budget and size report for a constructed network.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConstructionReport {
    /// Attention+feedforward layer pairs used.
    pub layers: usize,
    pub heads: usize,
    /// Nonzero parameters across all layer weights (embedding and readout
    /// excluded, matching the per-layer budget accounting).
    pub nonzero_params: u64,
    /// Layer bound 2·l·d_patch·(log₂(max(degree,2)) + 1).
    pub layer_bound: usize,
    /// Max |entry| over all intermediate token matrices on the probe grid.
    pub max_abs_intermediate: f64,
}

// one head's program: local attention + feedforward weights per layer pair
type LocalPair = (HeadWeights, (Tensor, Tensor, Tensor, Tensor));

/// Margin constant for the reader/multiplier strict inequalities: inputs live
/// in [0,1], running products are bounded by max(1, |b₁|).
fn stage_margin(b1: f64) -> f64 {
    4.0 * (1.0 + b1.abs().max(1.0))
}

fn identity_ff(dims: Dims) -> (Tensor, Tensor, Tensor, Tensor) {
    let m = dims.block();
    (
        Tensor::zeros(8, m),
        Tensor::zeros(8, 1),
        Tensor::zeros(m, 8),
        Tensor::zeros(m, 1),
    )
}

/// Layer-pair program computing b₁·η_n(X) in the accumulator of token 1 by
/// binary exponentiation, one input coordinate at a time.
fn monomial_program(n: &MultiIndex, b1: f64) -> Result<Vec<LocalPair>> {
    let dims = n.dims();
    let margin = stage_margin(b1);
    let mut pairs: Vec<LocalPair> = Vec::new();
    for (i, &e) in n.exponents().iter().enumerate() {
        if e == 0 {
            continue;
        }
        let (j, k) = (i / dims.d_patch, i % dims.d_patch);
        let top_bit = 31 - e.leading_zeros();
        // load x_j^(k) into the scratch row of token 1
        pairs.push((
            build_linear_reader(dims, j, k, 0.0, margin)?,
            identity_ff(dims),
        ));
        for r in 0..=top_bit {
            if r > 0 {
                // scratch ← scratch²
                pairs.push((
                    build_squarer(dims),
                    build_accumulator(dims, 1.0, 0.0, AccumulatorVariant::CopyBack, 8)?,
                ));
            }
            if e >> r & 1 == 1 {
                // accumulator ← accumulator · scratch; the last multiply also
                // clears the scratch row for the next coordinate
                let variant = if r == top_bit {
                    AccumulatorVariant::Move
                } else {
                    AccumulatorVariant::MoveKeep
                };
                pairs.push((
                    build_multiplier(dims, 0, margin)?,
                    build_accumulator(dims, 1.0, margin, variant, 8)?,
                ));
            }
        }
    }
    Ok(pairs)
}

fn embed_head(local: &HeadWeights, s: usize, h: usize, block: usize) -> HeadWeights {
    if h == 1 {
        return local.clone();
    }
    let m = h * block;
    let off = s * block;
    let place_cols = |t: &Tensor| {
        let mut data = vec![0.0; t.rows() * m];
        for i in 0..t.rows() {
            for j in 0..block {
                data[i * m + off + j] = t.data()[i * block + j];
            }
        }
        Tensor::matrix(t.rows(), m, data).unwrap()
    };
    // W_O places the block-local output back into the head's rows
    let mut wo = vec![0.0; m * block];
    for i in 0..block {
        for j in 0..block {
            wo[(off + i) * block + j] = local.w_o.data()[i * block + j];
        }
    }
    HeadWeights {
        w_q: place_cols(&local.w_q),
        w_k: place_cols(&local.w_k),
        w_v: place_cols(&local.w_v),
        w_o: Tensor::matrix(m, block, wo).unwrap(),
    }
}

fn zero_head(h: usize, block: usize) -> HeadWeights {
    let m = h * block;
    HeadWeights {
        w_q: Tensor::zeros(2, m),
        w_k: Tensor::zeros(2, m),
        w_v: Tensor::zeros(block, m),
        w_o: Tensor::zeros(m, block),
    }
}

/// Assemble per-head programs into one network; head s runs program s in its
/// own block. Readout and output bound are set by the caller via `a_out`.
fn assemble_net(
    dims: Dims,
    programs: Vec<Vec<LocalPair>>,
    b1: f64,
    a_out: Tensor,
    output_bound: f64,
) -> Result<TransformerNet> {
    let h = programs.len();
    let block = dims.block();
    let m = h * block;
    let n_layers = programs.iter().map(|p| p.len()).max().unwrap_or(0);
    let d_ff = 8 * h;

    let mut layers = Vec::with_capacity(n_layers);
    for r in 0..n_layers {
        let mut heads = Vec::with_capacity(h);
        let mut w1 = vec![0.0; d_ff * m];
        let mut w2 = vec![0.0; m * d_ff];
        for (s, program) in programs.iter().enumerate() {
            match program.get(r) {
                Some((attn, (lw1, _, lw2, _))) => {
                    heads.push(embed_head(attn, s, h, block));
                    for i in 0..8 {
                        for j in 0..block {
                            w1[(8 * s + i) * m + s * block + j] = lw1.data()[i * block + j];
                        }
                    }
                    for i in 0..block {
                        for j in 0..8 {
                            w2[(s * block + i) * d_ff + 8 * s + j] = lw2.data()[i * 8 + j];
                        }
                    }
                }
                None => heads.push(zero_head(h, block)), // finished head: identity
            }
        }
        layers.push(LayerWeights {
            heads,
            w1: Tensor::matrix(d_ff, m, w1)?,
            b1: Tensor::zeros(d_ff, 1),
            w2: Tensor::matrix(m, d_ff, w2)?,
            b2: Tensor::zeros(m, 1),
        });
    }

    // embedding: copy the patch and position rows into every head block; the
    // constant-one row and the accumulator seed b₁ come from the bias
    let mut a_in = vec![0.0; m * (dims.d_patch + dims.l)];
    let mut b_in = vec![0.0; m];
    for s in 0..h {
        let off = s * block;
        for i in 0..dims.d_patch {
            a_in[(off + i) * (dims.d_patch + dims.l) + i] = 1.0;
        }
        for j in 0..dims.l {
            a_in[(off + dims.pos(j)) * (dims.d_patch + dims.l) + dims.d_patch + j] = 1.0;
        }
        b_in[off + dims.one()] = 1.0;
        b_in[off + dims.acc()] = b1;
    }

    let d_out = a_out.rows();
    let spec = TransformerSpec {
        d: dims.d_patch * dims.l,
        d_out,
        l: dims.l,
        d_patch: dims.d_patch,
        n_layers,
        h,
        d_k: 2,
        d_v: block,
        d_ff,
        output_bound,
        lipschitz_budget: output_bound,
        sparsity_budget: None,
    };
    spec.validate()?;
    Ok(TransformerNet {
        a_in: Tensor::matrix(m, dims.d_patch + dims.l, a_in)?,
        b_in: Tensor::col(b_in)?,
        layers,
        a_out,
        b_out: Tensor::zeros(d_out, 1),
        spec,
    })
}

fn layer_nonzeros(net: &TransformerNet) -> u64 {
    net.layers
        .iter()
        .map(|layer| {
            layer
                .heads
                .iter()
                .map(|hd| {
                    nnz(hd.w_q.data())
                        + nnz(hd.w_k.data())
                        + nnz(hd.w_v.data())
                        + nnz(hd.w_o.data())
                })
                .sum::<u64>()
                + nnz(layer.w1.data())
                + nnz(layer.b1.data())
                + nnz(layer.w2.data())
                + nnz(layer.b2.data())
        })
        .sum()
}

/// Cartesian grid over [0,1]^d with `per_axis` points per axis.
pub fn unit_grid(d: usize, per_axis: usize) -> Vec<Vec<f64>> {
    assert!(per_axis >= 2);
    let axis: Vec<f64> = (0..per_axis)
        .map(|i| i as f64 / (per_axis - 1) as f64)
        .collect();
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

fn probe_max_abs(net: &TransformerNet, dims: Dims) -> Result<f64> {
    let d = dims.d_patch * dims.l;
    let per_axis = if d <= 5 { 3 } else { 2 };
    let mut max_abs = 0.0f64;
    for x in unit_grid(d, per_axis) {
        let (_, m) = net.forward_with_stats(&Tensor::col(x)?)?;
        max_abs = max_abs.max(m);
    }
    Ok(max_abs)
}

fn report_for(net: &TransformerNet, max_degree: u32, dims: Dims) -> Result<ConstructionReport> {
    let m_eps = max_degree.max(2) as f64;
    Ok(ConstructionReport {
        layers: net.spec.n_layers,
        heads: net.spec.h,
        nonzero_params: layer_nonzeros(net),
        layer_bound: (2.0 * (dims.l * dims.d_patch) as f64 * (m_eps.log2() + 1.0)).floor()
            as usize,
        max_abs_intermediate: probe_max_abs(net, dims)?,
    })
}

/// Single-head network computing b₁·η_n(x) exactly on [0,1]^d. A zero
/// multi-index yields a zero-layer network reading out b₁.
pub fn build_monomial_net(
    n: &MultiIndex,
    b1: f64,
) -> Result<(TransformerNet, ConstructionReport)> {
    let dims = n.dims();
    let program = monomial_program(n, b1)?;
    let a_out = sparse(1, dims.block(), &[(0, dims.acc(), 1.0)]);
    let net = assemble_net(dims, vec![program], b1, a_out, b1.abs().max(1.0) + 1.0)?;
    let report = report_for(&net, n.degree(), dims)?;
    Ok((net, report))
}

/// Multi-head network computing all monomials in parallel, output coordinate
/// s being η_{indices[s]}(x). Indices must be distinct.
pub fn build_parallel_monomials(
    indices: &[MultiIndex],
) -> Result<(TransformerNet, ConstructionReport)> {
    if indices.is_empty() {
        return Err(LfError::Config("no multi-indices given".to_string()));
    }
    let dims = indices[0].dims();
    for (i, a) in indices.iter().enumerate() {
        if a.dims() != dims {
            return Err(LfError::Config("mixed layouts".to_string()));
        }
        if indices[..i].contains(a) {
            return Err(LfError::Config(format!(
                "duplicate multi-index assigned to two heads: {:?}",
                a.exponents()
            )));
        }
    }
    let h = indices.len();
    let block = dims.block();
    let programs = indices
        .iter()
        .map(|n| monomial_program(n, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let mut a_out = vec![0.0; h * h * block];
    for s in 0..h {
        a_out[s * h * block + s * block + dims.acc()] = 1.0;
    }
    let net = assemble_net(
        dims,
        programs,
        1.0,
        Tensor::matrix(h, h * block, a_out)?,
        (h as f64).sqrt() + 1.0,
    )?;
    let max_degree = indices.iter().map(|n| n.degree()).max().unwrap();
    let report = report_for(&net, max_degree, dims)?;
    Ok((net, report))
}

/// Network computing Σ aₙ·η_n(x) exactly: one head per monomial, coefficients
/// placed in the readout.
pub fn assemble_polynomial_approximator(
    terms: &[(MultiIndex, f64)],
) -> Result<(TransformerNet, ConstructionReport)> {
    if terms.is_empty() {
        return Err(LfError::Config("no polynomial terms".to_string()));
    }
    let dims = terms[0].0.dims();
    let indices: Vec<MultiIndex> = terms.iter().map(|(n, _)| n.clone()).collect();
    let (mut net, _) = build_parallel_monomials(&indices)?;
    let h = terms.len();
    let block = dims.block();
    let mut a_out = vec![0.0; h * block];
    for (s, (_, coeff)) in terms.iter().enumerate() {
        a_out[s * block + dims.acc()] = *coeff;
    }
    net.a_out = Tensor::matrix(1, h * block, a_out)?;
    net.b_out = Tensor::zeros(1, 1);
    let bound = terms.iter().map(|(_, c)| c.abs()).sum::<f64>() + 1.0;
    net.spec.d_out = 1;
    net.spec.output_bound = bound;
    net.spec.lipschitz_budget = terms
        .iter()
        .map(|(n, c)| c.abs() * n.degree() as f64)
        .sum::<f64>()
        .max(1.0);
    let max_degree = indices.iter().map(|n| n.degree()).max().unwrap();
    let report = report_for(&net, max_degree, dims)?;
    Ok((net, report))
}

/// Max absolute deviation of the network from a reference function over a
/// point grid in [0,1]^d.
pub fn verify_construction(
    net: &TransformerNet,
    reference: &dyn Fn(&[f64]) -> Vec<f64>,
    grid: &[Vec<f64>],
) -> Result<f64> {
    let mut max_err = 0.0f64;
    for x in grid {
        if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(LfError::Contract(format!(
                "grid point {x:?} outside [0,1]^d"
            )));
        }
        let got = net.forward(&Tensor::col(x.clone())?)?;
        let want = reference(x);
        if want.len() != got.data().len() {
            return Err(LfError::Dimension(format!(
                "reference returned {} values, network {}",
                want.len(),
                got.data().len()
            )));
        }
        for (g, w) in got.data().iter().zip(&want) {
            max_err = max_err.max((g - w).abs());
        }
    }
    Ok(max_err)
}

/// Least-squares solve min‖Ac − y‖ by Householder QR (A is m×n row-major,
/// m ≥ n, full column rank).
fn lstsq(a: &mut [f64], m: usize, n: usize, y: &mut [f64]) -> Result<Vec<f64>> {
    for k in 0..n {
        let norm_x: f64 = (k..m).map(|i| a[i * n + k] * a[i * n + k]).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            return Err(LfError::Divergence("rank-deficient design matrix".to_string()));
        }
        let alpha = if a[k * n + k] > 0.0 { -norm_x } else { norm_x };
        let mut v: Vec<f64> = (k..m).map(|i| a[i * n + k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let dot: f64 = (k..m).map(|i| v[i - k] * a[i * n + j]).sum();
                let c = 2.0 * dot / vnorm2;
                for i in k..m {
                    a[i * n + j] -= c * v[i - k];
                }
            }
            let dot: f64 = (k..m).map(|i| v[i - k] * y[i]).sum();
            let c = 2.0 * dot / vnorm2;
            for i in k..m {
                y[i] -= c * v[i - k];
            }
        }
    }
    // back substitution on the upper-triangular R
    let mut c = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = y[k];
        for j in k + 1..n {
            s -= a[k * n + j] * c[j];
        }
        c[k] = s / a[k * n + k];
    }
    Ok(c)
}

/// Polynomial coefficients (all multi-indices of degree ≤ `degree`) fitted to
/// f by least squares on a dense grid: 513 points in 1D, 65² in 2D.
pub fn fit_polynomial_coeffs(
    f: &dyn Fn(&[f64]) -> f64,
    dims: Dims,
    degree: u32,
) -> Result<Vec<(MultiIndex, f64)>> {
    let d = dims.d_patch * dims.l;
    let grid = match d {
        1 => unit_grid(1, 513),
        2 => unit_grid(2, 65),
        _ => {
            return Err(LfError::Config(format!(
                "polynomial fitting supports d <= 2, got {d}"
            )))
        }
    };
    let indices = enumerate_multi_indices(dims, degree);
    let (m, n) = (grid.len(), indices.len());
    if m < n {
        return Err(LfError::Config("underdetermined fit".to_string()));
    }
    let mut a = vec![0.0; m * n];
    let mut y = vec![0.0; m];
    for (i, x) in grid.iter().enumerate() {
        for (j, idx) in indices.iter().enumerate() {
            a[i * n + j] = idx.eval(x);
        }
        y[i] = f(x);
    }
    let coeffs = lstsq(&mut a, m, n, &mut y)?;
    Ok(indices.into_iter().zip(coeffs).collect())
}
