//! Evaluation metrics: exact Wasserstein-2 between equal-size empirical
//! measures, Monte-Carlo velocity-field L² error, and Lipschitz estimation.

use rand::Rng;

use crate::error::{LfError, Result};
use crate::field::VelocityField;
use crate::oracle::{interpolate, OracleField};
use crate::rng::{standard_normal_vec, substream};

/// Uniformly weighted point multiset.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    points: Vec<Vec<f64>>,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<Vec<f64>>) -> Result<EmpiricalMeasure> {
        if points.is_empty() {
            return Err(LfError::Contract("empty empirical measure".to_string()));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(LfError::Dimension("ragged point set".to_string()));
        }
        Ok(EmpiricalMeasure { points })
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

    /// Apply a map pointwise (push-forward).
    pub fn map(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> EmpiricalMeasure {
        EmpiricalMeasure {
            points: self.points.iter().map(|p| f(p)).collect(),
        }
    }
}

/// Minimum-cost perfect matching on a dense n×n cost matrix by shortest
/// augmenting paths with dual potentials. Returns col4row.
fn solve_assignment(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut col4row = vec![usize::MAX; n];
    let mut row4col = vec![usize::MAX; n];

    for cur_row in 0..n {
        let mut shortest = vec![f64::INFINITY; n];
        let mut path = vec![usize::MAX; n];
        let mut done_col = vec![false; n];
        let mut done_row = vec![false; n];
        let mut min_val = 0.0;
        let mut i = cur_row;
        let sink;
        loop {
            done_row[i] = true;
            let mut lowest = f64::INFINITY;
            let mut index = usize::MAX;
            for j in 0..n {
                if done_col[j] {
                    continue;
                }
                let r = min_val + cost[i * n + j] - u[i] - v[j];
                if r < shortest[j] {
                    shortest[j] = r;
                    path[j] = i;
                }
                if shortest[j] < lowest
                    || (shortest[j] == lowest && row4col[j] == usize::MAX)
                {
                    lowest = shortest[j];
                    index = j;
                }
            }
            if !lowest.is_finite() {
                return Err(LfError::Divergence(
                    "assignment problem infeasible".to_string(),
                ));
            }
            min_val = lowest;
            let j = index;
            done_col[j] = true;
            if row4col[j] == usize::MAX {
                sink = j;
                break;
            }
            i = row4col[j];
        }

        u[cur_row] += min_val;
        for i in 0..n {
            if done_row[i] && i != cur_row {
                u[i] += min_val - shortest[col4row[i]];
            }
        }
        for j in 0..n {
            if done_col[j] {
                v[j] -= min_val - shortest[j];
            }
        }

        let mut j = sink;
        loop {
            let i = path[j];
            row4col[j] = i;
            std::mem::swap(&mut col4row[i], &mut j);
            if i == cur_row {
                break;
            }
        }
    }
    Ok(col4row)
}

/// Exact W2 between two equal-size uniform empirical measures:
/// √(min over matchings of the mean squared pair distance).
pub fn w2_exact(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    let n = a.len();
    if b.len() != n {
        return Err(LfError::Contract(format!(
            "w2_exact needs equal sizes, got {} vs {} (resample first)",
            n,
            b.len()
        )));
    }
    if n > 4096 {
        return Err(LfError::Contract(format!(
            "w2_exact limited to 4096 points, got {n}"
        )));
    }
    let mut cost = vec![0.0; n * n];
    for (i, p) in a.points().iter().enumerate() {
        for (j, q) in b.points().iter().enumerate() {
            cost[i * n + j] = p
                .iter()
                .zip(q)
                .map(|(&x, &y)| (x - y) * (x - y))
                .sum::<f64>();
        }
    }
    let col4row = solve_assignment(&cost, n)?;
    let total: f64 = col4row
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    Ok((total / n as f64).sqrt())
}

/// Monte-Carlo estimate of (1/T)∫₀ᵀ‖v−v*‖²_{L²(π_t)} dt with its standard
/// error. Samples (t, x0, x1) with t uniform on [0,T), forms the interpolant
/// point, and averages the squared field discrepancy.
pub fn l2_velocity_error(
    v: &dyn VelocityField,
    oracle: &OracleField,
    mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if mc == 0 {
        return Err(LfError::Contract("mc = 0".to_string()));
    }
    let mut rng = substream(seed, "mc-eval");
    let d = oracle.dim();
    let t_max = oracle.horizon;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..mc {
        let t: f64 = rng.gen_range(0.0..t_max);
        let x0 = standard_normal_vec(&mut rng, d);
        let x1 = oracle.target.sample(&mut rng).to_vec();
        let xt = interpolate(&x0, &x1, t)?;
        let va = v.velocity(&xt, t)?;
        let vb = oracle.true_velocity(&xt, t)?;
        let g: f64 = va
            .iter()
            .zip(&vb)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        sum += g;
        sum_sq += g * g;
    }
    let mean = sum / mc as f64;
    let var = (sum_sq / mc as f64 - mean * mean).max(0.0);
    Ok((mean, (var / mc as f64).sqrt()))
}

/// Axis-aligned box domain for Lipschitz probing.
#[derive(Debug, Clone)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn cube(lo: f64, hi: f64, d: usize) -> BoxDomain {
        BoxDomain {
            lo: vec![lo; d],
            hi: vec![hi; d],
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| rng.gen_range(a..b))
            .collect()
    }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Estimate spatial and temporal Lipschitz constants of f(x, t) by the max
/// difference quotient over random pairs, sharpened by bisecting the best
/// pair toward a local derivative estimate. Estimates are monotone
/// nondecreasing in the pair budget for a fixed seed.
pub fn measure_lipschitz(
    f: &dyn Fn(&[f64], f64) -> Result<Vec<f64>>,
    domain: &BoxDomain,
    horizon: f64,
    pairs: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if pairs == 0 {
        return Err(LfError::Contract("pairs = 0".to_string()));
    }
    let mut rng = substream(seed, "lipschitz-pairs");
    let mut best_x = (0.0, Vec::new(), Vec::new(), 0.0); // (quotient, x1, x2, t)
    let mut best_t = (0.0, Vec::new(), 0.0, 0.0); // (quotient, x, t1, t2)
    for _ in 0..pairs {
        let t: f64 = rng.gen_range(0.0..horizon);
        let x1 = domain.sample(&mut rng);
        let x2 = domain.sample(&mut rng);
        let dx = norm_diff(&x1, &x2);
        if dx > 0.0 {
            let q = norm_diff(&f(&x1, t)?, &f(&x2, t)?) / dx;
            if q > best_x.0 {
                best_x = (q, x1.clone(), x2.clone(), t);
            }
        }
        let t2: f64 = rng.gen_range(0.0..horizon);
        if (t - t2).abs() > 0.0 {
            let q = norm_diff(&f(&x1, t)?, &f(&x1, t2)?) / (t - t2).abs();
            if q > best_t.0 {
                best_t = (q, x1, t, t2);
            }
        }
    }
    // refine spatially: bisect x2 toward x1
    let mut gx = best_x.0;
    if !best_x.1.is_empty() {
        let (_, x1, mut x2, t) = best_x;
        for _ in 0..30 {
            let mid: Vec<f64> = x1.iter().zip(&x2).map(|(&a, &b)| 0.5 * (a + b)).collect();
            let dx = norm_diff(&x1, &mid);
            if dx < 1e-9 {
                break;
            }
            let q = norm_diff(&f(&x1, t)?, &f(&mid, t)?) / dx;
            gx = gx.max(q);
            x2 = mid;
        }
    }
    let mut gt = best_t.0;
    if !best_t.1.is_empty() {
        let (_, x, t1, mut t2) = best_t;
        for _ in 0..30 {
            let mid = 0.5 * (t1 + t2);
            let dt = (t1 - mid).abs();
            if dt < 1e-9 {
                break;
            }
            let q = norm_diff(&f(&x, t1)?, &f(&x, mid)?) / dt;
            gt = gt.max(q);
            t2 = mid;
        }
    }
    Ok((gx, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn em(points: Vec<Vec<f64>>) -> EmpiricalMeasure {
        EmpiricalMeasure::new(points).unwrap()
    }

    fn brute_force_w2(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
        fn perms(n: usize) -> Vec<Vec<usize>> {
            if n == 1 {
                return vec![vec![0]];
            }
            let mut out = Vec::new();
            for p in perms(n - 1) {
                for k in 0..n {
                    let mut q = p.clone();
                    q.insert(k, n - 1);
                    out.push(q);
                }
            }
            out
        }
        let n = a.len();
        let mut best = f64::INFINITY;
        for p in perms(n) {
            let c: f64 = (0..n)
                .map(|i| {
                    a.points()[i]
                        .iter()
                        .zip(&b.points()[p[i]])
                        .map(|(&x, &y)| (x - y) * (x - y))
                        .sum::<f64>()
                })
                .sum();
            best = best.min(c);
        }
        (best / n as f64).sqrt()
    }

    #[test]
    fn w2_basics() {
        let a = em(vec![vec![0.0], vec![2.0]]);
        assert_eq!(w2_exact(&a, &a).unwrap(), 0.0);

        let z = em(vec![vec![0.0]]);
        let o = em(vec![vec![1.0]]);
        assert!((w2_exact(&z, &o).unwrap() - 1.0).abs() < 1e-15);

        let b = em(vec![vec![1.0], vec![3.0]]);
        assert!((w2_exact(&a, &b).unwrap() - 1.0).abs() < 1e-15);

        assert!(w2_exact(&a, &z).is_err());
    }

    #[test]
    fn w2_matches_brute_force_on_random_sets() {
        let mut rng = substream(31, "w2");
        for trial in 0..20 {
            let n = 2 + trial % 5;
            let d = 1 + trial % 3;
            let a = em((0..n)
                .map(|_| crate::rng::standard_normal_vec(&mut rng, d))
                .collect());
            let b = em((0..n)
                .map(|_| crate::rng::standard_normal_vec(&mut rng, d))
                .collect());
            let fast = w2_exact(&a, &b).unwrap();
            let slow = brute_force_w2(&a, &b);
            assert!(
                (fast - slow).abs() < 1e-10,
                "n={n} d={d}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn w2_is_symmetric_and_triangular() {
        let mut rng = substream(32, "w2-metric");
        for _ in 0..10 {
            let mk = |rng: &mut rand_chacha::ChaCha20Rng| {
                em((0..6)
                    .map(|_| crate::rng::standard_normal_vec(rng, 2))
                    .collect())
            };
            let (a, b, c) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
            let ab = w2_exact(&a, &b).unwrap();
            let ba = w2_exact(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-12);
            let ac = w2_exact(&a, &c).unwrap();
            let cb = w2_exact(&c, &b).unwrap();
            assert!(ab <= ac + cb + 1e-9);
        }
    }

    #[test]
    fn w2_contracts_under_lipschitz_maps() {
        let mut rng = substream(33, "w2-lip");
        for _ in 0..10 {
            let m: Vec<f64> = crate::rng::standard_normal_vec(&mut rng, 4);
            let a = em((0..8)
                .map(|_| crate::rng::standard_normal_vec(&mut rng, 2))
                .collect());
            let b = em((0..8)
                .map(|_| crate::rng::standard_normal_vec(&mut rng, 2))
                .collect());
            let mt = crate::tensor::Tensor::matrix(2, 2, m.clone()).unwrap();
            let op = crate::transformer::operator_norm(&mt, 50);
            let apply = |p: &[f64]| {
                vec![
                    m[0] * p[0] + m[1] * p[1],
                    m[2] * p[0] + m[3] * p[1],
                ]
            };
            let fa = a.map(apply);
            let fb = b.map(apply);
            let lhs = w2_exact(&fa, &fb).unwrap();
            let rhs = op * w2_exact(&a, &b).unwrap();
            assert!(lhs <= rhs + 1e-9, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn l2_error_zero_for_oracle_and_shift_identity() {
        let target =
            crate::oracle::DiscreteTarget::uniform(vec![vec![0.2], vec![0.8]]).unwrap();
        let oracle = crate::oracle::OracleField::new(target, 0.9).unwrap();
        let (err, _) = l2_velocity_error(&oracle, &oracle, 2000, 5).unwrap();
        assert_eq!(err, 0.0);

        let shifted = crate::field::FnField {
            dim: 1,
            horizon: 0.9,
            f: {
                let o = oracle.clone();
                move |x: &[f64], t: f64| {
                    let mut v = o.true_velocity(x, t).unwrap();
                    v[0] += 0.3;
                    v
                }
            },
        };
        let (err, se) = l2_velocity_error(&shifted, &oracle, 2000, 5).unwrap();
        assert!((err - 0.09).abs() < 1e-9, "gap {err} se {se}");
    }

    #[test]
    fn lipschitz_constant_field_and_affine_field() {
        let constf = |_: &[f64], _: f64| Ok(vec![1.0, 2.0]);
        let (gx, gt) = measure_lipschitz(
            &constf,
            &BoxDomain::cube(-1.0, 1.0, 2),
            0.9,
            100,
            7,
        )
        .unwrap();
        assert_eq!((gx, gt), (0.0, 0.0));

        let mut rng = substream(34, "affine");
        let m: Vec<f64> = crate::rng::standard_normal_vec(&mut rng, 4);
        let mt = crate::tensor::Tensor::matrix(2, 2, m.clone()).unwrap();
        let op = crate::transformer::operator_norm(&mt, 50);
        let affine = move |x: &[f64], _: f64| {
            Ok(vec![
                m[0] * x[0] + m[1] * x[1],
                m[2] * x[0] + m[3] * x[1],
            ])
        };
        let (gx, _) = measure_lipschitz(
            &affine,
            &BoxDomain::cube(-1.0, 1.0, 2),
            1.0,
            10_000,
            7,
        )
        .unwrap();
        assert!(gx <= op * 1.0001 && gx >= 0.95 * op, "gx {gx} op {op}");
    }

    #[test]
    fn lipschitz_monotone_in_pair_budget() {
        let f = |x: &[f64], t: f64| Ok(vec![(3.0 * x[0]).sin() + t * t]);
        let domain = BoxDomain::cube(0.0, 1.0, 1);
        let mut last = 0.0;
        for &pairs in &[10, 100, 1000] {
            let (gx, _) = measure_lipschitz(&f, &domain, 1.0, pairs, 9).unwrap();
            assert!(gx >= last);
            last = gx;
        }
    }
}
