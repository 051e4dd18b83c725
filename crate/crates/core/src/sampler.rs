//! ODE integration of velocity fields: the Euler sampler on a schedule-driven
//! time grid, a high-accuracy Runge–Kutta reference flow, discretization-error
//! curves, and a discrete Grönwall-inequality checker.

use crate::error::{LfError, Result};
use crate::field::VelocityField;
use crate::metrics::{w2_exact, EmpiricalMeasure};

/// Monotone time knots 0 = t₀ < … < t_N = T.
#[derive(Debug, Clone)]
pub struct TimeGrid {
    knots: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(n_steps: usize, horizon: f64) -> Result<TimeGrid> {
        if n_steps == 0 {
            return Err(LfError::Config("grid needs at least one step".to_string()));
        }
        if !(0.0 < horizon && horizon < 1.0) {
            return Err(LfError::Config(format!(
                "horizon T = {horizon} must lie in (0, 1)"
            )));
        }
        let knots = (0..=n_steps)
            .map(|k| horizon * k as f64 / n_steps as f64)
            .collect();
        Ok(TimeGrid { knots })
    }

    pub fn from_knots(knots: Vec<f64>) -> Result<TimeGrid> {
        if knots.len() < 2 || knots[0] != 0.0 {
            return Err(LfError::Config("grid must start at 0".to_string()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LfError::Config("grid knots must increase".to_string()));
        }
        Ok(TimeGrid { knots })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_steps(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn max_step(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Early-stopping schedule T(n) = clamp(1 − (log n)^{−1/6}, 1/2, 0.999).
pub fn horizon_schedule(n: usize) -> f64 {
    if n < 2 {
        return 0.5;
    }
    (1.0 - (n as f64).ln().powf(-1.0 / 6.0)).clamp(0.5, 0.999)
}

/// Uniform grid whose step obeys the sample-size schedule: step ≤ c·n^{−1/(d+3)}
/// with horizon T(n) (or an explicit override).
pub fn make_grid(n: usize, d: usize, horizon: Option<f64>, c: f64) -> Result<TimeGrid> {
    if n == 0 || d == 0 {
        return Err(LfError::Config("make_grid needs n, d >= 1".to_string()));
    }
    if c <= 0.0 {
        return Err(LfError::Config("step constant c must be > 0".to_string()));
    }
    let t = match horizon {
        Some(t) => t,
        None => horizon_schedule(n),
    };
    let max_step = c * (n as f64).powf(-1.0 / (d as f64 + 3.0));
    let n_steps = (t / max_step).ceil().max(1.0) as usize;
    TimeGrid::uniform(n_steps, t)
}

/// One Euler path: states[k] is the state at knot k (states[0] = start).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        self.states.last().unwrap()
    }
}

/// Forward-Euler integration of all starts over the grid.
pub fn euler_flow(
    v: &dyn VelocityField,
    grid: &TimeGrid,
    starts: &[Vec<f64>],
) -> Result<Vec<Trajectory>> {
    if grid.horizon() > v.horizon() + 1e-12 {
        return Err(LfError::Contract(format!(
            "grid horizon {} exceeds field horizon {}",
            grid.horizon(),
            v.horizon()
        )));
    }
    let d = v.dim();
    let knots = grid.knots();
    let mut out = Vec::with_capacity(starts.len());
    for start in starts {
        if start.len() != d {
            return Err(LfError::Dimension(format!(
                "start has dim {}, field has {d}",
                start.len()
            )));
        }
        let mut states = Vec::with_capacity(knots.len());
        states.push(start.clone());
        for w in knots.windows(2) {
            let (t, dt) = (w[0], w[1] - w[0]);
            let x = states.last().unwrap();
            let vel = v.velocity(x, t)?;
            let next: Vec<f64> = x.iter().zip(&vel).map(|(&xi, &vi)| xi + dt * vi).collect();
            if next.iter().any(|z| !z.is_finite()) {
                return Err(LfError::Divergence(format!(
                    "euler state became non-finite at t = {t}"
                )));
            }
            states.push(next);
        }
        out.push(Trajectory { states });
    }
    Ok(out)
}

/// Terminal states only.
pub fn euler_terminals(
    v: &dyn VelocityField,
    grid: &TimeGrid,
    starts: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    Ok(euler_flow(v, grid, starts)?
        .into_iter()
        .map(|tr| tr.states.into_iter().last().unwrap())
        .collect())
}

fn rk4_terminals(
    v: &dyn VelocityField,
    horizon: f64,
    starts: &[Vec<f64>],
    n_steps: usize,
) -> Result<Vec<Vec<f64>>> {
    let dt = horizon / n_steps as f64;
    let mut out = Vec::with_capacity(starts.len());
    for start in starts {
        let mut x = start.clone();
        for k in 0..n_steps {
            let t = horizon * k as f64 / n_steps as f64;
            // clamp stage times into the field's domain against rounding
            let tc = |s: f64| s.min(horizon);
            let k1 = v.velocity(&x, tc(t))?;
            let x2: Vec<f64> = x.iter().zip(&k1).map(|(&a, &b)| a + 0.5 * dt * b).collect();
            let k2 = v.velocity(&x2, tc(t + 0.5 * dt))?;
            let x3: Vec<f64> = x.iter().zip(&k2).map(|(&a, &b)| a + 0.5 * dt * b).collect();
            let k3 = v.velocity(&x3, tc(t + 0.5 * dt))?;
            let x4: Vec<f64> = x.iter().zip(&k3).map(|(&a, &b)| a + dt * b).collect();
            let k4 = v.velocity(&x4, tc(t + dt))?;
            for i in 0..x.len() {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if x.iter().any(|z| !z.is_finite()) {
                return Err(LfError::Divergence(format!(
                    "reference state became non-finite at t = {t}"
                )));
            }
        }
        out.push(x);
    }
    Ok(out)
}

/// High-accuracy terminal states: RK4 with step halving until the max
/// terminal change over all starts drops below `tol`.
pub fn reference_flow(
    v: &dyn VelocityField,
    horizon: f64,
    starts: &[Vec<f64>],
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    if starts.is_empty() {
        return Err(LfError::Contract("no start points".to_string()));
    }
    if tol <= 0.0 {
        return Err(LfError::Config("tolerance must be > 0".to_string()));
    }
    let mut n_steps = 16usize;
    let mut prev = rk4_terminals(v, horizon, starts, n_steps)?;
    loop {
        n_steps *= 2;
        let cur = rk4_terminals(v, horizon, starts, n_steps)?;
        let max_diff = prev
            .iter()
            .zip(&cur)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(&x, &y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        if max_diff < tol {
            return Ok(cur);
        }
        if n_steps >= 1 << 20 {
            return Err(LfError::Divergence(format!(
                "reference flow did not converge: diff {max_diff} at {n_steps} steps"
            )));
        }
        prev = cur;
    }
}

/// One row of a discretization-error sweep.
#[derive(Debug, Clone)]
pub struct DiscretizationPoint {
    pub n_steps: usize,
    pub max_step: f64,
    /// √(mean ‖euler_i − ref_i‖²) over the shared start points — the W2 of
    /// the coupling induced by common starts, an upper bound on the true W2.
    pub coupling_w2: f64,
    /// Exact W2 between the two terminal point clouds.
    pub exact_w2: f64,
}

/// Euler-vs-reference terminal error for each step count, shared starts.
pub fn discretization_error_curve(
    v: &dyn VelocityField,
    horizon: f64,
    starts: &[Vec<f64>],
    step_counts: &[usize],
    tol: f64,
) -> Result<Vec<DiscretizationPoint>> {
    let reference = reference_flow(v, horizon, starts, tol)?;
    let ref_measure = EmpiricalMeasure::new(reference.clone())?;
    let mut out = Vec::with_capacity(step_counts.len());
    for &n_steps in step_counts {
        let grid = TimeGrid::uniform(n_steps, horizon)?;
        let terminals = euler_terminals(v, &grid, starts)?;
        let coupling = (terminals
            .iter()
            .zip(&reference)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(&x, &y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / starts.len() as f64)
            .sqrt();
        let exact = w2_exact(&EmpiricalMeasure::new(terminals)?, &ref_measure)?;
        out.push(DiscretizationPoint {
            n_steps,
            max_step: grid.max_step(),
            coupling_w2: coupling,
            exact_w2: exact,
        });
    }
    Ok(out)
}

/// Least-squares slope of log y against log x.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(LfError::Contract("need >= 2 paired points".to_string()));
    }
    if xs.iter().chain(ys).any(|&v| v <= 0.0) {
        return Err(LfError::Contract(
            "log-log slope needs positive data".to_string(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(LfError::Contract("degenerate x values".to_string()));
    }
    Ok(sxy / sxx)
}

/// Discrete Grönwall envelope: e^{α(t_k − t_0)}·f₀ + Σ_{j<k} e^{α(t_k − t_j)}·g_j·Δt_j
/// at every knot. `g` gives the inhomogeneity on each of the len−1 intervals.
pub fn gronwall_envelope(alpha: f64, ts: &[f64], f0: f64, g: &[f64]) -> Result<Vec<f64>> {
    if ts.len() < 2 || g.len() != ts.len() - 1 {
        return Err(LfError::Contract(format!(
            "envelope: {} knots with {} interval terms",
            ts.len(),
            g.len()
        )));
    }
    let mut out = Vec::with_capacity(ts.len());
    for (k, &tk) in ts.iter().enumerate() {
        let mut bound = (alpha * (tk - ts[0])).exp() * f0;
        for j in 0..k {
            bound += (alpha * (tk - ts[j])).exp() * g[j] * (ts[j + 1] - ts[j]);
        }
        out.push(bound);
    }
    Ok(out)
}

/// Check f(t_k) ≤ envelope(t_k) at every knot (with a small relative slack for
/// floating-point noise).
pub fn gronwall_check(alpha: f64, ts: &[f64], f: &[f64], g: &[f64]) -> Result<bool> {
    if f.len() != ts.len() {
        return Err(LfError::Contract(format!(
            "check: {} knots with {} values",
            ts.len(),
            f.len()
        )));
    }
    let envelope = gronwall_envelope(alpha, ts, f[0], g)?;
    Ok(f.iter()
        .zip(&envelope)
        .all(|(&fv, &bv)| fv <= bv * (1.0 + 1e-9) + 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;
    use crate::oracle::{DiscreteTarget, OracleField};
    use crate::rng::{standard_normal_vec, substream};

    #[test]
    fn schedule_and_grid_contracts() {
        assert_eq!(horizon_schedule(1), 0.5);
        // (log n)^{-1/6} >= 0.5 for all reachable n, so the clamp floor binds
        // until log n > 64; even n = 10^9 stays at 0.5
        assert_eq!(horizon_schedule(1_000_000_000), 0.5);

        let grid = make_grid(256, 1, Some(0.9), 0.5).unwrap();
        assert!(grid.max_step() <= 0.5 * 256f64.powf(-0.25) + 1e-15);
        assert_eq!(grid.horizon(), 0.9);
        assert_eq!(grid.knots()[0], 0.0);
        assert!(grid.knots().windows(2).all(|w| w[1] > w[0]));

        assert!(TimeGrid::uniform(0, 0.9).is_err());
        assert!(TimeGrid::uniform(4, 1.0).is_err());
        assert!(TimeGrid::from_knots(vec![0.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn euler_constant_field_is_exact() {
        let v = FnField {
            dim: 2,
            horizon: 0.9,
            f: |_: &[f64], _: f64| vec![1.0, -2.0],
        };
        let grid = TimeGrid::uniform(7, 0.9).unwrap();
        let tr = euler_flow(&v, &grid, &[vec![0.0, 0.0]]).unwrap();
        let term = tr[0].terminal();
        assert!((term[0] - 0.9).abs() < 1e-12);
        assert!((term[1] + 1.8).abs() < 1e-12);
    }

    #[test]
    fn euler_linear_field_matches_geometric_recursion() {
        // v = x: Euler gives (1 + dt)^N exactly
        let v = FnField {
            dim: 1,
            horizon: 0.8,
            f: |x: &[f64], _: f64| vec![x[0]],
        };
        let grid = TimeGrid::uniform(10, 0.8).unwrap();
        let tr = euler_flow(&v, &grid, &[vec![1.0]]).unwrap();
        assert!((tr[0].terminal()[0] - 1.08f64.powi(10)).abs() < 1e-12);
    }

    #[test]
    fn reference_flow_matches_closed_forms() {
        // v = x over [0, 0.8]: x(T) = e^T
        let v = FnField {
            dim: 1,
            horizon: 0.8,
            f: |x: &[f64], _: f64| vec![x[0]],
        };
        let term = reference_flow(&v, 0.8, &[vec![1.0]], 1e-10).unwrap();
        assert!((term[0][0] - 0.8f64.exp()).abs() < 1e-9);

        // point-mass oracle: X(t) = t·a + √(1−t²)·x0
        let oracle = OracleField::new(DiscreteTarget::single(vec![0.7]).unwrap(), 0.9).unwrap();
        let x0 = 1.3;
        let term = reference_flow(&oracle, 0.9, &[vec![x0]], 1e-10).unwrap();
        let want = 0.9 * 0.7 + (1.0 - 0.81f64).sqrt() * x0;
        assert!((term[0][0] - want).abs() < 1e-8, "{} vs {want}", term[0][0]);
    }

    #[test]
    fn euler_deviation_obeys_gronwall() {
        // point-mass target: exact flow known, field Lipschitz const T/(1−T²)
        let a = 0.7;
        let t_end = 0.9;
        let oracle =
            OracleField::new(DiscreteTarget::single(vec![a]).unwrap(), t_end).unwrap();
        let exact = |x0: f64, t: f64| t * a + (1.0 - t * t).sqrt() * x0;
        let x0 = -0.8;
        let grid = TimeGrid::uniform(64, t_end).unwrap();
        let tr = euler_flow(&oracle, &grid, &[vec![x0]]).unwrap();
        let ts = grid.knots();
        let f: Vec<f64> = ts
            .iter()
            .zip(&tr[0].states)
            .map(|(&t, s)| (s[0] - exact(x0, t)).abs())
            .collect();
        // defect of the exact solution under one Euler step
        let g: Vec<f64> = ts
            .windows(2)
            .map(|w| {
                let (t, dt) = (w[0], w[1] - w[0]);
                let xe = exact(x0, t);
                let v = oracle.true_velocity(&[xe], t).unwrap()[0];
                ((exact(x0, w[1]) - xe) / dt - v).abs()
            })
            .collect();
        let alpha = t_end / (1.0 - t_end * t_end);
        assert!(gronwall_check(alpha, ts, &f, &g).unwrap());
    }

    #[test]
    fn gronwall_checker_detects_violation() {
        let ts = [0.0, 0.5, 1.0];
        let g = [0.0, 0.0];
        // f grows faster than e^{0.1 t} from f0 = 1 with no inhomogeneity
        assert!(!gronwall_check(0.1, &ts, &[1.0, 3.0, 9.0], &g).unwrap());
        // exact solution of f' = f: passes with alpha = 1
        let f: Vec<f64> = ts.iter().map(|t| t.exp()).collect();
        assert!(gronwall_check(1.0, &ts, &f, &[0.0, 0.0]).unwrap());
    }

    #[test]
    fn discretization_error_shrinks_and_slope_is_first_order() {
        let target = DiscreteTarget::uniform(vec![vec![0.2], vec![0.9]]).unwrap();
        let oracle = OracleField::new(target, 0.9).unwrap();
        let mut rng = substream(21, "disc");
        let starts: Vec<Vec<f64>> = (0..32).map(|_| standard_normal_vec(&mut rng, 1)).collect();
        let curve =
            discretization_error_curve(&oracle, 0.9, &starts, &[4, 8, 16, 32], 1e-9).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].coupling_w2 < w[0].coupling_w2);
            // exact W2 never exceeds the coupling bound
            assert!(w[0].exact_w2 <= w[0].coupling_w2 + 1e-12);
        }
        let hs: Vec<f64> = curve.iter().map(|p| p.max_step).collect();
        let es: Vec<f64> = curve.iter().map(|p| p.coupling_w2).collect();
        let slope = log_log_slope(&hs, &es).unwrap();
        assert!((0.7..1.3).contains(&slope), "slope {slope}");
    }

    #[test]
    fn log_log_slope_recovers_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|&x: &f64| 3.0 * x.powf(-1.5)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() + 1.5).abs() < 1e-12);
        assert!(log_log_slope(&[1.0], &[1.0]).is_err());
        assert!(log_log_slope(&[1.0, -1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn grid_horizon_beyond_field_errors() {
        let v = FnField {
            dim: 1,
            horizon: 0.5,
            f: |_: &[f64], _: f64| vec![0.0],
        };
        let grid = TimeGrid::uniform(4, 0.9).unwrap();
        assert!(euler_flow(&v, &grid, &[vec![0.0]]).is_err());
    }
}
