//! Kind-specific experiment runners. Each writes metric CSVs and checkpoints
//! into the workspace; all randomness derives from the config seed through
//! named substreams.

use anyhow::{anyhow, bail, Result};
use serde_json::json;

use latentflow::autoencoder::{self, encode_batch, pretrain, PretrainConfig, PretrainSet};
use latentflow::construct::{build_monomial_net, unit_grid, verify_construction, Dims, MultiIndex};
use latentflow::csvio::{float_cell, int_cell};
use latentflow::flow::{train, TrainConfig, TrainLogRow, TrainingSet};
use latentflow::metrics::{l2_velocity_error, w2_exact, EmpiricalMeasure};
use latentflow::oracle::{DiscreteTarget, OracleField};
use latentflow::rng::{standard_normal_vec, substream};
use latentflow::sampler::{discretization_error_curve, euler_terminals, log_log_slope, make_grid};
use latentflow::transformer::{RescaledVelocityNet, TransformerNet, TransformerSpec};

use crate::config::{Axis, ExperimentConfig, Kind};
use crate::manifest::Workspace;

pub fn dispatch(cfg: &ExperimentConfig, ws: &mut Workspace, verbose: bool) -> Result<()> {
    match cfg.kind {
        Kind::Construct => run_construct(cfg, ws),
        Kind::OracleCheck => run_oracle_check(cfg, ws),
        Kind::TrainLatent => run_train_latent(cfg, ws, verbose),
        Kind::EndToEnd => run_end_to_end(cfg, ws, verbose),
        Kind::DiscretizationSweep => run_discretization(cfg, ws),
        Kind::RateSweep => run_sweep(cfg, ws, verbose),
    }
}

// ---------------------------------------------------------------------------
// shared pieces

fn target_from(cfg: &ExperimentConfig) -> Result<DiscreteTarget> {
    let atoms = cfg
        .target_atoms
        .clone()
        .ok_or_else(|| anyhow!("config.target_atoms: missing"))?;
    Ok(match &cfg.target_weights {
        Some(w) => DiscreteTarget::new(atoms, w.clone())?,
        None => DiscreteTarget::uniform(atoms)?,
    })
}

fn train_horizon(cfg: &ExperimentConfig) -> f64 {
    // the sampling schedule T(n) clamps to 1/2 at practical n, which the
    // training contract excludes; default to the paper-style working point
    cfg.horizon.unwrap_or(0.9)
}

fn flow_spec(cfg: &ExperimentConfig, latent_dim: usize, horizon: f64, radius: f64) -> TransformerSpec {
    let d = latent_dim as f64;
    let output_bound = d.sqrt() * (1.0 + radius) / (1.0 - horizon * horizon);
    let budget = 4.0 * radius * horizon * d.max(1.0) / (1.0 - horizon * horizon).powi(2);
    RescaledVelocityNet::inner_spec(
        latent_dim,
        cfg.n_layers.unwrap_or(2),
        cfg.heads.unwrap_or(2),
        4,
        8,
        cfg.d_ff.unwrap_or(16),
        output_bound,
        budget,
    )
}

fn train_once(
    cfg: &ExperimentConfig,
    target: &DiscreteTarget,
    n: usize,
    horizon: f64,
    seed: u64,
) -> Result<(RescaledVelocityNet, Vec<TrainLogRow>, OracleField)> {
    let radius = cfg
        .box_radius
        .unwrap_or_else(|| TrainConfig::default_box_radius(n));
    let tc = TrainConfig {
        epochs: cfg.epochs.unwrap_or(100),
        batch_size: cfg.batch_size.unwrap_or(32),
        learning_rate: cfg.learning_rate.unwrap_or(1e-3),
        clip_threshold: cfg.clip_threshold,
        seed,
        horizon,
        box_radius: radius,
        eval_mc: cfg.eval_mc.unwrap_or(2000),
    };
    let oracle = OracleField::new(target.clone(), horizon)?;
    let s = TrainingSet::generate(target, n, horizon, seed)?;
    let (net, log) = train(flow_spec(cfg, target.dim(), horizon, radius), &s, &tc, Some(&oracle))?;
    Ok((net, log, oracle))
}

fn train_log_rows(log: &[TrainLogRow]) -> Vec<Vec<String>> {
    log.iter()
        .map(|r| {
            vec![
                int_cell(r.epoch),
                float_cell(r.empirical_loss),
                r.population_gap.map(float_cell).unwrap_or_default(),
                float_cell(r.lipschitz_x),
                float_cell(r.param_norm),
            ]
        })
        .collect()
}

fn flow_checkpoint(net: &RescaledVelocityNet) -> Result<String> {
    let inner: serde_json::Value = serde_json::from_str(&net.inner.to_json()?)?;
    Ok(serde_json::to_string_pretty(&json!({
        "latent_dim": net.latent_dim,
        "box_radius": net.box_radius,
        "horizon": net.horizon,
        "net": inner,
    }))?)
}

/// Euler-sample the trained field from Gaussian starts and measure exact W2
/// against fresh target draws.
fn sample_and_w2(
    net: &RescaledVelocityNet,
    target: &DiscreteTarget,
    cfg: &ExperimentConfig,
    n: usize,
    seed: u64,
) -> Result<(usize, f64)> {
    let k = cfg.sample_count.unwrap_or(128).min(4096);
    let d = target.dim();
    let mut rng = substream(seed, "sampling");
    let starts: Vec<Vec<f64>> = (0..k).map(|_| standard_normal_vec(&mut rng, d)).collect();
    let grid = make_grid(n, d, Some(net.horizon), cfg.step_scale.unwrap_or(1.0))?;
    let ends = euler_terminals(net, &grid, &starts)?;
    let mut trng = substream(seed, "target-sample");
    let draws: Vec<Vec<f64>> = (0..k).map(|_| target.sample(&mut trng).to_vec()).collect();
    let w2 = w2_exact(&EmpiricalMeasure::new(ends)?, &EmpiricalMeasure::new(draws)?)?;
    Ok((grid.n_steps(), w2))
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

// ---------------------------------------------------------------------------
// construct

fn run_construct(cfg: &ExperimentConfig, ws: &mut Workspace) -> Result<()> {
    let dims = Dims::new(cfg.d_patch.unwrap(), cfg.tokens.unwrap())?;
    let b1 = cfg.accumulator_seed.unwrap_or(1.0);
    let d = dims.d_patch * dims.l;
    let grid = unit_grid(d, if d <= 2 { 17 } else { 7 });
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for (i, exps) in cfg.exponents.as_ref().unwrap().iter().enumerate() {
        let mi = MultiIndex::new(exps.clone(), dims)?;
        let (net, report) = build_monomial_net(&mi, b1)?;
        let err = verify_construction(&net, &|x: &[f64]| vec![b1 * mi.eval(x)], &grid)?;
        worst = worst.max(err);
        rows.push(vec![
            exps.iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("|"),
            int_cell(report.layers as u64),
            int_cell(report.heads as u64),
            int_cell(report.nonzero_params),
            int_cell(report.layer_bound as u64),
            float_cell(report.max_abs_intermediate),
            float_cell(err),
        ]);
        ws.write_text(&format!("checkpoints/monomial_{i}.json"), &net.to_json()?)?;
    }
    ws.write_csv(
        "metrics/construct.csv",
        &[
            "exponents",
            "layers",
            "heads",
            "nonzero_params",
            "layer_bound",
            "max_abs_intermediate",
            "max_error",
        ],
        &rows,
    )?;
    if worst > 1e-10 {
        bail!("construction verification failed: max error {worst} > 1e-10");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// oracle-check

fn run_oracle_check(cfg: &ExperimentConfig, ws: &mut Workspace) -> Result<()> {
    let target = target_from(cfg)?;
    let horizon = train_horizon(cfg);
    let oracle = OracleField::new(target.clone(), horizon)?;
    let d = target.dim();
    let h = 1e-5;
    let mut rng = substream(cfg.seed, "oracle-points");
    let mut rows = Vec::new();
    let mut bound_samples = Vec::new();
    // keep the finite-difference stencil inside [0, T]
    for t in linspace(0.05, horizon - 2.0 * h, 10) {
        let (mut max_dt, mut max_grad) = (0.0f64, 0.0f64);
        for _ in 0..20 {
            let x = standard_normal_vec(&mut rng, d);
            bound_samples.push((x.clone(), t));
            // time derivative against a central difference of the velocity
            let dt = oracle.true_velocity_dt(&x, t)?;
            let up = oracle.true_velocity(&x, t + h)?;
            let dn = oracle.true_velocity(&x, t - h)?;
            for i in 0..d {
                let fd = (up[i] - dn[i]) / (2.0 * h);
                max_dt = max_dt.max((dt[i] - fd).abs() / fd.abs().max(1.0));
            }
            // spatial Jacobian, row-major d×d
            let grad = oracle.true_velocity_grad(&x, t)?;
            for j in 0..d {
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let vp = oracle.true_velocity(&xp, t)?;
                let vm = oracle.true_velocity(&xm, t)?;
                for i in 0..d {
                    let fd = (vp[i] - vm[i]) / (2.0 * h);
                    max_grad = max_grad.max((grad[i * d + j] - fd).abs() / fd.abs().max(1.0));
                }
            }
        }
        rows.push(vec![float_cell(t), float_cell(max_dt), float_cell(max_grad)]);
    }
    ws.write_csv(
        "metrics/oracle.csv",
        &["t", "max_rel_dt_err", "max_rel_grad_err"],
        &rows,
    )?;

    let radius = cfg.box_radius.unwrap_or(3.0);
    let report = oracle.check_bounds(&bound_samples, radius)?;
    ws.write_csv(
        "metrics/bounds.csv",
        &[
            "max_abs_velocity_coord",
            "velocity_coord_bound",
            "velocity_ok",
            "max_dt_norm",
            "dt_norm_bound",
            "dt_ok",
            "max_grad_op_norm",
            "grad_op_norm_bound",
            "grad_ok",
        ],
        &[vec![
            float_cell(report.max_abs_velocity_coord),
            float_cell(report.velocity_coord_bound),
            int_cell(report.velocity_ok as u64),
            float_cell(report.max_dt_norm),
            float_cell(report.dt_norm_bound),
            int_cell(report.dt_ok as u64),
            float_cell(report.max_grad_op_norm),
            float_cell(report.grad_op_norm_bound),
            int_cell(report.grad_ok as u64),
        ]],
    )?;
    if !(report.velocity_ok && report.dt_ok && report.grad_ok) {
        bail!("oracle bound check failed: {report:?}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// train-latent

fn run_train_latent(cfg: &ExperimentConfig, ws: &mut Workspace, verbose: bool) -> Result<()> {
    let target = target_from(cfg)?;
    let n = cfg.train_size.unwrap();
    let horizon = train_horizon(cfg);
    let (net, log, _) = train_once(cfg, &target, n, horizon, cfg.seed)?;
    if verbose {
        for r in &log {
            eprintln!("epoch {}: loss {:.6e}", r.epoch, r.empirical_loss);
        }
    }
    ws.write_csv(
        "metrics/train.csv",
        &["epoch", "empirical_loss", "population_gap", "lipschitz_x", "param_norm"],
        &train_log_rows(&log),
    )?;
    ws.write_text("checkpoints/flow.json", &flow_checkpoint(&net)?)?;
    let (steps, w2) = sample_and_w2(&net, &target, cfg, n, cfg.seed)?;
    ws.write_csv(
        "metrics/w2.csv",
        &["n_steps", "w2"],
        &[vec![int_cell(steps as u64), float_cell(w2)]],
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// end-to-end

fn ae_spec(d_in: usize, d_out: usize, cfg: &ExperimentConfig, bound: f64) -> TransformerSpec {
    let (d_patch, l) = TransformerSpec::default_layout(d_in);
    TransformerSpec {
        d: d_patch * l,
        d_out,
        l,
        d_patch,
        n_layers: cfg.n_layers.unwrap_or(2),
        h: cfg.heads.unwrap_or(2),
        d_k: 4,
        d_v: 8,
        d_ff: cfg.d_ff.unwrap_or(16),
        output_bound: bound,
        lipschitz_budget: 50.0,
        sparsity_budget: None,
    }
}

fn generate_ambient(data_dim: usize, m: usize, seed: u64) -> Result<PretrainSet> {
    match data_dim {
        4 => Ok(autoencoder::curve_in_cube(m, seed)),
        8 => Ok(autoencoder::plane_in_cube(m, seed)),
        other => bail!("no built-in generator for data_dim {other}"),
    }
}

fn run_end_to_end(cfg: &ExperimentConfig, ws: &mut Workspace, verbose: bool) -> Result<()> {
    let data_dim = cfg.data_dim.unwrap();
    let latent_dim = cfg.latent_dim.unwrap();
    let m = cfg.pretrain_size.unwrap();
    let n = cfg.train_size.unwrap();
    let k = cfg.sample_count.unwrap_or(128).min(4096);

    // one ambient draw split into pre-train, flow-matching, and held-out parts
    let all = generate_ambient(data_dim, m + n + k, cfg.seed)?;
    let pre = PretrainSet::new(all.points()[..m].to_vec())?;
    let flow_points = &all.points()[m..m + n];
    let held_out = &all.points()[m + n..];

    let pc = PretrainConfig {
        epochs: cfg.epochs.unwrap_or(40),
        batch_size: cfg.batch_size.unwrap_or(32),
        learning_rate: cfg.learning_rate.unwrap_or(1e-3),
        seed: cfg.seed,
    };
    let enc = ae_spec(data_dim, latent_dim, cfg, (latent_dim as f64).sqrt() + 1.0);
    let dec = ae_spec(latent_dim, data_dim, cfg, (data_dim as f64).sqrt() + 1.0);
    let (pair, prelog) = pretrain(enc, dec, &pre, &pc)?;
    if verbose {
        for r in &prelog {
            eprintln!("pretrain epoch {}: loss {:.6e}", r.epoch, r.loss);
        }
    }
    ws.write_csv(
        "metrics/pretrain.csv",
        &["epoch", "loss"],
        &prelog
            .iter()
            .map(|r| vec![int_cell(r.epoch), float_cell(r.loss)])
            .collect::<Vec<_>>(),
    )?;
    ws.write_text("checkpoints/encoder.json", &pair.encoder.to_json()?)?;
    ws.write_text("checkpoints/decoder.json", &pair.decoder.to_json()?)?;

    // flow matching on the encoded empirical measure
    let latent_target = encode_batch(&pair, flow_points)?;
    let horizon = train_horizon(cfg);
    let (net, log, _) = train_once(cfg, &latent_target, n, horizon, cfg.seed)?;
    ws.write_csv(
        "metrics/train.csv",
        &["epoch", "empirical_loss", "population_gap", "lipschitz_x", "param_norm"],
        &train_log_rows(&log),
    )?;
    ws.write_text("checkpoints/flow.json", &flow_checkpoint(&net)?)?;

    // sample latents, decode, compare to held-out ambient data
    let mut rng = substream(cfg.seed, "sampling");
    let starts: Vec<Vec<f64>> = (0..k)
        .map(|_| standard_normal_vec(&mut rng, latent_dim))
        .collect();
    let grid = make_grid(n, latent_dim, Some(horizon), cfg.step_scale.unwrap_or(1.0))?;
    let latents = euler_terminals(&net, &grid, &starts)?;
    let decoded = autoencoder::decode_batch(&pair, &latents)?;
    let w2_latent = w2_exact(
        &EmpiricalMeasure::new(latents)?,
        &EmpiricalMeasure::new(
            latent_target.atoms().iter().take(k).cloned().collect::<Vec<_>>(),
        )?,
    );
    let w2_data = w2_exact(
        &EmpiricalMeasure::new(decoded)?,
        &EmpiricalMeasure::new(held_out.to_vec())?,
    )?;
    let mut row = vec![int_cell(grid.n_steps() as u64), float_cell(w2_data)];
    row.push(match w2_latent {
        Ok(v) => float_cell(v),
        Err(_) => String::new(), // latent atoms < k: latent column omitted
    });
    ws.write_csv("metrics/w2.csv", &["n_steps", "w2_data", "w2_latent"], &[row])?;
    Ok(())
}

// ---------------------------------------------------------------------------
// discretization-sweep

fn run_discretization(cfg: &ExperimentConfig, ws: &mut Workspace) -> Result<()> {
    let target = target_from(cfg)?;
    let horizon = train_horizon(cfg);
    let oracle = OracleField::new(target.clone(), horizon)?;
    let d = target.dim();
    let k = cfg.sample_count.unwrap_or(64).min(4096);
    let mut rng = substream(cfg.seed, "disc-starts");
    let starts: Vec<Vec<f64>> = (0..k).map(|_| standard_normal_vec(&mut rng, d)).collect();
    let counts = cfg
        .step_counts
        .clone()
        .unwrap_or_else(|| vec![8, 16, 32, 64, 128]);
    let curve = discretization_error_curve(&oracle, horizon, &starts, &counts, 1e-9)?;
    let steps: Vec<f64> = curve.iter().map(|p| p.max_step).collect();
    let errs: Vec<f64> = curve.iter().map(|p| p.coupling_w2).collect();
    let slope = log_log_slope(&steps, &errs)?;
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|p| {
            vec![
                int_cell(p.n_steps as u64),
                float_cell(p.max_step),
                float_cell(p.coupling_w2),
                float_cell(p.exact_w2),
                float_cell(slope),
            ]
        })
        .collect();
    ws.write_csv(
        "metrics/discretization.csv",
        &["n_steps", "max_step", "coupling_w2", "exact_w2", "loglog_slope"],
        &rows,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// rate-sweep

fn sweep_metric(
    cfg: &ExperimentConfig,
    axis: Axis,
    value: f64,
    seed: u64,
) -> Result<f64> {
    match axis {
        Axis::Steps => {
            let target = target_from(cfg)?;
            let horizon = train_horizon(cfg);
            let oracle = OracleField::new(target.clone(), horizon)?;
            let d = target.dim();
            let k = cfg.sample_count.unwrap_or(64).min(4096);
            let mut rng = substream(seed, "disc-starts");
            let starts: Vec<Vec<f64>> =
                (0..k).map(|_| standard_normal_vec(&mut rng, d)).collect();
            let counts = [value.round() as usize];
            let curve = discretization_error_curve(&oracle, horizon, &starts, &counts, 1e-9)?;
            Ok(curve[0].coupling_w2)
        }
        Axis::N => {
            let target = target_from(cfg)?;
            let n = value.round() as usize;
            let horizon = train_horizon(cfg);
            let (net, _, oracle) = train_once(cfg, &target, n, horizon, seed)?;
            let (gap, _) = l2_velocity_error(&net, &oracle, cfg.eval_mc.unwrap_or(2000), seed)?;
            Ok(gap)
        }
        Axis::T => {
            let target = target_from(cfg)?;
            let n = cfg.train_size.unwrap();
            let (net, _, _) = train_once(cfg, &target, n, value, seed)?;
            let (_, w2) = sample_and_w2(&net, &target, cfg, n, seed)?;
            Ok(w2)
        }
        Axis::M => {
            let m = value.round() as usize;
            let data_dim = cfg.data_dim.unwrap();
            let latent_dim = cfg.latent_dim.unwrap();
            let data = generate_ambient(data_dim, m, seed)?;
            let pc = PretrainConfig {
                epochs: cfg.epochs.unwrap_or(25),
                batch_size: cfg.batch_size.unwrap_or(32),
                learning_rate: cfg.learning_rate.unwrap_or(1e-3),
                seed,
            };
            let enc = ae_spec(data_dim, latent_dim, cfg, (latent_dim as f64).sqrt() + 1.0);
            let dec = ae_spec(latent_dim, data_dim, cfg, (data_dim as f64).sqrt() + 1.0);
            let (_, log) = pretrain(enc, dec, &data, &pc)?;
            Ok(log.last().unwrap().loss)
        }
    }
}

fn run_sweep(cfg: &ExperimentConfig, ws: &mut Workspace, verbose: bool) -> Result<()> {
    let axis = cfg.axis.unwrap();
    let values = cfg.values.clone().unwrap();
    let seeds = cfg.sweep_seeds();
    ws.noise_qualified = Some(seeds.len() > 1);

    let mut rows = Vec::new();
    let mut means = Vec::new();
    for &value in &values {
        let mut metrics = Vec::new();
        for &seed in &seeds {
            let metric = sweep_metric(cfg, axis, value, seed)?;
            if verbose {
                eprintln!("sweep {axis:?} = {value}, seed {seed}: {metric:.6e}");
            }
            metrics.push((seed, metric));
        }
        let mean = metrics.iter().map(|(_, m)| m).sum::<f64>() / metrics.len() as f64;
        let stderr = if metrics.len() > 1 {
            let var = metrics
                .iter()
                .map(|(_, m)| (m - mean) * (m - mean))
                .sum::<f64>()
                / (metrics.len() - 1) as f64;
            (var / metrics.len() as f64).sqrt()
        } else {
            0.0
        };
        means.push(mean);
        for (seed, metric) in metrics {
            rows.push((value, seed, metric, mean, stderr));
        }
    }
    let slope = log_log_slope(&values, &means)?;
    let axis_name = format!("{axis:?}").to_lowercase();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|&(value, seed, metric, mean, stderr)| {
            vec![
                axis_name.clone(),
                float_cell(value),
                int_cell(seed),
                float_cell(metric),
                float_cell(mean),
                float_cell(stderr),
                float_cell(slope),
            ]
        })
        .collect();
    ws.write_csv(
        "metrics/sweep.csv",
        &["axis", "value", "seed", "metric", "value_mean", "value_stderr", "loglog_slope"],
        &table,
    )?;
    Ok(())
}

/// Inverse of `flow_checkpoint`, used by downstream consumers of the
/// checkpoint format.
#[cfg_attr(not(test), allow(dead_code))]
pub fn load_flow_checkpoint(text: &str) -> Result<RescaledVelocityNet> {
    let doc: serde_json::Value = serde_json::from_str(text)?;
    let net = TransformerNet::from_json(&serde_json::to_string(&doc["net"])?)?;
    Ok(RescaledVelocityNet::new(
        net,
        doc["latent_dim"]
            .as_u64()
            .ok_or_else(|| anyhow!("checkpoint missing latent_dim"))? as usize,
        doc["box_radius"]
            .as_f64()
            .ok_or_else(|| anyhow!("checkpoint missing box_radius"))?,
        doc["horizon"]
            .as_f64()
            .ok_or_else(|| anyhow!("checkpoint missing horizon"))?,
    )?)
}
