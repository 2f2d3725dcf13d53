//! Mini-batch Adam training on the mean-squared one-step loss.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Axis};

use crate::data::batch_indices;
use crate::domain::{DataPair, Dataset};
use crate::error::{check_dim, FlowError, Result};
use crate::net::{adam_update, input_row, AdamConfig, AdamState, Network};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Fraction of pairs held out for a per-epoch validation loss.
    pub validation_fraction: f64,
    /// Log every `log_every` epochs; 0 disables progress logging.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 30,
            adam: AdamConfig::default(),
            seed: 0,
            validation_fraction: 0.0,
            log_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean loss over all training pairs seen in each epoch.
    pub epoch_loss: Vec<f64>,
    pub val_loss: Option<Vec<f64>>,
    pub wall_seconds: f64,
    pub final_loss: f64,
}

/// Emitted before each Adam step; `net` holds the pre-update weights.
pub struct BatchEvent<'a> {
    pub epoch: usize,
    pub batch: usize,
    pub indices: &'a [usize],
    pub loss: f64,
    pub net: &'a Network,
}

/// Divergence guard threshold on any batch loss.
pub const MAX_LOSS: f64 = 1e6;

/// Stacks pairs into `[x_in, alpha, delta]` input rows and `x_out` target rows.
pub fn design_matrices(pairs: &[DataPair], d: usize, l: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    let width = d + l + 1;
    let mut inputs = Vec::with_capacity(pairs.len() * width);
    let mut targets = Vec::with_capacity(pairs.len() * d);
    for p in pairs {
        check_dim("pair x_in", d, p.x_in.len())?;
        check_dim("pair alpha", l, p.alpha.len())?;
        check_dim("pair x_out", d, p.x_out.len())?;
        inputs.extend(input_row(&p.x_in, &p.alpha, p.delta));
        targets.extend_from_slice(&p.x_out);
    }
    Ok((
        Array2::from_shape_vec((pairs.len(), width), inputs).expect("row-major inputs"),
        Array2::from_shape_vec((pairs.len(), d), targets).expect("row-major targets"),
    ))
}

fn batch_loss(net: &Network, inputs: &Array2<f64>, targets: &Array2<f64>) -> Result<(f64, Array2<f64>, crate::net::ForwardCache)> {
    let cache = net.forward_batch(inputs.view())?;
    let resid = &cache.x_out - targets;
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / inputs.nrows() as f64;
    Ok((loss, resid, cache))
}

/// `(1/|B|) sum_b ||x_out(z1_b) - z2_b||^2`.
pub fn mse_loss(net: &Network, pairs: &[DataPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(FlowError::EmptyBatch);
    }
    let spec = net.spec();
    let (inputs, targets) = design_matrices(pairs, spec.d, spec.l)?;
    Ok(batch_loss(net, &inputs, &targets)?.0)
}

pub fn train(net: Network, ds: &Dataset, cfg: &TrainConfig) -> Result<(Network, TrainReport)> {
    train_with_observer(net, ds, cfg, |_| {})
}

/// Runs `epochs` passes of reshuffled mini-batches, one Adam step per batch.
///
/// Reshuffling draws from the `shuffle` substream of `cfg.seed`; the optional
/// validation split from the `split` substream. Results are bitwise
/// reproducible for equal inputs.
pub fn train_with_observer<F>(mut net: Network, ds: &Dataset, cfg: &TrainConfig, mut observer: F) -> Result<(Network, TrainReport)>
where
    F: FnMut(&BatchEvent<'_>),
{
    let spec = *net.spec();
    check_dim("dataset state dimension", spec.d, ds.d)?;
    check_dim("dataset parameter dimension", spec.l, ds.l)?;
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(FlowError::invalid("epochs and batch size must be >= 1"));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(FlowError::invalid("validation fraction must lie in [0, 1)"));
    }
    if ds.is_empty() {
        return Err(FlowError::EmptyDataset);
    }

    let (all_inputs, all_targets) = design_matrices(&ds.pairs, spec.d, spec.l)?;
    let root = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let n_val = (cfg.validation_fraction * ds.len() as f64).floor() as usize;
    let n_val = n_val.min(ds.len() - 1);
    if n_val > 0 {
        root.substream("split").shuffle(&mut order);
    }
    let (train_idx, val_idx) = order.split_at(ds.len() - n_val);
    let val_data = (n_val > 0).then(|| {
        (
            all_inputs.select(Axis(0), val_idx),
            all_targets.select(Axis(0), val_idx),
        )
    });

    let mut shuffle = root.substream("shuffle");
    let mut adam = AdamState::new(&net, cfg.adam);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut val_loss = val_data.as_ref().map(|_| Vec::with_capacity(cfg.epochs));
    let started = Instant::now();

    for epoch in 1..=cfg.epochs {
        let batches = batch_indices(train_idx.len(), cfg.batch_size, &mut shuffle)?;
        let mut total = 0.0;
        for (b, local) in batches.iter().enumerate() {
            let indices: Vec<usize> = local.iter().map(|&i| train_idx[i]).collect();
            let inputs = all_inputs.select(Axis(0), &indices);
            let targets = all_targets.select(Axis(0), &indices);
            let (loss, resid, cache) = batch_loss(&net, &inputs, &targets)?;
            if !loss.is_finite() || loss > MAX_LOSS {
                return Err(FlowError::Diverged {
                    epoch,
                    batch: b + 1,
                    loss,
                });
            }
            observer(&BatchEvent {
                epoch,
                batch: b + 1,
                indices: &indices,
                loss,
                net: &net,
            });
            let grads = net.backward(&cache, resid.view())?;
            adam_update(&mut net, &mut adam, &grads)?;
            total += loss * indices.len() as f64;
        }
        let mean = total / train_idx.len() as f64;
        epoch_loss.push(mean);
        if let (Some((vi, vt)), Some(series)) = (&val_data, val_loss.as_mut()) {
            series.push(batch_loss(&net, vi, vt)?.0);
        }
        if cfg.log_every > 0 && (epoch % cfg.log_every == 0 || epoch == cfg.epochs) {
            match val_loss.as_ref().and_then(|v| v.last()) {
                Some(v) => log::info!("epoch {epoch}/{}: loss {mean:.3e}, validation {v:.3e}", cfg.epochs),
                None => log::info!("epoch {epoch}/{}: loss {mean:.3e}", cfg.epochs),
            }
        }
    }

    let final_loss = *epoch_loss.last().expect("at least one epoch");
    Ok((
        net,
        TrainReport {
            epoch_loss,
            val_loss,
            wall_seconds: started.elapsed().as_secs_f64(),
            final_loss,
        },
    ))
}

/// Loss history as CSV `epoch,loss[,val_loss]`.
pub fn loss_history_csv(report: &TrainReport) -> String {
    let mut out = String::new();
    match &report.val_loss {
        Some(val) => {
            out.push_str("epoch,loss,val_loss\n");
            for (e, (l, v)) in report.epoch_loss.iter().zip(val).enumerate() {
                let _ = writeln!(out, "{},{l:.16e},{v:.16e}", e + 1);
            }
        }
        None => {
            out.push_str("epoch,loss\n");
            for (e, l) in report.epoch_loss.iter().enumerate() {
                let _ = writeln!(out, "{},{l:.16e}", e + 1);
            }
        }
    }
    out
}

pub fn write_loss_history(report: &TrainReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, loss_history_csv(report)).map_err(|e| FlowError::io(path, e))
}
