//! Pairwise training data: generation, reorganization, batching and CSV files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::domain::{BoxDomain, DataPair, Dataset, DatasetMeta, ParamVec, StateVec, Trajectory};
use crate::error::{FlowError, Result};
use crate::net::NetworkSpec;
use crate::rng::{sample_uniform_box, Rng};
use crate::systems::{default_substeps, flow_oracle, SystemDef, SystemId};

/// Additive i.i.d. Gaussian noise on every state component of both ends of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub system: SystemId,
    pub pairs: usize,
    pub ix: BoxDomain,
    pub ialpha: BoxDomain,
    pub idelta: BoxDomain,
    pub noise: NoiseSpec,
    pub seed: u64,
    /// RK4 substeps per pair; `None` uses `default_substeps(delta)`.
    pub substeps: Option<usize>,
}

/// Largest time lag used by every benchmark.
pub const DEFAULT_MAX_LAG: f64 = 0.1;

impl GenConfig {
    /// Benchmark defaults: the system's own boxes, lags in `[0, 0.1]`, no noise.
    pub fn for_system(system: SystemId, pairs: usize, seed: u64) -> Self {
        let def = SystemDef::new(system);
        Self {
            system,
            pairs,
            ix: def.default_ix,
            ialpha: def.default_ialpha,
            idelta: BoxDomain::interval(0.0, DEFAULT_MAX_LAG).expect("static interval"),
            noise: NoiseSpec::default(),
            seed,
            substeps: None,
        }
    }

    fn validate(&self, def: &SystemDef) -> Result<()> {
        if self.pairs == 0 {
            return Err(FlowError::invalid("number of pairs must be >= 1"));
        }
        if self.ix.dim() != def.d {
            return Err(FlowError::DimensionMismatch {
                what: "state box",
                expected: def.d,
                got: self.ix.dim(),
            });
        }
        if self.ialpha.dim() != def.l {
            return Err(FlowError::DimensionMismatch {
                what: "parameter box",
                expected: def.l,
                got: self.ialpha.dim(),
            });
        }
        if self.idelta.dim() != 1 || self.idelta.lo()[0] < 0.0 {
            return Err(FlowError::invalid("time-lag range must be an interval in [0, inf)"));
        }
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return Err(FlowError::invalid("noise sigma must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Samples `(delta, x0, alpha)` uniformly for each pair, maps `x0` through the
/// flow oracle, then corrupts both ends with the configured noise.
///
/// Pair `j` draws from its own substreams, so the output is independent of
/// how the work is scheduled across threads.
pub fn generate_pairs(cfg: &GenConfig) -> Result<Dataset> {
    let def = SystemDef::new(cfg.system);
    cfg.validate(&def)?;
    let root = Rng::new(cfg.seed);
    let data = root.substream("data");
    let noise = root.substream("noise");
    let sigma = cfg.noise.sigma;

    let pairs: Vec<DataPair> = (0..cfg.pairs)
        .into_par_iter()
        .map(|j| {
            let mut rng = data.substream_indexed("pair", j as u64);
            let delta = sample_uniform_box(&cfg.idelta, &mut rng)[0];
            let x0 = sample_uniform_box(&cfg.ix, &mut rng);
            let alpha = sample_uniform_box(&cfg.ialpha, &mut rng);
            let substeps = cfg.substeps.unwrap_or_else(|| default_substeps(delta));
            let mut x_out = flow_oracle(&def, &x0, &alpha, delta, substeps);
            let mut x_in = x0;
            if sigma > 0.0 {
                let mut nr = noise.substream_indexed("pair", j as u64);
                x_in.iter_mut().for_each(|v| *v += sigma * nr.normal());
                x_out.iter_mut().for_each(|v| *v += sigma * nr.normal());
            }
            DataPair {
                x_in: StateVec::new(x_in),
                alpha: ParamVec::new(alpha),
                delta,
                x_out: StateVec::new(x_out),
            }
        })
        .collect();

    let meta = DatasetMeta {
        system: Some(cfg.system.to_string()),
        seed: Some(cfg.seed),
        sigma,
    };
    Dataset::from_pairs(def.d, def.l, pairs, meta)
}

/// Adjacent-instant pairs of one trajectory; empty for a single point.
pub fn pairs_from_trajectory(traj: &Trajectory) -> Vec<DataPair> {
    traj.times
        .windows(2)
        .zip(traj.states.windows(2))
        .map(|(t, s)| DataPair {
            x_in: s[0].clone(),
            alpha: traj.alpha.clone(),
            delta: t[1] - t[0],
            x_out: s[1].clone(),
        })
        .collect()
}

/// A fresh shuffle of `0..len` cut into consecutive batches (last may be short).
pub fn batch_indices(len: usize, batch_size: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(FlowError::invalid("batch size must be >= 1"));
    }
    let mut order: Vec<usize> = (0..len).collect();
    rng.shuffle(&mut order);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

pub fn minibatches(ds: &Dataset, batch_size: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    batch_indices(ds.len(), batch_size, rng)
}

/// Training-set size used at full scale: twenty pairs per trainable parameter.
pub fn full_scale_pair_count(spec: &NetworkSpec) -> usize {
    20 * spec.param_count()
}

const DATASET_MAGIC: &str = "flowmap-dataset v1";

/// 17 significant digits, enough for an exact round trip.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn header_columns(d: usize, l: usize) -> Vec<String> {
    let mut cols = vec!["delta".to_string()];
    cols.extend((1..=d).map(|i| format!("x_in_{i}")));
    cols.extend((1..=l).map(|i| format!("alpha_{i}")));
    cols.extend((1..=d).map(|i| format!("x_out_{i}")));
    cols
}

pub fn dataset_to_string(ds: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {DATASET_MAGIC}");
    let _ = writeln!(out, "# d = {}", ds.d);
    let _ = writeln!(out, "# l = {}", ds.l);
    if let Some(s) = &ds.meta.system {
        let _ = writeln!(out, "# system = {s}");
    }
    if let Some(seed) = ds.meta.seed {
        let _ = writeln!(out, "# seed = {seed}");
    }
    let _ = writeln!(out, "# sigma = {}", fmt_f64(ds.meta.sigma));
    out.push_str(&header_columns(ds.d, ds.l).join(","));
    out.push('\n');
    for p in &ds.pairs {
        let fields = std::iter::once(p.delta)
            .chain(p.x_in.iter().copied())
            .chain(p.alpha.iter().copied())
            .chain(p.x_out.iter().copied())
            .map(fmt_f64)
            .collect::<Vec<_>>();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset_to_string(ds)).map_err(|e| FlowError::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FlowError::io(path, e))?;
    parse_dataset(&text)
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> FlowError {
    FlowError::Parse {
        line,
        column,
        message: message.into(),
    }
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut d: Option<usize> = None;
    let mut l: Option<usize> = None;
    let mut meta = DatasetMeta::default();
    let mut header_seen = false;
    let mut pairs = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if header_seen {
                continue;
            }
            let Some((key, value)) = comment.split_once('=') else {
                continue;
            };
            let value = value.trim();
            let bad = |what: &str| parse_err(lineno, 1, format!("invalid {what} '{value}'"));
            match key.trim() {
                "d" => d = Some(value.parse().map_err(|_| bad("d"))?),
                "l" => l = Some(value.parse().map_err(|_| bad("l"))?),
                "system" => meta.system = Some(value.to_string()),
                "seed" => meta.seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "sigma" => meta.sigma = value.parse().map_err(|_| bad("sigma"))?,
                _ => {}
            }
            continue;
        }

        let (Some(d), Some(l)) = (d, l) else {
            return Err(parse_err(lineno, 1, "missing '# d = ..' / '# l = ..' metadata before header"));
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !header_seen {
            let expected = header_columns(d, l);
            if fields.len() != expected.len() {
                return Err(FlowError::DimensionMismatch {
                    what: "dataset header columns",
                    expected: expected.len(),
                    got: fields.len(),
                });
            }
            if let Some((col, (got, want))) = fields
                .iter()
                .zip(&expected)
                .enumerate()
                .find(|(_, (g, w))| **g != w.as_str())
            {
                return Err(parse_err(lineno, col + 1, format!("expected column '{want}', found '{got}'")));
            }
            header_seen = true;
            continue;
        }

        let width = 1 + 2 * d + l;
        if fields.len() != width {
            return Err(parse_err(
                lineno,
                fields.len().min(width) + 1,
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        let mut values = Vec::with_capacity(width);
        for (col, f) in fields.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(lineno, col + 1, format!("invalid number '{f}'")))?;
            values.push(v);
        }
        pairs.push(DataPair {
            delta: values[0],
            x_in: StateVec::from(&values[1..1 + d]),
            alpha: ParamVec::from(&values[1 + d..1 + d + l]),
            x_out: StateVec::from(&values[1 + d + l..]),
        });
    }

    let (Some(d), Some(l)) = (d, l) else {
        return Err(parse_err(1, 1, "missing dataset metadata"));
    };
    if pairs.is_empty() {
        return Err(FlowError::EmptyDataset);
    }
    Dataset::from_pairs(d, l, pairs, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::integrate_trajectory;
    use std::collections::HashSet;

    fn scalar_cfg(pairs: usize, seed: u64) -> GenConfig {
        GenConfig::for_system(SystemId::LinearScalar, pairs, seed)
    }

    #[test]
    fn zero_lag_pair_is_identity() {
        let mut cfg = scalar_cfg(1, 9);
        cfg.idelta = BoxDomain::interval(0.0, 0.0).unwrap();
        let ds = generate_pairs(&cfg).unwrap();
        assert_eq!(ds.pairs[0].x_in, ds.pairs[0].x_out);
    }

    #[test]
    fn clean_pairs_follow_closed_form() {
        let ds = generate_pairs(&scalar_cfg(500, 1)).unwrap();
        assert_eq!(ds.len(), 500);
        for p in &ds.pairs {
            let exact = p.x_in[0] * (-p.alpha[0] * p.delta).exp();
            assert!((p.x_out[0] - exact).abs() <= 1e-9);
            assert!((0.0..=0.1).contains(&p.delta));
        }
    }

    #[test]
    fn noise_level_is_calibrated() {
        let mut cfg = scalar_cfg(1000, 4);
        cfg.noise.sigma = 0.01;
        let clean = generate_pairs(&scalar_cfg(1000, 4)).unwrap();
        let noisy = generate_pairs(&cfg).unwrap();
        let def = SystemDef::new(SystemId::LinearScalar);
        // x_out - oracle(clean x_in) isolates the output noise
        let resid: Vec<f64> = noisy
            .pairs
            .iter()
            .zip(&clean.pairs)
            .map(|(n, c)| {
                let oracle = flow_oracle(&def, &c.x_in, &c.alpha, c.delta, default_substeps(c.delta));
                n.x_out[0] - oracle[0]
            })
            .collect();
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (resid.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((sd - 0.01).abs() <= 0.0015, "sd = {sd}");
        assert_eq!(noisy.meta.sigma, 0.01);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_pairs(&scalar_cfg(64, 77)).unwrap();
        let b = generate_pairs(&scalar_cfg(64, 77)).unwrap();
        assert_eq!(a, b);
        let c = generate_pairs(&scalar_cfg(64, 78)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generate_rejects_bad_config() {
        assert!(generate_pairs(&scalar_cfg(0, 1)).is_err());
        let mut cfg = scalar_cfg(1, 1);
        cfg.ix = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        assert!(matches!(generate_pairs(&cfg), Err(FlowError::DimensionMismatch { .. })));
    }

    fn scalar_traj(times: &[f64]) -> Trajectory {
        let def = SystemDef::new(SystemId::LinearScalar);
        integrate_trajectory(&def, &StateVec::new(vec![1.0]), &ParamVec::new(vec![0.4]), times, 200.0).unwrap()
    }

    #[test]
    fn trajectory_pairs() {
        assert_eq!(pairs_from_trajectory(&scalar_traj(&[0.0, 0.1, 0.2])).len(), 2);
        assert!(pairs_from_trajectory(&scalar_traj(&[0.0])).is_empty());

        let grid: Vec<f64> = (0..6).map(|k| k as f64 * 0.1).collect();
        let deltas: Vec<f64> = pairs_from_trajectory(&scalar_traj(&grid)).iter().map(|p| p.delta).collect();
        // step 0.1 in the sense of the stored grid
        let expected: Vec<f64> = grid.windows(2).map(|w| w[1] - w[0]).collect();
        assert_eq!(deltas, expected);
        assert!(deltas.iter().all(|d| (d - 0.1).abs() < 1e-15));
    }

    #[test]
    fn time_shift_gives_identical_pairs() {
        let grid: Vec<f64> = (0..8).map(|k| k as f64 * 0.25).collect();
        let shifted: Vec<f64> = grid.iter().map(|t| t + 8.0).collect();
        assert_eq!(
            pairs_from_trajectory(&scalar_traj(&grid)),
            pairs_from_trajectory(&scalar_traj(&shifted))
        );
    }

    #[test]
    fn batch_sizes() {
        let mut rng = Rng::new(0);
        let sizes = |b: Vec<Vec<usize>>| b.iter().map(Vec::len).collect::<Vec<_>>();
        assert_eq!(sizes(batch_indices(90, 30, &mut rng).unwrap()), vec![30, 30, 30]);
        assert_eq!(sizes(batch_indices(91, 30, &mut rng).unwrap()), vec![30, 30, 30, 1]);
        assert!(batch_indices(10, 0, &mut rng).is_err());
    }

    #[test]
    fn batches_reshuffle_between_epochs() {
        let rng = Rng::new(12);
        let a = batch_indices(200, 30, &mut rng.clone()).unwrap();
        let b = batch_indices(200, 30, &mut rng.clone()).unwrap();
        assert_eq!(a, b);
        let mut epochs = rng.clone();
        let orders: HashSet<Vec<usize>> = (0..20)
            .map(|_| batch_indices(200, 30, &mut epochs).unwrap().concat())
            .collect();
        assert_eq!(orders.len(), 20);
    }

    #[test]
    fn dataset_round_trip_is_bitwise() {
        let mut cfg = GenConfig::for_system(SystemId::Oscillator, 50, 3);
        cfg.noise.sigma = 0.003;
        let ds = generate_pairs(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, ds);
        for (a, b) in ds.pairs.iter().zip(&back.pairs) {
            assert_eq!(a.x_out[1].to_bits(), b.x_out[1].to_bits());
        }
    }

    #[test]
    fn wrong_dimension_header() {
        let ds = generate_pairs(&scalar_cfg(3, 1)).unwrap();
        let text = dataset_to_string(&ds).replace("# d = 1", "# d = 2");
        let err = parse_dataset(&text).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");
    }

    #[test]
    fn empty_pair_section() {
        let text = "# d = 1\n# l = 1\ndelta,x_in_1,alpha_1,x_out_1\n";
        let err = parse_dataset(text).unwrap_err();
        assert_eq!(err.to_string(), "empty dataset");
    }

    #[test]
    fn malformed_number_names_line_and_column() {
        let text = "# d = 1\n# l = 1\ndelta,x_in_1,alpha_1,x_out_1\n0.1,0.5,0.2,0.49\n0.1,0.5,abc,0.49\n";
        match parse_dataset(text).unwrap_err() {
            FlowError::Parse { line, column, .. } => assert_eq!((line, column), (5, 3)),
            e => panic!("unexpected {e}"),
        }
        let short = "# d = 1\n# l = 1\ndelta,x_in_1,alpha_1,x_out_1\n0.1,0.5\n";
        assert!(matches!(parse_dataset(short), Err(FlowError::Parse { line: 4, .. })));
    }

    #[test]
    fn pair_count_rule() {
        let spec = NetworkSpec::new(1, 1, 3, 40);
        assert_eq!(full_scale_pair_count(&spec), 20 * 3481);
    }
}
