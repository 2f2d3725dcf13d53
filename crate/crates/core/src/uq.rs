//! Mean and variance of predicted solutions over random parameters, by
//! tensor Gauss-Legendre quadrature or Monte Carlo sampling.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::fmt_f64;
use crate::domain::{BoxDomain, ParamVec, StateVec, Trajectory};
use crate::error::{check_dim, FlowError, Result};
use crate::rng::{sample_uniform_box, Rng};
use crate::systems::{integrate_trajectory, Dynamics, ORACLE_STEP};

/// Largest supported one-dimensional rule.
pub const MAX_GL_POINTS: usize = 64;
/// Largest tensor rule that will be materialized.
pub const MAX_TENSOR_NODES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<ParamVec>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.len())
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weights divided by their sum, i.e. the rule for the uniform probability
    /// density on the integration domain.
    pub fn normalized(mut self) -> Self {
        let s = self.weight_sum();
        self.weights.iter_mut().for_each(|w| *w /= s);
        self
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(n, w)| w * f(n)).sum()
    }
}

/// Legendre `P_n(x)` and its derivative by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// `npts`-point Gauss-Legendre rule for `int_a^b f dx`, nodes ascending.
///
/// Roots of `P_n` are found by Newton iteration from Chebyshev-like guesses;
/// the rule is symmetrized so mirrored nodes and weights agree bitwise.
pub fn gauss_legendre(npts: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if npts == 0 {
        return Err(FlowError::invalid("quadrature needs at least one point"));
    }
    if npts > MAX_GL_POINTS {
        return Err(FlowError::Unsupported(format!(
            "{npts}-point Gauss-Legendre rule (at most {MAX_GL_POINTS})"
        )));
    }
    if !(a < b && a.is_finite() && b.is_finite()) {
        return Err(FlowError::invalid(format!("quadrature interval [{a}, {b}] must satisfy a < b")));
    }

    let n = npts;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        if n % 2 == 1 && i == n / 2 {
            z = 0.0;
        } else {
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                let step = p / d;
                z -= step;
                if step.abs() <= 1e-16 {
                    break;
                }
            }
        }
        let dp = legendre(n, z).1;
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        // roots come out descending from i = 0; store ascending
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }

    let (half, mid) = (0.5 * (b - a), 0.5 * (a + b));
    Ok(QuadratureRule {
        nodes: x.iter().map(|&z| ParamVec::new(vec![mid + half * z])).collect(),
        weights: w.iter().map(|&v| v * half).collect(),
    })
}

/// Cartesian product of rules; the first rule varies slowest.
pub fn tensor_rule(rules: &[QuadratureRule]) -> Result<QuadratureRule> {
    if rules.is_empty() {
        return Err(FlowError::invalid("tensor rule needs at least one factor"));
    }
    let total = rules
        .iter()
        .try_fold(1usize, |acc, r| acc.checked_mul(r.len()))
        .filter(|&t| t <= MAX_TENSOR_NODES)
        .ok_or_else(|| FlowError::Unsupported(format!("tensor rule with more than {MAX_TENSOR_NODES} nodes")))?;

    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; rules.len()];
    for _ in 0..total {
        let mut node = Vec::new();
        let mut weight = 1.0;
        for (r, &i) in rules.iter().zip(&idx) {
            node.extend_from_slice(&r.nodes[i]);
            weight *= r.weights[i];
        }
        nodes.push(ParamVec::new(node));
        weights.push(weight);
        for k in (0..rules.len()).rev() {
            idx[k] += 1;
            if idx[k] < rules[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Probability rule for the uniform density on `domain`: `npts` Gauss points per
/// non-degenerate dimension and a single unit-weight node on fixed ones.
pub fn box_rule(domain: &BoxDomain, npts: usize) -> Result<QuadratureRule> {
    let factors = (0..domain.dim())
        .map(|i| {
            if domain.is_degenerate(i) {
                Ok(QuadratureRule {
                    nodes: vec![ParamVec::new(vec![domain.lo()[i]])],
                    weights: vec![1.0],
                })
            } else {
                Ok(gauss_legendre(npts, domain.lo()[i], domain.hi()[i])?.normalized())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    tensor_rule(&factors)
}

/// Parameter density; only uniform boxes are supported.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    UniformBox(BoxDomain),
}

impl Density {
    pub fn domain(&self) -> &BoxDomain {
        match self {
            Density::UniformBox(b) => b,
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> ParamVec {
        ParamVec::new(sample_uniform_box(self.domain(), rng))
    }
}

/// Componentwise mean and variance along a common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StatSeries {
    pub times: Vec<f64>,
    pub mean: Vec<StateVec>,
    pub var: Vec<StateVec>,
}

impl StatSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.mean.first().map_or(0, |m| m.len())
    }

    /// Per-time `(max_i |mean_i - ref_i|, max_i |var_i - ref_i|)`.
    pub fn errors_against(&self, reference: &StatSeries) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim("reference statistics length", self.len(), reference.len())?;
        check_dim("reference statistics dimension", self.dim(), reference.dim())?;
        let diff = |a: &[StateVec], b: &[StateVec]| -> Vec<f64> {
            a.iter()
                .zip(b)
                .map(|(u, v)| u.iter().zip(v.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
                .collect()
        };
        Ok((diff(&self.mean, &reference.mean), diff(&self.var, &reference.var)))
    }

    /// CSV `t,mean_1..,var_1..`, extended with `ref_mean_*, ref_var_*,
    /// err_mean, err_var` when a reference is given.
    pub fn to_csv(&self, reference: Option<&StatSeries>) -> Result<String> {
        let d = self.dim();
        let errs = reference.map(|r| self.errors_against(r)).transpose()?;
        let mut out = String::from("t");
        for prefix in ["mean", "var"] {
            for i in 1..=d {
                let _ = write!(out, ",{prefix}_{i}");
            }
        }
        if reference.is_some() {
            for prefix in ["ref_mean", "ref_var"] {
                for i in 1..=d {
                    let _ = write!(out, ",{prefix}_{i}");
                }
            }
            out.push_str(",err_mean,err_var");
        }
        out.push('\n');
        for k in 0..self.len() {
            out.push_str(&fmt_f64(self.times[k]));
            let mut push_all = |v: &StateVec| {
                for x in v.iter() {
                    out.push(',');
                    out.push_str(&fmt_f64(*x));
                }
            };
            push_all(&self.mean[k]);
            push_all(&self.var[k]);
            if let Some(r) = reference {
                push_all(&r.mean[k]);
                push_all(&r.var[k]);
            }
            if let Some((em, ev)) = &errs {
                let _ = write!(out, ",{},{}", fmt_f64(em[k]), fmt_f64(ev[k]));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

fn clamp_variance(var: &mut [StateVec]) {
    for (k, v) in var.iter_mut().enumerate() {
        for x in v.0.iter_mut() {
            if *x < 0.0 {
                if *x < -1e-14 {
                    log::warn!("negative variance {x:.3e} at step {k} clamped to 0");
                }
                *x = 0.0;
            }
        }
    }
}

fn check_grid(first: &Trajectory, other: &Trajectory, which: usize) -> Result<()> {
    if other.times != first.times || other.dim() != first.dim() || other.states.len() != first.states.len() {
        return Err(FlowError::invalid(format!(
            "evaluation {which} returned a different time grid or state dimension"
        )));
    }
    Ok(())
}

/// Weighted statistics of precomputed trajectories, accumulated in input order.
pub fn weighted_statistics(trajs: &[Trajectory], weights: &[f64]) -> Result<StatSeries> {
    check_dim("quadrature weights", trajs.len(), weights.len())?;
    let first = trajs.first().ok_or_else(|| FlowError::invalid("empty quadrature rule"))?;
    for (q, t) in trajs.iter().enumerate() {
        check_grid(first, t, q)?;
    }
    let (steps, d) = (first.len(), first.dim());
    let mut mean = vec![StateVec::zeros(d); steps];
    for (t, w) in trajs.iter().zip(weights) {
        for (m, x) in mean.iter_mut().zip(&t.states) {
            for (mi, xi) in m.0.iter_mut().zip(x.iter()) {
                *mi += w * xi;
            }
        }
    }
    let mut var = vec![StateVec::zeros(d); steps];
    for (t, w) in trajs.iter().zip(weights) {
        for k in 0..steps {
            for i in 0..d {
                let e = t.states[k][i] - mean[k][i];
                var[k].0[i] += w * e * e;
            }
        }
    }
    clamp_variance(&mut var);
    Ok(StatSeries {
        times: first.times.clone(),
        mean,
        var,
    })
}

/// `mean = sum_q w_q x(t; alpha_q)`, `var = sum_q w_q (x(t; alpha_q) - mean)^2`.
pub fn uq_statistics<F>(evaluator: F, rule: &QuadratureRule) -> Result<StatSeries>
where
    F: Fn(&ParamVec) -> Result<Trajectory> + Sync,
{
    let trajs: Vec<Trajectory> = rule.nodes.par_iter().map(&evaluator).collect::<Result<_>>()?;
    weighted_statistics(&trajs, &rule.weights)
}

const MC_CHUNK: usize = 4096;

/// Sample mean and unbiased sample variance over `n_samples` draws from
/// `density`; draw `j` uses substream `("mc", j)` of `rng`.
pub fn mc_statistics<F>(evaluator: F, density: &Density, n_samples: usize, rng: &Rng) -> Result<StatSeries>
where
    F: Fn(&ParamVec) -> Result<Trajectory> + Sync,
{
    if n_samples < 2 {
        return Err(FlowError::invalid("Monte Carlo statistics need at least 2 samples"));
    }
    let draw = |j: usize| {
        let mut r = rng.substream_indexed("mc", j as u64);
        evaluator(&density.sample(&mut r))
    };
    let first = draw(0)?;
    let (steps, d) = (first.len(), first.dim());
    let mut mean = vec![vec![0.0; d]; steps];
    let mut m2 = vec![vec![0.0; d]; steps];
    let mut count = 0.0;
    let mut absorb = |t: &Trajectory| {
        count += 1.0;
        for k in 0..steps {
            for i in 0..d {
                let x = t.states[k][i];
                let delta = x - mean[k][i];
                mean[k][i] += delta / count;
                m2[k][i] += delta * (x - mean[k][i]);
            }
        }
    };
    absorb(&first);
    let mut start = 1;
    while start < n_samples {
        let end = (start + MC_CHUNK).min(n_samples);
        let chunk: Vec<Trajectory> = (start..end).into_par_iter().map(draw).collect::<Result<_>>()?;
        for (off, t) in chunk.iter().enumerate() {
            check_grid(&first, t, start + off)?;
            absorb(t);
        }
        start = end;
    }
    let mut var: Vec<StateVec> = m2
        .into_iter()
        .map(|v| StateVec::new(v.into_iter().map(|s| s / (count - 1.0)).collect()))
        .collect();
    clamp_variance(&mut var);
    Ok(StatSeries {
        times: first.times.clone(),
        mean: mean.into_iter().map(StateVec::new).collect(),
        var,
    })
}

/// Statistics of the true system's solutions from `x0` on `times`, with the
/// RK4 oracle (step at most 0.005) as evaluator.
pub fn reference_statistics<S: Dynamics + ?Sized>(
    sys: &S,
    x0: &StateVec,
    rule: &QuadratureRule,
    times: &[f64],
) -> Result<StatSeries> {
    uq_statistics(|alpha| integrate_trajectory(sys, x0, alpha, times, 1.0 / ORACLE_STEP), rule)
}

/// Parses `gl:N`, `gl:AxB..` (one count per random dimension) or `mc:N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleSpec {
    GaussLegendre(Vec<usize>),
    MonteCarlo(usize),
}

impl std::str::FromStr for RuleSpec {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || FlowError::invalid(format!("rule '{s}': expected gl:N, gl:NxN.. or mc:N"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "gl" => {
                let counts = rest
                    .split('x')
                    .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                if counts.iter().any(|&c| c == 0) {
                    return Err(bad());
                }
                Ok(RuleSpec::GaussLegendre(counts))
            }
            "mc" => rest.trim().parse().map(RuleSpec::MonteCarlo).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl RuleSpec {
    /// Probability quadrature over `domain`. A single count applies to every
    /// random dimension; otherwise one count per random dimension is required.
    pub fn quadrature(&self, domain: &BoxDomain) -> Result<QuadratureRule> {
        let RuleSpec::GaussLegendre(counts) = self else {
            return Err(FlowError::invalid("Monte Carlo rule has no quadrature nodes"));
        };
        let random: Vec<usize> = (0..domain.dim()).filter(|&i| !domain.is_degenerate(i)).collect();
        if counts.len() != 1 && counts.len() != random.len() {
            return Err(FlowError::DimensionMismatch {
                what: "quadrature point counts (one per random parameter)",
                expected: random.len(),
                got: counts.len(),
            });
        }
        let factors = (0..domain.dim())
            .map(|i| match random.iter().position(|&r| r == i) {
                None => Ok(QuadratureRule {
                    nodes: vec![ParamVec::new(vec![domain.lo()[i]])],
                    weights: vec![1.0],
                }),
                Some(k) => {
                    let n = if counts.len() == 1 { counts[0] } else { counts[k] };
                    Ok(gauss_legendre(n, domain.lo()[i], domain.hi()[i])?.normalized())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        tensor_rule(&factors)
    }
}
