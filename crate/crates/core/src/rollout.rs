//! Long-term prediction by composing a one-step increment model, plus
//! trajectory error metrics against reference solutions.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::fmt_f64;
use crate::domain::{BoxDomain, ParamVec, StateVec, Trajectory};
use crate::error::{check_dim, FlowError, Result};
use crate::net::Network;
use crate::systems::{default_substeps, flow_oracle, Dynamics};

/// Anything that maps `(x, alpha, delta)` to a state increment.
///
/// The trained network is one implementation; exact and perturbed oracles are
/// others, which lets composition and bound checks run without training.
pub trait IncrementModel: Sync {
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn increment(&self, x: &[f64], alpha: &[f64], delta: f64) -> Vec<f64>;
}

impl IncrementModel for Network {
    fn state_dim(&self) -> usize {
        self.spec().d
    }

    fn param_dim(&self) -> usize {
        self.spec().l
    }

    fn increment(&self, x: &[f64], alpha: &[f64], delta: f64) -> Vec<f64> {
        Network::increment(self, x, alpha, delta)
    }
}

/// Wraps a closure as an increment model.
pub struct FnModel<F> {
    pub d: usize,
    pub l: usize,
    pub f: F,
}

impl<F> IncrementModel for FnModel<F>
where
    F: Fn(&[f64], &[f64], f64) -> Vec<f64> + Sync,
{
    fn state_dim(&self) -> usize {
        self.d
    }

    fn param_dim(&self) -> usize {
        self.l
    }

    fn increment(&self, x: &[f64], alpha: &[f64], delta: f64) -> Vec<f64> {
        (self.f)(x, alpha, delta)
    }
}

/// Exact increment `x (e^{-alpha delta} - 1)` of `dx/dt = -alpha x`, shifted by
/// a constant `offset` in every step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExactDecay {
    pub offset: f64,
}

impl IncrementModel for ExactDecay {
    fn state_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn increment(&self, x: &[f64], alpha: &[f64], delta: f64) -> Vec<f64> {
        vec![x[0] * (-alpha[0] * delta).exp_m1() + self.offset]
    }
}

/// RK4 oracle increment `flow_oracle(x) - x` plus a constant per-component offset.
pub struct OracleModel<'a, S: ?Sized> {
    pub sys: &'a S,
    pub offset: f64,
}

impl<S: Dynamics + ?Sized> IncrementModel for OracleModel<'_, S> {
    fn state_dim(&self) -> usize {
        self.sys.state_dim()
    }

    fn param_dim(&self) -> usize {
        self.sys.param_dim()
    }

    fn increment(&self, x: &[f64], alpha: &[f64], delta: f64) -> Vec<f64> {
        let y = flow_oracle(self.sys, x, alpha, delta, default_substeps(delta));
        y.iter().zip(x).map(|(y, x)| y - x + self.offset).collect()
    }
}

/// Time lags `delta_0 .. delta_{n-1}` of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSchedule {
    deltas: Vec<f64>,
}

impl DeltaSchedule {
    pub fn new(deltas: Vec<f64>) -> Result<Self> {
        if deltas.is_empty() {
            return Err(FlowError::invalid("delta schedule is empty"));
        }
        if let Some(k) = deltas.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(FlowError::invalid(format!(
                "delta[{k}] = {} must be finite and >= 0",
                deltas[k]
            )));
        }
        Ok(Self { deltas })
    }

    pub fn uniform(delta: f64, steps: usize) -> Result<Self> {
        Self::new(vec![delta; steps])
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn steps(&self) -> usize {
        self.deltas.len()
    }

    /// Largest lag, the `Delta` that enters the error bounds.
    pub fn max_delta(&self) -> f64 {
        self.deltas.iter().copied().fold(0.0, f64::max)
    }

    /// `t_0 = 0, t_k = sum_{i<k} delta_i`; `n + 1` entries.
    pub fn times(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.deltas.len() + 1);
        let mut acc = 0.0;
        t.push(acc);
        for d in &self.deltas {
            acc += d;
            t.push(acc);
        }
        t
    }

    /// Errors unless every lag lies inside `range` (a 1-dim box).
    pub fn check_within(&self, range: &BoxDomain) -> Result<()> {
        match self.deltas.iter().position(|d| !range.contains(&[*d])) {
            None => Ok(()),
            Some(k) => Err(FlowError::invalid(format!(
                "delta[{k}] = {} lies outside [{}, {}]",
                self.deltas[k],
                range.lo()[0],
                range.hi()[0]
            ))),
        }
    }
}

fn build_trajectory(times: Vec<f64>, states: Vec<StateVec>, alpha: &ParamVec, x0: &StateVec) -> Trajectory {
    // zero lags give repeated times, which `Trajectory::new` rejects
    Trajectory {
        times,
        states,
        alpha: alpha.clone(),
        x0: x0.clone(),
    }
}

/// `x(t_{k+1}) = x(t_k) + N(x(t_k), alpha, delta_k)` from `x(0) = x0`.
pub fn predict<M: IncrementModel + ?Sized>(
    model: &M,
    x0: &StateVec,
    alpha: &ParamVec,
    sched: &DeltaSchedule,
) -> Result<Trajectory> {
    check_dim("initial state", model.state_dim(), x0.len())?;
    check_dim("parameters", model.param_dim(), alpha.len())?;
    let mut states = Vec::with_capacity(sched.steps() + 1);
    states.push(x0.clone());
    let mut x = x0.0.clone();
    for (k, &delta) in sched.deltas().iter().enumerate() {
        let inc = model.increment(&x, alpha, delta);
        for (xi, di) in x.iter_mut().zip(&inc) {
            *xi += di;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(FlowError::NonFiniteState { step: k + 1 });
        }
        states.push(StateVec::new(x.clone()));
    }
    Ok(build_trajectory(sched.times(), states, alpha, x0))
}

/// Rollouts for many `(x0, alpha)` cases, in input order.
pub fn predict_many<M: IncrementModel + ?Sized>(
    model: &M,
    cases: &[(StateVec, ParamVec)],
    sched: &DeltaSchedule,
) -> Result<Vec<Trajectory>> {
    cases
        .par_iter()
        .map(|(x0, alpha)| predict(model, x0, alpha, sched))
        .collect()
}

/// True-system solution on the schedule's grid, one oracle flow per lag.
pub fn reference_trajectory<S: Dynamics + ?Sized>(
    sys: &S,
    x0: &StateVec,
    alpha: &ParamVec,
    sched: &DeltaSchedule,
) -> Result<Trajectory> {
    check_dim("initial state", sys.state_dim(), x0.len())?;
    check_dim("parameters", sys.param_dim(), alpha.len())?;
    let mut states = Vec::with_capacity(sched.steps() + 1);
    states.push(x0.clone());
    let mut x = x0.0.clone();
    for &delta in sched.deltas() {
        x = flow_oracle(sys, &x, alpha, delta, default_substeps(delta));
        states.push(StateVec::new(x.clone()));
    }
    Ok(build_trajectory(sched.times(), states, alpha, x0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub linf: Vec<f64>,
    pub l2: Vec<f64>,
}

impl ErrorSeries {
    pub fn max_linf(&self) -> f64 {
        self.linf.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_l2(&self) -> f64 {
        self.l2.iter().copied().fold(0.0, f64::max)
    }

    /// CSV `t,linf,l2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,linf,l2\n");
        for k in 0..self.times.len() {
            let _ = writeln!(
                out,
                "{},{},{}",
                fmt_f64(self.times[k]),
                fmt_f64(self.linf[k]),
                fmt_f64(self.l2[k])
            );
        }
        out
    }
}

/// Per-step `linf = max |pred - ref|` over samples and components and
/// `l2 = sqrt(mean over samples of ||pred - ref||^2)`.
pub fn error_metrics(preds: &[Trajectory], refs: &[Trajectory]) -> Result<ErrorSeries> {
    check_dim("reference trajectories", preds.len(), refs.len())?;
    let first = preds
        .first()
        .ok_or_else(|| FlowError::invalid("no trajectories to compare"))?;
    let steps = first.len();
    for (s, (p, r)) in preds.iter().zip(refs).enumerate() {
        check_dim("trajectory length", steps, p.len())?;
        check_dim("reference trajectory length", steps, r.len())?;
        check_dim("reference state dimension", p.dim(), r.dim())?;
        if p.times != r.times || p.times != first.times {
            return Err(FlowError::invalid(format!("sample {s}: time grids differ")));
        }
    }

    let mut linf = vec![0.0f64; steps];
    let mut l2 = vec![0.0f64; steps];
    for (p, r) in preds.iter().zip(refs) {
        for k in 0..steps {
            let (a, b) = (&p.states[k], &r.states[k]);
            check_dim("state dimension", a.len(), b.len())?;
            let mut sq = 0.0;
            for (u, v) in a.iter().zip(b.iter()) {
                let e = (u - v).abs();
                linf[k] = linf[k].max(e);
                sq += e * e;
            }
            l2[k] += sq;
        }
    }
    let n = preds.len() as f64;
    l2.iter_mut().for_each(|v| *v = (*v / n).sqrt());
    Ok(ErrorSeries {
        times: first.times.clone(),
        linf,
        l2,
    })
}

/// CSV `t,x_1..x_d`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t");
    for i in 1..=traj.dim() {
        let _ = write!(out, ",x_{i}");
    }
    out.push('\n');
    for (t, x) in traj.times.iter().zip(&traj.states) {
        out.push_str(&fmt_f64(*t));
        for v in x.iter() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}
