//! Benchmark systems, the RK4 ground-truth solver and analytic references.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::domain::{check_times_increasing, BoxDomain, ParamVec, StateVec, Trajectory};
use crate::error::{check_dim, FlowError, Result};

/// Autonomous parameterized right-hand side `dx/dt = f(x, alpha)`.
pub trait Dynamics: Sync {
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    /// Writes `f(x, alpha)` into `out`. Slices are already dimension-checked.
    fn rhs_into(&self, x: &[f64], alpha: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemId {
    LinearScalar,
    LinearSystem2D,
    Oscillator,
    CellCascade,
}

impl SystemId {
    pub const ALL: [SystemId; 4] = [
        SystemId::LinearScalar,
        SystemId::LinearSystem2D,
        SystemId::Oscillator,
        SystemId::CellCascade,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemId::LinearScalar => "linear-scalar",
            SystemId::LinearSystem2D => "linear-2d",
            SystemId::Oscillator => "oscillator",
            SystemId::CellCascade => "cell-cascade",
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemId {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self> {
        SystemId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                FlowError::invalid(format!(
                    "unknown system '{s}' (expected one of linear-scalar, linear-2d, oscillator, cell-cascade)"
                ))
            })
    }
}

/// Michaelis-Menten constants and rates of the autocrine signaling cascade.
///
/// Flattened layout (14 entries): `K_m,1..6`, `V_max,1..6`, `G`, `I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeParams {
    pub km: [f64; 6],
    pub vmax: [f64; 6],
    pub g: f64,
    pub input: f64,
}

impl CascadeParams {
    pub const LEN: usize = 14;
    pub const INPUT_RANGE: (f64, f64) = (0.0, 1.5);
    /// Index of the tuning input `I` in the flattened layout.
    pub const INPUT_INDEX: usize = 13;
    /// Flattened indices of `K_m,1`, `K_m,4`, `V_max,2`, `V_max,5`.
    pub const REDUCED_RANDOM: [usize; 4] = [0, 3, 7, 10];

    pub fn nominal(input: f64) -> Self {
        Self {
            km: [0.2; 6],
            vmax: [0.5, 0.15, 0.15, 0.15, 0.25, 0.05],
            g: 2.0,
            input,
        }
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        check_dim("cascade parameters", Self::LEN, p.len())?;
        let mut km = [0.0; 6];
        let mut vmax = [0.0; 6];
        km.copy_from_slice(&p[..6]);
        vmax.copy_from_slice(&p[6..12]);
        Ok(Self {
            km,
            vmax,
            g: p[12],
            input: p[13],
        })
    }

    pub fn to_param_vec(&self) -> ParamVec {
        let mut v = Vec::with_capacity(Self::LEN);
        v.extend_from_slice(&self.km);
        v.extend_from_slice(&self.vmax);
        v.push(self.g);
        v.push(self.input);
        ParamVec::new(v)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.km.iter().chain(&self.vmax).chain([&self.g]).all(|v| *v > 0.0);
        if !positive {
            return Err(FlowError::invalid("cascade constants must be positive"));
        }
        let (lo, hi) = Self::INPUT_RANGE;
        if !(lo..=hi).contains(&self.input) {
            return Err(FlowError::invalid(format!(
                "tuning input I = {} outside [{lo}, {hi}]",
                self.input
            )));
        }
        Ok(())
    }

    /// All 13 constants uniform within +-10% of nominal, `I` over its full range.
    pub fn full_box() -> BoxDomain {
        let nominal = Self::nominal(0.0).to_param_vec();
        let mut lo: Vec<f64> = nominal.iter().map(|v| 0.9 * v).collect();
        let mut hi: Vec<f64> = nominal.iter().map(|v| 1.1 * v).collect();
        lo[Self::INPUT_INDEX] = Self::INPUT_RANGE.0;
        hi[Self::INPUT_INDEX] = Self::INPUT_RANGE.1;
        BoxDomain::new(lo, hi).expect("nominal box is valid")
    }

    /// Only `K_m,1`, `K_m,4`, `V_max,2`, `V_max,5` random (+-10%); the rest pinned
    /// at nominal values and `I` spanning `input_range`.
    pub fn reduced_box(input_range: (f64, f64)) -> BoxDomain {
        let nominal = Self::nominal(0.0).to_param_vec();
        let mut lo = nominal.0.clone();
        let mut hi = nominal.0;
        for &i in &Self::REDUCED_RANDOM {
            lo[i] *= 0.9;
            hi[i] *= 1.1;
        }
        lo[Self::INPUT_INDEX] = input_range.0;
        hi[Self::INPUT_INDEX] = input_range.1;
        BoxDomain::new(lo, hi).expect("reduced box is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemDef {
    pub id: SystemId,
    pub d: usize,
    pub l: usize,
    pub default_ix: BoxDomain,
    pub default_ialpha: BoxDomain,
}

impl SystemDef {
    pub fn new(id: SystemId) -> Self {
        let (d, l, ix, ia) = match id {
            SystemId::LinearScalar => (
                1,
                1,
                BoxDomain::interval(0.0, 1.0),
                BoxDomain::interval(0.0, 1.0),
            ),
            SystemId::LinearSystem2D => (
                2,
                2,
                BoxDomain::cube(2, -1.0, 1.0),
                BoxDomain::cube(2, 3.8, 4.2),
            ),
            SystemId::Oscillator => (
                2,
                2,
                BoxDomain::new(vec![-PI, -2.0 * PI], vec![PI, 2.0 * PI]),
                BoxDomain::new(vec![0.0, 8.8], vec![0.4, 9.2]),
            ),
            SystemId::CellCascade => (
                3,
                CascadeParams::LEN,
                BoxDomain::cube(3, 0.0, 1.0),
                Ok(CascadeParams::full_box()),
            ),
        };
        Self {
            id,
            d,
            l,
            default_ix: ix.expect("static domain"),
            default_ialpha: ia.expect("static domain"),
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    /// Checked `f(x, alpha)`.
    pub fn rhs_eval(&self, x: &StateVec, alpha: &ParamVec) -> Result<StateVec> {
        check_dim("state", self.d, x.len())?;
        check_dim("parameters", self.l, alpha.len())?;
        let mut out = StateVec::zeros(self.d);
        self.rhs_into(x, alpha, &mut out);
        Ok(out)
    }
}

impl Dynamics for SystemDef {
    fn state_dim(&self) -> usize {
        self.d
    }

    fn param_dim(&self) -> usize {
        self.l
    }

    fn rhs_into(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
        match self.id {
            SystemId::LinearScalar => {
                out[0] = -a[0] * x[0];
            }
            SystemId::LinearSystem2D => {
                out[0] = x[0] - a[0] * x[1];
                out[1] = a[1] * x[0] - 7.0 * x[1];
            }
            SystemId::Oscillator => {
                out[0] = x[1];
                out[1] = -a[0] * x[1] - a[1] * x[0].sin();
            }
            SystemId::CellCascade => {
                let (km, vm, g, input) = (&a[0..6], &a[6..12], a[12], a[13]);
                let (e1, e2, e3) = (x[0], x[1], x[2]);
                out[0] = input / (1.0 + g * e3) * vm[0] * (1.0 - e1) / (km[0] + (1.0 - e1))
                    - vm[1] * e1 / (km[1] + e1);
                out[1] = vm[2] * e1 * (1.0 - e2) / (km[2] + (1.0 - e2)) - vm[3] * e2 / (km[3] + e2);
                out[2] = vm[4] * e2 * (1.0 - e3) / (km[4] + (1.0 - e3)) - vm[5] * e3 / (km[5] + e3);
            }
        }
    }
}

/// Classical fourth-order Runge-Kutta step of size `h`.
pub fn rk4_step<S: Dynamics + ?Sized>(sys: &S, x: &[f64], alpha: &[f64], h: f64) -> Vec<f64> {
    let d = x.len();
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut tmp = vec![0.0; d];

    sys.rhs_into(x, alpha, &mut k1);
    for i in 0..d {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    sys.rhs_into(&tmp, alpha, &mut k2);
    for i in 0..d {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    sys.rhs_into(&tmp, alpha, &mut k3);
    for i in 0..d {
        tmp[i] = x[i] + h * k3[i];
    }
    sys.rhs_into(&tmp, alpha, &mut k4);

    (0..d)
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Oracle substep size used when no explicit count is given.
pub const ORACLE_STEP: f64 = 0.005;

/// `max(1, ceil(delta / 0.005))`.
pub fn default_substeps(delta: f64) -> usize {
    ((delta / ORACLE_STEP).ceil() as usize).max(1)
}

/// Approximates the exact flow map `Phi_delta(x, alpha)` by `substeps` RK4 steps.
pub fn flow_oracle<S: Dynamics + ?Sized>(
    sys: &S,
    x: &[f64],
    alpha: &[f64],
    delta: f64,
    substeps: usize,
) -> Vec<f64> {
    if delta == 0.0 {
        return x.to_vec();
    }
    let n = substeps.max(1);
    let h = delta / n as f64;
    let mut state = x.to_vec();
    for _ in 0..n {
        state = rk4_step(sys, &state, alpha, h);
    }
    state
}

/// Integrates from `x0` (taken as the state at `times[0]`) through every
/// instant of `times`, using `ceil(dt * substeps_per_unit)` RK4 steps per gap.
pub fn integrate_trajectory<S: Dynamics + ?Sized>(
    sys: &S,
    x0: &StateVec,
    alpha: &ParamVec,
    times: &[f64],
    substeps_per_unit: f64,
) -> Result<Trajectory> {
    check_dim("initial state", sys.state_dim(), x0.len())?;
    check_dim("parameters", sys.param_dim(), alpha.len())?;
    if times.is_empty() {
        return Err(FlowError::invalid("time grid is empty"));
    }
    if times[0] < 0.0 {
        return Err(FlowError::invalid("times must start at t >= 0"));
    }
    check_times_increasing(times)?;
    if !(substeps_per_unit > 0.0) {
        return Err(FlowError::invalid("substeps_per_unit must be positive"));
    }

    let mut states = Vec::with_capacity(times.len());
    states.push(x0.clone());
    let mut x = x0.0.clone();
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        let substeps = ((dt * substeps_per_unit).ceil() as usize).max(1);
        x = flow_oracle(sys, &x, alpha, dt, substeps);
        states.push(StateVec::new(x.clone()));
    }
    Trajectory::new(times.to_vec(), states, alpha.clone(), x0.clone())
}

/// `x0 * exp(-alpha * t)`.
pub fn analytic_solution_ex1(t: f64, alpha: f64, x0: f64) -> f64 {
    x0 * (-alpha * t).exp()
}

/// Mean and variance of `exp(-alpha t)` for `alpha ~ U[0, 1]` (so `x0 = 1`).
pub fn analytic_mean_var_ex1(t: f64) -> (f64, f64) {
    if t == 0.0 {
        return (1.0, 0.0);
    }
    let mean = -(-t).exp_m1() / t;
    if t < 1e-4 {
        // leading terms of the series; the closed form cancels catastrophically here
        return (mean, t * t / 12.0 - t * t * t / 12.0);
    }
    let second = -(-2.0 * t).exp_m1() / (2.0 * t);
    (mean, second - mean * mean)
}

/// Largest induced infinity-norm of `df/dx` over a tensor grid of `ix x ialpha`.
///
/// Degenerate box dimensions contribute a single grid coordinate. The Jacobian
/// is taken by central differences with step `1e-6` times the state-box width.
pub fn lipschitz_estimate<S: Dynamics + ?Sized>(
    sys: &S,
    ix: &BoxDomain,
    ialpha: &BoxDomain,
    grid_per_dim: usize,
) -> Result<f64> {
    check_dim("state box", sys.state_dim(), ix.dim())?;
    check_dim("parameter box", sys.param_dim(), ialpha.dim())?;
    if grid_per_dim < 2 {
        return Err(FlowError::invalid("grid_per_dim must be >= 2"));
    }
    let d = sys.state_dim();

    let axis = |b: &BoxDomain, i: usize| -> Vec<f64> {
        if b.is_degenerate(i) {
            vec![b.lo()[i]]
        } else {
            (0..grid_per_dim)
                .map(|k| b.lo()[i] + b.width(i) * k as f64 / (grid_per_dim - 1) as f64)
                .collect()
        }
    };
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|i| axis(ix, i))
        .chain((0..ialpha.dim()).map(|i| axis(ialpha, i)))
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    if total > 10_000_000 {
        return Err(FlowError::Unsupported(format!(
            "Lipschitz grid of {total} points; lower grid_per_dim"
        )));
    }
    let steps: Vec<f64> = (0..d)
        .map(|i| 1e-6 * if ix.is_degenerate(i) { 1.0 } else { ix.width(i) })
        .collect();

    let mut idx = vec![0usize; axes.len()];
    let mut point = vec![0.0; axes.len()];
    let mut fp = vec![0.0; d];
    let mut fm = vec![0.0; d];
    let mut row_sums = vec![0.0; d];
    let mut best = 0.0f64;
    for _ in 0..total {
        for (k, a) in axes.iter().enumerate() {
            point[k] = a[idx[k]];
        }
        let (x, alpha) = point.split_at_mut(d);
        row_sums.iter_mut().for_each(|r| *r = 0.0);
        for j in 0..d {
            let orig = x[j];
            x[j] = orig + steps[j];
            sys.rhs_into(x, alpha, &mut fp);
            x[j] = orig - steps[j];
            sys.rhs_into(x, alpha, &mut fm);
            x[j] = orig;
            for i in 0..d {
                row_sums[i] += ((fp[i] - fm[i]) / (2.0 * steps[j])).abs();
            }
        }
        best = row_sums.iter().copied().fold(best, f64::max);

        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(id: SystemId) -> SystemDef {
        SystemDef::new(id)
    }

    #[test]
    fn system_ids_round_trip_through_cli_names() {
        for id in SystemId::ALL {
            assert_eq!(id.as_str().parse::<SystemId>().unwrap(), id);
        }
        assert!("lorenz".parse::<SystemId>().is_err());
    }

    #[test]
    fn dimensions_match_benchmarks() {
        let dims: Vec<(usize, usize)> = SystemId::ALL.iter().map(|&i| (sys(i).d, sys(i).l)).collect();
        assert_eq!(dims, vec![(1, 1), (2, 2), (2, 2), (3, 14)]);
    }

    #[test]
    fn rhs_linear_scalar() {
        let f = sys(SystemId::LinearScalar)
            .rhs_eval(&StateVec::new(vec![1.0]), &ParamVec::new(vec![0.5]))
            .unwrap();
        assert_eq!(f.0, vec![-0.5]);
    }

    #[test]
    fn rhs_oscillator_equilibrium() {
        let f = sys(SystemId::Oscillator)
            .rhs_eval(&StateVec::zeros(2), &ParamVec::new(vec![0.3, 9.0]))
            .unwrap();
        assert_eq!(f.0, vec![0.0, 0.0]);
    }

    #[test]
    fn rhs_cascade_at_origin() {
        let p = CascadeParams::nominal(0.48).to_param_vec();
        let f = sys(SystemId::CellCascade).rhs_eval(&StateVec::zeros(3), &p).unwrap();
        assert!((f[0] - 0.2).abs() < 1e-15);
        assert_eq!(f[1], 0.0);
        assert_eq!(f[2], 0.0);
    }

    #[test]
    fn rhs_rejects_wrong_dimensions() {
        let s = sys(SystemId::LinearSystem2D);
        assert!(matches!(
            s.rhs_eval(&StateVec::zeros(3), &ParamVec::new(vec![4.0, 4.0])),
            Err(FlowError::DimensionMismatch { .. })
        ));
        assert!(s.rhs_eval(&StateVec::zeros(2), &ParamVec::new(vec![4.0])).is_err());
    }

    #[test]
    fn cascade_params_validate() {
        assert!(CascadeParams::nominal(0.48).validate().is_ok());
        assert!(CascadeParams::nominal(2.0).validate().is_err());
        let mut p = CascadeParams::nominal(0.1);
        p.km[2] = 0.0;
        assert!(p.validate().is_err());
        let round = CascadeParams::from_slice(&p.to_param_vec()).unwrap();
        assert_eq!(round, p);
    }

    #[test]
    fn reduced_box_pins_deterministic_parameters() {
        let b = CascadeParams::reduced_box((0.48, 0.48));
        let random: Vec<usize> = (0..14).filter(|&i| !b.is_degenerate(i)).collect();
        assert_eq!(random, CascadeParams::REDUCED_RANDOM.to_vec());
    }

    #[test]
    fn rk4_hand_arithmetic() {
        // k1 = -1, k2 = -0.95, k3 = -0.9525, k4 = -0.90475
        let x = rk4_step(&sys(SystemId::LinearScalar), &[1.0], &[1.0], 0.1);
        let hand = 1.0 + 0.1 / 6.0 * (-1.0 + 2.0 * -0.95 + 2.0 * -0.9525 - 0.90475);
        assert!((x[0] - hand).abs() < 1e-15);
        assert!((x[0] - 0.9048375).abs() < 1e-12);
    }

    #[test]
    fn rk4_fixed_point() {
        let x = rk4_step(&sys(SystemId::Oscillator), &[0.0, 0.0], &[0.2, 9.0], 0.1);
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn rk4_local_error_is_fifth_order() {
        let s = sys(SystemId::LinearScalar);
        let err = |h: f64| (rk4_step(&s, &[1.0], &[1.0], h)[0] - (-h).exp()).abs();
        let (e1, e2, e3) = (err(0.1), err(0.05), err(0.025));
        for (a, b) in [(e1, e2), (e2, e3)] {
            let ratio = a / b;
            assert!((ratio - 32.0).abs() < 3.0, "ratio {ratio}");
        }
        // |step(h) - exp(-h)| <= C h^5 with C = 1/120 (next Taylor term)
        for h in [0.1, 0.05, 0.025] {
            assert!(err(h) <= h.powi(5) / 120.0);
        }
    }

    #[test]
    fn flow_oracle_closed_forms() {
        let s = sys(SystemId::LinearScalar);
        let x = flow_oracle(&s, &[1.0], &[1.0], 0.1, 10);
        assert!((x[0] - 0.904837418).abs() < 1e-9);
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-10);
        let y = flow_oracle(&s, &[2.0], &[0.5], 0.2, 20);
        assert!((y[0] - 1.809674836).abs() < 1e-9);
        assert!((y[0] - 2.0 * (-0.1f64).exp()).abs() < 1e-10);
        assert_eq!(flow_oracle(&s, &[0.3], &[0.7], 0.0, 5), vec![0.3]);
    }

    #[test]
    fn flow_oracle_is_globally_fourth_order() {
        let s = sys(SystemId::LinearScalar);
        let exact = 0.8 * (-0.9f64 * 1.5).exp();
        let err = |n| (flow_oracle(&s, &[0.8], &[0.9], 1.5, n)[0] - exact).abs();
        for n in [8, 16, 32] {
            let ratio = err(n) / err(2 * n);
            assert!((ratio - 16.0).abs() < 1.5, "n={n} ratio {ratio}");
        }
    }

    #[test]
    fn flow_semigroup() {
        let s = sys(SystemId::LinearScalar);
        let direct = flow_oracle(&s, &[0.9], &[0.6], 0.3, default_substeps(0.3));
        let mid = flow_oracle(&s, &[0.9], &[0.6], 0.1, default_substeps(0.1));
        let split = flow_oracle(&s, &mid, &[0.6], 0.2, default_substeps(0.2));
        assert!((direct[0] - split[0]).abs() < 1e-10);
    }

    #[test]
    fn default_substep_policy() {
        assert_eq!(default_substeps(0.0), 1);
        assert_eq!(default_substeps(0.1), 20);
        assert_eq!(default_substeps(0.0051), 2);
    }

    #[test]
    fn trajectory_single_point_and_closed_form() {
        let s = sys(SystemId::LinearScalar);
        let x0 = StateVec::new(vec![1.0]);
        let a = ParamVec::new(vec![1.0]);
        let t = integrate_trajectory(&s, &x0, &a, &[0.0], 200.0).unwrap();
        assert_eq!(t.states, vec![x0.clone()]);

        let t = integrate_trajectory(&s, &x0, &a, &[0.0, 1.0, 2.0], 200.0).unwrap();
        for (k, st) in t.states.iter().enumerate() {
            assert!((st[0] - (-(k as f64)).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectory_from_equilibrium_is_constant() {
        let s = sys(SystemId::Oscillator);
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let t = integrate_trajectory(&s, &StateVec::zeros(2), &ParamVec::new(vec![0.2, 9.0]), &times, 200.0)
            .unwrap();
        assert!(t.states.iter().all(|st| st.0 == vec![0.0, 0.0]));
    }

    #[test]
    fn trajectory_depends_only_on_time_differences() {
        let s = sys(SystemId::Oscillator);
        let x0 = StateVec::new(vec![-1.193, -3.876]);
        let a = ParamVec::new(vec![0.2, 9.0]);
        let times: Vec<f64> = (0..40).map(|k| k as f64 * 0.125).collect();
        let shifted: Vec<f64> = times.iter().map(|t| t + 4.0).collect();
        let p = integrate_trajectory(&s, &x0, &a, &times, 200.0).unwrap();
        let q = integrate_trajectory(&s, &x0, &a, &shifted, 200.0).unwrap();
        assert_eq!(p.states, q.states);
    }

    #[test]
    fn trajectory_rejects_non_increasing_times() {
        let s = sys(SystemId::LinearScalar);
        let r = integrate_trajectory(&s, &StateVec::new(vec![1.0]), &ParamVec::new(vec![1.0]), &[0.0, 0.5, 0.5], 200.0);
        assert!(r.is_err());
    }

    #[test]
    fn cascade_stays_in_unit_cube() {
        use crate::rng::{sample_uniform_box, Rng};
        let s = sys(SystemId::CellCascade);
        let mut rng = Rng::new(5);
        let times: Vec<f64> = (0..=300).map(|k| k as f64 * 0.5).collect();
        for _ in 0..20 {
            let x0 = StateVec::new(sample_uniform_box(&s.default_ix, &mut rng));
            let a = ParamVec::new(sample_uniform_box(&s.default_ialpha, &mut rng));
            let t = integrate_trajectory(&s, &x0, &a, &times, 200.0).unwrap();
            for st in &t.states {
                assert!(st.iter().all(|v| (-1e-6..=1.0 + 1e-6).contains(v)), "{st:?}");
            }
        }
    }

    #[test]
    fn analytic_ex1() {
        assert_eq!(analytic_solution_ex1(0.0, 0.7, 2.5), 2.5);
        assert!((analytic_solution_ex1(1.0, 1.0, 1.0) - 0.3678794412).abs() < 1e-10);
        assert_eq!(analytic_solution_ex1(13.0, 0.0, 0.4), 0.4);
    }

    #[test]
    fn analytic_mean_var_ex1_values() {
        assert_eq!(analytic_mean_var_ex1(0.0), (1.0, 0.0));
        let (m, v) = analytic_mean_var_ex1(1e-9);
        assert!((m - 1.0).abs() < 1e-8 && v.abs() < 1e-17);
        let (m, v) = analytic_mean_var_ex1(1.0);
        assert!((m - 0.63212056).abs() < 1e-8);
        assert!((v - 0.03275596).abs() < 1e-8);
        let (m, _) = analytic_mean_var_ex1(30.0);
        assert!((m - 0.03333333).abs() < 1e-8);
        // continuity across the series switch
        let (_, below) = analytic_mean_var_ex1(0.99e-4);
        let (_, above) = analytic_mean_var_ex1(1.01e-4);
        assert!((below - above).abs() / above < 0.05);
    }

    struct ConstantField;
    impl Dynamics for ConstantField {
        fn state_dim(&self) -> usize {
            2
        }
        fn param_dim(&self) -> usize {
            1
        }
        fn rhs_into(&self, _x: &[f64], a: &[f64], out: &mut [f64]) {
            out[0] = a[0];
            out[1] = -3.0;
        }
    }

    #[test]
    fn lipschitz_linear_scalar() {
        let s = sys(SystemId::LinearScalar);
        let l = lipschitz_estimate(&s, &s.default_ix, &s.default_ialpha, 5).unwrap();
        assert!((l - 1.0).abs() < 1e-6, "{l}");
    }

    #[test]
    fn lipschitz_constant_field_is_zero() {
        let ix = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let ia = BoxDomain::interval(0.0, 2.0).unwrap();
        assert_eq!(lipschitz_estimate(&ConstantField, &ix, &ia, 4).unwrap(), 0.0);
    }

    #[test]
    fn lipschitz_linear_2d() {
        let s = sys(SystemId::LinearSystem2D);
        let l = lipschitz_estimate(&s, &s.default_ix, &s.default_ialpha, 3).unwrap();
        assert!((l - 11.2).abs() < 1e-4, "{l}");
    }

    #[test]
    fn lipschitz_needs_two_grid_points() {
        let s = sys(SystemId::LinearScalar);
        assert!(lipschitz_estimate(&s, &s.default_ix, &s.default_ialpha, 1).is_err());
    }
}
