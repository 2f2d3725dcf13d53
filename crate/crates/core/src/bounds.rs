//! A-priori error bounds for composed flow-map predictions and an empirical
//! estimate of the one-step network error they depend on.

use rayon::prelude::*;

use crate::domain::{BoxDomain, Trajectory};
use crate::error::{check_dim, FlowError, Result};
use crate::rng::{sample_uniform_box, Rng};
use crate::rollout::IncrementModel;
use crate::systems::{default_substeps, flow_oracle, Dynamics};

/// Largest `n L Delta` for which the growth factor is evaluated.
pub const MAX_EXPONENT: f64 = 700.0;

/// `(e^{n L Delta} - 1) / (e^{L Delta} - 1)`, which tends to `n` as `L Delta -> 0`.
pub fn composition_factor(n: usize, lipschitz: f64, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(FlowError::invalid("number of compositions must be >= 1"));
    }
    if !(lipschitz >= 0.0 && delta >= 0.0 && lipschitz.is_finite() && delta.is_finite()) {
        return Err(FlowError::invalid("Lipschitz constant and time lag must be finite and >= 0"));
    }
    let x = lipschitz * delta;
    if x == 0.0 || n == 1 {
        return Ok(n as f64);
    }
    let exponent = n as f64 * x;
    if exponent > MAX_EXPONENT {
        return Err(FlowError::BoundOverflow { exponent });
    }
    Ok(exponent.exp_m1() / x.exp_m1())
}

/// Everything the bounds depend on.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundInputs {
    pub n: usize,
    pub lipschitz: f64,
    pub delta: f64,
    /// One-step sup error of the network.
    pub sup_error: f64,
    /// Bound on the true solution over the horizon.
    pub ct: f64,
    /// Solution bound over the estimated parameter range.
    pub ct_tilde: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("L", self.lipschitz),
            ("delta", self.delta),
            ("eps", self.sup_error),
            ("ct", self.ct),
            ("ct_tilde", self.ct_tilde),
            ("gamma", self.gamma),
            ("eta", self.eta),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(FlowError::invalid(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if self.n == 0 {
            return Err(FlowError::invalid("n must be >= 1"));
        }
        Ok(())
    }

    pub fn factor(&self) -> Result<f64> {
        self.validate()?;
        composition_factor(self.n, self.lipschitz, self.delta)
    }
}

/// `(C eps, 2 C^2 eps^2 + 4 C C_t eps)`.
pub fn mean_var_bounds(inp: &BoundInputs) -> Result<(f64, f64)> {
    let c = inp.factor()?;
    let e = inp.sup_error;
    Ok((c * e, 2.0 * c * c * e * e + 4.0 * c * inp.ct * e))
}

/// Bounds when statistics use an estimated parameter range:
/// `C~_t (eta + gamma) + C (1 + eta) eps` for the mean and
/// `(3 C~_t^2 + C C~_t eps)(eta + gamma) + (4 C~_t + 2 C eps)(1 + eta) C eps`
/// for the variance.
pub fn mismatch_bounds(inp: &BoundInputs) -> Result<(f64, f64)> {
    let c = inp.factor()?;
    let (e, ct, mix) = (inp.sup_error, inp.ct_tilde, inp.eta + inp.gamma);
    let mean = ct * mix + c * (1.0 + inp.eta) * e;
    let var = (3.0 * ct * ct + c * ct * e) * mix + (4.0 * ct + 2.0 * c * e) * (1.0 + inp.eta) * c * e;
    Ok((mean, var))
}

/// `(gamma, eta)` for uniform densities on a true box `I` and an estimated box `I~`.
///
/// `gamma` integrates `|rho - rho~|` over the overlap `O`; `eta` is the mass of
/// `rho` outside `O` plus the mass of `rho~` outside `O`. Degenerate dimensions
/// must coincide and are left out of all volumes.
pub fn box_mismatch(truth: &BoxDomain, estimate: &BoxDomain) -> Result<(f64, f64)> {
    check_dim("estimated parameter box", truth.dim(), estimate.dim())?;
    for i in 0..truth.dim() {
        if truth.is_degenerate(i) != estimate.is_degenerate(i)
            || (truth.is_degenerate(i) && truth.lo()[i] != estimate.lo()[i])
        {
            return Err(FlowError::invalid(format!(
                "dimension {i}: fixed parameters must agree between the true and estimated boxes"
            )));
        }
    }
    let (vt, ve) = (truth.volume(), estimate.volume());
    let vo = match truth.intersect(estimate) {
        Some(o) if (0..o.dim()).all(|i| !o.is_degenerate(i) || truth.is_degenerate(i)) => o.volume(),
        _ => 0.0,
    };
    let gamma = vo * (1.0 / vt - 1.0 / ve).abs();
    let eta = (1.0 - vo / ve) + (1.0 - vo / vt);
    Ok((gamma, eta.max(0.0)))
}

/// Largest sampled one-step error and where it occurred.
#[derive(Debug, Clone, PartialEq)]
pub struct SupError {
    pub value: f64,
    pub x: Vec<f64>,
    pub alpha: Vec<f64>,
    pub delta: f64,
}

/// Sampling domain for [`empirical_sup_error`].
#[derive(Debug, Clone, PartialEq)]
pub struct SupDomain {
    pub ix: BoxDomain,
    pub ialpha: BoxDomain,
    pub idelta: BoxDomain,
}

/// `max |N(z, alpha, delta) - (flow_oracle(z, alpha, delta) - z)|_inf` over
/// `samples` uniform draws. Draw `j` comes from substream `("sup", j)` of `rng`.
pub fn empirical_sup_error<M, S>(
    model: &M,
    sys: &S,
    domain: &SupDomain,
    samples: usize,
    rng: &Rng,
) -> Result<SupError>
where
    M: IncrementModel + ?Sized,
    S: Dynamics + ?Sized,
{
    if samples < 100 {
        return Err(FlowError::invalid("sup-error estimate needs at least 100 samples"));
    }
    check_dim("model state dimension", sys.state_dim(), model.state_dim())?;
    check_dim("model parameter dimension", sys.param_dim(), model.param_dim())?;
    check_dim("state box", sys.state_dim(), domain.ix.dim())?;
    check_dim("parameter box", sys.param_dim(), domain.ialpha.dim())?;
    check_dim("time-lag range", 1, domain.idelta.dim())?;

    let best = (0..samples)
        .into_par_iter()
        .map(|j| {
            let mut r = rng.substream_indexed("sup", j as u64);
            let x = sample_uniform_box(&domain.ix, &mut r);
            let alpha = sample_uniform_box(&domain.ialpha, &mut r);
            let delta = sample_uniform_box(&domain.idelta, &mut r)[0];
            let exact = flow_oracle(sys, &x, &alpha, delta, default_substeps(delta));
            let inc = model.increment(&x, &alpha, delta);
            let err = inc
                .iter()
                .zip(exact.iter().zip(&x))
                .map(|(n, (y, z))| (n - (y - z)).abs())
                .fold(0.0, f64::max);
            (j, err, x, alpha, delta)
        })
        // ties resolve to the lowest index so the argmax is deterministic
        .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
        .expect("samples >= 100");
    Ok(SupError {
        value: best.1,
        x: best.2,
        alpha: best.3,
        delta: best.4,
    })
}

/// `max_k ||x(t_k)||_inf` over a set of trajectories.
pub fn solution_bound(trajs: &[Trajectory]) -> f64 {
    trajs
        .iter()
        .flat_map(|t| t.states.iter())
        .flat_map(|s| s.iter())
        .fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::{ExactDecay, OracleModel};
    use crate::systems::{SystemDef, SystemId};
    use proptest::prelude::*;
    use crate::rng::Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn factor_reference_values() {
        assert_eq!(composition_factor(1, 1.0, 0.1).unwrap(), 1.0);
        assert!((composition_factor(10, 1.0, 0.1).unwrap() - 16.33804).abs() < 1e-4);
        // extended-precision references
        let cases = [
            (10, 0.1, 16.33799399966362),
            (300, 0.1, 101610547640526.115),
            (100, 1e-10, 100.000000495000001642),
            (1000, 1e-6, 1000.4996664583417),
            (50, 1e-3, 51.24546510042732),
            (20, 1.0, 282354842.1302263),
            (7, 0.37, 27.538124592996204),
        ];
        for (n, x, want) in cases {
            let got = composition_factor(n, 1.0, x).unwrap();
            assert!(rel(got, want) <= 1e-12, "n={n} x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn factor_limits_and_overflow() {
        assert_eq!(composition_factor(37, 0.0, 0.1).unwrap(), 37.0);
        assert_eq!(composition_factor(37, 2.0, 0.0).unwrap(), 37.0);
        assert!((composition_factor(37, 1.0, 1e-300).unwrap() - 37.0).abs() < 1e-12);
        assert!(matches!(
            composition_factor(8000, 1.0, 0.1),
            Err(FlowError::BoundOverflow { .. })
        ));
        assert!(composition_factor(7000, 1.0, 0.1).is_ok());
        assert!(composition_factor(0, 1.0, 0.1).is_err());
        assert!(composition_factor(3, -1.0, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn factor_increases_in_every_argument(n in 1usize..400, l in 0.01f64..2.0, d in 0.001f64..0.5) {
            let c = composition_factor(n, l, d).unwrap();
            prop_assert!(composition_factor(n + 1, l, d).unwrap() > c);
            prop_assert!(composition_factor(n + 1, l * 1.01, d).unwrap() > composition_factor(n + 1, l, d).unwrap());
            prop_assert!(composition_factor(n + 1, l, d * 1.01).unwrap() > composition_factor(n + 1, l, d).unwrap());
        }
    }

    fn inputs(n: usize, eps: f64, ct: f64) -> BoundInputs {
        BoundInputs {
            n,
            lipschitz: 1.0,
            delta: 0.1,
            sup_error: eps,
            ct,
            ..BoundInputs::default()
        }
    }

    #[test]
    fn mean_var_cases() {
        assert_eq!(mean_var_bounds(&inputs(50, 0.0, 3.0)).unwrap(), (0.0, 0.0));
        let (m, v) = mean_var_bounds(&inputs(1, 0.01, 1.0)).unwrap();
        assert!((m - 0.01).abs() < 1e-16 && (v - 0.0402).abs() < 1e-15);
        let (_, v1) = mean_var_bounds(&inputs(30, 0.01, 0.0)).unwrap();
        let (_, v2) = mean_var_bounds(&inputs(30, 0.02, 0.0)).unwrap();
        assert!(rel(v2, 4.0 * v1) < 1e-14);
        assert!(mean_var_bounds(&inputs(0, 0.01, 1.0)).is_err());
    }

    #[test]
    fn mismatch_cases() {
        let exact = BoundInputs { ct_tilde: 2.0, ..inputs(10, 0.0, 1.0) };
        assert_eq!(mismatch_bounds(&exact).unwrap(), (0.0, 0.0));
        let shifted = BoundInputs {
            ct_tilde: 1.0,
            gamma: 0.1,
            ..inputs(4, 0.0, 0.0)
        };
        let (m, v) = mismatch_bounds(&shifted).unwrap();
        assert!((m - 0.1).abs() < 1e-16 && (v - 0.3).abs() < 1e-15);
        let same = BoundInputs { ct_tilde: 0.7, ..inputs(25, 0.003, 0.7) };
        assert!(rel(mismatch_bounds(&same).unwrap().0, mean_var_bounds(&same).unwrap().0) < 1e-15);
    }

    #[test]
    fn box_mismatch_cases() {
        let unit = BoxDomain::interval(0.0, 1.0).unwrap();
        assert_eq!(box_mismatch(&unit, &unit).unwrap(), (0.0, 0.0));
        // overlap [0.5, 1]: gamma = 0.5 |1 - 1/1| = 0, eta = 0.5 + 0.5
        let shifted = BoxDomain::interval(0.5, 1.5).unwrap();
        let (g, e) = box_mismatch(&unit, &shifted).unwrap();
        assert!(g.abs() < 1e-15 && (e - 1.0).abs() < 1e-15);
        // nested [0, 2] over [0, 1]: gamma = 1 * |1 - 1/2|, eta = 1/2 + 0
        let wide = BoxDomain::interval(0.0, 2.0).unwrap();
        let (g, e) = box_mismatch(&unit, &wide).unwrap();
        assert!((g - 0.5).abs() < 1e-15 && (e - 0.5).abs() < 1e-15);
        let apart = BoxDomain::interval(3.0, 4.0).unwrap();
        assert_eq!(box_mismatch(&unit, &apart).unwrap(), (0.0, 2.0));
        let pinned = BoxDomain::new(vec![0.0, 2.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(box_mismatch(&pinned, &pinned).unwrap(), (0.0, 0.0));
        let moved = BoxDomain::new(vec![0.0, 3.0], vec![1.0, 3.0]).unwrap();
        assert!(box_mismatch(&pinned, &moved).is_err());
    }

    fn ex1_domain() -> SupDomain {
        let def = SystemDef::new(SystemId::LinearScalar);
        SupDomain {
            ix: def.default_ix,
            ialpha: def.default_ialpha,
            idelta: BoxDomain::interval(0.0, 0.1).unwrap(),
        }
    }

    #[test]
    fn sup_error_of_oracle_stubs() {
        let sys = SystemDef::new(SystemId::LinearScalar);
        let rng = Rng::new(5);
        let exact = empirical_sup_error(&OracleModel { sys: &sys, offset: 0.0 }, &sys, &ex1_domain(), 500, &rng).unwrap();
        assert!(exact.value <= 1e-10);
        let off = empirical_sup_error(&OracleModel { sys: &sys, offset: 0.01 }, &sys, &ex1_domain(), 500, &rng).unwrap();
        assert!((off.value - 0.01).abs() <= 1e-10);
        // closed-form increment against the RK4 oracle
        let closed = empirical_sup_error(&ExactDecay::default(), &sys, &ex1_domain(), 500, &rng).unwrap();
        assert!(closed.value <= 1e-10);
        assert!(ex1_domain().ix.contains(&off.x) && off.delta <= 0.1);
        assert!(empirical_sup_error(&ExactDecay::default(), &sys, &ex1_domain(), 10, &rng).is_err());
    }

    #[test]
    fn sup_error_is_deterministic() {
        let sys = SystemDef::new(SystemId::LinearScalar);
        let stub = ExactDecay { offset: 0.0 };
        let a = empirical_sup_error(&stub, &sys, &ex1_domain(), 300, &Rng::new(2)).unwrap();
        let b = empirical_sup_error(&stub, &sys, &ex1_domain(), 300, &Rng::new(2)).unwrap();
        assert_eq!(a, b);
    }
}
