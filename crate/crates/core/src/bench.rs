//! End-to-end experiment harness: generate, train, roll out, quantify
//! uncertainty and tabulate error bounds for the four benchmark systems.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::bounds::{composition_factor, empirical_sup_error, mean_var_bounds, solution_bound, BoundInputs, SupDomain};
use crate::data::{fmt_f64, generate_pairs, full_scale_pair_count, GenConfig, DEFAULT_MAX_LAG};
use crate::domain::{BoxDomain, ParamVec, StateVec, Trajectory};
use crate::error::{check_dim, FlowError, Result};
use crate::net::{save_model, Network, NetworkSpec};
use crate::rng::{sample_uniform_box, Rng};
use crate::rollout::{error_metrics, predict, predict_many, reference_trajectory, DeltaSchedule, ErrorSeries};
use crate::systems::{analytic_mean_var_ex1, lipschitz_estimate, CascadeParams, SystemDef, SystemId};
use crate::train::{train, write_loss_history, TrainConfig};
use crate::uq::{box_rule, reference_statistics, weighted_statistics, StatSeries};

/// Problem sizes: `Desk` fits a laptop, `Paper` uses the published sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(FlowError::invalid(format!("unknown scale '{s}' (expected desk or paper)"))),
        }
    }
}

/// Initial state used in the text for the linear system; its figure uses `(0, -1)`.
pub const EX2_X0: [f64; 2] = [0.0, 1.0];
pub const EX3_X0: [f64; 2] = [-1.193, -3.876];
pub const EX4_X0: [f64; 3] = [0.22685145, 0.98369158, 0.87752945];
/// Tuning input for the cascade uncertainty study.
pub const EX4_INPUT: f64 = 0.48;
pub const EX4_SWEEP_POINTS: usize = 16;
pub const EX4_SWEEP_STEPS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Check {
    AtMost(f64),
    AtLeast(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub check: Option<Check>,
}

impl Metric {
    fn info(name: &str, value: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            check: None,
        }
    }

    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            check: Some(Check::AtMost(limit)),
        }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            check: Some(Check::AtLeast(limit)),
        }
    }

    /// `None` for informational metrics.
    pub fn passed(&self) -> Option<bool> {
        self.check.map(|c| match c {
            Check::AtMost(l) => self.value <= l,
            Check::AtLeast(l) => self.value >= l,
        })
    }
}

/// One experiment: sizes, domains and evaluation protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub example: u8,
    pub system: SystemId,
    pub spec: NetworkSpec,
    pub pairs: usize,
    pub epochs: usize,
    /// Parameter box the training data are drawn from.
    pub train_ialpha: BoxDomain,
    /// Parameter box of the uncertainty study and the sampled trajectories.
    pub uq_ialpha: BoxDomain,
    pub x0: StateVec,
    pub steps: usize,
    pub samples: usize,
    pub gl_points: usize,
    pub sup_samples: usize,
}

impl BenchCase {
    pub fn new(example: u8, scale: Scale) -> Result<Self> {
        let system = match example {
            1 => SystemId::LinearScalar,
            2 => SystemId::LinearSystem2D,
            3 => SystemId::Oscillator,
            4 => SystemId::CellCascade,
            _ => return Err(FlowError::invalid(format!("unknown example {example} (expected 1-4)"))),
        };
        let def = SystemDef::new(system);
        let base = NetworkSpec::new(def.d, def.l, 3, 40);
        let (spec, desk_pairs, desk_epochs) = match example {
            1 => (base, 20_000, 500),
            2 => (base, 40_000, 500),
            3 => (base, 40_000, 800),
            _ => (NetworkSpec::new(3, def.l, 3, 64).with_output_tanh(true), 100_000, 300),
        };
        let (x0, steps, gl_points) = match example {
            1 => (vec![1.0], 300, 10),
            2 => (EX2_X0.to_vec(), 100, 5),
            3 => (EX3_X0.to_vec(), 200, 5),
            _ => (EX4_X0.to_vec(), 1400, 5),
        };
        let (train_ialpha, uq_ialpha) = if example == 4 {
            let uq = CascadeParams::reduced_box((EX4_INPUT, EX4_INPUT));
            match scale {
                Scale::Desk => (CascadeParams::reduced_box(CascadeParams::INPUT_RANGE), uq),
                Scale::Paper => (CascadeParams::full_box(), uq),
            }
        } else {
            (def.default_ialpha.clone(), def.default_ialpha.clone())
        };
        let (spec, pairs, epochs, samples, sup_samples) = match scale {
            Scale::Desk => (spec, desk_pairs, desk_epochs, 100, 100_000),
            Scale::Paper => {
                let spec = if example == 4 {
                    NetworkSpec::new(3, def.l, 3, 200).with_output_tanh(true)
                } else {
                    spec
                };
                let samples = if example == 1 { 100 } else { 1000 };
                (spec, full_scale_pair_count(&spec), 2000, samples, 100_000)
            }
        };
        Ok(Self {
            example,
            system,
            spec,
            pairs,
            epochs,
            train_ialpha,
            uq_ialpha,
            x0: StateVec::new(x0),
            steps,
            samples,
            gl_points,
            sup_samples,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub scale: Scale,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub svg: bool,
    /// Overrides of the case sizes, mainly for quick smoke runs.
    pub pairs: Option<usize>,
    pub epochs: Option<usize>,
    /// Replaces every selected case's initial state (dimensions must match).
    pub x0: Option<Vec<f64>>,
}

impl BenchOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            scale: Scale::Desk,
            seed: 0,
            out_dir: out_dir.into(),
            svg: false,
            pairs: None,
            epochs: None,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseReport {
    pub example: u8,
    pub metrics: Vec<Metric>,
    pub notes: Vec<String>,
    pub wall_seconds: f64,
}

impl CaseReport {
    pub fn passed(&self) -> bool {
        self.metrics.iter().all(|m| m.passed() != Some(false))
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| FlowError::io(path, e))
}

/// Horizon label for metric names, free of accumulated rounding.
pub fn time_tag(t: f64) -> String {
    format!("{}", (t * 1e6).round() / 1e6)
}

fn max_until(times: &[f64], values: &[f64], t_max: f64) -> f64 {
    times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t <= t_max + 1e-9)
        .fold(0.0, |m, (_, v)| m.max(*v))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim("rank correlation samples", a.len(), b.len())?;
    if a.len() < 2 {
        return Err(FlowError::invalid("rank correlation needs at least 2 samples"));
    }
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}

fn analytic_ex1_stats(times: &[f64]) -> StatSeries {
    let (mean, var) = times
        .iter()
        .map(|&t| {
            let (m, v) = analytic_mean_var_ex1(t);
            (StateVec::new(vec![m]), StateVec::new(vec![v]))
        })
        .unzip();
    StatSeries {
        times: times.to_vec(),
        mean,
        var,
    }
}

fn bound_table(
    case: &BenchCase,
    lipschitz: f64,
    sup_error: f64,
    ct: f64,
    errs: &ErrorSeries,
    mean_err: &[f64],
    var_err: &[f64],
) -> String {
    let mut out = String::from("n,C,mean_bound,var_bound,linf_error,mean_error,var_error\n");
    let mut ns: Vec<usize> = [1, 10, 100, case.steps].into_iter().filter(|&n| n <= case.steps).collect();
    ns.dedup();
    for n in ns {
        let inp = BoundInputs {
            n,
            lipschitz,
            delta: DEFAULT_MAX_LAG,
            sup_error,
            ct,
            ..BoundInputs::default()
        };
        let (c, mb, vb) = match (composition_factor(n, lipschitz, DEFAULT_MAX_LAG), mean_var_bounds(&inp)) {
            (Ok(c), Ok((m, v))) => (fmt_f64(c), fmt_f64(m), fmt_f64(v)),
            _ => ("overflow".into(), "overflow".into(), "overflow".into()),
        };
        let _ = writeln!(
            out,
            "{n},{c},{mb},{vb},{},{},{}",
            fmt_f64(errs.linf[n]),
            fmt_f64(mean_err[n]),
            fmt_f64(var_err[n])
        );
    }
    out
}

/// Runs one case and writes its CSV (and optional SVG) artifacts.
pub fn run_case(case: &BenchCase, opts: &BenchOptions) -> Result<CaseReport> {
    let started = Instant::now();
    let ex = case.example;
    let def = SystemDef::new(case.system);
    let out = &opts.out_dir;
    fs::create_dir_all(out).map_err(|e| FlowError::io(out, e))?;
    let mut metrics = Vec::new();
    let mut notes = Vec::new();
    let x0 = match &opts.x0 {
        Some(v) => {
            check_dim("initial state override", def.d, v.len())?;
            StateVec::new(v.clone())
        }
        None => case.x0.clone(),
    };
    if ex == 2 {
        notes.push(format!(
            "initial state ({}, {}); the text uses (0, 1) and the figure caption (0, -1)",
            x0[0], x0[1]
        ));
    }

    // data and training
    let pairs = opts.pairs.unwrap_or(case.pairs);
    let epochs = opts.epochs.unwrap_or(case.epochs);
    let mut gen = GenConfig::for_system(case.system, pairs, opts.seed);
    gen.ialpha = case.train_ialpha.clone();
    log::info!("example {ex}: generating {pairs} pairs");
    let ds = generate_pairs(&gen)?;
    let root = Rng::new(opts.seed);
    let net = Network::init(case.spec, &mut root.substream("init"))?;
    let cfg = TrainConfig {
        epochs,
        seed: opts.seed,
        log_every: (epochs / 10).max(1),
        ..TrainConfig::default()
    };
    log::info!(
        "example {ex}: training ({}, {}) for {epochs} epochs",
        case.spec.hidden_layers,
        case.spec.width
    );
    let (net, report) = train(net, &ds, &cfg)?;
    write_loss_history(&report, out.join(format!("ex{ex}_loss.csv")))?;
    save_model(&net, out.join(format!("ex{ex}_model.json")))?;
    metrics.push(if ex == 4 {
        Metric::at_most("final_loss", report.final_loss, 1e-4)
    } else {
        Metric::info("final_loss", report.final_loss)
    });
    metrics.push(Metric::info("train_seconds", report.wall_seconds));

    // sampled trajectories against the oracle
    let sched = DeltaSchedule::uniform(DEFAULT_MAX_LAG, case.steps)?;
    let times = sched.times();
    let horizon = *times.last().expect("nonempty schedule");
    let tag = time_tag(horizon);
    let mut eval = root.substream("eval");
    let cases: Vec<(StateVec, ParamVec)> = (0..case.samples)
        .map(|_| (x0.clone(), ParamVec::new(sample_uniform_box(&case.uq_ialpha, &mut eval))))
        .collect();
    let preds = predict_many(&net, &cases, &sched)?;
    let refs: Vec<Trajectory> = cases
        .iter()
        .map(|(x, a)| reference_trajectory(&def, x, a, &sched))
        .collect::<Result<_>>()?;
    let errs = error_metrics(&preds, &refs)?;
    write(&out.join(format!("ex{ex}_traj_error.csv")), &errs.to_csv())?;
    let linf_name = format!("traj_linf_max_t{tag}");
    metrics.push(match ex {
        1 => Metric::at_most(&linf_name, errs.max_linf(), 5e-2),
        3 => Metric::at_most(&linf_name, errs.max_linf(), 1.5e-1),
        _ => Metric::info(&linf_name, errs.max_linf()),
    });
    metrics.push(Metric::info(&format!("traj_l2_max_t{tag}"), errs.max_l2()));

    // uncertainty quantification
    let rule = box_rule(&case.uq_ialpha, case.gl_points)?;
    let node_preds: Vec<Trajectory> = rule
        .nodes
        .par_iter()
        .map(|a| predict(&net, &x0, a, &sched))
        .collect::<Result<_>>()?;
    let stats = weighted_statistics(&node_preds, &rule.weights)?;
    let ref_nodes: Vec<Trajectory> = rule
        .nodes
        .iter()
        .map(|a| reference_trajectory(&def, &x0, a, &sched))
        .collect::<Result<_>>()?;
    let reference = if ex == 1 && x0[0] == 1.0 {
        notes.push("mean and variance compared with the closed form".into());
        analytic_ex1_stats(&times)
    } else {
        reference_statistics(&def, &x0, &rule, &times)?
    };
    let (mean_err, var_err) = stats.errors_against(&reference)?;
    write(&out.join(format!("ex{ex}_uq.csv")), &stats.to_csv(Some(&reference))?)?;
    let (mean_window, mean_limit, var_limit) = match ex {
        1 => (horizon, Some(1e-2), None),
        2 => (horizon, Some(1e-2), Some(1e-3)),
        3 => (12.5, Some(5e-2), None),
        _ => (horizon, None, None),
    };
    let m_val = max_until(&times, &mean_err, mean_window);
    let m_name = format!("uq_mean_err_max_t{}", time_tag(mean_window));
    metrics.push(match mean_limit {
        Some(l) => Metric::at_most(&m_name, m_val, l),
        None => Metric::info(&m_name, m_val),
    });
    let v_val = max_until(&times, &var_err, horizon);
    let v_name = format!("uq_var_err_max_t{tag}");
    metrics.push(match var_limit {
        Some(l) => Metric::at_most(&v_name, v_val, l),
        None => Metric::info(&v_name, v_val),
    });

    // bound table
    let grid = if ex == 4 { 6 } else { 9 };
    let lipschitz = lipschitz_estimate(&def, &def.default_ix, &case.uq_ialpha, grid)?;
    let sup = empirical_sup_error(
        &net,
        &def,
        &SupDomain {
            ix: def.default_ix.clone(),
            ialpha: case.train_ialpha.clone(),
            idelta: BoxDomain::interval(0.0, DEFAULT_MAX_LAG)?,
        },
        case.sup_samples,
        &root.substream("sup"),
    )?;
    let ct = solution_bound(&ref_nodes);
    metrics.push(Metric::info("lipschitz", lipschitz));
    metrics.push(Metric::info("sup_error", sup.value));
    write(
        &out.join(format!("ex{ex}_bounds.csv")),
        &bound_table(case, lipschitz, sup.value, ct, &errs, &mean_err, &var_err),
    )?;

    if ex == 4 {
        let excursion = preds
            .iter()
            .chain(&node_preds)
            .flat_map(|t| t.states.iter())
            .flat_map(|s| s.iter())
            .fold(0.0f64, |m, &v| m.max(-v).max(v - 1.0));
        metrics.push(Metric::at_most("state_box_excursion", excursion, 0.05));

        let (rho, stationarity, csv) = response_sweep(&net, &def, &x0)?;
        write(&out.join("ex4_response.csv"), &csv)?;
        metrics.push(Metric::at_least("response_spearman", rho, 0.95));
        metrics.push(Metric::info("response_stationarity", stationarity));
    }

    if opts.svg {
        write(
            &out.join(format!("ex{ex}_traj_error.svg")),
            &svg_chart(
                &format!("Example {ex}: trajectory error"),
                &times,
                &[("linf", &errs.linf), ("l2", &errs.l2)],
                true,
            ),
        )?;
        let m: Vec<f64> = stats.mean.iter().map(|v| v[0]).collect();
        let r: Vec<f64> = reference.mean.iter().map(|v| v[0]).collect();
        write(
            &out.join(format!("ex{ex}_uq_mean.svg")),
            &svg_chart(&format!("Example {ex}: mean of x_1"), &times, &[("model", &m), ("reference", &r)], false),
        )?;
    }

    let wall = started.elapsed().as_secs_f64();
    metrics.push(Metric::info("wall_seconds", wall));
    Ok(CaseReport {
        example: ex,
        metrics,
        notes,
        wall_seconds: wall,
    })
}

/// Steady-state `e_3` versus `I` from the model and the oracle, nominal
/// constants, `EX4_SWEEP_STEPS` steps of 0.1. Returns the rank correlation,
/// the largest `|e(t_2000) - e(t_1900)|_inf` of the model, and the CSV.
pub fn response_sweep(net: &Network, def: &SystemDef, x0: &StateVec) -> Result<(f64, f64, String)> {
    let sched = DeltaSchedule::uniform(DEFAULT_MAX_LAG, EX4_SWEEP_STEPS)?;
    let (lo, hi) = CascadeParams::INPUT_RANGE;
    let mut model = Vec::with_capacity(EX4_SWEEP_POINTS);
    let mut oracle = Vec::with_capacity(EX4_SWEEP_POINTS);
    let mut stationarity = 0.0f64;
    let mut csv = String::from("I,model_e3,reference_e3,model_drift\n");
    for k in 0..EX4_SWEEP_POINTS {
        let input = lo + (hi - lo) * k as f64 / (EX4_SWEEP_POINTS - 1) as f64;
        let alpha = CascadeParams::nominal(input).to_param_vec();
        let p = predict(net, x0, &alpha, &sched)?;
        let r = reference_trajectory(def, x0, &alpha, &sched)?;
        let last = &p.states[EX4_SWEEP_STEPS];
        let before = &p.states[EX4_SWEEP_STEPS - 100];
        let drift = last.iter().zip(before.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        stationarity = stationarity.max(drift);
        model.push(last[2]);
        oracle.push(r.states[EX4_SWEEP_STEPS][2]);
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fmt_f64(input),
            fmt_f64(last[2]),
            fmt_f64(oracle[k]),
            fmt_f64(drift)
        );
    }
    Ok((spearman(&model, &oracle)?, stationarity, csv))
}

/// Runs the selected examples in order and writes `summary.csv`.
pub fn run_bench(examples: &[u8], opts: &BenchOptions) -> Result<Vec<CaseReport>> {
    let mut reports = Vec::new();
    for &ex in examples {
        let case = BenchCase::new(ex, opts.scale)?;
        reports.push(run_case(&case, opts)?);
    }
    write(&opts.out_dir.join("summary.csv"), &summary_csv(&reports))?;
    Ok(reports)
}

/// CSV `example,metric,value,limit,pass` (`limit` prefixed by `<=` or `>=`).
pub fn summary_csv(reports: &[CaseReport]) -> String {
    let mut out = String::from("example,metric,value,limit,pass\n");
    for r in reports {
        for m in &r.metrics {
            // timings vary run to run and stay out of the reproducible summary
            if m.name.ends_with("seconds") {
                continue;
            }
            let limit = match m.check {
                Some(Check::AtMost(l)) => format!("<={l:e}"),
                Some(Check::AtLeast(l)) => format!(">={l}"),
                None => String::new(),
            };
            let pass = match m.passed() {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "",
            };
            let _ = writeln!(out, "{},{},{},{limit},{pass}", r.example, m.name, fmt_f64(m.value));
        }
    }
    out
}

/// Human-readable report for the terminal.
pub fn format_reports(reports: &[CaseReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(
            out,
            "example {} [{}] ({:.1} s)",
            r.example,
            if r.passed() { "pass" } else { "FAIL" },
            r.wall_seconds
        );
        for m in &r.metrics {
            let status = match (m.passed(), m.check) {
                (Some(p), Some(Check::AtMost(l))) => format!("{} (<= {l:e})", if p { "ok" } else { "FAIL" }),
                (Some(p), Some(Check::AtLeast(l))) => format!("{} (>= {l})", if p { "ok" } else { "FAIL" }),
                _ => String::new(),
            };
            let _ = writeln!(out, "  {:<28} {:>12.4e}  {status}", m.name, m.value);
        }
        for n in &r.notes {
            let _ = writeln!(out, "  note: {n}");
        }
    }
    out
}

/// Minimal SVG line chart; `log_y` plots `log10` of positive values.
pub fn svg_chart(title: &str, x: &[f64], series: &[(&str, &[f64])], log_y: bool) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"];
    let tr = |v: f64| if log_y { v.max(1e-300).log10() } else { v };
    let ys: Vec<f64> = series.iter().flat_map(|(_, s)| s.iter().map(|&v| tr(v))).collect();
    let (ymin, ymax) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (xmin, xmax) = (x.first().copied().unwrap_or(0.0), x.last().copied().unwrap_or(1.0));
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let px = |v: f64| PAD + (v - xmin) / span(xmin, xmax) * (W - 2.0 * PAD);
    let py = |v: f64| H - PAD - (tr(v) - ymin) / span(ymin, ymax) * (H - 2.0 * PAD);

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n",
        W / 2.0,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    );
    let ylab = |v: f64| if log_y { format!("1e{v:.1}") } else { format!("{v:.3}") };
    let _ = writeln!(out, "<text x=\"5\" y=\"{}\">{}</text>", H - PAD, ylab(ymin));
    let _ = writeln!(out, "<text x=\"5\" y=\"{}\">{}</text>", PAD + 4.0, ylab(ymax));
    let _ = writeln!(out, "<text x=\"{PAD}\" y=\"{}\">t = {xmin}</text>", H - PAD + 20.0);
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">t = {xmax}</text>",
        W - PAD,
        H - PAD + 20.0
    );
    for (k, (name, s)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = x.iter().zip(s.iter()).map(|(&a, &b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>",
            W - PAD - 80.0,
            PAD + 16.0 * k as f64
        );
    }
    out.push_str("</svg>\n");
    out
}
