use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use chainbar::analysis::{bound_report, scaled_consistency_check, BoundReport};
use chainbar::controller::{ControlLaw, Mode};
use chainbar::riccati::{alpha_bound, solve_are, AreProblem, DEFAULT_TOL};
use chainbar::sim::{simulate_with, Direct};
use chainbar::trace::Trace;

use crate::config::{Resolved, RunConfig, ScenarioPlant};
use crate::CliError;

/// Relative residual accepted by the scaled-time check.
pub const SCALED_TOL: f64 = 1e-2;

/// Per-run numbers written to `<label>.report.toml` and the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    pub t_last: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_v_after_t1: Option<f64>,
    pub max_lambda: f64,
    /// Max of `Λ` over the second half of the horizon.
    pub max_lambda_final_half: f64,
    pub final_state: Vec<f64>,
    /// Physical angle at the end: rotor angle for the torsional plant,
    /// pendulum angle for the pendulum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_angle: Option<f64>,
    /// Pendulum only: largest `|θ_p|` over the second half.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_angle: Option<f64>,
    /// Pendulum only: samples after `T1` where the voltage limit clipped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saturated_after_t1: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
struct Report<'a> {
    summary: &'a Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounds: Option<&'a BoundReport>,
}

/// Result of one simulation: the trace (possibly a prefix) and the error
/// that stopped it, if any.
pub struct Outcome {
    pub trace: Trace,
    pub summary: Summary,
    pub error: Option<chainbar::Error>,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        self.error
            .clone()
            .map_or(0, |e| CliError::Core(e).exit_code())
    }
}

pub fn simulate_resolved(r: &Resolved) -> Outcome {
    let plant = r.plant.model();
    let result = match &r.plant {
        ScenarioPlant::Furuta(fp) => {
            simulate_with(plant, &r.law, &r.x0, &r.sim, r.initial_gain, fp)
        }
        _ => simulate_with(plant, &r.law, &r.x0, &r.sim, r.initial_gain, &Direct),
    };
    let (mut trace, error) = match result {
        Ok(t) => (t, None),
        Err(f) => (*f.trace, Some(f.error)),
    };
    trace.meta.label = Some(r.label.clone());
    let summary = summarize(r, &trace, error.as_ref());
    Outcome {
        trace,
        summary,
        error,
    }
}

fn summarize(r: &Resolved, trace: &Trace, error: Option<&chainbar::Error>) -> Summary {
    let half = 0.5 * r.sim.t_end;
    let last = trace.rows.last();
    let after = trace.barrier_rows();
    let sup_v = (!after.is_empty()).then(|| after.iter().map(|row| row.v).fold(0.0, f64::max));
    let max_lambda = trace.rows.iter().map(|row| row.lambda).fold(0.0, f64::max);
    let max_lambda_final_half = trace
        .rows
        .iter()
        .filter(|row| row.t >= half)
        .map(|row| row.lambda)
        .fold(0.0, f64::max);
    let mut s = Summary {
        label: r.label.clone(),
        status: error.map_or_else(|| "ok".to_string(), |e| e.to_string()),
        t1: trace.t1(),
        t_last: last.map_or(0.0, |row| row.t),
        sup_v_after_t1: sup_v,
        max_lambda,
        max_lambda_final_half,
        final_state: last.map_or_else(Vec::new, |row| row.x.clone()),
        final_angle: None,
        steady_angle: None,
        saturated_after_t1: None,
    };
    let Some(last) = last else { return s };
    match &r.plant {
        ScenarioPlant::Torsional(tp) => {
            let (theta, _) = tp
                .reconstructor
                .physical_state(last.t, &DVector::from_column_slice(&last.x));
            s.final_angle = Some(theta);
        }
        ScenarioPlant::Furuta(fp) => {
            let angle = |x: &[f64]| fp.to_physical(&DVector::from_column_slice(x))[1];
            s.final_angle = Some(angle(&last.x));
            s.steady_angle = Some(
                trace
                    .rows
                    .iter()
                    .filter(|row| row.t >= half)
                    .map(|row| angle(&row.x).abs())
                    .fold(0.0, f64::max),
            );
            s.saturated_after_t1 = Some(
                after
                    .iter()
                    .filter(|row| fp.saturated(&DVector::from_column_slice(&row.x), row.u))
                    .count(),
            );
        }
        ScenarioPlant::RawChain(_) => {}
    }
    s
}

fn bounds_for(cfg: &RunConfig, r: &Resolved) -> Option<BoundReport> {
    let inputs = cfg.bound_inputs(&r.plant, &r.x0).ok()?;
    bound_report(r.law.are(), inputs).ok()
}

fn out_dir(cfg: &RunConfig, override_dir: Option<&Path>) -> PathBuf {
    override_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.as_ref().map(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_artifacts(
    dir: &Path,
    outcome: &mut Outcome,
    bounds: Option<BoundReport>,
) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    outcome.trace.meta.bounds = bounds;
    let csv = dir.join(format!("{}.csv", outcome.summary.label));
    outcome.trace.save(&csv)?;
    let report = Report {
        summary: &outcome.summary,
        bounds: bounds.as_ref(),
    };
    let text = toml::to_string(&report).map_err(|e| CliError::Config(e.to_string()))?;
    fs::write(
        dir.join(format!("{}.report.toml", outcome.summary.label)),
        text,
    )?;
    Ok(csv)
}

/// `run <config>`: one simulation, trace + sidecar + report written even
/// when the run stops early.
pub fn run(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome, CliError> {
    let r = cfg.resolve()?;
    let mut outcome = simulate_resolved(&r);
    let bounds = bounds_for(cfg, &r);
    write_artifacts(&out_dir(cfg, out), &mut outcome, bounds)?;
    Ok(outcome)
}

/// `sweep <config>`: every grid point in parallel, files written afterwards
/// by this thread only.
pub fn sweep(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<Outcome>, CliError> {
    let points = cfg.expand_sweep();
    // Fail on config and design errors before running anything.
    let resolved = points
        .iter()
        .map(RunConfig::resolve)
        .collect::<Result<Vec<_>, _>>()?;
    let mut outcomes: Vec<(Outcome, Option<BoundReport>)> = resolved
        .par_iter()
        .zip(points.par_iter())
        .map(|(r, c)| (simulate_resolved(r), bounds_for(c, r)))
        .collect();
    let dir = out_dir(cfg, out);
    for (o, b) in &mut outcomes {
        write_artifacts(&dir, o, *b)?;
    }
    let outcomes: Vec<Outcome> = outcomes.into_iter().map(|(o, _)| o).collect();
    fs::write(dir.join("sweep.csv"), sweep_csv(&outcomes))?;
    Ok(outcomes)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"))
}

pub fn sweep_table(outcomes: &[Outcome]) -> String {
    let mut s = String::new();
    let w = outcomes
        .iter()
        .map(|o| o.summary.label.len())
        .max()
        .unwrap_or(5)
        .max(5);
    let _ = writeln!(
        s,
        "{:<w$}  {:>13}  {:>13}  {:>13}  {:>13}  status",
        "label", "T1", "sup V>=T1", "max Lambda", "max L 2nd half"
    );
    for o in outcomes {
        let m = &o.summary;
        let status = if o.error.is_some() { "FAILED" } else { "ok" };
        let _ = writeln!(
            s,
            "{:<w$}  {:>13}  {:>13}  {:>13.6e}  {:>13.6e}  {status}",
            m.label,
            opt(m.t1),
            opt(m.sup_v_after_t1),
            m.max_lambda,
            m.max_lambda_final_half
        );
    }
    s
}

fn sweep_csv(outcomes: &[Outcome]) -> String {
    let mut s = String::from("label,t1,sup_v_after_t1,max_lambda,max_lambda_final_half,status\n");
    let f = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:?}"));
    for o in outcomes {
        let m = &o.summary;
        let _ = writeln!(
            s,
            "{},{},{},{:?},{:?},{}",
            m.label,
            f(m.t1),
            f(m.sup_v_after_t1),
            m.max_lambda,
            m.max_lambda_final_half,
            if o.error.is_some() { "failed" } else { "ok" }
        );
    }
    s
}

/// `bounds <config>`. Does not enforce the alpha check, which is one of
/// the things being reported.
pub fn bounds(cfg: &RunConfig) -> Result<BoundReport, CliError> {
    cfg.validate()?;
    let plant = cfg.plant()?;
    let are = cfg.solve_are()?;
    let x0 = match &plant {
        ScenarioPlant::Furuta(fp) => fp.initial_state(cfg.initial.theta_p0.expect("validated")),
        _ => DVector::from_column_slice(cfg.initial.x0.as_deref().expect("validated")),
    };
    let inputs = cfg.bound_inputs(&plant, &x0)?;
    Ok(bound_report(&are, inputs)?)
}

/// `are --n --gamma [--q-diag]`.
pub fn are(n: usize, gamma: f64, q_diag: Option<&[f64]>) -> Result<String, CliError> {
    let q = q_diag.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
    if q.len() != n {
        return Err(CliError::Config(format!(
            "--q-diag has {} entries, expected {n}",
            q.len()
        )));
    }
    let sol = solve_are(&AreProblem::diagonal(gamma, &q)?, DEFAULT_TOL)?;
    let mut s = String::new();
    let _ = writeln!(s, "P =");
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| format!("{:>16.9e}", sol.p[(i, j)]))
            .collect();
        let _ = writeln!(s, "  {}", row.join(" "));
    }
    let _ = writeln!(s, "residual = {:.3e}", sol.residual_norm);
    let _ = writeln!(s, "lambda_min(P) = {:.9e}", sol.lambda_min_p);
    let _ = writeln!(s, "lambda_max(P) = {:.9e}", sol.lambda_max_p);
    match alpha_bound(&sol, &sol.problem.q, n) {
        Ok(a) => writeln!(s, "alpha_max = {a:.6e}"),
        Err(_) => writeln!(s, "alpha_max = n/a"),
    }
    .ok();
    Ok(s)
}

/// One line of `check` output.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: &'static str,
    /// `None` when the check does not apply to this trace.
    pub pass: Option<bool>,
    pub detail: String,
}

impl std::fmt::Display for CheckLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.pass {
            Some(true) => "ok",
            Some(false) => "FAIL",
            None => "skip",
        };
        write!(f, "{:<18} {:<4}  {}", self.name, tag, self.detail)
    }
}

fn line(name: &'static str, pass: bool, detail: String) -> CheckLine {
    CheckLine {
        name,
        pass: Some(pass),
        detail,
    }
}

fn skip(name: &'static str, detail: &str) -> CheckLine {
    CheckLine {
        name,
        pass: None,
        detail: detail.into(),
    }
}

/// `check <trace.csv>`: re-validates a stored trace against its sidecar.
pub fn check(path: &Path) -> Result<Vec<CheckLine>, CliError> {
    let trace = Trace::load(path)?;
    let mut out = Vec::new();

    let bad = trace.rows.iter().find(|r| {
        !(r.t.is_finite()
            && r.u.is_finite()
            && r.v.is_finite()
            && r.lambda.is_finite()
            && r.x.iter().all(|v| v.is_finite()))
    });
    out.push(line(
        "finite",
        bad.is_none(),
        bad.map_or_else(
            || format!("{} rows", trace.rows.len()),
            |r| format!("non-finite value at t = {}", r.t),
        ),
    ));

    let ControlLaw::Combined(params) = &trace.meta.law else {
        for name in ["switch", "gain", "barrier", "scaled_time"] {
            out.push(skip(name, "fixed-gain law"));
        }
        return Ok(out);
    };
    let eps = params.epsilon;

    let first_inside = trace.rows.iter().find(|r| r.v <= 0.5 * eps).map(|r| r.t);
    let t1 = trace.t1();
    let modes_ok = trace
        .rows
        .iter()
        .all(|r| (r.mode == Mode::Barrier) == t1.is_some_and(|t1| r.t >= t1));
    let stride = trace.meta.config.record_stride;
    // With a stride the switch can fall between recorded rows.
    let switch_ok = modes_ok && (stride > 1 || first_inside == t1);
    out.push(line(
        "switch",
        switch_ok,
        format!(
            "T1 = {}, first V <= eps/2 at {}",
            opt(t1),
            opt(first_inside)
        ),
    ));

    let reach = trace.reaching_rows();
    let nondecreasing = reach.windows(2).all(|w| w[1].gain >= w[0].gain);
    let barrier = trace.barrier_rows();
    let frozen = barrier.windows(2).all(|w| w[1].gain == w[0].gain);
    out.push(line(
        "gain",
        nondecreasing && frozen,
        format!(
            "nondecreasing before T1: {nondecreasing}, frozen after: {frozen}, final {:.6e}",
            trace.rows.last().map_or(0.0, |r| r.gain)
        ),
    ));

    if barrier.is_empty() {
        out.push(skip("barrier", "no rows after T1"));
    } else {
        let vmax = barrier.iter().map(|r| r.v).fold(0.0, f64::max);
        out.push(line(
            "barrier",
            vmax < eps,
            format!("sup V after T1 = {vmax:.6e}, eps = {eps:.6e}"),
        ));
    }

    if stride != 1 {
        out.push(skip("scaled_time", "needs record_stride = 1"));
    } else {
        match scaled_consistency_check(&trace, params, &trace.meta.plant) {
            Ok(rep) => out.push(line(
                "scaled_time",
                rep.relative() <= SCALED_TOL,
                format!(
                    "relative residual {:.3e} over {} samples (tol {SCALED_TOL:e})",
                    rep.relative(),
                    rep.samples
                ),
            )),
            Err(chainbar::Error::InsufficientSamples { .. }) => {
                out.push(skip("scaled_time", "too few reaching samples"))
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}
