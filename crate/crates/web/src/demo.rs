use nalgebra::DVector;

use chainbar::controller::{ControlLaw, ControllerParams};
use chainbar::plant::{PerturbationSpec, PlantModel, Signal};
use chainbar::riccati::{alpha_bound, solve_are, AreProblem, AreSolution, DEFAULT_TOL};
use chainbar::scenarios::torsional::{torsional_error_plant, TorsionalParams};
use chainbar::sim::{simulate, SimConfig};
use chainbar::trace::Trace;

/// Points kept per series; the canvas has no use for more.
const MAX_POINTS: usize = 3000;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunData {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub reference: Vec<f64>,
    pub v: Vec<f64>,
    pub lambda: Vec<f64>,
    pub u: Vec<f64>,
    pub t1: Option<f64>,
    pub epsilon: f64,
    pub alpha_max: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreData {
    pub n: usize,
    pub p: Vec<f64>,
    pub residual: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub alpha_max: Option<f64>,
}

fn config(dt: f64, t_end: f64) -> Result<SimConfig, String> {
    if !(1e-5..=1e-2).contains(&dt) {
        return Err(format!("step {dt} outside [1e-5, 1e-2]"));
    }
    let mut c = SimConfig::euler(dt, t_end);
    c.record_stride = (c.steps() / MAX_POINTS).max(1);
    Ok(c)
}

fn solve(n: usize, gamma: f64) -> Result<AreSolution, String> {
    let problem = AreProblem::identity(n, gamma).map_err(|e| e.to_string())?;
    solve_are(&problem, DEFAULT_TOL).map_err(|e| e.to_string())
}

fn collect(
    trace: &Trace,
    status: String,
    epsilon: f64,
    alpha_max: f64,
    reference: impl Fn(f64) -> f64,
    y: impl Fn(f64, &[f64]) -> f64,
) -> RunData {
    let mut d = RunData {
        t1: trace.t1(),
        epsilon,
        alpha_max,
        status,
        ..RunData::default()
    };
    for r in &trace.rows {
        d.t.push(r.t);
        d.y.push(y(r.t, &r.x));
        d.reference.push(reference(r.t));
        d.v.push(r.v);
        d.lambda.push(r.lambda);
        d.u.push(r.u);
    }
    d
}

/// Torsional tracking of the default 0 to 10 rad reference over 15 s with
/// `γ = 0.1`, `T = 2`, `x0 = (5, 0)`. Any positive `α` is accepted so the
/// published gain set can be tried; compare with `alpha_max`.
pub fn torsional(epsilon: f64, alpha: f64, dt: f64) -> Result<RunData, String> {
    let params = TorsionalParams::default();
    let traj = TorsionalParams::default_trajectory();
    let tp = torsional_error_plant(&params, &traj).map_err(|e| e.to_string())?;
    let are = solve(2, 0.1)?;
    let amax = alpha_bound(&are, &are.problem.q, 2).map_err(|e| e.to_string())?;
    let p = ControllerParams::new_unchecked_alpha(alpha, 2.0, epsilon, are)
        .map_err(|e| e.to_string())?;
    let (trace, status) = match simulate(
        &tp.plant,
        &ControlLaw::Combined(p),
        &DVector::from_vec(vec![5.0, 0.0]),
        &config(dt, 15.0)?,
    ) {
        Ok(t) => (t, String::new()),
        Err(f) => (*f.trace, f.error.to_string()),
    };
    Ok(collect(
        &trace,
        status,
        epsilon,
        amax,
        |t| traj.eval(t).0,
        |t, x| x[0] + traj.eval(t).0,
    ))
}

/// Double integrator with `f = M cos 5t`, `δ_b = ½ sign(sin t)`, `γ = 1`
/// and `α` at 90% of its bound, started from `(x1, 0)`.
pub fn raw_chain(x1: f64, m: f64, epsilon: f64, t_final: f64) -> Result<RunData, String> {
    if m.is_nan() || m <= 0.0 {
        return Err(format!("M = {m} must be > 0"));
    }
    let pert = PerturbationSpec::new(
        Signal::cosine(m, 5.0),
        Signal::sign_of_sine(0.5, 1.0),
        m,
        0.5,
    )
    .map_err(|e| e.to_string())?;
    let plant = PlantModel::with_constant_b(2, 1.0, pert).map_err(|e| e.to_string())?;
    let are = solve(2, 1.0)?;
    let amax = alpha_bound(&are, &are.problem.q, 2).map_err(|e| e.to_string())?;
    let p = ControllerParams::new(0.9 * amax, t_final, epsilon, are).map_err(|e| e.to_string())?;
    let (trace, status) = match simulate(
        &plant,
        &ControlLaw::Combined(p),
        &DVector::from_vec(vec![x1, 0.0]),
        &config(1e-3, t_final + 4.0)?,
    ) {
        Ok(t) => (t, String::new()),
        Err(f) => (*f.trace, f.error.to_string()),
    };
    Ok(collect(&trace, status, epsilon, amax, |_| 0.0, |_, x| x[0]))
}

/// Riccati solution for `Q = I`.
pub fn riccati(n: usize, gamma: f64) -> Result<AreData, String> {
    if !(1..=10).contains(&n) {
        return Err(format!("n = {n} outside 1..=10"));
    }
    let sol = solve(n, gamma)?;
    let alpha_max = alpha_bound(&sol, &sol.problem.q, n).ok();
    Ok(AreData {
        n,
        p: sol.p.transpose().as_slice().to_vec(),
        residual: sol.residual_norm,
        lambda_min: sol.lambda_min_p,
        lambda_max: sol.lambda_max_p,
        alpha_max,
    })
}
