//! Closed-loop simulation, trace recording and post-run analysis.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::control::{desired_bodies, lyapunov_body, lyapunov_joint, vpf, ControlOutput, Controller};
use crate::error::{Error, Result};
use crate::inertia::{bregman_divergence, estimate_ratio_eigenvalues, phi_inverse_upper, to_pseudo, PseudoInertia};
use crate::kindyn;
use crate::liegroup::{transform_twist, Twist, Wrench};
use crate::model::{perturb_inertias, ChainModel, Config, ControllerKind};

/// One control step of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub theta: Vec<f64>,
    pub theta_dot: Vec<f64>,
    pub tau: Vec<f64>,
    /// Per-body log error, six entries per body.
    pub eta: Vec<Twist>,
    pub v_err: Vec<Twist>,
    pub psi: Vec<f64>,
    /// Virtual power flow `p_i` at the child side of joint i.
    pub vpf: Vec<f64>,
    /// Virtual power flow `q_i` at the parent side of joint i.
    pub vpf_parent: Vec<f64>,
    /// Chain sum of the body and joint exchange terms.
    pub vpf_sum: f64,
    /// `sum |p_i| + |q_i|`, the scale the sum is judged against.
    pub vpf_scale: f64,
    /// `sum_i r_i^T (F_r_i - F_i)` with `r_i` the joint-velocity residual
    /// vector; the power that joint-level consistency fails to account for.
    pub coupling_defect: f64,
    /// Total Lyapunov function of the body and joint modules.
    pub lyapunov: f64,
    /// `lyapunov` plus the parameter divergences.
    pub v_t: f64,
    pub d_h: Vec<f64>,
    pub lambda_min: Vec<f64>,
    /// `lambda_max(Lhat^{-1} L)` per body.
    pub lambda_ratio_max: Vec<f64>,
    /// Frobenius norm of each pseudo-inertia estimate.
    pub estimate_norm: Vec<f64>,
    pub ee_position_error: f64,
    pub ee_orientation_error: f64,
    /// Largest joint-velocity least-squares residual.
    pub residual_max: f64,
    /// Largest body twist norm.
    pub body_speed_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub dof: usize,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn header(n: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        let per_joint = ["theta", "theta_dot", "tau"];
        for name in per_joint {
            h.extend((1..=n).map(|i| format!("{name}_{i}")));
        }
        for name in ["eta", "v_err"] {
            for i in 1..=n {
                h.extend((1..=6).map(|k| format!("{name}_{i}_{k}")));
            }
        }
        for name in ["psi", "vpf", "vpf_parent", "d_h", "lambda_min", "lambda_ratio_max", "estimate_norm"] {
            h.extend((1..=n).map(|i| format!("{name}_{i}")));
        }
        h.extend(
            [
                "vpf_sum",
                "vpf_scale",
                "coupling_defect",
                "lyapunov",
                "v_t",
                "ee_position_error",
                "ee_orientation_error",
                "residual_max",
                "body_speed_max",
            ]
            .map(String::from),
        );
        h
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Self::header(self.dof).join(","))?;
        for r in &self.rows {
            let mut vals: Vec<f64> = vec![r.t];
            vals.extend(&r.theta);
            vals.extend(&r.theta_dot);
            vals.extend(&r.tau);
            for set in [&r.eta, &r.v_err] {
                for x in set {
                    vals.extend(x.as_vector().iter());
                }
            }
            for set in [&r.psi, &r.vpf, &r.vpf_parent, &r.d_h, &r.lambda_min, &r.lambda_ratio_max, &r.estimate_norm] {
                vals.extend(set.iter());
            }
            vals.extend([
                r.vpf_sum,
                r.vpf_scale,
                r.coupling_defect,
                r.lyapunov,
                r.v_t,
                r.ee_position_error,
                r.ee_orientation_error,
                r.residual_max,
                r.body_speed_max,
            ]);
            let line: Vec<String> = vals.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn lyapunov(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.lyapunov).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().all(|r| {
            r.theta.iter().chain(&r.theta_dot).chain(&r.tau).all(|x| x.is_finite())
                && r.lyapunov.is_finite()
                && r.v_t.is_finite()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub controller: String,
    pub steps: usize,
    pub final_position_error: f64,
    pub final_orientation_error: f64,
    pub final_eta_max: f64,
    pub decay_rate: f64,
    pub decay_r2: f64,
    /// Largest `|telescoped VPF sum| / sum |p_i|` over the run.
    pub max_vpf_sum_relative: f64,
    pub min_lambda_min: f64,
    pub max_lambda_ratio: f64,
    pub sup_body_speed: f64,
    pub torque_rms: f64,
    pub v_t0: f64,
    pub max_residual: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: Trace,
    pub summary: RunSummary,
}

/// Least-squares fit of `log V(t) = c - rate t` over `[0, t90]`, `t90` the
/// first time `V` drops to a tenth of `V(0)`. Returns `(rate, R^2)`.
pub fn fit_decay(times: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(Error::InvalidArgument("decay fit needs at least three samples".into()));
    }
    let v0 = values[0];
    if !(v0 > 0.0) {
        return Err(Error::InvalidArgument("decay fit needs V(0) > 0".into()));
    }
    let end = values
        .iter()
        .position(|&v| v <= 0.1 * v0)
        .map(|k| k + 1)
        .unwrap_or(values.len())
        .max(3);
    let (t, v) = (&times[..end], &values[..end]);
    if v.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument("decay fit needs V > 0 over the window".into()));
    }
    let y: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let m = t.len() as f64;
    let tm = t.iter().sum::<f64>() / m;
    let ym = y.iter().sum::<f64>() / m;
    let sxy: f64 = t.iter().zip(&y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - ym).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok((-slope, r2))
}

/// Result of [`estimate_bound_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// `bound - observed`.
    pub margin: f64,
    /// `phi^{-1}(max v_T / gamma)`, upper branch.
    pub bound: f64,
    pub observed_max: f64,
    /// Largest ratio inside the initial transient window.
    pub transient_max: f64,
    /// Largest ratio after it.
    pub after_transient_max: f64,
}

/// Fraction of `V(0)` below which the closed loop counts as settled.
pub const SETTLE_FRACTION: f64 = 1e-3;

/// Certifies that `lambda_max(Lhat^{-1} L)` stays bounded.
///
/// Since `d_h = gamma sum phi(lambda_j)` is part of `v_T`, every eigenvalue
/// obeys `phi(lambda) <= v_T / gamma`, giving the bound
/// `phi^{-1}(max v_T / gamma)`. The transient lasts until the total Lyapunov
/// function first falls below `SETTLE_FRACTION * V(0)`; afterwards the ratio
/// must not exceed its transient maximum.
pub fn estimate_bound_check(trace: &Trace, gamma: f64) -> BoundCheck {
    let max_vt = trace.rows.iter().map(|r| r.v_t).fold(0.0, f64::max);
    let bound = phi_inverse_upper(max_vt / gamma);
    let row_max = |r: &TraceRow| r.lambda_ratio_max.iter().cloned().fold(f64::MIN, f64::max);
    let v0 = trace.rows[0].lyapunov;
    let split = trace
        .rows
        .iter()
        .position(|r| r.lyapunov <= SETTLE_FRACTION * v0)
        .map_or(trace.rows.len(), |k| k + 1);
    let transient_max = trace.rows[..split].iter().map(row_max).fold(f64::MIN, f64::max);
    let after_transient_max = trace.rows[split..].iter().map(row_max).fold(f64::MIN, f64::max);
    let observed_max = transient_max.max(after_transient_max);
    let margin = bound - observed_max;
    BoundCheck {
        holds: margin > 0.0 && after_transient_max <= transient_max,
        margin,
        bound,
        observed_max,
        transient_max,
        after_transient_max,
    }
}

/// Builds the controller a scenario asks for, with the perturbed model.
pub fn build_controller(config: &Config) -> Result<Controller> {
    let s = &config.scenario;
    let nominal = perturb_inertias(&config.model, s.perturbation.fraction, s.perturbation.seed)?;
    Controller::new(
        s.controller,
        nominal,
        config.gains.clone(),
        s.control_period(),
        s.derivative_cutoff_hz,
        s.bernoulli_order,
    )
}

fn rk4_step(model: &ChainModel, q: &DVector<f64>, qd: &DVector<f64>, tau: &[f64], h: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let tip = Wrench::zero();
    let f = |q: &DVector<f64>, qd: &DVector<f64>| kindyn::forward_dynamics(model, q.as_slice(), qd.as_slice(), tau, &tip);
    let a1 = f(q, qd)?;
    let (q2, qd2) = (q + qd * (h / 2.0), qd + &a1 * (h / 2.0));
    let a2 = f(&q2, &qd2)?;
    let (q3, qd3) = (q + &qd2 * (h / 2.0), qd + &a2 * (h / 2.0));
    let a3 = f(&q3, &qd3)?;
    let (q4, qd4) = (q + &qd3 * h, qd + &a3 * h);
    let a4 = f(&q4, &qd4)?;
    let q_next = q + (qd + &qd2 * 2.0 + &qd3 * 2.0 + &qd4) * (h / 6.0);
    let qd_next = qd + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
    Ok((q_next, qd_next))
}

/// Integrates the plant with a torque that is held over each interval of
/// length `dt`, using `substeps` RK4 steps per interval.
pub fn integrate(
    model: &ChainModel,
    theta: &DVector<f64>,
    theta_dot: &DVector<f64>,
    tau: &[f64],
    dt: f64,
    substeps: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let h = dt / substeps as f64;
    let (mut q, mut qd) = (theta.clone(), theta_dot.clone());
    for _ in 0..substeps {
        (q, qd) = rk4_step(model, &q, &qd, tau, h)?;
    }
    Ok((q, qd))
}

struct Plant<'a> {
    model: &'a ChainModel,
    truth: Vec<PseudoInertia>,
}

impl Plant<'_> {
    fn diagnostics(&self, t: f64, theta: &[f64], theta_dot: &[f64], ctrl: &Controller, out: &ControlOutput, desired_ee: &crate::liegroup::Pose) -> Result<TraceRow> {
        let model = self.model;
        let n = model.dof();
        let tip = Wrench::zero();
        let qdd = kindyn::forward_dynamics(model, theta, theta_dot, out.tau.as_slice(), &tip)?;
        let acc = kindyn::body_accelerations_with(
            model,
            &out.locals,
            &out.velocities,
            theta_dot,
            qdd.as_slice(),
            kindyn::gravity_base_accel(model),
        );
        let f = kindyn::rne_wrenches(model, &out.locals, &out.velocities, &acc, &tip);

        // Interface powers. `p_i` pairs body i's velocity error with its wrench
        // error; `q_i` pairs the parent's velocity error, moved into frame i,
        // with the same wrench error. Body i exchanges `p_i - q_{i+1}` and
        // joint i exchanges `q_i - p_i`, so the chain sum telescopes to
        // `q_1 - q_{n+1}`, zero for a fixed base and a free tip.
        let has_required = ctrl.kind != ControllerKind::BaselinePd;
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n + 1];
        let mut coupling_defect = 0.0;
        if has_required {
            for i in 0..n {
                let s_i = out.v_req[i] - out.velocities[i];
                let df = out.f_req[i] - f[i];
                p[i] = vpf(&out.v_req[i], &out.velocities[i], &out.f_req[i], &f[i]);
                let s_parent = if i == 0 {
                    Twist::zero()
                } else {
                    transform_twist(&out.locals[i].inverse(), &(out.v_req[i - 1] - out.velocities[i - 1]))
                };
                q[i] = df.power(&s_parent);
                let xi = model.bodies[i].screw_axis;
                let r = s_i - s_parent - xi * (out.theta_dot_req[i] - theta_dot[i]);
                coupling_defect += df.power(&r);
            }
        }
        let vpf_sum: f64 = (0..n).map(|i| (p[i] - q[i + 1]) + (q[i] - p[i])).sum();
        let vpf_scale: f64 = p.iter().chain(&q).map(|x| x.abs()).sum();

        let mut lyapunov = 0.0;
        for i in 0..n {
            let b = &model.bodies[i];
            lyapunov += lyapunov_body(&out.v_req[i], &out.velocities[i], &b.inertia, out.errors[i].psi);
            lyapunov += lyapunov_joint(out.theta_dot_req[i], theta_dot[i], b.rotor_inertia);
        }
        let gamma = ctrl.gains.adaptation.gamma;
        let estimates = ctrl.estimates();
        let d_h: Vec<f64> = (0..n).map(|i| bregman_divergence(&self.truth[i], &estimates[i], gamma)).collect();
        let lambda_min: Vec<f64> = estimates.iter().map(|e| e.min_eigenvalue()).collect();
        let lambda_ratio_max: Vec<f64> = (0..n)
            .map(|i| estimate_ratio_eigenvalues(&self.truth[i], &estimates[i]).max())
            .collect();

        let ee = out.poses[n - 1] * model.tool;
        let rel = desired_ee.inverse() * ee;
        Ok(TraceRow {
            t,
            theta: theta.to_vec(),
            theta_dot: theta_dot.to_vec(),
            tau: out.tau.iter().cloned().collect(),
            eta: out.errors.iter().map(|e| e.eta).collect(),
            v_err: out.errors.iter().map(|e| e.v_err).collect(),
            psi: out.errors.iter().map(|e| e.psi).collect(),
            vpf: p,
            vpf_parent: q[..n].to_vec(),
            vpf_sum,
            coupling_defect,
            vpf_scale,
            lyapunov,
            v_t: lyapunov + d_h.iter().sum::<f64>(),
            d_h,
            lambda_min,
            lambda_ratio_max,
            estimate_norm: estimates.iter().map(|e| e.matrix().norm()).collect(),
            ee_position_error: (ee.translation - desired_ee.translation).norm(),
            ee_orientation_error: rel.rotation.angle(),
            residual_max: out.residuals.iter().cloned().fold(0.0, f64::max),
            body_speed_max: out.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max),
        })
    }
}

/// Adaptive controller whose estimates start at the plant's true inertias
/// and never move. Its torques coincide with MGC on the exact model.
pub fn frozen_adaptive_controller(config: &Config) -> Result<Controller> {
    let mut c = Controller::new(
        ControllerKind::Amgc,
        config.model.clone(),
        config.gains.clone(),
        config.scenario.control_period(),
        config.scenario.derivative_cutoff_hz,
        config.scenario.bernoulli_order,
    )?;
    c.adaptation_enabled = false;
    Ok(c)
}

/// Rotation error (rad) above which a run is flagged at startup.
const LARGE_INITIAL_ROTATION: f64 = std::f64::consts::FRAC_PI_2;

/// Runs a scenario with the controller it specifies.
pub fn run(config: &Config) -> Result<RunOutput> {
    run_with(config, build_controller(config)?)
}

/// Runs a scenario with a caller-supplied controller.
pub fn run_with(config: &Config, mut controller: Controller) -> Result<RunOutput> {
    let model = &config.model;
    let s = &config.scenario;
    let n = model.dof();
    let dt = s.control_period();
    let steps = s.steps();
    let truth = model.bodies.iter().map(|b| to_pseudo(&b.inertia)).collect::<Result<Vec<_>>>()?;
    let plant = Plant { model, truth };

    let mut theta = DVector::from_column_slice(&s.initial_theta);
    let mut theta_dot = DVector::from_column_slice(&s.initial_theta_dot);
    let mut rows = Vec::with_capacity(steps + 1);
    log::info!("{}: {} bodies, {} steps, controller {}", config.name, n, steps, s.controller.label());
    for k in 0..=steps {
        let t = k as f64 * dt;
        let (mut qd_des, mut vd_des, mut ad_des) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for (j, traj) in s.desired.iter().enumerate() {
            (qd_des[j], vd_des[j], ad_des[j]) = traj.eval(t);
        }
        let desired = desired_bodies(&controller.model, &qd_des, &vd_des, &ad_des);
        let numerical = |e: Error| match e {
            Error::Numerical { .. } => e,
            other => Error::Numerical {
                step: k,
                time: t,
                message: other.to_string(),
            },
        };
        let out = controller
            .compute(theta.as_slice(), theta_dot.as_slice(), &desired)
            .map_err(numerical)?;
        let desired_ee = desired.poses[n - 1] * model.tool;
        let row = plant
            .diagnostics(t, theta.as_slice(), theta_dot.as_slice(), &controller, &out, &desired_ee)
            .map_err(numerical)?;
        if k == 0 {
            log::debug!("initial v_T = {:.6e}", row.v_t);
            let worst = row.eta.iter().map(|e| e.angular().norm()).fold(0.0, f64::max);
            if worst > LARGE_INITIAL_ROTATION {
                log::warn!("large initial rotation error {worst:.3} rad; convergence is only local");
            }
        }
        rows.push(row);
        if k == steps {
            break;
        }
        controller.commit(&out).map_err(numerical)?;
        (theta, theta_dot) = integrate(model, &theta, &theta_dot, out.tau.as_slice(), dt, s.substeps).map_err(numerical)?;
        if !theta.iter().chain(theta_dot.iter()).all(|x| x.is_finite()) {
            return Err(Error::Numerical {
                step: k,
                time: t,
                message: format!("non-finite state after step; last valid time {t:.4} s"),
            });
        }
    }
    let trace = Trace { dof: n, rows };
    let summary = summarize(config, &trace);
    log::info!("{}: final position error {:.3e} m", config.name, summary.final_position_error);
    Ok(RunOutput { trace, summary })
}

fn summarize(config: &Config, trace: &Trace) -> RunSummary {
    let last = trace.rows.last().expect("trace has rows");
    let (decay_rate, decay_r2) = fit_decay(&trace.times(), &trace.lyapunov()).unwrap_or((f64::NAN, f64::NAN));
    let torque_sq: f64 = trace.rows.iter().flat_map(|r| r.tau.iter()).map(|x| x * x).sum();
    let torque_count = (trace.rows.len() * trace.dof) as f64;
    RunSummary {
        name: config.name.clone(),
        controller: config.scenario.controller.label().into(),
        steps: trace.rows.len() - 1,
        final_position_error: last.ee_position_error,
        final_orientation_error: last.ee_orientation_error,
        final_eta_max: last.eta.iter().map(|e| e.norm()).fold(0.0, f64::max),
        decay_rate,
        decay_r2,
        max_vpf_sum_relative: trace
            .rows
            .iter()
            .map(|r| r.vpf_sum.abs() / r.vpf_scale.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max),
        min_lambda_min: trace
            .rows
            .iter()
            .flat_map(|r| r.lambda_min.iter().cloned())
            .fold(f64::INFINITY, f64::min),
        max_lambda_ratio: trace
            .rows
            .iter()
            .flat_map(|r| r.lambda_ratio_max.iter().cloned())
            .fold(f64::MIN, f64::max),
        sup_body_speed: trace.rows.iter().map(|r| r.body_speed_max).fold(0.0, f64::max),
        torque_rms: (torque_sq / torque_count).sqrt(),
        v_t0: trace.rows[0].v_t,
        max_residual: trace.rows.iter().map(|r| r.residual_max).fold(0.0, f64::max),
    }
}

/// One row of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    #[serde(flatten)]
    pub summary: RunSummary,
}

/// Runs every scenario in parallel and tabulates the summaries. Repeated
/// labels get a numeric suffix.
pub fn compare(configs: &[Config]) -> Result<Vec<ComparisonRow>> {
    let results: Vec<Result<RunOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || run(c))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let mut seen = std::collections::HashMap::new();
    let mut rows = Vec::with_capacity(configs.len());
    for (c, r) in configs.iter().zip(results) {
        let summary = r?.summary;
        let base = c.scenario.controller.label().to_string();
        let count = seen.entry(base.clone()).or_insert(0usize);
        *count += 1;
        let label = if *count == 1 { base } else { format!("{base}-{count}") };
        rows.push(ComparisonRow { label, summary });
    }
    Ok(rows)
}

pub const COMPARISON_COLUMNS: &[&str] = &[
    "label",
    "name",
    "controller",
    "final_position_error",
    "final_orientation_error",
    "final_eta_max",
    "decay_rate",
    "decay_r2",
    "torque_rms",
    "max_vpf_sum_relative",
    "min_lambda_min",
    "max_lambda_ratio",
    "sup_body_speed",
];

pub fn write_comparison_csv(rows: &[ComparisonRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{}", COMPARISON_COLUMNS.join(","))?;
    for r in rows {
        let s = &r.summary;
        writeln!(
            w,
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.label,
            s.name,
            s.controller,
            s.final_position_error,
            s.final_orientation_error,
            s.final_eta_max,
            s.decay_rate,
            s.decay_r2,
            s.torque_rms,
            s.max_vpf_sum_relative,
            s.min_lambda_min,
            s.max_lambda_ratio,
            s.sup_body_speed
        )?;
    }
    Ok(())
}

/// Power-balance residual `|dKE/dt - (theta_dot^T tau + P_g)|` at one state,
/// with `dKE/dt` from a central difference along the motion, together with
/// the scale it should be compared against.
pub fn power_balance_residual(model: &ChainModel, theta: &[f64], theta_dot: &[f64], tau: &[f64], h: f64) -> Result<(f64, f64)> {
    let qdd = kindyn::forward_dynamics(model, theta, theta_dot, tau, &Wrench::zero())?;
    let shift = |s: f64| {
        let q: Vec<f64> = theta.iter().zip(theta_dot).map(|(a, b)| a + s * b).collect();
        let qd: Vec<f64> = theta_dot.iter().zip(qdd.iter()).map(|(a, b)| a + s * b).collect();
        kindyn::kinetic_energy(model, &q, &qd)
    };
    let dke = (shift(h) - shift(-h)) / (2.0 * h);
    let input: f64 = theta_dot.iter().zip(tau).map(|(a, b)| a * b).sum();
    let pg = kindyn::gravity_power(model, theta, theta_dot);
    let scale = input.abs() + pg.abs() + dke.abs();
    Ok(((dke - input - pg).abs(), scale))
}
