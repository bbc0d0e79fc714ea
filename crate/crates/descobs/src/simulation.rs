//! Time-domain validation of a synthesized observer.
//!
//! The reduced plant is a constrained ODE: the dynamic rows give
//! E11 x' = A11 x + B11 u, the algebraic rows pin A21 x = -B21 u. Stacking
//! the dynamic rows with the differentiated constraint gives G x' = rhs(t)
//! with G = [E11; A21]; the minimum-norm consistent velocity is the
//! pseudoinverse solve, plus an optional free motion in the null space of
//! G. The observer runs off [u; y] alongside the plant in one integrator so
//! both see identical stage values.

use crate::error::{Error, Result};
use crate::model::{Signal, TolerancePolicy};
use crate::numkit::{pinv, Matrix, Vector};
use crate::reduction::ReducedSystem;
use crate::synthesis::ObserverRealization;

/// Inputs for one run. `x_k0` is the plant start in reduced coordinates
/// (projected onto the constraint first unless `project_ic` is off), `w0`
/// the observer start, `u` the driving input, `free_mode` an optional
/// velocity component in the constraint null space.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub t_end: f64,
    pub dt: f64,
    pub x_k0: Vector,
    pub w0: Vector,
    pub u: Signal,
    pub free_mode: Option<Signal>,
    pub project_ic: bool,
}

impl SimulationConfig {
    fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.dt.is_finite()) {
            return Err(Error::NonFinite);
        }
        if self.t_end <= 0.0 || self.dt <= 0.0 || self.dt > self.t_end {
            return Err(Error::DimensionError(format!(
                "need 0 < dt <= t_end, got dt = {}, t_end = {}",
                self.dt, self.t_end
            )));
        }
        Ok(())
    }
}

/// Moves `x0` onto the constraint set A21 x = -B21 u0 by the minimum-norm
/// correction. Errors with `Infeasible` when the constraint cannot be met
/// at all (forcing outside the range of A21).
pub fn project_initial_condition(
    red: &ReducedSystem,
    x0: &Vector,
    u0: &Vector,
    tol: &TolerancePolicy,
) -> Result<Vector> {
    tol.validate()?;
    if x0.len() != red.n_k() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, reduced dimension is {}",
            x0.len(),
            red.n_k()
        )));
    }
    let forcing = &red.b21 * u0;
    let violation = &red.a21 * x0 + &forcing;
    let a21_pinv = pinv(&red.a21, tol.rank_tol_override)?;
    let projected = x0 - &a21_pinv * &violation;
    let residual = (&red.a21 * &projected + &forcing).norm();
    if residual > tol.residual_tol * (1.0 + forcing.norm() + x0.norm()) {
        return Err(Error::Infeasible { residual });
    }
    Ok(projected)
}

/// Precomputed constrained-velocity solver for the reduced plant.
pub struct PlantStepper {
    g: Matrix,
    g_pinv: Matrix,
    null_projector: Matrix,
    a11: Matrix,
    b11: Matrix,
    b21: Matrix,
    consistency_tol: f64,
}

impl PlantStepper {
    pub fn new(red: &ReducedSystem, tol: &TolerancePolicy) -> Result<Self> {
        tol.validate()?;
        let g = crate::numkit::vstack(&[&red.e11, &red.a21]);
        let g_pinv = pinv(&g, tol.rank_tol_override)?;
        let n_k = red.n_k();
        let null_projector = Matrix::identity(n_k, n_k) - &g_pinv * &g;
        Ok(Self {
            g,
            g_pinv,
            null_projector,
            a11: red.a11.clone(),
            b11: red.b11.clone(),
            b21: red.b21.clone(),
            consistency_tol: tol.residual_tol,
        })
    }

    /// Velocity at (t, x) for evaluated input u, input rate du, and free
    /// component v (ignored when empty). Errors when the stacked right side
    /// leaves the range of G: the forcing then contradicts the constraint.
    pub fn derivative(
        &self,
        t: f64,
        x: &Vector,
        u: &Vector,
        du: &Vector,
        v: Option<&Vector>,
    ) -> Result<Vector> {
        let top = &self.a11 * x + &self.b11 * u;
        let bottom = -(&self.b21 * du);
        let mut rhs = Vector::zeros(top.len() + bottom.len());
        rhs.rows_mut(0, top.len()).copy_from(&top);
        rhs.rows_mut(top.len(), bottom.len()).copy_from(&bottom);

        let sol = &self.g_pinv * &rhs;
        let residual = (&self.g * &sol - &rhs).norm();
        if residual > self.consistency_tol * (1.0 + rhs.norm()) {
            return Err(Error::InconsistentDynamics { t, residual });
        }
        match v {
            Some(v) => Ok(sol + &self.null_projector * v),
            None => Ok(sol),
        }
    }
}

/// Sampled trajectories of one run, one entry per time step (step 0 is the
/// initial state).
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    pub x_k: Vec<Vector>,
    pub w: Vec<Vector>,
    pub z: Vec<Vector>,
    pub zhat: Vec<Vector>,
    pub e: Vec<Vector>,
    pub constraint_residual: Vec<f64>,
    /// Error stays within 1e-4 * (1 + initial error) over the last tenth of
    /// the horizon.
    pub converged: bool,
    /// All constraint residuals stayed below 1e-6 * (1 + state scale).
    pub constraint_ok: bool,
    pub max_error: f64,
    pub final_error: f64,
}

/// Observer start that zeroes the internal error when the plant starts at
/// `x_k0`: w = T E11 x.
pub fn matched_initial_w(red: &ReducedSystem, obs: &ObserverRealization, x_k0: &Vector) -> Vector {
    &obs.certificates.t * (&red.e11 * x_k0)
}

/// Integrates plant and observer together with classic fourth-order
/// Runge-Kutta at fixed step. The true functional is z = K11 x, the
/// estimate zhat = R w + M [u; y].
pub fn simulate(
    red: &ReducedSystem,
    obs: &ObserverRealization,
    cfg: &SimulationConfig,
    tol: &TolerancePolicy,
) -> Result<SimulationResult> {
    cfg.validate()?;
    tol.validate()?;
    let n_k = red.n_k();
    let q = obs.q;
    let l = red.b11.ncols();
    let p = red.ck.nrows();
    if cfg.u.dimension() != l {
        return Err(Error::DimensionMismatch(format!(
            "input signal has {} channels, plant takes {}",
            cfg.u.dimension(),
            l
        )));
    }
    if obs.input_dim() != l + p {
        return Err(Error::DimensionMismatch(format!(
            "observer expects a driving signal of length {}, system provides {}",
            obs.input_dim(),
            l + p
        )));
    }
    if cfg.w0.len() != q {
        return Err(Error::DimensionMismatch(format!(
            "observer start has length {}, order is {}",
            cfg.w0.len(),
            q
        )));
    }
    if let Some(v) = &cfg.free_mode {
        if v.dimension() != n_k {
            return Err(Error::DimensionMismatch(format!(
                "free mode has {} channels, null space lives in dimension {}",
                v.dimension(),
                n_k
            )));
        }
    }

    let stepper = PlantStepper::new(red, tol)?;
    let x0 = if cfg.project_ic {
        project_initial_condition(red, &cfg.x_k0, &cfg.u.eval(0.0), tol)?
    } else {
        if cfg.x_k0.len() != n_k {
            return Err(Error::DimensionMismatch(format!(
                "initial state has length {}, reduced dimension is {}",
                cfg.x_k0.len(),
                n_k
            )));
        }
        cfg.x_k0.clone()
    };

    let mut state = Vector::zeros(n_k + q);
    state.rows_mut(0, n_k).copy_from(&x0);
    state.rows_mut(n_k, q).copy_from(&cfg.w0);

    let deriv = |t: f64, s: &Vector| -> Result<Vector> {
        let x = s.rows(0, n_k).into_owned();
        let w = s.rows(n_k, q).into_owned();
        let u = cfg.u.eval(t);
        let du = cfg.u.derivative(t);
        let v = cfg.free_mode.as_ref().map(|f| f.eval(t));
        let xdot = stepper.derivative(t, &x, &u, &du, v.as_ref())?;
        let y = &red.ck * &x;
        let mut uy = Vector::zeros(l + p);
        uy.rows_mut(0, l).copy_from(&u);
        uy.rows_mut(l, p).copy_from(&y);
        let wdot = &obs.n * &w + &obs.h * &uy;
        let mut out = Vector::zeros(n_k + q);
        out.rows_mut(0, n_k).copy_from(&xdot);
        out.rows_mut(n_k, q).copy_from(&wdot);
        Ok(out)
    };

    let n_steps = (cfg.t_end / cfg.dt).round().max(1.0) as usize;
    let dt = cfg.t_end / n_steps as f64;

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut xs = Vec::with_capacity(n_steps + 1);
    let mut ws = Vec::with_capacity(n_steps + 1);
    let mut zs = Vec::with_capacity(n_steps + 1);
    let mut zhats = Vec::with_capacity(n_steps + 1);
    let mut es = Vec::with_capacity(n_steps + 1);
    let mut residuals = Vec::with_capacity(n_steps + 1);

    let record = |t: f64,
                  s: &Vector,
                  out: &mut Vec<f64>,
                  xs: &mut Vec<Vector>,
                  ws: &mut Vec<Vector>,
                  zs: &mut Vec<Vector>,
                  zhats: &mut Vec<Vector>,
                  es: &mut Vec<Vector>,
                  residuals: &mut Vec<f64>| {
        let x = s.rows(0, n_k).into_owned();
        let w = s.rows(n_k, q).into_owned();
        let u = cfg.u.eval(t);
        let y = &red.ck * &x;
        let mut uy = Vector::zeros(l + p);
        uy.rows_mut(0, l).copy_from(&u);
        uy.rows_mut(l, p).copy_from(&y);
        let z = &red.k11 * &x;
        let zhat = &obs.r * &w + &obs.m * &uy;
        let e = &zhat - &z;
        let cres = (&red.a21 * &x + &red.b21 * &u).norm();
        out.push(t);
        xs.push(x);
        ws.push(w);
        zs.push(z);
        zhats.push(zhat);
        es.push(e);
        residuals.push(cres);
    };

    record(
        0.0,
        &state,
        &mut times,
        &mut xs,
        &mut ws,
        &mut zs,
        &mut zhats,
        &mut es,
        &mut residuals,
    );
    for step in 0..n_steps {
        let t = step as f64 * dt;
        let k1 = deriv(t, &state)?;
        let k2 = deriv(t + dt / 2.0, &(&state + &k1 * (dt / 2.0)))?;
        let k3 = deriv(t + dt / 2.0, &(&state + &k2 * (dt / 2.0)))?;
        let k4 = deriv(t + dt, &(&state + &k3 * dt))?;
        state += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence(format!(
                "state became non-finite at t = {:.6}",
                t + dt
            )));
        }
        record(
            t + dt,
            &state,
            &mut times,
            &mut xs,
            &mut ws,
            &mut zs,
            &mut zhats,
            &mut es,
            &mut residuals,
        );
    }

    let e0 = es[0].norm();
    let tail_from = 0.9 * cfg.t_end;
    let converged = times
        .iter()
        .zip(&es)
        .filter(|(t, _)| **t >= tail_from)
        .all(|(_, e)| e.norm() <= 1e-4 * (1.0 + e0));
    let state_scale = xs.iter().map(|x| x.norm()).fold(0.0_f64, f64::max);
    let constraint_ok = residuals.iter().all(|&r| r <= 1e-6 * (1.0 + state_scale));
    let max_error = es.iter().map(|e| e.norm()).fold(0.0_f64, f64::max);
    let final_error = es.last().map(|e| e.norm()).unwrap_or(0.0);

    Ok(SimulationResult {
        times,
        x_k: xs,
        w: ws,
        z: zs,
        zhat: zhats,
        e: es,
        constraint_residual: residuals,
        converged,
        constraint_ok,
        max_error,
        final_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DescriptorSystem, ScalarSignal};
    use crate::synthesis::{synthesize_with_details, SynthesisDetails};
    use approx::assert_relative_eq;
    use nalgebra::Complex;

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    /// Reduced-form plant with closed-form solution: the constraint pins
    /// x1 = sin t (through u = sin t) and the dynamic row gives x2' = -x2.
    fn closed_form_plant() -> ReducedSystem {
        ReducedSystem {
            e11: Matrix::from_row_slice(1, 2, &[0.0, 1.0]),
            a11: Matrix::from_row_slice(1, 2, &[0.0, -1.0]),
            a21: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            b11: Matrix::from_row_slice(1, 1, &[0.0]),
            b21: Matrix::from_row_slice(1, 1, &[-1.0]),
            ck: Matrix::from_row_slice(1, 2, &[0.0, 1.0]),
            k11: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            c11: Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        }
    }

    fn sine_input() -> Signal {
        Signal::new(vec![ScalarSignal::Sine { omega: 1.0 }])
    }

    fn integrate_plant(red: &ReducedSystem, x0: Vector, u: &Signal, t_end: f64, dt: f64) -> Vector {
        let stepper = PlantStepper::new(red, &tol()).unwrap();
        let steps = (t_end / dt).round() as usize;
        let h = t_end / steps as f64;
        let mut x = x0;
        for s in 0..steps {
            let t = s as f64 * h;
            let f = |tt: f64, xx: &Vector| {
                stepper
                    .derivative(tt, xx, &u.eval(tt), &u.derivative(tt), None)
                    .unwrap()
            };
            let k1 = f(t, &x);
            let k2 = f(t + h / 2.0, &(&x + &k1 * (h / 2.0)));
            let k3 = f(t + h / 2.0, &(&x + &k2 * (h / 2.0)));
            let k4 = f(t + h, &(&x + &k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        x
    }

    #[test]
    fn projection_moves_onto_constraint_minimally() {
        let red = closed_form_plant();
        let x0 = Vector::from_vec(vec![0.3, 2.0]);
        let u0 = Vector::from_vec(vec![0.0]);
        let proj = project_initial_condition(&red, &x0, &u0, &tol()).unwrap();
        assert_relative_eq!(proj[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(proj[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_rejects_unremovable_violation() {
        let red = ReducedSystem {
            e11: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            a11: Matrix::from_row_slice(1, 2, &[0.0, 0.0]),
            a21: Matrix::from_row_slice(1, 2, &[0.0, 0.0]),
            b11: Matrix::from_row_slice(1, 1, &[0.0]),
            b21: Matrix::from_row_slice(1, 1, &[1.0]),
            ck: Matrix::zeros(0, 2),
            k11: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            c11: Matrix::zeros(1, 2),
        };
        let x0 = Vector::from_vec(vec![0.0, 0.0]);
        let u0 = Vector::from_vec(vec![1.0]);
        assert!(matches!(
            project_initial_condition(&red, &x0, &u0, &tol()),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn plant_matches_closed_form_solution() {
        let red = closed_form_plant();
        let u = sine_input();
        let t_end = 2.0;
        let x = integrate_plant(&red, Vector::from_vec(vec![0.0, 2.0]), &u, t_end, 1e-3);
        assert_relative_eq!(x[0], t_end.sin(), epsilon = 1e-9);
        assert_relative_eq!(x[1], 2.0 * (-t_end).exp(), epsilon = 1e-9);
    }

    #[test]
    fn integrator_shows_fourth_order_error_decay() {
        let red = closed_form_plant();
        let u = sine_input();
        let t_end = 1.0_f64;
        let exact = Vector::from_vec(vec![t_end.sin(), 2.0 * (-t_end).exp()]);
        let err = |dt: f64| {
            (integrate_plant(&red, Vector::from_vec(vec![0.0, 2.0]), &u, t_end, dt) - &exact).norm()
        };
        let ratio = err(0.02) / err(0.01);
        assert!(
            (8.0..24.0).contains(&ratio),
            "halving dt should cut error ~16x, got {ratio}"
        );
    }

    #[test]
    fn free_motion_stays_in_constraint_null_space() {
        // G = [1 0]: x1 is pinned dynamically, x2 moves only through v.
        let red = ReducedSystem {
            e11: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            a11: Matrix::from_row_slice(1, 2, &[-1.0, 0.0]),
            a21: Matrix::zeros(0, 2),
            b11: Matrix::zeros(1, 0),
            b21: Matrix::zeros(0, 0),
            ck: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            k11: Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            c11: Matrix::zeros(0, 2),
        };
        let stepper = PlantStepper::new(&red, &tol()).unwrap();
        let x = Vector::from_vec(vec![1.0, 0.5]);
        let v = Vector::from_vec(vec![7.0, 3.0]);
        let d = stepper
            .derivative(0.0, &x, &Vector::zeros(0), &Vector::zeros(0), Some(&v))
            .unwrap();
        assert_relative_eq!(d[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(d[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn conflicting_forcing_is_reported() {
        // Same row twice with incompatible right sides once u moves.
        let red = ReducedSystem {
            e11: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            a11: Matrix::from_row_slice(1, 2, &[0.0, 0.0]),
            a21: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            b11: Matrix::from_row_slice(1, 1, &[0.0]),
            b21: Matrix::from_row_slice(1, 1, &[1.0]),
            ck: Matrix::zeros(0, 2),
            k11: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            c11: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
        };
        let stepper = PlantStepper::new(&red, &tol()).unwrap();
        let u = sine_input();
        let x = Vector::from_vec(vec![0.0, 0.0]);
        let r = stepper.derivative(0.0, &x, &u.eval(0.0), &u.derivative(0.0), None);
        assert!(matches!(r, Err(Error::InconsistentDynamics { .. })));
    }

    fn first_order_details() -> SynthesisDetails {
        let sys = DescriptorSystem::new(
            None,
            Matrix::from_row_slice(
                4,
                4,
                &[
                    1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                ],
            ),
            Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 1.0, -1.0, 1.0])),
            Matrix::from_row_slice(4, 1, &[0.0, 0.0, 1.0, 0.0]),
            Matrix::from_row_slice(1, 4, &[0.0, 1.0, 0.0, 0.0]),
            Matrix::from_row_slice(1, 4, &[1.0, 0.0, 1.0, 1.0]),
        )
        .unwrap();
        synthesize_with_details(&sys, &tol(), Some(&[Complex::new(-1.0, 0.0)])).unwrap()
    }

    #[test]
    fn matched_initialization_keeps_error_at_solver_level() {
        let d = first_order_details();
        let x0 = Vector::from_vec(vec![0.0, 2.0]);
        let w0 = matched_initial_w(&d.reduced, &d.observer, &x0);
        let cfg = SimulationConfig {
            t_end: 5.0,
            dt: 1e-3,
            x_k0: x0,
            w0,
            u: sine_input(),
            free_mode: None,
            project_ic: true,
        };
        let res = simulate(&d.reduced, &d.observer, &cfg, &tol()).unwrap();
        assert!(
            res.max_error <= 1e-6,
            "matched start drifted to {}",
            res.max_error
        );
        assert!(res.constraint_ok);
    }

    #[test]
    fn mismatched_initialization_decays_like_observer_dynamics() {
        let d = first_order_details();
        let x0 = Vector::from_vec(vec![0.0, 2.0]);
        let w0 = Vector::from_vec(vec![3.0]);
        let cfg = SimulationConfig {
            t_end: 12.0,
            dt: 1e-3,
            x_k0: x0.clone(),
            w0: w0.clone(),
            u: sine_input(),
            free_mode: None,
            project_ic: true,
        };
        let res = simulate(&d.reduced, &d.observer, &cfg, &tol()).unwrap();
        assert!(
            res.converged,
            "error should die out: final {}",
            res.final_error
        );

        // e(t) = R exp(Nt) e1(0) with e1 = w - T E11 x, up to solver error
        let e1_0 = &w0 - matched_initial_w(&d.reduced, &d.observer, &res.x_k[0]);
        for &probe in &[1.0_f64, 2.0, 4.0] {
            let idx = res
                .times
                .iter()
                .position(|&t| (t - probe).abs() < 1e-9)
                .expect("probe time on grid");
            let expn = (&d.observer.n * probe).exp();
            let predicted = &d.observer.r * &expn * &e1_0;
            let actual = &res.e[idx];
            assert!(
                (actual - &predicted).norm() <= 1e-6 * (1.0 + predicted.norm()),
                "at t = {probe}: predicted {predicted:?}, got {actual:?}"
            );
        }
    }

    #[test]
    fn simulate_validates_signal_dimensions() {
        let d = first_order_details();
        let cfg = SimulationConfig {
            t_end: 1.0,
            dt: 1e-2,
            x_k0: Vector::zeros(d.reduced.n_k()),
            w0: Vector::zeros(d.observer.q),
            u: Signal::zero(3),
            free_mode: None,
            project_ic: true,
        };
        assert!(matches!(
            simulate(&d.reduced, &d.observer, &cfg, &tol()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn static_realization_tracks_exactly() {
        let sys = DescriptorSystem::new(
            None,
            Matrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            Matrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            Matrix::from_row_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]),
            Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            Matrix::from_row_slice(2, 3, &[-1.0, 1.0, 0.0, 0.0, 1.0, 0.0]),
        )
        .unwrap();
        let d = synthesize_with_details(&sys, &tol(), None).unwrap();
        assert_eq!(d.observer.q, 0);
        let cfg = SimulationConfig {
            t_end: 3.0,
            dt: 1e-3,
            x_k0: Vector::from_vec(vec![1.0, -0.5]),
            w0: Vector::zeros(0),
            u: Signal::new(vec![
                ScalarSignal::Sine { omega: 1.0 },
                ScalarSignal::Exponential { rate: -0.5 },
            ]),
            free_mode: None,
            project_ic: true,
        };
        let res = simulate(&d.reduced, &d.observer, &cfg, &tol()).unwrap();
        assert!(
            res.max_error <= 1e-9,
            "static read-off max error {}",
            res.max_error
        );
    }

    #[test]
    fn free_mode_integrates_to_its_antiderivative() {
        // x2 is unconstrained; with v = (0, t) it must track t^2/2.
        let red = ReducedSystem {
            e11: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            a11: Matrix::from_row_slice(1, 2, &[-1.0, 0.0]),
            a21: Matrix::zeros(0, 2),
            b11: Matrix::zeros(1, 0),
            b21: Matrix::zeros(0, 0),
            ck: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            k11: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            c11: Matrix::zeros(0, 2),
        };
        let stepper = PlantStepper::new(&red, &tol()).unwrap();
        let t_end = 2.0_f64;
        let dt = 1e-3;
        let steps = (t_end / dt).round() as usize;
        let v = Signal::new(vec![
            ScalarSignal::Constant { value: 0.0 },
            ScalarSignal::Polynomial {
                coeffs: vec![0.0, 1.0],
            },
        ]);
        let mut x = Vector::from_vec(vec![1.0, 0.0]);
        let f = |tt: f64, xx: &Vector| {
            let vv = v.eval(tt);
            stepper
                .derivative(tt, xx, &Vector::zeros(0), &Vector::zeros(0), Some(&vv))
                .unwrap()
        };
        for s in 0..steps {
            let t = s as f64 * dt;
            let k1 = f(t, &x);
            let k2 = f(t + dt / 2.0, &(&x + &k1 * (dt / 2.0)));
            let k3 = f(t + dt / 2.0, &(&x + &k2 * (dt / 2.0)));
            let k4 = f(t + dt, &(&x + &k3 * dt));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        assert_relative_eq!(x[0], (-t_end).exp(), epsilon = 1e-9);
        assert_relative_eq!(x[1], t_end * t_end / 2.0, epsilon = 1e-9);
    }
}
