//! Time integration of the open- and closed-loop systems: one backward
//! Euler startup step followed by BDF2, with the low-rank feedback applied
//! through a Sherman-Morrison-Woodbury update around the banded
//! factorization.

use nalgebra::{DMatrix, DVector};

use crate::banded::RealPencilFactor;
use crate::error::{Error, Result};
use crate::fem::BlockSystem;
use crate::riccati::FeedbackGain;
use crate::sparse::{quadratic_form, CsrMatrix};

/// Discrete L2 norm sqrt(c' G c).
pub fn discrete_l2_norm(g_block: &CsrMatrix, coeffs: &[f64]) -> Result<f64> {
    if coeffs.len() != g_block.ncols() {
        return Err(Error::Dimension(format!(
            "norm: vector length {} vs matrix size {}",
            coeffs.len(),
            g_block.ncols()
        )));
    }
    Ok(quadratic_form(g_block, coeffs, coeffs).max(0.0).sqrt())
}

/// Discrete H1 norm sqrt(c' (G + K) c) for one scalar field.
pub fn discrete_h1_norm(g: &CsrMatrix, k: &CsrMatrix, coeffs: &[f64]) -> Result<f64> {
    if coeffs.len() != g.ncols() || coeffs.len() != k.ncols() {
        return Err(Error::Dimension("h1 norm: dimension mismatch".into()));
    }
    let v = quadratic_form(g, coeffs, coeffs) + quadratic_form(k, coeffs, coeffs);
    Ok(v.max(0.0).sqrt())
}

/// The operator advanced in time: open loop (A) or closed loop
/// (A - U V with U = B * left_factor, V = right_factor).
pub struct ClosedLoopOperator<'a> {
    pub system: &'a BlockSystem,
    pub low_rank: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl<'a> ClosedLoopOperator<'a> {
    pub fn open_loop(system: &'a BlockSystem) -> Self {
        ClosedLoopOperator { system, low_rank: None }
    }

    pub fn closed_loop(system: &'a BlockSystem, gain: &FeedbackGain) -> Self {
        let n2 = system.a.nrows();
        let k = gain.left_factor.ncols();
        // U = B * left_factor (columns through the sparse B)
        let mut u = DMatrix::zeros(n2, k);
        for col in 0..k {
            let lf_col: Vec<f64> = gain.left_factor.column(col).iter().copied().collect();
            let bu = system.b.matvec_alloc(&lf_col);
            for r in 0..n2 {
                u[(r, col)] = bu[r];
            }
        }
        ClosedLoopOperator { system, low_rank: Some((u, gain.right_factor.clone())) }
    }
}

/// Factorization of (coef*M - dt*A_cl) with the feedback folded in through
/// the Woodbury identity: only coef*M - dt*A is factored sparse.
type DenseLu = nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>;

struct ImplicitSolver {
    factor: RealPencilFactor,
    /// (W, capacitance LU, V) of the Woodbury update.
    woodbury: Option<(DMatrix<f64>, DenseLu, DMatrix<f64>)>,
}

impl ImplicitSolver {
    fn new(op: &ClosedLoopOperator, coef: f64, dt: f64) -> Result<ImplicitSolver> {
        let factor = op.system.factor_pencil::<f64>(-dt, coef)?;
        let woodbury = match &op.low_rank {
            None => None,
            Some((u, v)) => {
                let n2 = u.nrows();
                let k = u.ncols();
                let mut w = DMatrix::zeros(n2, k);
                for col in 0..k {
                    let ucol: Vec<f64> = u.column(col).iter().map(|x| dt * x).collect();
                    let sol = factor.solve(&ucol);
                    for r in 0..n2 {
                        w[(r, col)] = sol[r];
                    }
                }
                let cap = DMatrix::identity(k, k) + v * &w;
                let lu = nalgebra::linalg::LU::new(cap);
                Some((w, lu, v.clone()))
            }
        };
        Ok(ImplicitSolver { factor, woodbury })
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let x0 = self.factor.solve(rhs);
        match &self.woodbury {
            None => Ok(x0),
            Some((w, cap_lu, v)) => {
                let x0v = DVector::from_column_slice(&x0);
                let t = v * &x0v;
                let s = cap_lu
                    .solve(&t)
                    .ok_or_else(|| Error::Singular("Woodbury capacitance is singular".into()))?;
                let corr = w * s;
                Ok(x0.iter().zip(corr.iter()).map(|(a, b)| a - b).collect())
            }
        }
    }
}

/// One backward Euler step: solves (M - dt*A_cl) y1 = M y0.
pub fn be_first_step(op: &ClosedLoopOperator, y0: &[f64], dt: f64) -> Result<Vec<f64>> {
    if dt <= 0.0 {
        return Err(Error::Config("dt must be positive".into()));
    }
    let solver = ImplicitSolver::new(op, 1.0, dt)?;
    solver.solve(&op.system.m.matvec_alloc(y0))
}

/// One BDF2 step: solves (1.5*M - dt*A_cl) y_{n+2} = M (2 y_{n+1} - 0.5 y_n).
pub fn bdf2_step(op: &ClosedLoopOperator, y_n: &[f64], y_n1: &[f64], dt: f64) -> Result<Vec<f64>> {
    if dt <= 0.0 {
        return Err(Error::Config("dt must be positive".into()));
    }
    let solver = ImplicitSolver::new(op, 1.5, dt)?;
    let comb: Vec<f64> = y_n1.iter().zip(y_n).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
    solver.solve(&op.system.m.matvec_alloc(&comb))
}

#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    /// ||Y(t)||_M per step.
    pub state_energy: Vec<f64>,
    /// ||u(t)||_{G_O} per step (zeros for the open loop).
    pub control_energy: Vec<f64>,
    /// Full coefficient vectors at the requested checkpoint times (snapped
    /// to the nearest step).
    pub checkpoints: Vec<(f64, Vec<f64>)>,
    /// How many BDF2 system matrices were factored (one per run).
    pub bdf2_factorizations: usize,
}

impl TimeSeries {
    /// Checkpoint nearest to the requested time.
    pub fn checkpoint_at(&self, t: f64) -> Option<&(f64, Vec<f64>)> {
        self.checkpoints
            .iter()
            .min_by(|a, b| (a.0 - t).abs().partial_cmp(&(b.0 - t).abs()).unwrap())
    }
}

/// Advance the system from `y0` to `t_final`: one BE step, then BDF2 with
/// the same fixed dt. With a gain the control u = -K Y is evaluated at the
/// new time level.
pub fn simulate(
    system: &BlockSystem,
    gain: Option<&FeedbackGain>,
    y0: &[f64],
    dt: f64,
    t_final: f64,
    checkpoint_times: &[f64],
) -> Result<TimeSeries> {
    if dt <= 0.0 || t_final < dt {
        return Err(Error::Config("need dt > 0 and t_final >= dt".into()));
    }
    let n2 = system.a.nrows();
    if y0.len() != n2 {
        return Err(Error::Dimension(format!("y0 length {} vs 2n = {n2}", y0.len())));
    }
    let op = match gain {
        None => ClosedLoopOperator::open_loop(system),
        Some(g) => ClosedLoopOperator::closed_loop(system, g),
    };
    let n_steps = (t_final / dt).round().max(1.0) as usize;
    let mut checkpoint_steps: Vec<usize> = checkpoint_times
        .iter()
        .map(|&t| (t / dt).round().clamp(0.0, n_steps as f64) as usize)
        .collect();
    checkpoint_steps.sort_unstable();
    checkpoint_steps.dedup();

    let be = ImplicitSolver::new(&op, 1.0, dt)?;
    let bdf = ImplicitSolver::new(&op, 1.5, dt)?;
    let bdf2_factorizations = 1usize;

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut state_energy = Vec::with_capacity(n_steps + 1);
    let mut control_energy = Vec::with_capacity(n_steps + 1);
    let mut checkpoints = Vec::new();

    let record = |step: usize,
                      y: &[f64],
                      times: &mut Vec<f64>,
                      se: &mut Vec<f64>,
                      ce: &mut Vec<f64>,
                      cps: &mut Vec<(f64, Vec<f64>)>|
     -> Result<()> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { time: step as f64 * dt, step });
        }
        let t = step as f64 * dt;
        times.push(t);
        se.push(discrete_l2_norm(&system.m, y)?);
        match gain {
            Some(g) => {
                let u = g.control(y);
                ce.push(discrete_l2_norm(&system.g_o, &u)?);
            }
            None => ce.push(0.0),
        }
        if checkpoint_steps.binary_search(&step).is_ok() {
            cps.push((t, y.to_vec()));
        }
        Ok(())
    };

    let mut y_prev = y0.to_vec();
    record(0, &y_prev, &mut times, &mut state_energy, &mut control_energy, &mut checkpoints)?;
    let mut y_curr = be.solve(&system.m.matvec_alloc(&y_prev))?;
    record(1, &y_curr, &mut times, &mut state_energy, &mut control_energy, &mut checkpoints)?;
    for step in 2..=n_steps {
        let comb: Vec<f64> = y_curr.iter().zip(&y_prev).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let y_next = bdf.solve(&system.m.matvec_alloc(&comb))?;
        y_prev = std::mem::replace(&mut y_curr, y_next);
        record(step, &y_curr, &mut times, &mut state_energy, &mut control_energy, &mut checkpoints)?;
    }
    Ok(TimeSeries { times, state_energy, control_energy, checkpoints, bdf2_factorizations })
}
