//! AC power flow: Newton-Raphson in polar form.
//!
//! All buses except the slack are PQ. The solver starts flat (1.0 ∠ 0),
//! iterates full Newton steps on the polar mismatch equations and stops when
//! every active/reactive mismatch is below 1e-8 p.u.
//!
//! Power balance at bus i (per unit, Y = G + jB, θ_ij = θ_i − θ_j):
//!
//! ```text
//! P_i = V_i Σ_j V_j (G_ij cos θ_ij + B_ij sin θ_ij)
//! Q_i = V_i Σ_j V_j (G_ij sin θ_ij − B_ij cos θ_ij)
//! ```

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::grid::AdmittanceMatrix;

pub const TOLERANCE_PU: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error(
        "did not converge within {iterations} iterations; max |mismatch| per iteration: {trace:?}"
    )]
    NotConverged { iterations: usize, trace: Vec<f64> },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("injection vectors have {got} entries, network has {expected} buses")]
    DimensionMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    pub v_mag_pu: Vec<f64>,
    pub v_angle_rad: Vec<f64>,
    pub iterations: usize,
    pub max_mismatch_pu: f64,
}

impl PowerFlowSolution {
    pub fn voltage(&self, bus: usize) -> Complex64 {
        Complex64::from_polar(self.v_mag_pu[bus], self.v_angle_rad[bus])
    }
}

/// Computes the power injections implied by a voltage profile.
pub fn injections_at(
    y: &AdmittanceMatrix,
    v_mag: &[f64],
    v_angle: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = y.n();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let (mut pi, mut qi) = (0.0, 0.0);
        for (j, y_ij) in y.row(i) {
            let theta_ij = v_angle[i] - v_angle[j];
            let (sin_ij, cos_ij) = theta_ij.sin_cos();
            pi += v_mag[j] * (y_ij.re * cos_ij + y_ij.im * sin_ij);
            qi += v_mag[j] * (y_ij.re * sin_ij - y_ij.im * cos_ij);
        }
        p[i] = v_mag[i] * pi;
        q[i] = v_mag[i] * qi;
    }
    (p, q)
}

/// Largest absolute P/Q mismatch over the non-slack buses — the convergence
/// measure, reusable by callers to double-check a returned solution.
pub fn max_mismatch(
    y: &AdmittanceMatrix,
    solution: &PowerFlowSolution,
    p_spec_pu: &[f64],
    q_spec_pu: &[f64],
    slack: usize,
) -> f64 {
    let (p, q) = injections_at(y, &solution.v_mag_pu, &solution.v_angle_rad);
    let mut worst = 0.0f64;
    for i in 0..y.n() {
        if i == slack {
            continue;
        }
        worst = worst
            .max((p_spec_pu[i] - p[i]).abs())
            .max((q_spec_pu[i] - q[i]).abs());
    }
    worst
}

/// Solves the power flow for the given per-unit injections.
///
/// `p_spec_pu[i]`/`q_spec_pu[i]` are net injections (generation positive) at
/// every bus; the slack entries are ignored. Returns the polar voltage
/// profile with the slack pinned at 1.0 ∠ 0.
pub fn solve_power_flow(
    y: &AdmittanceMatrix,
    p_spec_pu: &[f64],
    q_spec_pu: &[f64],
    slack: usize,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let n = y.n();
    if p_spec_pu.len() != n || q_spec_pu.len() != n {
        return Err(PowerFlowError::DimensionMismatch {
            got: p_spec_pu.len().min(q_spec_pu.len()),
            expected: n,
        });
    }

    // Unknown ordering: angles of all non-slack buses, then magnitudes.
    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let pos: Vec<Option<usize>> = {
        let mut pos = vec![None; n];
        for (k, &i) in pq.iter().enumerate() {
            pos[i] = Some(k);
        }
        pos
    };
    let m = pq.len();

    let mut v_mag = vec![1.0; n];
    let mut v_angle = vec![0.0; n];
    let mut trace = Vec::new();

    for iteration in 0..=MAX_ITERATIONS {
        let (p_calc, q_calc) = injections_at(y, &v_mag, &v_angle);
        let mut mismatch = DVector::zeros(2 * m);
        let mut worst = 0.0f64;
        for (k, &i) in pq.iter().enumerate() {
            let dp = p_spec_pu[i] - p_calc[i];
            let dq = q_spec_pu[i] - q_calc[i];
            mismatch[k] = dp;
            mismatch[m + k] = dq;
            worst = worst.max(dp.abs()).max(dq.abs());
        }
        trace.push(worst);
        if worst < TOLERANCE_PU {
            return Ok(PowerFlowSolution {
                v_mag_pu: v_mag,
                v_angle_rad: v_angle,
                iterations: iteration,
                max_mismatch_pu: worst,
            });
        }
        if iteration == MAX_ITERATIONS {
            break;
        }

        // Jacobian blocks: [H = ∂P/∂θ, N = ∂P/∂V; J = ∂Q/∂θ, L = ∂Q/∂V].
        let mut jacobian = DMatrix::zeros(2 * m, 2 * m);
        for (k, &i) in pq.iter().enumerate() {
            let vi = v_mag[i];
            for (j, y_ij) in y.row(i) {
                let (g, b) = (y_ij.re, y_ij.im);
                if j == i {
                    jacobian[(k, k)] += -q_calc[i] - b * vi * vi;
                    jacobian[(k, m + k)] += p_calc[i] / vi + g * vi;
                    jacobian[(m + k, k)] += p_calc[i] - g * vi * vi;
                    jacobian[(m + k, m + k)] += q_calc[i] / vi - b * vi;
                } else if let Some(kj) = pos[j] {
                    let theta_ij = v_angle[i] - v_angle[j];
                    let (sin_ij, cos_ij) = theta_ij.sin_cos();
                    let vj = v_mag[j];
                    jacobian[(k, kj)] = vi * vj * (g * sin_ij - b * cos_ij);
                    jacobian[(k, m + kj)] = vi * (g * cos_ij + b * sin_ij);
                    jacobian[(m + k, kj)] = -vi * vj * (g * cos_ij + b * sin_ij);
                    jacobian[(m + k, m + kj)] = vi * (g * sin_ij - b * cos_ij);
                }
            }
        }

        let lu = jacobian.lu();
        let Some(update) = lu.solve(&mismatch) else {
            return Err(PowerFlowError::SingularJacobian { iteration });
        };
        for (k, &i) in pq.iter().enumerate() {
            v_angle[i] += update[k];
            v_mag[i] += update[m + k];
        }
    }

    Err(PowerFlowError::NotConverged {
        iterations: MAX_ITERATIONS,
        trace,
    })
}
