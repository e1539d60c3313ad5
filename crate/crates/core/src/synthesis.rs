//! Controller and observer synthesis from the LMI, with exact re-verification.
//!
//! A strictly feasible point gives `W = (B0 Vᵀ)⁻¹ Q11 B0 Vᵀ`, which satisfies
//! `B W = Q1 B`, then `K = W⁻¹ G` and `L = Q2⁻¹ H`. The LMI is only a
//! sufficient condition built around that change of variables, so every
//! recovered pair is re-checked against the exact second-moment operator.

use crate::closedloop::{build_closed_loop, is_ms_stable, second_moment_operator, MsStability};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::lmi::{self, SvdStructure, SynthesisVariables};
use crate::model::{AttackedSystem, Gains};
use crate::sdp::{solve_feasibility, FeasibilityStatus};
use crate::settings::NumericSettings;

/// `W` with `B W = Q1 B`.
pub fn compute_w(svd: &SvdStructure, q11: &Matrix, settings: &NumericSettings) -> Result<Matrix> {
    let bv = &svd.b0 * &svd.v.transpose();
    let rhs = &(q11 * &bv);
    linalg::solve(&bv, rhs, settings.singular_tol)
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub gains: Gains,
    pub variables: SynthesisVariables,
    pub w: Matrix,
    pub w_condition: f64,
    /// `−λmax` of the constraint at the returned point.
    pub lmi_margin: f64,
    /// Spectral radius of the exact second-moment operator under the gains.
    pub oracle_rho: f64,
    /// The exact operator confirms mean-square stability.
    pub certified: bool,
    pub iterations: usize,
}

/// Solves the LMI and recovers gains. A feasible LMI whose gains fail the
/// exact check is returned with `certified == false` rather than as an error.
pub fn synthesize(sys: &AttackedSystem, settings: &NumericSettings) -> Result<SynthesisResult> {
    let sys = sys.clone().validate(settings)?;
    let svd = lmi::svd_structure(&sys.plant.b, settings)?;
    let (problem, data) = lmi::assemble(&sys, svd.clone())?;
    let sol = solve_feasibility(&problem, settings)?;
    match sol.status {
        FeasibilityStatus::Feasible => {}
        FeasibilityStatus::Infeasible => {
            return Err(Error::Infeasible {
                lower_bound: sol.t_lower,
            })
        }
        FeasibilityStatus::NumericalFailure => {
            return Err(Error::NumericalFailure {
                iterations: sol.iterations,
                reason: sol.message,
            })
        }
    }
    let variables = lmi::recover_variables(&sol.x, &data)?;
    let w = compute_w(&svd, &variables.q11, settings)?;
    let w_condition = linalg::condition_number(&w)?;
    if w_condition.is_nan() || w_condition > settings.max_w_condition {
        return Err(Error::IllConditionedW {
            condition: w_condition,
        });
    }
    let k = linalg::solve(&w, &variables.g, settings.singular_tol)?;
    let l = linalg::solve(&variables.q2, &variables.h, settings.singular_tol)?;
    let gains = Gains { k, l };
    let check = verify_gains(&sys, &gains, settings)?;
    Ok(SynthesisResult {
        gains,
        variables,
        w,
        w_condition,
        lmi_margin: sol.margin,
        oracle_rho: check.rho,
        certified: check.stable,
        iterations: sol.iterations,
    })
}

/// Exact mean-square stability check of given gains.
pub fn verify_gains(
    sys: &AttackedSystem,
    gains: &Gains,
    settings: &NumericSettings,
) -> Result<MsStability> {
    gains.check_dims(&sys.plant)?;
    let cl = build_closed_loop(sys, gains)?;
    is_ms_stable(&second_moment_operator(&cl), settings.stability_margin)
}
