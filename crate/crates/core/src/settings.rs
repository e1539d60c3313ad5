use serde::{Deserialize, Serialize};

/// Numeric tolerances shared by every stage of the pipeline.
///
/// Defaults are the values the library is tested against; callers override
/// individual fields through struct update syntax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericSettings {
    /// Relative asymmetry tolerated by `sym_eig` before symmetrization.
    pub symmetry_tol: f64,
    /// Singular values below `rank_tol * sigma_max` count as zero.
    pub rank_tol: f64,
    /// Pivot threshold (relative to the matrix norm) for `solve`/`inverse`.
    pub singular_tol: f64,
    /// Strict-feasibility offset, scaled by the largest coefficient norm.
    pub eps_strict: f64,
    /// Duality tolerance for infeasibility certificates.
    pub duality_tol: f64,
    /// Interior-point stopping tolerance on relative gap and residuals.
    pub ipm_tol: f64,
    pub max_iter: usize,
    /// Iterations without progress before the solver gives up.
    pub max_stall: usize,
    /// Box bound on every scalar decision variable in the auxiliary problem.
    pub box_radius: f64,
    /// Margin for the strict inequality rho < 1.
    pub stability_margin: f64,
    /// Largest acceptable condition number of W.
    pub max_w_condition: f64,
    /// Negative variances above `-variance_clamp` are roundoff.
    pub variance_clamp: f64,
    /// State norm beyond which a simulated run is flagged diverged.
    pub divergence_threshold: f64,
}

impl Default for NumericSettings {
    fn default() -> Self {
        Self {
            symmetry_tol: 1e-9,
            rank_tol: 1e-10,
            singular_tol: 1e-12,
            eps_strict: 1e-8,
            duality_tol: 1e-7,
            ipm_tol: 1e-9,
            max_iter: 500,
            max_stall: 20,
            box_radius: 1.0,
            stability_margin: 1e-9,
            max_w_condition: 1e12,
            variance_clamp: 1e-14,
            divergence_threshold: 1e12,
        }
    }
}
