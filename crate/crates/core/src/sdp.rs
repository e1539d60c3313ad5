//! Strict LMI feasibility for small dense problems.
//!
//! Given symmetric `F₀, F₁, …, F_N`, look for `x` with
//! `F(x) = F₀ + Σ xᵢ Fᵢ ≺ 0`. The solver minimizes `t` subject to
//! `F(x) ⪯ t I` and `|xᵢ| ≤ R`, written as the dual of a block-diagonal
//! standard-form SDP
//!
//! ```text
//! max  −t   s.t.  t I − F(x) ⪰ 0,   R − xᵢ ≥ 0,   R + xᵢ ≥ 0
//! ```
//!
//! and solved by an infeasible-start primal-dual path-following method with
//! the HKM search direction and Mehrotra's predictor-corrector. The primal
//! iterate yields a lower bound on the optimal `t*`, which is what certifies
//! infeasibility; the dual iterate yields the candidate `x`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::settings::NumericSettings;

pub const MAX_DIMENSION: usize = 200;
pub const MAX_VARS: usize = 2000;

/// `F(x) = F₀ + Σ xᵢ Fᵢ`, required negative definite.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLmi {
    pub f0: Matrix,
    pub fi: Vec<Matrix>,
}

impl AffineLmi {
    pub fn new(f0: Matrix, fi: Vec<Matrix>) -> Result<Self> {
        let d = f0.rows();
        for (idx, f) in std::iter::once(&f0).chain(&fi).enumerate() {
            if f.shape() != (d, d) {
                return Err(Error::DimensionMismatch {
                    op: "AffineLmi::new",
                    detail: format!("coefficient {idx} is {:?}, expected {d}x{d}", f.shape()),
                });
            }
            if f.asymmetry() != 0.0 {
                return Err(Error::NotSymmetric {
                    asymmetry: f.asymmetry(),
                });
            }
        }
        Ok(Self { f0, fi })
    }

    pub fn dimension(&self) -> usize {
        self.f0.rows()
    }

    pub fn num_vars(&self) -> usize {
        self.fi.len()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Matrix> {
        if x.len() != self.num_vars() {
            return Err(Error::DimensionMismatch {
                op: "AffineLmi::evaluate",
                detail: format!("{} values for {} variables", x.len(), self.num_vars()),
            });
        }
        let mut acc = self.f0.as_nalgebra().clone();
        for (xi, f) in x.iter().zip(&self.fi) {
            if *xi != 0.0 {
                acc += f.as_nalgebra() * *xi;
            }
        }
        Matrix::from_nalgebra(acc)
    }

    /// Every coefficient multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            f0: self.f0.scale(c),
            fi: self.fi.iter().map(|f| f.scale(c)).collect(),
        }
    }

    /// Largest Frobenius norm among the coefficients.
    pub fn coefficient_scale(&self) -> f64 {
        std::iter::once(&self.f0)
            .chain(&self.fi)
            .map(Matrix::norm_fro)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    /// Candidate point (meaningful when feasible).
    pub x: Vec<f64>,
    /// `−λmax(F(x))`.
    pub margin: f64,
    pub iterations: usize,
    /// Proven lower bound on the box-constrained optimum `t*`.
    pub t_lower: f64,
    /// `λmax(F(x))` at the returned point, an upper bound on `t*`.
    pub t_upper: f64,
    pub message: String,
}

/// Block-diagonal pair: one dense block and one nonnegative-orthant block.
#[derive(Clone)]
struct Pair {
    s: DMatrix<f64>,
    lp: DVector<f64>,
}

impl Pair {
    fn dot(&self, other: &Pair) -> f64 {
        self.s.dot(&other.s) + self.lp.dot(&other.lp)
    }
}

struct Problem<'a> {
    lmi: &'a AffineLmi,
    nv: usize,
    radius: f64,
}

impl Problem<'_> {
    fn m(&self) -> usize {
        self.nv + 1
    }

    fn d(&self) -> usize {
        self.lmi.dimension()
    }

    fn c(&self) -> Pair {
        Pair {
            s: -self.lmi.f0.as_nalgebra(),
            lp: DVector::from_element(2 * self.nv, self.radius),
        }
    }

    fn b(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.m());
        b[self.nv] = -1.0;
        b
    }

    /// `𝒜(X)`.
    fn op(&self, x: &Pair) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for i in 0..self.nv {
            out[i] = self.lmi.fi[i].as_nalgebra().dot(&x.s) + x.lp[i] - x.lp[self.nv + i];
        }
        out[self.nv] = -x.s.trace();
        out
    }

    /// `𝒜*(y) = Σ yᵢ Aᵢ`.
    fn adj(&self, y: &DVector<f64>) -> Pair {
        let d = self.d();
        let mut s = DMatrix::identity(d, d) * -y[self.nv];
        let mut lp = DVector::zeros(2 * self.nv);
        for i in 0..self.nv {
            if y[i] != 0.0 {
                s += self.lmi.fi[i].as_nalgebra() * y[i];
            }
            lp[i] = y[i];
            lp[self.nv + i] = -y[i];
        }
        Pair { s, lp }
    }

    /// `⟨Aᵢ, W⟩` for a (possibly nonsymmetric) dense `W` on the SDP block.
    fn op_dense(&self, w: &DMatrix<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for i in 0..self.nv {
            out[i] = self.lmi.fi[i].as_nalgebra().dot(w);
        }
        out[self.nv] = -w.trace();
        out
    }

    fn op_lp(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for i in 0..self.nv {
            out[i] = w[i] - w[self.nv + i];
        }
        out
    }

    /// HKM Schur complement `Mᵢⱼ = tr(Aᵢ X Aⱼ Z⁻¹)` summed over blocks.
    fn schur(&self, x: &Pair, zinv: &DMatrix<f64>, lp_ratio: &DVector<f64>) -> DMatrix<f64> {
        let m = self.m();
        let d = self.d();
        let ident = DMatrix::<f64>::identity(d, d);
        let mut out = DMatrix::zeros(m, m);
        let mats: Vec<&DMatrix<f64>> = self
            .lmi
            .fi
            .iter()
            .map(Matrix::as_nalgebra)
            .chain(std::iter::once(&ident))
            .collect();
        let sign = |i: usize| if i == self.nv { -1.0 } else { 1.0 };
        for j in 0..m {
            let pj = &x.s * mats[j] * zinv;
            for i in 0..=j {
                let v = sign(i) * sign(j) * mats[i].dot(&pj);
                out[(i, j)] += v;
                if i != j {
                    out[(j, i)] += v;
                }
            }
        }
        for i in 0..self.nv {
            out[(i, i)] += lp_ratio[i] + lp_ratio[self.nv + i];
        }
        // M is symmetric in exact arithmetic
        (&out + out.transpose()) * 0.5
    }
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `α ≤ α_cap` keeping `P + α ΔP` positive (dense block via the
/// Cholesky factor of `P`).
fn max_step(p: &Pair, dp: &Pair) -> Option<f64> {
    let chol = p.s.clone().cholesky()?;
    let l = chol.l();
    let linv_dp = l.solve_lower_triangular(&dp.s)?;
    let w = l.solve_lower_triangular(&linv_dp.transpose())?;
    let lam_min = sym(&w).symmetric_eigenvalues().min();
    let mut alpha = if lam_min < 0.0 { -1.0 / lam_min } else { f64::INFINITY };
    for k in 0..p.lp.len() {
        if dp.lp[k] < 0.0 {
            alpha = alpha.min(-p.lp[k] / dp.lp[k]);
        }
    }
    Some(alpha)
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    m.clone().lu().solve(rhs)
}

struct Iterate {
    x: Pair,
    z: Pair,
    y: DVector<f64>,
}

/// Search direction for a given complementarity target.
struct Direction {
    dx: Pair,
    dz: Pair,
    dy: DVector<f64>,
}

#[allow(clippy::too_many_arguments)]
fn direction(
    prob: &Problem,
    it: &Iterate,
    zinv: &DMatrix<f64>,
    schur: &DMatrix<f64>,
    rp: &DVector<f64>,
    rd: &Pair,
    g_s: &DMatrix<f64>,
    g_lp: &DVector<f64>,
) -> Option<Direction> {
    // ΔX = G − X ΔZ Z⁻¹, ΔZ = Rd − 𝒜*(Δy), 𝒜(ΔX) = rp
    let x_rd_zinv = &it.x.s * &rd.s * zinv;
    let lp_term = DVector::from_fn(it.x.lp.len(), |k, _| it.x.lp[k] * rd.lp[k] / it.z.lp[k]);
    let rhs = rp - prob.op_dense(g_s) - prob.op_lp(g_lp)
        + prob.op_dense(&x_rd_zinv)
        + prob.op_lp(&lp_term);
    let dy = solve_spd(schur, &rhs)?;
    let adj = prob.adj(&dy);
    let dz = Pair {
        s: &rd.s - &adj.s,
        lp: &rd.lp - &adj.lp,
    };
    let dx_s = sym(&(g_s - &it.x.s * &dz.s * zinv));
    let dx_lp = DVector::from_fn(g_lp.len(), |k, _| {
        g_lp[k] - it.x.lp[k] * dz.lp[k] / it.z.lp[k]
    });
    Some(Direction {
        dx: Pair { s: dx_s, lp: dx_lp },
        dz,
        dy,
    })
}

pub fn solve_feasibility(lmi: &AffineLmi, settings: &NumericSettings) -> Result<FeasibilityResult> {
    let d = lmi.dimension();
    let nv = lmi.num_vars();
    if d == 0 || d > MAX_DIMENSION || nv > MAX_VARS {
        return Err(Error::DimensionMismatch {
            op: "solve_feasibility",
            detail: format!("dimension {d}, {nv} variables (limits 1..={MAX_DIMENSION}, {MAX_VARS})"),
        });
    }
    let prob = Problem {
        lmi,
        nv,
        radius: settings.box_radius,
    };
    let scale = lmi.coefficient_scale().max(f64::MIN_POSITIVE);
    let eps_strict = settings.eps_strict * scale;
    let dual_tol = settings.duality_tol * scale;

    let c = prob.c();
    let b = prob.b();
    let m = prob.m();
    let n_cone = (d + 2 * nv) as f64;

    // Bound on ‖y*‖ for the rigorous lower bound: |xᵢ| ≤ R and
    // |t*| ≤ ‖F₀‖ + R Σ ‖Fᵢ‖.
    let t_bound = lmi.f0.norm_fro()
        + settings.box_radius * lmi.fi.iter().map(Matrix::norm_fro).sum::<f64>();
    let y_bound = (nv as f64 * settings.box_radius.powi(2) + t_bound.powi(2)).sqrt();

    let a_norms: Vec<f64> = (0..m)
        .map(|i| {
            if i < nv {
                (lmi.fi[i].norm_fro().powi(2) + 2.0).sqrt()
            } else {
                (d as f64).sqrt()
            }
        })
        .collect();
    let c_norm = c.dot(&c).sqrt();
    let xi = a_norms
        .iter()
        .zip(b.iter())
        .map(|(an, bi)| n_cone * (1.0 + bi.abs()) / (1.0 + an))
        .fold(10.0f64.max(n_cone.sqrt()), f64::max);
    let eta = a_norms
        .iter()
        .copied()
        .fold(10.0f64.max(n_cone.sqrt()).max(c_norm), f64::max);

    let mut it = Iterate {
        x: Pair {
            s: DMatrix::identity(d, d) * xi,
            lp: DVector::from_element(2 * nv, xi),
        },
        z: Pair {
            s: DMatrix::identity(d, d) * eta,
            lp: DVector::from_element(2 * nv, eta),
        },
        y: DVector::zeros(m),
    };

    let mut best_feasible: Option<(Vec<f64>, f64)> = None;
    let mut best_lower = f64::NEG_INFINITY;
    let mut best_merit = f64::INFINITY;
    let mut stall = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut failure: Option<String> = None;

    let candidate_x = |y: &DVector<f64>| -> Vec<f64> { y.iter().take(nv).copied().collect() };

    while iterations < settings.max_iter {
        let ax = prob.op(&it.x);
        let rp = &b - &ax;
        let adj_y = prob.adj(&it.y);
        let rd = Pair {
            s: &c.s - &it.z.s - &adj_y.s,
            lp: &c.lp - &it.z.lp - &adj_y.lp,
        };
        let pobj = c.dot(&it.x);
        let dobj = b.dot(&it.y);
        let mu = it.x.dot(&it.z) / n_cone;
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let pinf = rp.norm() / (1.0 + b.norm());
        let dinf = rd.dot(&rd).sqrt() / (1.0 + c_norm);

        // lower bound on t*: −t* = bᵀy* ≤ ⟨C,X⟩ + ‖y*‖‖rp‖
        let lower = -(pobj + y_bound * rp.norm());
        if lower > best_lower {
            best_lower = lower;
        }
        let xcand = candidate_x(&it.y);
        if let Ok(fx) = lmi.evaluate(&xcand) {
            if let Ok(lmax) = linalg::lambda_max(&fx, f64::INFINITY) {
                let better = best_feasible.as_ref().is_none_or(|(_, l)| lmax < *l);
                if lmax < -eps_strict && better {
                    best_feasible = Some((xcand, lmax));
                }
            }
        }

        if rel_gap < settings.ipm_tol && pinf < settings.ipm_tol && dinf < settings.ipm_tol {
            converged = true;
            break;
        }
        // once both bounds have settled on one side, further iterations
        // cannot change the verdict
        if best_lower >= -dual_tol && pinf < settings.ipm_tol {
            converged = true;
            break;
        }

        let merit = rel_gap.max(pinf).max(dinf);
        if merit < best_merit * (1.0 - 1e-3) {
            best_merit = merit;
            stall = 0;
        } else {
            stall += 1;
            if stall >= settings.max_stall {
                failure = Some(format!("no progress for {stall} iterations (merit {merit:.3e})"));
                break;
            }
        }
        iterations += 1;

        let Some(zchol) = it.z.s.clone().cholesky() else {
            failure = Some("dual slack lost positive definiteness".into());
            break;
        };
        let zinv = zchol.inverse();
        let lp_ratio = it.x.lp.component_div(&it.z.lp);
        let schur = prob.schur(&it.x, &zinv, &lp_ratio);

        // predictor: target XZ = 0
        let g_s = -it.x.s.clone();
        let g_lp = -it.x.lp.clone();
        let Some(pred) = direction(&prob, &it, &zinv, &schur, &rp, &rd, &g_s, &g_lp) else {
            failure = Some("singular Schur complement".into());
            break;
        };
        let (Some(ap), Some(ad)) = (max_step(&it.x, &pred.dx), max_step(&it.z, &pred.dz)) else {
            failure = Some("lost positivity in step computation".into());
            break;
        };
        let ap = ap.min(1.0);
        let ad = ad.min(1.0);
        let x_aff = Pair {
            s: &it.x.s + &pred.dx.s * ap,
            lp: &it.x.lp + &pred.dx.lp * ap,
        };
        let z_aff = Pair {
            s: &it.z.s + &pred.dz.s * ad,
            lp: &it.z.lp + &pred.dz.lp * ad,
        };
        let mu_aff = x_aff.dot(&z_aff) / n_cone;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector: target XZ = σμI − ΔXₐΔZₐ
        let g_s = &zinv * (sigma * mu) - &it.x.s - &pred.dx.s * &pred.dz.s * &zinv;
        let g_lp = DVector::from_fn(2 * nv, |k, _| {
            (sigma * mu - it.x.lp[k] * it.z.lp[k] - pred.dx.lp[k] * pred.dz.lp[k]) / it.z.lp[k]
        });
        let Some(dir) = direction(&prob, &it, &zinv, &schur, &rp, &rd, &g_s, &g_lp) else {
            failure = Some("singular Schur complement".into());
            break;
        };
        let (Some(ap), Some(ad)) = (max_step(&it.x, &dir.dx), max_step(&it.z, &dir.dz)) else {
            failure = Some("lost positivity in step computation".into());
            break;
        };
        let gamma = 0.9 + 0.09 * ap.min(ad).min(1.0);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        it.x.s += &dir.dx.s * ap;
        it.x.s = sym(&it.x.s);
        it.x.lp += &dir.dx.lp * ap;
        it.z.s += &dir.dz.s * ad;
        it.z.s = sym(&it.z.s);
        it.z.lp += &dir.dz.lp * ad;
        it.y += &dir.dy * ad;
        if !it.y.iter().all(|v| v.is_finite()) {
            failure = Some("non-finite iterate".into());
            break;
        }
    }
    if !converged && failure.is_none() {
        failure = Some(format!("iteration limit {} reached", settings.max_iter));
    }

    // Final verdict from independently re-evaluated bounds.
    let x_final = match &best_feasible {
        Some((x, _)) => x.clone(),
        None => candidate_x(&it.y),
    };
    let t_upper = linalg::lambda_max(&lmi.evaluate(&x_final)?, f64::INFINITY)?;
    let (status, message) = if t_upper < -eps_strict {
        (FeasibilityStatus::Feasible, "strictly feasible point found".to_string())
    } else if best_lower >= -dual_tol {
        (
            FeasibilityStatus::Infeasible,
            format!("certified lower bound t* >= {best_lower:.3e}"),
        )
    } else {
        (
            FeasibilityStatus::NumericalFailure,
            failure.unwrap_or_else(|| {
                format!("bounds inconclusive: t* in [{best_lower:.3e}, {t_upper:.3e}]")
            }),
        )
    };
    Ok(FeasibilityResult {
        status,
        x: x_final,
        margin: -t_upper,
        iterations,
        t_lower: best_lower,
        t_upper,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `diag(a²p − p, −p) ≺ 0`.
    fn scalar_lyapunov(a: f64) -> AffineLmi {
        AffineLmi::new(
            Matrix::zeros(2, 2),
            vec![Matrix::from_diagonal(&[a * a - 1.0, -1.0]).unwrap()],
        )
        .unwrap()
    }

    /// Independent check: λmax of the re-assembled matrix.
    fn recheck(lmi: &AffineLmi, x: &[f64]) -> f64 {
        let mut f = lmi.f0.clone();
        for (xi, fi) in x.iter().zip(&lmi.fi) {
            f = &f + &fi.scale(*xi);
        }
        linalg::lambda_max(&f, 1e-9).unwrap()
    }

    #[test]
    fn stable_scalar_is_feasible() {
        for a in [0.1, 0.5, -0.9] {
            let lmi = scalar_lyapunov(a);
            let r = solve_feasibility(&lmi, &NumericSettings::default()).unwrap();
            assert_eq!(r.status, FeasibilityStatus::Feasible, "a = {a}: {}", r.message);
            assert!(r.margin > 0.0);
            assert!(r.x[0] > 0.0);
            let lmax = recheck(&lmi, &r.x);
            assert!(lmax < 0.0);
            assert!((lmax + r.margin).abs() <= 1e-9 * lmi.evaluate(&r.x).unwrap().norm2());
        }
    }

    #[test]
    fn unstable_scalar_is_infeasible() {
        for a in [1.001, 1.1, -2.0] {
            let r = solve_feasibility(&scalar_lyapunov(a), &NumericSettings::default()).unwrap();
            assert_eq!(r.status, FeasibilityStatus::Infeasible, "a = {a}: {}", r.message);
        }
    }

    #[test]
    fn non_homogeneous_problem() {
        // x ≺ 2 and −x ≺ −1 (1 < x < 2) within |x| ≤ 3
        let lmi = AffineLmi::new(
            Matrix::from_diagonal(&[-2.0, 1.0]).unwrap(),
            vec![Matrix::from_diagonal(&[1.0, -1.0]).unwrap()],
        )
        .unwrap();
        let settings = NumericSettings {
            box_radius: 3.0,
            ..Default::default()
        };
        let r = solve_feasibility(&lmi, &settings).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Feasible);
        assert!((r.x[0] - 1.5).abs() < 1e-6, "analytic optimum x = 1.5, got {}", r.x[0]);
        assert!((r.margin - 0.5).abs() < 1e-6);

        // 2 < x < 1 is empty
        let empty = AffineLmi::new(
            Matrix::from_diagonal(&[-1.0, 2.0]).unwrap(),
            vec![Matrix::from_diagonal(&[1.0, -1.0]).unwrap()],
        )
        .unwrap();
        let r = solve_feasibility(&empty, &settings).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Infeasible, "{}", r.message);
        assert!(r.t_lower > 0.4, "optimum t* = 0.5, bound {}", r.t_lower);
    }

    #[test]
    fn homogeneity_under_positive_scaling() {
        let lmi = scalar_lyapunov(0.5);
        let r = solve_feasibility(&lmi, &NumericSettings::default()).unwrap();
        let big = lmi.scaled(1e3);
        assert!(recheck(&big, &r.x) < 0.0);
        let r_big = solve_feasibility(&big, &NumericSettings::default()).unwrap();
        assert_eq!(r_big.status, FeasibilityStatus::Feasible);
    }

    #[test]
    fn deterministic() {
        let lmi = scalar_lyapunov(0.9);
        let a = solve_feasibility(&lmi, &NumericSettings::default()).unwrap();
        let b = solve_feasibility(&lmi, &NumericSettings::default()).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.x, b.x);
        assert_eq!(a.margin.to_bits(), b.margin.to_bits());
    }

    #[test]
    fn iteration_cap_is_numerical_failure() {
        let settings = NumericSettings {
            max_iter: 1,
            ..Default::default()
        };
        let r = solve_feasibility(&scalar_lyapunov(1.1), &settings).unwrap();
        assert_eq!(r.status, FeasibilityStatus::NumericalFailure);
    }

    #[test]
    fn rejects_bad_input() {
        let asym = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert!(AffineLmi::new(Matrix::zeros(2, 2), vec![asym]).is_err());
        assert!(AffineLmi::new(Matrix::zeros(2, 2), vec![Matrix::zeros(3, 3)]).is_err());
        let empty = AffineLmi::new(Matrix::zeros(0, 0), vec![]).unwrap();
        assert!(solve_feasibility(&empty, &NumericSettings::default()).is_err());
    }
}
