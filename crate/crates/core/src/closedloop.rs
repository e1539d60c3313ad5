//! Closed loop of plant, observer and attacked links in the coordinates
//! `ζ = (x, e)`, `e = x − x̂`, and its exact second-moment recursion.
//!
//! With `Δ̄` the mean link gains, the loop is
//!
//! ```text
//! ζ(k+1) = Γ̄ ζ(k) + Σⱼ εⱼ(k) Aⱼ ζ(k) + Σᵢ εᵢ(k) Sᵢ ζ(k)
//! Γ̄  = [[A + B Δ̄₂ K, −B Δ̄₂ K], [0, A − L Δ̄₁ C]]
//! Aⱼ = [[B eⱼeⱼᵀ K, −B eⱼeⱼᵀ K], [0, 0]]
//! Sᵢ = [[0, 0], [−L eᵢeᵢᵀ C, 0]]
//! ```
//!
//! where the `ε` are the zero-mean, mutually independent, temporally i.i.d.
//! link-gain fluctuations. Hence `M(k) = E[ζζᵀ]` obeys
//! `M⁺ = Γ̄ M Γ̄ᵀ + Σ varⱼ Aⱼ M Aⱼᵀ + Σ varᵢ Sᵢ M Sᵢᵀ`, a linear map whose
//! spectral radius decides mean-square stability.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{AttackedSystem, Gains};
use crate::moments;

#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub gamma1_mean: Matrix,
    pub actuator_channel_matrices: Vec<Matrix>,
    pub sensor_channel_matrices: Vec<Matrix>,
    pub actuator_variances: Vec<f64>,
    pub sensor_variances: Vec<f64>,
}

fn unit_projector(dim: usize, i: usize) -> Matrix {
    let mut d = vec![0.0; dim];
    d[i] = 1.0;
    Matrix::from_diagonal(&d).expect("finite")
}

pub fn build_closed_loop(sys: &AttackedSystem, gains: &Gains) -> Result<ClosedLoop> {
    let plant = &sys.plant;
    gains.check_dims(plant)?;
    let (n, m, p) = (plant.states(), plant.inputs(), plant.outputs());
    let (a, b, c) = (&plant.a, &plant.b, &plant.c);
    let (k, l) = (&gains.k, &gains.l);

    let (d1, _) = moments::delta_matrices(&sys.sensors);
    let (d2, _) = moments::delta_matrices(&sys.actuators);
    let bdk = &(b * &d2) * k;
    let ldc = &(l * &d1) * c;
    let zero = Matrix::zeros(n, n);
    let gamma1_mean = linalg::block(&[
        vec![a + &bdk, -&bdk],
        vec![zero.clone(), a - &ldc],
    ])?;

    let actuator_channel_matrices = (0..m)
        .map(|j| {
            let bek = &(b * &unit_projector(m, j)) * k;
            linalg::block(&[vec![bek.clone(), -&bek], vec![zero.clone(), zero.clone()]])
        })
        .collect::<Result<Vec<_>>>()?;
    let sensor_channel_matrices = (0..p)
        .map(|i| {
            let lec = &(l * &unit_projector(p, i)) * c;
            linalg::block(&[vec![zero.clone(), zero.clone()], vec![-&lec, zero.clone()]])
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ClosedLoop {
        gamma1_mean,
        actuator_channel_matrices,
        sensor_channel_matrices,
        actuator_variances: moments::variances(&sys.actuators),
        sensor_variances: moments::variances(&sys.sensors),
    })
}

/// `T` with `vec(M⁺) = T vec(M)` (column-major vec).
#[derive(Debug, Clone)]
pub struct SecondMomentOperator {
    pub matrix: Matrix,
    /// Side length of `M` (twice the plant order).
    pub dim: usize,
}

impl SecondMomentOperator {
    /// One step of the recursion applied to a `dim x dim` matrix.
    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        if m.shape() != (self.dim, self.dim) {
            return Err(Error::DimensionMismatch {
                op: "SecondMomentOperator::apply",
                detail: format!("{:?}, expected {}x{}", m.shape(), self.dim, self.dim),
            });
        }
        let v = Matrix::column(&m.vec())?;
        Matrix::unvec(&(&self.matrix * &v).vec(), self.dim, self.dim)
    }

    /// `M(0), M(1), …, M(steps)`.
    pub fn propagate(&self, m0: &Matrix, steps: usize) -> Result<Vec<Matrix>> {
        let mut out = Vec::with_capacity(steps + 1);
        out.push(m0.clone());
        for _ in 0..steps {
            let next = self.apply(out.last().expect("nonempty"))?;
            out.push(next);
        }
        Ok(out)
    }
}

pub fn second_moment_operator(cl: &ClosedLoop) -> SecondMomentOperator {
    let g = &cl.gamma1_mean;
    let mut t = linalg::kron(g, g);
    let terms = cl
        .actuator_channel_matrices
        .iter()
        .zip(&cl.actuator_variances)
        .chain(cl.sensor_channel_matrices.iter().zip(&cl.sensor_variances));
    for (e, &var) in terms {
        if var > 0.0 {
            t = &t + &linalg::kron(e, e).scale(var);
        }
    }
    SecondMomentOperator {
        matrix: t,
        dim: g.rows(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsStability {
    pub stable: bool,
    /// Spectral radius of `T`: the per-step decay factor of `E‖ζ‖²`.
    pub rho: f64,
}

pub fn is_ms_stable(op: &SecondMomentOperator, margin: f64) -> Result<MsStability> {
    let rho = linalg::spectral_radius(&op.matrix)?;
    Ok(MsStability {
        stable: rho < 1.0 - margin,
        rho,
    })
}
