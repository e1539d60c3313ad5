//! Assembly of the resilient synthesis LMI.
//!
//! Decision variables are `Q11` (m x m), `Q22` ((n−m) x (n−m)), `Q2`
//! (n x n), `G` (m x n) and `H` (n x p). The state Lyapunov block is
//! `Q1 = U diag(Q11, Q22) Uᵀ`, aligned with the SVD `B = U [B0; 0] Vᵀ` so that
//! `B W = Q1 B` has a solution `W`. The constraint is
//!
//! ```text
//! [ −Q   Σ1ᵀ  Σ2ᵀ ]
//! [ Σ1   −Q   0   ]  ≺ 0,     Q = diag(Q1, Q2)
//! [ Σ2   0    −Q  ]
//!
//! Σ1 = [ Q1 A + B Δ̄2 G   −B Δ̄2 G       ]
//!      [ 0               Q2 A − H Δ̄1 C ]
//! Σ2 = [ B Δ22 G         B Δ22 G       ]
//!      [ −H Δ11 C        0             ]
//! ```
//!
//! with `Δ̄` the mean link gains and `Δ11`, `Δ22` their standard deviations,
//! followed block-diagonally by `−Q11`, `−Q22` and `−Q2`.
//!
//! Scalar packing order: `Q11` upper triangle row-major, then `Q22`, `Q2`
//! the same way, then `G` and `H` row-major.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::AttackedSystem;
use crate::moments;
use crate::sdp::AffineLmi;
use crate::settings::NumericSettings;

/// `B = U [B0; 0] Vᵀ` with `U` (n x n) and `V` (m x m) orthogonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdStructure {
    pub u: Matrix,
    pub b0: Matrix,
    pub v: Matrix,
}

/// Full SVD of a tall full-column-rank `B`, singular values descending.
/// Each column of `U` has its first nonzero entry nonnegative.
pub fn svd_structure(b: &Matrix, settings: &NumericSettings) -> Result<SvdStructure> {
    let (n, m) = b.shape();
    if m == 0 || m > n {
        return Err(Error::DimensionMismatch {
            op: "svd_structure",
            detail: format!("B is {n}x{m}, need n >= m >= 1"),
        });
    }
    let dec = linalg::svd(b)?;
    let smax = dec.s[0];
    let rank = dec.s.iter().filter(|&&s| s > settings.rank_tol * smax).count();
    if smax == 0.0 || rank < m {
        return Err(Error::RankDeficient {
            name: "B",
            rank: if smax == 0.0 { 0 } else { rank },
            expected: m,
        });
    }

    // Complete the thin U with an orthonormal basis of range(B)^⊥ by
    // Gram-Schmidt over the coordinate axes, largest residual first.
    let mut cols: Vec<Vec<f64>> = (0..m)
        .map(|j| (0..n).map(|i| dec.u.get(i, j)).collect())
        .collect();
    let mut v_cols: Vec<Vec<f64>> = (0..m)
        .map(|j| (0..m).map(|i| dec.v.get(i, j)).collect())
        .collect();
    while cols.len() < n {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for axis in 0..n {
            let mut r = vec![0.0; n];
            r[axis] = 1.0;
            for _ in 0..2 {
                for c in &cols {
                    let proj: f64 = c.iter().zip(&r).map(|(a, b)| a * b).sum();
                    r.iter_mut().zip(c).for_each(|(ri, ci)| *ri -= proj * ci);
                }
            }
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if best.as_ref().is_none_or(|(bn, _)| norm > *bn + 1e-12) {
                best = Some((norm, r));
            }
        }
        let (norm, r) = best.expect("n > 0");
        cols.push(r.into_iter().map(|v| v / norm).collect());
    }

    for (j, col) in cols.iter_mut().enumerate() {
        let first = col.iter().copied().find(|v| v.abs() > 1e-14).unwrap_or(0.0);
        if first < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
            if j < m {
                v_cols[j].iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
    let u = Matrix::new(n, n, (0..n).flat_map(|i| cols.iter().map(move |c| c[i])).collect())?;
    let v = Matrix::new(m, m, (0..m).flat_map(|i| v_cols.iter().map(move |c| c[i])).collect())?;
    Ok(SvdStructure {
        u,
        b0: Matrix::from_diagonal(&dec.s)?,
        v,
    })
}

impl SvdStructure {
    /// `U diag(Q11, Q22) Uᵀ`, exactly symmetric.
    pub fn lyapunov_block(&self, q11: &Matrix, q22: &Matrix) -> Matrix {
        let inner = linalg::block_diag(&[q11.clone(), q22.clone()]);
        (&(&self.u * &inner) * &self.u.transpose()).symmetrize()
    }

    /// `U [B0; 0] Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.u.rows();
        let m = self.b0.rows();
        let stacked = linalg::block(&[vec![self.b0.clone()], vec![Matrix::zeros(n - m, m)]])
            .expect("consistent blocks");
        &(&self.u * &stacked) * &self.v.transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisVariables {
    pub q11: Matrix,
    pub q22: Matrix,
    pub q2: Matrix,
    pub g: Matrix,
    pub h: Matrix,
    /// `U diag(Q11, Q22) Uᵀ`.
    pub q1: Matrix,
}

/// Maps packed solver variables to named matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

fn sym_count(k: usize) -> usize {
    k * (k + 1) / 2
}

impl VariableLayout {
    pub fn num_vars(&self) -> usize {
        let (n, m, p) = (self.n, self.m, self.p);
        sym_count(m) + sym_count(n - m) + sym_count(n) + m * n + n * p
    }

    fn unpack_sym(values: &[f64], k: usize) -> Matrix {
        let mut out = Matrix::zeros(k, k);
        let mut idx = 0;
        for i in 0..k {
            for j in i..k {
                out.set(i, j, values[idx]).expect("finite");
                out.set(j, i, values[idx]).expect("finite");
                idx += 1;
            }
        }
        out
    }

    fn unpack_full(values: &[f64], r: usize, c: usize) -> Matrix {
        Matrix::new(r, c, values.to_vec()).expect("finite")
    }

    /// Named matrices (without `Q1`) from packed values.
    fn unpack(&self, x: &[f64]) -> [Matrix; 5] {
        let (n, m, p) = (self.n, self.m, self.p);
        let sizes = [sym_count(m), sym_count(n - m), sym_count(n), m * n, n * p];
        let mut offs = [0usize; 6];
        for i in 0..5 {
            offs[i + 1] = offs[i] + sizes[i];
        }
        [
            Self::unpack_sym(&x[offs[0]..offs[1]], m),
            Self::unpack_sym(&x[offs[1]..offs[2]], n - m),
            Self::unpack_sym(&x[offs[2]..offs[3]], n),
            Self::unpack_full(&x[offs[3]..offs[4]], m, n),
            Self::unpack_full(&x[offs[4]..offs[5]], n, p),
        ]
    }

    pub fn pack(&self, vars: &SynthesisVariables) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_vars());
        for q in [&vars.q11, &vars.q22, &vars.q2] {
            for i in 0..q.rows() {
                for j in i..q.cols() {
                    out.push(q.get(i, j));
                }
            }
        }
        for g in [&vars.g, &vars.h] {
            for i in 0..g.rows() {
                for j in 0..g.cols() {
                    out.push(g.get(i, j));
                }
            }
        }
        out
    }
}

/// Constant data of the LMI: plant, SVD structure and link statistics.
#[derive(Debug, Clone)]
pub struct LmiData {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub svd: SvdStructure,
    pub sensor_mean: Matrix,
    pub sensor_std: Matrix,
    pub actuator_mean: Matrix,
    pub actuator_std: Matrix,
    pub layout: VariableLayout,
}

impl LmiData {
    pub fn new(sys: &AttackedSystem, svd: SvdStructure) -> Result<Self> {
        let plant = &sys.plant;
        let (n, m, p) = (plant.states(), plant.inputs(), plant.outputs());
        if svd.u.shape() != (n, n) || svd.b0.shape() != (m, m) || svd.v.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                op: "assemble",
                detail: "SVD structure does not match the plant".into(),
            });
        }
        let (sensor_mean, sensor_std) = moments::delta_matrices(&sys.sensors);
        let (actuator_mean, actuator_std) = moments::delta_matrices(&sys.actuators);
        Ok(Self {
            a: plant.a.clone(),
            b: plant.b.clone(),
            c: plant.c.clone(),
            svd,
            sensor_mean,
            sensor_std,
            actuator_mean,
            actuator_std,
            layout: VariableLayout { n, m, p },
        })
    }

    /// The full constraint matrix at a given packed point. Linear in `x`.
    pub fn constraint_matrix(&self, x: &[f64]) -> Matrix {
        let n = self.layout.n;
        let [q11, q22, q2, g, h] = self.layout.unpack(x);
        let q1 = self.svd.lyapunov_block(&q11, &q22);
        let z = Matrix::zeros(n, n);
        let q = linalg::block_diag(&[q1.clone(), q2.clone()]);
        let bdg = &(&self.b * &self.actuator_mean) * &g;
        let hdc = &(&h * &self.sensor_mean) * &self.c;
        let bsg = &(&self.b * &self.actuator_std) * &g;
        let hsc = &(&h * &self.sensor_std) * &self.c;
        let sigma1 = linalg::block(&[
            vec![&(&q1 * &self.a) + &bdg, -&bdg],
            vec![z.clone(), &(&q2 * &self.a) - &hdc],
        ])
        .expect("consistent blocks");
        let sigma2 = linalg::block(&[vec![bsg.clone(), bsg], vec![-&hsc, z]])
            .expect("consistent blocks");
        let zero2 = Matrix::zeros(2 * n, 2 * n);
        let main = linalg::block(&[
            vec![-&q, sigma1.transpose(), sigma2.transpose()],
            vec![sigma1, -&q, zero2.clone()],
            vec![sigma2, zero2, -&q],
        ])
        .expect("consistent blocks");
        linalg::block_diag(&[main, -&q11, -&q22, -&q2])
    }

    pub fn recover(&self, x: &[f64]) -> Result<SynthesisVariables> {
        if x.len() != self.layout.num_vars() {
            return Err(Error::DimensionMismatch {
                op: "recover_variables",
                detail: format!("{} values for {} variables", x.len(), self.layout.num_vars()),
            });
        }
        let [q11, q22, q2, g, h] = self.layout.unpack(x);
        let q1 = self.svd.lyapunov_block(&q11, &q22);
        Ok(SynthesisVariables {
            q11,
            q22,
            q2,
            g,
            h,
            q1,
        })
    }
}

/// Builds the affine LMI over the packed variables.
pub fn assemble(sys: &AttackedSystem, svd: SvdStructure) -> Result<(AffineLmi, LmiData)> {
    let data = LmiData::new(sys, svd)?;
    let nv = data.layout.num_vars();
    let f0 = data.constraint_matrix(&vec![0.0; nv]);
    let mut unit = vec![0.0; nv];
    let fi = (0..nv)
        .map(|i| {
            unit[i] = 1.0;
            let f = &data.constraint_matrix(&unit) - &f0;
            unit[i] = 0.0;
            f
        })
        .collect();
    Ok((AffineLmi::new(f0, fi)?, data))
}

pub fn recover_variables(x: &[f64], data: &LmiData) -> Result<SynthesisVariables> {
    data.recover(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{example_system, AttackedSystem, PlantModel};
    use crate::sdp::{solve_feasibility, FeasibilityStatus};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn settings() -> NumericSettings {
        NumericSettings::default()
    }

    #[test]
    fn example_b_structure() {
        let b = example_system().plant.b;
        let s = svd_structure(&b, &settings()).unwrap();
        assert_eq!(s.b0, Matrix::identity(2));
        assert!((&s.u - &Matrix::identity(3)).max_abs() < 1e-15);
        assert!((&s.v - &Matrix::identity(2)).max_abs() < 1e-15);
    }

    #[test]
    fn single_column_structure() {
        let b = Matrix::from_rows(&[[2.0], [0.0]]).unwrap();
        let s = svd_structure(&b, &settings()).unwrap();
        assert_eq!(s.b0, Matrix::from_rows(&[[2.0]]).unwrap());
        assert!((&s.u - &Matrix::identity(2)).max_abs() < 1e-15);
        assert!((&s.v - &Matrix::identity(1)).max_abs() < 1e-15);
    }

    #[test]
    fn random_structure_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let b = random(&mut rng, 4, 2);
            let s = svd_structure(&b, &settings()).unwrap();
            assert!((&s.reconstruct() - &b).norm_fro() <= 1e-10 * b.norm_fro());
            let utu = &s.u.transpose() * &s.u;
            assert!((&utu - &Matrix::identity(4)).max_abs() < 1e-12);
            let vtv = &s.v.transpose() * &s.v;
            assert!((&vtv - &Matrix::identity(2)).max_abs() < 1e-12);
            let d = s.b0.diagonal();
            assert!(d[0] >= d[1] && d[1] > 0.0);
            for j in 0..4 {
                let first = (0..4).map(|i| s.u.get(i, j)).find(|v| v.abs() > 1e-14).unwrap();
                assert!(first > 0.0);
            }
        }
        assert!(matches!(
            svd_structure(&Matrix::zeros(3, 2), &settings()),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn example_dimensions() {
        let sys = example_system();
        let s = svd_structure(&sys.plant.b, &settings()).unwrap();
        let (lmi, data) = assemble(&sys, s).unwrap();
        assert_eq!(data.layout.num_vars(), 22);
        assert_eq!(lmi.num_vars(), 22);
        assert_eq!(lmi.dimension(), 18 + 2 + 1 + 3);
        // zero variables are never strictly feasible
        assert_eq!(lmi.f0.max_abs(), 0.0);
    }

    #[test]
    fn assembly_is_affine_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let sys = example_system();
        let s = svd_structure(&sys.plant.b, &settings()).unwrap();
        let (lmi, data) = assemble(&sys, s).unwrap();
        for _ in 0..5 {
            let x: Vec<f64> = (0..22).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..22).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let fxy = lmi.evaluate(&xy).unwrap();
            let combo = &(&(&fxy - &lmi.evaluate(&x).unwrap()) - &lmi.evaluate(&y).unwrap())
                + &lmi.f0;
            assert!(combo.max_abs() < 1e-12);
            assert_eq!(fxy.asymmetry(), 0.0);
            // direct evaluation agrees with the affine expansion
            let direct = data.constraint_matrix(&x);
            assert!((&direct - &lmi.evaluate(&x).unwrap()).max_abs() < 1e-12);
            assert_eq!(direct.asymmetry(), 0.0);
        }
    }

    #[test]
    fn constraint_blocks_follow_the_template() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let sys = example_system();
        let s = svd_structure(&sys.plant.b, &settings()).unwrap();
        let (_, data) = assemble(&sys, s).unwrap();
        let x: Vec<f64> = (0..22).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = data.recover(&x).unwrap();
        let f = data.constraint_matrix(&x);
        let p = &sys.plant;
        let d2 = Matrix::from_diagonal(&[1.06, 1.01]).unwrap();
        let d1 = Matrix::from_diagonal(&[1.09, 1.02]).unwrap();
        let s2 = Matrix::from_diagonal(&[0.0144f64.sqrt(), 0.0009f64.sqrt()]).unwrap();
        let s1 = Matrix::from_diagonal(&[0.0189f64.sqrt(), 0.0016f64.sqrt()]).unwrap();
        let bdg = &(&p.b * &d2) * &v.g;
        let expect_11 = &(&v.q1 * &p.a) + &bdg;
        let expect_44 = &(&v.q2 * &p.a) - &(&(&v.h * &d1) * &p.c);
        let bsg = &(&p.b * &s2) * &v.g;
        let hsc = &(&v.h * &s1) * &p.c;
        let close = |a: &Matrix, b: &Matrix| (a - b).max_abs() < 1e-12;
        assert!(close(&f.slice(6, 0, 3, 3).unwrap(), &expect_11));
        assert!(close(&f.slice(6, 3, 3, 3).unwrap(), &-&bdg));
        assert!(close(&f.slice(9, 3, 3, 3).unwrap(), &expect_44));
        assert!(close(&f.slice(12, 0, 3, 3).unwrap(), &bsg));
        assert!(close(&f.slice(12, 3, 3, 3).unwrap(), &bsg));
        assert!(close(&f.slice(15, 0, 3, 3).unwrap(), &-&hsc));
        assert!(close(&f.slice(0, 0, 3, 3).unwrap(), &-&v.q1));
        assert!(close(&f.slice(21, 21, 3, 3).unwrap(), &-&v.q2));
        assert_eq!(f.slice(12, 6, 6, 6).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn pack_recover_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let sys = example_system();
        let s = svd_structure(&sys.plant.b, &settings()).unwrap();
        let (_, data) = assemble(&sys, s).unwrap();
        let x: Vec<f64> = (0..22).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = recover_variables(&x, &data).unwrap();
        assert_eq!(data.layout.pack(&v), x);
        assert!(recover_variables(&x[..5], &data).is_err());
    }

    #[test]
    fn example_lmi_solution_is_consistent() {
        let sys = example_system();
        let s = svd_structure(&sys.plant.b, &settings()).unwrap();
        let (lmi, data) = assemble(&sys, s).unwrap();
        let r = solve_feasibility(&lmi, &settings()).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Feasible, "{}", r.message);
        let v = recover_variables(&r.x, &data).unwrap();
        for q in [&v.q1, &v.q2, &v.q11, &v.q22] {
            assert!(linalg::sym_eig(q, 1e-9).unwrap()[0] > 0.0);
        }
        let refit = data.constraint_matrix(&data.layout.pack(&v));
        let lmax = linalg::lambda_max(&refit, 1e-9).unwrap();
        assert!((lmax + r.margin).abs() <= 1e-9 * refit.norm2());
    }

    /// Soundness against pole placement on random systems: whenever the
    /// no-attack LMI is feasible the recovered gains place both spectra
    /// inside the unit circle, and such gains exist because the pairs are
    /// controllable and observable.
    #[test]
    fn no_attack_lmi_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let mut feasible = 0;
        for _ in 0..10 {
            // unstable in the actuated coordinates, stable in the rest so the
            // structured Lyapunov block exists
            let mut a = random(&mut rng, 3, 3).scale(1.5);
            a.set(2, 2, 0.3 * rng.gen_range(-1.0..1.0)).unwrap();
            let b = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
            let c = random(&mut rng, 2, 3);
            let plant = PlantModel::new(a.clone(), b.clone(), c.clone()).unwrap();
            let ctrb = linalg::block(&[vec![b.clone(), &a * &b, &(&a * &a) * &b]]).unwrap();
            let obsv = linalg::block(&[vec![c.clone()], vec![&c * &a], vec![&(&c * &a) * &a]])
                .unwrap();
            assert_eq!(linalg::rank(&ctrb, 1e-10).unwrap(), 3);
            assert_eq!(linalg::rank(&obsv, 1e-10).unwrap(), 3);

            let sys = AttackedSystem::without_attacks(plant).unwrap();
            let s = svd_structure(&b, &settings()).unwrap();
            let (lmi, data) = assemble(&sys, s.clone()).unwrap();
            let r = solve_feasibility(&lmi, &settings()).unwrap();
            if r.status != FeasibilityStatus::Feasible {
                continue;
            }
            feasible += 1;
            let v = recover_variables(&r.x, &data).unwrap();
            // no attack: W = Q11 (B0 = V = I), K = W⁻¹G, L = Q2⁻¹H
            let k = linalg::solve(&v.q11, &v.g, 1e-12).unwrap();
            let l = linalg::solve(&v.q2, &v.h, 1e-12).unwrap();
            assert!(linalg::spectral_radius(&(&a + &(&b * &k))).unwrap() < 1.0);
            assert!(linalg::spectral_radius(&(&a - &(&l * &c))).unwrap() < 1.0);
        }
        assert_eq!(feasible, 10);
    }
}
