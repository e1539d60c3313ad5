//! Plant, attack-channel statistics and gain containers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::settings::NumericSettings;

/// `x(k+1) = A x(k) + B u(k)`, `y(k) = C x(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl PlantModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let plant = Self { a, b, c };
        plant.validate(&NumericSettings::default())?;
        Ok(plant)
    }

    pub fn states(&self) -> usize {
        self.a.rows()
    }

    pub fn inputs(&self) -> usize {
        self.b.cols()
    }

    pub fn outputs(&self) -> usize {
        self.c.rows()
    }

    pub fn validate(&self, settings: &NumericSettings) -> Result<()> {
        let n = self.a.rows();
        if n == 0 || !self.a.is_square() {
            return Err(Error::InvalidPlant(format!(
                "A must be square and nonempty, got {:?}",
                self.a.shape()
            )));
        }
        if self.b.rows() != n || self.b.cols() == 0 {
            return Err(Error::InvalidPlant(format!(
                "B must be {n}xm with m >= 1, got {:?}",
                self.b.shape()
            )));
        }
        if self.c.cols() != n || self.c.rows() == 0 {
            return Err(Error::InvalidPlant(format!(
                "C must be px{n} with p >= 1, got {:?}",
                self.c.shape()
            )));
        }
        let m = self.b.cols();
        if m > n {
            return Err(Error::InvalidPlant(format!(
                "B has more columns ({m}) than states ({n})"
            )));
        }
        let rank = linalg::rank(&self.b, settings.rank_tol)?;
        if rank < m {
            return Err(Error::RankDeficient {
                name: "B",
                rank,
                expected: m,
            });
        }
        Ok(())
    }
}

/// Distribution of the injected multiplicative value on an attacked link.
/// Only its mean and variance enter the synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionDistribution {
    #[default]
    Constant,
    Uniform,
    Gaussian,
}

/// Statistics of one sensor or actuator link.
///
/// The link delivers the true value when its Bernoulli indicator is 1 and the
/// true value scaled by the injected factor when it is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackChannel {
    /// Probability that the link works normally.
    pub bernoulli_mean: f64,
    pub injection_mean: f64,
    pub injection_variance: f64,
    pub distribution: InjectionDistribution,
}

impl AttackChannel {
    /// Constant injection at `injection_mean`.
    pub fn constant(bernoulli_mean: f64, injection_mean: f64) -> Self {
        Self {
            bernoulli_mean,
            injection_mean,
            injection_variance: 0.0,
            distribution: InjectionDistribution::Constant,
        }
    }

    /// A link that is never attacked.
    pub fn clean() -> Self {
        Self::constant(1.0, 1.0)
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        let p = self.bernoulli_mean;
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(format!("bernoulli_mean {p} outside [0, 1]"));
        }
        if !self.injection_mean.is_finite() {
            return Err("injection_mean is not finite".into());
        }
        let v = self.injection_variance;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("injection_variance {v} must be finite and >= 0"));
        }
        if self.distribution == InjectionDistribution::Constant && v != 0.0 {
            return Err(format!("constant injection requires variance 0, got {v}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackedSystem {
    pub plant: PlantModel,
    /// One per output, in output order.
    pub sensors: Vec<AttackChannel>,
    /// One per input, in input order.
    pub actuators: Vec<AttackChannel>,
}

impl AttackedSystem {
    pub fn new(
        plant: PlantModel,
        sensors: Vec<AttackChannel>,
        actuators: Vec<AttackChannel>,
    ) -> Result<Self> {
        Self {
            plant,
            sensors,
            actuators,
        }
        .validate(&NumericSettings::default())
    }

    /// Same plant with every link clean.
    pub fn without_attacks(plant: PlantModel) -> Result<Self> {
        let p = plant.outputs();
        let m = plant.inputs();
        Self::new(plant, vec![AttackChannel::clean(); p], vec![AttackChannel::clean(); m])
    }

    /// Returns the system iff every invariant holds.
    pub fn validate(self, settings: &NumericSettings) -> Result<Self> {
        self.plant.validate(settings)?;
        let (p, m) = (self.plant.outputs(), self.plant.inputs());
        if self.sensors.len() != p {
            return Err(Error::InvalidPlant(format!(
                "{} sensor channels for {p} outputs",
                self.sensors.len()
            )));
        }
        if self.actuators.len() != m {
            return Err(Error::InvalidPlant(format!(
                "{} actuator channels for {m} inputs",
                self.actuators.len()
            )));
        }
        for (kind, list) in [("sensor", &self.sensors), ("actuator", &self.actuators)] {
            for (index, ch) in list.iter().enumerate() {
                ch.check().map_err(|reason| Error::InvalidChannel {
                    kind,
                    index,
                    reason,
                })?;
            }
        }
        Ok(self)
    }
}

/// Controller gain `K` (m x n) and observer gain `L` (n x p).
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub k: Matrix,
    pub l: Matrix,
}

impl Gains {
    pub fn zero(plant: &PlantModel) -> Self {
        Self {
            k: Matrix::zeros(plant.inputs(), plant.states()),
            l: Matrix::zeros(plant.states(), plant.outputs()),
        }
    }

    pub fn check_dims(&self, plant: &PlantModel) -> Result<()> {
        let (n, m, p) = (plant.states(), plant.inputs(), plant.outputs());
        if self.k.shape() != (m, n) {
            return Err(Error::DimensionMismatch {
                op: "gains",
                detail: format!("K is {:?}, plant needs {m}x{n}", self.k.shape()),
            });
        }
        if self.l.shape() != (n, p) {
            return Err(Error::DimensionMismatch {
                op: "gains",
                detail: format!("L is {:?}, plant needs {n}x{p}", self.l.shape()),
            });
        }
        Ok(())
    }
}

/// The third-order example plant with its attack statistics:
/// sensors work 70 % / 80 % of the time, actuators 80 % / 90 %, injected
/// factors 1.3 and 1.1 on both link types, no injection variance.
pub fn example_system() -> AttackedSystem {
    let a = Matrix::from_rows(&[[-1.7, -0.5, 0.1], [1.0, 0.0, -0.7], [0.0, 0.8, 0.0]]).unwrap();
    let b = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
    let c = Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]).unwrap();
    let plant = PlantModel::new(a, b, c).unwrap();
    AttackedSystem::new(
        plant,
        vec![AttackChannel::constant(0.7, 1.3), AttackChannel::constant(0.8, 1.1)],
        vec![AttackChannel::constant(0.8, 1.3), AttackChannel::constant(0.9, 1.1)],
    )
    .unwrap()
}

/// Published gains for [`example_system`].
pub fn example_gains() -> Gains {
    Gains {
        k: Matrix::from_rows(&[
            [1.1475, -0.1962, -1.4460],
            [-0.7689, 0.3120, 1.3376],
        ])
        .unwrap(),
        l: Matrix::from_rows(&[[0.0674, 1.5850], [-0.0376, -0.8844], [0.0217, 0.5095]]).unwrap(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_system_is_valid() {
        let sys = example_system();
        let again = sys.clone().validate(&NumericSettings::default()).unwrap();
        assert_eq!(sys, again);
        example_gains().check_dims(&sys.plant).unwrap();
    }

    #[test]
    fn out_of_range_probability_names_channel() {
        let mut sys = example_system();
        sys.actuators[1].bernoulli_mean = 1.2;
        let err = sys.validate(&NumericSettings::default()).unwrap_err();
        match err {
            Error::InvalidChannel { kind, index, .. } => {
                assert_eq!(kind, "actuator");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_b_is_rank_deficient() {
        let sys = example_system();
        let err = PlantModel::new(sys.plant.a.clone(), Matrix::zeros(3, 2), sys.plant.c.clone())
            .unwrap_err();
        assert!(matches!(err, Error::RankDeficient { name: "B", rank: 0, .. }));
    }

    #[test]
    fn more_inputs_than_states_rejected() {
        let a = Matrix::identity(1);
        let b = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let c = Matrix::identity(1);
        assert!(matches!(PlantModel::new(a, b, c), Err(Error::InvalidPlant(_))));
    }

    #[test]
    fn channel_list_lengths_checked() {
        let sys = example_system();
        let r = AttackedSystem::new(sys.plant.clone(), vec![AttackChannel::clean()], sys.actuators);
        assert!(matches!(r, Err(Error::InvalidPlant(_))));
    }

    #[test]
    fn constant_distribution_forbids_variance() {
        let mut ch = AttackChannel::constant(0.5, 1.0);
        ch.injection_variance = 0.1;
        assert!(ch.check().is_err());
        ch.distribution = InjectionDistribution::Gaussian;
        assert!(ch.check().is_ok());
        ch.injection_variance = -0.1;
        assert!(ch.check().is_err());
    }

    #[test]
    fn gains_dimension_check() {
        let sys = example_system();
        let mut g = example_gains();
        g.k = g.k.transpose();
        assert!(g.check_dims(&sys.plant).is_err());
    }
}
