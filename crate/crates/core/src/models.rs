//! Error models: algebraic regression and the model-reference plant.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{is_hurwitz, solve_lyapunov, Matrix, Vector};
use crate::signals::{eval_feature, CommandSignal, FeatureSignal};

/// `y(t) = θ*ᵀ φ(t)` with an exogenous feature.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub theta_star: Vector,
    pub feature: FeatureSignal,
}

impl RegressionModel {
    pub fn new(theta_star: Vector, feature: FeatureSignal) -> Result<Self> {
        check_dim(theta_star.dim(), feature.dim())?;
        Ok(RegressionModel { theta_star, feature })
    }
}

/// `e_y = (θ - θ*)ᵀ φ(t)`
pub fn regression_output_error(m: &RegressionModel, theta: &Vector, t: f64) -> Result<f64> {
    check_dim(m.theta_star.dim(), theta.dim())?;
    let phi = eval_feature(&m.feature, t);
    Ok(output_error(theta, &m.theta_star, &phi))
}

pub(crate) fn output_error(theta: &[f64], theta_star: &[f64], phi: &[f64]) -> f64 {
    theta.iter().zip(theta_star).zip(phi).map(|((a, b), p)| (a - b) * p).sum()
}

/// Closed-loop plant `ẋ = A_m x + b(u + θ*ᵀφ) + b_z z_cmd` and its reference
/// model, with `P` solving `A_mᵀP + P A_m = -Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a_m: Matrix,
    pub b: Vector,
    pub b_z: Vector,
    pub theta_star: Vector,
    pub q: Matrix,
    pub p: Matrix,
    pub command: CommandSignal,
}

impl PlantModel {
    pub fn new(
        a_m: Matrix,
        b: Vector,
        b_z: Vector,
        theta_star: Vector,
        q: Matrix,
        command: CommandSignal,
    ) -> Result<Self> {
        let n = a_m.rows();
        check_dim(n, a_m.cols())?;
        check_dim(n, b.dim())?;
        check_dim(n, b_z.dim())?;
        let p = solve_lyapunov(&a_m, &q)?;
        Ok(PlantModel { a_m, b, b_z, theta_star, q, p, command })
    }

    pub fn state_dim(&self) -> usize {
        self.a_m.rows()
    }

    pub fn pb(&self) -> Vector {
        self.p.mul_vec(&self.b).expect("P and b sized at construction")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub x: Vector,
    pub xhat: Vector,
}

impl SystemState {
    pub fn zeros(n: usize) -> Self {
        SystemState { x: Vector::zeros(n), xhat: Vector::zeros(n) }
    }

    /// `e = x̂ - x`
    pub fn tracking_error(&self) -> Vector {
        &self.xhat - &self.x
    }
}

/// Derivatives of plant and reference model for input `u`, current estimate
/// `theta`, feature `phi` and command value `z_cmd`.
pub fn plant_rhs(
    m: &PlantModel,
    s: &SystemState,
    theta: &[f64],
    u: f64,
    z_cmd: f64,
    phi: &[f64],
) -> Result<SystemState> {
    let n = m.state_dim();
    check_dim(n, s.x.dim())?;
    check_dim(n, s.xhat.dim())?;
    check_dim(m.theta_star.dim(), theta.len())?;
    check_dim(m.theta_star.dim(), phi.len())?;
    let true_drive = u + m.theta_star.dot(phi);
    let est_drive = u + theta.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
    let ax = m.a_m.mul_vec(&s.x)?;
    let axh = m.a_m.mul_vec(&s.xhat)?;
    let x_dot = (0..n).map(|i| ax[i] + m.b[i] * true_drive + m.b_z[i] * z_cmd).collect::<Vec<_>>();
    let xhat_dot = (0..n).map(|i| axh[i] + m.b[i] * est_drive + m.b_z[i] * z_cmd).collect::<Vec<_>>();
    Ok(SystemState { x: x_dot.into(), xhat: xhat_dot.into() })
}

pub const F16_THETA_STAR: [f64; 3] = [0.1965, -0.3835, -1.0000];

/// Open-loop short-period F-16 model augmented with the pitch-rate tracking
/// integrator: `(A, b, b_z)`.
pub fn f16_open_loop() -> (Matrix, Vector, Vector) {
    let a = Matrix::from_rows(&[
        [-0.6398, 0.9378, 0.0],
        [-1.5679, -0.8791, 0.0],
        [0.0, 1.0, 0.0],
    ]);
    let b = Vector::from([-0.0777, -6.5121, 0.0]);
    let b_z = Vector::from([0.0, 0.0, -1.0]);
    (a, b, b_z)
}

/// Builds the F-16 MRAC plant with `θ* = W · θ*_nominal`, `A_m = A - bθ*ᵀ`
/// and `Q = 2I`. Fails with `NotHurwitz` when `W` destabilizes `A_m`.
pub fn build_f16_plant(scale: f64, command: CommandSignal) -> Result<PlantModel> {
    let (a, b, b_z) = f16_open_loop();
    let theta_star: Vector = F16_THETA_STAR.iter().map(|x| scale * x).collect::<Vec<_>>().into();
    let a_m = a.try_sub(&Matrix::outer(&b, &theta_star))?;
    if !is_hurwitz(&a_m)? {
        return Err(Error::NotHurwitz);
    }
    PlantModel::new(a_m, b, b_z, theta_star, Matrix::identity(3).scaled(2.0), command)
}
