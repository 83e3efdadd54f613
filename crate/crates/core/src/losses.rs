//! Convex, twice-differentiable losses `L(y, t)` with closed-form derivatives in `t`.
//!
//! None of the supported losses depend on the covariate, so it is not an argument.

use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    /// `(y - t)²`
    LsRegression,
    /// `-σ log(4 e^u / (1 + e^u)²)` with `u = (y - t)/σ`, i.e. `2σ log cosh(u/2)`.
    LogisticRegression { sigma: f64 },
    /// `(1 - y t)²`, labels in {-1, +1}
    LsClassification,
    /// Margin form `log(1 + exp(-y t))`, labels in {-1, +1}
    LogisticClassification,
    /// `log(1 + exp(y - t))`, labels in {-1, +1}; kept alongside the margin form.
    LogisticClassificationShifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelDomain {
    Real,
    PlusMinusOne,
}

#[inline]
fn softplus(z: f64) -> f64 {
    // log(1 + e^z) without overflow
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn log_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl LossSpec {
    pub fn logistic_regression(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(contract(format!("logistic sigma must be > 0, got {sigma}")));
        }
        Ok(Self::LogisticRegression { sigma })
    }

    pub fn label_domain(&self) -> LabelDomain {
        match self {
            Self::LsRegression | Self::LogisticRegression { .. } => LabelDomain::Real,
            _ => LabelDomain::PlusMinusOne,
        }
    }

    pub fn check_label(&self, y: f64) -> Result<()> {
        match self.label_domain() {
            LabelDomain::Real if y.is_finite() => Ok(()),
            LabelDomain::PlusMinusOne if y == 1.0 || y == -1.0 => Ok(()),
            domain => Err(contract(format!("label {y} outside the {domain:?} label domain"))),
        }
    }

    pub fn loss(&self, y: f64, t: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(self.value(y, t))
    }

    pub fn dloss(&self, y: f64, t: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(self.d1(y, t))
    }

    pub fn ddloss(&self, y: f64, t: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(self.d2(y, t))
    }

    /// Unchecked `L(y, t)`.
    #[inline]
    pub fn value(&self, y: f64, t: f64) -> f64 {
        match *self {
            Self::LsRegression => (y - t) * (y - t),
            Self::LogisticRegression { sigma } => 2.0 * sigma * log_cosh((y - t) / (2.0 * sigma)),
            Self::LsClassification => (1.0 - y * t) * (1.0 - y * t),
            Self::LogisticClassification => softplus(-y * t),
            Self::LogisticClassificationShifted => softplus(y - t),
        }
    }

    /// Unchecked `∂L/∂t`.
    #[inline]
    pub fn d1(&self, y: f64, t: f64) -> f64 {
        match *self {
            Self::LsRegression => -2.0 * (y - t),
            Self::LogisticRegression { sigma } => -((y - t) / (2.0 * sigma)).tanh(),
            Self::LsClassification => -2.0 * y * (1.0 - y * t),
            Self::LogisticClassification => -y * sigmoid(-y * t),
            Self::LogisticClassificationShifted => -sigmoid(y - t),
        }
    }

    /// Unchecked `∂²L/∂t²`.
    #[inline]
    pub fn d2(&self, y: f64, t: f64) -> f64 {
        match *self {
            Self::LsRegression => 2.0,
            Self::LogisticRegression { sigma } => {
                let c = ((y - t) / (2.0 * sigma)).cosh();
                if c.is_finite() {
                    1.0 / (2.0 * sigma * c * c)
                } else {
                    0.0
                }
            }
            Self::LsClassification => 2.0 * y * y,
            Self::LogisticClassification => y * y * sigmoid(y * t) * sigmoid(-y * t),
            Self::LogisticClassificationShifted => {
                let s = sigmoid(y - t);
                s * (1.0 - s)
            }
        }
    }

    /// Global bound on `L''`, independent of `(y, t)`.
    pub fn curvature_bound(&self) -> f64 {
        match *self {
            Self::LsRegression | Self::LsClassification => 2.0,
            Self::LogisticRegression { sigma } => 1.0 / (2.0 * sigma),
            Self::LogisticClassification | Self::LogisticClassificationShifted => 0.25,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_values() {
        let l = LossSpec::LsRegression;
        assert_eq!(l.loss(2.0, 5.0).unwrap(), 9.0);
        assert_eq!(l.dloss(1.5, 1.5).unwrap(), 0.0);
        assert_eq!(l.ddloss(-3.0, 8.0).unwrap(), 2.0);
        assert_eq!(LossSpec::LsClassification.loss(1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn logistic_regression_at_zero_residual() {
        let l = LossSpec::logistic_regression(0.5).unwrap();
        assert!(l.loss(0.7, 0.7).unwrap().abs() < 1e-15);
        assert_eq!(l.dloss(0.7, 0.7).unwrap(), 0.0);
        assert!((l.ddloss(0.7, 0.7).unwrap() - 1.0).abs() < 1e-15);
        assert!((l.dloss(1.0, 0.0).unwrap() + 1f64.tanh()).abs() < 1e-15);
        assert!((l.dloss(1.0, 0.0).unwrap() + 0.761_594_16).abs() < 1e-8);
    }

    #[test]
    fn logistic_regression_matches_literal_formula() {
        let sigma = 0.5;
        let l = LossSpec::logistic_regression(sigma).unwrap();
        for &(y, t) in &[(0.3, -1.2), (2.0, 1.9), (-4.0, 3.0)] {
            let u: f64 = (y - t) / sigma;
            let literal = -sigma * (4.0 * u.exp() / (1.0 + u.exp()).powi(2)).ln();
            assert!((l.value(y, t) - literal).abs() < 1e-12);
        }
        // far tails stay finite
        assert!(l.value(1e6, -1e6).is_finite());
        assert_eq!(l.d2(1e6, -1e6), 0.0);
    }

    #[test]
    fn classification_labels_are_checked() {
        assert!(LossSpec::LogisticClassification.loss(0.5, 0.0).is_err());
        assert!(LossSpec::LsClassification.dloss(2.0, 0.0).is_err());
        assert!(LossSpec::LogisticClassificationShifted.ddloss(-1.0, 0.0).is_ok());
    }
}
