//! Hidden-layer activation functions and their analytic derivatives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Gelu,
    GeluNew,
    Silu,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown activation {0:?} (expected relu, gelu, gelu_new or silu)")]
pub struct UnknownActivation(pub String);

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [Self::Relu, Self::Gelu, Self::GeluNew, Self::Silu];

    pub fn name(self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Gelu => "gelu",
            Self::GeluNew => "gelu_new",
            Self::Silu => "silu",
        }
    }

    /// Label used in report tables, e.g. `GeLu-New`.
    pub fn display_label(self) -> &'static str {
        match self {
            Self::Relu => "ReLu",
            Self::Gelu => "GeLu",
            Self::GeluNew => "GeLu-New",
            Self::Silu => "SiLu",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = UnknownActivation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownActivation(s.to_string()))
    }
}

const SQRT_2_OVER_PI: Float = 0.797_884_560_802_865_4;
const GELU_CUBIC: Float = 0.044_715;
const INV_SQRT_2PI: Float = 0.398_942_280_401_432_7;

#[cfg(not(feature = "f32"))]
pub fn erf(x: Float) -> Float {
    libm::erf(x)
}

#[cfg(feature = "f32")]
pub fn erf(x: Float) -> Float {
    libm::erff(x)
}

/// Standard normal CDF.
pub fn phi_cdf(x: Float) -> Float {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2 as Float))
}

/// Standard normal density.
pub fn phi_pdf(x: Float) -> Float {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

fn sigmoid(x: Float) -> Float {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn value(kind: ActivationKind, x: Float) -> Float {
    match kind {
        ActivationKind::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        ActivationKind::Gelu => 0.5 * x * (1.0 + erf(x / std::f64::consts::SQRT_2 as Float)),
        ActivationKind::GeluNew => {
            0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh())
        }
        ActivationKind::Silu => x * sigmoid(x),
    }
}

/// Analytic derivative. ReLU takes the subgradient 0 at exactly 0.
pub fn derivative(kind: ActivationKind, x: Float) -> Float {
    match kind {
        ActivationKind::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        // Φ(x) + x·φ(x)
        ActivationKind::Gelu => phi_cdf(x) + x * phi_pdf(x),
        ActivationKind::GeluNew => {
            let inner = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
            let t = inner.tanh();
            let d_inner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
            0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
        }
        // (1 + e^{-x} + x·e^{-x}) / (1 + e^{-x})², rewritten as σ(x)·(1 + x·(1 − σ(x)))
        // so large negative inputs do not overflow e^{-x}.
        ActivationKind::Silu => {
            let s = sigmoid(x);
            s * (1.0 + x * (1.0 - s))
        }
    }
}

pub fn activate(kind: ActivationKind, x: &Tensor) -> Tensor {
    map(x, |v| value(kind, v))
}

pub fn activate_grad(kind: ActivationKind, x: &Tensor) -> Tensor {
    map(x, |v| derivative(kind, v))
}

fn map(x: &Tensor, f: impl Fn(Float) -> Float) -> Tensor {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::new(x.shape(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in ActivationKind::ALL {
            assert_eq!(k.name().parse::<ActivationKind>().unwrap(), k);
        }
        assert!("swish".parse::<ActivationKind>().is_err());
    }

    #[test]
    fn point_values() {
        assert_eq!(value(ActivationKind::Relu, -2.0), 0.0);
        assert_eq!(value(ActivationKind::Relu, 3.0), 3.0);
        for k in ActivationKind::ALL {
            assert_eq!(value(k, 0.0), 0.0);
        }
        assert!((derivative(ActivationKind::Gelu, 0.0) - 0.5).abs() < 1e-15);
        assert!((derivative(ActivationKind::Silu, 0.0) - 0.5).abs() < 1e-15);
        assert_eq!(derivative(ActivationKind::Relu, 0.0), 0.0);
    }

    #[test]
    fn silu_derivative_matches_printed_form() {
        for i in -40..=40 {
            let x = i as Float * 0.25;
            let e = (-x).exp();
            let printed = (1.0 + e + x * e) / ((1.0 + e) * (1.0 + e));
            assert!((derivative(ActivationKind::Silu, x) - printed).abs() < 1e-14);
        }
    }

    #[test]
    fn silu_tends_to_identity() {
        assert!((value(ActivationKind::Silu, 20.0) - 20.0).abs() < 1e-6);
        assert!(value(ActivationKind::Silu, -800.0).is_finite());
        assert!(derivative(ActivationKind::Silu, -800.0).is_finite());
    }
}
