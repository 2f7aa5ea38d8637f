//! Activation functions and their derivatives.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Scalar activation applied component-wise in the residual update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
    /// Growing cosine unit, `x cos x`.
    Gcu,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Identity,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Gcu,
    ];

    #[inline]
    pub fn value(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Gcu => x * x.cos(),
        }
    }

    /// Derivative; the ReLU kink at 0 uses the subgradient 0.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Gcu => x.cos() - x * x.sin(),
        }
    }

    /// `sup |σ|` when the activation is bounded.
    pub fn bound(self) -> Option<f64> {
        match self {
            Activation::Sigmoid | Activation::Tanh => Some(1.0),
            _ => None,
        }
    }

    pub fn is_bounded(self) -> bool {
        self.bound().is_some()
    }

    /// Some `x` with `σ(x) = y`, or `None` when `y` is outside the image.
    pub fn preimage(self, y: f64) -> Option<f64> {
        if !y.is_finite() {
            return None;
        }
        match self {
            Activation::Identity => Some(y),
            Activation::Relu => (y > 0.0).then_some(y),
            Activation::Sigmoid => (y > 0.0 && y < 1.0).then(|| (y / (1.0 - y)).ln()),
            Activation::Tanh => (y > -1.0 && y < 1.0).then(|| y.atanh()),
            Activation::Gcu => gcu_preimage(y),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// x cos x is unbounded in both directions; scan outward from the origin for a
// sign change and bisect inside it.
fn gcu_preimage(y: f64) -> Option<f64> {
    if y == 0.0 {
        return Some(0.0);
    }
    let f = |x: f64| x * x.cos() - y;
    let dir = y.signum();
    let step = 0.05;
    let mut lo = 0.0;
    for i in 1..=200_000 {
        let hi = dir * step * i as f64;
        if f(lo) * f(hi) <= 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if f(a) * f(m) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Some(0.5 * (a + b));
        }
        lo = hi;
    }
    None
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Gcu => "gcu",
        };
        f.write_str(s)
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "id" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "sigmoid" | "logistic" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "gcu" => Ok(Activation::Gcu),
            other => Err(Error::InvalidConfig {
                field: "activation",
                reason: format!("unknown activation `{other}`"),
            }),
        }
    }
}

/// Free-function form of [`Activation::value`].
pub fn activation_eval(a: Activation, x: f64) -> f64 {
    a.value(x)
}
