use crate::error::{Error, Result};

/// Closed-form moment feedback functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Nonlinearity {
    /// `a e^{-x}`
    ExpDecay { a: f64 },
    /// `1 + e^{-1} - e^{-x^4}`
    ShiftedGaussianQuartic,
    /// `c x`
    Linear { c: f64 },
    /// `a (b - e^{-x^2 / s})`
    PrionSigmoid { a: f64, b: f64, s: f64 },
    /// `c`, useful for degenerate cases.
    Constant { c: f64 },
}

impl Nonlinearity {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::ExpDecay { a } => a * (-x).exp(),
            Nonlinearity::ShiftedGaussianQuartic => 1.0 + (-1.0f64).exp() - (-x.powi(4)).exp(),
            Nonlinearity::Linear { c } => c * x,
            Nonlinearity::PrionSigmoid { a, b, s } => a * (b - (-x * x / s).exp()),
            Nonlinearity::Constant { c } => c,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::ExpDecay { a } => -a * (-x).exp(),
            Nonlinearity::ShiftedGaussianQuartic => 4.0 * x.powi(3) * (-x.powi(4)).exp(),
            Nonlinearity::Linear { c } => c,
            Nonlinearity::PrionSigmoid { a, s, .. } => a * 2.0 * x / s * (-x * x / s).exp(),
            Nonlinearity::Constant { .. } => 0.0,
        }
    }

    /// `sup_{x >= 0} value(x)` when finite.
    pub fn sup(&self) -> Option<f64> {
        match *self {
            Nonlinearity::ExpDecay { a } => Some(a.max(0.0)),
            Nonlinearity::ShiftedGaussianQuartic => Some(1.0 + (-1.0f64).exp()),
            Nonlinearity::Linear { c } => (c <= 0.0).then_some(0.0),
            Nonlinearity::PrionSigmoid { a, b, .. } => {
                Some(if a >= 0.0 { a * b } else { a * (b - 1.0) })
            }
            Nonlinearity::Constant { c } => Some(c),
        }
    }

    /// Whether the function is nondecreasing on `[0, inf)`.
    pub fn is_increasing(&self) -> bool {
        match *self {
            Nonlinearity::ExpDecay { a } => a <= 0.0,
            Nonlinearity::ShiftedGaussianQuartic => true,
            Nonlinearity::Linear { c } => c >= 0.0,
            Nonlinearity::PrionSigmoid { a, s, .. } => a >= 0.0 && s > 0.0,
            Nonlinearity::Constant { .. } => true,
        }
    }

    /// Solves `value(x) = y` for `x >= 0`. Only defined for strictly
    /// increasing members of the catalog.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        match *self {
            Nonlinearity::Linear { c } if c > 0.0 => {
                if y < 0.0 {
                    return Err(Error::Domain(format!("{y} is outside the range of {}", self)));
                }
                Ok(y / c)
            }
            Nonlinearity::ShiftedGaussianQuartic | Nonlinearity::PrionSigmoid { .. }
                if self.is_increasing() =>
            {
                let lo = self.value(0.0);
                if y < lo {
                    return Err(Error::Domain(format!("{y} is outside the range of {}", self)));
                }
                let mut hi = 1.0;
                while self.value(hi) < y {
                    hi *= 2.0;
                    if hi > 1e12 {
                        return Err(Error::Domain(format!("{y} is outside the range of {}", self)));
                    }
                }
                crate::numerics::bisect(|x| self.value(x) - y, 0.0, hi, 1e-15 * hi.max(1.0))
            }
            _ => Err(Error::Unsupported(format!("{} has no inverse", self))),
        }
    }

    /// Parses the catalog syntax used in configuration files, e.g.
    /// `exp-decay:2`, `linear:0.9`, `prion-sigmoid:6.3,1.1,20`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, args) = match text.split_once(':') {
            Some((n, a)) => (n.trim(), a.trim()),
            None => (text.trim(), ""),
        };
        let nums: Vec<f64> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad number '{s}' in '{text}'")))
                })
                .collect::<Result<_>>()?
        };
        let want = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(Error::Config(format!("'{name}' takes {n} parameter(s), got {}", nums.len())))
            }
        };
        match name {
            "exp-decay" => want(1).map(|_| Nonlinearity::ExpDecay { a: nums[0] }),
            "shifted-gaussian-quartic" => want(0).map(|_| Nonlinearity::ShiftedGaussianQuartic),
            "linear" => want(1).map(|_| Nonlinearity::Linear { c: nums[0] }),
            "prion-sigmoid" => want(3).map(|_| Nonlinearity::PrionSigmoid {
                a: nums[0],
                b: nums[1],
                s: nums[2],
            }),
            "constant" => want(1).map(|_| Nonlinearity::Constant { c: nums[0] }),
            other => Err(Error::Config(format!("unknown nonlinearity '{other}'"))),
        }
    }
}

impl std::fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Nonlinearity::ExpDecay { a } => write!(f, "exp-decay:{a}"),
            Nonlinearity::ShiftedGaussianQuartic => write!(f, "shifted-gaussian-quartic"),
            Nonlinearity::Linear { c } => write!(f, "linear:{c}"),
            Nonlinearity::PrionSigmoid { a, b, s } => write!(f, "prion-sigmoid:{a},{b},{s}"),
            Nonlinearity::Constant { c } => write!(f, "constant:{c}"),
        }
    }
}
