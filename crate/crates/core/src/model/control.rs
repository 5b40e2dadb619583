use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A `T`-periodic scalar signal with closed-form mean and running integral.
#[derive(Clone, Debug, PartialEq)]
pub enum Signal {
    /// `mean + sum_n cos[n] cos(2 pi (n+1) t / T) + sin[n] sin(2 pi (n+1) t / T)`
    Fourier {
        period: f64,
        mean: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    /// Equal-length pieces over one period.
    Piecewise { period: f64, values: Vec<f64> },
}

impl Signal {
    pub fn constant(c: f64) -> Self {
        Signal::Fourier {
            period: 1.0,
            mean: c,
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    /// `mean + amplitude sin(2 pi t / period)`
    pub fn sine(mean: f64, amplitude: f64, period: f64) -> Self {
        Signal::Fourier {
            period,
            mean,
            cos: Vec::new(),
            sin: vec![amplitude],
        }
    }

    pub fn fourier(period: f64, mean: f64, cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::Domain(format!("period must be positive, got {period}")));
        }
        Ok(Signal::Fourier {
            period,
            mean,
            cos,
            sin,
        })
    }

    pub fn piecewise(period: f64, values: Vec<f64>) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::Domain(format!("period must be positive, got {period}")));
        }
        if values.is_empty() {
            return Err(Error::Domain("piecewise signal needs at least one value".into()));
        }
        Ok(Signal::Piecewise { period, values })
    }

    pub fn period(&self) -> f64 {
        match self {
            Signal::Fourier { period, .. } | Signal::Piecewise { period, .. } => *period,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Signal::Fourier { cos, sin, .. } => {
                cos.iter().chain(sin.iter()).all(|c| *c == 0.0)
            }
            Signal::Piecewise { values, .. } => values.iter().all(|v| *v == values[0]),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Fourier {
                period,
                mean,
                cos,
                sin,
            } => {
                let w = 2.0 * PI / period;
                let mut acc = *mean;
                for (n, c) in cos.iter().enumerate() {
                    acc += c * (w * (n + 1) as f64 * t).cos();
                }
                for (n, s) in sin.iter().enumerate() {
                    acc += s * (w * (n + 1) as f64 * t).sin();
                }
                acc
            }
            Signal::Piecewise { period, values } => {
                let m = values.len();
                let phase = (t / period).rem_euclid(1.0);
                let j = ((phase * m as f64).floor() as usize).min(m - 1);
                values[j]
            }
        }
    }

    /// Average over one period.
    pub fn mean(&self) -> f64 {
        match self {
            Signal::Fourier { mean, .. } => *mean,
            Signal::Piecewise { values, .. } => values.iter().sum::<f64>() / values.len() as f64,
        }
    }

    /// `∫_0^t` of the signal.
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            Signal::Fourier {
                period,
                mean,
                cos,
                sin,
            } => {
                let w = 2.0 * PI / period;
                let mut acc = mean * t;
                for (n, c) in cos.iter().enumerate() {
                    let wn = w * (n + 1) as f64;
                    acc += c * (wn * t).sin() / wn;
                }
                for (n, s) in sin.iter().enumerate() {
                    let wn = w * (n + 1) as f64;
                    acc += s * (1.0 - (wn * t).cos()) / wn;
                }
                acc
            }
            Signal::Piecewise { period, values } => {
                let m = values.len();
                let h = period / m as f64;
                let cycles = (t / period).floor();
                let full: f64 = values.iter().sum::<f64>() * h;
                let rest = t - cycles * period;
                let mut acc = cycles * full;
                let mut s = 0.0;
                for v in values {
                    if s + h <= rest {
                        acc += v * h;
                        s += h;
                    } else {
                        acc += v * (rest - s);
                        break;
                    }
                }
                acc
            }
        }
    }

    /// Minimum and maximum over one period.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Signal::Piecewise { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v))),
            Signal::Fourier { period, .. } => {
                let n = 4096;
                (0..n)
                    .map(|i| self.eval(period * i as f64 / n as f64))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
            }
        }
    }

    /// Parses `constant:c`, `sine:mean,amp,period`,
    /// `fourier:period,mean,c1,s1,c2,s2,...` or `piecewise:period,v1,v2,...`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, args) = match text.split_once(':') {
            Some((n, a)) => (n.trim(), a.trim()),
            None => (text.trim(), ""),
        };
        let nums: Vec<f64> = args
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad number '{s}' in '{text}'")))
            })
            .collect::<Result<_>>()?;
        match (name, nums.len()) {
            ("constant", 1) => Ok(Signal::constant(nums[0])),
            ("sine", 3) => {
                if nums[2] <= 0.0 {
                    return Err(Error::Config(format!("period must be positive in '{text}'")));
                }
                Ok(Signal::sine(nums[0], nums[1], nums[2]))
            }
            ("fourier", n) if n >= 2 && n % 2 == 0 => {
                let cos = nums[2..].iter().step_by(2).cloned().collect();
                let sin = nums[3..].iter().step_by(2).cloned().collect();
                Signal::fourier(nums[0], nums[1], cos, sin)
                    .map_err(|e| Error::Config(e.to_string()))
            }
            ("piecewise", n) if n >= 2 => Signal::piecewise(nums[0], nums[1..].to_vec())
                .map_err(|e| Error::Config(e.to_string())),
            _ => Err(Error::Config(format!("cannot parse signal '{text}'"))),
        }
    }
}

/// Time-periodic multipliers `V(t)` of the growth rate and `R(t)` of the
/// death rate.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicControl {
    v: Signal,
    r: Signal,
    period: f64,
}

impl PeriodicControl {
    pub fn new(v: Signal, r: Signal) -> Result<Self> {
        let period = match (v.is_constant(), r.is_constant()) {
            (true, true) => 1.0,
            (false, true) => v.period(),
            (true, false) => r.period(),
            (false, false) => {
                let (a, b) = (v.period(), r.period());
                if (a - b).abs() > 1e-12 * a.max(b) {
                    return Err(Error::Constraint(format!(
                        "V and R must share a period, got {a} and {b}"
                    )));
                }
                a
            }
        };
        let (vmin, _) = v.range();
        if !(vmin > 0.0) {
            return Err(Error::Constraint(format!("V(t) > 0 required, min is {vmin}")));
        }
        let (rmin, _) = r.range();
        if rmin < 0.0 {
            return Err(Error::Constraint(format!("R(t) >= 0 required, min is {rmin}")));
        }
        Ok(Self { v, r, period })
    }

    pub fn constant(v: f64, r: f64) -> Result<Self> {
        Self::new(Signal::constant(v), Signal::constant(r))
    }

    pub fn v(&self) -> &Signal {
        &self.v
    }
    pub fn r(&self) -> &Signal {
        &self.r
    }
    pub fn period(&self) -> f64 {
        self.period
    }
    pub fn is_constant(&self) -> bool {
        self.v.is_constant() && self.r.is_constant()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::adaptive_simpson;
    use proptest::prelude::*;

    #[test]
    fn sine_integral_and_mean() {
        let s = Signal::sine(1.0, 0.5, 1.0);
        assert_eq!(s.mean(), 1.0);
        let q = adaptive_simpson(|t| s.eval(t), 0.0, 2.3, 1e-12);
        assert!((s.integral(2.3) - q).abs() < 1e-10);
        assert!((s.integral(5.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn piecewise_integral() {
        let s = Signal::piecewise(2.0, vec![1.0, 3.0]).unwrap();
        assert_eq!(s.mean(), 2.0);
        assert!((s.integral(1.5) - (1.0 + 1.5)).abs() < 1e-14);
        assert!((s.integral(4.5) - 8.5).abs() < 1e-12);
        assert!((s.integral(5.5) - 10.5).abs() < 1e-12);
        assert_eq!(s.eval(2.5), 1.0);
        assert_eq!(s.eval(3.5), 3.0);
    }

    #[test]
    fn control_validation() {
        assert!(PeriodicControl::new(Signal::sine(1.0, 1.5, 1.0), Signal::constant(0.0)).is_err());
        assert!(PeriodicControl::new(Signal::constant(1.0), Signal::constant(-1.0)).is_err());
        assert!(
            PeriodicControl::new(Signal::sine(1.0, 0.5, 1.0), Signal::sine(1.0, 0.5, 2.0)).is_err()
        );
        let c = PeriodicControl::new(Signal::sine(1.0, 0.5, 3.0), Signal::constant(1.0)).unwrap();
        assert_eq!(c.period(), 3.0);
    }

    #[test]
    fn parse_signals() {
        assert_eq!(Signal::parse("constant:2").unwrap(), Signal::constant(2.0));
        assert_eq!(Signal::parse("sine:1,0.5,1").unwrap(), Signal::sine(1.0, 0.5, 1.0));
        let f = Signal::parse("fourier:1,1,0.1,0.2").unwrap();
        assert!((f.eval(0.0) - 1.1).abs() < 1e-15);
        assert!(Signal::parse("fourier:1,1,0.1").is_err());
        assert!(Signal::parse("piecewise:1,2,3").is_ok());
    }

    proptest! {
        #[test]
        fn exactly_periodic(t in 0.0f64..50.0, a in -0.9f64..0.9, b in -0.5f64..0.5) {
            let s = Signal::fourier(1.7, 1.0, vec![a], vec![0.0, b]).unwrap();
            let d = (s.eval(t + 1.7) - s.eval(t)).abs();
            prop_assert!(d < 1e-12);
            let inc = s.integral(t + 1.7) - s.integral(t);
            prop_assert!((inc - 1.7).abs() < 1e-11);
        }
    }
}
