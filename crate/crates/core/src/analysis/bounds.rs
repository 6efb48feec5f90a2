//! Upper bounds on the error of treating a misaligned pooling layer as
//! shiftable, for inputs band-limited to `f_max` with `sup |x| = A`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoolingBoundInput {
    pub amplitude: f64,
    pub f_max_hz: f64,
    pub f_s_hz: f64,
    pub pool_len: usize,
}

impl PoolingBoundInput {
    pub fn new(amplitude: f64, f_max_hz: f64, f_s_hz: f64, pool_len: usize) -> Result<Self> {
        let inp = Self {
            amplitude,
            f_max_hz,
            f_s_hz,
            pool_len,
        };
        inp.validate()?;
        Ok(inp)
    }

    fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !(self.f_max_hz >= 0.0) || !(self.f_s_hz > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "need A >= 0, f_max >= 0, f_s > 0: {self:?}"
            )));
        }
        if self.pool_len == 0 {
            return Err(Error::InvalidSpec("pool length must be >= 1".into()));
        }
        if self.f_max_hz >= self.f_s_hz / 2.0 {
            return Err(Error::InvalidSpec(format!(
                "f_max = {} Hz is not below the Nyquist frequency of f_s = {} Hz",
                self.f_max_hz, self.f_s_hz
            )));
        }
        Ok(())
    }
}

/// Per-sample bound relative to `A`: `min(2π f_max / f_s, 2)`.
pub(crate) fn relative_step_bound(f_max_hz: f64, f_s_hz: f64) -> f64 {
    (2.0 * PI * f_max_hz / f_s_hz).min(2.0)
}

/// Bound on `|x[i] - x[i-1]|`: `2π A f_max / f_s`, saturating at `2A` once
/// `f_max > f_s / π`.
pub fn consecutive_sample_bound(inp: &PoolingBoundInput) -> Result<f64> {
    inp.validate()?;
    Ok(inp.amplitude * relative_step_bound(inp.f_max_hz, inp.f_s_hz))
}

/// Bound on the shift error of First, Max and Average pooling alike:
/// `(L_p - 1)` consecutive-sample steps.
pub fn pooling_error_bound(inp: &PoolingBoundInput) -> Result<f64> {
    Ok((inp.pool_len - 1) as f64 * consecutive_sample_bound(inp)?)
}

/// [`pooling_error_bound`] divided by `A` and capped at 2, the largest
/// possible gap between two values bounded by `A`.
pub fn capped_relative_bound(inp: &PoolingBoundInput) -> Result<f64> {
    inp.validate()?;
    Ok(((inp.pool_len - 1) as f64 * relative_step_bound(inp.f_max_hz, inp.f_s_hz)).min(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consecutive_examples() {
        let dc = PoolingBoundInput::new(1.0, 0.0, 256.0, 4).unwrap();
        assert_eq!(consecutive_sample_bound(&dc).unwrap(), 0.0);
        let slow = PoolingBoundInput::new(1.0, 4.0, 256.0, 2).unwrap();
        assert!(
            (consecutive_sample_bound(&slow).unwrap() - 0.098_174_770_424_681_04).abs() < 1e-15
        );
        let fast = PoolingBoundInput::new(1.0, 0.4 * 256.0, 256.0, 2).unwrap();
        assert_eq!(consecutive_sample_bound(&fast).unwrap(), 2.0);
        let scaled = PoolingBoundInput::new(3.0, 0.45 * 100.0, 100.0, 2).unwrap();
        assert_eq!(consecutive_sample_bound(&scaled).unwrap(), 6.0);
    }

    #[test]
    fn pooling_examples() {
        let single = PoolingBoundInput::new(2.5, 30.0, 100.0, 1).unwrap();
        assert_eq!(pooling_error_bound(&single).unwrap(), 0.0);
        let sat = PoolingBoundInput::new(1.5, 40.0, 100.0, 6).unwrap();
        assert_eq!(pooling_error_bound(&sat).unwrap(), 2.0 * 1.5 * 5.0);
        assert_eq!(capped_relative_bound(&sat).unwrap(), 2.0);
        let small = PoolingBoundInput::new(1.0, 1.0, 256.0, 4).unwrap();
        assert!((pooling_error_bound(&small).unwrap() - 0.073_631_077_818_510_78).abs() < 1e-15);
        assert!((capped_relative_bound(&small).unwrap() - 0.073_631_077_818_510_78).abs() < 1e-15);
    }

    #[test]
    fn nyquist_enforced() {
        assert!(PoolingBoundInput::new(1.0, 50.0, 100.0, 2).is_err());
        assert!(PoolingBoundInput::new(-1.0, 5.0, 100.0, 2).is_err());
        assert!(PoolingBoundInput::new(1.0, 5.0, 100.0, 0).is_err());
        let bad = PoolingBoundInput {
            amplitude: 1.0,
            f_max_hz: 60.0,
            f_s_hz: 100.0,
            pool_len: 2,
        };
        assert!(consecutive_sample_bound(&bad).is_err());
    }

    #[test]
    fn bound_monotone_in_pool_len() {
        let mut prev = 0.0;
        for lp in 1..200 {
            let b = capped_relative_bound(&PoolingBoundInput::new(1.0, 1.0, 256.0, lp).unwrap())
                .unwrap();
            assert!(b >= prev);
            prev = b;
        }
        assert_eq!(prev, 2.0);
    }
}
