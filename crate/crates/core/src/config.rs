use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SdtwError};
use crate::scalar::Real;

/// Where pairwise costs come from during the DP sweeps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum CostMode {
    /// Materialize the `B x N x M` cost tensor once, then look costs up.
    #[default]
    Unfused,
    /// Recompute each cost from the sequences and cached norms when a cell needs it.
    Fused,
}

/// Arithmetic space of the backward recurrence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum BackwardSpace {
    #[default]
    Log,
    /// Reference recurrence with exponentiated transition weights. Overflows for small gamma.
    Linear,
}

impl fmt::Display for CostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostMode::Unfused => "unfused",
            CostMode::Fused => "fused",
        })
    }
}

impl FromStr for CostMode {
    type Err = SdtwError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unfused" => Ok(CostMode::Unfused),
            "fused" => Ok(CostMode::Fused),
            _ => Err(SdtwError::InvalidArgument(format!("unknown cost mode {s:?}"))),
        }
    }
}

impl fmt::Display for BackwardSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackwardSpace::Log => "log",
            BackwardSpace::Linear => "linear",
        })
    }
}

impl FromStr for BackwardSpace {
    type Err = SdtwError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(BackwardSpace::Log),
            "linear" => Ok(BackwardSpace::Linear),
            _ => Err(SdtwError::InvalidArgument(format!("unknown backward space {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdtwConfig<T> {
    pub gamma: T,
    /// Sakoe-Chiba half-width on 0-based indices; 0 disables the band.
    pub bandwidth: usize,
    pub cost_mode: CostMode,
    pub backward_space: BackwardSpace,
    pub normalized: bool,
}

impl<T: Real> SdtwConfig<T> {
    pub fn new(gamma: T) -> Self {
        Self {
            gamma,
            bandwidth: 0,
            cost_mode: CostMode::default(),
            backward_space: BackwardSpace::default(),
            normalized: false,
        }
    }

    pub fn with_bandwidth(mut self, bandwidth: usize) -> Self {
        self.bandwidth = bandwidth;
        self
    }

    pub fn with_cost_mode(mut self, mode: CostMode) -> Self {
        self.cost_mode = mode;
        self
    }

    pub fn with_backward(mut self, space: BackwardSpace) -> Self {
        self.backward_space = space;
        self
    }

    pub fn with_normalized(mut self, normalized: bool) -> Self {
        self.normalized = normalized;
        self
    }

    pub fn validate_gamma(&self) -> Result<()> {
        if self.gamma.is_finite() && self.gamma > T::zero() {
            Ok(())
        } else {
            Err(SdtwError::InvalidGamma(self.gamma.as_f64()))
        }
    }

    /// Checks the config against an `n x m` grid.
    pub fn validate_for(&self, n: usize, m: usize) -> Result<()> {
        self.validate_gamma()?;
        check_bandwidth(n, m, self.bandwidth)?;
        if self.normalized && n != m {
            return Err(SdtwError::UnequalLengths { n, m });
        }
        Ok(())
    }

    /// Whether 0-based cell `(i, j)` lies inside the band.
    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        self.bandwidth == 0 || i.abs_diff(j) <= self.bandwidth
    }
}

pub(crate) fn check_bandwidth(n: usize, m: usize, bandwidth: usize) -> Result<()> {
    if bandwidth != 0 && bandwidth < n.abs_diff(m) {
        return Err(SdtwError::BandTooNarrow { bandwidth, n, m });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_must_be_positive() {
        assert!(SdtwConfig::new(0.0f64).validate_gamma().is_err());
        assert!(SdtwConfig::new(-1.0f64).validate_gamma().is_err());
        assert!(SdtwConfig::new(f64::NAN).validate_gamma().is_err());
        assert!(SdtwConfig::new(1e-6f32).validate_gamma().is_ok());
    }

    #[test]
    fn bandwidth_must_cover_length_difference() {
        let cfg = SdtwConfig::new(1.0f64).with_bandwidth(1);
        assert!(cfg.validate_for(3, 4).is_ok());
        assert_eq!(
            cfg.validate_for(3, 5),
            Err(SdtwError::BandTooNarrow {
                bandwidth: 1,
                n: 3,
                m: 5
            })
        );
        assert!(SdtwConfig::new(1.0f64).validate_for(1, 50).is_ok());
    }

    #[test]
    fn normalized_requires_square_grid() {
        let cfg = SdtwConfig::new(1.0f64).with_normalized(true);
        assert_eq!(cfg.validate_for(2, 3), Err(SdtwError::UnequalLengths { n: 2, m: 3 }));
        assert!(cfg.validate_for(3, 3).is_ok());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [CostMode::Fused, CostMode::Unfused] {
            assert_eq!(m.to_string().parse::<CostMode>().unwrap(), m);
        }
        for s in [BackwardSpace::Log, BackwardSpace::Linear] {
            assert_eq!(s.to_string().parse::<BackwardSpace>().unwrap(), s);
        }
        assert!("nope".parse::<CostMode>().is_err());
    }
}
