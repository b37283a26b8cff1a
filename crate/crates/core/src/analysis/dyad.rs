//! Individual-versus-dyad comparison coordinates.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CompletionTime,
    /// Number of peaks in the ball speed profile.
    Np,
}

/// `x = (partner - self) / 2`, `y = dyad - self`; lower is better for both
/// metrics, so positive `x` means this participant outperformed the partner
/// and positive `y` means the dyad did worse than this participant alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadComparison {
    pub x: f64,
    pub y: f64,
    pub metric: Metric,
}

impl DyadComparison {
    /// The dyad beat the mean of the two individual performances.
    pub fn below_diagonal(&self) -> bool {
        self.y < self.x
    }
}

pub fn dyad_comparison(v_self: f64, v_partner: f64, v_dyad: f64, metric: Metric) -> DyadComparison {
    DyadComparison {
        x: 0.5 * (v_partner - v_self),
        y: v_dyad - v_self,
        metric,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let c = dyad_comparison(4.0, 6.0, 4.5, Metric::CompletionTime);
        assert_eq!((c.x, c.y), (1.0, 0.5));
        assert!(c.below_diagonal());
        let c = dyad_comparison(3.0, 3.0, 3.0, Metric::Np);
        assert_eq!((c.x, c.y), (0.0, 0.0));
        assert!(!c.below_diagonal());
    }

    proptest! {
        #[test]
        fn partner_swap(a in 0.0f64..20.0, b in 0.0f64..20.0, d in 0.0f64..20.0) {
            let ca = dyad_comparison(a, b, d, Metric::CompletionTime);
            let cb = dyad_comparison(b, a, d, Metric::CompletionTime);
            prop_assert_eq!(ca.x, -cb.x);
            prop_assert!((ca.y - cb.y - 2.0 * ca.x).abs() < 1e-9);
            prop_assert_eq!(ca.below_diagonal(), cb.below_diagonal());
            if (d - 0.5 * (a + b)).abs() > 1e-9 {
                prop_assert_eq!(ca.below_diagonal(), d < 0.5 * (a + b));
            }
        }
    }
}
