//! Real branches of the Lambert W function via Halley iteration.

use serde::{Deserialize, Serialize};

use super::{NumericsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambertBranch {
    /// `W0`, defined on `[-1/e, inf)`, values `>= -1`.
    Principal,
    /// `W-1`, defined on `[-1/e, 0)`, values `<= -1`.
    MinusOne,
}

// 1/e split into a double-double pair so `x + 1/e` keeps its low bits near the
// branch point.
const INV_E_HI: f64 = 0.36787944117144233;
const INV_E_LO: f64 = -1.2428753672788363e-17;

/// Solve `w e^w = x` on the requested real branch.
pub fn lambert_w(x: f64, branch: LambertBranch) -> Result<f64> {
    if x.is_nan() {
        return Err(NumericsError::Domain {
            function: "lambert_w",
            value: x,
        });
    }
    // distance from the branch point, x + 1/e
    let q = (x + INV_E_HI) + INV_E_LO;
    if x < -INV_E_HI {
        return Err(NumericsError::NoRealSolution(x));
    }
    let q = q.max(0.0);
    if branch == LambertBranch::MinusOne && x >= 0.0 {
        return Err(NumericsError::Domain {
            function: "lambert_w (branch -1)",
            value: x,
        });
    }
    if q == 0.0 {
        return Ok(-1.0);
    }
    if branch == LambertBranch::Principal && x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }

    let p = (2.0 * std::f64::consts::E * q).sqrt();
    let guess = match branch {
        LambertBranch::Principal => {
            if x < -0.32 {
                branch_point_series(p)
            } else {
                let l = x.ln_1p();
                l * (1.0 - (1.0 + l).ln() / (2.0 + l))
            }
        }
        LambertBranch::MinusOne => {
            if x < -0.25 {
                branch_point_series(-p)
            } else {
                let l1 = (-x).ln();
                let l2 = (-l1).ln();
                l1 - l2 + l2 / l1
            }
        }
    };
    if p < 1e-4 {
        // the series is already exact to rounding this close to -1/e
        return Ok(guess);
    }
    Ok(halley(x, guess))
}

fn branch_point_series(p: f64) -> f64 {
    -1.0 + p * (1.0
        + p * (-1.0 / 3.0
            + p * (11.0 / 72.0 + p * (-43.0 / 540.0 + p * (769.0 / 17280.0)))))
}

fn halley(x: f64, mut w: f64) -> f64 {
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        if !step.is_finite() {
            break;
        }
        w -= step;
        if step.abs() <= 2.0 * f64::EPSILON * w.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use LambertBranch::*;

    fn residual_ok(x: f64, w: f64) -> bool {
        (w * w.exp() - x).abs() < 1e-12 * x.abs().max(1e-300)
    }

    #[test]
    fn known_values() {
        assert_eq!(lambert_w(0.0, Principal).unwrap(), 0.0);
        let bp = -1.0 / std::f64::consts::E;
        assert!((lambert_w(bp, Principal).unwrap() + 1.0).abs() < 1e-7);
        assert!((lambert_w(bp, MinusOne).unwrap() + 1.0).abs() < 1e-7);
        assert!((lambert_w(-0.2, Principal).unwrap() + 0.2591711018190737644766).abs() < 1e-14);
        assert!((lambert_w(-0.2, MinusOne).unwrap() + 2.542641357773526332798).abs() < 1e-13);
        assert!((lambert_w(1.0, Principal).unwrap() - 0.5671432904097838730).abs() < 1e-15);
        assert!((lambert_w(10.0, Principal).unwrap() - 1.745528002740699383).abs() < 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert_eq!(
            lambert_w(-0.4, Principal),
            Err(NumericsError::NoRealSolution(-0.4))
        );
        assert!(lambert_w(0.5, MinusOne).is_err());
        assert!(lambert_w(0.0, MinusOne).is_err());
    }

    #[test]
    fn residual_grid_principal() {
        let n = 10_000;
        for i in 0..n {
            // dense near the branch point, then log-spaced up to 1e6
            let x = if i < n / 2 {
                -INV_E_HI + INV_E_HI * (i as f64 / (n / 2) as f64).powi(2)
            } else {
                let t = (i - n / 2) as f64 / (n / 2) as f64;
                10f64.powf(-12.0 + 18.0 * t)
            };
            let w = lambert_w(x, Principal).unwrap();
            assert!(w >= -1.0);
            assert!(residual_ok(x, w), "x={x:e} w={w}");
        }
    }

    #[test]
    fn residual_grid_minus_one() {
        let n = 10_000;
        for i in 0..n {
            let x = if i < n / 2 {
                -INV_E_HI + INV_E_HI * (i as f64 / (n / 2) as f64).powi(2)
            } else {
                let t = (i - n / 2) as f64 / (n / 2) as f64;
                -(10f64.powf(-300.0 + 299.5 * t))
            };
            if x >= 0.0 {
                continue;
            }
            let w = lambert_w(x, MinusOne).unwrap();
            assert!(w <= -1.0);
            assert!(residual_ok(x, w), "x={x:e} w={w}");
        }
    }
}
