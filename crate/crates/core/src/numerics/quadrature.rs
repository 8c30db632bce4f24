//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{NumericsError, Result};

/// Tolerances for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-9,
            max_subdivisions: 200,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Self {
        assert!(abs_tol > 0.0 && rel_tol > 0.0, "tolerances must be positive");
        assert!(max_subdivisions >= 1);
        Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
        }
    }

    /// Tolerances for error-probability integrals, whose values can sit many
    /// orders of magnitude below any fixed absolute tolerance. Accuracy is
    /// driven by the relative tolerance.
    pub fn probability() -> Self {
        Self {
            abs_tol: 1e-30,
            rel_tol: 1e-10,
            max_subdivisions: 400,
        }
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut result_k = fc * WGK[7];
    let mut result_g = fc * WG[3];
    let mut result_abs = result_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        result_k += WGK[j] * (f1 + f2);
        result_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            result_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * result_k;
    let mut result_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        result_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = result_k * half;
    let result_abs = result_abs * half.abs();
    let result_asc = result_asc * half.abs();
    let mut error = ((result_k - result_g) * half).abs();
    if result_asc != 0.0 && error != 0.0 {
        error = result_asc * (200.0 * error / result_asc).powf(1.5).min(1.0);
    }
    if result_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * result_abs);
    }
    Segment { a, b, value, error }
}

/// Adaptive integral of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    integrate_breakpoints(f, &[a, b], spec)
}

/// Adaptive integral over `[points[0], points[last]]`, starting from the
/// given partition. Interior points mark known kinks or sharp transitions.
/// Points must be nondecreasing; zero-width pieces are skipped.
pub fn integrate_breakpoints<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|p| p.is_nan()) {
        return Err(NumericsError::Domain {
            function: "integrate (limits)",
            value: f64::NAN,
        });
    }
    if points.windows(2).any(|w| w[1] < w[0]) {
        return Err(NumericsError::Domain {
            function: "integrate (limits must be ordered)",
            value: points[0],
        });
    }
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod15(&f, w[0], w[1]));
        }
    }
    if heap.is_empty() {
        return Ok(0.0);
    }
    let mut subdivisions = 0;
    loop {
        let (total, err): (f64, f64) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        let tol = spec.abs_tol.max(spec.rel_tol * total.abs());
        if err <= tol {
            return Ok(total);
        }
        if subdivisions >= spec.max_subdivisions || !total.is_finite() {
            return Err(NumericsError::Accuracy {
                estimate: total,
                error: err,
            });
        }
        let worst = heap.pop().expect("nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval cannot be split further in floating point
            return Err(NumericsError::Accuracy {
                estimate: total,
                error: err,
            });
        }
        heap.push(kronrod15(&f, worst.a, mid));
        heap.push(kronrod15(&f, mid, worst.b));
        subdivisions += 1;
    }
}

/// Integral over `[a, b]` of an integrand behaving like `(x - a)^(gamma - 1)`
/// at the lower endpoint. Substitutes `u = ((x - a)/(b - a))^gamma`, which
/// turns the pure power law into a constant.
pub fn integrate_power_singular<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    gamma: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(NumericsError::Domain {
            function: "integrate_power_singular (exponent)",
            value: gamma,
        });
    }
    let width = b - a;
    let inv = 1.0 / gamma;
    integrate(
        |u: f64| {
            let t = (u.ln() * inv).exp();
            let jac = width * inv * t / u;
            f(a + width * t) * jac
        },
        0.0,
        1.0,
        spec,
    )
}

/// Integral over `[a, inf)` via `x = a + t / (1 - t)`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    integrate(
        |t: f64| {
            let s = 1.0 - t;
            f(a + t / s) / (s * s)
        },
        0.0,
        1.0,
        spec,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    fn check(got: f64, want: f64, spec: &QuadratureSpec) {
        let tol = spec.abs_tol.max(spec.rel_tol * want.abs()) * 10.0;
        assert!((got - want).abs() <= tol, "got {got}, want {want}");
    }

    #[test]
    fn trivial_examples() {
        let spec = QuadratureSpec::default();
        check(integrate(|_| 1.0, 0.0, 1.0, &spec).unwrap(), 1.0, &spec);
        let g = 0.3;
        let v = integrate_power_singular(|h: f64| g * h.powf(g - 1.0), 0.0, 1.0, g, &spec).unwrap();
        check(v, 1.0, &spec);
        let v = integrate_semi_infinite(|t: f64| (-t).exp(), 0.0, &spec).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        assert_eq!(integrate(|x| x, 2.0, 2.0, &spec).unwrap(), 0.0);
    }

    #[test]
    fn twenty_known_integrals() {
        let spec = QuadratureSpec::default();
        type Case = (Box<dyn Fn(f64) -> f64>, f64, f64, f64);
        let cases: Vec<Case> = vec![
            (Box::new(|x| x), 0.0, 1.0, 0.5),
            (Box::new(|x| x * x), 0.0, 3.0, 9.0),
            (Box::new(|x| x.powi(7) - 2.0 * x), -1.0, 2.0, 255.0 / 8.0 - 3.0),
            (Box::new(|x: f64| x.exp()), 0.0, 1.0, E - 1.0),
            (Box::new(|x: f64| (-x).exp()), 0.0, 10.0, 1.0 - (-10.0f64).exp()),
            (Box::new(|x: f64| x.sin()), 0.0, PI, 2.0),
            (Box::new(|x: f64| x.cos().powi(2)), 0.0, 2.0 * PI, PI),
            (Box::new(|x: f64| 1.0 / (1.0 + x * x)), -1.0, 1.0, PI / 2.0),
            (Box::new(|x: f64| x.ln()), 1.0, E, 1.0),
            (Box::new(|x: f64| (-x * x).exp()), -8.0, 8.0, PI.sqrt() * libm::erf(8.0)),
            (Box::new(|x: f64| 1.0 / x), 1.0, 100.0, 100f64.ln()),
            (Box::new(|x: f64| x.sqrt()), 0.0, 4.0, 16.0 / 3.0),
            (Box::new(|x: f64| (50.0 * x).sin().powi(2)), 0.0, PI, PI / 2.0),
            (Box::new(|x: f64| x * (-x).exp()), 0.0, 5.0, 1.0 - 6.0 * (-5.0f64).exp()),
            (Box::new(|x: f64| 1.0 / (1.0 + x)), 0.0, 1.0, 2f64.ln()),
            (Box::new(|x: f64| x.abs()), -1.0, 2.0, 2.5),
        ];
        for (i, (f, a, b, want)) in cases.into_iter().enumerate() {
            let got = integrate(f, a, b, &spec).unwrap_or_else(|e| panic!("case {i}: {e}"));
            check(got, want, &spec);
        }
        // power-law singular endpoints
        for &g in &[0.05, 0.3, 0.7] {
            let got =
                integrate_power_singular(|x: f64| x.powf(g - 1.0) * (1.0 + x), 0.0, 2.0, g, &spec)
                    .unwrap();
            let want = 2f64.powf(g) / g + 2f64.powf(g + 1.0) / (g + 1.0);
            check(got, want, &spec);
        }
        let got = integrate_semi_infinite(|x: f64| 1.0 / (1.0 + x * x), 0.0, &spec).unwrap();
        check(got, PI / 2.0, &spec);
    }

    #[test]
    fn breakpoints_help_with_steps() {
        let spec = QuadratureSpec::default();
        let step = |x: f64| if x < 0.3 { 1.0 } else { 0.0 };
        let v = integrate_breakpoints(step, &[0.0, 0.3, 1.0], &spec).unwrap();
        assert!((v - 0.3).abs() < 1e-14);
    }

    #[test]
    fn nonconvergence_reports_best_estimate() {
        let spec = QuadratureSpec::new(1e-15, 1e-15, 3);
        let r = integrate(|x: f64| (1.0 / x).sin(), 0.0, 1.0, &spec);
        match r {
            Err(NumericsError::Accuracy { estimate, error }) => {
                assert!(estimate.is_finite() && error > 0.0)
            }
            other => panic!("expected accuracy error, got {other:?}"),
        }
    }
}
