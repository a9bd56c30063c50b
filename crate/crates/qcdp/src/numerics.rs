//! Small numerical helpers shared by the modules: compensated summation,
//! the exponential integral and a Gauss-Legendre panel rule.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn csum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral E₁(x) = ∫_x^∞ e^{-t}/t dt for x > 0.
///
/// Power series below 1, modified Lentz continued fraction above.
pub fn exp_int_e1(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x < 1.0 {
        // E1(x) = -γ - ln x - Σ_{k≥1} (-x)^k / (k k!)
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= -x / kf;
            let add = term / kf;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // E1(x) = e^{-x} / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...)))
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Gauss-Legendre nodes and weights mapped to a list of panels.
#[derive(Debug, Clone)]
pub struct PanelRule {
    nodes: Vec<(f64, f64)>,
}

impl PanelRule {
    /// Reference rule of the given order on [-1, 1].
    pub fn new(order: usize) -> Self {
        let order = NonZeroUsize::new(order.max(1)).expect("order is at least 1");
        let gl = GaussLegendre::new(order);
        Self {
            nodes: gl.as_node_weight_pairs().to_vec(),
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights on [a, b].
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().map(move |&(x, w)| (mid + half * x, half * w))
    }

    /// Nodes and weights on the union of panels given by sorted breakpoints.
    pub fn on_panels(&self, breaks: &[f64]) -> Vec<(f64, f64)> {
        breaks
            .windows(2)
            .filter(|w| w[1] > w[0])
            .flat_map(|w| self.on(w[0], w[1]).collect::<Vec<_>>())
            .collect()
    }

    /// Integrate over [a, b] with a single panel.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        csum(self.on(a, b).map(|(x, w)| w * f(x)))
    }
}

/// Breakpoints on [0, b] refined geometrically toward 0, used for integrands
/// with an integrable singularity at the left end.
pub fn graded_breaks(b: f64, levels: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=levels).map(|k| b * 0.5f64.powi(k as i32)).collect();
    v.push(0.0);
    v.reverse();
    v
}

/// Adaptive double-exponential quadrature, used as an independent check.
pub fn adaptive_integral<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    quadrature::double_exponential::integrate(f, a, b, tol).integral
}

/// Natural log of n choose k.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    statrs::function::factorial::ln_binomial(n, k)
}

/// log(e^a + e^b) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn e1_reference_values() {
        // Values from Abramowitz & Stegun table 5.1.
        assert!((exp_int_e1(0.5) - 0.559_773_594_776_160_8).abs() < 1e-14);
        assert!((exp_int_e1(1.0) - 0.219_383_934_395_520_3).abs() < 1e-14);
        assert!((exp_int_e1(2.0) - 0.048_900_510_708_061_1).abs() < 1e-15);
        assert!((exp_int_e1(10.0) - 4.156_968_929_685_324e-6).abs() < 1e-19);
    }

    #[test]
    fn e1_matches_quadrature() {
        for &x in &[0.01, 0.3, 0.99, 1.0, 1.01, 3.0, 20.0] {
            let q = adaptive_integral(|s: f64| (-x / s).exp() / s, 0.0, 1.0, 1e-14);
            assert!((exp_int_e1(x) - q).abs() < 1e-11 * q.max(1e-300), "x = {x}");
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-15).abs() < 1e-28);
    }

    #[test]
    fn panel_rule_is_exact_for_polynomials() {
        let r = PanelRule::new(5);
        let v = r.integrate(0.0, 2.0, |x| x.powi(9));
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-11);
    }

    #[test]
    fn log_add_exp_handles_large_values() {
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
    }
}
