//! One-dimensional quadrature: adaptive Simpson and Gauss–Legendre rules.

/// Absolute error floor shared by the adaptive rules.
pub const ABS_FLOOR: f64 = 1e-14;

const MAX_DEPTH: u32 = 48;
/// Levels refined unconditionally, so a lucky early error estimate cannot stop the recursion.
const MIN_LEVELS: u32 = 5;
const SCOUT_PANELS: usize = 64;

/// Adaptive Simpson integral of `f` over `[a, b]`.
///
/// The tolerance is `max(rel_tol · ∫|f|, ABS_FLOOR)` where `∫|f|` is scouted on a
/// composite rule first, so integrands with cancellation are handled sensibly.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    integrate_panels(&f, &[a, b], rel_tol)
}

/// Adaptive Simpson over consecutive panels `[b₀, b₁], [b₁, b₂], …`.
///
/// Breakpoints should bracket features the scouting pass could miss, such as a
/// narrow peak.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: &F, breaks: &[f64], rel_tol: f64) -> f64 {
    let total_width: f64 = breaks.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    if total_width == 0.0 {
        return 0.0;
    }
    let scale: f64 = breaks
        .windows(2)
        .map(|w| composite_abs(f, w[0], w[1]))
        .sum();
    let tol = (rel_tol * scale).max(ABS_FLOOR);
    breaks
        .windows(2)
        .map(|w| {
            let share = tol * (w[1] - w[0]).abs() / total_width;
            simpson_panel(f, w[0], w[1], share)
        })
        .sum()
}

fn composite_abs<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let h = (b - a) / SCOUT_PANELS as f64;
    let mut s = 0.0;
    for i in 0..=SCOUT_PANELS {
        let w = if i == 0 || i == SCOUT_PANELS { 0.5 } else { 1.0 };
        s += w * f(a + h * i as f64).abs();
    }
    (s * h).abs()
}

fn simpson_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || (depth <= MAX_DEPTH - MIN_LEVELS && delta.abs() <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule by Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over `[a, b]` using this rule once.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
    }

    /// Composite rule over consecutive panels.
    pub fn integrate_panels<F: Fn(f64) -> f64>(&self, f: F, breaks: &[f64]) -> f64 {
        breaks
            .windows(2)
            .map(|w| self.integrate(&f, w[0], w[1]))
            .sum()
    }
}

/// `(P_n(x), P_n'(x))`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn simpson_on_smooth_integrals() {
        let v = adaptive_simpson(f64::sin, 0.0, PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-11);
        let v = adaptive_simpson(|x| (-x * x).exp(), -10.0, 10.0, 1e-12);
        assert!((v - PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn simpson_with_cancellation_uses_absolute_scale() {
        let v = adaptive_simpson(f64::cos, 0.0, PI, 1e-12);
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(7);
        // exact for degree 13
        let v = rule.integrate(|x| x.powi(12) + x.powi(13), -1.0, 1.0);
        assert!((v - 2.0 / 13.0).abs() < 1e-14);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn large_gauss_legendre_rule_is_accurate() {
        let rule = GaussLegendre::new(512);
        let v = rule.integrate(f64::exp, 0.0, 1.0);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-13);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn both_rules_agree_on_a_peaked_integrand() {
        let f = |t: f64| ((t.cos() - 1.0) / 0.01).exp() * (0.5 * t).sin().powi(2);
        let breaks = [0.0, 0.1, 0.2, 0.4, 0.8, PI];
        let a = integrate_panels(&f, &breaks, 1e-12);
        let b = GaussLegendre::new(64).integrate_panels(f, &breaks);
        assert!((a - b).abs() < 1e-12 * b.abs(), "{a} {b} {}", (a - b) / b);
    }
}
