//! Test oracles that do not share code with the library: tanh-sinh
//! quadrature and an independent log-gamma.

#![allow(dead_code)]

use belief_core::BetaParams;

/// ln Gamma from `statrs`, an implementation independent of ours.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Tanh-sinh quadrature of `f(x, 1 - x)` over `[lo, hi]`, refining until two
/// levels agree to `tol`. The second argument is the complement computed
/// without cancellation near 1.
pub fn tanh_sinh(f: &dyn Fn(f64, f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let pi2 = std::f64::consts::FRAC_PI_2;
    let node = |t: f64| -> Option<f64> {
        let s = pi2 * t.sinh();
        let cosh_s = s.cosh();
        // Distance from the nearer endpoint, in units of `half`.
        let edge = 1.0 / (s.abs().exp() * cosh_s);
        let w = pi2 * t.cosh() / (cosh_s * cosh_s);
        let d = half * edge;
        if d <= 0.0 || !w.is_finite() {
            return None;
        }
        let (x, cx) = if s < 0.0 { (lo + d, 1.0 - lo - d) } else { (hi - d, (1.0 - hi) + d) };
        let v = f(x, cx) * w;
        if v.is_finite() {
            Some(v)
        } else {
            None
        }
    };
    let mut h = 1.0;
    let t_max = 6.5;
    let mut sum = f(mid, 1.0 - mid) * pi2;
    let mut k = 1;
    while k as f64 * h <= t_max {
        let t = k as f64 * h;
        sum += node(t).unwrap_or(0.0) + node(-t).unwrap_or(0.0);
        k += 1;
    }
    let mut prev = sum * h * half;
    for _ in 0..12 {
        h /= 2.0;
        let mut k = 1;
        while k as f64 * h <= t_max {
            let t = k as f64 * h;
            sum += node(t).unwrap_or(0.0) + node(-t).unwrap_or(0.0);
            k += 2;
        }
        let est = sum * h * half;
        if (est - prev).abs() <= tol {
            return est;
        }
        prev = est;
    }
    prev
}

/// Integral over `[lo, hi]`, split around the bulk of `d` so that sharply
/// peaked integrands are resolved.
pub fn integrate_against(d: &BetaParams, f: &dyn Fn(f64, f64) -> f64, lo: f64, hi: f64) -> f64 {
    let m = d.mean();
    let s = d.sd();
    let mut cuts = vec![lo, hi];
    for k in [-12.0, -6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0, 12.0] {
        let c = m + k * s;
        if c > lo && c < hi {
            cuts.push(c);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2).map(|w| tanh_sinh(f, w[0], w[1], 1e-13)).sum()
}

pub fn ln_pdf(d: &BetaParams, x: f64, cx: f64) -> f64 {
    (d.alpha() - 1.0) * x.ln() + (d.beta() - 1.0) * cx.ln() - ln_beta(d.alpha(), d.beta())
}

/// `∫ p ln(p / q)` by quadrature.
pub fn kld_quadrature(p: &BetaParams, q: &BetaParams) -> f64 {
    let f = |x: f64, cx: f64| {
        let lp = ln_pdf(p, x, cx);
        let lq = ln_pdf(q, x, cx);
        let v = lp.exp() * (lp - lq);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate_against(p, &f, 0.0, 1.0)
}

/// `∫_lo^hi pdf` by quadrature.
pub fn mass_quadrature(d: &BetaParams, lo: f64, hi: f64) -> f64 {
    let f = |x: f64, cx: f64| ln_pdf(d, x, cx).exp();
    integrate_against(d, &f, lo, hi)
}
