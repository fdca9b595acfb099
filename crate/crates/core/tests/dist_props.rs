use approx::assert_relative_eq;
use proptest::prelude::*;
use symtail::dist::TailCdf;
use symtail::quad::integrate;
use symtail::special::ln_gamma;
use symtail::TailModel;

const EDGE: f64 = 50.0;

/// Mass of the unit-variance t beyond |y| = EDGE on one side, from the
/// two-term expansion of (1 + y²/(ν-2))^(-(ν+1)/2) at large y.
fn t_tail(nu: f64) -> f64 {
    let s2 = nu - 2.0;
    let log_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (std::f64::consts::PI * s2).ln();
    let k = log_c.exp() * s2.powf(0.5 * (nu + 1.0));
    let lead = EDGE.powf(-nu) / nu;
    let next = 0.5 * (nu + 1.0) * s2 * EDGE.powf(-nu - 2.0) / (nu + 2.0);
    k * (lead - next)
}

fn t_tail_second_moment(nu: f64) -> f64 {
    let s2 = nu - 2.0;
    let log_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (std::f64::consts::PI * s2).ln();
    let k = log_c.exp() * s2.powf(0.5 * (nu + 1.0));
    let lead = EDGE.powf(2.0 - nu) / (nu - 2.0);
    let next = 0.5 * (nu + 1.0) * s2 * EDGE.powf(-nu) / nu;
    k * (lead - next)
}

#[test]
fn t_density_integrates_to_one() {
    for nu in [2.1, 2.5, 3.0, 4.0, 5.0, 10.0, 50.0, 200.0] {
        let m = TailModel::student_t(nu).unwrap();
        let body = integrate(|y| m.pdf(y).unwrap(), -EDGE, EDGE, 1e-12).unwrap().value;
        let total = body + 2.0 * t_tail(nu);
        assert!((total - 1.0).abs() < 1e-8, "nu={nu}: {total}");
    }
    let g = integrate(|y| TailModel::Gaussian.pdf(y).unwrap(), -EDGE, EDGE, 1e-12).unwrap().value;
    assert!((g - 1.0).abs() < 1e-12);
    // Cauchy tail beyond 50: (2/π)·atan(1/50)
    let c = integrate(|y| TailModel::Cauchy.pdf(y).unwrap(), -EDGE, EDGE, 1e-12).unwrap().value;
    assert!((c + 2.0 / std::f64::consts::PI * (1.0 / EDGE).atan() - 1.0).abs() < 1e-10);
}

#[test]
fn t_density_has_unit_variance() {
    for nu in [2.5, 3.0, 5.0, 10.0, 50.0] {
        let m = TailModel::student_t(nu).unwrap();
        let body = integrate(|y| y * y * m.pdf(y).unwrap(), -EDGE, EDGE, 1e-12).unwrap().value;
        let total = body + 2.0 * t_tail_second_moment(nu);
        assert!((total - 1.0).abs() < 1e-6, "nu={nu}: {total}");
    }
}

fn ks_statistic(mut xs: Vec<f64>, cdf: &TailCdf) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn samples_follow_the_cdf() {
    let n = 100_000;
    let bound = 1.95 / (n as f64).sqrt() * 1.5;
    for (nu, seed) in [(3.0, 11), (5.0, 12), (20.0, 13)] {
        let m = TailModel::student_t(nu).unwrap();
        let cdf = TailCdf::new(m).unwrap();
        let d = ks_statistic(m.sample(n, seed).unwrap().into_values(), &cdf);
        assert!(d < bound, "nu={nu}: KS {d} >= {bound}");
    }
}

#[test]
fn cdf_and_quantile_are_inverse() {
    let cdf = TailCdf::new(TailModel::student_t(4.0).unwrap()).unwrap();
    for p in [1e-4, 0.01, 0.2, 0.5, 0.77, 0.999] {
        assert_relative_eq!(cdf.cdf(cdf.quantile(p).unwrap()), p, max_relative = 1e-6);
    }
}

proptest! {
    #[test]
    fn pdf_is_even_and_positive(nu in 2.05f64..300.0, y in -1e3f64..1e3) {
        let m = TailModel::student_t(nu).unwrap();
        let a = m.pdf(y).unwrap();
        let lp = m.log_pdf(y).unwrap();
        prop_assert!(a >= 0.0 && lp.is_finite());
        prop_assert_eq!(a, m.pdf(-y).unwrap());
        // far out the density underflows while its log stays finite
        if a.is_normal() {
            prop_assert!((lp - a.ln()).abs() < 1e-9 * (1.0 + a.ln().abs()));
        }
    }

    #[test]
    fn heavier_tails_for_smaller_nu(nu in 2.1f64..50.0, dnu in 0.5f64..50.0) {
        let light = TailModel::student_t(nu + dnu).unwrap();
        let heavy = TailModel::student_t(nu).unwrap();
        prop_assert!(heavy.pdf(20.0).unwrap() > light.pdf(20.0).unwrap());
    }
}
