use hotinfer::normal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

#[test]
fn cdf_and_density_match_reference() {
    let reference = Normal::new(0.0, 1.0).unwrap();
    for i in -800..=800 {
        let x = i as f64 / 100.0;
        let cdf = reference.cdf(x);
        assert!((normal::cdf(x) - cdf).abs() <= 1e-9 * cdf, "cdf({x})");
        assert!((normal::pdf(x) - reference.pdf(x)).abs() <= 1e-15, "pdf({x})");
        let sf = reference.sf(x);
        assert!((normal::sf(x) - sf).abs() <= 1e-9 * sf, "sf({x})");
    }
}

#[test]
fn far_tail_keeps_full_precision() {
    for (x, expect) in [(-8.0, 6.220_960_574_271_784e-16), (-5.0, 2.866_515_718_791_939e-7), (-1.0, 0.158_655_253_931_457_05)] {
        assert!((normal::cdf(x) - expect).abs() <= 1e-14 * expect, "cdf({x})");
    }
}

#[test]
fn quantile_matches_reference() {
    let reference = Normal::new(0.0, 1.0).unwrap();
    for p in [1e-12, 1e-8, 1e-4, 0.001, 0.01, 0.025, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.99, 0.999, 1.0 - 1e-8] {
        let got = normal::quantile(p);
        let expect = reference.inverse_cdf(p);
        assert!((got - expect).abs() <= 1e-9 * expect.abs().max(1.0), "quantile({p}): {got} vs {expect}");
    }
    assert!((normal::quantile(0.975) - 1.959_963_984_540_054).abs() <= 1e-12);
    assert_eq!(normal::quantile(0.5), 0.0);
}

#[test]
fn quantile_inverts_cdf() {
    for i in 1..1000 {
        let p = i as f64 / 1000.0;
        assert!((normal::cdf(normal::quantile(p)) - p).abs() <= 1e-14);
    }
}
