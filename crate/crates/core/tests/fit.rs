use proptest::prelude::*;
use wideconv_core::fit::{fit_points, fit_power_law, unbiased_variance, FitError, ScalingSeries};

fn series(widths: &[usize], f: impl Fn(f64) -> f64) -> ScalingSeries {
    let samples = widths.iter().map(|&n| vec![f(n as f64) * 0.9, f(n as f64) * 1.1]).collect();
    ScalingSeries::new("synthetic", "none", widths.to_vec(), samples).unwrap()
}

const WIDE: [usize; 6] = [16, 32, 64, 128, 256, 512];

#[test]
fn exact_inverse_law() {
    let fit = fit_power_law(&series(&WIDE, |n| 7.0 / n), (16, 512)).unwrap();
    assert!((fit.alpha - 1.0).abs() < 1e-12);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
    assert!((fit.log_amplitude - 7f64.ln()).abs() < 1e-12);
}

#[test]
fn exact_inverse_square_law() {
    let fit = fit_power_law(&series(&WIDE, |n| 3.0 / (n * n)), (0, usize::MAX)).unwrap();
    assert!((fit.alpha - 2.0).abs() < 1e-12);
}

#[test]
fn subleading_term_biases_small_widths() {
    let widths = [16, 32, 64, 128, 256, 512, 1024, 2048];
    let s = series(&widths, |n| 1.0 / n + 5.0 / (n * n));
    let small = fit_power_law(&s, (16, 64)).unwrap();
    let large = fit_power_law(&s, (256, 2048)).unwrap();
    assert!(small.alpha > large.alpha);
    assert!((large.alpha - 1.0).abs() < 0.05, "{}", large.alpha);
}

#[test]
fn errors() {
    assert_eq!(fit_points(&[1, 2], &[1.0, 2.0], (0, 10)), Err(FitError::TooFewWidths { found: 2 }));
    assert_eq!(
        fit_points(&[1, 2, 4], &[1.0, -2.0, 1.0], (0, 10)),
        Err(FitError::NonPositiveMean { width: 2, mean: -2.0 })
    );
    assert_eq!(
        ScalingSeries::new("x", "none", vec![4], vec![vec![1.0]]).unwrap_err(),
        FitError::TooFewSamples { width: 4, found: 1 }
    );
    assert_eq!(
        ScalingSeries::new("x", "none", vec![4, 4], vec![vec![1.0, 2.0]; 2]).unwrap_err(),
        FitError::WidthsNotIncreasing
    );
}

#[test]
fn unbiased_variance_form() {
    assert_eq!(unbiased_variance(&[1.0, 3.0]), 2.0);
}

proptest! {
    #[test]
    fn prop_scale_equivariance(a in 0.1f64..10.0, alpha in -2.0f64..3.0, c in 0.01f64..100.0, noise in prop::collection::vec(0.8f64..1.2, 6)) {
        let samples: Vec<Vec<f64>> =
            WIDE.iter().zip(&noise).map(|(&n, e)| vec![a * e * (n as f64).powf(-alpha), a * (n as f64).powf(-alpha)]).collect();
        let s = ScalingSeries::new("p", "none", WIDE.to_vec(), samples).unwrap();
        let f1 = fit_power_law(&s, (0, 10_000)).unwrap();
        let f2 = fit_power_law(&s.scaled(c), (0, 10_000)).unwrap();
        prop_assert!((f1.alpha - f2.alpha).abs() < 1e-9);
        prop_assert!((f2.log_amplitude - f1.log_amplitude - c.ln()).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&f1.r_squared));
    }

    #[test]
    fn prop_range_restricts_widths(lo in 0usize..6, span in 2usize..6) {
        let hi = (lo + span).min(5);
        prop_assume!(hi >= lo + 2);
        let fit = fit_power_law(&series(&WIDE, |n| 1.0 / n), (WIDE[lo], WIDE[hi])).unwrap();
        prop_assert_eq!(fit.widths_used, hi - lo + 1);
    }
}
