//! Fixtures shared by the criterion benches.

use qqual_core::datagen::{gen_regression_curve, Curve, TargetFunction, REGRESSION_RANGE};
use qqual_core::dvcs::{bundled_corpus, KinematicSet};
use qqual_core::geometry::{FieldKind, ScatterField};

pub fn curve(n: usize) -> Curve {
    gen_regression_curve(TargetFunction::Sin5xCos2x, n, REGRESSION_RANGE, 0.25, 3)
        .expect("valid curve")
}

/// One scattered value per bundled kinematic set, smooth in (Q², x_B).
pub fn scatter() -> ScatterField {
    let sets: Vec<KinematicSet> = bundled_corpus();
    ScatterField::new(
        sets.iter()
            .map(|s| {
                [
                    s.kin.q2,
                    s.kin.xb,
                    (s.kin.q2 - 2.5) * 0.3 + (s.kin.xb - 0.35) * 4.0,
                ]
            })
            .collect(),
        FieldKind::XiDvcs,
    )
}

pub fn features(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.3 + 0.17 * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_well_formed() {
        assert_eq!(curve(100).xs.len(), 100);
        assert_eq!(scatter().points.len(), bundled_corpus().len());
        assert_eq!(features(5).len(), 5);
    }
}
