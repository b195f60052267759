use crate::nn::GradientVector;

/// What [`agem_project`] did to the proposed gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// `<g_new, g_old> >= 0`; returned as is.
    Satisfied,
    Projected,
    /// Constraint violated but `g_old` has no usable norm; returned as is.
    Degenerate,
}

/// Projects `g_new` onto the half-space `<g, g_old> >= 0` when it lies
/// outside it.
pub fn agem_project(g_new: &GradientVector, g_old: &GradientVector) -> (GradientVector, Projection) {
    assert_eq!(g_new.len(), g_old.len(), "gradient lengths differ");
    let dot = g_new.dot(g_old);
    if dot >= 0.0 {
        return (g_new.clone(), Projection::Satisfied);
    }
    let norm2 = g_old.dot(g_old);
    if !(norm2 > 0.0) || !norm2.is_finite() {
        return (g_new.clone(), Projection::Degenerate);
    }
    let c = dot / norm2;
    let out = g_new
        .values
        .iter()
        .zip(&g_old.values)
        .map(|(n, o)| n - c * o)
        .collect();
    (GradientVector::new(out), Projection::Projected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gv(v: &[f64]) -> GradientVector {
        GradientVector::new(v.to_vec())
    }

    #[test]
    fn worked_examples() {
        assert_eq!(agem_project(&gv(&[1.0, 0.0]), &gv(&[1.0, 0.0])).0, gv(&[1.0, 0.0]));
        assert_eq!(agem_project(&gv(&[1.0, 0.0]), &gv(&[-1.0, 0.0])).0, gv(&[0.0, 0.0]));
        let (g, p) = agem_project(&gv(&[1.0, -1.0]), &gv(&[0.0, 1.0]));
        assert_eq!(g, gv(&[1.0, 0.0]));
        assert_eq!(p, Projection::Projected);
    }

    proptest! {
        #[test]
        fn output_respects_constraint(
            pair in (1usize..32).prop_flat_map(|n| (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            ))
        ) {
            let (a, b) = (gv(&pair.0), gv(&pair.1));
            let (out, p) = agem_project(&a, &b);
            prop_assert!(out.dot(&b) >= -1e-9);
            if a.dot(&b) >= 0.0 {
                prop_assert_eq!(p, Projection::Satisfied);
                prop_assert_eq!(out, a);
            }
        }
    }
}
