use crate::sets::BoxSet;

/// `Σ_{p=0}^{i-1} L^p μ̄`, summed term by term.
pub fn tightening_margin(i: usize, lipschitz: f64, mu_bar: f64) -> f64 {
    let mut total = 0.0;
    let mut power = 1.0;
    for _ in 0..i {
        total += power * mu_bar;
        power *= lipschitz;
    }
    total
}

/// Shrinks the leading `state_dim` coordinates of `region` by the stage-`i`
/// margin on every side. Input coordinates are left alone.
pub fn build_tightened_box(region: &BoxSet, state_dim: usize, i: usize, lipschitz: f64, mu_bar: f64) -> BoxSet {
    region.shrink_leading(state_dim, tightening_margin(i, lipschitz, mu_bar))
}

/// `χ = c_E L^{N-1} + c_L (L^{N-1} - 1)/(L - 1)`, with the `L → 1` limit.
pub fn chi_constant(c_e: f64, c_l: f64, lipschitz: f64, horizon: usize) -> f64 {
    let k = horizon.saturating_sub(1) as i32;
    let lk = lipschitz.powi(k);
    let geometric = if (lipschitz - 1.0).abs() < 1e-9 {
        k as f64
    } else {
        (lk - 1.0) / (lipschitz - 1.0)
    };
    c_e * lk + c_l * geometric
}

/// `Π₀ = N·L_a^max + E_a^max + 1`
pub fn pi_init(la_max: f64, ea_max: f64, horizon: usize) -> f64 {
    horizon as f64 * la_max + ea_max + 1.0
}

/// `Π = (1-α)(μ̄χ + V_a^e(x_{k-1})) + α V_a*(x_k)`
pub fn pi_update(va_star: f64, va_e_prev: f64, alpha: f64, mu_bar: f64, chi: f64) -> f64 {
    (1.0 - alpha) * (mu_bar * chi + va_e_prev) + alpha * va_star
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn margin_examples() {
        assert_eq!(tightening_margin(0, 3.0, 0.4), 0.0);
        assert!((tightening_margin(3, 2.0, 0.1) - 0.7).abs() < 1e-15);
        assert_eq!(tightening_margin(4, 1.0, 0.5), 2.0);
    }

    #[test]
    fn tightened_box_examples() {
        let z = BoxSet::unit(2);
        assert_eq!(build_tightened_box(&z, 1, 0, 5.0, 1.0), z);
        let b = build_tightened_box(&z, 1, 1, 1.0, 0.1);
        assert!((b.lower[0] - 0.1).abs() < 1e-15 && (b.upper[0] - 0.9).abs() < 1e-15);
        assert_eq!((b.lower[1], b.upper[1]), (0.0, 1.0));
        assert!(!b.empty);
        assert!(build_tightened_box(&z, 1, 1, 1.0, 0.6).empty);
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi_constant(1.0, 1.0, 2.0, 3), 7.0);
        assert!((chi_constant(1.0, 2.0, 1.0, 4) - 7.0).abs() < 1e-15);
        assert!((chi_constant(1.0, 2.0, 1.0 + 1e-12, 4) - 7.0).abs() < 1e-9);
        assert!((chi_constant(1.5, 0.0, 1.3, 5) - 1.5 * 1.3f64.powi(4)).abs() < 1e-12);
    }

    #[test]
    fn pi_examples() {
        assert_eq!(pi_init(2.0, 3.0, 6), 16.0);
        assert_eq!(pi_init(0.0, 0.0, 6), 1.0);
        assert_eq!(pi_update(8.0, 10.0, 1.0, 0.3, 4.0), 8.0);
        assert_eq!(pi_update(8.0, 10.0, 0.5, 1.0, 2.0), 10.0);
        for a in [0.1, 0.5, 0.97] {
            assert!((pi_update(4.0, 4.0, a, 0.0, 9.0) - 4.0).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn margins_and_boxes_nest(l in 0.0f64..3.0, mu in 0.0f64..0.05, i in 0usize..8) {
            prop_assert!(tightening_margin(i + 1, l, mu) >= tightening_margin(i, l, mu));
            let z = BoxSet::unit(3);
            let outer = build_tightened_box(&z, 2, i, l, mu);
            let inner = build_tightened_box(&z, 2, i + 1, l, mu);
            if !inner.empty {
                for c in 0..3 {
                    prop_assert!(inner.lower[c] >= outer.lower[c] && inner.upper[c] <= outer.upper[c]);
                }
            }
        }
    }
}
