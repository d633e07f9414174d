//! Herschel–Bulkley–Papanastasiou apparent viscosity, shear rate and the
//! equation of state.

use nalgebra::Matrix3;

use crate::case::{MaterialSpec, NumericalSpec};

pub type Mat3 = Matrix3<f64>;

/// The rheology parameters live on the material record.
pub type RheologyParams = MaterialSpec;

/// Shear-rate floor inside the power-law term, 1/s.
pub const GD_MIN: f64 = 1e-6;
/// Viscosity cap as a multiple of the consistency index.
pub const ETA_CAP_FACTOR: f64 = 1e4;
/// Tait exponent.
pub const TAIT_GAMMA: f64 = 7.0;

/// γ̇ = ∇v + ∇vᵀ.
pub fn shear_rate_tensor(velocity_gradient: &Mat3) -> Mat3 {
    velocity_gradient + velocity_gradient.transpose()
}

/// Scalar shear rate √(½ γ̇:γ̇).
///
/// Note: the second-invariant form √(½((tr γ̇)² − tr(γ̇²))) is sometimes quoted
/// for this quantity, but its radicand is −k² for simple shear with rate k
/// (see [`second_invariant_radicand`]). The Frobenius form used here returns k
/// for simple shear and for the matching planar extension diag(k, −k).
pub fn shear_rate_magnitude(gamma_dot: &Mat3) -> f64 {
    (0.5 * gamma_dot.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// ½((tr γ̇)² − tr(γ̇²)). Kept only to document why it is not used.
pub fn second_invariant_radicand(gamma_dot: &Mat3) -> f64 {
    let tr = gamma_dot.trace();
    0.5 * (tr * tr - (gamma_dot * gamma_dot).trace())
}

/// η = μ·γ̇ⁿ⁻¹ + τ_y/γ̇·(1 − e^(−m·γ̇)), capped at 10⁴·μ.
///
/// The power-law factor uses max(γ̇, 1e−6); the yield term takes its analytic
/// limit τ_y·m at γ̇ = 0.
pub fn hbp_apparent_viscosity(p: &RheologyParams, gd: f64) -> f64 {
    let power = if p.n == 1.0 { p.mu } else { p.mu * gd.max(GD_MIN).powf(p.n - 1.0) };
    let yield_term = if p.tau_y == 0.0 {
        0.0
    } else if gd == 0.0 {
        p.tau_y * p.m_papanastasiou
    } else {
        p.tau_y * (-(-p.m_papanastasiou * gd).exp_m1()) / gd
    };
    let eta = power + yield_term;
    if p.mu > 0.0 {
        eta.min(ETA_CAP_FACTOR * p.mu)
    } else {
        eta
    }
}

/// Tait pressure (cs²·ρ0/γ)·((ρ/ρ0)^γ − 1) with γ = 7.
pub fn tait_pressure(rho: f64, rho0: f64, cs: f64) -> f64 {
    cs * cs * rho0 / TAIT_GAMMA * ((rho / rho0).powi(7) - 1.0)
}

pub fn equation_of_state(rho: f64, material: &MaterialSpec, numerics: &NumericalSpec) -> f64 {
    tait_pressure(rho, material.rho0, numerics.cs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hbp(mu: f64, n: f64, tau_y: f64, m: f64) -> RheologyParams {
        MaterialSpec {
            group_id: 1,
            rho0: 1500.0,
            mu,
            n,
            tau_y,
            m_papanastasiou: m,
        }
    }

    #[test]
    fn shear_tensor_cases() {
        let k = 3.5;
        assert_eq!(shear_rate_tensor(&Mat3::zeros()), Mat3::zeros());
        let mut g = Mat3::zeros();
        g[(0, 1)] = k;
        let s = shear_rate_tensor(&g);
        assert_eq!(s[(0, 1)], k);
        assert_eq!(s[(1, 0)], k);
        assert_eq!(s[(0, 0)] + s[(1, 1)] + s[(2, 2)], 0.0);
        let rot = Mat3::new(0.0, -2.0, 1.0, 2.0, 0.0, -4.0, -1.0, 4.0, 0.0);
        assert_eq!(shear_rate_tensor(&rot), Mat3::zeros());
    }

    #[test]
    fn magnitude_cases() {
        let k = 0.75;
        assert_eq!(shear_rate_magnitude(&Mat3::zeros()), 0.0);
        let shear = Mat3::new(0.0, k, 0.0, k, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(shear_rate_magnitude(&shear), k);
        let ext = Mat3::new(k, 0.0, 0.0, 0.0, -k, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(shear_rate_magnitude(&ext), k);
    }

    #[test]
    fn second_invariant_radicand_is_negative_for_simple_shear() {
        let k = 2.0;
        let shear = Mat3::new(0.0, k, 0.0, k, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(second_invariant_radicand(&shear), -k * k);
    }

    #[test]
    fn newtonian_limit_is_exact() {
        let p = hbp(1.7, 1.0, 0.0, 50.0);
        for e in -6..=3 {
            assert_eq!(hbp_apparent_viscosity(&p, 10f64.powi(e)), 1.7);
        }
        assert_eq!(hbp_apparent_viscosity(&p, 0.0), 1.7);
    }

    #[test]
    fn direct_formula_example() {
        let p = hbp(2.0, 1.0, 10.0, 100.0);
        let expected = 2.0 + 20.0 * (1.0 - (-50.0f64).exp());
        assert!((hbp_apparent_viscosity(&p, 0.5) - expected).abs() < 1e-12);
        assert!((expected - 22.0).abs() < 1e-12);
    }

    #[test]
    fn zero_shear_limit() {
        let p = hbp(2.0, 1.0, 10.0, 100.0);
        let lim = 2.0 + 10.0 * 100.0;
        assert_eq!(hbp_apparent_viscosity(&p, 0.0), lim);
        let near = hbp_apparent_viscosity(&p, 1e-10);
        assert!(((near - lim) / lim).abs() < 1e-6);
    }

    #[test]
    fn shear_thinning_is_guarded_and_capped() {
        let p = hbp(1.0, 0.5, 0.0, 0.0);
        assert_eq!(hbp_apparent_viscosity(&p, 0.0), hbp_apparent_viscosity(&p, GD_MIN));
        let q = hbp(1.0, 0.2, 0.0, 0.0);
        assert_eq!(hbp_apparent_viscosity(&q, 0.0), ETA_CAP_FACTOR);
    }

    #[test]
    fn bingham_approach_is_monotone_in_m() {
        let gd = 0.3;
        let mut last = 0.0;
        for m in [0.0, 0.1, 1.0, 10.0, 100.0, 1000.0] {
            let eta = hbp_apparent_viscosity(&hbp(2.0, 1.0, 5.0, m), gd);
            assert!(eta >= last);
            assert!(eta <= 2.0 + 5.0 / gd + 1e-12);
            last = eta;
        }
    }

    #[test]
    fn tait_example_and_monotonicity() {
        assert_eq!(tait_pressure(1500.0, 1500.0, 40.0), 0.0);
        let p = tait_pressure(1.01 * 1500.0, 1500.0, 40.0);
        let expected = 40.0f64.powi(2) * 1500.0 / 7.0 * (1.01f64.powi(7) - 1.0);
        assert!((p - expected).abs() < 1e-9 * expected);
        assert!((p - 2.47e4).abs() < 0.01e4);
        let mut last = f64::NEG_INFINITY;
        for i in 0..100 {
            let v = tait_pressure(1000.0 + i as f64 * 10.0, 1500.0, 40.0);
            assert!(v > last);
            last = v;
        }
    }
}
