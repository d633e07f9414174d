//! Wendland C2 smoothing kernel with compact support 2h.

use std::f64::consts::PI;

use crate::case::{Dimensionality, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub dim: Dimensionality,
    pub h: f64,
    alpha: f64,
}

impl KernelSpec {
    pub fn wendland_c2(dim: Dimensionality, h: f64) -> Self {
        let alpha = match dim {
            Dimensionality::Two => 7.0 / (4.0 * PI * h * h),
            Dimensionality::Three => 21.0 / (16.0 * PI * h * h * h),
        };
        Self { dim, h, alpha }
    }

    pub fn support(&self) -> f64 {
        2.0 * self.h
    }

    /// Normalisation constant, i.e. W(0).
    pub fn normalization(&self) -> f64 {
        self.alpha
    }

    /// `(W(r), dW/dr)`; both vanish for r ≥ 2h.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let q = r / self.h;
        if q >= 2.0 {
            return (0.0, 0.0);
        }
        let t = 1.0 - 0.5 * q;
        let t3 = t * t * t;
        (self.alpha * t3 * t * (2.0 * q + 1.0), self.alpha / self.h * (-5.0 * q) * t3)
    }

    pub fn w(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    /// ∇ᵢW for separation `d = xᵢ − xⱼ` with |d| = r.
    pub fn gradient(&self, d: &Vec3, r: f64) -> Vec3 {
        if r <= 0.0 {
            return Vec3::zeros();
        }
        d * (self.eval(r).1 / r)
    }
}

/// Free-function form of [`KernelSpec::eval`].
pub fn kernel_eval(dim: Dimensionality, r: f64, h: f64) -> (f64, f64) {
    KernelSpec::wendland_c2(dim, h).eval(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radial_integral(k: &KernelSpec, n: usize) -> f64 {
        // Composite Simpson over [0, 2h] of the shell measure times W.
        let b = k.support();
        let step = b / n as f64;
        let shell = |r: f64| match k.dim {
            Dimensionality::Two => 2.0 * PI * r,
            Dimensionality::Three => 4.0 * PI * r * r,
        };
        let f = |r: f64| shell(r) * k.w(r);
        let mut s = f(0.0) + f(b);
        for i in 1..n {
            let r = i as f64 * step;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(r);
        }
        s * step / 3.0
    }

    #[test]
    fn compact_support() {
        let k = KernelSpec::wendland_c2(Dimensionality::Two, 0.03);
        assert_eq!(k.eval(0.06), (0.0, 0.0));
        assert_eq!(k.eval(1.0), (0.0, 0.0));
    }

    #[test]
    fn value_at_origin_is_normalisation() {
        let h = 0.07;
        let k = KernelSpec::wendland_c2(Dimensionality::Two, h);
        assert!((k.w(0.0) - 7.0 / (4.0 * PI * h * h)).abs() < 1e-12 * k.w(0.0));
        assert_eq!(k.eval(0.0).1, 0.0);
    }

    #[test]
    fn unit_integral_in_both_dimensions() {
        for dim in [Dimensionality::Two, Dimensionality::Three] {
            for h in [0.01, 0.5, 3.0] {
                let k = KernelSpec::wendland_c2(dim, h);
                let i = radial_integral(&k, 2000);
                assert!((i - 1.0).abs() < 1e-6, "{dim:?} h={h}: {i}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let k = KernelSpec::wendland_c2(Dimensionality::Three, 0.1);
        for i in 1..40 {
            let r = i as f64 * 0.005;
            let eps = 1e-7;
            let fd = (k.w(r + eps) - k.w(r - eps)) / (2.0 * eps);
            let an = k.eval(r).1;
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "r={r}");
        }
    }

    #[test]
    fn nonnegative_and_continuous_at_support() {
        let k = KernelSpec::wendland_c2(Dimensionality::Two, 1.0);
        for i in 0..=2000 {
            assert!(k.w(i as f64 * 1e-3) >= 0.0);
        }
        assert!(k.w(2.0 - 1e-9) < 1e-30);
    }
}
