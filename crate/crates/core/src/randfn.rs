//! Random smooth functions on [−h, 0] used by probes and simulations.

use nalgebra::DVector;
use rand::Rng;

/// A function on [−h, 0] with a closed-form derivative.
pub trait History: Send + Sync {
    fn value(&self, theta: f64) -> DVector<f64>;
    fn derivative(&self, theta: f64) -> DVector<f64>;
}

/// φ(θ) = Σ_k c_k T_k(1 + 2θ/h), a vector Chebyshev series.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevHistory {
    pub h: f64,
    pub coeffs: Vec<DVector<f64>>,
}

impl ChebyshevHistory {
    /// Coefficients uniform in [−1, 1] with 1/(k+1) decay, degree `degree`, dimension `n`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, h: f64, degree: usize) -> Self {
        let coeffs = (0..=degree)
            .map(|k| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0) / (k as f64 + 1.0)))
            .collect();
        Self { h, coeffs }
    }

    pub fn constant(c: DVector<f64>, h: f64) -> Self {
        Self { h, coeffs: vec![c] }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for c in &mut self.coeffs {
            *c *= s;
        }
        self
    }

    fn x(&self, theta: f64) -> f64 {
        1.0 + 2.0 * theta / self.h
    }

    /// max over a fine grid of ‖φ(θ)‖₂.
    pub fn sup_norm(&self) -> f64 {
        sup_norm(self, self.h)
    }
}

pub fn sup_norm(f: &dyn History, h: f64) -> f64 {
    (0..=400)
        .map(|i| f.value(-h * i as f64 / 400.0).norm())
        .fold(0.0, f64::max)
}

impl History for ChebyshevHistory {
    fn value(&self, theta: f64) -> DVector<f64> {
        let x = self.x(theta);
        let n = self.coeffs[0].len();
        let (mut t0, mut t1) = (1.0, x);
        let mut out = DVector::zeros(n);
        for (k, c) in self.coeffs.iter().enumerate() {
            let tk = match k {
                0 => 1.0,
                1 => x,
                _ => {
                    let t2 = 2.0 * x * t1 - t0;
                    t0 = t1;
                    t1 = t2;
                    t2
                }
            };
            out.axpy(tk, c, 1.0);
        }
        out
    }

    fn derivative(&self, theta: f64) -> DVector<f64> {
        // T_k' = k U_{k−1}.
        let x = self.x(theta);
        let n = self.coeffs[0].len();
        let (mut u0, mut u1) = (1.0, 2.0 * x);
        let mut out = DVector::zeros(n);
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            let u = match k {
                1 => 1.0,
                2 => 2.0 * x,
                _ => {
                    let u2 = 2.0 * x * u1 - u0;
                    u0 = u1;
                    u1 = u2;
                    u2
                }
            };
            out.axpy(k as f64 * u * 2.0 / self.h, c, 1.0);
        }
        out
    }
}

/// A function whose norm peaks at θ = 0: φ(θ) = ρ(θ)·d(θ)/‖d(θ)‖ with ρ(θ) ≤ ρ(0).
#[derive(Clone, Debug, PartialEq)]
pub struct PeakAtZero {
    pub radius: f64,
    pub decay: f64,
    pub direction: ChebyshevHistory,
}

impl PeakAtZero {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, h: f64, radius: f64) -> Self {
        let mut dir = ChebyshevHistory::random(rng, n, h, 4).scaled(0.2);
        let mut u = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        if u.norm() < 1e-3 {
            u[0] = 1.0;
        }
        dir.coeffs[0] += u.normalize();
        Self {
            radius,
            decay: rng.gen_range(0.0..0.9),
            direction: dir,
        }
    }

    fn rho(&self, theta: f64, h: f64) -> (f64, f64) {
        let s = -theta / h;
        (
            self.radius * (1.0 - self.decay * s * s),
            self.radius * self.decay * 2.0 * s / h,
        )
    }
}

impl History for PeakAtZero {
    fn value(&self, theta: f64) -> DVector<f64> {
        let d = self.direction.value(theta);
        d.normalize() * self.rho(theta, self.direction.h).0
    }

    fn derivative(&self, theta: f64) -> DVector<f64> {
        let d = self.direction.value(theta);
        let dd = self.direction.derivative(theta);
        let nd = d.norm();
        let unit = &d / nd;
        let dunit = (&dd - &unit * unit.dot(&dd)) / nd;
        let (r, dr) = self.rho(theta, self.direction.h);
        unit * dr + dunit * r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd_check(f: &dyn History, theta: f64) {
        let e = 1e-6;
        let fd = (f.value(theta + e) - f.value(theta - e)) / (2.0 * e);
        assert!((fd - f.derivative(theta)).norm() < 1e-6, "{theta}");
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = ChebyshevHistory::random(&mut rng, 3, 1.5, 7);
        let p = PeakAtZero::random(&mut rng, 3, 1.5, 2.0);
        for t in [-1.4, -0.7, -0.1] {
            fd_check(&c, t);
            fd_check(&p, t);
        }
    }

    #[test]
    fn peak_at_zero_has_norm_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = PeakAtZero::random(&mut rng, 2, 1.0, 0.7);
            assert!((p.value(0.0).norm() - 0.7).abs() < 1e-14);
            assert!(sup_norm(&p, 1.0) <= 0.7 + 1e-14);
        }
    }
}
