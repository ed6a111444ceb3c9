use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sysmodel::TdsSystem;

/// Chebyshev–Lobatto collocation on [−h, 0], nodes ascending so that θ_N = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Discretization {
    h: f64,
    nodes: Vec<f64>,
    diff: DMatrix<f64>,
    weights: Vec<f64>,
    interior_weights: Vec<f64>,
    bary: Vec<f64>,
}

impl Discretization {
    pub fn new(order: usize, h: f64) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidParameter(format!(
                "discretization order must be >= 2, got {order}"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delay h must be positive, got {h}"
            )));
        }
        let n = order;
        let x: Vec<f64> = (0..=n).map(|j| -(PI * j as f64 / n as f64).cos()).collect();
        let nodes: Vec<f64> = x.iter().map(|&xj| 0.5 * h * (xj - 1.0)).collect();
        let bary: Vec<f64> = (0..=n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();

        let mut diff = DMatrix::zeros(n + 1, n + 1);
        for i in 0..=n {
            let mut row = 0.0;
            for j in 0..=n {
                if i != j {
                    let d = (bary[j] / bary[i]) / (x[i] - x[j]);
                    diff[(i, j)] = d;
                    row += d;
                }
            }
            diff[(i, i)] = -row;
        }
        diff *= 2.0 / h;

        let weights: Vec<f64> = clenshaw_curtis(n)
            .into_iter()
            .map(|w| 0.5 * h * w)
            .collect();
        // Rule on θ_0..θ_{N−1}: fold the θ = 0 weight back through the extrapolation coefficients −b_j/b_N.
        let interior_weights: Vec<f64> = (0..n)
            .map(|j| weights[j] - bary[j] / bary[n] * weights[n])
            .collect();

        Ok(Self {
            h,
            nodes,
            diff,
            weights,
            interior_weights,
            bary,
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn diff_matrix(&self) -> &DMatrix<f64> {
        &self.diff
    }

    /// Clenshaw–Curtis weights on all nodes.
    pub fn quad_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Interpolatory weights on θ_0..θ_{N−1}, exact for degree N−1.
    pub fn interior_weights(&self) -> &[f64] {
        &self.interior_weights
    }

    /// Barycentric interpolation of node samples at θ ∈ [−h, 0].
    pub fn interpolate(&self, samples: &[DVector<f64>], theta: f64) -> DVector<f64> {
        let mut num = DVector::zeros(samples[0].len());
        let mut den = 0.0;
        for (j, (&tj, s)) in self.nodes.iter().zip(samples).enumerate() {
            let d = theta - tj;
            if d == 0.0 {
                return s.clone();
            }
            let c = self.bary[j] / d;
            num += s * c;
            den += c;
        }
        num / den
    }

    /// Samples φ at the nodes.
    pub fn sample<F: Fn(f64) -> DVector<f64>>(&self, phi: F) -> Vec<DVector<f64>> {
        self.nodes.iter().map(|&t| phi(t)).collect()
    }

    /// Spectral derivative at every node, for samples of dimension n.
    pub fn derivative(&self, samples: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let n = samples[0].len();
        (0..self.len())
            .map(|i| {
                let mut d = DVector::zeros(n);
                for (j, s) in samples.iter().enumerate() {
                    d.axpy(self.diff[(i, j)], s, 1.0);
                }
                d
            })
            .collect()
    }
}

/// Clenshaw–Curtis weights on [−1, 1] for the N+1 Chebyshev–Lobatto points.
fn clenshaw_curtis(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut w = vec![0.0; n + 1];
    let theta: Vec<f64> = (0..=n).map(|j| PI * j as f64 / nf).collect();
    let mut v = vec![1.0; n.saturating_sub(1)];
    if n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
        for k in 1..n / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[i + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi -= (nf * theta[i + 1]).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
        for k in 1..=(n - 1) / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[i + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (i, vi) in v.iter().enumerate() {
        w[i + 1] = 2.0 * vi / nf;
    }
    w
}

/// Collocation matrix of the generator acting on stacked node values (φ(θ_0), …, φ(θ_N)).
/// Rows j < N differentiate; the row at θ = 0 is A₀φ(0) + A₁φ(−h).
pub fn discretize_generator(sys: &TdsSystem, disc: &Discretization) -> DMatrix<f64> {
    let n = sys.n();
    let nn = disc.order();
    let size = n * (nn + 1);
    let d = disc.diff_matrix();
    let mut a = DMatrix::zeros(size, size);
    for i in 0..nn {
        for j in 0..=nn {
            let dij = d[(i, j)];
            for k in 0..n {
                a[(i * n + k, j * n + k)] = dij;
            }
        }
    }
    let r = nn * n;
    a.view_mut((r, r), (n, n)).copy_from(sys.a0());
    let mut first = a.view_mut((r, 0), (n, n));
    first += sys.a1();
    a
}
