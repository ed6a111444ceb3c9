//! Grid + golden-section search for suprema over ω ≥ 0 with an analytic tail.

use rayon::prelude::*;

use super::SweepConfig;
use crate::error::{Error, Result};

const MAX_CANDIDATES: usize = 16;
const MAX_DOUBLINGS: usize = 40;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Debug)]
pub(crate) struct SupResult {
    pub value: f64,
    pub omega: f64,
    /// Best grid value before refinement.
    pub grid_value: f64,
    pub tail_cutoff: f64,
    /// The supremum is the ω → ∞ limit rather than a finite-frequency maximum.
    pub in_limit: bool,
    pub tail_resolved: bool,
    pub samples: Vec<(f64, f64)>,
}

/// Characteristic roots on the axis make G blow up; treat them as +∞ rather than failing the sweep.
fn eval<F: Fn(f64) -> Result<f64>>(f: &F, w: f64) -> Result<f64> {
    match f(w) {
        Ok(v) if v.is_nan() => Ok(f64::INFINITY),
        Ok(v) => Ok(v),
        Err(Error::SingularCharMatrix { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

pub(crate) fn base_grid(omega_max: f64, points: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..points)
        .map(|i| omega_max * i as f64 / (points - 1) as f64)
        .collect();
    let lo = (omega_max * 1e-5).ln();
    let hi = omega_max.ln();
    let logs = points / 4;
    g.extend((0..logs).map(|i| (lo + (hi - lo) * i as f64 / (logs - 1) as f64).exp()));
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
    g
}

fn golden<F: Fn(f64) -> Result<f64>>(
    f: &F,
    mut a: f64,
    mut b: f64,
    cfg: &SweepConfig,
) -> Result<(f64, f64)> {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(f, c)?;
    let mut fd = eval(f, d)?;
    for _ in 0..cfg.max_refine_iters {
        if b - a <= cfg.refine_tol * 1e-3 * (1.0 + 0.5 * (a + b)) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(f, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(f, d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// Refined best (ω, value), best raw grid value, all samples.
type Scan = ((f64, f64), f64, Vec<(f64, f64)>);

/// Evaluates `f` on `grid` and refines the largest local maxima.
fn scan<F>(f: &F, grid: &[f64], cfg: &SweepConfig) -> Result<Scan>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let vals: Vec<f64> = grid
        .par_iter()
        .map(|&w| eval(f, w))
        .collect::<Result<_>>()?;
    let n = vals.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| (i == 0 || vals[i] >= vals[i - 1]) && (i + 1 == n || vals[i] >= vals[i + 1]))
        .collect();
    peaks.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
    peaks.truncate(MAX_CANDIDATES);
    let grid_best = peaks.first().map_or(f64::NEG_INFINITY, |&i| vals[i]);
    let refined: Vec<(f64, f64)> = peaks
        .par_iter()
        .map(|&i| {
            if !vals[i].is_finite() {
                return Ok((grid[i], vals[i]));
            }
            let a = grid[i.saturating_sub(1)];
            let b = grid[(i + 1).min(n - 1)];
            let (w, v) = golden(f, a, b, cfg)?;
            Ok(if v >= vals[i] {
                (w, v)
            } else {
                (grid[i], vals[i])
            })
        })
        .collect::<Result<_>>()?;
    let best =
        refined.into_iter().fold(
            (0.0, f64::NEG_INFINITY),
            |acc, x| if x.1 > acc.1 { x } else { acc },
        );
    Ok((best, grid_best, grid.iter().copied().zip(vals).collect()))
}

/// sup over ω ≥ 0 of `f`. `tail_sup(ω)` bounds `f` on [ω, ∞) (None where the bound is unavailable) and
/// `limit` is the value of `f` as ω → ∞.
pub(crate) fn sup_over_frequency<F, T>(
    f: F,
    tail_sup: T,
    limit: f64,
    cfg: &SweepConfig,
) -> Result<SupResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
    T: Fn(f64) -> Option<f64>,
{
    let grid = base_grid(cfg.omega_max, cfg.grid_points);
    let ((mut omega, mut value), grid_value, mut samples) = scan(&f, &grid, cfg)?;
    let mut cutoff = cfg.omega_max;
    let mut resolved = false;
    for _ in 0..=MAX_DOUBLINGS {
        let target = value.max(limit);
        if let Some(b) = tail_sup(cutoff) {
            if b <= target + cfg.refine_tol * (1.0 + target.abs()) {
                resolved = true;
                break;
            }
        }
        let seg: Vec<f64> = (0..=cfg.grid_points / 4)
            .map(|i| cutoff * (1.0 + i as f64 / (cfg.grid_points / 4) as f64))
            .collect();
        let ((w, v), _, s) = scan(&f, &seg, cfg)?;
        samples.extend(s);
        if v > value {
            value = v;
            omega = w;
        }
        cutoff *= 2.0;
    }
    let mut in_limit = false;
    if limit > value {
        value = limit;
        omega = cutoff;
        in_limit = true;
    }
    if !resolved {
        if let Some(b) = tail_sup(cutoff) {
            value = value.max(b);
        } else {
            value = f64::INFINITY;
        }
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(SupResult {
        value,
        omega,
        grid_value,
        tail_cutoff: cutoff,
        in_limit,
        tail_resolved: resolved,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_peak() {
        let cfg = SweepConfig {
            omega_max: 10.0,
            grid_points: 64,
            refine_tol: 1e-8,
            max_refine_iters: 200,
            stability_order: 16,
        };
        let r = sup_over_frequency(
            |w| Ok(-(w - std::f64::consts::E).powi(2)),
            |w| Some(-(w - 3.0).max(0.0).powi(2)),
            f64::NEG_INFINITY,
            &cfg,
        )
        .unwrap();
        assert!((r.omega - std::f64::consts::E).abs() < 1e-7);
        assert!(r.value.abs() < 1e-14);
        assert!(!r.in_limit && r.tail_resolved);
    }

    #[test]
    fn supremum_in_the_limit() {
        let cfg = SweepConfig {
            omega_max: 10.0,
            grid_points: 64,
            refine_tol: 1e-6,
            max_refine_iters: 200,
            stability_order: 16,
        };
        let r =
            sup_over_frequency(|w| Ok(-1.0 / (1.0 + w * w)), |w| Some(1.0 / w), 0.0, &cfg).unwrap();
        assert!(r.in_limit);
        assert_eq!(r.value, 0.0);
        assert!(r.tail_cutoff >= 1e6);
    }
}
