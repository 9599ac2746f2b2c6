//! Distances and statistics used to compare engines.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexField, ScalarField};

/// `∫ |a - b| dx` (midpoint rule).
pub fn l1_distance(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.space().require_same(b.space())?;
    let dv = a.space().cell_volume();
    Ok(a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum::<f64>() * dv)
}

/// `(∫ |a - b|^2 dx)^{1/2}`.
pub fn l2_distance(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.space().require_same(b.space())?;
    let dv = a.space().cell_volume();
    Ok((a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * dv).sqrt())
}

/// `min_theta ||a - e^{i theta} b||`, i.e. the L2 distance after optimal global-phase alignment.
pub fn psi_distance_mod_phase(a: &ComplexField, b: &ComplexField) -> Result<f64> {
    // Summing |a - e^{i theta} b|^2 directly keeps tiny distances resolvable;
    // |a|^2 + |b|^2 - 2|<a|b>| cancels to sqrt(eps).
    psi_distance(a, &align_global_phase(a, b)?)
}

/// Rotate `b` by the global phase that maximizes `Re <a|b>`.
pub fn align_global_phase(a: &ComplexField, b: &ComplexField) -> Result<ComplexField> {
    let overlap = a.inner(b)?;
    let rot = if overlap.norm() > 0.0 {
        (overlap / overlap.norm()).conj()
    } else {
        Complex64::new(1.0, 0.0)
    };
    ComplexField::new(b.space().clone(), b.values().iter().map(|v| v * rot).collect())
}

/// Plain L2 distance between two wave functions.
pub fn psi_distance(a: &ComplexField, b: &ComplexField) -> Result<f64> {
    a.space().require_same(b.space())?;
    let dv = a.space().cell_volume();
    Ok((a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() * dv).sqrt())
}

/// Expected-L1 bound `((K - 1) / W)^{1/2}` for a `W`-sample histogram over `K` occupied cells.
///
/// Cauchy-Schwarz on `E Σ |p^ - p| <= (E Σ (p^ - p)^2 / p)^{1/2}` with the
/// multinomial chi-square mean `(K - 1) / W`.
pub fn multinomial_l1_bound(walkers: usize, occupied_cells: usize) -> f64 {
    if walkers == 0 {
        return f64::INFINITY;
    }
    (occupied_cells.saturating_sub(1) as f64 / walkers as f64).sqrt()
}

pub fn occupied_cells(rho: &ScalarField) -> usize {
    rho.values().iter().filter(|v| **v > 0.0).count()
}

/// Center of mass `∫ x^a rho dx / ∫ rho dx` per axis.
pub fn center_of_mass(rho: &ScalarField) -> Vec<f64> {
    let space = rho.space();
    let total: f64 = rho.values().iter().sum();
    (0..space.dim())
        .map(|a| {
            rho.values()
                .iter()
                .enumerate()
                .map(|(k, r)| r * space.coordinate(a, space.axis_index(k, a)))
                .sum::<f64>()
                / total
        })
        .collect()
}

/// Central second moment per axis.
pub fn variance(rho: &ScalarField) -> Vec<f64> {
    let space = rho.space();
    let total: f64 = rho.values().iter().sum();
    center_of_mass(rho)
        .iter()
        .enumerate()
        .map(|(a, c)| {
            rho.values()
                .iter()
                .enumerate()
                .map(|(k, r)| r * (space.coordinate(a, space.axis_index(k, a)) - c).powi(2))
                .sum::<f64>()
                / total
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov tail `Q(lambda) = 2 Σ (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EnsembleMismatch("KS test needs non-empty samples".into()));
    }
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = a[i].min(b[j]);
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q((sq + 0.12 + 0.11 / sq) * d),
    })
}

/// One-sample KS statistic of samples along `axis` against the marginal of `rho`,
/// with the marginal CDF linear inside each cell.
pub fn ks_against_density(samples: &[f64], rho: &ScalarField, axis: usize) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::EnsembleMismatch("KS test needs samples".into()));
    }
    let space = rho.space();
    let n = space.points()[axis];
    let mut marginal = vec![0.0; n];
    for (k, r) in rho.values().iter().enumerate() {
        marginal[space.axis_index(k, axis)] += r;
    }
    let total: f64 = marginal.iter().sum();
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(0.0);
    for m in &marginal {
        edges.push(edges.last().unwrap() + m / total);
    }
    let h = space.spacing(axis);
    let lower = space.lower()[axis];
    let cdf = |x: f64| {
        let u = ((x - lower) / h).clamp(0.0, n as f64);
        let i = (u.floor() as usize).min(n - 1);
        edges[i] + (u - i as f64) * (edges[i + 1] - edges[i])
    };
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let w = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / w).abs().max(((i + 1) as f64 / w - f).abs())
        })
        .fold(0.0, f64::max);
    let sq = w.sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q((sq + 0.12 + 0.11 / sq) * d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, ConfigSpace};

    fn space() -> ConfigSpace {
        ConfigSpace::line(10.0, 100, Boundary::Periodic).unwrap()
    }

    #[test]
    fn distances_vanish_on_identical_inputs() {
        let s = space();
        let a = ScalarField::from_fn(&s, |x| (-x[0] * x[0]).exp());
        assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 0.1);
        assert!((l1_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(l1_distance(&a, &b).unwrap(), l1_distance(&b, &a).unwrap());
    }

    #[test]
    fn global_phase_is_ignored() {
        let s = space();
        let a = ComplexField::new(
            s.clone(),
            (0..100).map(|k| Complex64::new((k as f64 * 0.1).sin(), 0.3)).collect(),
        )
        .unwrap();
        let rot = Complex64::from_polar(1.0, 1.234);
        let b = ComplexField::new(s, a.values().iter().map(|v| v * rot).collect()).unwrap();
        assert!(psi_distance_mod_phase(&a, &b).unwrap() < 1e-12);
        assert!(psi_distance(&a, &align_global_phase(&a, &b).unwrap()).unwrap() < 1e-12);
        assert!(psi_distance(&a, &b).unwrap() > 0.1);
    }

    #[test]
    fn ks_detects_shift_and_accepts_equal() {
        let x: Vec<f64> = (0..2000).map(|i| (i as f64 + 0.5) / 2000.0).collect();
        let y: Vec<f64> = (0..1500).map(|i| (i as f64 + 0.25) / 1500.0).collect();
        let r = ks_two_sample(&x, &y).unwrap();
        assert!(r.p_value > 0.5, "{r:?}");
        let z: Vec<f64> = x.iter().map(|v| v + 0.1).collect();
        let r = ks_two_sample(&x, &z).unwrap();
        assert!((r.statistic - 0.1).abs() < 1e-3);
        assert!(r.p_value < 1e-6);
        assert!(ks_two_sample(&[], &x).is_err());
    }

    #[test]
    fn kolmogorov_tail_known_values() {
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn moments_of_symmetric_density() {
        let s = space();
        let rho = ScalarField::from_fn(&s, |x| (-(x[0] - 1.0).powi(2) / 0.5).exp());
        assert!((center_of_mass(&rho)[0] - 1.0).abs() < 1e-12);
        assert!((variance(&rho)[0] - 0.25).abs() < 1e-3);
        assert_eq!(multinomial_l1_bound(100, 1), 0.0);
        assert!((multinomial_l1_bound(100, 101) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ks_against_uniform_density() {
        let s = space();
        let rho = ScalarField::constant(&s, 0.1);
        let samples: Vec<f64> = (0..1000).map(|i| -5.0 + 10.0 * (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_against_density(&samples, &rho, 0).unwrap();
        assert!(r.statistic < 1e-3 + 1e-12);
    }
}
