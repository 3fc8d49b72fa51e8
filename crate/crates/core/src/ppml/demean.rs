//! Weighted within-transformation over several crossed fixed-effect
//! dimensions by alternating projections with Irons–Tuck extrapolation.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::panel::GroupCodes;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DemeanOptions {
    /// Max absolute change per sweep, relative to the column's scale.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for DemeanOptions {
    fn default() -> Self {
        DemeanOptions { tol: 1e-13, max_sweeps: 10_000 }
    }
}

pub(crate) struct Projector<'a> {
    fe: &'a [GroupCodes],
    weights: &'a [f64],
    inv_mass: Vec<Vec<f64>>,
}

impl<'a> Projector<'a> {
    pub(crate) fn new(fe: &'a [GroupCodes], weights: &'a [f64]) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::domain(format!("demeaning weights must be positive, got {w}")));
        }
        let inv_mass = fe
            .iter()
            .map(|g| {
                if g.len() != weights.len() {
                    return Err(Error::Data("fixed-effect codes and weights differ in length".into()));
                }
                let mut mass = vec![0.0; g.n_levels];
                for (&c, &w) in g.codes.iter().zip(weights) {
                    mass[c as usize] += w;
                }
                Ok(mass.into_iter().map(|m| if m > 0.0 { 1.0 / m } else { 0.0 }).collect())
            })
            .collect::<Result<_>>()?;
        Ok(Projector { fe, weights, inv_mass })
    }

    /// Removes weighted group means along each dimension in turn.
    fn sweep(&self, x: &mut [f64], sums: &mut Vec<f64>) {
        for (g, inv) in self.fe.iter().zip(&self.inv_mass) {
            sums.clear();
            sums.resize(g.n_levels, 0.0);
            for ((&c, &w), &v) in g.codes.iter().zip(self.weights).zip(x.iter()) {
                sums[c as usize] += w * v;
            }
            for (s, i) in sums.iter_mut().zip(inv) {
                *s *= i;
            }
            for (&c, v) in g.codes.iter().zip(x.iter_mut()) {
                *v -= sums[c as usize];
            }
        }
    }

    fn wdot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    /// Demeans `x` in place; returns the number of sweeps used.
    pub(crate) fn demean(&self, x: &mut [f64], opts: &DemeanOptions) -> Result<usize> {
        let mut sums = Vec::new();
        if self.fe.is_empty() {
            return Ok(0);
        }
        if self.fe.len() == 1 {
            self.sweep(x, &mut sums);
            return Ok(1);
        }
        let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Ok(0);
        }
        let n = x.len();
        let (mut gx, mut ggx) = (vec![0.0; n], vec![0.0; n]);
        let (mut d1, mut d2) = (vec![0.0; n], vec![0.0; n]);
        let mut sweeps = 0;
        let mut change = f64::INFINITY;
        while sweeps < opts.max_sweeps {
            gx.copy_from_slice(x);
            self.sweep(&mut gx, &mut sums);
            ggx.copy_from_slice(&gx);
            self.sweep(&mut ggx, &mut sums);
            sweeps += 2;
            for i in 0..n {
                d1[i] = ggx[i] - gx[i];
                d2[i] = d1[i] - (gx[i] - x[i]);
            }
            let denom = self.wdot(&d2, &d2);
            let xi = if denom > 0.0 { self.wdot(&d1, &d2) / denom } else { 0.0 };
            change = 0.0;
            for i in 0..n {
                let next = ggx[i] - xi * d1[i];
                change = change.max((next - x[i]).abs());
                x[i] = next;
            }
            change /= scale;
            if change <= opts.tol {
                // Finish on a plain projection so the result is exactly a
                // fixed point of the sweep up to rounding.
                self.sweep(x, &mut sums);
                return Ok(sweeps + 1);
            }
        }
        Err(Error::Demean { sweeps, change })
    }
}

/// Within-transforms every column of `columns` (rows = observations).
pub fn absorb(
    columns: &DMatrix<f64>,
    weights: &[f64],
    fe: &[GroupCodes],
    opts: &DemeanOptions,
) -> Result<DMatrix<f64>> {
    let mut out = columns.clone();
    absorb_in_place(&mut out, weights, fe, opts)?;
    Ok(out)
}

pub(crate) fn absorb_in_place(
    x: &mut DMatrix<f64>,
    weights: &[f64],
    fe: &[GroupCodes],
    opts: &DemeanOptions,
) -> Result<()> {
    let n = x.nrows();
    if weights.len() != n {
        return Err(Error::Data(format!("{} weights for {n} rows", weights.len())));
    }
    if n == 0 {
        return Ok(());
    }
    let proj = Projector::new(fe, weights)?;
    x.as_mut_slice().par_chunks_mut(n).map(|col| proj.demean(col, opts).map(|_| ())).collect::<Result<Vec<()>>>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crossed(n_a: usize, n_b: usize) -> Vec<GroupCodes> {
        let a = (0..n_a * n_b).map(|i| (i / n_b) as u32);
        let b = (0..n_a * n_b).map(|i| (i % n_b) as u32);
        vec![GroupCodes::from_keys(a), GroupCodes::from_keys(b)]
    }

    #[test]
    fn one_dimension_is_exact_weighted_demeaning() {
        let g = vec![GroupCodes::from_keys([0, 0, 1, 1, 1])];
        let w = [1.0, 3.0, 1.0, 1.0, 2.0];
        let x = DMatrix::from_column_slice(5, 1, &[1.0, 5.0, 2.0, 4.0, 6.0]);
        let y = absorb(&x, &w, &g, &DemeanOptions::default()).unwrap();
        let expect = [1.0 - 4.0, 5.0 - 4.0, 2.0 - 4.5, 4.0 - 4.5, 6.0 - 4.5];
        for (a, b) in y.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn group_constant_column_vanishes() {
        let fe = crossed(4, 3);
        let w: Vec<f64> = (0..12).map(|i| 1.0 + i as f64 * 0.1).collect();
        let x = DMatrix::from_fn(12, 1, |i, _| (i / 3) as f64 * 2.5 + (i % 3) as f64);
        let y = absorb(&x, &w, &fe, &DemeanOptions::default()).unwrap();
        assert!(y.amax() < 1e-12);
    }

    #[test]
    fn absorption_is_idempotent() {
        let fe = crossed(5, 4);
        let w: Vec<f64> = (0..20).map(|i| 0.5 + ((i * 7) % 5) as f64).collect();
        let x = DMatrix::from_fn(20, 2, |i, j| ((i * 13 + j * 5) % 11) as f64);
        let once = absorb(&x, &w, &fe, &DemeanOptions::default()).unwrap();
        let twice = absorb(&once, &w, &fe, &DemeanOptions::default()).unwrap();
        assert!((once - twice).amax() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_weights() {
        let fe = crossed(2, 2);
        let x = DMatrix::zeros(4, 1);
        assert!(absorb(&x, &[1.0, 0.0, 1.0, 1.0], &fe, &DemeanOptions::default()).is_err());
    }
}
