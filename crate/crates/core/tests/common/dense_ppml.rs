//! Brute-force Poisson MLE with explicit fixed-effect dummies.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{DMatrix, DVector};

pub struct DenseFit {
    pub beta: Vec<f64>,
    /// β block of the uncorrected cluster sandwich.
    pub vcov: DMatrix<f64>,
    pub iterations: usize,
}

/// `fe[d][i]` is row i's level in dimension d. The first dimension gets a
/// dummy per level, later ones drop their first level.
pub fn dense_ppml(y: &[f64], x: &DMatrix<f64>, fe: &[Vec<u32>], cluster: &[u32]) -> DenseFit {
    let n = y.len();
    let p = x.ncols();
    let mut cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j).iter().copied().collect()).collect();
    for (d, codes) in fe.iter().enumerate() {
        let mut levels: Vec<u32> = codes.clone();
        levels.sort_unstable();
        levels.dedup();
        for &l in levels.iter().skip(usize::from(d > 0)) {
            cols.push(codes.iter().map(|&c| f64::from(u8::from(c == l))).collect());
        }
    }
    let k = cols.len();
    let z = DMatrix::from_fn(n, k, |i, j| cols[j][i]);

    let loglik = |theta: &DVector<f64>| -> f64 {
        let eta = &z * theta;
        y.iter().zip(eta.iter()).map(|(y, e)| y * e - e.exp()).sum()
    };
    let mut theta = DVector::zeros(k);
    let mut ll = loglik(&theta);
    let mut iterations = 0;
    for it in 0..500 {
        iterations = it + 1;
        let eta = &z * &theta;
        let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        let grad = z.transpose() * DVector::from_fn(n, |i, _| y[i] - mu[i]);
        let h = DMatrix::from_fn(k, k, |a, b| (0..n).map(|i| mu[i] * z[(i, a)] * z[(i, b)]).sum());
        let step = h.clone().lu().solve(&grad).expect("dense Hessian is singular");
        let mut t = 1.0;
        let mut next = &theta + &step * t;
        let mut ll_next = loglik(&next);
        while !(ll_next >= ll - 1e-12 * ll.abs()) && t > 1e-8 {
            t *= 0.5;
            next = &theta + &step * t;
            ll_next = loglik(&next);
        }
        let size = (&step * t).amax();
        theta = next;
        ll = ll_next;
        if size < 1e-14 || (grad.amax() < 1e-12 * y.iter().sum::<f64>().max(1.0) && size < 1e-11) {
            break;
        }
    }

    let eta = &z * &theta;
    let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    let h = DMatrix::from_fn(k, k, |a, b| (0..n).map(|i| mu[i] * z[(i, a)] * z[(i, b)]).sum::<f64>());
    let hinv = h.try_inverse().expect("dense Hessian is singular");
    let mut groups: Vec<u32> = cluster.to_vec();
    groups.sort_unstable();
    groups.dedup();
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for g in groups {
        let mut s = DVector::<f64>::zeros(k);
        for i in (0..n).filter(|&i| cluster[i] == g) {
            for j in 0..k {
                s[j] += z[(i, j)] * (y[i] - mu[i]);
            }
        }
        meat += &s * s.transpose();
    }
    let full = &hinv * meat * &hinv;
    DenseFit { beta: theta.iter().take(p).copied().collect(), vcov: full.view((0, 0), (p, p)).into_owned(), iterations }
}

/// A small random two-way panel: `units` units in `units / 2` clusters,
/// `years` periods, regressors (continuous, treated×post).
pub fn random_design(seed: u64, units: usize, years: usize) -> telepar_core::ppml::Design {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal, Poisson};
    use telepar_core::panel::GroupCodes;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = units * years;
    let std = Normal::new(0.0, 1.0).unwrap();
    let unit_fe: Vec<f64> = (0..units).map(|_| 1.0 + 0.5 * std.sample(&mut rng)).collect();
    let year_fe: Vec<f64> = (0..years).map(|_| 0.2 * std.sample(&mut rng)).collect();
    let treated: Vec<bool> = (0..units).map(|u| u % 2 == 0).collect();
    let adopt = years / 2;
    let (mut y, mut x1, mut x2, mut unit, mut year) = (vec![], vec![], vec![], vec![], vec![]);
    for u in 0..units {
        for t in 0..years {
            let a = std.sample(&mut rng);
            let d = f64::from(u8::from(treated[u] && t >= adopt));
            let mean = (unit_fe[u] + year_fe[t] + 0.3 * a + 0.2 * d).exp();
            y.push(Poisson::new(mean).unwrap().sample(&mut rng).round());
            x1.push(a);
            x2.push(d);
            unit.push(u as u32);
            year.push(t as u32);
        }
    }
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { x1[i] } else { x2[i] });
    telepar_core::ppml::Design {
        y,
        x,
        names: vec!["x".into(), "treat_post".into()],
        fe: vec![GroupCodes::from_keys(unit.clone()), GroupCodes::from_keys(year)],
        cluster: Some(GroupCodes::from_keys(unit.iter().map(|u| u / 2))),
    }
}
