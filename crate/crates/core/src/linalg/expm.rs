//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (Higham, SIAM J. Matrix Anal. Appl. 26, 2005).

use super::lu::Lu;
use super::matrix::{CMatrix, ONE};
use crate::error::{Error, Result};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn pade_coefficients(m: usize) -> &'static [f64] {
    match m {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        _ => &B13,
    }
}

fn lincomb(terms: &[(f64, &CMatrix)], n: usize) -> CMatrix {
    let mut out = CMatrix::zeros(n, n);
    for (c, m) in terms {
        if *c != 0.0 {
            out.axpy(ONE * *c, m);
        }
    }
    out
}

/// `exp(a)` for a square matrix.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.rows(), found: a.cols() });
    }
    let n = a.rows();
    if n == 0 {
        return Ok(a.clone());
    }
    if !a.as_slice().iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Numerical { time: 0.0, reason: "non-finite generator".into() });
    }
    let norm = a.norm1();
    let id = CMatrix::identity(n);
    if norm == 0.0 {
        return Ok(id);
    }

    for &(m, theta) in &THETA {
        if norm <= theta {
            let b = pade_coefficients(m);
            let a2 = a * a;
            let mut powers = alloc::vec![id.clone(), a2.clone()];
            while powers.len() <= m / 2 {
                let next = powers.last().unwrap() * &a2;
                powers.push(next);
            }
            let mut u = CMatrix::zeros(n, n);
            let mut v = CMatrix::zeros(n, n);
            for (j, p) in powers.iter().enumerate() {
                u.axpy(ONE * b[2 * j + 1], p);
                v.axpy(ONE * b[2 * j], p);
            }
            let u = a * &u;
            return pade_solve(&u, &v);
        }
    }

    let s = if norm > THETA_13 { libm::ceil(libm::log2(norm / THETA_13)) as i32 } else { 0 };
    let a = a.scale_real(libm::ldexp(1.0, -s));
    let b = &B13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = lincomb(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], n);
    let mut u = &a6 * &inner_u;
    u += &lincomb(&[(b[7], &a6), (b[5], &a4), (b[3], &a2), (b[1], &id)], n);
    let u = &a * &u;
    let inner_v = lincomb(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], n);
    let mut v = &a6 * &inner_v;
    v += &lincomb(&[(b[6], &a6), (b[4], &a4), (b[2], &a2), (b[0], &id)], n);
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_solve(u: &CMatrix, v: &CMatrix) -> Result<CMatrix> {
    let p = v + u;
    let q = v - u;
    let lu = Lu::factor(&q, 1e-300).map_err(|_| Error::Numerical {
        time: 0.0,
        reason: "singular Padé denominator".into(),
    })?;
    Ok(lu.solve_matrix(&p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matrix::{C64, ZERO};

    #[test]
    fn zero_gives_identity() {
        let e = expm(&CMatrix::zeros(4, 4)).unwrap();
        assert_eq!(e, CMatrix::identity(4));
    }

    #[test]
    fn diagonal_exponentiates_entrywise() {
        let d = [C64::new(-3.0, 2.0), C64::new(0.5, 0.0), C64::new(-40.0, -7.0)];
        let e = expm(&CMatrix::from_diag(&d)).unwrap();
        for (i, z) in d.iter().enumerate() {
            assert!((e[(i, i)] - z.exp()).norm() < 1e-13 * z.exp().norm().max(1.0));
        }
        assert!(e[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn nilpotent_series_truncates() {
        for scale in [1e-3, 1.0, 1e3] {
            let mut n = CMatrix::zeros(2, 2);
            n[(0, 1)] = C64::new(scale, -0.5 * scale);
            let e = expm(&n).unwrap();
            let mut want = CMatrix::identity(2);
            want[(0, 1)] = n[(0, 1)];
            assert!((&e - &want).max_abs() < 1e-12 * scale.max(1.0));
            assert_eq!(e[(1, 0)], ZERO);
        }
    }

    #[test]
    fn rotation_generator() {
        // exp([[0, -w], [w, 0]]) is a rotation by w.
        for w in [0.01, 0.3, 2.0, 9.0, 120.0] {
            let mut g = CMatrix::zeros(2, 2);
            g[(0, 1)] = C64::new(-w, 0.0);
            g[(1, 0)] = C64::new(w, 0.0);
            let e = expm(&g).unwrap();
            assert!((e[(0, 0)].re - libm::cos(w)).abs() < 1e-12);
            assert!((e[(1, 0)].re - libm::sin(w)).abs() < 1e-12);
        }
    }
}
