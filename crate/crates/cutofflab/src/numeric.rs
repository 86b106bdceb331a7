//! Small numerical helpers shared across the crate.

/// `v * ln(v)` extended by continuity: zero for `v <= 0`.
pub fn xlogx(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        v * v.ln()
    }
}

/// Positive part of the logarithm, `max(ln(u), 0)`.
pub fn log_pos(u: f64) -> f64 {
    if u <= 1.0 {
        0.0
    } else {
        u.ln()
    }
}

/// Compensated (Kahan) accumulator; the uniformization stopping rule needs
/// partial sums accurate to well below 1e-14 over thousands of terms.
#[derive(Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Smallest eigenvalue of a symmetric matrix, by cyclic Jacobi rotations.
/// `a` is row-major `m x m` and is destroyed. Intended for the small
/// per-state curvature forms (m up to a few hundred).
pub fn jacobi_min_eigenvalue(a: &mut [f64], m: usize) -> f64 {
    assert_eq!(a.len(), m * m);
    if m == 0 {
        return 0.0;
    }
    if m == 1 {
        return a[0];
    }
    let scale: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..m {
            for q in (p + 1)..m {
                off += a[p * m + q] * a[p * m + q];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[p * m + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut min = f64::INFINITY;
    for i in 0..m {
        min = min.min(a[i * m + i]);
    }
    min
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xlogx_handles_zero() {
        assert_eq!(xlogx(0.0), 0.0);
        assert_eq!(xlogx(-1.0), 0.0);
        assert!((xlogx(2.0) - 2.0 * 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn simpson_integrates_polynomial() {
        // x^4 on [0,2] = 32/5.
        let v = adaptive_simpson(&|x: f64| x.powi(4), 0.0, 2.0, 1e-12);
        assert!((v - 6.4).abs() < 1e-10);
    }

    #[test]
    fn simpson_integrates_gaussian() {
        let v = adaptive_simpson(&|x: f64| (-x * x / 2.0).exp(), -8.0, 8.0, 1e-12);
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn jacobi_finds_min_eigenvalue() {
        // Symmetric 3x3 with known spectrum {0, 1, 3}: diag(1,1,2) coupled.
        let mut a = vec![2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0];
        let min = jacobi_min_eigenvalue(&mut a, 3);
        let expect = 2.0 - 2.0_f64.sqrt();
        assert!((min - expect).abs() < 1e-12);
    }

    #[test]
    fn jacobi_handles_diagonal() {
        let mut a = vec![3.0, 0.0, 0.0, -5.0];
        assert_eq!(jacobi_min_eigenvalue(&mut a, 2), -5.0);
    }
}
