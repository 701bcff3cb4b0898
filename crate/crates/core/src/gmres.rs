//! Preconditioned GMRES over flat coefficient vectors.
//!
//! The loop mirrors the solver's driving algorithm: the initial guess is the
//! preconditioned right-hand side, the preconditioner is applied right after
//! every operator evaluation, the measured residual is the preconditioned one,
//! and the stopping ratio divides by the norm of the *raw* right-hand side.
//! No restarts; the Arnoldi basis grows until convergence or `max_iter`.

use crate::linalg::{axpy, dot, norm2};

pub(crate) struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

pub(crate) fn solve<A, P>(
    rhs: &[f64],
    apply: A,
    precond: Option<P>,
    eps: f64,
    max_iter: usize,
) -> GmresOutcome
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let n = rhs.len();
    let gamma = norm2(rhs);
    if gamma == 0.0 {
        return GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual_history: vec![0.0],
            converged: true,
        };
    }

    let x0 = match &precond {
        Some(p) => p(rhs),
        None => vec![0.0; n],
    };
    let mut r = {
        let ax0 = apply(&x0);
        let mut r: Vec<f64> = rhs.iter().zip(&ax0).map(|(b, a)| b - a).collect();
        if let Some(p) = &precond {
            r = p(&r);
        }
        r
    };

    let delta = norm2(&r);
    let mut history = vec![delta / gamma];
    if delta / gamma <= eps || delta == 0.0 {
        return GmresOutcome {
            x: x0,
            iterations: 0,
            residual_history: history,
            converged: true,
        };
    }

    for v in r.iter_mut() {
        *v /= delta;
    }
    let mut basis: Vec<Vec<f64>> = vec![r];
    // Givens-rotated least-squares state: R columns, rotations, rhs g.
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![delta];

    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        let j = iterations; // 0-based column index
        let mut w = apply(&basis[j]);
        if let Some(p) = &precond {
            w = p(&w);
        }
        // modified Gram-Schmidt
        let mut h = Vec::with_capacity(j + 2);
        for v in basis.iter() {
            let hij = dot(&w, v);
            axpy(-hij, v, &mut w);
            h.push(hij);
        }
        let h_next = norm2(&w);
        iterations = j + 1;

        // apply accumulated rotations to the new column
        for i in 0..j {
            let t = cs[i] * h[i] + sn[i] * h[i + 1];
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
            h[i] = t;
        }
        // new rotation eliminating h_next
        let denom = h[j].hypot(h_next);
        let (c, s) = if denom == 0.0 {
            (1.0, 0.0)
        } else {
            (h[j] / denom, h_next / denom)
        };
        h[j] = denom;
        cs.push(c);
        sn.push(s);
        let g_new = -s * g[j];
        g[j] *= c;
        g.push(g_new);
        r_cols.push(h);

        let rho = g[j + 1].abs();
        history.push(rho / gamma);
        if rho / gamma <= eps {
            converged = true;
            break;
        }
        if h_next == 0.0 {
            // happy breakdown: the Krylov space is invariant
            converged = rho / gamma <= eps;
            break;
        }
        for v in w.iter_mut() {
            *v /= h_next;
        }
        basis.push(w);
    }

    // back-substitute y and assemble x = x0 + V y
    let m = iterations;
    let mut y = vec![0.0; m];
    for k in (0..m).rev() {
        let mut s = g[k];
        for l in k + 1..m {
            s -= r_cols[l][k] * y[l];
        }
        y[k] = s / r_cols[k][k];
    }
    let mut x = x0;
    for (yk, v) in y.iter().zip(&basis) {
        axpy(*yk, v, &mut x);
    }

    GmresOutcome {
        x,
        iterations,
        residual_history: history,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        // 4x4 SPD system, no preconditioner
        let a = [
            [4.0, 1.0, 0.0, 0.0],
            [1.0, 3.0, 1.0, 0.0],
            [0.0, 1.0, 5.0, 2.0],
            [0.0, 0.0, 2.0, 6.0],
        ];
        let apply = |v: &[f64]| -> Vec<f64> {
            (0..4)
                .map(|i| (0..4).map(|j| a[i][j] * v[j]).sum())
                .collect()
        };
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let out = solve(&b, apply, None::<fn(&[f64]) -> Vec<f64>>, 1e-13, 50);
        assert!(out.converged);
        let res: Vec<f64> = apply(&out.x)
            .iter()
            .zip(&b)
            .map(|(ax, bi)| ax - bi)
            .collect();
        assert!(norm2(&res) / norm2(&b) < 1e-12);
        // residual history is non-increasing
        for w in out.residual_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn exact_preconditioner_converges_immediately() {
        let diag = [2.0, 5.0, 0.5, 8.0, 1.0];
        let apply = |v: &[f64]| -> Vec<f64> { v.iter().zip(&diag).map(|(x, d)| x * d).collect() };
        let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&diag).map(|(x, d)| x / d).collect() };
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let out = solve(&b, apply, Some(precond), 1e-12, 50);
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let apply = |v: &[f64]| v.to_vec();
        let out = solve(&[0.0; 7], apply, None::<fn(&[f64]) -> Vec<f64>>, 1e-12, 10);
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, vec![0.0; 7]);
    }
}
