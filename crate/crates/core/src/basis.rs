//! Legendre polynomials, the normalized basis pair (psi, phi), and
//! Gauss-Legendre quadrature.
//!
//! The divergence-free construction rests on two 1D families on (-1, 1):
//!
//! * `phi_m(x) = sqrt((2m+1)/2) * L_m(x)`, orthonormal in L2;
//! * `psi_{m+1}(x) = (L_{m+1}(x) - L_{m-1}(x)) / sqrt(2(2m+1))`, vanishing at
//!   both endpoints, with `psi_{m+1}' = phi_m`.
//!
//! `psi` is evaluated through the difference of Legendre polynomials rather
//! than through a Jacobi recurrence: the endpoint values cancel exactly, so
//! `psi(+-1) = 0` holds in floating point.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Polynomial order shared by every module. `N >= 4` so the identity block of
/// the mass-stiffness product (size `N - 3`) is nonempty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisConfig {
    n: usize,
}

impl BasisConfig {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidOrder(n));
        }
        Ok(Self { n })
    }

    /// The polynomial order N.
    pub fn order(&self) -> usize {
        self.n
    }

    /// Number of 1D modes per direction, N - 1.
    pub fn modes(&self) -> usize {
        self.n - 1
    }

    /// Default quadrature size for polynomial data.
    pub fn default_quadrature(&self) -> usize {
        self.n + 16
    }
}

fn check_domain(x: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("point {x} outside [-1, 1]")));
    }
    Ok(())
}

/// L_n(x) by the three-term recurrence.
pub fn legendre_eval(n: usize, x: f64) -> Result<f64> {
    check_domain(x)?;
    Ok(legendre_all_unchecked(n, x).pop().unwrap())
}

/// All values L_0(x) .. L_n(x).
pub fn legendre_all(n: usize, x: f64) -> Result<Vec<f64>> {
    check_domain(x)?;
    Ok(legendre_all_unchecked(n, x))
}

fn legendre_all_unchecked(n: usize, x: f64) -> Vec<f64> {
    let mut vals = Vec::with_capacity(n + 1);
    vals.push(1.0);
    if n == 0 {
        return vals;
    }
    vals.push(x);
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * vals[k - 1] - (kf - 1.0) * vals[k - 2]) / kf;
        vals.push(next);
    }
    vals
}

/// L_n'(x) via the derivative recurrence L_k' = L_{k-2}' + (2k-1) L_{k-1},
/// which stays exact at the endpoints.
pub fn legendre_deriv(n: usize, x: f64) -> Result<f64> {
    check_domain(x)?;
    Ok(legendre_deriv_all_unchecked(n, x).pop().unwrap())
}

fn legendre_deriv_all_unchecked(n: usize, x: f64) -> Vec<f64> {
    let vals = legendre_all_unchecked(n.max(1), x);
    let mut d = Vec::with_capacity(n + 1);
    d.push(0.0);
    if n == 0 {
        return d;
    }
    d.push(1.0);
    for k in 2..=n {
        d.push(d[k - 2] + (2.0 * k as f64 - 1.0) * vals[k - 1]);
    }
    d
}

/// phi_m(x) = sqrt((2m+1)/2) L_m(x), m >= 1.
pub fn phi_eval(m: usize, x: f64) -> Result<f64> {
    assert!(m >= 1, "phi is defined for m >= 1");
    Ok(((2 * m + 1) as f64 / 2.0).sqrt() * legendre_eval(m, x)?)
}

pub fn phi_deriv(m: usize, x: f64) -> Result<f64> {
    assert!(m >= 1);
    Ok(((2 * m + 1) as f64 / 2.0).sqrt() * legendre_deriv(m, x)?)
}

/// psi_{m+1}(x) with `mp1 = m + 1 >= 2`.
pub fn psi_eval(mp1: usize, x: f64) -> Result<f64> {
    assert!(mp1 >= 2, "psi is defined for indices >= 2");
    let m = mp1 - 1;
    let vals = legendre_all(mp1, x)?;
    Ok((vals[mp1] - vals[m - 1]) / (2.0 * (2 * m + 1) as f64).sqrt())
}

/// psi_{m+1}'(x), differentiated from the Legendre-difference closed form.
/// Analytically equal to phi_m(x); computing it independently is what makes
/// the divergence checks meaningful.
pub fn psi_deriv(mp1: usize, x: f64) -> Result<f64> {
    assert!(mp1 >= 2);
    let m = mp1 - 1;
    let d = legendre_deriv_all_unchecked(mp1, x);
    check_domain(x)?;
    Ok((d[mp1] - d[m - 1]) / (2.0 * (2 * m + 1) as f64).sqrt())
}

/// Gauss-Legendre rule on (-1, 1).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Approximate the integral of `f` over (-1, 1).
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Q-point Gauss-Legendre nodes and weights by Newton iteration on the roots
/// of L_Q.
pub fn gauss_legendre(q: usize) -> Result<QuadratureRule> {
    if q == 0 {
        return Err(Error::Domain("quadrature rule size must be >= 1".into()));
    }
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let half = q.div_ceil(2);
    for i in 0..half {
        // Chebyshev-like initial guess for the i-th root (descending).
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..100 {
            let vals = legendre_all_unchecked(q, z);
            let lq = vals[q];
            // (1 - z^2) L_q'(z) = q (L_{q-1}(z) - z L_q(z))
            let dlq = q as f64 * (vals[q - 1] - z * lq) / (1.0 - z * z);
            let dz = lq / dlq;
            z -= dz;
            if dz.abs() <= 1e-15 * (1.0 + z.abs()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                what: "Gauss-Legendre root finder",
                iterations: 100,
            });
        }
        let vals = legendre_all_unchecked(q, z);
        let dlq = q as f64 * (vals[q - 1] - z * vals[q]) / (1.0 - z * z);
        let w = 2.0 / ((1.0 - z * z) * dlq * dlq);
        nodes[i] = -z;
        nodes[q - 1 - i] = z;
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    if q % 2 == 1 {
        nodes[q / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// 1D basis value tables sampled on a set of points, one row per point.
///
/// Columns of `psi`/`phi`/`dphi`/`dpsi` correspond to modes m = 1 .. N-1
/// (psi columns hold psi_{m+1}). `phi0`/`dphi0` hold the normalized Legendre
/// family including degree 0, columns 0 ..= deg; they serve the scalar fields
/// in the time stepper.
#[derive(Debug, Clone)]
pub struct SampledBasis {
    pub points: Vec<f64>,
    pub psi: Matrix,
    pub phi: Matrix,
    pub dphi: Matrix,
    pub dpsi: Matrix,
}

impl SampledBasis {
    /// Sample the modes of order-`n` bases at `points` (all in [-1, 1]).
    pub fn new(n: usize, points: &[f64]) -> Result<Self> {
        let modes = n - 1;
        let q = points.len();
        let mut psi = Matrix::zeros(q, modes);
        let mut phi = Matrix::zeros(q, modes);
        let mut dphi = Matrix::zeros(q, modes);
        let mut dpsi = Matrix::zeros(q, modes);
        for (r, &x) in points.iter().enumerate() {
            check_domain(x)?;
            let vals = legendre_all_unchecked(n, x);
            let ders = legendre_deriv_all_unchecked(n, x);
            for m in 1..=modes {
                let norm_phi = ((2 * m + 1) as f64 / 2.0).sqrt();
                let norm_psi = (2.0 * (2 * m + 1) as f64).sqrt();
                phi[(r, m - 1)] = norm_phi * vals[m];
                dphi[(r, m - 1)] = norm_phi * ders[m];
                psi[(r, m - 1)] = (vals[m + 1] - vals[m - 1]) / norm_psi;
                dpsi[(r, m - 1)] = (ders[m + 1] - ders[m - 1]) / norm_psi;
            }
        }
        Ok(Self {
            points: points.to_vec(),
            psi,
            phi,
            dphi,
            dpsi,
        })
    }
}

/// Normalized Legendre table including degree 0: columns j = 0 ..= deg hold
/// sqrt((2j+1)/2) L_j at each point, plus the derivative table.
pub fn normalized_legendre_tables(deg: usize, points: &[f64]) -> Result<(Matrix, Matrix)> {
    let q = points.len();
    let mut vals = Matrix::zeros(q, deg + 1);
    let mut ders = Matrix::zeros(q, deg + 1);
    for (r, &x) in points.iter().enumerate() {
        check_domain(x)?;
        let v = legendre_all_unchecked(deg, x);
        let d = legendre_deriv_all_unchecked(deg, x);
        for j in 0..=deg {
            let norm = ((2 * j + 1) as f64 / 2.0).sqrt();
            vals[(r, j)] = norm * v[j];
            ders[(r, j)] = norm * d[j];
        }
    }
    Ok((vals, ders))
}
