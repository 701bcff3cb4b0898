//! Dense assembly of the operator A and its auxiliary companion at small N,
//! eigenvalue analysis of the preconditioned matrix, and verification of the
//! invariant-subspace dimensions (N-3)^2 in 2D and 2(N-3)^3 for the 3D
//! interior block.
//!
//! Everything here goes through nalgebra's dense factorizations; it is the
//! oracle side of the matrix-free solvers and stays independent of them.

use nalgebra::DMatrix;

use crate::basis::BasisConfig;
use crate::error::{Error, Result};
use crate::operators::{MassMatrix, StiffnessMatrix};

/// Dense (A, A_tilde) pair with vec ordering m fastest
/// (p = m + (N-1)(n-1), then l blocks in 3D).
pub struct DenseOperatorPair {
    pub a: DMatrix<f64>,
    pub atilde: DMatrix<f64>,
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

fn dense_m_s_minv(config: BasisConfig) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let dim = config.modes();
    let mass = MassMatrix::assemble(config);
    let stiff = StiffnessMatrix::assemble(config);
    let m = DMatrix::from_fn(dim, dim, |i, j| mass.get(i, j));
    let s = DMatrix::from_fn(dim, dim, |i, j| stiff.get(i, j));
    let minv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("mass matrix is singular".into()))?;
    Ok((m, s, minv))
}

/// A = M x S + S x M + 2 I x I + kappa (I x M + M x I) and the auxiliary
/// matrix with S replaced by M^{-1}. Guarded to N <= 64.
pub fn assemble_dense_2d(n: usize, kappa: f64) -> Result<DenseOperatorPair> {
    if n > 64 {
        return Err(Error::Capacity {
            what: "dense 2D assembly",
            limit: 64,
            got: n,
        });
    }
    let config = BasisConfig::new(n)?;
    let dim = config.modes();
    let (m, s, minv) = dense_m_s_minv(config)?;
    let eye = DMatrix::<f64>::identity(dim, dim);
    let build = |srep: &DMatrix<f64>| -> DMatrix<f64> {
        kron(&m, srep)
            + kron(srep, &m)
            + 2.0 * kron(&eye, &eye)
            + kappa * (kron(&eye, &m) + kron(&m, &eye))
    };
    Ok(DenseOperatorPair {
        a: build(&s),
        atilde: build(&minv),
    })
}

/// The interior 2x2 block system [A11 A12; A21 A22] of the 3D problem and
/// its auxiliary companion. Guarded to N <= 12.
pub fn assemble_dense_3d_interior(n: usize, kappa: f64) -> Result<DenseOperatorPair> {
    if n > 12 {
        return Err(Error::Capacity {
            what: "dense 3D interior assembly",
            limit: 12,
            got: n,
        });
    }
    let config = BasisConfig::new(n)?;
    let dim = config.modes();
    let (m, s, minv) = dense_m_s_minv(config)?;
    let eye = DMatrix::<f64>::identity(dim, dim);
    // Kronecker order: leftmost factor acts on the l axis, middle on n,
    // rightmost on m (m fastest in the vec ordering).
    let build = |srep: &DMatrix<f64>| -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let k3 = |a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>| kron(&kron(a, b), c);
        let a11 = k3(srep, &m, &eye)
            + k3(srep, &eye, &m)
            + k3(&eye, &m, srep)
            + k3(&eye, srep, &m)
            + 2.0 * k3(&eye, &eye, &eye)
            + kappa * (k3(&eye, &eye, &m) + k3(&eye, &m, &eye));
        let a22 = k3(&m, srep, &eye)
            + k3(srep, &eye, &m)
            + k3(&m, &eye, srep)
            + k3(&eye, srep, &m)
            + 2.0 * k3(&eye, &eye, &eye)
            + kappa * (k3(&eye, &eye, &m) + k3(&m, &eye, &eye));
        let a12 = k3(srep, &eye, &m)
            + k3(&eye, srep, &m)
            + k3(&eye, &eye, &eye)
            + kappa * k3(&eye, &eye, &m);
        (a11, a12, a22)
    };
    let assemble_block = |srep: &DMatrix<f64>| -> DMatrix<f64> {
        let (a11, a12, a22) = build(srep);
        let cube = dim * dim * dim;
        let mut out = DMatrix::<f64>::zeros(2 * cube, 2 * cube);
        out.view_mut((0, 0), (cube, cube)).copy_from(&a11);
        out.view_mut((0, cube), (cube, cube)).copy_from(&a12);
        out.view_mut((cube, 0), (cube, cube)).copy_from(&a12);
        out.view_mut((cube, cube), (cube, cube)).copy_from(&a22);
        out
    };
    Ok(DenseOperatorPair {
        a: assemble_block(&s),
        atilde: assemble_block(&minv),
    })
}

/// dim null(A - A_tilde) by a rank-revealing SVD; singular values below
/// tol * sigma_max count as zero. Equals the geometric multiplicity of the
/// eigenvalue 1 of A_tilde^{-1} A.
pub fn invariant_subspace_dim(pair: &DenseOperatorPair, tol: f64) -> Result<usize> {
    if pair.atilde.clone().lu().try_inverse().is_none() {
        return Err(Error::Domain("auxiliary matrix is singular".into()));
    }
    let diff = &pair.a - &pair.atilde;
    let svd = diff.svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return Ok(pair.a.nrows());
    }
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > tol * smax)
        .count();
    Ok(pair.a.nrows() - rank)
}

/// Default rank tolerance used by the verification runs.
pub const RANK_TOL: f64 = 1e-10;

/// Eigenvalues of A_tilde^{-1} A as (re, im), sorted by real part.
pub fn preconditioned_spectrum(pair: &DenseOperatorPair) -> Result<Vec<(f64, f64)>> {
    if pair.a.nrows() > 4096 {
        return Err(Error::Capacity {
            what: "preconditioned spectrum",
            limit: 4096,
            got: pair.a.nrows(),
        });
    }
    let inv = pair
        .atilde
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Domain("auxiliary matrix is singular".into()))?;
    let prod = inv * &pair.a;
    // Bounded-iteration Schur: the eigenvalue-1 cluster of this matrix makes
    // the unbounded convenience path crawl.
    let schur =
        nalgebra::linalg::Schur::try_new(prod, 1e-14, 100_000).ok_or(Error::NoConvergence {
            what: "Schur decomposition of the preconditioned operator",
            iterations: 100_000,
        })?;
    let eigs = schur.complex_eigenvalues();
    let mut out: Vec<(f64, f64)> = eigs.iter().map(|c| (c.re, c.im)).collect();
    out.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
    });
    Ok(out)
}
