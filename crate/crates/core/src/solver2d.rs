//! 2D curl-curl solver: matrix-free operator application, the fully
//! diagonalizable auxiliary solve used as preconditioner, and the
//! preconditioned GMRES driver, for constant and variable coefficients.
//!
//! Coefficients live in an (N-1) x (N-1) matrix U; row index m runs over the
//! x-direction modes, column index n over y. The matrix form of the operator
//! is `S U M + 2 U + M U S + kappa (M U + U M)`.

use std::time::Instant;

use serde::Serialize;

use crate::basis::{BasisConfig, QuadratureRule, SampledBasis};
use crate::error::{Error, Result};
use crate::gmres;
use crate::linalg::Matrix;
use crate::operators::{MassEigen, MassMatrix, StiffnessMatrix};

/// Solve parameters. `eps` is the relative preconditioned-residual stopping
/// threshold; `resonance_tol` the smallest denominator magnitude treated as
/// nonsingular. `precondition = false` runs plain GMRES (for comparison runs).
#[derive(Debug, Clone)]
pub struct CurlCurlConfig {
    pub kappa: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub resonance_tol: f64,
    pub precondition: bool,
}

impl CurlCurlConfig {
    pub fn new(kappa: f64) -> Self {
        Self {
            kappa,
            eps: 1e-12,
            max_iter: 500,
            resonance_tol: 1e-10,
            precondition: true,
        }
    }
}

/// Iteration record of one solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub wall_time: f64,
}

/// Precomputed context for order-N solves: analytic matrices plus the mass
/// eigendecomposition. Immutable; distinct solves may share one instance
/// across threads.
#[derive(Debug, Clone)]
pub struct Solver2d {
    config: BasisConfig,
    mass: MassMatrix,
    stiff: StiffnessMatrix,
    eig: MassEigen,
}

impl Solver2d {
    pub fn new(config: BasisConfig) -> Result<Self> {
        let mass = MassMatrix::assemble(config);
        let stiff = StiffnessMatrix::assemble(config);
        let eig = MassEigen::new(&mass)?;
        Ok(Self {
            config,
            mass,
            stiff,
            eig,
        })
    }

    pub fn config(&self) -> BasisConfig {
        self.config
    }

    pub fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &StiffnessMatrix {
        &self.stiff
    }

    pub fn eigen(&self) -> &MassEigen {
        &self.eig
    }

    pub fn modes(&self) -> usize {
        self.config.modes()
    }

    /// S U M + 2 U + M U S + kappa (M U + U M); two dense products with S,
    /// everything else banded.
    pub fn apply_operator(&self, u: &Matrix, kappa: f64) -> Matrix {
        constant_operator_apply(&self.mass, &self.stiff, u, kappa)
    }

    /// Denominators (d_i/d_j + d_j/d_i + 2) + kappa (d_i + d_j) of the
    /// auxiliary solve, checked against the resonance tolerance.
    pub fn aux_denominators(&self, kappa: f64, resonance_tol: f64) -> Result<Matrix> {
        let d = self.eig.values();
        let dim = d.len();
        let inv: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
        let mut den = Matrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let v = d[i] * inv[j] + d[j] * inv[i] + 2.0 + kappa * (d[i] + d[j]);
                if v.abs() < resonance_tol {
                    return Err(Error::Resonance {
                        indices: vec![i, j],
                        denominator: v.abs(),
                        kappa_critical: -(inv[i] + inv[j]),
                    });
                }
                den[(i, j)] = v;
            }
        }
        Ok(den)
    }

    /// Solve the auxiliary problem (S replaced by M^{-1}) exactly:
    /// U = E [ (E^T F E) ./ den ] E^T.
    pub fn aux_solve(&self, f: &Matrix, kappa: f64, resonance_tol: f64) -> Result<Matrix> {
        let den = self.aux_denominators(kappa, resonance_tol)?;
        Ok(self.aux_solve_with(f, &den))
    }

    fn aux_solve_with(&self, f: &Matrix, den: &Matrix) -> Matrix {
        let mut v = self.eig.to_eigen_space(f);
        for (x, d) in v.as_mut_slice().iter_mut().zip(den.as_slice()) {
            *x /= d;
        }
        self.eig.from_eigen_space(&v)
    }

    /// Preconditioned GMRES for `A U = F` with constant coefficients.
    pub fn solve(&self, f: &Matrix, cfg: &CurlCurlConfig) -> Result<(Matrix, SolveReport)> {
        let dim = self.modes();
        assert_eq!(f.rows(), dim);
        assert_eq!(f.cols(), dim);
        let start = Instant::now();

        let den = if cfg.precondition {
            Some(self.aux_denominators(cfg.kappa, cfg.resonance_tol)?)
        } else {
            None
        };
        let apply = |v: &[f64]| -> Vec<f64> {
            let m = Matrix::from_vec(dim, dim, v.to_vec());
            self.apply_operator(&m, cfg.kappa).as_slice().to_vec()
        };
        let precond = den.as_ref().map(|den| {
            move |v: &[f64]| -> Vec<f64> {
                let m = Matrix::from_vec(dim, dim, v.to_vec());
                self.aux_solve_with(&m, den).as_slice().to_vec()
            }
        });

        let out = gmres::solve(f.as_slice(), apply, precond, cfg.eps, cfg.max_iter);
        let report = SolveReport {
            iterations: out.iterations,
            residual_history: out.residual_history,
            converged: out.converged,
            wall_time: start.elapsed().as_secs_f64(),
        };
        Ok((Matrix::from_vec(dim, dim, out.x), report))
    }

    /// Precompute the quadrature-grid data for a variable-coefficient solve.
    pub fn var_context(
        &self,
        alpha: &ScalarField2,
        beta: &ScalarField2,
        quad: &QuadratureRule,
    ) -> Result<VarContext2d> {
        let n = self.config.order();
        if quad.size() < n + 2 {
            return Err(Error::Config(format!(
                "variable-coefficient quadrature needs Q >= N + 2 (got Q = {}, N = {n})",
                quad.size()
            )));
        }
        let tables = SampledBasis::new(n, quad.nodes())?;
        let q = quad.size();
        let mut alpha_w = Matrix::zeros(q, q);
        for (iq, &x) in quad.nodes().iter().enumerate() {
            for (ir, &y) in quad.nodes().iter().enumerate() {
                alpha_w[(iq, ir)] = alpha.eval(x, y) * quad.weights()[iq] * quad.weights()[ir];
            }
        }
        let beta_data = match beta.constant {
            Some(c) => BetaSamples::Constant(c),
            None => {
                let grad = beta.grad.as_ref().ok_or_else(|| {
                    Error::Config("non-constant beta requires an analytic gradient callback".into())
                })?;
                let mut vals = Matrix::zeros(q, q);
                let mut gx = Matrix::zeros(q, q);
                let mut gy = Matrix::zeros(q, q);
                for (iq, &x) in quad.nodes().iter().enumerate() {
                    for (ir, &y) in quad.nodes().iter().enumerate() {
                        vals[(iq, ir)] = beta.eval(x, y);
                        let (dx, dy) = grad(x, y);
                        gx[(iq, ir)] = dx;
                        gy[(iq, ir)] = dy;
                    }
                }
                BetaSamples::Field { vals, gx, gy }
            }
        };
        Ok(VarContext2d {
            tables,
            alpha_w,
            beta: beta_data,
        })
    }

    /// W = (alpha curl(beta v), curl Phi) + kappa (v, Phi): the curl term by
    /// sum-factorized quadrature, the mass term exactly through M.
    pub fn apply_operator_var(&self, v: &Matrix, ctx: &VarContext2d, kappa: f64) -> Matrix {
        let t = &ctx.tables;
        // field components on the grid
        let v1 = t.psi.mul(v).mul_transpose_other(&t.phi); // psi_m(x) phi_n(y)
        let v2 = {
            let mut m = t.phi.mul(v).mul_transpose_other(&t.psi);
            m.scale(-1.0);
            m
        };
        // scalar curl of v: d_x v2 - d_y v1
        let mut curl = t.dphi.mul(v).mul_transpose_other(&t.psi);
        curl.add_scaled(1.0, &t.psi.mul(v).mul_transpose_other(&t.dphi));
        curl.scale(-1.0);
        // curl(beta v) = beta curl v + beta_x v2 - beta_y v1
        let mut g = match &ctx.beta {
            BetaSamples::Constant(c) => {
                let mut g = curl;
                g.scale(*c);
                g
            }
            BetaSamples::Field { vals, gx, gy } => {
                let mut g = Matrix::zeros(curl.rows(), curl.cols());
                for (idx, o) in g.as_mut_slice().iter_mut().enumerate() {
                    *o = vals.as_slice()[idx] * curl.as_slice()[idx]
                        + gx.as_slice()[idx] * v2.as_slice()[idx]
                        - gy.as_slice()[idx] * v1.as_slice()[idx];
                }
                g
            }
        };
        // multiply by alpha and quadrature weights
        for (o, &aw) in g.as_mut_slice().iter_mut().zip(ctx.alpha_w.as_slice()) {
            *o *= aw;
        }
        // contract against curls of test functions:
        // curl Phi_mn = -(dphi_m psi_{n+1} + psi_{m+1} dphi_n)
        let mut w = t.dphi.mul_transpose_self(&g).mul(&t.psi);
        w.add_scaled(1.0, &t.psi.mul_transpose_self(&g).mul(&t.dphi));
        w.scale(-1.0);
        // exact mass term
        w.add_scaled(kappa, &self.mass.mul_left(v));
        w.add_scaled(kappa, &self.mass.mul_right(v));
        w
    }

    /// Preconditioned GMRES with the variable-coefficient operator; the
    /// preconditioner stays the constant-coefficient auxiliary solve.
    pub fn solve_var(
        &self,
        f: &Matrix,
        ctx: &VarContext2d,
        cfg: &CurlCurlConfig,
    ) -> Result<(Matrix, SolveReport)> {
        let dim = self.modes();
        let start = Instant::now();
        let den = if cfg.precondition {
            Some(self.aux_denominators(cfg.kappa, cfg.resonance_tol)?)
        } else {
            None
        };
        let apply = |v: &[f64]| -> Vec<f64> {
            let m = Matrix::from_vec(dim, dim, v.to_vec());
            self.apply_operator_var(&m, ctx, cfg.kappa)
                .as_slice()
                .to_vec()
        };
        let precond = den.as_ref().map(|den| {
            move |v: &[f64]| -> Vec<f64> {
                let m = Matrix::from_vec(dim, dim, v.to_vec());
                self.aux_solve_with(&m, den).as_slice().to_vec()
            }
        });
        let out = gmres::solve(f.as_slice(), apply, precond, cfg.eps, cfg.max_iter);
        let report = SolveReport {
            iterations: out.iterations,
            residual_history: out.residual_history,
            converged: out.converged,
            wall_time: start.elapsed().as_secs_f64(),
        };
        Ok((Matrix::from_vec(dim, dim, out.x), report))
    }
}

type CoefficientFn = Box<dyn Fn(f64, f64) -> f64 + Sync + Send>;
type GradientFn = Box<dyn Fn(f64, f64) -> (f64, f64) + Sync + Send>;

/// Scalar coefficient field on the square. Non-constant fields used as `beta`
/// must carry an analytic gradient (the operator needs grad(beta) x v).
pub struct ScalarField2 {
    eval: CoefficientFn,
    grad: Option<GradientFn>,
    constant: Option<f64>,
}

impl ScalarField2 {
    pub fn constant(c: f64) -> Self {
        Self {
            eval: Box::new(move |_, _| c),
            grad: Some(Box::new(|_, _| (0.0, 0.0))),
            constant: Some(c),
        }
    }

    pub fn new(f: impl Fn(f64, f64) -> f64 + Sync + Send + 'static) -> Self {
        Self {
            eval: Box::new(f),
            grad: None,
            constant: None,
        }
    }

    pub fn with_grad(
        f: impl Fn(f64, f64) -> f64 + Sync + Send + 'static,
        g: impl Fn(f64, f64) -> (f64, f64) + Sync + Send + 'static,
    ) -> Self {
        Self {
            eval: Box::new(f),
            grad: Some(Box::new(g)),
            constant: None,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.eval)(x, y)
    }
}

/// S U M + 2 U + M U S + kappa (M U + U M); shared with the 3D face blocks.
pub(crate) fn constant_operator_apply(
    mass: &MassMatrix,
    stiff: &StiffnessMatrix,
    u: &Matrix,
    kappa: f64,
) -> Matrix {
    let um = mass.mul_right(u);
    let mu = mass.mul_left(u);
    let mut out = stiff.mul_left(&um); // S (U M)
    out.add_scaled(1.0, &stiff.mul_right(&mu)); // (M U) S
    out.add_scaled(2.0, u);
    out.add_scaled(kappa, &mu);
    out.add_scaled(kappa, &um);
    out
}

enum BetaSamples {
    Constant(f64),
    Field {
        vals: Matrix,
        gx: Matrix,
        gy: Matrix,
    },
}

/// Grid-sampled data for one variable-coefficient configuration.
pub struct VarContext2d {
    tables: SampledBasis,
    alpha_w: Matrix,
    beta: BetaSamples,
}
