//! 3D curl-curl solver. The unknowns split into two interior coefficient
//! tensors (u1, u2) coupled through a 2x2 block system and three face
//! coefficient matrices (ux, uy, uz) whose blocks are exactly twice the 2D
//! operator; face and interior modes never couple.

use std::time::Instant;

use crate::basis::BasisConfig;
use crate::error::{Error, Result};
use crate::gmres;
use crate::linalg::{Matrix, Tensor3};
use crate::operators::{MassEigen, MassMatrix, StiffnessMatrix};
use crate::solver2d::{constant_operator_apply, CurlCurlConfig, SolveReport};

/// Divergence-free expansion coefficients in 3D: interior tensors indexed
/// (m, n, l) with m fastest, plus the three face matrices ux (n, l),
/// uy (m, l), uz (m, n).
#[derive(Debug, Clone, PartialEq)]
pub struct Coeffs3d {
    pub u1: Tensor3,
    pub u2: Tensor3,
    pub ux: Matrix,
    pub uy: Matrix,
    pub uz: Matrix,
}

impl Coeffs3d {
    pub fn zeros(config: BasisConfig) -> Self {
        let d = config.modes();
        Self {
            u1: Tensor3::zeros(d),
            u2: Tensor3::zeros(d),
            ux: Matrix::zeros(d, d),
            uy: Matrix::zeros(d, d),
            uz: Matrix::zeros(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.u1.dim()
    }

    /// Total unknown count 2(N-1)^3 + 3(N-1)^2.
    pub fn len(&self) -> usize {
        let d = self.dim();
        2 * d * d * d + 3 * d * d
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Krylov vector ordering: [vec(u1), vec(u2), vec(ux), vec(uy), vec(uz)]
    /// with the first index fastest in each block.
    pub fn to_flat(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(self.u1.as_slice());
        out.extend_from_slice(self.u2.as_slice());
        for face in [&self.ux, &self.uy, &self.uz] {
            for col in 0..d {
                for row in 0..d {
                    out.push(face[(row, col)]);
                }
            }
        }
        out
    }

    pub fn from_flat(config: BasisConfig, data: &[f64]) -> Self {
        let d = config.modes();
        let cube = d * d * d;
        assert_eq!(data.len(), 2 * cube + 3 * d * d);
        let u1 = Tensor3::from_vec(d, data[..cube].to_vec());
        let u2 = Tensor3::from_vec(d, data[cube..2 * cube].to_vec());
        let mut faces = [
            Matrix::zeros(d, d),
            Matrix::zeros(d, d),
            Matrix::zeros(d, d),
        ];
        let mut idx = 2 * cube;
        for face in faces.iter_mut() {
            for col in 0..d {
                for row in 0..d {
                    face[(row, col)] = data[idx];
                    idx += 1;
                }
            }
        }
        let [ux, uy, uz] = faces;
        Self { u1, u2, ux, uy, uz }
    }

    pub fn max_abs(&self) -> f64 {
        self.u1
            .max_abs()
            .max(self.u2.max_abs())
            .max(self.ux.max_abs())
            .max(self.uy.max_abs())
            .max(self.uz.max_abs())
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &Coeffs3d) {
        self.u1.add_scaled(alpha, &other.u1);
        self.u2.add_scaled(alpha, &other.u2);
        self.ux.add_scaled(alpha, &other.ux);
        self.uy.add_scaled(alpha, &other.uy);
        self.uz.add_scaled(alpha, &other.uz);
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in self.u1.as_mut_slice() {
            *v *= alpha;
        }
        for v in self.u2.as_mut_slice() {
            *v *= alpha;
        }
        self.ux.scale(alpha);
        self.uy.scale(alpha);
        self.uz.scale(alpha);
    }
}

/// Precomputed order-N context for 3D solves.
#[derive(Debug, Clone)]
pub struct Solver3d {
    config: BasisConfig,
    mass: MassMatrix,
    stiff: StiffnessMatrix,
    eig: MassEigen,
    e_t: Matrix,
}

impl Solver3d {
    pub fn new(config: BasisConfig) -> Result<Self> {
        let mass = MassMatrix::assemble(config);
        let stiff = StiffnessMatrix::assemble(config);
        let eig = MassEigen::new(&mass)?;
        let e_t = eig.vectors().transpose();
        Ok(Self {
            config,
            mass,
            stiff,
            eig,
            e_t,
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

    /// Full operator: interior 2x2 block system via sum-factorized axis
    /// contractions, face blocks exactly twice the 2D operator.
    pub fn apply_operator(&self, c: &Coeffs3d, kappa: f64) -> Coeffs3d {
        let (o1, o2) = self.apply_interior(&c.u1, &c.u2, kappa);
        let face = |x: &Matrix| {
            let mut out = constant_operator_apply(&self.mass, &self.stiff, x, kappa);
            out.scale(2.0);
            out
        };
        Coeffs3d {
            u1: o1,
            u2: o2,
            ux: face(&c.ux),
            uy: face(&c.uy),
            uz: face(&c.uz),
        }
    }

    /// Curl-curl Gram application alone (the kappa = 0 operator).
    pub fn apply_curl_gram(&self, c: &Coeffs3d) -> Coeffs3d {
        self.apply_operator(c, 0.0)
    }

    /// Mass Gram application alone (the coefficient of kappa in the
    /// operator): interior blocks [M_m + M_n, M_m; M_m, M_m + M_l], faces
    /// 2(M X + X M).
    pub fn apply_mass_gram(&self, c: &Coeffs3d) -> Coeffs3d {
        let p1 = self.mass.apply_axis(&c.u1, 0);
        let r1 = self.mass.apply_axis(&c.u1, 1);
        let p2 = self.mass.apply_axis(&c.u2, 0);
        let t2 = self.mass.apply_axis(&c.u2, 2);
        let mut o1 = p1.clone();
        o1.add_scaled(1.0, &r1);
        o1.add_scaled(1.0, &p2);
        let mut o2 = p1;
        o2.add_scaled(1.0, &p2);
        o2.add_scaled(1.0, &t2);
        let face = |x: &Matrix| {
            let mut out = self.mass.mul_left(x);
            out.add_scaled(1.0, &self.mass.mul_right(x));
            out.scale(2.0);
            out
        };
        Coeffs3d {
            u1: o1,
            u2: o2,
            ux: face(&c.ux),
            uy: face(&c.uy),
            uz: face(&c.uz),
        }
    }

    fn apply_interior(&self, u1: &Tensor3, u2: &Tensor3, kappa: f64) -> (Tensor3, Tensor3) {
        // banded mass contractions
        let p1 = self.mass.apply_axis(u1, 0); // M along m
        let r1 = self.mass.apply_axis(u1, 1); // M along n
        let p2 = self.mass.apply_axis(u2, 0);
        let t2 = self.mass.apply_axis(u2, 2); // M along l

        // o1 = S_l(p1 + r1 + p2) + S_m(r1) + S_n(p1 + p2) + 2 u1 + u2
        //      + kappa (p1 + r1 + p2)
        let mut sum_l = p1.clone();
        sum_l.add_scaled(1.0, &r1);
        sum_l.add_scaled(1.0, &p2);
        let mut sum_n = p1.clone();
        sum_n.add_scaled(1.0, &p2);
        let mut o1 = self.stiff.apply_axis(&sum_l, 2);
        o1.add_scaled(1.0, &self.stiff.apply_axis(&r1, 0));
        o1.add_scaled(1.0, &self.stiff.apply_axis(&sum_n, 1));
        o1.add_scaled(2.0, u1);
        o1.add_scaled(1.0, u2);
        o1.add_scaled(kappa, &sum_l);

        // o2 = S_l(p1 + p2) + S_n(p1 + t2 + p2) + S_m(t2) + u1 + 2 u2
        //      + kappa (p1 + p2 + t2)
        let mut sum_l2 = p1.clone();
        sum_l2.add_scaled(1.0, &p2);
        let mut sum_n2 = p1.clone();
        sum_n2.add_scaled(1.0, &t2);
        sum_n2.add_scaled(1.0, &p2);
        let mut kap = sum_l2.clone();
        kap.add_scaled(1.0, &t2);
        let mut o2 = self.stiff.apply_axis(&sum_l2, 2);
        o2.add_scaled(1.0, &self.stiff.apply_axis(&sum_n2, 1));
        o2.add_scaled(1.0, &self.stiff.apply_axis(&t2, 0));
        o2.add_scaled(1.0, u1);
        o2.add_scaled(2.0, u2);
        o2.add_scaled(kappa, &kap);

        (o1, o2)
    }

    /// 2x2 closed-form coefficients of the interior auxiliary system at one
    /// eigen-index triple, in the order (g11, g12, g21, g22).
    pub fn gamma(&self, m: usize, n: usize, l: usize, kappa: f64) -> (f64, f64, f64, f64) {
        let d = self.eig.values();
        let (dm, dn, dl) = (d[m], d[n], d[l]);
        let g11 = dn / dl + dm / dl + dn / dm + dm / dn + 2.0 + kappa * (dm + dn);
        let g12 = dm / dl + dm / dn + 1.0 + kappa * dm;
        let g21 = dm / dl + dm / dn + 1.0 + kappa * dm;
        let g22 = dl / dn + dm / dl + dl / dm + dm / dn + 2.0 + kappa * (dm + dl);
        (g11, g12, g21, g22)
    }

    fn aux_context(&self, kappa: f64, resonance_tol: f64) -> Result<Aux3d> {
        let dim = self.config.modes();
        let d = self.eig.values();
        let mut g11 = Tensor3::zeros(dim);
        let mut g12 = Tensor3::zeros(dim);
        let mut g22 = Tensor3::zeros(dim);
        let mut det = Tensor3::zeros(dim);
        for l in 0..dim {
            for n in 0..dim {
                for m in 0..dim {
                    let (a, b, c, e) = self.gamma(m, n, l, kappa);
                    let dt = a * e - b * c;
                    if dt.abs() < resonance_tol {
                        return Err(Error::Resonance {
                            indices: vec![m, n, l],
                            denominator: dt.abs(),
                            kappa_critical: kappa,
                        });
                    }
                    g11.set(m, n, l, a);
                    g12.set(m, n, l, b);
                    g22.set(m, n, l, e);
                    det.set(m, n, l, dt);
                }
            }
        }
        // Face denominators carry the overall factor 2 of the face blocks.
        let mut face_den = Matrix::zeros(dim, dim);
        for a in 0..dim {
            for b in 0..dim {
                let v = 2.0 * (d[a] / d[b] + d[b] / d[a] + 2.0 + kappa * (d[a] + d[b]));
                if v.abs() < resonance_tol {
                    return Err(Error::Resonance {
                        indices: vec![a, b],
                        denominator: v.abs(),
                        kappa_critical: -(1.0 / d[a] + 1.0 / d[b]),
                    });
                }
                face_den[(a, b)] = v;
            }
        }
        Ok(Aux3d {
            g11,
            g12,
            g22,
            det,
            face_den,
        })
    }

    /// Exact solve of the auxiliary system (S replaced by M^{-1}).
    pub fn aux_solve(&self, f: &Coeffs3d, kappa: f64, resonance_tol: f64) -> Result<Coeffs3d> {
        let ctx = self.aux_context(kappa, resonance_tol)?;
        Ok(self.aux_solve_with(f, &ctx))
    }

    fn aux_solve_with(&self, f: &Coeffs3d, ctx: &Aux3d) -> Coeffs3d {
        let dim = self.config.modes();
        let et = &self.e_t;
        let e = self.eig.vectors();
        // interior: transform, 2x2 solve, transform back
        let t1 = f.u1.apply_axis0(et).apply_axis1(et).apply_axis2(et);
        let t2 = f.u2.apply_axis0(et).apply_axis1(et).apply_axis2(et);
        let mut v1 = Tensor3::zeros(dim);
        let mut v2 = Tensor3::zeros(dim);
        {
            let (t1s, t2s) = (t1.as_slice(), t2.as_slice());
            let (v1s, v2s) = (v1.as_mut_slice(), v2.as_mut_slice());
            for idx in 0..t1s.len() {
                let g11 = ctx.g11.as_slice()[idx];
                let g12 = ctx.g12.as_slice()[idx];
                let det = ctx.det.as_slice()[idx];
                let (a, b) = (t1s[idx], t2s[idx]);
                v1s[idx] = (ctx.g22.as_slice()[idx] * a - g12 * b) / det;
                v2s[idx] = (-g12 * a + g11 * b) / det;
            }
        }
        let u1 = v1.apply_axis0(e).apply_axis1(e).apply_axis2(e);
        let u2 = v2.apply_axis0(e).apply_axis1(e).apply_axis2(e);

        // faces: diagonal solve in the eigen basis
        let face = |x: &Matrix| {
            let mut t = self.eig.to_eigen_space(x);
            for (v, den) in t.as_mut_slice().iter_mut().zip(ctx.face_den.as_slice()) {
                *v /= den;
            }
            self.eig.from_eigen_space(&t)
        };
        Coeffs3d {
            u1,
            u2,
            ux: face(&f.ux),
            uy: face(&f.uy),
            uz: face(&f.uz),
        }
    }

    /// Preconditioned GMRES over the concatenated unknown vector.
    pub fn solve(&self, f: &Coeffs3d, cfg: &CurlCurlConfig) -> Result<(Coeffs3d, SolveReport)> {
        let start = Instant::now();
        let ctx = if cfg.precondition {
            Some(self.aux_context(cfg.kappa, cfg.resonance_tol)?)
        } else {
            None
        };
        let apply = |v: &[f64]| -> Vec<f64> {
            let c = Coeffs3d::from_flat(self.config, v);
            self.apply_operator(&c, cfg.kappa).to_flat()
        };
        let precond = ctx.as_ref().map(|ctx| {
            move |v: &[f64]| -> Vec<f64> {
                let c = Coeffs3d::from_flat(self.config, v);
                self.aux_solve_with(&c, ctx).to_flat()
            }
        });
        let out = gmres::solve(&f.to_flat(), apply, precond, cfg.eps, cfg.max_iter);
        let report = SolveReport {
            iterations: out.iterations,
            residual_history: out.residual_history,
            converged: out.converged,
            wall_time: start.elapsed().as_secs_f64(),
        };
        Ok((Coeffs3d::from_flat(self.config, &out.x), report))
    }
}

struct Aux3d {
    g11: Tensor3,
    g12: Tensor3,
    g22: Tensor3,
    det: Tensor3,
    face_den: Matrix,
}
