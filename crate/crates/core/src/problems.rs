//! Built-in benchmark problems: manufactured solutions with exact source
//! terms (via third-order jets), the Gaussian point source, and the media
//! of the time-domain runs.

use crate::fields::{VectorField2, VectorField3};
use crate::jet::{bump_cubed, Jet2, Jet3, Outer};
use crate::solver2d::ScalarField2;

/// Outer derivatives of h(u) = (1 + u) e^u.
fn one_plus_exp(u: f64) -> Outer {
    let e = u.exp();
    Outer([(1.0 + u) * e, (2.0 + u) * e, (3.0 + u) * e, (4.0 + u) * e])
}

fn sin_jet2_x(x: f64) -> Jet2 {
    let pi = std::f64::consts::PI;
    Jet2::of_x([
        (pi * x).sin(),
        pi * (pi * x).cos(),
        -pi * pi * (pi * x).sin(),
        -pi * pi * pi * (pi * x).cos(),
    ])
}

fn cos_jet2_y(y: f64) -> Jet2 {
    let pi = std::f64::consts::PI;
    Jet2::of_y([
        (pi * y).cos(),
        -pi * (pi * y).sin(),
        -pi * pi * (pi * y).cos(),
        pi * pi * pi * (pi * y).sin(),
    ])
}

/// Stream function of the 2D convergence benchmark:
/// chi = (1-x^2)^3 (1-y^2)^3 (1 + g) e^g with g = sin(pi x) cos(pi y).
fn chi_2d(x: f64, y: f64) -> Jet2 {
    let g = sin_jet2_x(x).mul(&cos_jet2_y(y));
    let h = g.chain(one_plus_exp(g.value()));
    Jet2::of_x(bump_cubed(x))
        .mul(&Jet2::of_y(bump_cubed(y)))
        .mul(&h)
}

/// 2D manufactured problem: returns (source f, exact solution u with curl)
/// for curl curl u + kappa u = f. The solution is u = curl(chi); the source
/// follows from f = curl(kappa chi - lap chi).
pub fn example1(kappa: f64) -> (VectorField2, VectorField2) {
    let source = VectorField2::new(move |x, y| {
        let jet = chi_2d(x, y);
        let (_, lap_x, lap_y) = jet.laplacian();
        (kappa * jet.d(0, 1) - lap_y, -(kappa * jet.d(1, 0) - lap_x))
    });
    let exact = VectorField2::with_curl(
        move |x, y| {
            let jet = chi_2d(x, y);
            (jet.d(0, 1), -jet.d(1, 0))
        },
        move |x, y| {
            let jet = chi_2d(x, y);
            -(jet.d(2, 0) + jet.d(0, 2))
        },
    );
    (source, exact)
}

/// 2D Gaussian point-source term f = curl(G) with two Gaussians of width
/// sigma centered at (-1/2, 0) and (1/2, 0).
pub fn example3_source(sigma: f64) -> VectorField2 {
    let s2 = sigma * sigma;
    VectorField2::new(move |x, y| {
        let g1 = (-((x + 0.5) * (x + 0.5) + y * y) / s2).exp();
        let g2 = (-((x - 0.5) * (x - 0.5) + y * y) / s2).exp();
        let gx = -2.0 / s2 * ((x + 0.5) * g1 + (x - 0.5) * g2);
        let gy = -2.0 / s2 * y * (g1 + g2);
        (gy, -gx)
    })
}

fn sin_jet3(axis: usize, t: f64) -> Jet3 {
    let pi = std::f64::consts::PI;
    Jet3::of_axis(
        axis,
        [
            (pi * t).sin(),
            pi * (pi * t).cos(),
            -pi * pi * (pi * t).sin(),
            -pi * pi * pi * (pi * t).cos(),
        ],
    )
}

/// Stream potential of the 3D benchmark:
/// chi = (1-x^2)^3 (1-y^2)^3 (1-z^2)^3 (1 + w) e^w,
/// w = sin(pi x) sin(pi y) sin(pi z).
fn chi_3d(x: f64, y: f64, z: f64) -> Jet3 {
    let w = sin_jet3(0, x).mul(&sin_jet3(1, y)).mul(&sin_jet3(2, z));
    let h = w.chain(one_plus_exp(w.value()));
    Jet3::of_axis(0, bump_cubed(x))
        .mul(&Jet3::of_axis(1, bump_cubed(y)))
        .mul(&Jet3::of_axis(2, bump_cubed(z)))
        .mul(&h)
}

/// 3D manufactured problem: u = curl(chi (1,1,1)); f = curl(G (1,1,1))
/// with G = kappa chi - lap chi.
pub fn example5(kappa: f64) -> (VectorField3, VectorField3) {
    let source = VectorField3::new(move |x, y, z| {
        let jet = chi_3d(x, y, z);
        let (_, lg) = jet.laplacian();
        let gx = kappa * jet.d(1, 0, 0) - lg[0];
        let gy = kappa * jet.d(0, 1, 0) - lg[1];
        let gz = kappa * jet.d(0, 0, 1) - lg[2];
        (gy - gz, gz - gx, gx - gy)
    });
    let exact = VectorField3::with_curl(
        move |x, y, z| {
            let jet = chi_3d(x, y, z);
            let (cx, cy, cz) = (jet.d(1, 0, 0), jet.d(0, 1, 0), jet.d(0, 0, 1));
            (cy - cz, cz - cx, cx - cy)
        },
        move |x, y, z| {
            // curl(curl(chi (1,1,1))) = grad(div) - lap applied to (chi,chi,chi)
            let jet = chi_3d(x, y, z);
            let lap = jet.d(2, 0, 0) + jet.d(0, 2, 0) + jet.d(0, 0, 2);
            let sxx = jet.d(2, 0, 0) + jet.d(1, 1, 0) + jet.d(1, 0, 1);
            let syy = jet.d(1, 1, 0) + jet.d(0, 2, 0) + jet.d(0, 1, 1);
            let szz = jet.d(1, 0, 1) + jet.d(0, 1, 1) + jet.d(0, 0, 2);
            (sxx - lap, syy - lap, szz - lap)
        },
    );
    (source, exact)
}

/// Ring-shaped relative permittivity of the 2D time-domain run:
/// eps_r = 1.5 + 0.5 tanh((0.16 + 0.07 sin(6 (theta + pi/4)) - x^2 - y^2) / lambda)
/// with theta = atan2(y, x).
pub fn ring_permittivity(lambda: f64) -> ScalarField2 {
    ScalarField2::new(move |x, y| {
        let theta = y.atan2(x);
        let r2 = x * x + y * y;
        let arg = (0.16 + 0.07 * (6.0 * (theta + std::f64::consts::PI / 4.0)).sin() - r2) / lambda;
        1.5 + 0.5 * arg.tanh()
    })
}

/// Gaussian current source of the 2D time-domain run, centered at (-0.8, 0).
pub fn example4_current(sigma: f64) -> crate::maxwell::CurrentDensity2 {
    let s2 = sigma * sigma;
    Box::new(move |x, y, _t| (-((x + 0.8) * (x + 0.8) + y * y) / s2).exp())
}

/// Twin Gaussian current source of the 3D time-domain run (x-component only).
pub fn example6_current(sigma: f64) -> crate::maxwell::CurrentDensity3 {
    let s2 = sigma * sigma;
    Box::new(move |x, y, z, _t| {
        let j1 = (-(x * x + y * y + (z + 0.5) * (z + 0.5)) / s2).exp()
            + (-(x * x + y * y + (z - 0.5) * (z - 0.5)) / s2).exp();
        (j1, 0.0, 0.0)
    })
}
