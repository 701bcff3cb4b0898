//! Forward-mode Taylor jets carrying all partial derivatives up to third
//! order in two or three variables. The built-in benchmark problems need
//! exact source terms (third derivatives of composite expressions); finite
//! differences cannot reach the required accuracy.

/// Multi-index order for the 2-variable jet:
/// [v, x, y, xx, xy, yy, xxx, xxy, xyy, yyy].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2(pub [f64; 10]);

/// Multi-index order for the 3-variable jet:
/// [v, x, y, z, xx, xy, xz, yy, yz, zz,
///  xxx, xxy, xxz, xyy, xyz, xzz, yyy, yyz, yzz, zzz].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet3(pub [f64; 20]);

const MULTI2: [(u8, u8); 10] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
];

const MULTI3: [(u8, u8, u8); 20] = [
    (0, 0, 0),
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (2, 0, 0),
    (1, 1, 0),
    (1, 0, 1),
    (0, 2, 0),
    (0, 1, 1),
    (0, 0, 2),
    (3, 0, 0),
    (2, 1, 0),
    (2, 0, 1),
    (1, 2, 0),
    (1, 1, 1),
    (1, 0, 2),
    (0, 3, 0),
    (0, 2, 1),
    (0, 1, 2),
    (0, 0, 3),
];

fn idx2(a: u8, b: u8) -> usize {
    MULTI2.iter().position(|&m| m == (a, b)).unwrap()
}

fn idx3(a: u8, b: u8, c: u8) -> usize {
    MULTI3.iter().position(|&m| m == (a, b, c)).unwrap()
}

fn binom(n: u8, k: u8) -> f64 {
    const TABLE: [[f64; 4]; 4] = [
        [1.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0],
        [1.0, 3.0, 3.0, 1.0],
    ];
    TABLE[n as usize][k as usize]
}

/// Derivatives (h, h', h'', h''') of a univariate outer function at a point.
#[derive(Debug, Clone, Copy)]
pub struct Outer(pub [f64; 4]);

impl Outer {
    pub fn sin(u: f64) -> Self {
        Outer([u.sin(), u.cos(), -u.sin(), -u.cos()])
    }

    pub fn cos(u: f64) -> Self {
        Outer([u.cos(), -u.sin(), -u.cos(), u.sin()])
    }

    pub fn exp(u: f64) -> Self {
        let e = u.exp();
        Outer([e, e, e, e])
    }
}

impl Jet2 {
    pub fn constant(c: f64) -> Self {
        let mut j = [0.0; 10];
        j[0] = c;
        Jet2(j)
    }

    /// A univariate function of x given its value and first three
    /// derivatives.
    pub fn of_x(derivs: [f64; 4]) -> Self {
        let mut j = [0.0; 10];
        j[0] = derivs[0];
        j[idx2(1, 0)] = derivs[1];
        j[idx2(2, 0)] = derivs[2];
        j[idx2(3, 0)] = derivs[3];
        Jet2(j)
    }

    pub fn of_y(derivs: [f64; 4]) -> Self {
        let mut j = [0.0; 10];
        j[0] = derivs[0];
        j[idx2(0, 1)] = derivs[1];
        j[idx2(0, 2)] = derivs[2];
        j[idx2(0, 3)] = derivs[3];
        Jet2(j)
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    pub fn d(&self, a: u8, b: u8) -> f64 {
        self.0[idx2(a, b)]
    }

    pub fn add(&self, o: &Jet2) -> Jet2 {
        let mut out = [0.0; 10];
        for i in 0..10 {
            out[i] = self.0[i] + o.0[i];
        }
        Jet2(out)
    }

    pub fn scale(&self, s: f64) -> Jet2 {
        let mut out = self.0;
        for v in out.iter_mut() {
            *v *= s;
        }
        Jet2(out)
    }

    /// Leibniz product over all multi-indices of order <= 3.
    pub fn mul(&self, o: &Jet2) -> Jet2 {
        let mut out = [0.0; 10];
        for (t, &(a, b)) in MULTI2.iter().enumerate() {
            let mut acc = 0.0;
            for pa in 0..=a {
                for pb in 0..=b {
                    acc += binom(a, pa)
                        * binom(b, pb)
                        * self.0[idx2(pa, pb)]
                        * o.0[idx2(a - pa, b - pb)];
                }
            }
            out[t] = acc;
        }
        Jet2(out)
    }

    /// Compose with a univariate outer function: w = h(self).
    pub fn chain(&self, h: Outer) -> Jet2 {
        let [h0, h1, h2, h3] = h.0;
        let u = &self.0;
        let (ux, uy) = (u[idx2(1, 0)], u[idx2(0, 1)]);
        let (uxx, uxy, uyy) = (u[idx2(2, 0)], u[idx2(1, 1)], u[idx2(0, 2)]);
        let mut out = [0.0; 10];
        out[0] = h0;
        out[idx2(1, 0)] = h1 * ux;
        out[idx2(0, 1)] = h1 * uy;
        out[idx2(2, 0)] = h2 * ux * ux + h1 * uxx;
        out[idx2(1, 1)] = h2 * ux * uy + h1 * uxy;
        out[idx2(0, 2)] = h2 * uy * uy + h1 * uyy;
        out[idx2(3, 0)] = h3 * ux * ux * ux + 3.0 * h2 * ux * uxx + h1 * u[idx2(3, 0)];
        out[idx2(2, 1)] = h3 * ux * ux * uy + h2 * (2.0 * ux * uxy + uy * uxx) + h1 * u[idx2(2, 1)];
        out[idx2(1, 2)] = h3 * ux * uy * uy + h2 * (2.0 * uy * uxy + ux * uyy) + h1 * u[idx2(1, 2)];
        out[idx2(0, 3)] = h3 * uy * uy * uy + 3.0 * h2 * uy * uyy + h1 * u[idx2(0, 3)];
        Jet2(out)
    }

    pub fn laplacian(&self) -> (f64, f64, f64) {
        // (lap, d_x lap, d_y lap)
        let lap = self.d(2, 0) + self.d(0, 2);
        let lap_x = self.d(3, 0) + self.d(1, 2);
        let lap_y = self.d(2, 1) + self.d(0, 3);
        (lap, lap_x, lap_y)
    }
}

impl Jet3 {
    pub fn constant(c: f64) -> Self {
        let mut j = [0.0; 20];
        j[0] = c;
        Jet3(j)
    }

    pub fn of_axis(axis: usize, derivs: [f64; 4]) -> Self {
        let mut j = [0.0; 20];
        j[0] = derivs[0];
        let unit = |k: u8| -> (u8, u8, u8) {
            match axis {
                0 => (k, 0, 0),
                1 => (0, k, 0),
                _ => (0, 0, k),
            }
        };
        for k in 1..=3u8 {
            let (a, b, c) = unit(k);
            j[idx3(a, b, c)] = derivs[k as usize];
        }
        Jet3(j)
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    pub fn d(&self, a: u8, b: u8, c: u8) -> f64 {
        self.0[idx3(a, b, c)]
    }

    pub fn add(&self, o: &Jet3) -> Jet3 {
        let mut out = [0.0; 20];
        for i in 0..20 {
            out[i] = self.0[i] + o.0[i];
        }
        Jet3(out)
    }

    pub fn scale(&self, s: f64) -> Jet3 {
        let mut out = self.0;
        for v in out.iter_mut() {
            *v *= s;
        }
        Jet3(out)
    }

    pub fn mul(&self, o: &Jet3) -> Jet3 {
        let mut out = [0.0; 20];
        for (t, &(a, b, c)) in MULTI3.iter().enumerate() {
            let mut acc = 0.0;
            for pa in 0..=a {
                for pb in 0..=b {
                    for pc in 0..=c {
                        acc += binom(a, pa)
                            * binom(b, pb)
                            * binom(c, pc)
                            * self.0[idx3(pa, pb, pc)]
                            * o.0[idx3(a - pa, b - pb, c - pc)];
                    }
                }
            }
            out[t] = acc;
        }
        Jet3(out)
    }

    pub fn chain(&self, h: Outer) -> Jet3 {
        let [h0, h1, h2, h3] = h.0;
        let first = |v: u8| -> f64 {
            match v {
                0 => self.d(1, 0, 0),
                1 => self.d(0, 1, 0),
                _ => self.d(0, 0, 1),
            }
        };
        let second = |a: u8, b: u8| -> f64 {
            let mut m = [0u8; 3];
            m[a as usize] += 1;
            m[b as usize] += 1;
            self.d(m[0], m[1], m[2])
        };
        let third = |a: u8, b: u8, c: u8| -> f64 {
            let mut m = [0u8; 3];
            m[a as usize] += 1;
            m[b as usize] += 1;
            m[c as usize] += 1;
            self.d(m[0], m[1], m[2])
        };
        let mut out = [0.0; 20];
        out[0] = h0;
        for v in 0..3u8 {
            let mut m = [0u8; 3];
            m[v as usize] = 1;
            out[idx3(m[0], m[1], m[2])] = h1 * first(v);
        }
        for a in 0..3u8 {
            for b in a..3u8 {
                let mut m = [0u8; 3];
                m[a as usize] += 1;
                m[b as usize] += 1;
                out[idx3(m[0], m[1], m[2])] = h2 * first(a) * first(b) + h1 * second(a, b);
            }
        }
        for a in 0..3u8 {
            for b in a..3u8 {
                for c in b..3u8 {
                    let mut m = [0u8; 3];
                    m[a as usize] += 1;
                    m[b as usize] += 1;
                    m[c as usize] += 1;
                    out[idx3(m[0], m[1], m[2])] = h3 * first(a) * first(b) * first(c)
                        + h2 * (first(a) * second(b, c)
                            + first(b) * second(a, c)
                            + first(c) * second(a, b))
                        + h1 * third(a, b, c);
                }
            }
        }
        Jet3(out)
    }

    pub fn laplacian(&self) -> (f64, [f64; 3]) {
        let lap = self.d(2, 0, 0) + self.d(0, 2, 0) + self.d(0, 0, 2);
        let grad = [
            self.d(3, 0, 0) + self.d(1, 2, 0) + self.d(1, 0, 2),
            self.d(2, 1, 0) + self.d(0, 3, 0) + self.d(0, 1, 2),
            self.d(2, 0, 1) + self.d(0, 2, 1) + self.d(0, 0, 3),
        ];
        (lap, grad)
    }
}

/// Value and first three derivatives of (1 - t^2)^3.
pub fn bump_cubed(t: f64) -> [f64; 4] {
    let s = 1.0 - t * t;
    [
        s * s * s,
        -6.0 * t * s * s,
        -6.0 * s * s + 24.0 * t * t * s,
        72.0 * t * s - 48.0 * t * t * t,
    ]
}
