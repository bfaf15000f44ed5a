//! The Cartan Lie algebra (free nilpotent, rank 2, step 3) and exact flows.
//!
//! The algebra is spanned by `X1..X5` with the only nonzero brackets
//! `[X1,X2] = X3`, `[X1,X3] = X4`, `[X2,X3] = X5`; `X4`, `X5` are central.
//! The group is modeled on `R^5` with coordinates `(x, y, z, v, w)` and the
//! generators realized as left-invariant vector fields. Constant-control
//! flows integrate in closed form because the coordinate ODE is triangular
//! with polynomial right-hand sides.

use nalgebra::Matrix5;

/// Ordered basis tag for algebra coordinates.
///
/// `Standard` is `(X1, X2, X3, X4, X5)`. `PlusMinus` is
/// `(X+, X-, X3, X++, X--)` with `X+ = X1 + X2`, `X- = X1 - X2`,
/// `X++ = X4 + X5`, `X-- = X4 - X5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Standard,
    PlusMinus,
}

/// Element of the 5-dimensional Cartan algebra, tagged with the basis its
/// coordinates refer to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraVector {
    coords: [f64; 5],
    basis: Basis,
}

impl AlgebraVector {
    pub fn new(coords: [f64; 5], basis: Basis) -> Self {
        Self { coords, basis }
    }

    pub fn standard(coords: [f64; 5]) -> Self {
        Self::new(coords, Basis::Standard)
    }

    pub fn plus_minus(coords: [f64; 5]) -> Self {
        Self::new(coords, Basis::PlusMinus)
    }

    pub fn zero() -> Self {
        Self::standard([0.0; 5])
    }

    pub fn x1() -> Self {
        Self::standard([1.0, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn x2() -> Self {
        Self::standard([0.0, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn x3() -> Self {
        Self::standard([0.0, 0.0, 1.0, 0.0, 0.0])
    }

    pub fn x4() -> Self {
        Self::standard([0.0, 0.0, 0.0, 1.0, 0.0])
    }

    pub fn x5() -> Self {
        Self::standard([0.0, 0.0, 0.0, 0.0, 1.0])
    }

    pub fn x_plus() -> Self {
        Self::plus_minus([1.0, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn x_minus() -> Self {
        Self::plus_minus([0.0, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn x_plus_plus() -> Self {
        Self::plus_minus([0.0, 0.0, 0.0, 1.0, 0.0])
    }

    pub fn x_minus_minus() -> Self {
        Self::plus_minus([0.0, 0.0, 0.0, 0.0, 1.0])
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn coords(&self) -> [f64; 5] {
        self.coords
    }

    /// Coordinates in the standard basis, converting if needed.
    pub fn standard_coords(&self) -> [f64; 5] {
        match self.basis {
            Basis::Standard => self.coords,
            Basis::PlusMinus => {
                let [p, m, c3, pp, mm] = self.coords;
                [p + m, p - m, c3, pp + mm, pp - mm]
            }
        }
    }

    /// Coordinates in the plus/minus basis, converting if needed.
    pub fn plus_minus_coords(&self) -> [f64; 5] {
        match self.basis {
            Basis::Standard => {
                let [a1, a2, a3, a4, a5] = self.coords;
                [
                    0.5 * (a1 + a2),
                    0.5 * (a1 - a2),
                    a3,
                    0.5 * (a4 + a5),
                    0.5 * (a4 - a5),
                ]
            }
            Basis::PlusMinus => self.coords,
        }
    }

    pub fn to_basis(&self, basis: Basis) -> Self {
        match basis {
            Basis::Standard => Self::standard(self.standard_coords()),
            Basis::PlusMinus => Self::plus_minus(self.plus_minus_coords()),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut c = self.coords;
        for ci in &mut c {
            *ci *= k;
        }
        Self::new(c, self.basis)
    }

    /// Sum in the standard basis.
    pub fn add(&self, other: &Self) -> Self {
        let a = self.standard_coords();
        let b = other.standard_coords();
        Self::standard([a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3], a[4] + b[4]])
    }

    pub fn norm(&self) -> f64 {
        self.standard_coords().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Matrix of `ad` of this element on standard coordinates.
    pub fn ad_matrix(&self) -> Matrix5<f64> {
        let [y1, y2, y3, _, _] = self.standard_coords();
        // Columns are ad_Y(X_j): ad_Y(X1) = -y2 X3 - y3 X4, ad_Y(X2) = y1 X3 - y3 X5,
        // ad_Y(X3) = y1 X4 + y2 X5, ad_Y(X4) = ad_Y(X5) = 0.
        let mut m = Matrix5::zeros();
        m[(2, 0)] = -y2;
        m[(3, 0)] = -y3;
        m[(2, 1)] = y1;
        m[(4, 1)] = -y3;
        m[(3, 2)] = y1;
        m[(4, 2)] = y2;
        m
    }
}

/// Lie bracket from the structure constants; total and bilinear.
pub fn bracket(a: &AlgebraVector, b: &AlgebraVector) -> AlgebraVector {
    let x = a.standard_coords();
    let y = b.standard_coords();
    AlgebraVector::standard([
        0.0,
        0.0,
        x[0] * y[1] - x[1] * y[0],
        x[0] * y[2] - x[2] * y[0],
        x[1] * y[2] - x[2] * y[1],
    ])
}

/// Pairing of a covector `(h1..h5)` with an algebra element, `sum h_i a_i`
/// in the standard basis.
pub fn pair(h: &[f64; 5], a: &AlgebraVector) -> f64 {
    let c = a.standard_coords();
    h.iter().zip(c.iter()).map(|(hi, ci)| hi * ci).sum()
}

/// The adjoint exponential `e^{t ad Y}` as an exact polynomial matrix.
///
/// Step-3 nilpotency gives `ad_Y^3 = 0`, so the series terminates:
/// `e^{t ad Y} = I + t ad_Y + (t^2/2) ad_Y^2`.
#[derive(Debug, Clone)]
pub struct AdjointMap {
    matrix: Matrix5<f64>,
    generator: AlgebraVector,
    t: f64,
}

impl AdjointMap {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix5::identity(),
            generator: AlgebraVector::zero(),
            t: 0.0,
        }
    }

    pub fn matrix(&self) -> &Matrix5<f64> {
        &self.matrix
    }

    pub fn generator(&self) -> &AlgebraVector {
        &self.generator
    }

    pub fn parameter(&self) -> f64 {
        self.t
    }

    /// Apply the map to an algebra element (result in the standard basis).
    pub fn apply(&self, v: &AlgebraVector) -> AlgebraVector {
        let c = v.standard_coords();
        let x = nalgebra::Vector5::from_column_slice(&c);
        let y = self.matrix * x;
        AlgebraVector::standard([y[0], y[1], y[2], y[3], y[4]])
    }

    /// Operator composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &AdjointMap) -> AdjointMap {
        AdjointMap {
            matrix: self.matrix * other.matrix,
            generator: AlgebraVector::zero(),
            t: f64::NAN,
        }
    }

    /// Inverse map, the exponential at parameter `-t`.
    pub fn inverse(&self) -> AdjointMap {
        ad_exp(&self.generator, -self.t)
    }
}

/// `e^{t ad Y}` for an algebra element `Y`.
pub fn ad_exp(y: &AlgebraVector, t: f64) -> AdjointMap {
    let a = y.ad_matrix();
    let matrix = Matrix5::identity() + a * t + a * a * (0.5 * t * t);
    AdjointMap {
        matrix,
        generator: *y,
        t,
    }
}

/// Point of the Cartan group model `M = R^5`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub v: f64,
    pub w: f64,
}

impl GroupPoint {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(x: f64, y: f64, z: f64, v: f64, w: f64) -> Self {
        Self { x, y, z, v, w }
    }

    pub fn coords(&self) -> [f64; 5] {
        [self.x, self.y, self.z, self.v, self.w]
    }
}

/// Closed-form flow of `q' = u1 X1 + u2 X2` with constant control.
///
/// The coordinate system is triangular: `x`, `y` are affine in `t`,
/// `z` picks up the constant area term `(x0 u2 - y0 u1)/2`, and `v`, `w`
/// integrate the squared radius, cubic in `t`. The semigroup property
/// holds exactly.
pub fn flow_const(q: &GroupPoint, u: [f64; 2], t: f64) -> GroupPoint {
    let [u1, u2] = u;
    let (x0, y0) = (q.x, q.y);
    // integral of (x(s)^2 + y(s)^2) ds over [0, t]
    let s = (x0 * x0 + y0 * y0) * t
        + (x0 * u1 + y0 * u2) * t * t
        + (u1 * u1 + u2 * u2) * t * t * t / 3.0;
    GroupPoint {
        x: x0 + u1 * t,
        y: y0 + u2 * t,
        z: q.z + 0.5 * (x0 * u2 - y0 * u1) * t,
        v: q.v + 0.5 * u2 * s,
        w: q.w - 0.5 * u1 * s,
    }
}

/// Fourth-order integrator for the same ODE; test oracle for `flow_const`.
pub fn flow_const_numeric(q: &GroupPoint, u: [f64; 2], t: f64, dt: f64) -> GroupPoint {
    let [u1, u2] = u;
    let deriv = |p: &[f64; 5]| -> [f64; 5] {
        let (x, y) = (p[0], p[1]);
        let r2 = x * x + y * y;
        [
            u1,
            u2,
            0.5 * (x * u2 - y * u1),
            0.5 * u2 * r2,
            -0.5 * u1 * r2,
        ]
    };
    let mut p = q.coords();
    let n = (t / dt).ceil().max(1.0) as usize;
    let h = t / n as f64;
    for _ in 0..n {
        let k1 = deriv(&p);
        let mut p2 = p;
        for i in 0..5 {
            p2[i] = p[i] + 0.5 * h * k1[i];
        }
        let k2 = deriv(&p2);
        for i in 0..5 {
            p2[i] = p[i] + 0.5 * h * k2[i];
        }
        let k3 = deriv(&p2);
        for i in 0..5 {
            p2[i] = p[i] + h * k3[i];
        }
        let k4 = deriv(&p2);
        for i in 0..5 {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    GroupPoint::new(p[0], p[1], p[2], p[3], p[4])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn assert_vec_eq(a: &AlgebraVector, b: &AlgebraVector, tol: f64) {
        let ca = a.standard_coords();
        let cb = b.standard_coords();
        for i in 0..5 {
            assert!(
                (ca[i] - cb[i]).abs() <= tol,
                "coord {i}: {} vs {}",
                ca[i],
                cb[i]
            );
        }
    }

    #[test]
    fn structure_constants() {
        assert_vec_eq(
            &bracket(&AlgebraVector::x1(), &AlgebraVector::x2()),
            &AlgebraVector::x3(),
            0.0,
        );
        assert_vec_eq(
            &bracket(&AlgebraVector::x1(), &AlgebraVector::x3()),
            &AlgebraVector::x4(),
            0.0,
        );
        assert_vec_eq(
            &bracket(&AlgebraVector::x2(), &AlgebraVector::x3()),
            &AlgebraVector::x5(),
            0.0,
        );
        // X4, X5 central
        for other in [
            AlgebraVector::x1(),
            AlgebraVector::x2(),
            AlgebraVector::x3(),
            AlgebraVector::x4(),
            AlgebraVector::x5(),
        ] {
            assert_vec_eq(&bracket(&AlgebraVector::x4(), &other), &AlgebraVector::zero(), 0.0);
            assert_vec_eq(&bracket(&AlgebraVector::x5(), &other), &AlgebraVector::zero(), 0.0);
        }
    }

    #[test]
    fn plus_minus_bracket() {
        // [X+, X-] = -2 X3
        let b = bracket(&AlgebraVector::x_plus(), &AlgebraVector::x_minus());
        assert_vec_eq(&b, &AlgebraVector::x3().scale(-2.0), 0.0);
        // [X+, X3] = X++, [X-, X3] = X--
        assert_vec_eq(
            &bracket(&AlgebraVector::x_plus(), &AlgebraVector::x3()),
            &AlgebraVector::x_plus_plus(),
            0.0,
        );
        assert_vec_eq(
            &bracket(&AlgebraVector::x_minus(), &AlgebraVector::x3()),
            &AlgebraVector::x_minus_minus(),
            0.0,
        );
    }

    #[test]
    fn basis_round_trip() {
        let v = AlgebraVector::standard([1.5, -2.0, 0.25, 3.0, -7.0]);
        let back = v.to_basis(Basis::PlusMinus).to_basis(Basis::Standard);
        assert_vec_eq(&v, &back, 1e-15);
    }

    #[test]
    fn jacobi_identity_all_triples() {
        let basis = [
            AlgebraVector::x1(),
            AlgebraVector::x2(),
            AlgebraVector::x3(),
            AlgebraVector::x4(),
            AlgebraVector::x5(),
        ];
        for a in &basis {
            for b in &basis {
                for c in &basis {
                    let s = bracket(a, &bracket(b, c))
                        .add(&bracket(b, &bracket(c, a)))
                        .add(&bracket(c, &bracket(a, b)));
                    assert_vec_eq(&s, &AlgebraVector::zero(), 0.0);
                }
            }
        }
    }

    #[test]
    fn ad_exp_on_x_minus() {
        // e^{t ad X+}(X-) = X- - 2t X3 - t^2 X++
        let t = 0.7;
        let got = ad_exp(&AlgebraVector::x_plus(), t).apply(&AlgebraVector::x_minus());
        let want = AlgebraVector::x_minus()
            .add(&AlgebraVector::x3().scale(-2.0 * t))
            .add(&AlgebraVector::x_plus_plus().scale(-t * t));
        assert_vec_eq(&got, &want, 1e-14);
    }

    #[test]
    fn ad_exp_zero_is_identity() {
        let y = AlgebraVector::standard([0.3, -1.0, 2.0, 0.1, 4.0]);
        let m = ad_exp(&y, 0.0);
        assert_eq!(m.matrix(), &Matrix5::identity());
    }

    #[test]
    fn composed_map_matches_z3() {
        // P3 = e^{-tau2 ad X-} o e^{-tau3 ad X+} applied to Y3 = -X-
        // gives -X- - 2 tau3 X3 + tau3^2 X++ + 2 tau2 tau3 X--.
        let (tau2, tau3) = (0.9, 0.4);
        let p3 = ad_exp(&AlgebraVector::x_minus(), -tau2)
            .compose(&ad_exp(&AlgebraVector::x_plus(), -tau3));
        let got = p3.apply(&AlgebraVector::x_minus().scale(-1.0));
        let want = AlgebraVector::x_minus()
            .scale(-1.0)
            .add(&AlgebraVector::x3().scale(-2.0 * tau3))
            .add(&AlgebraVector::x_plus_plus().scale(tau3 * tau3))
            .add(&AlgebraVector::x_minus_minus().scale(2.0 * tau2 * tau3));
        assert_vec_eq(&got, &want, 1e-14);
    }

    #[test]
    fn pairing_examples() {
        let h = [0.1, -0.4, 0.7, 2.0, 1.0];
        assert_relative_eq!(pair(&h, &AlgebraVector::x3()), 0.7);
        assert_eq!(pair(&h, &AlgebraVector::zero()), 0.0);
        // <h, [X+, -X-]> = 2 h3
        let b = bracket(&AlgebraVector::x_plus(), &AlgebraVector::x_minus().scale(-1.0));
        assert_relative_eq!(pair(&h, &b), 2.0 * 0.7, max_relative = 1e-15);
    }

    #[test]
    fn flow_examples() {
        let id = GroupPoint::identity();
        let q = flow_const(&id, [1.0, 1.0], 1.0);
        assert_relative_eq!(q.x, 1.0);
        assert_relative_eq!(q.y, 1.0);
        assert_relative_eq!(q.z, 0.0);
        assert_relative_eq!(q.v, 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(q.w, -1.0 / 3.0, max_relative = 1e-15);

        let q = flow_const(&id, [1.0, -1.0], 1.0);
        assert_relative_eq!(q.v, -1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(q.w, -1.0 / 3.0, max_relative = 1e-15);

        let p = GroupPoint::new(0.3, -0.2, 1.0, 0.5, -0.1);
        assert_eq!(flow_const(&p, [0.4, -0.9], 0.0), p);
    }

    proptest! {
        #[test]
        fn ad_cubed_vanishes(c in proptest::array::uniform5(-5.0f64..5.0)) {
            let y = AlgebraVector::standard(c);
            let a = y.ad_matrix();
            let a3 = a * a * a;
            prop_assert!(a3.iter().all(|&e| e == 0.0));
        }

        #[test]
        fn ad_exp_inverse_is_identity(
            c in proptest::array::uniform5(-3.0f64..3.0),
            t in -5.0f64..5.0,
        ) {
            let y = AlgebraVector::standard(c);
            let m = ad_exp(&y, t);
            let prod = m.compose(&m.inverse());
            let err = (prod.matrix() - Matrix5::identity()).abs().max();
            prop_assert!(err <= 1e-12, "residual {err}");
        }

        #[test]
        fn flow_semigroup(
            x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0,
            v in -2.0f64..2.0, w in -2.0f64..2.0,
            u1 in -1.0f64..1.0, u2 in -1.0f64..1.0,
            s in 0.0f64..4.0, t in 0.0f64..4.0,
        ) {
            let q = GroupPoint::new(x, y, z, v, w);
            let a = flow_const(&flow_const(&q, [u1, u2], s), [u1, u2], t);
            let b = flow_const(&q, [u1, u2], s + t);
            for (ca, cb) in a.coords().iter().zip(b.coords().iter()) {
                prop_assert!((ca - cb).abs() <= 1e-10 * (1.0 + cb.abs()));
            }
        }

        #[test]
        fn flow_matches_integrator(
            x in -2.0f64..2.0, y in -2.0f64..2.0,
            u1 in -1.0f64..1.0, u2 in -1.0f64..1.0,
            t in 0.0f64..10.0,
        ) {
            let q = GroupPoint::new(x, y, 0.0, 0.0, 0.0);
            let exact = flow_const(&q, [u1, u2], t);
            let num = flow_const_numeric(&q, [u1, u2], t, 1e-3);
            for (a, b) in exact.coords().iter().zip(num.coords().iter()) {
                prop_assert!((a - b).abs() <= 1e-8);
            }
        }
    }
}
