use std::ops::{Add, Mul, Neg, Sub};

/// `q0 + q1·i + q2·j + q3·k`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Quaternion {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl Quaternion {
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(q0: f64, q1: f64, q2: f64, q3: f64) -> Self {
        Quaternion { q0, q1, q2, q3 }
    }

    pub fn from_array(q: [f64; 4]) -> Self {
        Quaternion::new(q[0], q[1], q[2], q[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.q0, self.q1, self.q2, self.q3]
    }

    pub fn conjugate(self) -> Self {
        Quaternion::new(self.q0, -self.q1, -self.q2, -self.q3)
    }

    pub fn norm_sqr(self) -> f64 {
        self.q0 * self.q0 + self.q1 * self.q1 + self.q2 * self.q2 + self.q3 * self.q3
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }
}

pub fn hamilton_product(p: Quaternion, q: Quaternion) -> Quaternion {
    Quaternion::new(
        p.q0 * q.q0 - p.q1 * q.q1 - p.q2 * q.q2 - p.q3 * q.q3,
        p.q0 * q.q1 + p.q1 * q.q0 + p.q2 * q.q3 - p.q3 * q.q2,
        p.q0 * q.q2 - p.q1 * q.q3 + p.q2 * q.q0 + p.q3 * q.q1,
        p.q0 * q.q3 + p.q1 * q.q2 - p.q2 * q.q1 + p.q3 * q.q0,
    )
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        hamilton_product(self, rhs)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;

    fn add(self, r: Quaternion) -> Quaternion {
        Quaternion::new(self.q0 + r.q0, self.q1 + r.q1, self.q2 + r.q2, self.q3 + r.q3)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;

    fn sub(self, r: Quaternion) -> Quaternion {
        Quaternion::new(self.q0 - r.q0, self.q1 - r.q1, self.q2 - r.q2, self.q3 - r.q3)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        Quaternion::new(-self.q0, -self.q1, -self.q2, -self.q3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn imaginary_units_anticommute() {
        assert_eq!(Quaternion::I * Quaternion::J, Quaternion::K);
        assert_eq!(Quaternion::J * Quaternion::I, -Quaternion::K);
        assert_eq!(Quaternion::J * Quaternion::K, Quaternion::I);
        assert_eq!(Quaternion::K * Quaternion::I, Quaternion::J);
        for u in [Quaternion::I, Quaternion::J, Quaternion::K] {
            assert_eq!(u * u, -Quaternion::ONE);
        }
    }

    fn quat() -> impl Strategy<Value = Quaternion> {
        prop::array::uniform4(-10.0f64..10.0).prop_map(Quaternion::from_array)
    }

    proptest! {
        #[test]
        fn identity_is_neutral(q in quat()) {
            prop_assert_eq!(Quaternion::ONE * q, q);
            prop_assert_eq!(q * Quaternion::ONE, q);
        }

        #[test]
        fn norm_is_multiplicative(p in quat(), q in quat()) {
            let lhs = (p * q).norm();
            let rhs = p.norm() * q.norm();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }

        #[test]
        fn conjugate_product_is_norm_squared(q in quat()) {
            let r = q.conjugate() * q;
            let n2 = q.norm_sqr();
            prop_assert!((r.q0 - n2).abs() <= 1e-12 * n2.max(1.0));
            prop_assert!(r.q1.abs() <= 1e-12 * n2.max(1.0));
            prop_assert!(r.q2.abs() <= 1e-12 * n2.max(1.0));
            prop_assert!(r.q3.abs() <= 1e-12 * n2.max(1.0));
        }
    }
}
