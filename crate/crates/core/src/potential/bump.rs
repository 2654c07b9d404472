//! C² bump functions built from the quintic smoothstep.

/// Which barrier a bump belongs to. All kinds share the same shape; the
/// connectivity kind is the one whose argument legitimately goes negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BumpKind {
    Agent,
    Obstacle,
    Connectivity,
}

/// Value and first two derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpValue {
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

impl BumpValue {
    const ZERO: Self = Self {
        value: 0.0,
        slope: 0.0,
        curvature: 0.0,
    };
    const ONE: Self = Self {
        value: 1.0,
        slope: 0.0,
        curvature: 0.0,
    };
}

/// `0` below zero, `s(x / knot)` on `[0, knot)`, `1` from the knot on, with
/// `s(t) = 6t^5 - 15t^4 + 10t^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub kind: BumpKind,
    pub knot: f64,
}

#[cfg(test)]
thread_local! {
    /// Flips the sign of the slope; lets tests confirm the self-check catches it.
    pub(crate) static FLIP_SLOPE: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

impl Bump {
    pub fn new(kind: BumpKind, knot: f64) -> Self {
        debug_assert!(knot > 0.0, "bump knot must be positive, got {knot}");
        Self { kind, knot }
    }

    pub fn eval(&self, x: f64) -> BumpValue {
        if x <= 0.0 {
            return BumpValue::ZERO;
        }
        if x >= self.knot {
            return BumpValue::ONE;
        }
        let k = self.knot;
        let t = x / k;
        let slope = smoothstep_slope(t) / k;
        #[cfg(test)]
        let slope = if FLIP_SLOPE.with(|f| f.get()) { -slope } else { slope };
        BumpValue {
            value: smoothstep(t),
            slope,
            curvature: smoothstep_curvature(t) / (k * k),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).value
    }
}

pub fn smoothstep(t: f64) -> f64 {
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

pub fn smoothstep_slope(t: f64) -> f64 {
    let u = t * (1.0 - t);
    30.0 * u * u
}

pub fn smoothstep_curvature(t: f64) -> f64 {
    60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let b = Bump::new(BumpKind::Agent, 24.75);
        assert_eq!(b.eval(0.0), BumpValue::ZERO);
        assert_eq!(b.eval(24.75), BumpValue::ONE);
        assert_eq!(b.eval(100.0), BumpValue::ONE);
        assert_eq!(b.value(24.75 / 2.0), 0.5);
        let c = Bump::new(BumpKind::Connectivity, 3.0);
        assert_eq!(c.eval(-1.0), BumpValue::ZERO);
    }

    #[test]
    fn interior_derivatives_vanish_at_joins() {
        let b = Bump::new(BumpKind::Obstacle, 2.0);
        let near_zero = b.eval(1e-9);
        let near_knot = b.eval(2.0 - 1e-9);
        assert!(near_zero.slope.abs() < 1e-15 && near_zero.curvature.abs() < 1e-7);
        assert!(near_knot.slope.abs() < 1e-15 && near_knot.curvature.abs() < 1e-7);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = Bump::new(BumpKind::Agent, 5.0);
        let h = 1e-5;
        for k in 1..50 {
            let x = 5.0 * k as f64 / 50.0;
            let fd1 = (b.value(x + h) - b.value(x - h)) / (2.0 * h);
            let fd2 = (b.eval(x + h).slope - b.eval(x - h).slope) / (2.0 * h);
            let e = b.eval(x);
            assert!((fd1 - e.slope).abs() < 1e-9, "slope at {x}");
            assert!((fd2 - e.curvature).abs() < 1e-8, "curvature at {x}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bounded_and_monotone(knot in 0.01..100.0f64, a in -10.0..200.0f64, b in -10.0..200.0f64) {
                let bump = Bump::new(BumpKind::Connectivity, knot);
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let (vl, vh) = (bump.value(lo), bump.value(hi));
                prop_assert!((0.0..=1.0).contains(&vl) && (0.0..=1.0).contains(&vh));
                prop_assert!(vl <= vh);
                prop_assert!(bump.eval(lo).slope >= 0.0);
            }
        }
    }
}
