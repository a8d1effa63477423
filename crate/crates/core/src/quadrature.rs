//! Symmetric quadrature rules on triangles (barycentric points, weights
//! summing to one) and Gauss–Legendre rules on the unit interval.

#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// 3-point rule, exact for degree 2.
    pub fn degree2() -> Self {
        let a = 2.0 / 3.0;
        let b = 1.0 / 6.0;
        TriangleRule {
            points: vec![[a, b, b], [b, a, b], [b, b, a]],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    /// 6-point rule, exact for degree 4.
    pub fn degree4() -> Self {
        let mut r = TriangleRule {
            points: Vec::new(),
            weights: Vec::new(),
        };
        r.push_orbit(0.445_948_490_915_965, 0.223_381_589_678_011);
        r.push_orbit(0.091_576_213_509_771, 0.109_951_743_655_322);
        r
    }

    /// 7-point rule, exact for degree 5.
    pub fn degree5() -> Self {
        let s = 15f64.sqrt();
        let mut r = TriangleRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![0.225],
        };
        r.push_orbit((6.0 - s) / 21.0, (155.0 - s) / 1200.0);
        r.push_orbit((6.0 + s) / 21.0, (155.0 + s) / 1200.0);
        r
    }

    fn push_orbit(&mut self, a: f64, w: f64) {
        let b = 1.0 - 2.0 * a;
        for p in [[a, a, b], [a, b, a], [b, a, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// Two-point Gauss rule on `[0, 1]` as `(parameter, weight)` pairs.
pub const GAUSS2: [(f64, f64); 2] = [
    (0.211_324_865_405_187_1, 0.5),
    (0.788_675_134_594_812_9, 0.5),
];

#[cfg(test)]
mod tests {
    use super::*;

    /// ∫_T λ0^a λ1^b λ2^c = a! b! c! 2! / (a+b+c+2)! · |T|, with |T| = 1 here.
    fn exact_monomial(a: u32, b: u32, c: u32) -> f64 {
        let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
        f(a) * f(b) * f(c) * 2.0 / f(a + b + c + 2)
    }

    fn check(rule: &TriangleRule, degree: u32) {
        for a in 0..=degree {
            for b in 0..=degree - a {
                for c in 0..=degree - a - b {
                    let q: f64 = rule
                        .iter()
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32))
                        .sum();
                    let e = exact_monomial(a, b, c);
                    assert!((q - e).abs() < 1e-12, "deg {degree} monomial ({a},{b},{c}): {q} vs {e}");
                }
            }
        }
    }

    #[test]
    fn rules_are_exact_to_their_degree() {
        check(&TriangleRule::degree2(), 2);
        check(&TriangleRule::degree4(), 4);
        check(&TriangleRule::degree5(), 5);
    }

    #[test]
    fn gauss2_exact_for_cubics() {
        let q: f64 = GAUSS2.iter().map(|(t, w)| w * t.powi(3)).sum();
        assert!((q - 0.25).abs() < 1e-15);
    }
}
