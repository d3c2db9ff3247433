//! P1 element matrices on segments and triangles.

use super::quadrature::{SegmentRule, TriangleRule};
use crate::error::{Error, Result};

/// Where the gradient sits in the advection bilinear form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdvectionForm {
    /// `∫ ψ_i (c·∇ψ_j)`, the non-conservative operator.
    GradientOnTrial,
    /// `∫ (∇ψ_i·c) ψ_j`, the conservative operator after integration by parts.
    GradientOnTest,
}

pub type Tensor2 = [[f64; 2]; 2];

/// A straight segment on the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub x0: f64,
    pub x1: f64,
}

impl Segment {
    pub fn new(x0: f64, x1: f64) -> Result<Self> {
        if !(x1 - x0 > 0.0) {
            return Err(Error::SingularGeometry(format!(
                "segment [{x0}, {x1}] has non-positive length"
            )));
        }
        Ok(Self { x0, x1 })
    }

    pub fn length(&self) -> f64 {
        self.x1 - self.x0
    }

    /// Derivatives of the two hat functions.
    pub fn grads(&self) -> [f64; 2] {
        let h = self.length();
        [-1.0 / h, 1.0 / h]
    }

    pub fn point(&self, s: f64) -> f64 {
        self.x0 + s * (self.x1 - self.x0)
    }

    pub fn mass(&self) -> [[f64; 2]; 2] {
        let h = self.length();
        [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]]
    }

    pub fn lumped_mass(&self) -> [f64; 2] {
        let h = self.length();
        [h / 2.0, h / 2.0]
    }

    pub fn stiffness(&self, rule: &SegmentRule, a: impl Fn(f64) -> f64) -> [[f64; 2]; 2] {
        let h = self.length();
        let mean: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(&s, &w)| w * a(self.point(s)))
            .sum();
        let k = mean / h;
        [[k, -k], [-k, k]]
    }

    pub fn advection(
        &self,
        rule: &SegmentRule,
        c: impl Fn(f64) -> f64,
        form: AdvectionForm,
    ) -> [[f64; 2]; 2] {
        let h = self.length();
        let g = self.grads();
        let mut out = [[0.0; 2]; 2];
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let cv = w * h * c(self.point(s));
            let psi = [1.0 - s, s];
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] += match form {
                        AdvectionForm::GradientOnTrial => cv * psi[i] * g[j],
                        AdvectionForm::GradientOnTest => cv * g[i] * psi[j],
                    };
                }
            }
        }
        out
    }

    /// `∫ f ψ_i` for both hats.
    pub fn load(&self, rule: &SegmentRule, f: impl Fn(f64) -> f64) -> [f64; 2] {
        let h = self.length();
        let mut out = [0.0; 2];
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let v = w * h * f(self.point(s));
            out[0] += v * (1.0 - s);
            out[1] += v * s;
        }
        out
    }
}

/// A straight triangle in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub v: [[f64; 2]; 3],
}

impl Triangle {
    /// Builds a positively oriented triangle.
    pub fn new(v: [[f64; 2]; 3]) -> Result<Self> {
        let t = Self { v };
        if !(t.signed_area() > 0.0) {
            return Err(Error::SingularGeometry(format!(
                "triangle {v:?} has non-positive signed area {}",
                t.signed_area()
            )));
        }
        Ok(t)
    }

    /// Wraps vertices without an orientation check.
    pub fn unchecked(v: [[f64; 2]; 3]) -> Self {
        Self { v }
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(self.v[0], self.v[1], self.v[2])
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Gradients of the three barycentric coordinates.
    pub fn grads(&self) -> [[f64; 2]; 3] {
        let [a, b, c] = self.v;
        let d = 2.0 * self.signed_area();
        [
            [(b[1] - c[1]) / d, (c[0] - b[0]) / d],
            [(c[1] - a[1]) / d, (a[0] - c[0]) / d],
            [(a[1] - b[1]) / d, (b[0] - a[0]) / d],
        ]
    }

    pub fn point(&self, bary: [f64; 3]) -> [f64; 2] {
        let [a, b, c] = self.v;
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    /// Barycentric coordinates of `p` (not clamped).
    pub fn barycentric(&self, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.v;
        let d = signed_area(a, b, c);
        let l1 = signed_area(a, p, c) / d;
        let l2 = signed_area(a, b, p) / d;
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn mass(&self) -> [[f64; 3]; 3] {
        let a = self.area();
        let (d, o) = (a / 6.0, a / 12.0);
        [[d, o, o], [o, d, o], [o, o, d]]
    }

    pub fn lumped_mass(&self) -> [f64; 3] {
        [self.area() / 3.0; 3]
    }

    pub fn stiffness(&self, rule: &TriangleRule, a: impl Fn([f64; 2]) -> Tensor2) -> [[f64; 3]; 3] {
        let area = self.area();
        let mut m = [[0.0; 2]; 2];
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let t = a(self.point(*bary));
            for r in 0..2 {
                for c in 0..2 {
                    m[r][c] += w * t[r][c];
                }
            }
        }
        self.stiffness_constant(scale2(m, area))
    }

    /// Stiffness for an already integrated tensor `∫_K A`.
    pub fn stiffness_constant(&self, integrated: Tensor2) -> [[f64; 3]; 3] {
        let g = self.grads();
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let ag = [
                    integrated[0][0] * g[j][0] + integrated[0][1] * g[j][1],
                    integrated[1][0] * g[j][0] + integrated[1][1] * g[j][1],
                ];
                out[i][j] = g[i][0] * ag[0] + g[i][1] * ag[1];
            }
        }
        out
    }

    pub fn advection(
        &self,
        rule: &TriangleRule,
        c: impl Fn([f64; 2]) -> [f64; 2],
        form: AdvectionForm,
    ) -> [[f64; 3]; 3] {
        let area = self.area();
        let g = self.grads();
        let mut out = [[0.0; 3]; 3];
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let cv = c(self.point(*bary));
            let cg = [
                cv[0] * g[0][0] + cv[1] * g[0][1],
                cv[0] * g[1][0] + cv[1] * g[1][1],
                cv[0] * g[2][0] + cv[1] * g[2][1],
            ];
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] += w
                        * area
                        * match form {
                            AdvectionForm::GradientOnTrial => bary[i] * cg[j],
                            AdvectionForm::GradientOnTest => cg[i] * bary[j],
                        };
                }
            }
        }
        out
    }

    pub fn load(&self, rule: &TriangleRule, f: impl Fn([f64; 2]) -> f64) -> [f64; 3] {
        let area = self.area();
        let mut out = [0.0; 3];
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let v = w * area * f(self.point(*bary));
            for i in 0..3 {
                out[i] += v * bary[i];
            }
        }
        out
    }
}

pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn scale2(m: Tensor2, s: f64) -> Tensor2 {
    [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]
}

/// A straight segment of a polyline embedded in the plane.
///
/// Hat functions are linear in arc length; tensors and vector fields enter
/// through their tangential parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneSegment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl PlaneSegment {
    pub fn new(a: [f64; 2], b: [f64; 2]) -> Result<Self> {
        let s = Self { a, b };
        if !(s.length() > 0.0) {
            return Err(Error::SingularGeometry(format!("edge segment {a:?}-{b:?} has zero length")));
        }
        Ok(s)
    }

    pub fn length(&self) -> f64 {
        ((self.b[0] - self.a[0]).powi(2) + (self.b[1] - self.a[1]).powi(2)).sqrt()
    }

    pub fn tangent(&self) -> [f64; 2] {
        let l = self.length();
        [(self.b[0] - self.a[0]) / l, (self.b[1] - self.a[1]) / l]
    }

    pub fn point(&self, s: f64) -> [f64; 2] {
        [
            self.a[0] + s * (self.b[0] - self.a[0]),
            self.a[1] + s * (self.b[1] - self.a[1]),
        ]
    }

    pub fn mass(&self) -> [[f64; 2]; 2] {
        Segment { x0: 0.0, x1: self.length() }.mass()
    }

    pub fn lumped_mass(&self) -> [f64; 2] {
        let h = self.length();
        [h / 2.0, h / 2.0]
    }

    /// Stiffness with the reduced coefficient `τ·(Aτ)`.
    pub fn tangential_stiffness(
        &self,
        rule: &SegmentRule,
        a: impl Fn([f64; 2]) -> Tensor2,
    ) -> [[f64; 2]; 2] {
        let t = self.tangent();
        let h = self.length();
        let mean: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(&s, &w)| {
                let m = a(self.point(s));
                w * (t[0] * (m[0][0] * t[0] + m[0][1] * t[1]) + t[1] * (m[1][0] * t[0] + m[1][1] * t[1]))
            })
            .sum();
        let k = mean / h;
        [[k, -k], [-k, k]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_mass_and_stiffness_are_textbook() {
        let s = Segment::new(0.2, 0.45).unwrap();
        let h = 0.25;
        let m = s.mass();
        assert!((m[0][0] - 2.0 * h / 6.0).abs() < 1e-16);
        assert!((m[0][1] - h / 6.0).abs() < 1e-16);
        let k = s.stiffness(&SegmentRule::gauss(5), |_| 0.3);
        assert!((k[0][0] - 0.3 / h).abs() < 1e-14);
        assert!((k[0][1] + 0.3 / h).abs() < 1e-14);
    }

    #[test]
    fn reference_triangle_identity_stiffness_matches_hand_values() {
        // ∫ ∇λ_i·∇λ_j over the unit right triangle, computed by hand
        let t = Triangle::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let k = t.stiffness(&TriangleRule::degree4(), |_| [[1.0, 0.0], [0.0, 1.0]]);
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expect[i][j]).abs() < 1e-14, "{i}{j}");
            }
        }
    }

    #[test]
    fn degenerate_elements_are_rejected() {
        assert!(matches!(Segment::new(1.0, 1.0), Err(Error::SingularGeometry(_))));
        assert!(matches!(
            Triangle::new([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]),
            Err(Error::SingularGeometry(_))
        ));
        assert!(matches!(
            Triangle::new([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]),
            Err(Error::SingularGeometry(_))
        ));
    }

    #[test]
    fn advection_forms_are_transposes() {
        let t = Triangle::new([[0.1, 0.0], [1.0, 0.2], [0.3, 0.9]]).unwrap();
        let rule = TriangleRule::degree4();
        let c = |p: [f64; 2]| [1.0 + p[0], p[1] * p[0]];
        let trial = t.advection(&rule, c, AdvectionForm::GradientOnTrial);
        let test = t.advection(&rule, c, AdvectionForm::GradientOnTest);
        for i in 0..3 {
            for j in 0..3 {
                assert!((trial[i][j] - test[j][i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn barycentric_roundtrip() {
        let t = Triangle::new([[0.1, 0.0], [1.0, 0.2], [0.3, 0.9]]).unwrap();
        let b = t.barycentric([0.4, 0.3]);
        let p = t.point(b);
        assert!((p[0] - 0.4).abs() < 1e-15 && (p[1] - 0.3).abs() < 1e-15);
    }
}
