//! P1 reference element, quadrature rules and degree-of-freedom maps.

use crate::mesh::{barycentric, from_barycentric, TriMesh};
use crate::{Error, Point, Result};

/// Barycentric gradients of a triangle, `∇λ_i`, constant over the element.
pub fn p1_gradients(t: &[Point; 3]) -> [Point; 3] {
    let det = crate::mesh::cross3(t[0], t[1], t[2]);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let a = t[(i + 1) % 3];
        let b = t[(i + 2) % 3];
        g[i] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
    }
    g
}

/// Values and reference-element gradients of the three P1 shape functions.
///
/// Reference vertices are `(0,0)`, `(1,0)`, `(0,1)`.
pub fn p1_eval(bary: [f64; 3]) -> ([f64; 3], [Point; 3]) {
    (bary, [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
}

/// Quadrature on the reference triangle. Weights sum to its area, 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exact_degree: u32,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates `f` (given in barycentric coordinates) over a physical
    /// triangle of the given area.
    pub fn integrate<F: FnMut([f64; 3]) -> f64>(&self, area: f64, mut f: F) -> f64 {
        2.0 * area
            * self
                .points
                .iter()
                .zip(&self.weights)
                .map(|(&b, &w)| w * f(b))
                .sum::<f64>()
    }

    /// Iterates `(barycentric point, weight scaled to a triangle of `area`)`.
    pub fn scaled(&self, area: f64) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(&b, &w)| (b, 2.0 * area * w))
    }
}

fn perms3(a: f64, b: f64, c: f64) -> [[f64; 3]; 6] {
    [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
}

fn orbit3(a: f64) -> [[f64; 3]; 3] {
    let b = 1.0 - 2.0 * a;
    [[b, a, a], [a, b, a], [a, a, b]]
}

/// Rule of the requested exactness degree.
///
/// * 1: centroid
/// * 2: edge midpoints
/// * 3: six-point rule with positive weights
/// * 6: twelve-point rule
pub fn make_rule(exact_degree: u32) -> Result<QuadratureRule> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut push = |pts: &[[f64; 3]], w: f64| {
        for p in pts {
            points.push(*p);
            weights.push(0.5 * w);
        }
    };
    match exact_degree {
        1 => push(&[[1.0 / 3.0; 3]], 1.0),
        2 => push(&[[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]], 1.0 / 3.0),
        3 => push(
            &perms3(0.659_027_622_374_092, 0.231_933_368_553_031, 0.109_039_009_072_877),
            1.0 / 6.0,
        ),
        6 => {
            push(&orbit3(0.249_286_745_170_910), 0.116_786_275_726_379);
            push(&orbit3(0.063_089_014_491_502), 0.050_844_906_370_207);
            push(
                &perms3(0.053_145_049_844_817, 0.310_352_451_033_784, 0.636_502_499_121_399),
                0.082_851_075_618_374,
            );
        }
        d => return Err(Error::arg(format!("no quadrature rule of degree {d}"))),
    }
    Ok(QuadratureRule {
        points,
        weights,
        exact_degree,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldKind {
    Velocity,
    Pressure,
    Deformation,
    Multiplier,
}

impl FieldKind {
    pub fn components(self) -> usize {
        match self {
            FieldKind::Pressure => 1,
            _ => 2,
        }
    }
}

/// Global numbering of the nodal unknowns of one field.
///
/// Dof of `(vertex, component)` is `vertex * components + component`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub kind: FieldKind,
    pub components: usize,
    pub n_vertices: usize,
    /// Dirichlet-constrained dofs (velocity dofs on the fluid boundary).
    pub constrained: Vec<bool>,
}

impl DofMap {
    #[inline]
    pub fn index(&self, vertex: usize, component: usize) -> usize {
        vertex * self.components + component
    }

    pub fn n_dofs(&self) -> usize {
        self.n_vertices * self.components
    }

    pub fn n_constrained(&self) -> usize {
        self.constrained.iter().filter(|&&c| c).count()
    }
}

pub fn build_dof_map(mesh: &TriMesh, kind: FieldKind) -> DofMap {
    let components = kind.components();
    let constrained = if kind == FieldKind::Velocity {
        mesh.boundary_vertex
            .iter()
            .flat_map(|&b| std::iter::repeat_n(b, components))
            .collect()
    } else {
        vec![false; mesh.n_vertices() * components]
    };
    DofMap {
        kind,
        components,
        n_vertices: mesh.n_vertices(),
        constrained,
    }
}

/// Coefficients of a finite element function, aligned with a [`DofMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVector {
    pub coeffs: Vec<f64>,
}

impl FieldVector {
    pub fn zeros(map: &DofMap) -> Self {
        FieldVector {
            coeffs: vec![0.0; map.n_dofs()],
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Nodal values of vertex `v`.
    pub fn nodal(&self, map: &DofMap, v: usize) -> [f64; 2] {
        if map.components == 1 {
            [self.coeffs[v], 0.0]
        } else {
            [self.coeffs[2 * v], self.coeffs[2 * v + 1]]
        }
    }
}

/// Nodal interpolant of `f`, which returns one value per component.
pub fn interpolate<F>(f: F, map: &DofMap, mesh: &TriMesh) -> FieldVector
where
    F: Fn(Point) -> [f64; 2],
{
    let mut coeffs = vec![0.0; map.n_dofs()];
    for (v, &x) in mesh.vertices.iter().enumerate() {
        let val = f(x);
        for c in 0..map.components {
            coeffs[map.index(v, c)] = val[c];
        }
    }
    FieldVector { coeffs }
}

/// Value and physical gradient of a discrete field at a point of an element.
///
/// `grad[c]` is the gradient of component `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub value: [f64; 2],
    pub grad: [[f64; 2]; 2],
}

pub fn eval_field(vec: &FieldVector, map: &DofMap, mesh: &TriMesh, element: usize, bary: [f64; 3]) -> FieldValue {
    let tri = mesh.triangle(element);
    let g = p1_gradients(&tri);
    let verts = mesh.triangles[element];
    let mut value = [0.0; 2];
    let mut grad = [[0.0; 2]; 2];
    for k in 0..3 {
        for c in 0..map.components {
            let a = vec.coeffs[map.index(verts[k], c)];
            value[c] += a * bary[k];
            grad[c][0] += a * g[k][0];
            grad[c][1] += a * g[k][1];
        }
    }
    FieldValue { value, grad }
}

/// Value of the field at a physical point of a known element.
pub fn eval_at_point(vec: &FieldVector, map: &DofMap, mesh: &TriMesh, element: usize, p: Point) -> FieldValue {
    eval_field(vec, map, mesh, element, barycentric(&mesh.triangle(element), p))
}

/// Physical point of a quadrature node.
pub fn map_point(mesh: &TriMesh, element: usize, bary: [f64; 3]) -> Point {
    from_barycentric(&mesh.triangle(element), bary)
}
