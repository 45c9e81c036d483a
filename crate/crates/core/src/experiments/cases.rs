//! Manufactured solutions of the four stationary configurations.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::sync::Arc;

use crate::assembly::{Discretization, ExactSolution, Parameters};
use crate::femspace::{interpolate, FieldVector};
use crate::mesh::GeometryDescriptor;
use crate::{Error, Mat2, Point, Result};

/// A vector field with its gradient (`grad[i][j] = ∂_j f_i`).
pub type VectorField = Arc<dyn Fn(Point) -> ([f64; 2], Mat2) + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// `Si(1) = ∫₀¹ sin(t)/t dt`, the mean of `cos(xy)` over the unit square.
pub const SI_ONE: f64 = 0.946_083_070_367_183;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseId {
    ShiftedSquare,
    Disk,
    Flower,
    Annulus,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::ShiftedSquare, CaseId::Disk, CaseId::Flower, CaseId::Annulus];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::ShiftedSquare => "shifted-square",
            CaseId::Disk => "disk",
            CaseId::Flower => "flower",
            CaseId::Annulus => "annulus",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        CaseId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown case '{s}'")))
    }
}

/// Closed-form solution of one stationary configuration.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub id: CaseId,
    pub fluid: GeometryDescriptor,
    pub solid: GeometryDescriptor,
    /// Configuration map `X̄`; discretized by its P1 interpolant.
    pub map: VectorField,
    pub velocity: VectorField,
    pub pressure: ScalarField,
    pub deformation: VectorField,
    pub multiplier: VectorField,
    pub params: Parameters,
    /// Constant subtracted from the pressure to give it zero mean.
    pub pressure_offset: f64,
    /// Shift of the shifted-square map, zero otherwise.
    pub sigma: f64,
    pub notes: &'static str,
}

impl fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("id", &self.id)
            .field("fluid", &self.fluid)
            .field("solid", &self.solid)
            .field("params", &self.params)
            .field("sigma", &self.sigma)
            .finish_non_exhaustive()
    }
}

impl ExactSolution for ManufacturedCase {
    fn velocity(&self, x: Point) -> ([f64; 2], Mat2) {
        (self.velocity)(x)
    }
    fn pressure(&self, x: Point) -> f64 {
        (self.pressure)(x)
    }
    fn deformation(&self, s: Point) -> ([f64; 2], Mat2) {
        (self.deformation)(s)
    }
    fn multiplier(&self, s: Point) -> ([f64; 2], Mat2) {
        (self.multiplier)(s)
    }
}

impl ManufacturedCase {
    pub fn name(&self) -> &'static str {
        self.id.name()
    }

    /// Meshes at refinement level `level ≥ 1`: the pressure mesh is
    /// `8·2^(level−1)` squares per side and the solid mesh is refined in
    /// step so that `h_Ω / h_B` stays fixed.
    pub fn discretization(&self, level: u32) -> Result<Discretization> {
        if level == 0 {
            return Err(Error::arg("levels start at 1"));
        }
        let fluid = self.fluid.build(level - 1)?;
        let solid = self.solid.build(level - 1)?;
        Discretization::new(fluid, solid)
    }

    /// P1 interpolant of the configuration map on the solid mesh.
    pub fn xbar(&self, disc: &Discretization) -> FieldVector {
        interpolate(|s| (self.map)(s).0, &disc.x_map, &disc.solid)
    }
}

fn vector(f: impl Fn(Point) -> ([f64; 2], Mat2) + Send + Sync + 'static) -> VectorField {
    Arc::new(f)
}

fn identity_map() -> VectorField {
    vector(|s| (s, [[1.0, 0.0], [0.0, 1.0]]))
}

/// `curl((4 − x²)²(4 − y²)²)`.
fn square_velocity(p: Point) -> ([f64; 2], Mat2) {
    let [x, y] = p;
    let (ax, ay) = (4.0 - x * x, 4.0 - y * y);
    let u = [-4.0 * y * ay * ax * ax, 4.0 * x * ax * ay * ay];
    let g = [
        [16.0 * x * y * ay * ax, -4.0 * (4.0 - 3.0 * y * y) * ax * ax],
        [4.0 * (4.0 - 3.0 * x * x) * ay * ay, -16.0 * x * y * ax * ay],
    ];
    (u, g)
}

/// The polynomial stream-function velocity shared by the disk and annulus.
fn box_velocity(p: Point) -> ([f64; 2], Mat2) {
    let a = |t: f64| t * t * (t - 1.0) * (t - 1.0);
    let da = |t: f64| 2.0 * t * (t - 1.0) * (2.0 * t - 1.0);
    let b = |t: f64| t * (t - 1.0) * (2.0 * t - 1.0);
    let db = |t: f64| 6.0 * t * t - 6.0 * t + 1.0;
    let [x, y] = p;
    (
        [2.0 * a(x) * b(y), -2.0 * b(x) * a(y)],
        [
            [2.0 * da(x) * b(y), 2.0 * a(x) * db(y)],
            [-2.0 * db(x) * a(y), -2.0 * b(x) * da(y)],
        ],
    )
}

/// `(−x sin(xy), y sin(xy))`.
fn sine_velocity(p: Point) -> ([f64; 2], Mat2) {
    let [x, y] = p;
    let (s, c) = (x * y).sin_cos();
    (
        [-x * s, y * s],
        [[-s - x * y * c, -x * x * c], [y * y * c, s + x * y * c]],
    )
}

fn exp_multiplier(s: Point) -> ([f64; 2], Mat2) {
    let (e1, e2) = (s[0].exp(), s[1].exp());
    ([e1, e2], [[e1, 0.0], [0.0, e2]])
}

/// `(s₂ sin s₁, s₂ cos s₁)`.
fn trig_multiplier(s: Point) -> ([f64; 2], Mat2) {
    let (sn, cs) = s[0].sin_cos();
    ([s[1] * sn, s[1] * cs], [[s[1] * cs, sn], [-s[1] * sn, cs]])
}

const UNIT_PARAMS: Parameters = Parameters {
    alpha: 0.0,
    beta: 0.0,
    gamma: 1.0,
    nu: 1.0,
};

/// Unit square `[0,1]²` immersed in `[−2,2]²` and mapped onto
/// `[−1+σ, 1+σ] × [−1, 1]`.
pub fn shifted_square(sigma: f64) -> ManufacturedCase {
    ManufacturedCase {
        id: CaseId::ShiftedSquare,
        fluid: GeometryDescriptor::SquareContainer4x4,
        solid: GeometryDescriptor::UnitSquareBox,
        map: vector(move |s| ([2.0 * s[0] - 1.0 + sigma, 2.0 * s[1] - 1.0], [[2.0, 0.0], [0.0, 2.0]])),
        velocity: vector(square_velocity),
        pressure: Arc::new(|x| 150.0 * x[0].sin()),
        deformation: vector(square_velocity),
        multiplier: vector(exp_multiplier),
        params: UNIT_PARAMS,
        pressure_offset: 0.0,
        sigma,
        notes: "mapped solid mesh matches the velocity mesh at sigma = 0",
    }
}

pub fn disk() -> ManufacturedCase {
    let center = [0.5, 0.5];
    let radius = 0.2;
    let solid_area = PI * radius * radius;
    let outside = -solid_area / (2.0 * (1.0 - solid_area));
    let base = 4.0 / (PI * PI);
    ManufacturedCase {
        id: CaseId::Disk,
        fluid: GeometryDescriptor::UnitSquareBox,
        solid: GeometryDescriptor::Disk { center, radius },
        map: identity_map(),
        velocity: vector(box_velocity),
        pressure: Arc::new(move |x| {
            let smooth = (PI * x[0]).sin() * (PI * x[1]).sin() - base;
            let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
            smooth + if r2 < radius * radius { 0.5 } else { outside }
        }),
        deformation: vector(|s| {
            let [a, b] = s;
            (
                [a.powi(4) - 2.0 * a.powi(3) + a * a, -2.0 * b.powi(3) + 3.0 * b * b - b],
                [
                    [4.0 * a.powi(3) - 6.0 * a * a + 2.0 * a, 0.0],
                    [0.0, -6.0 * b * b + 6.0 * b - 1.0],
                ],
            )
        }),
        multiplier: vector(trig_multiplier),
        params: UNIT_PARAMS,
        pressure_offset: base,
        sigma: 0.0,
        notes: "pressure discontinuous across the interface",
    }
}

pub fn flower() -> ManufacturedCase {
    ManufacturedCase {
        id: CaseId::Flower,
        fluid: GeometryDescriptor::UnitSquareBox,
        solid: GeometryDescriptor::Flower {
            center: [0.5, 0.5],
            r0: 0.25,
            amplitude: 0.6,
            petals: 5,
        },
        map: identity_map(),
        velocity: vector(sine_velocity),
        pressure: Arc::new(|x| (x[0] * x[1]).cos() - SI_ONE),
        deformation: vector(sine_velocity),
        multiplier: vector(trig_multiplier),
        params: UNIT_PARAMS,
        pressure_offset: SI_ONE,
        sigma: 0.0,
        notes: "velocity does not vanish on the container boundary",
    }
}

/// Annulus `1/8 ≤ |s − (½,½)| ≤ 1/4` rotated by −π/4 and translated so
/// that its center lands at `(√2/2 − 7/20, 1/2)`.
pub fn annulus() -> ManufacturedCase {
    let r = FRAC_1_SQRT_2;
    ManufacturedCase {
        id: CaseId::Annulus,
        fluid: GeometryDescriptor::UnitSquareBox,
        solid: GeometryDescriptor::Annulus {
            center: [0.5, 0.5],
            r_in: 0.125,
            r_out: 0.25,
        },
        map: vector(move |s| ([r * (s[0] + s[1]) - 0.35, r * (s[1] - s[0]) + 0.5], [[r, r], [-r, r]])),
        velocity: vector(box_velocity),
        pressure: Arc::new(|x| x[0] * (x[0] - 1.0) * (x[1] - 1.0) - 1.0 / 12.0),
        deformation: vector(sine_velocity),
        multiplier: vector(exp_multiplier),
        params: Parameters {
            alpha: 100.0,
            beta: 200.0,
            gamma: 0.03,
            nu: 1.0,
        },
        pressure_offset: 1.0 / 12.0,
        sigma: 0.0,
        notes: "vertical offset of the map moved so the image stays inside the container",
    }
}

/// The four stationary configurations, with the square unshifted.
pub fn registry() -> Vec<ManufacturedCase> {
    vec![shifted_square(0.0), disk(), flower(), annulus()]
}

pub fn case_by_id(id: CaseId, sigma: f64) -> ManufacturedCase {
    match id {
        CaseId::ShiftedSquare => shifted_square(sigma),
        CaseId::Disk => disk(),
        CaseId::Flower => flower(),
        CaseId::Annulus => annulus(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_gradient(f: &VectorField, p: Point) -> Mat2 {
        let h = 1e-6;
        let mut g = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut a = p;
            let mut b = p;
            a[j] += h;
            b[j] -= h;
            let (fa, fb) = (f(a).0, f(b).0);
            for i in 0..2 {
                g[i][j] = (fa[i] - fb[i]) / (2.0 * h);
            }
        }
        g
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in registry() {
            for f in [&case.velocity, &case.deformation, &case.multiplier, &case.map] {
                for _ in 0..50 {
                    let p = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                    let g = f(p).1;
                    let fd = fd_gradient(f, p);
                    for i in 0..2 {
                        for j in 0..2 {
                            let scale = 1.0 + g[i][j].abs();
                            assert!((g[i][j] - fd[i][j]).abs() < 1e-6 * scale, "{} {:?}", case.name(), p);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn velocities_are_divergence_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in registry() {
            let (lo, hi) = case.fluid.box_bounds().unwrap();
            for _ in 0..1000 {
                let p = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
                let g = case.velocity.as_ref()(p).1;
                let scale = 1.0 + g[0][0].abs();
                assert!((g[0][0] + g[1][1]).abs() <= 1e-12 * scale, "{}", case.name());
            }
        }
    }

    #[test]
    fn pressures_have_zero_mean() {
        // tensor Gauss–Legendre on a fine grid; the disk pressure jump is
        // integrated against the exact disk area, so allow the cell error
        let gl = [
            (-0.861_136_311_594_053, 0.347_854_845_137_454),
            (-0.339_981_043_584_856, 0.652_145_154_862_546),
        ];
        let nodes: Vec<(f64, f64)> = gl.iter().flat_map(|&(x, w)| [(x, w), (-x, w)]).collect();
        for case in registry() {
            let (lo, hi) = case.fluid.box_bounds().unwrap();
            let n = 400;
            let h = (hi[0] - lo[0]) / n as f64;
            let mut sum = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for &(a, wa) in &nodes {
                        for &(b, wb) in &nodes {
                            let x = [
                                lo[0] + h * (i as f64 + 0.5 + 0.5 * a),
                                lo[1] + h * (j as f64 + 0.5 + 0.5 * b),
                            ];
                            sum += 0.25 * wa * wb * h * h * (case.pressure)(x);
                        }
                    }
                }
            }
            let tol = if case.id == CaseId::Disk { 1e-4 } else { 1e-10 };
            assert!(sum.abs() < tol, "{}: {sum}", case.name());
        }
    }

    #[test]
    fn registry_examples() {
        let cases = registry();
        assert_eq!(cases.len(), 4);
        let sq = &cases[0];
        assert_eq!((sq.velocity)([0.0, 0.0]).0, [0.0, 0.0]);
        assert_eq!((sq.params.alpha, sq.params.beta, sq.params.gamma), (0.0, 0.0, 1.0));
        let d = &cases[1];
        let area = PI * 0.04;
        let jump = (d.pressure)([0.5, 0.5 + 0.2 - 1e-12]) - (d.pressure)([0.5, 0.5 + 0.2 + 1e-12]);
        assert!((jump - (0.5 + area / (2.0 * (1.0 - area)))).abs() < 1e-9);
        let an = &cases[3];
        let f = (an.map)([0.3, 0.1]).1;
        assert!((f[0][0] * f[1][1] - f[0][1] * f[1][0] - 1.0).abs() < 1e-15);
        assert_eq!((an.params.alpha, an.params.beta, an.params.gamma), (100.0, 200.0, 0.03));
        // mapped annulus stays inside the unit square
        for k in 0..360 {
            let th = k as f64 * PI / 180.0;
            let x = (an.map)([0.5 + 0.25 * th.cos(), 0.5 + 0.25 * th.sin()]).0;
            assert!(x.iter().all(|v| *v > 0.0 && *v < 1.0));
        }
        for c in &cases {
            assert_eq!(CaseId::parse(c.name()).unwrap(), c.id);
        }
        assert!(CaseId::parse("cube").is_err());
    }
}
