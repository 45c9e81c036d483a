//! Direct solves, condition-number estimates and error norms.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::Lu;
use faer::{Conj, Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    assemble_vector_mass_stiffness, CouplingKind, Discretization, ExactSolution, ReducedSystem, RHS_DEGREE,
};
use crate::femspace::{build_dof_map, eval_field, make_rule, DofMap, FieldKind, FieldVector};
use crate::mesh::{from_barycentric, TriMesh};
use crate::parallel::Exec;
use crate::sparse::{dot, norm2, CsrMatrix};
use crate::{Error, Point, Result};

/// Required relative residual of a solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Sparse LU factorization with a fill-reducing ordering.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::arg(format!("matrix is {}x{}, not square", a.nrows, a.ncols)));
        }
        let lu = a
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::Solver(format!("sparse LU failed: {e:?}")))?;
        Ok(SparseLu { n: a.nrows, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place_with_conj(Conj::No, x.as_mut());
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_transpose_in_place_with_conj(Conj::No, x.as_mut());
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let nb = norm2(b);
    let rel = if nb > 0.0 { norm2(&r) / nb } else { norm2(&r) };
    (r, rel)
}

/// Solves `A x = b` and refines until the relative residual stops
/// improving.
pub fn solve_linear(a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let lu = SparseLu::new(a)?;
    let mut x = lu.solve(b);
    let (mut r, mut rel) = relative_residual(a, &x, b);
    for _ in 0..3 {
        if rel <= 1e-14 {
            break;
        }
        let dx = lu.solve(&r);
        let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
        let (r2, rel2) = relative_residual(a, &trial, b);
        if rel2 >= rel {
            break;
        }
        x = trial;
        r = r2;
        rel = rel2;
    }
    if !rel.is_finite() || rel > RESIDUAL_TOL {
        return Err(Error::Solver(format!(
            "relative residual {rel:e} exceeds {RESIDUAL_TOL:e}"
        )));
    }
    Ok((x, rel))
}

/// Solution of a stationary system, split by field.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub u: FieldVector,
    pub p: FieldVector,
    pub x: FieldVector,
    pub lambda: FieldVector,
    /// Relative residual of the reduced system.
    pub residual: f64,
    /// Size and nonzeros of the factorized matrix.
    pub n: usize,
    pub nnz: usize,
}

pub fn solve(sys: &ReducedSystem) -> Result<LinearSolution> {
    let (sol, residual) = solve_linear(&sys.matrix, &sys.rhs)?;
    let full = sys.expand(&sol);
    let l = sys.layout;
    let take = |a: usize, b: usize| FieldVector {
        coeffs: full[a..b].to_vec(),
    };
    Ok(LinearSolution {
        u: take(0, l.off_x()),
        x: take(l.off_x(), l.off_l()),
        lambda: take(l.off_l(), l.off_p()),
        p: take(l.off_p(), l.total()),
        residual,
        n: sys.matrix.nrows,
        nnz: sys.matrix.nnz(),
    })
}

/// Extremal singular values of a square matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionEstimate {
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub cond2: f64,
    pub iterations_max: usize,
    pub iterations_min: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct CondOptions {
    /// Relative residual of the Ritz pair at which an eigenvalue of the
    /// normal operator is accepted.
    pub tol: f64,
    pub max_iter: usize,
    /// Krylov basis size before a restart.
    pub restart: usize,
    pub seed: u64,
}

impl Default for CondOptions {
    fn default() -> Self {
        CondOptions {
            tol: 1e-8,
            max_iter: 10_000,
            restart: 80,
            seed: 7,
        }
    }
}

struct Extremal {
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by
/// restarted Lanczos with full reorthogonalization.
fn lanczos_largest(n: usize, mut op: impl FnMut(&[f64]) -> Vec<f64>, opts: &CondOptions) -> Result<Extremal> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut iterations = 0;
    let mut best = 0.0f64;
    let m = opts.restart.max(2).min(n);
    loop {
        let s = norm2(&start);
        let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|v| v / s).collect()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let ritz = loop {
            let j = basis.len() - 1;
            let mut w = op(&basis[j]);
            iterations += 1;
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(&w, v);
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                }
            }
            let b = norm2(&w);
            let (theta, y) = tridiagonal_top(&alpha, &beta)?;
            best = best.max(theta);
            let res = b * y[j].abs();
            if res <= opts.tol * theta || b <= f64::EPSILON * theta.max(f64::MIN_POSITIVE) {
                return Ok(Extremal {
                    value: theta,
                    iterations,
                    converged: true,
                });
            }
            if iterations >= opts.max_iter {
                return Ok(Extremal {
                    value: best,
                    iterations,
                    converged: false,
                });
            }
            if basis.len() == m {
                break y;
            }
            beta.push(b);
            basis.push(w.into_iter().map(|v| v / b).collect());
        };
        start = vec![0.0; n];
        for (v, c) in basis.iter().zip(&ritz) {
            start.iter_mut().zip(v).for_each(|(s, vi)| *s += c * vi);
        }
    }
}

/// Largest eigenvalue of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta`, and its eigenvector.
fn tridiagonal_top(alpha: &[f64], beta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let k = alpha.len();
    let t = Mat::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let evd = t
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Solver(format!("tridiagonal eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let top = k - 1;
    Ok((s[top], (0..k).map(|i| u[(i, top)]).collect()))
}

/// Euclidean condition number from the extremal eigenvalues of `AᵀA` and
/// `A⁻¹A⁻ᵀ`, the latter applied through one sparse LU factorization.
pub fn estimate_cond2(a: &CsrMatrix) -> Result<ConditionEstimate> {
    estimate_cond2_with(a, &CondOptions::default())
}

pub fn estimate_cond2_with(a: &CsrMatrix, opts: &CondOptions) -> Result<ConditionEstimate> {
    let n = a.nrows;
    if n != a.ncols || n == 0 {
        return Err(Error::arg("condition estimate needs a nonempty square matrix"));
    }
    let lu = SparseLu::new(a)?;
    let top = lanczos_largest(n, |v| a.matvec_transpose(&a.matvec(v)), opts)?;
    let bottom = lanczos_largest(n, |v| lu.solve(&lu.solve_transpose(v)), opts)?;
    let sigma_max = top.value.sqrt();
    let sigma_min = 1.0 / bottom.value.sqrt();
    if !(top.converged && bottom.converged) {
        return Err(Error::Estimate {
            iterations: top.iterations + bottom.iterations,
            sigma_max,
            sigma_min,
        });
    }
    Ok(ConditionEstimate {
        sigma_max,
        sigma_min,
        cond2: sigma_max / sigma_min,
        iterations_max: top.iterations,
        iterations_min: bottom.iterations,
        converged: true,
    })
}

/// Largest dense size accepted by [`dense_cond2`].
pub const DENSE_LIMIT: usize = 2000;

/// Condition number from a dense singular value decomposition.
pub fn dense_cond2(a: &CsrMatrix) -> Result<f64> {
    if a.nrows > DENSE_LIMIT || a.ncols > DENSE_LIMIT {
        return Err(Error::arg(format!("dense decomposition limited to n <= {DENSE_LIMIT}")));
    }
    let mut d = Mat::<f64>::zeros(a.nrows, a.ncols);
    for (i, j, v) in a.triplets() {
        d[(i, j)] += v;
    }
    let s = d
        .singular_values()
        .map_err(|e| Error::Solver(format!("dense SVD failed: {e:?}")))?;
    let (max, min) = (s[0], s[s.len() - 1]);
    if min <= 0.0 {
        return Err(Error::Solver("matrix is singular".into()));
    }
    Ok(max / min)
}

/// Error norms of a discrete solution against a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldErrors {
    pub u_l2: f64,
    pub u_h1: f64,
    pub p_l2: f64,
    pub x_l2: f64,
    pub x_h1: f64,
    pub lambda_l2: f64,
    pub lambda_h1: f64,
    /// `H¹(B)'` norm; only computed for the `C0` pairing.
    pub lambda_dual: Option<f64>,
}

impl FieldErrors {
    /// Multiplier error in the norm matching the coupling.
    pub fn lambda(&self, kind: CouplingKind) -> f64 {
        match kind {
            CouplingKind::C0 => self.lambda_dual.unwrap_or(self.lambda_l2),
            CouplingKind::C1 => self.lambda_h1,
        }
    }
}

/// `(‖f − f_h‖₀, ‖f − f_h‖₁)` for a vector field, with the full `H¹` norm.
pub fn vector_errors(
    field: &FieldVector,
    map: &DofMap,
    mesh: &TriMesh,
    exact: impl Fn(Point) -> ([f64; 2], [[f64; 2]; 2]) + Sync,
) -> (f64, f64) {
    let rule = make_rule(RHS_DEGREE).expect("rule exists");
    let parts = Exec::default().map(mesh.n_triangles(), |t| {
        let tri = mesh.triangle(t);
        let area = mesh.area(t);
        let (mut l2, mut semi) = (0.0, 0.0);
        for (b, w) in rule.scaled(area) {
            let fh = eval_field(field, map, mesh, t, b);
            let (f, g) = exact(from_barycentric(&tri, b));
            for c in 0..map.components {
                l2 += w * (f[c] - fh.value[c]).powi(2);
                for k in 0..2 {
                    semi += w * (g[c][k] - fh.grad[c][k]).powi(2);
                }
            }
        }
        (l2, semi)
    });
    let (l2, semi) = parts.into_iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    (l2.sqrt(), (l2 + semi).sqrt())
}

/// `‖p − p_h − c‖₀` with the constant `c` aligning the means.
pub fn pressure_error(p_h: &FieldVector, map: &DofMap, mesh: &TriMesh, exact: impl Fn(Point) -> f64 + Sync) -> f64 {
    let rule = make_rule(RHS_DEGREE).expect("rule exists");
    let diff = |t: usize, b: [f64; 3]| {
        let x = from_barycentric(&mesh.triangle(t), b);
        exact(x) - eval_field(p_h, map, mesh, t, b).value[0]
    };
    let mut mean = 0.0;
    for t in 0..mesh.n_triangles() {
        mean += rule.integrate(mesh.area(t), |b| diff(t, b));
    }
    mean /= mesh.total_area();
    let sq: f64 = (0..mesh.n_triangles())
        .map(|t| rule.integrate(mesh.area(t), |b| (diff(t, b) - mean).powi(2)))
        .sum();
    sq.sqrt()
}

/// All error norms of a stationary solution.
pub fn error_norms<S: ExactSolution + ?Sized>(
    sol: &LinearSolution,
    case: &S,
    disc: &Discretization,
    kind: CouplingKind,
) -> Result<FieldErrors> {
    let (u_l2, u_h1) = vector_errors(&sol.u, &disc.u_map, &disc.fluid_half, |x| case.velocity(x));
    let p_l2 = pressure_error(&sol.p, &disc.p_map, &disc.fluid_coarse, |x| case.pressure(x));
    let (x_l2, x_h1) = vector_errors(&sol.x, &disc.x_map, &disc.solid, |s| case.deformation(s));
    let (lambda_l2, lambda_h1) = vector_errors(&sol.lambda, &disc.l_map, &disc.solid, |s| case.multiplier(s));
    let lambda_dual = match kind {
        CouplingKind::C0 => Some(dual_norm_error(&sol.lambda, &disc.l_map, &disc.solid, |s| {
            case.multiplier(s).0
        })?),
        CouplingKind::C1 => None,
    };
    Ok(FieldErrors {
        u_l2,
        u_h1,
        p_l2,
        x_l2,
        x_h1,
        lambda_l2,
        lambda_h1,
        lambda_dual,
    })
}

/// `‖ψ_h‖_{1,B}` where `−Δψ + ψ = λ − λ_h` with natural boundary
/// conditions, solved componentwise with P1 elements on the solid mesh.
pub fn dual_norm_error(
    lambda_h: &FieldVector,
    l_map: &DofMap,
    solid: &TriMesh,
    lambda: impl Fn(Point) -> [f64; 2] + Sync,
) -> Result<f64> {
    let scalar = build_dof_map(solid, FieldKind::Pressure);
    let k = assemble_vector_mass_stiffness(solid, &scalar, 1.0, 1.0);
    let lu = SparseLu::new(&k)?;
    let rule = make_rule(RHS_DEGREE)?;
    let mut rhs = [vec![0.0; solid.n_vertices()], vec![0.0; solid.n_vertices()]];
    for t in 0..solid.n_triangles() {
        let tri = solid.triangle(t);
        let verts = solid.triangles[t];
        for (b, w) in rule.scaled(solid.area(t)) {
            let r = lambda(from_barycentric(&tri, b));
            let rh = eval_field(lambda_h, l_map, solid, t, b).value;
            for c in 0..l_map.components {
                for i in 0..3 {
                    rhs[c][verts[i]] += w * (r[c] - rh[c]) * b[i];
                }
            }
        }
    }
    let mut sq = 0.0;
    for r in &rhs[..l_map.components] {
        let psi = lu.solve(r);
        sq += dot(&psi, r);
    }
    Ok(sq.max(0.0).sqrt())
}

/// Least-squares slope of `log value` against `log h`.
pub fn fit_rate(values: &[f64], hs: &[f64]) -> Result<f64> {
    if values.len() != hs.len() || values.len() < 2 {
        return Err(Error::arg("fit_rate needs matching sequences of at least two values"));
    }
    if values.iter().chain(hs).any(|v| *v <= 0.0 || !v.is_finite()) {
        return Err(Error::arg("fit_rate needs positive finite values"));
    }
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("fit_rate needs distinct mesh sizes"));
    }
    Ok(sxy / sxx)
}

/// Random sparse test matrix with a dominant-free structure: a random
/// pattern with `per_row` entries per row plus a shifted diagonal.
pub fn random_sparse(n: usize, per_row: usize, seed: u64) -> CsrMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = crate::sparse::TripletBuilder::new(n, n);
    for i in 0..n {
        b.push(i, i, 0.5 + rng.gen_range(0.0..1.0));
        for _ in 0..per_row {
            b.push(i, rng.gen_range(0..n), rng.gen_range(-1.0..1.0));
        }
    }
    b.into_csr()
}
