use super::{FomError, Region, TimeGrid, Trajectory, TriMesh};
use crate::linalg::{sparse_cg_solve_from, SparseMatrix};

const MU0_RANGE: (f64, f64) = (1.0, 10.0);
const MU1_RANGE: (f64, f64) = (0.1, 10.0);

/// `(x² − 1)(y² − 1)` at every node, exactly zero on `∂Ω`.
pub fn parabolic_initial_shape(mesh: &TriMesh) -> Vec<f64> {
    mesh.nodes()
        .iter()
        .enumerate()
        .map(|(i, p)| if mesh.is_boundary(i) { 0.0 } else { (p[0] - 1.0) * (p[0] + 1.0) * (p[1] - 1.0) * (p[1] + 1.0) })
        .collect()
}

/// P1 stiffness of `−div(κ ∇u)` with `κ` constant per region, assembled
/// element by element.
pub fn assemble_diffusion(mesh: &TriMesh, kappa: impl Fn(Region) -> f64) -> Result<SparseMatrix, FomError> {
    let mut trip = Vec::with_capacity(9 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let region = region_of(mesh, c)?;
        push_stiffness(mesh, c, kappa(region), &mut trip);
    }
    let n = mesh.n_nodes();
    Ok(SparseMatrix::from_triplets(n, n, &trip)?)
}

fn region_of(mesh: &TriMesh, c: usize) -> Result<Region, FomError> {
    mesh.tags()[c].ok_or_else(|| FomError::Mesh(format!("cell {c} has no region tag")))
}

fn gradients(mesh: &TriMesh, c: usize) -> (f64, [f64; 3], [f64; 3]) {
    let cell = mesh.cells()[c];
    let p = |k: usize| mesh.nodes()[cell[k]];
    let (p0, p1, p2) = (p(0), p(1), p(2));
    let area = mesh.cell_area(c);
    let b = [p1[1] - p2[1], p2[1] - p0[1], p0[1] - p1[1]];
    let g = [p2[0] - p1[0], p0[0] - p2[0], p1[0] - p0[0]];
    let s = 0.5 / area;
    (area, b.map(|v| v * s), g.map(|v| v * s))
}

fn push_stiffness(mesh: &TriMesh, c: usize, kappa: f64, trip: &mut Vec<(usize, usize, f64)>) {
    let cell = mesh.cells()[c];
    let (area, b, g) = gradients(mesh, c);
    for i in 0..3 {
        for j in 0..3 {
            trip.push((cell[i], cell[j], kappa * area * (b[i] * b[j] + g[i] * g[j])));
        }
    }
}

fn assemble_mass(mesh: &TriMesh) -> Result<SparseMatrix, FomError> {
    let mut trip = Vec::with_capacity(9 * mesh.n_cells());
    for (c, cell) in mesh.cells().iter().enumerate() {
        let area = mesh.cell_area(c);
        for i in 0..3 {
            for j in 0..3 {
                let w = if i == j { 2.0 } else { 1.0 };
                trip.push((cell[i], cell[j], area * w / 12.0));
            }
        }
    }
    let n = mesh.n_nodes();
    Ok(SparseMatrix::from_triplets(n, n, &trip)?)
}

/// Affine decomposition `A_h(μ) = θ_a¹(μ) A¹ + θ_a²(μ) A²` with
/// `θ_a = (μ0, 1)`, and initial data `u⁰ = θ_f¹(μ) g` with `θ_f = (μ1)`.
/// The backward-Euler step right-hand side is `M u^{k−1}`.
#[derive(Clone, Debug)]
pub struct SeparableOperators {
    pub mass: SparseMatrix,
    /// Stiffness restricted to inner cells, then outer cells.
    pub stiffness: [SparseMatrix; 2],
    /// Initial-data component `g`.
    pub initial: Vec<f64>,
    pub dt: f64,
}

impl SeparableOperators {
    pub const Q_A: usize = 2;
    pub const Q_F: usize = 1;

    pub fn theta_a(mu: &[f64]) -> [f64; 2] {
        [mu[0], 1.0]
    }

    pub fn theta_f(mu: &[f64]) -> [f64; 1] {
        [mu[1]]
    }

    /// `A_h(μ)` from the components.
    pub fn stiffness_at(&self, mu0: f64) -> SparseMatrix {
        let th = Self::theta_a(&[mu0, 0.0]);
        SparseMatrix::linear_combination(&th, &[&self.stiffness[0], &self.stiffness[1]])
            .expect("components share a shape")
    }

    /// Backward-Euler step operator `M + Δt A_h(μ)`.
    pub fn step_operator(&self, mu0: f64) -> SparseMatrix {
        let th = Self::theta_a(&[mu0, 0.0]);
        SparseMatrix::linear_combination(
            &[1.0, self.dt * th[0], self.dt * th[1]],
            &[&self.mass, &self.stiffness[0], &self.stiffness[1]],
        )
        .expect("components share a shape")
    }
}

pub fn assemble_parameter_separable(mesh: &TriMesh, grid: &TimeGrid) -> Result<SeparableOperators, FomError> {
    let n = mesh.n_nodes();
    let mut inner = Vec::new();
    let mut outer = Vec::new();
    for c in 0..mesh.n_cells() {
        match region_of(mesh, c)? {
            Region::Inner => push_stiffness(mesh, c, 1.0, &mut inner),
            Region::Outer => push_stiffness(mesh, c, 1.0, &mut outer),
        }
    }
    Ok(SeparableOperators {
        mass: assemble_mass(mesh)?,
        stiffness: [SparseMatrix::from_triplets(n, n, &inner)?, SparseMatrix::from_triplets(n, n, &outer)?],
        initial: parabolic_initial_shape(mesh),
        dt: grid.dt(),
    })
}

/// Discretized parabolic benchmark with cached operators.
#[derive(Clone, Debug)]
pub struct ParabolicProblem {
    mesh: TriMesh,
    grid: TimeGrid,
    cg_tol: f64,
    cg_max: usize,
    ops: SeparableOperators,
    interior: Vec<usize>,
    mass_i: SparseMatrix,
    stiff_i: [SparseMatrix; 2],
}

impl ParabolicProblem {
    pub const DEFAULT_CG_TOL: f64 = 1e-12;

    pub fn new(mesh: TriMesh, grid: TimeGrid) -> Result<Self, FomError> {
        let ops = assemble_parameter_separable(&mesh, &grid)?;
        let interior = mesh.interior_nodes();
        if interior.is_empty() {
            return Err(FomError::Mesh("mesh has no interior nodes".into()));
        }
        let mass_i = ops.mass.submatrix(&interior);
        let stiff_i = [ops.stiffness[0].submatrix(&interior), ops.stiffness[1].submatrix(&interior)];
        let cg_max = 10 * interior.len() + 100;
        Ok(Self { mesh, grid, cg_tol: Self::DEFAULT_CG_TOL, cg_max, ops, interior, mass_i, stiff_i })
    }

    pub fn with_cg_tol(mut self, tol: f64) -> Self {
        self.cg_tol = tol;
        self
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn cg_tol(&self) -> f64 {
        self.cg_tol
    }

    pub fn operators(&self) -> &SeparableOperators {
        &self.ops
    }

    pub fn solve(&self, mu0: f64, mu1: f64) -> Result<Trajectory, FomError> {
        if !(mu1.is_finite()) {
            return Err(FomError::Parameter(format!("μ1 must be finite, got {mu1}")));
        }
        if !(mu1 >= MU1_RANGE.0 && mu1 <= MU1_RANGE.1) && mu1 != 0.0 {
            log::warn!("μ1 = {mu1} outside [{}, {}]", MU1_RANGE.0, MU1_RANGE.1);
        }
        let u0: Vec<f64> = self.ops.initial.iter().map(|g| mu1 * g).collect();
        let mut traj = solve_parabolic_from(self, mu0, &u0)?;
        traj.params = vec![mu0, mu1];
        Ok(traj)
    }
}

/// Solves the benchmark for one `(μ0, μ1)`.
pub fn solve_parabolic(mesh: &TriMesh, grid: &TimeGrid, mu0: f64, mu1: f64) -> Result<Trajectory, FomError> {
    ParabolicProblem::new(mesh.clone(), *grid)?.solve(mu0, mu1)
}

/// Backward-Euler march of `(M + Δt A_h(μ0)) u^k = M u^{k−1}` from an
/// arbitrary nodal initial state; boundary entries are forced to zero.
pub fn solve_parabolic_from(problem: &ParabolicProblem, mu0: f64, initial: &[f64]) -> Result<Trajectory, FomError> {
    if !(mu0 > 0.0) || !mu0.is_finite() {
        return Err(FomError::Parameter(format!("μ0 must be positive, got {mu0}")));
    }
    if !(MU0_RANGE.0..=MU0_RANGE.1).contains(&mu0) {
        log::warn!("μ0 = {mu0} outside [{}, {}]", MU0_RANGE.0, MU0_RANGE.1);
    }
    let n = problem.mesh.n_nodes();
    if initial.len() != n {
        return Err(FomError::Parameter(format!("initial state has length {}, mesh has {n} nodes", initial.len())));
    }
    let dt = problem.grid.dt();
    let th = SeparableOperators::theta_a(&[mu0, 0.0]);
    let lhs = SparseMatrix::linear_combination(
        &[1.0, dt * th[0], dt * th[1]],
        &[&problem.mass_i, &problem.stiff_i[0], &problem.stiff_i[1]],
    )?;
    let lift = |ui: &[f64]| {
        let mut full = vec![0.0; n];
        for (&g, &v) in problem.interior.iter().zip(ui) {
            full[g] = v;
        }
        full
    };
    let mut ui: Vec<f64> = problem.interior.iter().map(|&g| initial[g]).collect();
    let mut states = vec![lift(&ui)];
    for step in 1..=problem.grid.n_steps() {
        let rhs = problem.mass_i.matvec(&ui);
        let out = sparse_cg_solve_from(&lhs, &rhs, Some(&ui), problem.cg_tol, problem.cg_max)?;
        if out.x.iter().any(|v| !v.is_finite()) {
            return Err(FomError::Divergence { step });
        }
        ui = out.x;
        states.push(lift(&ui));
    }
    Ok(Trajectory { params: vec![mu0], times: problem.grid.times(), states })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ParabolicProblem {
        ParabolicProblem::new(TriMesh::generate(6).unwrap(), TimeGrid::with_step(3.0, 0.05).unwrap()).unwrap()
    }

    #[test]
    fn matrices_are_symmetric_and_consistent() {
        let p = small();
        let ops = p.operators();
        assert!(ops.mass.is_symmetric(1e-15));
        let total_mass: f64 = ops.mass.values().iter().sum();
        assert!((total_mass - 4.0).abs() < 1e-12);
        for a in &ops.stiffness {
            assert!(a.is_symmetric(1e-12));
            // constants are in the kernel of the Neumann stiffness
            let ones = vec![1.0; p.mesh().n_nodes()];
            assert!(a.matvec(&ones).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn unit_coefficient_matches_single_region_laplacian() {
        let p = small();
        let direct = assemble_diffusion(p.mesh(), |_| 1.0).unwrap().to_dense();
        let sep = p.operators().stiffness_at(1.0).to_dense();
        assert!(direct.sub(&sep).max_abs() < 1e-12);
    }

    #[test]
    fn separable_matches_direct_assembly() {
        let p = small();
        for mu0 in [1.0, 3.7, 9.2] {
            let direct =
                assemble_diffusion(p.mesh(), |r| if r == Region::Inner { mu0 } else { 1.0 }).unwrap().to_dense();
            let sep = p.operators().stiffness_at(mu0).to_dense();
            assert!(direct.sub(&sep).max_abs() <= 1e-12 * direct.max_abs());
        }
    }

    #[test]
    fn zero_amplitude_gives_zero_trajectory() {
        let traj = small().solve(2.0, 0.0).unwrap();
        assert!(traj.states.iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn trajectory_is_linear_in_amplitude() {
        let p = small();
        let a = p.solve(4.0, 1.3).unwrap();
        let b = p.solve(4.0, 2.6).unwrap();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            for (x, y) in sa.iter().zip(sb) {
                assert!((2.0 * x - y).abs() <= 1e-10 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn energy_is_nonincreasing() {
        let p = small();
        let traj = p.solve(7.0, 5.0).unwrap();
        let energy: Vec<f64> =
            traj.states.iter().map(|u| crate::linalg::dot(u, &p.operators().mass.matvec(u))).collect();
        for w in energy.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        assert_eq!(traj.len(), 61);
    }

    #[test]
    fn untagged_cells_are_rejected() {
        let mesh = TriMesh::from_text("4\n-1 -1\n1 -1\n1 1\n0 0\n1\n0 1 3\n").unwrap();
        let grid = TimeGrid::new(1.0, 2).unwrap();
        assert!(matches!(ParabolicProblem::new(mesh, grid), Err(FomError::Mesh(_))));
    }
}
