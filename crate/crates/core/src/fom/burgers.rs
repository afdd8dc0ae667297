use super::{FomError, MultistepScheme, TimeGrid, Trajectory};
use crate::linalg::{norm_inf, tridiagonal_solve, DenseMatrix};

/// Uniform 1D mesh on `[0, L]`. Boundary nodes are part of the vector layout
/// and carry homogeneous Dirichlet values.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh1D {
    length: f64,
    coords: Vec<f64>,
}

impl Mesh1D {
    pub fn uniform(n_nodes: usize, length: f64) -> Result<Self, FomError> {
        if n_nodes < 3 || !(length > 0.0) {
            return Err(FomError::Mesh(format!("need at least 3 nodes and positive length (got {n_nodes}, {length})")));
        }
        let h = length / (n_nodes - 1) as f64;
        let mut coords: Vec<f64> = (0..n_nodes).map(|i| i as f64 * h).collect();
        coords[n_nodes - 1] = length;
        Ok(Self { length, coords })
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.n_nodes() - 1) as f64
    }
}

/// `u_0(x) = x / (1 + sqrt(1/A_0) exp(μ x² / 4))` with `A_0 = exp(μ/8)`,
/// evaluated at every node; the Dirichlet nodes are set to zero.
pub fn burgers_initial(mesh: &Mesh1D, mu: f64) -> Result<Vec<f64>, FomError> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(FomError::Parameter(format!("μ must be positive, got {mu}")));
    }
    let n = mesh.n_nodes();
    let mut u: Vec<f64> = mesh
        .coords()
        .iter()
        .map(|&x| {
            // sqrt(1/A_0) exp(μx²/4) = exp(μx²/4 − μ/16), folded to avoid overflow
            let e = (mu * x * x / 4.0 - mu / 16.0).exp();
            x / (1.0 + e)
        })
        .collect();
    u[0] = 0.0;
    u[n - 1] = 0.0;
    Ok(u)
}

/// Tridiagonal matrix in band storage over the full node layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self { lower: vec![0.0; n - 1], diag: vec![0.0; n], upper: vec![0.0; n - 1] }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Tridiagonal) {
        for (a, b) in self.lower.iter_mut().zip(&other.lower) {
            *a += alpha * b;
        }
        for (a, b) in self.diag.iter_mut().zip(&other.diag) {
            *a += alpha * b;
        }
        for (a, b) in self.upper.iter_mut().zip(&other.upper) {
            *a += alpha * b;
        }
    }

    /// `self * V` for a dense `V` with `n` rows.
    pub fn apply_dense(&self, v: &DenseMatrix) -> DenseMatrix {
        let n = self.n();
        let mut out = DenseMatrix::zeros(n, v.cols());
        for i in 0..n {
            let row = out.row_mut(i);
            for (o, x) in row.iter_mut().zip(v.row(i)) {
                *o = self.diag[i] * x;
            }
            if i > 0 {
                for (o, x) in row.iter_mut().zip(v.row(i - 1)) {
                    *o += self.lower[i - 1] * x;
                }
            }
            if i + 1 < n {
                for (o, x) in row.iter_mut().zip(v.row(i + 1)) {
                    *o += self.upper[i] * x;
                }
            }
        }
        out
    }

    /// Solves the system restricted to interior rows and columns `1..n-1`.
    pub fn solve_interior(&self, rhs: &[f64]) -> Result<Vec<f64>, FomError> {
        let n = self.n();
        let m = n - 2;
        let lower = &self.lower[1..m];
        let diag = &self.diag[1..n - 1];
        let upper = &self.upper[1..m];
        let x = tridiagonal_solve(lower, diag, upper, &rhs[1..n - 1])?;
        let mut full = vec![0.0; n];
        full[1..n - 1].copy_from_slice(&x);
        Ok(full)
    }
}

/// Galerkin operators of `u_t + u u_x − ν u_xx = 0` on linear elements.
/// Rows of the Dirichlet nodes are identically zero.
#[derive(Clone, Debug)]
pub struct BurgersOperator {
    n: usize,
    h: f64,
    nu: f64,
    mass: Tridiagonal,
    stiffness: Tridiagonal,
}

impl BurgersOperator {
    pub fn new(mesh: &Mesh1D, mu: f64) -> Result<Self, FomError> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(FomError::Parameter(format!("μ must be positive, got {mu}")));
        }
        let n = mesh.n_nodes();
        let h = mesh.spacing();
        let mut mass = Tridiagonal::zeros(n);
        let mut stiffness = Tridiagonal::zeros(n);
        for e in 0..n - 1 {
            let (a, b) = (e, e + 1);
            mass.diag[a] += h / 3.0;
            mass.diag[b] += h / 3.0;
            mass.upper[a] += h / 6.0;
            mass.lower[a] += h / 6.0;
            stiffness.diag[a] += 1.0 / h;
            stiffness.diag[b] += 1.0 / h;
            stiffness.upper[a] -= 1.0 / h;
            stiffness.lower[a] -= 1.0 / h;
        }
        for t in [&mut mass, &mut stiffness] {
            clear_boundary_rows(t);
        }
        Ok(Self { n, h, nu: 1.0 / mu, mass, stiffness })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn viscosity(&self) -> f64 {
        self.nu
    }

    pub fn mass(&self) -> &Tridiagonal {
        &self.mass
    }

    pub fn stiffness(&self) -> &Tridiagonal {
        &self.stiffness
    }

    /// `F(u) = N(u) + ν K u`, the semi-discrete system being `M u̇ = −F(u)`.
    pub fn flux(&self, u: &[f64]) -> Vec<f64> {
        let mut f = self.stiffness.apply(u);
        f.iter_mut().for_each(|v| *v *= self.nu);
        // exact quadrature of ∫ u u_x φ_i on each element
        for e in 0..self.n - 1 {
            let (ua, ub) = (u[e], u[e + 1]);
            let du = ub - ua;
            f[e] += du * (2.0 * ua + ub) / 6.0;
            f[e + 1] += du * (ua + 2.0 * ub) / 6.0;
        }
        f[0] = 0.0;
        f[self.n - 1] = 0.0;
        f
    }

    /// Jacobian `∂F/∂u`.
    pub fn flux_jacobian(&self, u: &[f64]) -> Tridiagonal {
        let mut j = self.stiffness.clone();
        j.diag.iter_mut().for_each(|v| *v *= self.nu);
        j.lower.iter_mut().for_each(|v| *v *= self.nu);
        j.upper.iter_mut().for_each(|v| *v *= self.nu);
        for e in 0..self.n - 1 {
            let (ua, ub) = (u[e], u[e + 1]);
            // row a
            j.diag[e] += (ub - 4.0 * ua) / 6.0;
            j.upper[e] += (ua + 2.0 * ub) / 6.0;
            // row b
            j.lower[e] += (-2.0 * ua - ub) / 6.0;
            j.diag[e + 1] += (4.0 * ub - ua) / 6.0;
        }
        clear_boundary_rows(&mut j);
        j
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }
}

fn clear_boundary_rows(t: &mut Tridiagonal) {
    let n = t.n();
    t.diag[0] = 0.0;
    t.upper[0] = 0.0;
    t.diag[n - 1] = 0.0;
    t.lower[n - 2] = 0.0;
}

/// Solver settings for the Burgers benchmark.
#[derive(Clone, Debug)]
pub struct BurgersConfig {
    pub mesh: Mesh1D,
    pub grid: TimeGrid,
    pub scheme: MultistepScheme,
    pub newton_tol: f64,
    pub newton_max: usize,
}

impl BurgersConfig {
    pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
    pub const DEFAULT_NEWTON_MAX: usize = 25;

    pub fn new(mesh: Mesh1D, grid: TimeGrid) -> Self {
        Self {
            mesh,
            grid,
            scheme: MultistepScheme::backward_euler(),
            newton_tol: Self::DEFAULT_NEWTON_TOL,
            newton_max: Self::DEFAULT_NEWTON_MAX,
        }
    }

    /// `L = 1`, `T = 2`, `N_h = 256`, `N_t = 100`.
    pub fn standard() -> Self {
        Self::new(Mesh1D::uniform(256, 1.0).expect("valid mesh"), TimeGrid::new(2.0, 100).expect("valid grid"))
    }
}

/// Backward-Euler Burgers solve.
pub fn solve_burgers(
    mesh: &Mesh1D,
    grid: &TimeGrid,
    mu: f64,
    newton_tol: f64,
    newton_max: usize,
) -> Result<Trajectory, FomError> {
    let cfg = BurgersConfig {
        mesh: mesh.clone(),
        grid: *grid,
        scheme: MultistepScheme::backward_euler(),
        newton_tol,
        newton_max,
    };
    solve_burgers_with(&cfg, mu, None)
}

/// Burgers solve with an arbitrary multistep scheme and optional initial state.
/// Steps before `K` levels of history exist use backward Euler.
pub fn solve_burgers_with(cfg: &BurgersConfig, mu: f64, initial: Option<&[f64]>) -> Result<Trajectory, FomError> {
    let op = BurgersOperator::new(&cfg.mesh, mu)?;
    let n = op.n();
    let u0 = match initial {
        Some(u) if u.len() != n => {
            return Err(FomError::Parameter(format!("initial state has length {}, mesh has {n} nodes", u.len())))
        }
        Some(u) => {
            let mut u = u.to_vec();
            u[0] = 0.0;
            u[n - 1] = 0.0;
            u
        }
        None => burgers_initial(&cfg.mesh, mu)?,
    };
    let dt = cfg.grid.dt();
    let be = MultistepScheme::backward_euler();
    let mut states = vec![u0];
    let mut fluxes = vec![op.flux(&states[0])];
    for k in 1..=cfg.grid.n_steps() {
        let scheme = if k < cfg.scheme.steps() { &be } else { &cfg.scheme };
        let (alpha, beta) = (scheme.alpha(), scheme.beta());
        let mut history = vec![0.0; n];
        for j in 1..=scheme.steps() {
            let prev = &states[k - j];
            let mprev = op.mass().apply(prev);
            for i in 0..n {
                history[i] += alpha[j] * mprev[i] + dt * beta[j] * fluxes[k - j][i];
            }
        }
        let next = newton_step(&op, alpha[0], dt * beta[0], &history, &states[k - 1], cfg, k)?;
        fluxes.push(op.flux(&next));
        states.push(next);
    }
    Ok(Trajectory { params: vec![mu], times: cfg.grid.times(), states })
}

/// Solves `a0 M ξ + c0 F(ξ) + history = 0` by Newton's method, starting from `guess`.
/// At least one update is taken so that tiny states are still advanced.
fn newton_step(
    op: &BurgersOperator,
    a0: f64,
    c0: f64,
    history: &[f64],
    guess: &[f64],
    cfg: &BurgersConfig,
    step: usize,
) -> Result<Vec<f64>, FomError> {
    let n = op.n();
    let mut xi = guess.to_vec();
    let mut res_norm = f64::INFINITY;
    for it in 0..=cfg.newton_max {
        let m_xi = op.mass().apply(&xi);
        let f_xi = op.flux(&xi);
        let r: Vec<f64> = (0..n).map(|i| a0 * m_xi[i] + c0 * f_xi[i] + history[i]).collect();
        res_norm = norm_inf(&r[1..n - 1]);
        if !res_norm.is_finite() {
            return Err(FomError::Divergence { step });
        }
        if (it > 0 && res_norm <= cfg.newton_tol) || res_norm == 0.0 {
            return Ok(xi);
        }
        if it == cfg.newton_max {
            break;
        }
        let mut jac = op.flux_jacobian(&xi);
        jac.diag.iter_mut().for_each(|v| *v *= c0);
        jac.lower.iter_mut().for_each(|v| *v *= c0);
        jac.upper.iter_mut().for_each(|v| *v *= c0);
        jac.axpy(a0, op.mass());
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = jac.solve_interior(&neg)?;
        for (x, d) in xi.iter_mut().zip(&delta) {
            *x += d;
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(FomError::Divergence { step });
        }
    }
    Err(FomError::StepFailure { step, residual: res_norm })
}
