//! Proper orthogonal decomposition and Galerkin reduced solves.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::dataset::{read_container, write_container, Container, DatasetError, SnapshotSet};
use crate::fom::{
    assemble_diffusion, burgers_initial, BurgersConfig, BurgersOperator, FomError, MultistepScheme, ParabolicProblem,
    Region, SeparableOperators, TimeGrid, Trajectory,
};
use crate::linalg::{dot, norm_inf, thin_svd, DenseMatrix, LinalgError, LuFactors, SparseMatrix, DEFAULT_RANK_TOL};

#[derive(Debug, thiserror::Error)]
pub enum PodError {
    #[error("requested {requested} modes but the snapshot matrix has rank {rank}")]
    Truncation { requested: usize, rank: usize },
    #[error("projection error: {0}")]
    Projection(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fom(#[from] FomError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Orthonormal trial basis `V` with its singular values and an optional test basis `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis {
    pub v: DenseMatrix,
    pub sigma: Vec<f64>,
    pub w: Option<DenseMatrix>,
}

impl PodBasis {
    pub fn n(&self) -> usize {
        self.v.cols()
    }

    pub fn n_dofs(&self) -> usize {
        self.v.rows()
    }

    /// `Vᵀ u`.
    pub fn restrict(&self, u: &[f64]) -> Vec<f64> {
        self.v.tr_matvec(u).expect("length checked by caller")
    }

    /// `V u_n`.
    pub fn lift(&self, un: &[f64]) -> Vec<f64> {
        self.v.matvec(un).expect("length checked by caller")
    }

    /// Leading `k` modes.
    pub fn truncate(&self, k: usize) -> Result<PodBasis, PodError> {
        if k == 0 || k > self.n() {
            return Err(PodError::Truncation { requested: k, rank: self.n() });
        }
        Ok(PodBasis {
            v: self.v.leading_columns(k),
            sigma: self.sigma[..k].to_vec(),
            w: self.w.as_ref().map(|w| w.leading_columns(k)),
        })
    }

    /// `‖S − V Vᵀ S‖_F / ‖S‖_F`.
    pub fn projection_error(&self, s: &DenseMatrix) -> f64 {
        let coeffs = self.v.tr_matmul(s).expect("row counts agree");
        let rec = self.v.matmul(&coeffs).expect("shapes agree");
        s.sub(&rec).frobenius_norm() / s.frobenius_norm()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PodError> {
        let c = Container {
            p: DenseMatrix::from_vec(1, self.n(), self.sigma.clone())?,
            s: self.v.clone(),
            labels: None,
            scaling: None,
        };
        let mut w = BufWriter::new(File::create(path).map_err(DatasetError::from)?);
        write_container(&mut w, &c)?;
        w.flush().map_err(DatasetError::from)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PodError> {
        let c = read_container(&mut BufReader::new(File::open(path).map_err(DatasetError::from)?))?;
        if c.p.rows() != 1 {
            return Err(PodError::Shape("container does not hold a POD basis".into()));
        }
        Ok(Self { v: c.s, sigma: c.p.into_vec(), w: None })
    }
}

/// First `n` left singular vectors of the raw snapshot matrix.
pub fn pod_offline(set: &SnapshotSet, n: usize) -> Result<PodBasis, PodError> {
    let raw = set.unscaled();
    let svd = thin_svd(&raw.s, DEFAULT_RANK_TOL)?;
    if n == 0 || n > svd.rank() {
        return Err(PodError::Truncation { requested: n, rank: svd.rank() });
    }
    Ok(PodBasis { v: svd.u.leading_columns(n), sigma: svd.sigma[..n].to_vec(), w: None })
}

/// Reduced counterparts `A_n^q = Vᵀ A^q V`, `M_n = Vᵀ M V`, `g_n = Vᵀ g` of
/// the separable parabolic operators.
#[derive(Clone, Debug)]
pub struct ReducedOperatorSet {
    pub mass: DenseMatrix,
    pub stiffness: Vec<DenseMatrix>,
    pub initial: Vec<f64>,
    pub dt: f64,
}

impl ReducedOperatorSet {
    pub fn new(basis: &PodBasis, ops: &SeparableOperators) -> Result<Self, PodError> {
        if basis.n_dofs() != ops.mass.rows() {
            return Err(PodError::Shape(format!(
                "basis has {} rows, operators act on {}",
                basis.n_dofs(),
                ops.mass.rows()
            )));
        }
        Ok(Self {
            mass: ops.mass.project(&basis.v)?,
            stiffness: ops.stiffness.iter().map(|a| a.project(&basis.v)).collect::<Result<_, _>>()?,
            initial: basis.restrict(&ops.initial),
            dt: ops.dt,
        })
    }

    pub fn n(&self) -> usize {
        self.mass.rows()
    }

    pub fn q_a(&self) -> usize {
        self.stiffness.len()
    }

    /// `M_n + Δt Σ_q θ_a^q(μ) A_n^q`.
    pub fn step_operator(&self, mu0: f64) -> DenseMatrix {
        let th = SeparableOperators::theta_a(&[mu0, 0.0]);
        let mut a = self.mass.clone();
        for (t, aq) in th.iter().zip(&self.stiffness) {
            a.axpy(self.dt * t, aq);
        }
        a
    }
}

/// Reduced coordinates per step plus the lifted full-order trajectory.
#[derive(Clone, Debug)]
pub struct ReducedSolution {
    pub reduced: Vec<Vec<f64>>,
    pub lifted: Trajectory,
}

fn march_linear(
    basis: &PodBasis,
    step: &DenseMatrix,
    mass: &DenseMatrix,
    u0: Vec<f64>,
    grid: &TimeGrid,
    params: Vec<f64>,
) -> Result<ReducedSolution, PodError> {
    let lu = LuFactors::new(step)?;
    let mut reduced = vec![u0];
    for _ in 0..grid.n_steps() {
        let rhs = mass.matvec(reduced.last().expect("nonempty"))?;
        reduced.push(lu.solve(&rhs)?);
    }
    let states = reduced.iter().map(|un| basis.lift(un)).collect();
    Ok(ReducedSolution { reduced, lifted: Trajectory { params, times: grid.times(), states } })
}

/// Backward-Euler reduced march assembled from precomputed separable components.
pub fn pod_online_parabolic(
    basis: &PodBasis,
    ops: &ReducedOperatorSet,
    mu0: f64,
    mu1: f64,
    grid: &TimeGrid,
) -> Result<ReducedSolution, PodError> {
    if ops.n() != basis.n() {
        return Err(PodError::Shape("reduced operators do not match the basis".into()));
    }
    if (ops.dt - grid.dt()).abs() > 1e-14 * grid.dt() {
        return Err(PodError::Shape("operators were built for a different time step".into()));
    }
    let th = SeparableOperators::theta_f(&[mu0, mu1]);
    let u0: Vec<f64> = ops.initial.iter().map(|g| th[0] * g).collect();
    march_linear(basis, &ops.step_operator(mu0), &ops.mass, u0, grid, vec![mu0, mu1])
}

/// Same reduced march, but projecting the directly assembled `M + Δt A_h(μ)`.
pub fn pod_online_parabolic_direct(
    basis: &PodBasis,
    problem: &ParabolicProblem,
    mu0: f64,
    mu1: f64,
) -> Result<ReducedSolution, PodError> {
    let grid = problem.grid();
    let ops = problem.operators();
    let a = assemble_diffusion(problem.mesh(), |r| if r == Region::Inner { mu0 } else { 1.0 })?;
    let full = SparseMatrix::linear_combination(&[1.0, grid.dt()], &[&ops.mass, &a])?;
    let step = full.project(&basis.v)?;
    let mass = ops.mass.project(&basis.v)?;
    let u0: Vec<f64> = ops.initial.iter().map(|g| mu1 * g).collect();
    march_linear(basis, &step, &mass, basis.restrict(&u0), &grid, vec![mu0, mu1])
}

/// Galerkin reduced Burgers solve: `Vᵀ r(V ξ) = 0` by Newton with Jacobian
/// `Vᵀ J V`, lifting to the full mesh at every iteration.
pub fn pod_online_burgers(basis: &PodBasis, cfg: &BurgersConfig, mu: f64) -> Result<ReducedSolution, PodError> {
    pod_online_burgers_from(basis, cfg, mu, None)
}

pub fn pod_online_burgers_from(
    basis: &PodBasis,
    cfg: &BurgersConfig,
    mu: f64,
    initial: Option<&[f64]>,
) -> Result<ReducedSolution, PodError> {
    let op = BurgersOperator::new(&cfg.mesh, mu)?;
    if basis.n_dofs() != op.n() {
        return Err(PodError::Shape(format!("basis has {} rows, mesh {} nodes", basis.n_dofs(), op.n())));
    }
    let u0 = match initial {
        Some(u) => u.to_vec(),
        None => burgers_initial(&cfg.mesh, mu)?,
    };
    let v = &basis.v;
    let n = basis.n();
    let mass_v = op.mass().apply_dense(v);
    let m_n = v.tr_matmul(&mass_v)?;
    let dt = cfg.grid.dt();
    let be = MultistepScheme::backward_euler();

    let mut reduced = vec![basis.restrict(&u0)];
    let mut lifted = vec![basis.lift(&reduced[0])];
    let mut fluxes = vec![op.flux(&lifted[0])];
    for k in 1..=cfg.grid.n_steps() {
        let scheme = if k < cfg.scheme.steps() { &be } else { &cfg.scheme };
        let (alpha, beta) = (scheme.alpha(), scheme.beta());
        // reduced history term Vᵀ Σ_j (α_j M u^{k-j} + Δt β_j F(u^{k-j}))
        let mut hist = vec![0.0; n];
        for j in 1..=scheme.steps() {
            let mx = m_n.matvec(&reduced[k - j])?;
            let fx = basis.restrict(&fluxes[k - j]);
            for i in 0..n {
                hist[i] += alpha[j] * mx[i] + dt * beta[j] * fx[i];
            }
        }
        let (a0, c0) = (alpha[0], dt * beta[0]);
        let mut xi = reduced[k - 1].clone();
        let mut u = lifted[k - 1].clone();
        let mut res = f64::INFINITY;
        let mut converged = false;
        for it in 0..=cfg.newton_max {
            let f = op.flux(&u);
            let mx = m_n.matvec(&xi)?;
            let fx = basis.restrict(&f);
            let r: Vec<f64> = (0..n).map(|i| a0 * mx[i] + c0 * fx[i] + hist[i]).collect();
            res = norm_inf(&r);
            if !res.is_finite() {
                return Err(FomError::Divergence { step: k }.into());
            }
            if (it > 0 && res <= cfg.newton_tol) || res == 0.0 {
                converged = true;
                break;
            }
            if it == cfg.newton_max {
                break;
            }
            let jv = op.flux_jacobian(&u).apply_dense(v);
            let mut jac = v.tr_matmul(&jv)?;
            jac.scale(c0);
            jac.axpy(a0, &m_n);
            let neg: Vec<f64> = r.iter().map(|x| -x).collect();
            let delta = LuFactors::new(&jac)?.solve(&neg)?;
            for (x, d) in xi.iter_mut().zip(&delta) {
                *x += d;
            }
            u = basis.lift(&xi);
        }
        if !converged {
            return Err(FomError::StepFailure { step: k, residual: res }.into());
        }
        fluxes.push(op.flux(&u));
        reduced.push(xi);
        lifted.push(u);
    }
    Ok(ReducedSolution { reduced, lifted: Trajectory { params: vec![mu], times: cfg.grid.times(), states: lifted } })
}

/// Petrov-Galerkin reduction `(Wᵀ A V, Wᵀ f)`; `W = V` gives Galerkin.
pub fn petrov_galerkin_project(
    w: &DenseMatrix,
    v: &DenseMatrix,
    a: &SparseMatrix,
    f: &[f64],
) -> Result<(DenseMatrix, Vec<f64>), PodError> {
    if w.shape() != v.shape() {
        return Err(PodError::Shape(format!("W is {:?}, V is {:?}", w.shape(), v.shape())));
    }
    let wtv = w.tr_matmul(v)?;
    if let Err(LinalgError::Singular { pivot }) = LuFactors::new(&wtv) {
        return Err(PodError::Projection(format!("WᵀV is singular (pivot {pivot})")));
    }
    Ok((a.petrov_project(w, v)?, w.tr_matvec(f)?))
}

/// Solves the reduced system and lifts: `V (Wᵀ A V)⁻¹ Wᵀ f`.
pub fn reduced_linear_solve(
    w: &DenseMatrix,
    v: &DenseMatrix,
    a: &SparseMatrix,
    f: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), PodError> {
    let (an, fn_) = petrov_galerkin_project(w, v, a, f)?;
    let un = LuFactors::new(&an)?.solve(&fn_)?;
    let lifted = v.matvec(&un)?;
    Ok((un, lifted))
}

/// `Wᵀ (A V u_n − f)`, the residual of the reduced system.
pub fn reduced_residual(w: &DenseMatrix, v: &DenseMatrix, a: &SparseMatrix, f: &[f64], un: &[f64]) -> Vec<f64> {
    let u = v.matvec(un).expect("shapes agree");
    let au = a.matvec(&u);
    (0..w.cols())
        .map(|j| {
            let col = w.column(j);
            dot(&col, &au) - dot(&col, f)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SnapshotSet;

    fn set_from(s: DenseMatrix) -> SnapshotSet {
        let p = DenseMatrix::zeros(2, s.cols());
        SnapshotSet::new(p, s).unwrap()
    }

    #[test]
    fn rank_one_snapshots() {
        let a = [1.0, 2.0, -2.0];
        let s = DenseMatrix::from_fn(3, 4, |i, j| a[i] * (j as f64 + 1.0));
        let basis = pod_offline(&set_from(s.clone()), 1).unwrap();
        assert!(basis.projection_error(&s) < 1e-14);
        assert!(matches!(pod_offline(&set_from(s), 2), Err(PodError::Truncation { requested: 2, rank: 1 })));
    }

    #[test]
    fn galerkin_equals_petrov_with_same_basis() {
        let a = SparseMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (1, 1, 3.0), (2, 2, 4.0), (0, 1, 1.0), (1, 0, 1.0)])
            .unwrap();
        let v = DenseMatrix::from_fn(3, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let (ag, fg) = petrov_galerkin_project(&v, &v, &a, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ag, a.project(&v).unwrap());
        assert_eq!(fg, vec![1.0, 2.0]);
        let w = DenseMatrix::from_fn(3, 2, |i, j| if i == 2 && j < 2 { 1.0 } else { 0.0 });
        assert!(matches!(petrov_galerkin_project(&w, &v, &a, &[0.0; 3]), Err(PodError::Projection(_))));
    }

    #[test]
    fn truncation_keeps_leading_modes() {
        let s = DenseMatrix::from_fn(6, 5, |i, j| (-((i as f64 - j as f64).powi(2)) / 3.0).exp());
        let b = pod_offline(&set_from(s), 3).unwrap();
        let t = b.truncate(2).unwrap();
        assert_eq!(t.n(), 2);
        assert_eq!(t.sigma, b.sigma[..2].to_vec());
        assert!(b.truncate(4).is_err());
    }
}
