//! Full-order models: finite elements in space, linear multistep in time.

mod burgers;
mod mesh2d;
mod parabolic;

pub use burgers::{
    burgers_initial, solve_burgers, solve_burgers_with, BurgersConfig, BurgersOperator, Mesh1D, Tridiagonal,
};
pub use mesh2d::{Region, TriMesh};
pub use parabolic::{
    assemble_diffusion, assemble_parameter_separable, parabolic_initial_shape, solve_parabolic, solve_parabolic_from,
    ParabolicProblem, SeparableOperators,
};

use crate::linalg::LinalgError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FomError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("invalid time grid or scheme: {0}")]
    Setup(String),
    #[error("Newton iteration failed at step {step} (residual {residual:e})")]
    StepFailure { step: usize, residual: f64 },
    #[error("solution diverged (non-finite state) at step {step}")]
    Divergence { step: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Uniform partition of `[0, T]` into `n_steps` segments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self, FomError> {
        if n_steps == 0 || !(t_final > 0.0) || !t_final.is_finite() {
            return Err(FomError::Setup(format!(
                "time grid needs T > 0 and at least one step (T = {t_final}, N_t = {n_steps})"
            )));
        }
        Ok(Self { t_final, n_steps, dt: t_final / n_steps as f64 })
    }

    /// Grid with a prescribed step size; `t_final / dt` must be integral.
    pub fn with_step(t_final: f64, dt: f64) -> Result<Self, FomError> {
        let steps = (t_final / dt).round();
        if !(dt > 0.0) || (steps * dt - t_final).abs() > 1e-9 * t_final {
            return Err(FomError::Setup(format!("T = {t_final} is not a multiple of dt = {dt}")));
        }
        Self::new(t_final, steps as usize)
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `t^k = k Δt` for `k = 0..=N_t`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    /// Index of the grid instant closest to `t`.
    pub fn nearest_step(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.n_steps)
    }
}

/// Coefficients of a linear multistep method
/// `Σ_j α_j u^{k-j} = Δt Σ_j β_j f(u^{k-j})`, `j = 0..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultistepScheme {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl MultistepScheme {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self, FomError> {
        if alpha.len() < 2 || alpha.len() != beta.len() {
            return Err(FomError::Setup("need K >= 1 and matching α/β lengths".into()));
        }
        let sum: f64 = alpha.iter().sum();
        let scale = alpha.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        if sum.abs() > 1e-14 * scale {
            return Err(FomError::Setup(format!("α coefficients must sum to zero (sum = {sum:e})")));
        }
        if alpha[0] == 0.0 {
            return Err(FomError::Setup("α_0 must be nonzero".into()));
        }
        Ok(Self { alpha, beta })
    }

    pub fn backward_euler() -> Self {
        Self { alpha: vec![1.0, -1.0], beta: vec![1.0, 0.0] }
    }

    /// Second-order backward differentiation formula.
    pub fn bdf2() -> Self {
        Self { alpha: vec![1.5, -2.0, 0.5], beta: vec![1.0, 0.0, 0.0] }
    }

    /// Number of previous levels `K`.
    pub fn steps(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }
}

/// States `u_h^k`, `k = 0..=N_t`, of one parameter instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub params: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn n_dofs(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

/// A benchmark PDE instance that maps a parameter vector to a trajectory.
#[derive(Clone, Debug)]
pub enum FomProblem {
    Burgers(BurgersConfig),
    Parabolic(ParabolicProblem),
}

impl FomProblem {
    pub fn solve(&self, mu: &[f64]) -> Result<Trajectory, FomError> {
        match self {
            FomProblem::Burgers(cfg) => {
                if mu.len() != 1 {
                    return Err(FomError::Parameter(format!("Burgers takes one parameter, got {}", mu.len())));
                }
                solve_burgers_with(cfg, mu[0], None)
            }
            FomProblem::Parabolic(p) => {
                if mu.len() != 2 {
                    return Err(FomError::Parameter(format!(
                        "the parabolic problem takes two parameters, got {}",
                        mu.len()
                    )));
                }
                p.solve(mu[0], mu[1])
            }
        }
    }

    pub fn n_dofs(&self) -> usize {
        match self {
            FomProblem::Burgers(cfg) => cfg.mesh.n_nodes(),
            FomProblem::Parabolic(p) => p.mesh().n_nodes(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            FomProblem::Burgers(_) => 1,
            FomProblem::Parabolic(_) => 2,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        match self {
            FomProblem::Burgers(cfg) => cfg.grid,
            FomProblem::Parabolic(p) => p.grid(),
        }
    }

    /// Short text identifying the discretization, used for cache keys.
    pub fn describe(&self) -> String {
        match self {
            FomProblem::Burgers(cfg) => format!(
                "burgers:nh={}:L={}:T={}:nt={}:tol={:e}:max={}",
                cfg.mesh.n_nodes(),
                cfg.mesh.length(),
                cfg.grid.t_final(),
                cfg.grid.n_steps(),
                cfg.newton_tol,
                cfg.newton_max
            ),
            FomProblem::Parabolic(p) => format!(
                "parabolic:nodes={}:cells={}:T={}:nt={}:cg={:e}",
                p.mesh().n_nodes(),
                p.mesh().n_cells(),
                p.grid().t_final(),
                p.grid().n_steps(),
                p.cg_tol()
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_grid_spacing() {
        let g = TimeGrid::new(2.0, 100).unwrap();
        assert!((g.dt() * g.n_steps() as f64 - g.t_final()).abs() < 1e-12);
        assert_eq!(g.times().len(), 101);
        assert_eq!(g.nearest_step(1.0), 50);
        assert!(TimeGrid::new(1.0, 0).is_err());
        let h = TimeGrid::with_step(3.0, 0.05).unwrap();
        assert_eq!(h.n_steps(), 60);
        assert!(TimeGrid::with_step(1.0, 0.3).is_err());
    }

    #[test]
    fn multistep_constraint_is_enforced() {
        let be = MultistepScheme::backward_euler();
        assert_eq!(be.steps(), 1);
        assert_eq!(be.alpha(), &[1.0, -1.0]);
        assert_eq!(be.beta(), &[1.0, 0.0]);
        assert!(MultistepScheme::new(vec![1.0, -0.5], vec![1.0, 0.0]).is_err());
        assert!(MultistepScheme::new(vec![1.5, -2.0, 0.5], vec![1.0, 0.0, 0.0]).is_ok());
        assert!(MultistepScheme::new(vec![0.0, 0.0], vec![1.0, 0.0]).is_err());
    }
}
