use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("LAPACK routine {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("Sylvester operator is singular (eigenvalues λ_i + λ_j = 0)")]
    SingularSylvester,
    #[error("iteration did not converge: {0}")]
    NotConverged(String),
    #[error("Hamiltonian has eigenvalues on the imaginary axis; no stabilizing solution")]
    NoStabilizingSolution,
    #[error("ill-conditioned invariant subspace (pivot ratio {0:e})")]
    IllConditioned(f64),
    #[error("system is not asymptotically stable (spectral abscissa {0:e})")]
    UnstableSystem(f64),
    #[error("matrix is not positive semidefinite (λ_min = {0:e})")]
    NotPsd(f64),
    #[error("state transformation is singular")]
    SingularTransform,
    #[error("projection matrices are not biorthogonal (‖WᵀV − I‖ = {0:e})")]
    BiorthogonalityViolated(f64),
    #[error("projection is not compatible with the Hamiltonian (‖QV − WQ_p‖ = {0:e})")]
    CompatibilityViolated(f64),
    #[error("resolvent sI − A is singular at the requested point")]
    ResolventSingular,
    #[error("X does not solve the KYP inequality (λ_min(W(X)) = {0:e})")]
    NotAKypSolution(f64),
    #[error("system is not passive (Popov function has λ_min = {0:e})")]
    NotPassive(f64),
    #[error("KYP inequality has no bounded maximal solution")]
    UnboundedSolution,
    #[error("requested order {requested} exceeds numerical rank {rank}")]
    RankDeficient { requested: usize, rank: usize },
    #[error("Q22 block is singular")]
    SingularQ22,
    #[error("Gramian variant mismatch: expected {expected}, got {got}")]
    GramianVariantMismatch { expected: &'static str, got: &'static str },
    #[error("Riccati solution is not stabilizing (closed-loop abscissa {0:e})")]
    NotStabilizing(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid port-Hamiltonian system: {0}")]
    InvalidSystem(String),
}

pub type Result<T> = std::result::Result<T, Error>;
