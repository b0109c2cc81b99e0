use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input parameters; maps to the configuration exit code.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("mode set is not closed under p -> -p: {0:?} present without its negative")]
    NotNegationClosed([i32; 3]),

    #[error("mode set contains the zero momentum")]
    ZeroMode,

    #[error("non-finite summand at p = {0:?}")]
    NonFinite([i32; 3]),

    #[error("scaled potential exceeds ell: support radius {support} >= ell = {ell}")]
    SupportExceedsEll { support: f64, ell: f64 },

    #[error("shooting failed to bracket the Neumann eigenvalue after {0} expansions")]
    NoBracket(usize),

    #[error("mesh refinement disagreement: lambda {coarse} vs {fine} (relative {rel:.3e})")]
    MeshDisagreement { coarse: f64, fine: f64, rel: f64 },

    #[error("missing eta for momentum {0:?}")]
    MissingEta([i32; 3]),

    #[error("kappa outside Bogoliubov-diagonalizable regime: |G/F| = {ratio} at p = {p:?}")]
    NotDiagonalizable { ratio: f64, p: [i32; 3] },

    #[error("Fock basis dimension {dim} exceeds cap {cap}; reduce n_max or number of modes")]
    DimensionCap { dim: usize, cap: usize },

    #[error("dense matrix exponential needs dimension <= {cap}, got {dim}; enable the Krylov action")]
    DenseCap { dim: usize, cap: usize },

    #[error("eigensolver did not converge: residuals {0:?}")]
    NonConvergence(Vec<f64>),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("commutator structure violation: {0}")]
    Structure(String),

    #[error("{0}")]
    Io(String),
}

impl Error {
    /// True for errors that come from bad input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::NotNegationClosed(_)
                | Error::ZeroMode
                | Error::SupportExceedsEll { .. }
                | Error::DimensionCap { .. }
                | Error::DenseCap { .. }
                | Error::Resource(_)
                | Error::Io(_)
        )
    }
}
