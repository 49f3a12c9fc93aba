//! The interface a posterior must expose to the MCMC engine.

use rand_chacha::ChaCha8Rng;

/// How a coordinate is proposed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordKind {
    /// Real-valued coordinate, Gaussian random-walk proposals.
    Continuous,
    /// Integer-valued coordinate stored as f64, signed geometric-step
    /// proposals (used for latent case counts).
    Count,
}

/// Indices of one group's trio of coordinates inside the state vector.
///
/// `phi` is the transformed preferentiality coordinate (absent for groups
/// with known random testing), `kappa_ir` the cloglog infection rate, and
/// `kappa_ifr` the cloglog fatality rate (absent in fixed-effects mode).
#[derive(Debug, Clone, Copy)]
pub struct GroupCoords {
    pub phi: Option<usize>,
    pub kappa_ir: usize,
    pub kappa_ifr: Option<usize>,
}

/// Natural value of phi together with its derivative with respect to the
/// coordinate that stores it, as needed by the transformed phi move.
#[derive(Debug, Clone, Copy)]
pub struct PhiView {
    pub phi: f64,
    pub dphi_dcoord: f64,
}

/// A log-density the engine can sample from.
///
/// The state is a flat vector of sampler coordinates. `log_density` must
/// return `-inf` (never NaN) outside the support so rejections are automatic.
pub trait Target: Sync {
    /// Number of sampler coordinates.
    fn dim(&self) -> usize;

    /// Names of the sampler coordinates, `dim()` entries.
    fn coord_names(&self) -> Vec<String>;

    /// Proposal kind per coordinate. Defaults to all-continuous.
    fn coord_kinds(&self) -> Vec<CoordKind> {
        vec![CoordKind::Continuous; self.dim()]
    }

    /// Unnormalized log posterior density at `v`.
    fn log_density(&self, v: &[f64]) -> f64;

    /// A starting state with finite density.
    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;

    /// Per-group coordinate trios for the block and transformed moves.
    fn group_coords(&self) -> Vec<GroupCoords> {
        Vec::new()
    }

    /// Natural phi for group `k` given the state, with its coordinate
    /// derivative. `None` when the group has no phi coordinate.
    fn phi_view(&self, _v: &[f64], _k: usize) -> Option<PhiView> {
        None
    }

    /// Coordinate value that encodes a proposed natural `phi` for group `k`,
    /// or `None` when `phi` lies outside the representable support.
    fn phi_coord_from(&self, _v: &[f64], _k: usize, _phi: f64) -> Option<f64> {
        None
    }

    /// Coordinate holding the log of the shared preferentiality bound, when
    /// the phi coordinates are stored relative to that bound. Enables the
    /// bound-rescaling move, which proposes the bound while holding every
    /// natural phi fixed.
    fn bound_coord(&self) -> Option<usize> {
        None
    }

    /// Names of the reported (natural-scale) parameters.
    fn tracked_names(&self) -> Vec<String> {
        self.coord_names()
    }

    /// Reported parameter values for a state. Defaults to the state itself.
    fn tracked(&self, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }
}
