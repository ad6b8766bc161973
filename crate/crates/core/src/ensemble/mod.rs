//! Monte-Carlo ensembles: initial densities, memory loss between two
//! densities under a configuration sequence, correlation decay and the
//! exact coupling-mass recursion.

mod correlation;
mod coupling;
mod density;
mod engine;
mod memory;
mod moments;
mod observable;

pub use correlation::{correlation_decay, CorrelationSeries};
pub use coupling::{coupling_recursion, delta_zero, CouplingParams, CouplingReport};
pub use density::{sample_density, SmoothDensity, MIN_ACCEPTANCE};
pub use engine::{BOOTSTRAP_RESAMPLES, MAX_BLOCKS};
pub use memory::{fit_decay, memory_loss, DecayFit, DecaySeries};
pub use moments::{invariance_moments, MomentCheck};
pub use observable::{HolderData, Observable};

#[cfg(test)]
mod tests;
