//! Learning labelled Markov decision processes and Markov chains from
//! observation traces with Baum-Welch, plus belief-weighted active sampling
//! that balances the expected action counts of each hidden state.
//!
//! ```
//! use mdpbw_core::{builtin, em, observation::Observation, Dataset};
//!
//! let truth = builtin::reber_model();
//! let data: Dataset = ["start B T X S", "start B P V V"]
//!     .iter()
//!     .map(|l| Observation::chain(l.split_whitespace(), builtin::CHAIN_ACTION).unwrap())
//!     .collect();
//! let hyp0 = builtin::random_model(7, truth.alphabet().clone(), truth.actions().clone(), 1).unwrap();
//! let (learned, report) = em::mc_bw(&data, &hyp0, &em::EmConfig::default()).unwrap();
//! assert!(learned.validate().is_empty());
//! assert!(report.iterations >= 1);
//! ```

pub mod active;
pub mod builtin;
pub mod em;
pub mod error;
pub mod eval;
pub mod inference;
pub mod model;
pub mod observation;
pub mod scheduler;
pub mod sim;

pub use active::{ActionCountMatrix, Schedule, Strategy};
pub use em::{EmConfig, EmReport, ZeroLikelihoodPolicy};
pub use error::{Error, ProtocolError, Result};
pub use model::{ActionSet, Alphabet, Model, ERROR_LABEL};
pub use observation::{Dataset, Observation};
pub use scheduler::{Scheduler, UniformScheduler};
pub use sim::{LengthSampler, System};
