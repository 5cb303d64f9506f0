//! Finite-dimensional Tomita–Takesaki modular theory and numerical checks of the
//! intertwining identities satisfied by the `L²`-extension of Markov maps.
//!
//! * [`numsub`]: dense complex linear algebra and the tolerance policy.
//! * [`algebra`]: block algebras `⊕ M_{n_k}`, elements and faithful states.
//! * [`gns`]: the GNS space in the Hilbert–Schmidt picture with `Ω`, `S`, `J`, `Δ^z`, `σ_t`.
//! * [`markov`]: channels, Markov membership, the state adjoint and `T_Φ`.
//! * [`generators`]: seeded construction of Markov and non-Markov instances.
//! * [`verify`]: residual suites for the intertwining identities.
//! * [`instance`]: JSON file formats shared with the command-line tool.

pub mod algebra;
pub mod error;
pub mod generators;
pub mod gns;
pub mod instance;
pub mod markov;
pub mod numsub;
pub mod verify;

pub use algebra::{evaluate_state, random_element, AlgebraElement, BlockAlgebra, ElementKind, FaithfulState};
pub use error::{Error, Result};
pub use generators::{generate, GenKind, GenSpec, Generated};
pub use gns::{apply_j, left_act, right_act, GnsVector, ModularData};
pub use instance::InstanceFile;
pub use markov::{Channel, ChoiMatrix, L2Extension, MarkovCheck};
pub use num_complex::Complex64;
pub use numsub::{herm_eig, matrix_power, op_norm, CMatrix, HermEig, Tolerance};
pub use verify::{run_suite, verify_channel, SuiteConfig, SuiteReport, VerificationReport, VerifyConfig};
