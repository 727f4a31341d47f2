//! Exact 2-Selmer ranks of quadratic twists y² = (x−bc₁)(x−bc₂)(x−bc₃) of an
//! elliptic curve with full rational 2-torsion, computed as the intersection
//! of two Lagrangian subspaces of a symplectic F₂-space built from Hilbert
//! symbols, together with the predicted rank-density distribution, moment and
//! parity diagnostics, character-sum experiments, and a resumable sweep
//! harness.

pub mod arith;
pub mod charlab;
pub mod density;
pub mod error;
pub mod f2linalg;
pub mod harness;
pub mod localspaces;
pub mod oracle;
pub mod selmer;

pub use arith::{Place, Rat, SquareClass};
pub use error::{Error, Result};
pub use f2linalg::{BilinearFormF2, SubspaceF2, VectorF2};
pub use harness::{DensityTable, ReportFormat, SweepConfig};
pub use localspaces::{GlobalSpace, TwistFamily};
pub use selmer::{FormalTwistModel, TwistRecord};
