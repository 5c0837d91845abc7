//! Generalized belief propagation and operator-form message passing on
//! presheaves of finite sets over finite posets, with natural transformations
//! that transport Hamiltonians, messages and fixed points.

pub mod bp;
pub mod calculus;
pub mod energy;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mp;
pub mod oracle;
pub mod poset;
pub mod presheaf;
pub mod random;
pub mod transform;

pub use calculus::MessageBundle;
pub use energy::Hamiltonians;
pub use error::{Error, Result};
pub use poset::{MobiusTable, Poset};
pub use presheaf::{FieldBundle, FiniteSetPresheaf, GraphicalSpec, InnerProductWeights};
