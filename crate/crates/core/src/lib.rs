pub mod bounds;
pub mod control;
pub mod dump;
pub mod engine;
pub mod experiments;
pub mod families;
pub mod instance;
pub mod povm;
pub mod randstates;
pub mod scalar;
pub mod statevector;
pub mod stats;

pub use scalar::{Complex, Real};

pub type PureStateF64 = statevector::PureState<f64>;
pub type LocalOperatorF64 = statevector::LocalOperator<f64>;
pub type DenseOperatorF64 = statevector::DenseOperator<f64>;
pub type PovmF64 = povm::Povm<f64>;
pub type PovmTableF64 = povm::PovmTable<f64>;
pub type InstanceF64 = instance::AmbqcInstance<f64>;
