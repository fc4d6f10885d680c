pub mod axioms;
pub mod charts;
pub mod cli;
pub mod defspace;
pub mod error;
pub mod families;
pub mod fusion;
pub mod liegroup;
pub mod spaces;
