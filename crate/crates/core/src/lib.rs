pub mod dsm;
pub mod graph;
pub mod linprog;
pub mod protocol;
pub mod simnet;
pub mod subproblem;
