pub mod build_graph;
pub mod eval;
pub mod grasp;
pub mod track;
