//! Convex conic solves and a sequential quadratic programming NLP solver.

pub mod gradcheck;
pub mod qcqp;
pub mod sqp;

pub use gradcheck::{check_derivatives, random_points, GradientCheck};
pub use qcqp::{solve_convex_qcqp, ConvexQcqpSpec, QcqpSolution, SocRow, SolveStatus};
pub use sqp::{solve_fhocp_nlp, solve_nlp, NlpEval, NlpProblem, SqpIterate, SqpOptions, SqpResult};
