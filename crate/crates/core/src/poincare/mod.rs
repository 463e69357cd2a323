//! Translation operator `P^lambda` of the coupled system over one period,
//! its Jacobian, fixed points and their indices.

mod fixed;
mod flow;
mod index;
mod jacobian;

pub use fixed::{find_fixed_point, FixedPointOptions, FixedPointRecord, EIGEN_MARGIN};
pub(crate) use fixed::{finish_record, newton_fixed, scaled_eval};
pub use flow::{flow, poincare_rk4, rk4_residual, FlowResult, Model};
pub(crate) use flow::integrate_unscaled;
pub use index::{
    averaged_factor_check, averaged_factor_fixed_points, enumerate_fixed_points, index_formula_check,
    linear_index_on_box, product_law_check, AveragedFactorRow, FactorFixedPoint, IndexOptions, IndexReport, IndexRow,
    ProductRow,
};
pub(crate) use index::region_coords;
pub use jacobian::{
    check_jacobian, finite_difference_jacobian, jacobian_discrepancy, poincare_jacobian, variational_jacobian,
    JacobianCheck, REJECT_ABOVE,
};
