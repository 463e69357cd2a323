//! The averaged field `w`, its zeros, and Brouwer degrees on boxes and
//! chart boxes.

mod degree;
mod field;
mod region;

pub use degree::{
    brouwer_degree, degree_in, degree_signed, endpoint_degree, find_zeros, find_zeros_in, winding_degree, DegreeMethod,
    DegreeResult, FnField, Negated, VectorField, ZeroRecord, DEGENERACY,
};
pub use field::{averaged_field, central_jacobian, AveragedField, ChartField};
pub use region::Region;
