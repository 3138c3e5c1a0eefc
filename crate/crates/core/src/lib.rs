pub mod dstf;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod mixing;
pub mod quadrature;
pub mod special;
pub mod spectral;
pub mod stf;
pub mod tridiag;
pub mod trace;
pub mod validation;
