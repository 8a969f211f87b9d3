//! Small dense complex linear algebra helpers on top of nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64 as C;

pub type Mat = DMatrix<C>;

pub fn zeros(r: usize, c: usize) -> Mat {
    Mat::from_element(r, c, C::new(0.0, 0.0))
}

pub fn det(m: &Mat) -> C {
    if m.nrows() == 0 {
        return C::new(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

pub fn inverse(m: &Mat) -> Option<Mat> {
    m.clone().lu().try_inverse()
}

/// Ratio of largest to smallest LU pivot magnitude, a cheap conditioning proxy.
pub fn pivot_ratio(m: &Mat) -> f64 {
    let lu = m.clone().lu();
    let u = lu.u();
    let d: Vec<f64> = (0..u.nrows().min(u.ncols())).map(|i| u[(i, i)].norm()).collect();
    let mx = d.iter().cloned().fold(0.0, f64::max);
    let mn = d.iter().cloned().fold(f64::INFINITY, f64::min);
    mx / mn
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}
