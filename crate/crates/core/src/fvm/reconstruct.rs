//! Third-order CWENO reconstruction of interface values from cell averages.

/// Fixed regularization of the smoothness indicators.
pub const CWENO_EPS: f64 = 1e-6;
/// Exponent of the nonlinear weights.
pub const CWENO_POWER: i32 = 2;

const D_CENTRAL: f64 = 0.5;
const D_SIDE: f64 = 0.25;

/// Returns `(left, right)`: the reconstruction of the middle cell evaluated at
/// its left face `x_{j-1/2}` and right face `x_{j+1/2}`, with `ε = 1e-6`.
#[inline]
pub fn cweno3_reconstruct(stencil: [f64; 3]) -> (f64, f64) {
    cweno3_faces(stencil, CWENO_EPS)
}

/// [`cweno3_reconstruct`] with an explicit indicator regularization `eps`.
#[inline]
pub fn cweno3_faces(stencil: [f64; 3], eps: f64) -> (f64, f64) {
    let [um, u0, up] = stencil;
    let dl = u0 - um;
    let dr = up - u0;
    let curv = up - 2.0 * u0 + um;
    let slope = 0.5 * (up - um);

    // central polynomial P0 = (Popt - P_L/4 - P_R/4) / (1/2), in ξ = (x - x_j)/dx
    let c0 = u0 - curv / 12.0;

    let beta_l = dl * dl;
    let beta_r = dr * dr;
    let beta_c = slope * slope + 13.0 / 3.0 * curv * curv;

    let alpha_l = D_SIDE / (eps + beta_l).powi(CWENO_POWER);
    let alpha_r = D_SIDE / (eps + beta_r).powi(CWENO_POWER);
    let alpha_c = D_CENTRAL / (eps + beta_c).powi(CWENO_POWER);
    let sum = alpha_l + alpha_r + alpha_c;
    let (wl, wr, wc) = (alpha_l / sum, alpha_r / sum, alpha_c / sum);

    let eval = |xi: f64| {
        let p_l = u0 + dl * xi;
        let p_r = u0 + dr * xi;
        let p_c = c0 + slope * xi + curv * xi * xi;
        wl * p_l + wr * p_r + wc * p_c
    };
    (eval(-0.5), eval(0.5))
}

/// Scales the face values toward the average `mean` until both are
/// nonnegative. The cell average of the reconstruction is unchanged.
#[inline]
pub fn limit_positive(mean: f64, (left, right): (f64, f64)) -> (f64, f64) {
    let low = left.min(right);
    if low >= 0.0 {
        return (left, right);
    }
    let theta = if mean > 0.0 { (mean / (mean - low)).min(1.0) } else { 0.0 };
    (mean + theta * (left - mean), mean + theta * (right - mean))
}

/// The optimal (linear-weight) parabola through the three averages at the two
/// faces. Exact on quadratic data.
pub fn optimal_parabola_faces(stencil: [f64; 3]) -> (f64, f64) {
    let [um, u0, up] = stencil;
    let curv = up - 2.0 * u0 + um;
    let slope = 0.5 * (up - um);
    let c = u0 - curv / 24.0;
    let eval = |xi: f64| c + slope * xi + 0.5 * curv * xi * xi;
    (eval(-0.5), eval(0.5))
}
