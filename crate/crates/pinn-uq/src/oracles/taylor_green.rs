//! Decaying Taylor-Green vortex: a closed-form solution of the 2-D
//! incompressible Navier-Stokes equations, used as manufactured ground
//! truth for the built-in NS problems.

use crate::autodiff::Jet;

/// (u, v, p) at (x, y, t) for viscosity nu:
/// u = -cos x sin y e^{-2 nu t}, v = sin x cos y e^{-2 nu t},
/// p = -(cos 2x + cos 2y)/4 e^{-4 nu t}.
pub fn taylor_green_exact(x: f64, y: f64, t: f64, nu: f64) -> (f64, f64, f64) {
    let e = (-2.0 * nu * t).exp();
    let e2 = (-4.0 * nu * t).exp();
    let u = -x.cos() * y.sin() * e;
    let v = x.sin() * y.cos() * e;
    let p = -0.25 * ((2.0 * x).cos() + (2.0 * y).cos()) * e2;
    (u, v, p)
}

/// Full analytic jet of the Taylor-Green fields: values, first derivatives
/// in (x, y, t), and pure second derivatives in (x, y). Independent of the
/// network jet machinery; used to certify the residual operators.
pub fn taylor_green_analytic_jet(x: f64, y: f64, t: f64, nu: f64) -> Jet {
    let e = (-2.0 * nu * t).exp();
    let e2 = (-4.0 * nu * t).exp();
    let (sx, cx) = x.sin_cos();
    let (sy, cy) = y.sin_cos();

    let u = -cx * sy * e;
    let v = sx * cy * e;
    let p = -0.25 * ((2.0 * x).cos() + (2.0 * y).cos()) * e2;

    let u_x = sx * sy * e;
    let u_y = -cx * cy * e;
    let u_t = -2.0 * nu * u;
    let v_x = cx * cy * e;
    let v_y = -sx * sy * e;
    let v_t = -2.0 * nu * v;
    let p_x = 0.5 * (2.0 * x).sin() * e2;
    let p_y = 0.5 * (2.0 * y).sin() * e2;
    let p_t = -4.0 * nu * p;

    // each velocity component is an eigenfunction of the 1-D Laplacians
    let u_xx = -u;
    let u_yy = -u;
    let v_xx = -v;
    let v_yy = -v;
    let p_xx = (2.0 * x).cos() * e2;
    let p_yy = (2.0 * y).cos() * e2;

    Jet {
        value: vec![u, v, p],
        d1: vec![
            vec![u_x, u_y, u_t],
            vec![v_x, v_y, v_t],
            vec![p_x, p_y, p_t],
        ],
        d2: vec![
            vec![u_xx, u_yy],
            vec![v_xx, v_yy],
            vec![p_xx, p_yy],
        ],
        second_indices: vec![0, 1],
    }
}
