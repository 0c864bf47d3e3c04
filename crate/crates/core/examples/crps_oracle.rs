//! Closed-form CRPS of the truncated normal against numerical integration,
//! and its analytic gradient against finite differences.

use semilocal_emos::distributions::{tn_crps, tn_crps_gradient, tn_crps_quadrature, TnParams};

fn main() -> semilocal_emos::Result<()> {
    println!("{:>7} {:>6} {:>6} {:>14} {:>10}", "mu", "sigma", "obs", "crps", "|diff|");
    for &(mu, sigma, y) in &[
        (0.0, 1.0, 0.0),
        (0.0, 1.0, 1.0),
        (5.0, 2.0, 4.0),
        (-4.0, 1.5, 0.3),
        (-30.0, 2.0, 0.05),
        (15.0, 8.0, 30.0),
    ] {
        let p = TnParams::new(mu, sigma)?;
        let c = tn_crps(&p, y)?;
        let q = tn_crps_quadrature(&p, y)?;
        println!("{mu:>7.1} {sigma:>6.1} {y:>6.2} {c:>14.10} {:>10.2e}", (c - q).abs());
    }

    let p = TnParams::new(2.0, 1.3)?;
    let (_, dl, ds) = tn_crps_gradient(&p, 1.1)?;
    let h = 1e-6;
    let f = |m: f64, s: f64| tn_crps(&TnParams::new(m, s).unwrap(), 1.1).unwrap();
    let fd_l = (f(2.0 + h, 1.3) - f(2.0 - h, 1.3)) / (2.0 * h);
    let fd_s = (f(2.0, 1.3 + h) - f(2.0, 1.3 - h)) / (2.0 * h);
    println!("d/dmu    {dl:.8} (fd {fd_l:.8})");
    println!("d/dsigma {ds:.8} (fd {fd_s:.8})");
    Ok(())
}
