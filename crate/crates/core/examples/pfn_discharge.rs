//! A five-section pulse-forming network discharged into a matched load.

use vlab_core::circuit::{pfn_template, transient_with, TransientOptions};

fn main() {
    let (n, l, c, v0): (usize, f64, f64, f64) = (5, 2.5e-6, 1e-8, 1e4);
    let z0 = (l / c).sqrt();
    let circuit = pfn_template(n, l, c, z0, v0).expect("ladder");
    let run = transient_with(&circuit, 5e-6, 1001, TransientOptions::default()).expect("transient");
    let t = run.series.times();
    let v = run.series.channel("v(load)").unwrap();

    let peak = v.iter().fold(0.0f64, |m, x| m.max(*x));
    let above: Vec<f64> = t
        .iter()
        .zip(v)
        .filter(|(_, x)| **x >= peak / 2.0)
        .map(|(t, _)| *t)
        .collect();
    let width = above.last().unwrap() - above.first().unwrap();
    let dt = t[1] - t[0];
    let energy: f64 = v.iter().map(|x| x * x / z0 * dt).sum();

    println!("Z0 = {z0:.3} ohm");
    println!("flat-top {:.1} V (ideal {:.1} V)", peak, v0 / 2.0);
    println!(
        "width {:.3e} s (ideal {:.3e} s)",
        width,
        2.0 * n as f64 * (l * c).sqrt()
    );
    println!(
        "load energy {:.4e} J of {:.4e} J stored",
        energy,
        n as f64 * c * v0 * v0 / 2.0
    );
}
