//! Tune the two quadrupoles of a short channel so the exit beam hits a
//! target Twiss, then print the envelope along the matched line. The target
//! is the exit of the same line at known gradients, so a perfect match exists.

use vlab_core::beam::{
    envelope, exit_twiss, match_quadrupoles, BeamTwiss, Beamline, BeamlineElement, TwissParams,
};

fn main() {
    let mut line = Beamline::new(vec![
        BeamlineElement::drift(1.0),
        BeamlineElement::quadrupole(0.2, 1.0),
        BeamlineElement::drift(1.0),
        BeamlineElement::quadrupole(0.2, -1.0),
        BeamlineElement::drift(1.0),
    ]);
    let tunable = [1, 3];
    let incoming = BeamTwiss::round(TwissParams::new(0.0, 5.0, 1e-6));
    let target = exit_twiss(&line, &tunable, &[1.6, -1.4], &incoming).unwrap();

    let result = match_quadrupoles(&line, &tunable, &incoming, &target).expect("matching");
    println!(
        "k = {:?} m^-2, residual {:.2e} after {} iterations",
        result.strengths, result.residual, result.iterations
    );
    let exit = exit_twiss(&line, &tunable, &result.strengths, &incoming).unwrap();
    println!("exit x: alpha {:.4} beta {:.4}", exit.x.alpha, exit.x.beta);
    println!("exit y: alpha {:.4} beta {:.4}", exit.y.alpha, exit.y.beta);

    for (&i, &k) in tunable.iter().zip(&result.strengths) {
        line.elements[i].strength = k;
    }
    let env = envelope(&line, &incoming, 0.25).unwrap();
    println!("{}", env.to_csv());
}
