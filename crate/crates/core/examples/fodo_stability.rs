//! Phase advance of a thin-lens FODO cell as the focal length shrinks.

use vlab_core::beam::{cell_stability, Beamline, BeamlineElement};

fn main() {
    let half = 1.0;
    println!("f [m]\ttrace\tmu [deg]");
    for f in [4.0, 2.0, 1.0, 0.75, 0.55, 0.5, 0.45] {
        let cell = Beamline::new(vec![
            BeamlineElement::thin_lens(f),
            BeamlineElement::drift(half),
            BeamlineElement::thin_lens(-f),
            BeamlineElement::drift(half),
        ]);
        let s = cell_stability(&cell).unwrap();
        match s.x.phase_advance {
            Some(mu) => println!("{f}\t{:.4}\t{:.2}", s.x.trace, mu.to_degrees()),
            None => println!("{f}\t{:.4}\tunstable", s.x.trace),
        }
    }
}
