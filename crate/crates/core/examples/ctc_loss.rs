//! CTC loss, its gradient, and the brute-force path sum it must agree with.

use rand::Rng as _;
use robust_units::ctc::{collapse, ctc_brute_force, ctc_grad, ctc_loss, min_frames};
use robust_units::quantizer::Logits;
use robust_units::signal::seeded_rng;

fn main() -> robust_units::Result<()> {
    let mut rng = seeded_rng(5);
    let classes = 4; // three units plus blank (index 3)
    let frames = 5;
    let logits = Logits {
        data: (0..frames * classes).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        classes,
    };
    for target in [vec![0], vec![0, 1], vec![1, 1], vec![2, 0, 2]] {
        let fast = ctc_loss(&logits, &target)?;
        let slow = ctc_brute_force(&logits, &target)?;
        println!("target {target:?} (needs {} frames): forward-backward {fast:.9}, paths {slow:.9}", min_frames(&target));
    }
    println!("collapse [0,0,3,0,1,1,3] -> {:?}", collapse(&[0, 0, 3, 0, 1, 1, 3], 3));

    let (loss, grad) = ctc_grad(&logits, &[0, 1])?;
    println!("loss {loss:.6}, gradient rows sum to ~0:");
    for row in grad.chunks(classes) {
        println!("  {:>8.4?}  sum {:+.1e}", row, row.iter().sum::<f64>());
    }
    match ctc_loss(&logits, &[0, 0, 0, 1]) {
        Err(e) => println!("too short: {e}"),
        Ok(l) => println!("unexpected loss {l}"),
    }
    Ok(())
}
