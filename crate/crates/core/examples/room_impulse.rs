//! Image-source room impulse responses.

use robust_units::augment::{reverberate, simulate_rir, RoomConfig, RoomSampler};
use robust_units::signal::{seeded_rng, Signal};

fn main() -> robust_units::Result<()> {
    let room = RoomConfig {
        dims: [6.0, 4.5, 3.0],
        source: [1.5, 2.0, 1.6],
        mic: [4.2, 2.8, 1.2],
        absorption: 0.35,
        max_order: 4,
    };
    let rir = simulate_rir(&room, 16000)?;
    let images = room.image_sources();
    let peak = rir.samples().iter().enumerate().fold((0, 0.0_f64), |b, (i, v)| if v.abs() > b.1 { (i, v.abs()) } else { b });
    println!("{} image sources up to order {}", images.len(), room.max_order);
    println!("direct path {:.3} m, strongest tap {} ({:.4})", room.direct_distance(), peak.0, peak.1);
    println!("rir length {} samples ({:.0} ms)", rir.len(), 1000.0 * rir.duration_secs());

    let dry = Signal::sine(330.0, 0.5, 8000, 16000);
    let wet = reverberate(&dry, &rir)?;
    println!("reverberated {} -> {} samples", dry.len(), wet.len());

    let mut rng = seeded_rng(3);
    for _ in 0..3 {
        let r = RoomSampler::default().sample(&mut rng);
        let h = simulate_rir(&r, 16000)?;
        println!(
            "sampled room {:.1}x{:.1}x{:.1} m, absorption {:.2}: {} taps",
            r.dims[0], r.dims[1], r.dims[2], r.absorption, h.len()
        );
    }
    Ok(())
}
