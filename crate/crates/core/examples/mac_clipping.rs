//! MAC against GNC on a gradient with two noise spikes.

use otafl::clipping::{clip_statistics, gnc_clip, mac_clip, vector_median};

fn main() -> otafl::Result<()> {
    let g = [0.12, -0.05, 0.08, 40.0, 0.02, -0.11, -25.0, 0.07];
    let c = 0.5;
    let mac = mac_clip(&g, c)?;
    let gnc = gnc_clip(&g, c)?;
    println!("median {:.3}, MAC clips {} of {}", vector_median(&g)?, clip_statistics(&g, c)?.clipped_count, g.len());
    println!("{:>8} {:>8} {:>8}", "g", "mac", "gnc");
    for ((x, m), n) in g.iter().zip(mac.iter()).zip(gnc.iter()) {
        println!("{x:8.3} {m:8.3} {n:8.3}");
    }
    Ok(())
}
