//! One over-the-air aggregation: Rayleigh-faded superposition plus SαS noise.

use otafl::channel::{aggregate_detailed, measure_snr, ChannelConfig, FadingModel};
use otafl::rng::seeded;
use otafl::stable_noise::StableParams;
use otafl::ParamVector;

fn main() -> otafl::Result<()> {
    let mut rng = seeded(3);
    let cfg = ChannelConfig::noisy(FadingModel::RayleighUnitMean, StableParams::new(1.5, 0.1)?);
    let grads: Vec<ParamVector> = (0..10)
        .map(|n| (0..6).map(|i| ((n + i) as f64 * 0.7).sin()).collect())
        .collect();
    let clean: ParamVector = (0..6)
        .map(|i| grads.iter().map(|g| g[i]).sum::<f64>() / grads.len() as f64)
        .collect();
    for round in 0..3 {
        let gains = cfg.round_gains(grads.len(), &mut rng)?;
        let rx = aggregate_detailed(&grads, &gains, &cfg, &mut rng)?;
        let snr = measure_snr(&clean, rx.noise.as_ref().unwrap());
        println!("round {round}: snr {:6.2} dB, received {:?}", snr.unwrap(), &rx.gradient[..]);
    }
    Ok(())
}
