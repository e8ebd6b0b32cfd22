//! Zipf request mix, a windowed popularity estimate and the prefix sizes it
//! implies for a 150 minute video.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vodsim::catalog::{estimate_popularity, prefix_sizes, LoggedRequest, VideoId, XClamp, ZipfModel};

fn main() -> vodsim::Result<()> {
    let zipf = ZipfModel::new(10, 0.73)?;
    let sampler = zipf.sampler();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let log: Vec<LoggedRequest> = (0..600)
        .map(|i| LoggedRequest { time_min: i as f64 * 0.1, video: sampler.sample(&mut rng) })
        .collect();

    let est = estimate_popularity(&log, (1..=10).map(VideoId), 60.0, 60.0, XClamp::default());
    println!("video   pmf     seen   x      w1     w2");
    for (p, (id, x)) in zipf.pmf().iter().zip(est.entries()) {
        let (w1, w2) = prefix_sizes(x, 150.0)?;
        println!("{id:>5}  {p:.3}  {:5}  {x:.3}  {w1:5.1}  {w2:5.1}", est.request_counts[&id]);
    }
    Ok(())
}
