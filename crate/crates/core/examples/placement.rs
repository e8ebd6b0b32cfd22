//! Popularity-driven prefix placement in one LPSG, then a cache miss that
//! makes room for a newly hot video.

use vodsim::catalog::{Catalog, PopularityEstimate, Video, VideoId, XClamp};
use vodsim::placement::{cache_on_miss, distribute_videos, CacheState};
use vodsim::topology::{build_topology, LinkTable, NodeId};

fn main() -> vodsim::Result<()> {
    let topo = build_topology(1, 3, 10, LinkTable::default())?;
    let catalog = Catalog::new((1..=8).map(|i| Video::new(VideoId(i), 100.0 + 10.0 * i as f64, 200.0)).collect::<vodsim::Result<_>>()?)?;
    let x = [0.4, 0.3, 0.25, 0.2, 0.15, 0.1, 0.08, 0.05];
    let est = PopularityEstimate::from_x((1..=8).map(VideoId).zip(x), XClamp::default())?;

    let mut cache = CacheState::new(&topo, 60.0, 100.0)?;
    let mut plan = distribute_videos(&catalog, &est, &topo, 0, &mut cache)?;
    print!("{plan}");

    let ps = NodeId::Proxy { lpsg: 0, ps: 2 };
    let video = catalog.get(VideoId(8)).unwrap();
    let out = cache_on_miss(&mut plan, &mut cache, video, 0.5, ps, &est)?;
    println!("\nmiss on {} at {ps}: pref-1 {} ({:.1} min), pref-2 {} ({:.1} min)", video.id, out.pref1_cached, out.w1_min, out.pref2_cached, out.w2_min);
    for (node, v) in &out.evicted {
        println!("  evicted {v} from {node}");
    }
    for (node, store) in cache.stores() {
        println!("{node:<8} {:6.1} / {:.0} min used", store.used_min(), store.capacity_min);
    }
    Ok(())
}
