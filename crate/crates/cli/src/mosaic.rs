use anyhow::Result;
use memristive_core::mosaic::{hop_histogram, memory_footprint, random_program, EnergyModel, MosaicLayout};
use memristive_core::stream;
use serde_json::json;

use crate::output::{create, write_json};
use crate::{MosaicArgs, Verdict};

pub fn mosaic(a: &MosaicArgs) -> Result<Verdict> {
    let layout = MosaicLayout::for_neurons(a.neurons, a.k)?;
    let footprint = memory_footprint(a.neurons, a.k)?;
    let graph = random_program(&layout, a.p_n, a.p_r, &mut stream(a.seed, "mosaic-program"))?;
    let stats = graph.stats();
    let n = layout.n_neurons();
    let spikes = vec![(a.rate * a.duration).round() as u64; n];
    let hist = hop_histogram(&spikes, &graph.connection_matrix(), &layout.hop_matrix())?;
    let model = EnergyModel::default();
    let energy = model.routing_energy(&hist, a.duration)?;
    model.write_report(&hist, a.duration, create(&a.out.join("energy.csv"))?)?;
    write_json(
        &a.out.join("mosaic.json"),
        &json!({
            "layout": layout,
            "device_count": layout.device_count(),
            "footprint": footprint,
            "graph": stats,
            "energy": energy,
            "energy_model": model,
            "rate_hz": a.rate,
            "duration_s": a.duration,
        }),
    )?;
    println!(
        "{} neurons on a {}x{} tile grid, {} devices (crossbar {}), density {:.3}, clustering {:.3}, {:.1} pW",
        n,
        layout.side(),
        layout.side(),
        footprint.mosaic,
        footprint.reference,
        stats.density,
        stats.clustering,
        energy.power_pw
    );
    Ok(Verdict::Pass)
}
