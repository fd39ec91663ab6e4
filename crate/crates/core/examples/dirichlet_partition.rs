//! Class histograms per client under IID and Dirichlet partitions.

use otafl::data::{make_synthetic_classification, partition, PartitionKind, PartitionSpec};
use otafl::rng::seeded;

fn main() -> otafl::Result<()> {
    let data = make_synthetic_classification(600, 5, 3, 2.0, &mut seeded(1))?;
    for kind in [PartitionKind::Iid, PartitionKind::Dirichlet(0.3)] {
        println!("{kind:?}");
        let clients = partition(&data, &PartitionSpec { kind, n_clients: 6 }, &mut seeded(2))?;
        for c in &clients {
            println!("  client {}: {:?}", c.client_id, c.data.class_counts());
        }
    }
    Ok(())
}
