use fedtank::data::{load_idx, partition_longtail, TailPlan};
use fedtank::seeding;

fn main() {
    let train = load_idx(
        "data/mnist/train-images-idx3-ubyte".as_ref(),
        "data/mnist/train-labels-idx1-ubyte".as_ref(),
    )
    .unwrap();
    for master_seed in [42u64, 1, 7, 123] {
        let plan = TailPlan {
            n_participants: 10,
            tail_classes: [0].into_iter().collect(),
            tail_holder_fraction: 0.2,
            tail_volume_ratio: 0.1,
            seed: seeding::mix(master_seed, "partition"),
        };
        let parts = partition_longtail(&train, &plan).unwrap();
        let holders: Vec<(usize, usize)> = parts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.histogram()[0] > 0)
            .map(|(i, p)| (i, p.histogram()[0]))
            .collect();
        println!("master_seed {master_seed}: class-0 holders (id, count) = {holders:?}, sizes = {:?}",
            parts.iter().map(|p| p.len()).collect::<Vec<_>>());
    }
}
