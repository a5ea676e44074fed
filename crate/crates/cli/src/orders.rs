use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One order per task: task `k` leads the `k`-th order and the remaining
/// tasks follow in a seeded random order.
pub fn rotate_first(n_tasks: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_tasks)
        .map(|first| {
            let mut rest: Vec<usize> = (0..n_tasks).filter(|&t| t != first).collect();
            rest.shuffle(&mut rng);
            std::iter::once(first).chain(rest).collect()
        })
        .collect()
}
