use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for replication `index` under a run seed. Each replication gets
/// its own ChaCha stream, so replications can run in any order or in
/// parallel and still reproduce.
pub fn replication_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
