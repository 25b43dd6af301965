//! Per-path random streams.
//!
//! Every path owns a ChaCha8 stream keyed by `(master_seed, path_index)`:
//! the master seed selects the key and the path index selects the stream.
//! Streams are counter based, so a path's draws do not depend on how many
//! other paths exist or which thread simulates them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

/// The stream for `path` under `master_seed`.
pub fn path_rng(master_seed: u64, path: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path);
    rng
}

/// Uniform draw on the open interval `(0, 1)`.
pub fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(path_rng(7, 3), |r, _| Some(r.gen())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(path_rng(7, 3), |r, _| Some(r.gen())).collect();
        let c: Vec<u64> = (0..4).map(|_| 0).scan(path_rng(7, 4), |r, _| Some(r.gen())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
