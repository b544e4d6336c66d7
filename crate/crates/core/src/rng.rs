//! Named, independent random streams.
//!
//! Every consumer of randomness derives its generator from a `(seed, purpose)`
//! pair, so adding noise never shifts the parameter initialization stream and
//! vice versa.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    GaussianNoise,
    SaltPepper,
    Testing,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::GaussianNoise => 2,
            Stream::SaltPepper => 3,
            Stream::Testing => 4,
        }
    }
}

pub fn stream(seed: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose.id());
    rng
}
