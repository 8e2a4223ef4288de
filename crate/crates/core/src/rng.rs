//! Named random substreams derived from a single run seed.
//!
//! Every consumer of randomness asks for its own stream so that an ablation
//! can change, say, the neuron analysis order without disturbing the
//! manifold draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Train,
    Manifold,
    Order,
    Data,
    Shuffle,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Train => 2,
            Stream::Manifold => 3,
            Stream::Order => 4,
            Stream::Data => 5,
            Stream::Shuffle => 6,
        }
    }
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
