//! Shared fixtures for the benchmarks.

use arper_core::continual::{EncodedStream, ModelShape};
use arper_core::corpus::{generate_synthetic_stream, SyntheticSpec, TaskStream};
use arper_core::Model;

pub struct Fixture {
    pub stream: TaskStream,
    pub data: EncodedStream,
    pub model: Model,
}

/// One synthetic task of `utterances` items and a model of the given width.
pub fn fixture(utterances: usize, hidden: usize) -> Fixture {
    let stream = generate_synthetic_stream(&SyntheticSpec {
        n_tasks: 1,
        utterances_per_task: utterances,
        ..SyntheticSpec::default()
    })
    .expect("synthetic stream");
    let data = EncodedStream::new(&stream).expect("encoding");
    let shape = ModelShape {
        hidden_size: hidden,
        embed_size: hidden,
    };
    let model = Model::init(shape.config_for(&data.encoder), 0).expect("model");
    Fixture {
        stream,
        data,
        model,
    }
}
