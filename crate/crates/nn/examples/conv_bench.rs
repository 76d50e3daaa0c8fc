//! Rough timing of one 3x3 convolution layer, forward and backward.

use std::time::Instant;

use defilter_nn::{ConvOptions, Tape, Tensor};

fn main() {
    let x = Tensor::<f32>::from_fn(&[4, 16, 64, 64], |i| ((i * 31) % 17) as f32 / 17.0);
    let w = Tensor::<f32>::from_fn(&[32, 16, 3, 3], |i| ((i * 7) % 13) as f32 / 130.0);
    let iters = 20;
    let start = Instant::now();
    for _ in 0..iters {
        let tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let wv = tape.leaf(w.clone());
        let y = xv.conv2d(wv, None, ConvOptions::same(3, 1)).unwrap();
        let grads = tape.backward(y.sqr().mean_all()).unwrap();
        assert!(grads.get(wv).is_some());
    }
    println!("conv 16->32 @64x64 batch 4, fwd+bwd: {:?}/iter", start.elapsed() / iters);
}
