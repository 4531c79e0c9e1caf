#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use progrnet_core::{encode_bundle, BitSchedule, Bundle, ModelSpec, Tensor, WeightSet};
use progrnet_server::{serve, BundleFiles, RequestLog, RunningServer, ThrottleConfig};

pub fn loopback() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

/// Deterministic pseudo-random values in [-1, 1).
pub fn values(n: usize, seed: u64) -> Vec<f32> {
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
        })
        .collect()
}

pub fn model(dims: &[usize], seed: u64) -> (ModelSpec, WeightSet) {
    let spec = ModelSpec::mlp(dims);
    let weights = spec
        .required_tensors()
        .into_iter()
        .enumerate()
        .map(|(i, (name, shape))| {
            let n = shape.iter().product();
            (name, Tensor::new(shape, values(n, seed + i as u64)).unwrap())
        })
        .collect();
    (spec, weights)
}

/// 32 -> 256 -> 8 MLP, 8 stages of about 2.7 KB each.
pub fn bundle() -> Bundle {
    let (spec, weights) = model(&[32, 256, 8], 11);
    encode_bundle(&spec, &weights, 16, &BitSchedule::default_16()).unwrap()
}

pub fn input(seed: u64) -> Tensor {
    Tensor::vector(values(32, 1000 + seed)).unwrap()
}

pub async fn start(bundle: &Bundle, rate: u64) -> (RunningServer, RequestLog) {
    let log = RequestLog::new();
    let files = BundleFiles::from_bundle(bundle).unwrap();
    let throttle = ThrottleConfig::new(rate, Duration::from_millis(5));
    let server = serve(files, loopback(), throttle, log.clone()).await.unwrap();
    (server, log)
}

/// Lets dropped connections reach the log.
pub async fn settle() {
    tokio::time::sleep(Duration::from_millis(150)).await;
}
