use rayon::prelude::*;

const CHUNK: usize = 8192;

/// Sum of `f` over `xs` with a fixed chunking so the result does not depend
/// on the worker count.
pub fn det_sum<F>(xs: &[f64], f: F) -> f64
where
    F: Fn(f64) -> f64 + Sync,
{
    let partial: Vec<f64> = xs.par_chunks(CHUNK).map(|c| c.iter().map(|&x| f(x)).sum()).collect();
    partial.iter().sum()
}

/// `f` applied elementwise, in order.
pub fn det_map<F>(xs: &[f64], f: F) -> Vec<f64>
where
    F: Fn(f64) -> f64 + Sync,
{
    xs.par_iter().map(|&x| f(x)).collect()
}
