//! Multi-dimensional FFT over row-major arrays, built from cached 1D plans.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

type PlanKey = (usize, bool);

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<PlanKey, Arc<dyn Fft<f64>>>)>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let (planner, plans) = &mut *guard;
    plans
        .entry((n, inverse))
        .or_insert_with(|| {
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// Unnormalized transform of `data` (row-major, `shape`) along every axis.
/// Forward uses `exp(-i k x)`, inverse uses `exp(+i k x)`.
pub(crate) fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    debug_assert_eq!(data.len(), shape.iter().product::<usize>());
    for axis in 0..shape.len() {
        fft_axis(data, shape, axis, inverse);
    }
}

fn fft_axis(data: &mut [Complex64], shape: &[usize], axis: usize, inverse: bool) {
    let n = shape[axis];
    if n <= 1 {
        return;
    }
    let fft = plan(n, inverse);
    let stride: usize = shape[axis + 1..].iter().product();
    if stride == 1 {
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(data, &mut scratch);
        return;
    }
    // Gather a block of `stride` lanes at a time so every lane is contiguous.
    let outer: usize = shape[..axis].iter().product();
    let mut block = vec![Complex64::default(); n * stride];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for o in 0..outer {
        let base = o * n * stride;
        for k in 0..n {
            for j in 0..stride {
                block[j * n + k] = data[base + k * stride + j];
            }
        }
        fft.process_with_scratch(&mut block, &mut scratch);
        for k in 0..n {
            for j in 0..stride {
                data[base + k * stride + j] = block[j * n + k];
            }
        }
    }
}
