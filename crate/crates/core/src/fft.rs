use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::scalar::{from_usize, Real, C};

/// Forward/inverse FFT pair of a fixed length. The inverse is normalized so
/// that `inverse(forward(v)) == v`.
#[derive(Clone)]
pub(crate) struct FftPair<T: Real> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    inv_len: T,
}

impl<T: Real> FftPair<T> {
    pub(crate) fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            inv_len: T::one() / from_usize::<T>(len),
        }
    }

    pub(crate) fn forward(&self, buf: &mut [C<T>]) {
        self.forward.process(buf);
    }

    pub(crate) fn inverse(&self, buf: &mut [C<T>]) {
        self.inverse.process(buf);
        for z in buf.iter_mut() {
            *z = z.scale(self.inv_len);
        }
    }
}
