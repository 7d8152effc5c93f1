//! Compensated (Neumaier) summation.
//!
//! Campaign statistics must not depend on how work was scheduled, so every
//! reduction in the crate runs sequentially over slices in index order with a
//! compensated accumulator.  The compensation also keeps long low-weight
//! tails from being swallowed by a few dominant terms.

#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of `f(x)` over a slice, in index order.
pub fn sum_by<T>(items: &[T], mut f: impl FnMut(&T) -> f64) -> f64 {
    let mut acc = KahanSum::new();
    for it in items {
        acc.add(f(it));
    }
    acc.total()
}
