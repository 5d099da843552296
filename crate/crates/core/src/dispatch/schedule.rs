//! Linear annealing schedules.

use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linear<R> {
    pub start: R,
    pub end: R,
    pub span: u64,
}

impl<R: Real> Linear<R> {
    pub fn new(start: R, end: R, span: u64) -> Self {
        assert!(span > 0, "schedule span must be positive");
        Self { start, end, span }
    }

    pub fn at(&self, step: u64) -> R {
        schedule(step, self.start, self.end, self.span)
    }
}

/// Linear interpolation from `start` to `end` over `span` steps, then held.
pub fn schedule<R: Real>(step: u64, start: R, end: R, span: u64) -> R {
    if step >= span {
        return end;
    }
    let f = R::of(step as f64) / R::of(span as f64);
    start + (end - start) * f
}
