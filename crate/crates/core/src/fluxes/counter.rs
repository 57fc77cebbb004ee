//! Per-thread flux evaluation counters.
//!
//! Counting is always on. Each thread accumulates into its own cell; a
//! [`CountGuard`] snapshots the current totals and reports the difference,
//! so nested scopes compose by subtraction. Work done on other threads is
//! carried back with [`CountGuard::take`] and [`merge`].

use std::cell::Cell;
use std::ops::{Add, AddAssign, Sub};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FluxCounter {
    pub two_point_evals: u64,
    pub one_point_evals: u64,
    pub logmean_evals: u64,
}

impl Add for FluxCounter {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        FluxCounter {
            two_point_evals: self.two_point_evals + o.two_point_evals,
            one_point_evals: self.one_point_evals + o.one_point_evals,
            logmean_evals: self.logmean_evals + o.logmean_evals,
        }
    }
}

impl AddAssign for FluxCounter {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for FluxCounter {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        FluxCounter {
            two_point_evals: self.two_point_evals - o.two_point_evals,
            one_point_evals: self.one_point_evals - o.one_point_evals,
            logmean_evals: self.logmean_evals - o.logmean_evals,
        }
    }
}

thread_local! {
    static COUNTS: Cell<FluxCounter> = const { Cell::new(FluxCounter {
        two_point_evals: 0,
        one_point_evals: 0,
        logmean_evals: 0,
    }) };
}

/// Totals recorded on the current thread since it started.
pub fn current() -> FluxCounter {
    COUNTS.with(|c| c.get())
}

#[inline]
fn bump(f: impl FnOnce(&mut FluxCounter)) {
    COUNTS.with(|c| {
        let mut v = c.get();
        f(&mut v);
        c.set(v);
    });
}

#[inline]
pub fn record_two_point(n: u64) {
    bump(|c| c.two_point_evals += n);
}

#[inline]
pub fn record_one_point(n: u64) {
    bump(|c| c.one_point_evals += n);
}

#[inline]
pub fn record_logmean(n: u64) {
    bump(|c| c.logmean_evals += n);
}

/// Adds counts gathered elsewhere (typically on a worker thread).
pub fn merge(delta: FluxCounter) {
    bump(|c| *c += delta);
}

/// Scoped counting context.
#[derive(Debug)]
pub struct CountGuard {
    start: FluxCounter,
}

pub fn count_guard() -> CountGuard {
    CountGuard { start: current() }
}

impl CountGuard {
    /// Evaluations recorded on this thread since the guard was created.
    pub fn counts(&self) -> FluxCounter {
        current() - self.start
    }

    /// Returns the delta and resets the thread totals to the snapshot, so the
    /// counts can be merged into another thread without being seen twice.
    pub fn take(self) -> FluxCounter {
        let delta = self.counts();
        COUNTS.with(|c| c.set(self.start));
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_scopes_sum() {
        let outer = count_guard();
        record_two_point(3);
        {
            let inner = count_guard();
            record_two_point(2);
            record_logmean(4);
            assert_eq!(inner.counts().two_point_evals, 2);
            assert_eq!(inner.counts().logmean_evals, 4);
        }
        record_one_point(5);
        let c = outer.counts();
        assert_eq!(c.two_point_evals, 5);
        assert_eq!(c.one_point_evals, 5);
        assert_eq!(c.logmean_evals, 4);
    }

    #[test]
    fn counts_move_between_threads() {
        let g = count_guard();
        let delta = std::thread::spawn(|| {
            let g = count_guard();
            record_two_point(7);
            g.take()
        })
        .join()
        .unwrap();
        assert_eq!(g.counts().two_point_evals, 0);
        merge(delta);
        assert_eq!(g.counts().two_point_evals, 7);
    }

    #[test]
    fn take_resets_local_totals() {
        let outer = count_guard();
        let g = count_guard();
        record_one_point(9);
        assert_eq!(g.take().one_point_evals, 9);
        assert_eq!(outer.counts(), FluxCounter::default());
    }
}
