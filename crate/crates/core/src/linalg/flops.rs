use std::ops::AddAssign;

/// Floating-point operation tally.
///
/// Kernels add their analytic operation counts here as they run. A counter is
/// only ever incremented inside one timing scope; call [`FlopCounter::reset`]
/// or [`FlopCounter::take`] at scope boundaries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FlopCounter {
    pub adds: u64,
    pub muls: u64,
    pub divs: u64,
    pub sqrts: u64,
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, n: usize) {
        self.adds += n as u64;
    }

    #[inline]
    pub fn mul(&mut self, n: usize) {
        self.muls += n as u64;
    }

    #[inline]
    pub fn div(&mut self, n: usize) {
        self.divs += n as u64;
    }

    #[inline]
    pub fn sqrt(&mut self, n: usize) {
        self.sqrts += n as u64;
    }

    /// `n` fused multiply-add pairs (one add and one mul each).
    #[inline]
    pub fn madd(&mut self, n: usize) {
        self.adds += n as u64;
        self.muls += n as u64;
    }

    pub fn total(&self) -> u64 {
        self.adds + self.muls + self.divs + self.sqrts
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Returns the current tally and resets the counter.
    pub fn take(&mut self) -> FlopCounter {
        std::mem::take(self)
    }
}

impl AddAssign for FlopCounter {
    fn add_assign(&mut self, rhs: Self) {
        self.adds += rhs.adds;
        self.muls += rhs.muls;
        self.divs += rhs.divs;
        self.sqrts += rhs.sqrts;
    }
}

impl std::ops::Add for FlopCounter {
    type Output = FlopCounter;

    fn add(mut self, rhs: Self) -> Self::Output {
        self += rhs;
        self
    }
}
