use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SeqError;

/// Residues that prefix and suffix must each keep.
pub const MIN_FLANK: usize = 4;

/// Half-open middle span `[start, start + len)` on a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpanSpec {
    pub start: usize,
    pub len: usize,
}

impl SpanSpec {
    pub fn new(start: usize, len: usize) -> Self {
        Self { start, len }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    /// Flank rule: `start >= 4`, `end <= n - 4`, `len >= 1`.
    pub fn is_valid_for(&self, n: usize) -> bool {
        self.len >= 1 && self.start >= MIN_FLANK && self.end() + MIN_FLANK <= n
    }

    /// Bounds check only (no flank rule).
    pub fn fits(&self, n: usize) -> bool {
        self.end() <= n
    }
}

/// How middle lengths are drawn during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LengthPolicy {
    /// Uniform over `[1, n - 8]`.
    #[default]
    Uniform,
    Fixed { len: usize },
    /// Uniform over `[min, max]`, clipped to what the sequence allows.
    Clamped { min: usize, max: usize },
}

impl LengthPolicy {
    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<usize, SeqError> {
        let max_len = n - 2 * MIN_FLANK;
        match *self {
            LengthPolicy::Uniform => Ok(rng.random_range(1..=max_len)),
            LengthPolicy::Fixed { len } => {
                if len == 0 || len > max_len {
                    Err(SeqError::SpanOutOfRange { start: MIN_FLANK, len, n })
                } else {
                    Ok(len)
                }
            }
            LengthPolicy::Clamped { min, max } => {
                let lo = min.max(1);
                let hi = max.min(max_len);
                if lo > hi {
                    return Err(SeqError::SpanOutOfRange { start: MIN_FLANK, len: lo, n });
                }
                Ok(rng.random_range(lo..=hi))
            }
        }
    }
}

/// Draw a middle span for a sequence of length `n`. The length comes from
/// `policy`; the start is uniform over every position that keeps both flanks.
pub fn sample_span<R: Rng + ?Sized>(n: usize, rng: &mut R, policy: LengthPolicy) -> Result<SpanSpec, SeqError> {
    let min = 2 * MIN_FLANK + 1;
    if n < min {
        return Err(SeqError::TooShort { n, min });
    }
    let len = policy.draw(n, rng)?;
    let start = rng.random_range(MIN_FLANK..=n - MIN_FLANK - len);
    Ok(SpanSpec { start, len })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn n9_forces_single_span() {
        let mut rng = seeded(1);
        for _ in 0..100 {
            assert_eq!(sample_span(9, &mut rng, LengthPolicy::Uniform).unwrap(), SpanSpec::new(4, 1));
        }
    }

    #[test]
    fn too_short() {
        let mut rng = seeded(1);
        assert!(matches!(sample_span(8, &mut rng, LengthPolicy::Uniform), Err(SeqError::TooShort { n: 8, .. })));
    }

    #[test]
    fn n20_draws_respect_flanks() {
        let mut rng = seeded(2);
        for _ in 0..10_000 {
            let s = sample_span(20, &mut rng, LengthPolicy::Uniform).unwrap();
            assert!(s.start >= 4 && s.end() <= 16 && s.len >= 1);
        }
    }

    #[test]
    fn fixed_and_clamped_policies() {
        let mut rng = seeded(3);
        let s = sample_span(30, &mut rng, LengthPolicy::Fixed { len: 22 }).unwrap();
        assert_eq!(s, SpanSpec::new(4, 22));
        assert!(sample_span(30, &mut rng, LengthPolicy::Fixed { len: 23 }).is_err());
        for _ in 0..1000 {
            let s = sample_span(30, &mut rng, LengthPolicy::Clamped { min: 5, max: 100 }).unwrap();
            assert!((5..=22).contains(&s.len));
        }
    }
}
