use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{SiteId, StructError};
use crate::dssp::{ss8_to_ss3, ss8_to_ss4};

/// Fixed-width histogram over `[lo, hi)`; the last bin also takes `hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self { lo, hi, counts: vec![0; bins.max(1)] }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn add(&mut self, x: f64) {
        let b = ((x - self.lo) / self.width()).floor();
        let b = if b < 0.0 { 0 } else { (b as usize).min(self.bins() - 1) };
        self.counts[b] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn fractions(&self) -> Vec<f64> {
        let t = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// `bin_start,bin_end,count,fraction`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_start,bin_end,count,fraction")?;
        let fr = self.fractions();
        for (i, (&c, f)) in self.counts.iter().zip(fr).enumerate() {
            let a = self.lo + i as f64 * self.width();
            writeln!(w, "{a},{},{c},{f}", a + self.width())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativePositions {
    pub positions: Vec<f64>,
    pub histogram: Histogram,
}

/// Map each site to `(index + 0.5) / chain_length` and bin over `[0, 1)`.
pub fn relative_positions(
    sites: &[SiteId],
    chain_lengths: &HashMap<String, usize>,
    bins: usize,
) -> Result<RelativePositions, StructError> {
    let mut histogram = Histogram::new(0.0, 1.0, bins);
    let mut positions = Vec::with_capacity(sites.len());
    for (chain, idx) in sites {
        let len = *chain_lengths.get(chain).ok_or_else(|| StructError::Invalid(format!("no length for chain {chain}")))?;
        if len == 0 {
            return Err(StructError::Invalid(format!("chain {chain} has zero length")));
        }
        if *idx >= len {
            return Err(StructError::Invalid(format!("site {idx} outside chain {chain} of length {len}")));
        }
        let p = (*idx as f64 + 0.5) / len as f64;
        histogram.add(p);
        positions.push(p);
    }
    Ok(RelativePositions { positions, histogram })
}

/// Class frequencies in the 3-class (H/E/C) and 4-class (H/E/C/-) schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsDistribution {
    pub ss3: BTreeMap<char, f64>,
    pub ss4: BTreeMap<char, f64>,
    pub residues: usize,
}

pub fn ss_distribution<S: AsRef<str>>(ss8: &[S]) -> Result<SsDistribution, StructError> {
    let mut c3: BTreeMap<char, usize> = ['H', 'E', 'C'].into_iter().map(|c| (c, 0)).collect();
    let mut c4: BTreeMap<char, usize> = ['H', 'E', 'C', '-'].into_iter().map(|c| (c, 0)).collect();
    let mut n = 0;
    for s in ss8 {
        for ch in s.as_ref().chars() {
            let three = ss8_to_ss3(ch).ok_or(StructError::Label(ch))?;
            *c3.get_mut(&three).expect("class") += 1;
            *c4.get_mut(&ss8_to_ss4(ch).unwrap_or('-')).expect("class") += 1;
            n += 1;
        }
    }
    if n == 0 {
        return Err(StructError::Invalid("no secondary-structure labels".into()));
    }
    let norm = |m: BTreeMap<char, usize>| m.into_iter().map(|(k, v)| (k, v as f64 / n as f64)).collect();
    Ok(SsDistribution { ss3: norm(c3), ss4: norm(c4), residues: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn relative_position_formula() {
        let lens: HashMap<String, usize> = [("A".to_string(), 10)].into();
        let r = relative_positions(&[("A".into(), 0)], &lens, 20).unwrap();
        assert_eq!(r.positions, vec![0.05]);
        assert_eq!(r.histogram.total(), 1);
        assert_eq!(r.histogram.counts[1], 1);
        let zero: HashMap<String, usize> = [("A".to_string(), 0)].into();
        assert!(relative_positions(&[("A".into(), 0)], &zero, 20).is_err());
        assert!(relative_positions(&[("A".into(), 10)], &lens, 20).is_err());
    }

    #[test]
    fn uniform_sites_give_flat_histogram() {
        let len = 1000;
        let lens: HashMap<String, usize> = [("A".to_string(), len)].into();
        let mut rng = seeded(3);
        let sites: Vec<SiteId> = (0..20_000).map(|_| ("A".to_string(), rng.random_range(0..len))).collect();
        let h = relative_positions(&sites, &lens, 20).unwrap().histogram;
        assert_eq!(h.total(), sites.len());
        // Each bin ~ Binomial(20000, 0.05): sd ~ 31, allow 5 sd.
        for &c in &h.counts {
            assert!((c as f64 - 1000.0).abs() < 155.0, "{c}");
        }
    }

    #[test]
    fn distribution_tables() {
        let d = ss_distribution(&["HHEE--"]).unwrap();
        for c in ['H', 'E', 'C'] {
            assert!((d.ss3[&c] - 1.0 / 3.0).abs() < 1e-12);
        }
        let d = ss_distribution(&["HGT-S-"]).unwrap();
        assert_eq!(d.ss4[&'-'], 2.0 / 6.0);
        assert_eq!(d.ss4[&'C'], 2.0 / 6.0);
        assert!((d.ss3.values().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((d.ss4.values().sum::<f64>() - 1.0).abs() < 1e-12);
        let empty: [&str; 0] = [];
        assert!(ss_distribution(&empty).is_err());
        assert!(matches!(ss_distribution(&["HQ"]), Err(StructError::Label('Q'))));
    }

    #[test]
    fn csv_rows_match_bins() {
        let mut h = Histogram::new(0.0, 1.0, 4);
        h.add(0.1);
        h.add(1.0);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(h.counts, vec![1, 0, 0, 1]);
    }
}
