use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;

use super::ledger::CostLedger;
use crate::error::{Result, SfaError};

/// Updates between automatic full re-aggregation passes.
pub const REAGGREGATE_EVERY: u64 = 1_000_000;

const MAGIC: &[u8; 4] = b"SQT1";

/// Sampling tree over the squared entries of a vector.
///
/// Implicit complete binary tree in a flat array: node 1 is the root, node
/// `k` has children `2k` and `2k + 1`, and leaf `i` lives at `cap + i` where
/// `cap` is the length rounded up to a power of two. Leaves hold `v(i)²`;
/// the signed values are kept alongside for queries.
#[derive(Debug, Clone)]
pub struct WeightTree {
    len: usize,
    cap: usize,
    values: Vec<f64>,
    sums: Vec<f64>,
    updates_since_rebuild: u64,
    ledger: Arc<CostLedger>,
}

impl WeightTree {
    pub fn build(values: &[f64], ledger: Arc<CostLedger>) -> Result<Self> {
        if values.is_empty() {
            return Err(SfaError::InvalidInput("cannot build a sampling tree over an empty vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SfaError::InvalidInput(format!("entry {i} is not finite")));
        }
        let len = values.len();
        let cap = len.next_power_of_two();
        let mut tree = WeightTree {
            len,
            cap,
            values: values.to_vec(),
            sums: vec![0.0; 2 * cap],
            updates_since_rebuild: 0,
            ledger,
        };
        tree.ledger.read_entries(len as u64);
        tree.reaggregate();
        Ok(tree)
    }

    /// Tree with a private ledger.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::build(values, CostLedger::shared())
    }

    fn reaggregate(&mut self) {
        let cap = self.cap;
        for (i, v) in self.values.iter().enumerate() {
            self.sums[cap + i] = v * v;
        }
        for slot in &mut self.sums[cap + self.len..] {
            *slot = 0.0;
        }
        for k in (1..cap).rev() {
            self.sums[k] = self.sums[2 * k] + self.sums[2 * k + 1];
        }
        self.updates_since_rebuild = 0;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn depth(&self) -> u32 {
        self.cap.trailing_zeros()
    }

    pub fn ledger(&self) -> &Arc<CostLedger> {
        &self.ledger
    }

    pub(crate) fn set_ledger(&mut self, ledger: Arc<CostLedger>) {
        self.ledger = ledger;
    }

    /// `‖v‖²`, read off the root.
    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.sums[1]
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.sums[1].sqrt()
    }

    #[inline]
    pub fn query(&self, i: usize) -> f64 {
        self.ledger.read_entries(1);
        self.values[i]
    }

    pub fn try_query(&self, i: usize) -> Result<f64> {
        if i >= self.len {
            return Err(SfaError::IndexError { index: i, len: self.len });
        }
        Ok(self.query(i))
    }

    /// Signed entries without touching the ledger (serialization, tests).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn update(&mut self, i: usize, value: f64) -> Result<()> {
        if i >= self.len {
            return Err(SfaError::IndexError { index: i, len: self.len });
        }
        if !value.is_finite() {
            return Err(SfaError::InvalidInput(format!("update value {value} is not finite")));
        }
        self.values[i] = value;
        let mut node = self.cap + i;
        self.sums[node] = value * value;
        let mut touched = 1u64;
        while node > 1 {
            node /= 2;
            self.sums[node] = self.sums[2 * node] + self.sums[2 * node + 1];
            touched += 1;
        }
        self.ledger.touch_nodes(touched);
        self.updates_since_rebuild += 1;
        if self.updates_since_rebuild >= REAGGREGATE_EVERY {
            self.reaggregate();
        }
        Ok(())
    }

    /// Draws `i` with probability `v(i)² / ‖v‖²` by one root-to-leaf descent.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let total = self.sums[1];
        if !(total > 0.0) {
            return Err(SfaError::DegenerateDistribution);
        }
        let mut u = rng.random::<f64>() * total;
        let mut node = 1usize;
        let mut touched = 1u64;
        while node < self.cap {
            let left = 2 * node;
            let lw = self.sums[left];
            let rw = self.sums[left + 1];
            touched += 2;
            // Rounding can push u past the left mass into an empty right
            // subtree (or vice versa); never descend into zero weight.
            if (u < lw && lw > 0.0) || rw <= 0.0 {
                node = left;
            } else {
                u -= lw;
                node = left + 1;
            }
        }
        self.ledger.touch_nodes(touched);
        self.ledger.draw(1);
        Ok(node - self.cap)
    }

    /// `D_v` as an explicit probability vector (linear cost; tests and oracles).
    pub fn distribution(&self) -> Vec<f64> {
        let total = self.sums[1];
        self.values.iter().map(|v| v * v / total).collect()
    }

    /// Checks the parent-sum invariant within a relative tolerance.
    pub fn check_invariants(&self, rel_tol: f64) -> std::result::Result<(), String> {
        for k in 1..self.cap {
            let expect = self.sums[2 * k] + self.sums[2 * k + 1];
            let scale = expect.abs().max(self.sums[k].abs()).max(f64::MIN_POSITIVE);
            if (self.sums[k] - expect).abs() > rel_tol * scale {
                return Err(format!("node {k}: {} != {} + {}", self.sums[k], self.sums[2 * k], self.sums[2 * k + 1]));
            }
        }
        for (i, v) in self.values.iter().enumerate() {
            let leaf = self.sums[self.cap + i];
            if (leaf - v * v).abs() > rel_tol * leaf.max(v * v).max(f64::MIN_POSITIVE) {
                return Err(format!("leaf {i}: {leaf} != {v}²"));
            }
        }
        Ok(())
    }

    /// Little-endian `SQT1` encoding: magic, u64 length, f64 entries.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.len as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, ledger: Arc<CostLedger>) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SfaError::Format(format!("expected magic SQT1, found {magic:?}")));
        }
        let len = read_u64(&mut r)? as usize;
        let values = read_f64s(&mut r, len)?;
        Self::build(&values, ledger)
    }
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    let mut out = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn build_from_pair() {
        let t = WeightTree::from_values(&[3.0, 4.0]).unwrap();
        assert_eq!(t.norm_sq(), 25.0);
        assert_eq!(t.sums[2], 9.0);
        assert_eq!(t.sums[3], 16.0);
        assert_eq!(t.norm(), 5.0);
    }

    #[test]
    fn build_point_mass() {
        let t = WeightTree::from_values(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(t.norm_sq(), 1.0);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(WeightTree::from_values(&[]), Err(SfaError::InvalidInput(_))));
    }

    #[test]
    fn root_matches_naive_sum_for_random_vector() {
        let mut r = rng::stream(3, 0);
        let v: Vec<f64> = (0..1024).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
        let naive: f64 = v.iter().map(|x| x * x).sum();
        let t = WeightTree::from_values(&v).unwrap();
        assert!((t.norm_sq() - naive).abs() <= 1e-9 * naive);
        t.check_invariants(1e-9).unwrap();
    }

    #[test]
    fn build_reads_each_entry_once() {
        let ledger = CostLedger::shared();
        let _ = WeightTree::build(&[1.0, 2.0, 3.0], Arc::clone(&ledger)).unwrap();
        assert_eq!(ledger.snapshot().entry_reads, 3);
    }

    #[test]
    fn updates_move_the_root() {
        let mut t = WeightTree::from_values(&[3.0, 4.0]).unwrap();
        t.update(1, 0.0).unwrap();
        assert_eq!(t.norm_sq(), 9.0);

        let mut t = WeightTree::from_values(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        t.update(0, 3.0).unwrap();
        assert_eq!(t.norm_sq(), 12.0);
    }

    #[test]
    fn update_out_of_range() {
        let mut t = WeightTree::from_values(&[1.0, 2.0]).unwrap();
        assert!(matches!(t.update(2, 1.0), Err(SfaError::IndexError { index: 2, len: 2 })));
    }

    #[test]
    fn update_touch_budget() {
        for n in [1usize, 2, 3, 5, 17, 1000] {
            let ledger = CostLedger::shared();
            let mut t = WeightTree::build(&vec![1.0; n], Arc::clone(&ledger)).unwrap();
            let before = ledger.snapshot();
            t.update(n - 1, 2.0).unwrap();
            let touched = (ledger.snapshot() - before).node_touches;
            let log = (n as f64).log2().ceil() as u64;
            assert!(touched <= log + 1, "n={n}: {touched} touches");
        }
    }

    #[test]
    fn random_updates_match_rebuild() {
        let mut r = rng::stream(11, 0);
        let init: Vec<f64> = (0..256).map(|_| r.random::<f64>()).collect();
        let mut t = WeightTree::from_values(&init).unwrap();
        for _ in 0..500 {
            let i = r.random_range(0..256);
            let v = r.random::<f64>() * 10.0 - 5.0;
            t.update(i, v).unwrap();
        }
        let rebuilt = WeightTree::from_values(t.values()).unwrap();
        assert!((t.norm_sq() - rebuilt.norm_sq()).abs() <= 1e-8 * rebuilt.norm_sq());
        t.check_invariants(1e-9).unwrap();
    }

    #[test]
    fn zero_vector_cannot_be_sampled() {
        let t = WeightTree::from_values(&[0.0, 0.0, 0.0]).unwrap();
        let mut r = rng::stream(0, 0);
        assert!(matches!(t.sample(&mut r), Err(SfaError::DegenerateDistribution)));
    }

    #[test]
    fn point_mass_always_sampled() {
        let t = WeightTree::from_values(&[1.0, 0.0, 0.0]).unwrap();
        let mut r = rng::stream(0, 0);
        for _ in 0..1000 {
            assert_eq!(t.sample(&mut r).unwrap(), 0);
        }
    }

    #[test]
    fn two_outcome_frequencies() {
        let t = WeightTree::from_values(&[3.0, 4.0]).unwrap();
        let mut r = rng::stream(5, 0);
        let draws = 200_000;
        let ones = (0..draws).filter(|_| t.sample(&mut r).unwrap() == 1).count();
        let p = ones as f64 / draws as f64;
        // 0.64 ± 5 standard errors
        assert!((p - 0.64).abs() < 5.0 * (0.64f64 * 0.36 / draws as f64).sqrt());
    }

    #[test]
    fn sample_touch_budget_with_padding() {
        let t = WeightTree::from_values(&[1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let mut r = rng::stream(2, 0);
        let before = t.ledger().snapshot();
        for _ in 0..100 {
            assert!(t.sample(&mut r).unwrap() < 5);
        }
        let per = (t.ledger().snapshot() - before).node_touches / 100;
        assert!(per <= 2 * 3 + 2);
    }

    #[test]
    fn binary_roundtrip() {
        let t = WeightTree::from_values(&[1.5, -2.0, 0.0]).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SQT1");
        assert_eq!(buf.len(), 4 + 8 + 3 * 8);
        let back = WeightTree::read_from(&buf[..], CostLedger::shared()).unwrap();
        assert_eq!(back.values(), t.values());
        assert!(matches!(WeightTree::read_from(&b"XXXX"[..], CostLedger::shared()), Err(SfaError::Format(_))));
    }
}
