//! 64-bit linear congruential generator (Knuth's MMIX constants).
//!
//! state ← state·6364136223846793005 + 1442695040888963407 (mod 2⁶⁴), and a uniform
//! double in [0, 1) is (state >> 11)·2⁻⁵³ taken after the update. The sequence is fully
//! determined by the seed, so corpora can be regenerated bit for bit elsewhere.

#[derive(Clone, Debug)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub const MUL: u64 = 6364136223846793005;
    pub const INC: u64 = 1442695040888963407;

    pub fn new(seed: u64) -> Self {
        Lcg64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(Self::MUL).wrapping_add(Self::INC);
        self.state
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}
