/// The first word of every slot: `v1` in bit 0, `v2` in bit 1, the
/// transaction count in bits 2..10 and the version in bits 10..64.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StpsMeta {
    pub v1: bool,
    pub v2: bool,
    pub txncount: u8,
    pub version: u64,
}

pub const VERSION_BITS: u32 = 54;
pub const VERSION_MAX: u64 = (1 << VERSION_BITS) - 1;

impl StpsMeta {
    pub fn encode(&self) -> u64 {
        self.v1 as u64 | (self.v2 as u64) << 1 | (self.txncount as u64) << 2 | (self.version & VERSION_MAX) << 10
    }

    pub fn decode(w: u64) -> Self {
        StpsMeta { v1: w & 1 == 1, v2: w >> 1 & 1 == 1, txncount: (w >> 2) as u8, version: w >> 10 }
    }

    pub fn bits_equal(&self) -> bool {
        self.v1 == self.v2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing() {
        let m = StpsMeta { v1: true, v2: false, txncount: 3, version: 5 };
        assert_eq!(m.encode(), 1 | 3 << 2 | 5 << 10);
        assert_eq!(StpsMeta::decode(m.encode()), m);
        let top = StpsMeta { v1: true, v2: true, txncount: 255, version: VERSION_MAX };
        assert_eq!(top.encode(), u64::MAX);
        assert_eq!(StpsMeta::decode(u64::MAX), top);
    }
}
