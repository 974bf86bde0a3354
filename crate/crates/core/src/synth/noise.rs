//! Counter-based deterministic noise. No stateful RNG in pixel loops: every
//! sample is a pure hash of (seed, channel, lattice coordinates), so parallel
//! and serial renders produce identical bytes.

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a counter tuple into [-1, 1].
pub fn hash_to_unit(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    let mut h = splitmix64(seed ^ 0x243F_6A88_85A3_08D3);
    h = splitmix64(h ^ a.wrapping_mul(0x9E37_79B9));
    h = splitmix64(h ^ b.wrapping_mul(0x85EB_CA6B));
    h = splitmix64(h ^ c.wrapping_mul(0xC2B2_AE35));
    // Top 53 bits -> [0, 1) -> [-1, 1]
    let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
    2.0 * unit - 1.0
}

/// Per-frame noise seed derived from the scene seed, so the noise channels
/// differ frame to frame but reproduce exactly given the scene seed.
pub fn frame_seed(scene_seed: u64, frame: usize) -> u64 {
    splitmix64(scene_seed ^ (frame as u64).wrapping_mul(0xA24B_AED4_963E_E407))
}

/// Smooth value noise: a hashed lattice with bilinear interpolation.
#[derive(Debug, Clone, Copy)]
pub struct ValueNoise {
    seed: u64,
    channel: u64,
    /// Lattice spacing in pixels.
    pub cell: f64,
}

impl ValueNoise {
    pub fn new(seed: u64, channel: u64, cell: f64) -> Self {
        assert!(cell > 0.0);
        Self {
            seed,
            channel,
            cell,
        }
    }

    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let gu = u / self.cell;
        let gv = v / self.cell;
        let iu = gu.floor();
        let iv = gv.floor();
        let fu = gu - iu;
        let fv = gv - iv;
        let (iu, iv) = (iu as i64 as u64, iv as i64 as u64);
        let corner = |du: u64, dv: u64| {
            hash_to_unit(
                self.seed,
                self.channel,
                iu.wrapping_add(du),
                iv.wrapping_add(dv),
            )
        };
        let v00 = corner(0, 0);
        let v10 = corner(1, 0);
        let v01 = corner(0, 1);
        let v11 = corner(1, 1);
        v00 * (1.0 - fu) * (1.0 - fv)
            + v10 * fu * (1.0 - fv)
            + v01 * (1.0 - fu) * fv
            + v11 * fu * fv
    }
}
