//! Counter-based random number generation.
//!
//! Every draw is a pure function of `(seed, lane_0, lane_1, ...)`, so any
//! element of any stream can be regenerated in isolation: parallel and serial
//! runs produce bit-identical output, and subsets of trajectories can be
//! re-simulated without touching the rest of the batch.
//!
//! Uniforms come from a splitmix-style absorb/finalize chain; normals are
//! produced by inverse-CDF transform (no rejection, no hidden state).

/// Domain separation tags for the different consumers of randomness.
pub mod stream {
    pub const BROWNIAN: u64 = 0x42;
    pub const JUMP_COUNT: u64 = 0x4A;
    pub const JUMP_SIZE: u64 = 0x5A;
    pub const INIT_STATE: u64 = 0x49;
    pub const WEIGHTS: u64 = 0x57;
    pub const DEVIATION: u64 = 0x44;
    pub const ITERATION: u64 = 0x4E;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const ABSORB: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// An immutable point in the counter space. `with` absorbs one more index;
/// the terminal methods finalize the state into a draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stream(u64);

impl Stream {
    #[inline]
    pub fn new(seed: u64) -> Self {
        Stream(splitmix(seed ^ GOLDEN))
    }

    #[inline]
    pub fn with(self, lane: u64) -> Self {
        Stream(splitmix(self.0 ^ lane.wrapping_mul(GOLDEN).wrapping_add(ABSORB)))
    }

    #[inline]
    pub fn bits(self) -> u64 {
        splitmix(self.0 ^ ABSORB)
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn uniform(self) -> f64 {
        // 53 high bits, offset by half an ulp so 0 and 1 are unreachable.
        ((self.bits() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal draw via inverse CDF.
    #[inline]
    pub fn normal(self) -> f64 {
        normal_inverse_cdf(self.uniform())
    }

    /// Poisson draw with the given mean, by CDF inversion of one uniform.
    pub fn poisson(self, mean: f64) -> u32 {
        debug_assert!(mean >= 0.0);
        if mean == 0.0 {
            return 0;
        }
        let u = self.uniform();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut k = 0u32;
        while u > cdf && k < 10_000_000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        k
    }
}

/// Inverse of the standard normal CDF (Acklam's rational approximation,
/// relative error below 1.2e-9 across (0, 1)).
pub fn normal_inverse_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
