//! Branch-free `sin`/`cos` for the Laplace-transform kernel.
//!
//! Cody–Waite reduction by `pi/2` followed by the fdlibm minimax kernels on
//! `[-pi/4, pi/4]`. Accurate to about one ulp for `|x| <= MAX_ARG`; written
//! with bit selects so the point loop vectorizes.

use std::f64::consts::FRAC_2_PI;

pub(crate) const MAX_ARG: f64 = 1.0e5;

const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
const PIO2_HI: f64 = 1.570_796_326_734_125_614_17e+00;
const PIO2_LO: f64 = 6.077_100_506_506_192_249_32e-11;

const S1: f64 = -1.666_666_666_666_663_243_48e-01;
const S2: f64 = 8.333_333_333_322_489_461_24e-03;
const S3: f64 = -1.984_126_982_985_794_931_34e-04;
const S4: f64 = 2.755_731_370_707_006_767_89e-06;
const S5: f64 = -2.505_076_025_340_686_341_95e-08;
const S6: f64 = 1.589_690_995_211_550_102_21e-10;

const C1: f64 = 4.166_666_666_666_660_190_37e-02;
const C2: f64 = -1.388_888_888_887_410_957_49e-03;
const C3: f64 = 2.480_158_728_947_672_941_78e-05;
const C4: f64 = -2.755_731_435_139_066_330_35e-07;
const C5: f64 = 2.087_572_321_298_174_827_90e-09;
const C6: f64 = -1.135_964_755_778_819_482_65e-11;

/// `(sin x, cos x)` for `|x| <= MAX_ARG`.
#[inline(always)]
pub(crate) fn sin_cos(x: f64) -> (f64, f64) {
    let y = x * FRAC_2_PI + ROUND_MAGIC;
    let quadrant = y.to_bits();
    let k = y - ROUND_MAGIC;
    let r = (x - k * PIO2_HI) - k * PIO2_LO;
    let z = r * r;
    let s = r + r * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
    let c = 1.0 - 0.5 * z + z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));

    let swap = (quadrant & 1).wrapping_neg();
    let (sb, cb) = (s.to_bits(), c.to_bits());
    let sin_bits = ((sb & !swap) | (cb & swap)) ^ ((quadrant & 2) << 62);
    let cos_bits = ((cb & !swap) | (sb & swap)) ^ ((quadrant.wrapping_add(1) & 2) << 62);
    (f64::from_bits(sin_bits), f64::from_bits(cos_bits))
}
