//! Vectorizable inner loop of the mixture log-likelihood.
//!
//! `exp_neg` is a branch-free exponential for non-positive arguments
//! (Cody-Waite reduction, degree-13 Taylor polynomial) accurate to a few
//! ulp. Written this way the per-record loop auto-vectorizes; on x86_64 an
//! AVX2/FMA copy is selected at runtime.

const LOG2_E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
// 1.5 * 2^52: adding it rounds to an integer held in the low mantissa bits
const ROUNDING: f64 = 6_755_399_441_055_744.0;
const UNDERFLOW: f64 = -708.0;

/// Records processed per kernel call.
pub(crate) const BLOCK: usize = 256;

#[inline(always)]
fn madd<const FMA: bool>(a: f64, b: f64, c: f64) -> f64 {
    if FMA {
        a.mul_add(b, c)
    } else {
        a * b + c
    }
}

/// `exp(x)` for `x <= 0`; zero below the normal range.
#[inline(always)]
pub(crate) fn exp_neg_with<const FMA: bool>(x: f64) -> f64 {
    let xc = x.max(UNDERFLOW);
    let shifted = madd::<FMA>(xc, LOG2_E, ROUNDING);
    let k = shifted - ROUNDING;
    let r = madd::<FMA>(-k, LN2_LO, madd::<FMA>(-k, LN2_HI, xc));
    // Estrin evaluation of sum_{i<=13} r^i / i!
    let r2 = r * r;
    let r4 = r2 * r2;
    let r8 = r4 * r4;
    let p01 = madd::<FMA>(r, 1.0, 1.0);
    let p23 = madd::<FMA>(r, 1.0 / 6.0, 0.5);
    let p45 = madd::<FMA>(r, 1.0 / 120.0, 1.0 / 24.0);
    let p67 = madd::<FMA>(r, 1.0 / 5_040.0, 1.0 / 720.0);
    let p89 = madd::<FMA>(r, 1.0 / 362_880.0, 1.0 / 40_320.0);
    let p1011 = madd::<FMA>(r, 1.0 / 39_916_800.0, 1.0 / 3_628_800.0);
    let p1213 = madd::<FMA>(r, 1.0 / 6_227_020_800.0, 1.0 / 479_001_600.0);
    let q0 = madd::<FMA>(p23, r2, p01);
    let q1 = madd::<FMA>(p67, r2, p45);
    let q2 = madd::<FMA>(p1011, r2, p89);
    let s0 = madd::<FMA>(q1, r4, q0);
    let s1 = madd::<FMA>(p1213, r4, q2);
    let p = madd::<FMA>(s1, r8, s0);
    // low bits of `shifted` hold k in two's complement
    let k_bits = shifted.to_bits().wrapping_add(1023) << 52;
    let v = p * f64::from_bits(k_bits);
    if x < UNDERFLOW {
        0.0
    } else {
        v
    }
}

#[cfg(test)]
fn exp_neg(x: f64) -> f64 {
    exp_neg_with::<false>(x)
}

/// Terms of one block: `g_j = base(j) + sum_r c_r(j) exp(-shifted_r tau_j)`
/// where `c(j) = c2 + e_j (c1 - c2)` and `e_j` is 1 for exit-1 records.
pub(crate) struct BlockTerms<'a> {
    pub shifted: &'a [f64],
    pub c1: &'a [f64],
    pub c2: &'a [f64],
    pub base1: f64,
    pub base2: f64,
}

#[inline(always)]
fn block_generic<const FMA: bool>(terms: &BlockTerms<'_>, tau: &[f64], exit1: &[f64], g: &mut [f64]) {
    let n = tau.len().min(exit1.len()).min(g.len());
    let (tau, exit1, g) = (&tau[..n], &exit1[..n], &mut g[..n]);
    let db = terms.base1 - terms.base2;
    for j in 0..n {
        g[j] = madd::<FMA>(exit1[j], db, terms.base2);
    }
    for ((&s, &c1), &c2) in terms.shifted.iter().zip(terms.c1).zip(terms.c2) {
        let dc = c1 - c2;
        for j in 0..n {
            let c = madd::<FMA>(exit1[j], dc, c2);
            g[j] = madd::<FMA>(c, exp_neg_with::<FMA>(-s * tau[j]), g[j]);
        }
    }
}

const MANTISSA_BITS: u64 = (1 << 52) - 1;
const ONE_BITS: u64 = 1023 << 52;
const LANES: usize = 8;

/// `sum ln(v)` for positive normal `v`: mantissas multiply in independent
/// lanes, binary exponents add up, and only the lane products take a log.
#[inline(always)]
fn ln_sum_generic(values: &[f64]) -> f64 {
    let mut acc = [1.0f64; LANES];
    let mut exponents = [0i64; LANES];
    let chunks = values.chunks_exact(LANES);
    let rest = chunks.remainder();
    for chunk in chunks {
        for l in 0..LANES {
            let bits = chunk[l].to_bits();
            exponents[l] += (bits >> 52) as i64;
            acc[l] *= f64::from_bits((bits & MANTISSA_BITS) | ONE_BITS);
        }
    }
    let whole = values.len() - rest.len();
    let mut total: f64 = rest.iter().map(|v| v.ln()).sum();
    total += acc.iter().map(|a| a.ln()).sum::<f64>();
    let e: i64 = exponents.iter().sum::<i64>() - 1023 * whole as i64;
    total + e as f64 * std::f64::consts::LN_2
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn block_avx2(terms: &BlockTerms<'_>, tau: &[f64], exit1: &[f64], g: &mut [f64]) {
    block_generic::<true>(terms, tau, exit1, g)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn ln_sum_avx2(values: &[f64]) -> f64 {
    ln_sum_generic(values)
}

fn has_avx2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

pub(crate) fn mixture_block(terms: &BlockTerms<'_>, tau: &[f64], exit1: &[f64], g: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if has_avx2() {
            // SAFETY: the required CPU features were detected.
            unsafe { block_avx2(terms, tau, exit1, g) };
            return;
        }
    }
    block_generic::<false>(terms, tau, exit1, g)
}

/// `sum ln(v)`, or `None` if some value is not positive and finite.
/// At most [`BLOCK`] values per call keeps the lane products in range.
pub(crate) fn ln_sum(values: &[f64]) -> Option<f64> {
    debug_assert!(values.len() <= BLOCK);
    let mut normal = true;
    for &v in values {
        if !(v > 0.0 && v.is_finite()) {
            return None;
        }
        normal &= v >= f64::MIN_POSITIVE;
    }
    if !normal {
        return Some(values.iter().map(|v| v.ln()).sum());
    }
    #[cfg(target_arch = "x86_64")]
    {
        if has_avx2() {
            // SAFETY: the required CPU features were detected.
            return Some(unsafe { ln_sum_avx2(values) });
        }
    }
    Some(ln_sum_generic(values))
}

/// Sum with independent partial accumulators.
pub(crate) fn lane_sum(values: &[f64]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let chunks = values.chunks_exact(LANES);
    let rest: f64 = chunks.remainder().iter().sum();
    for chunk in chunks {
        for l in 0..LANES {
            acc[l] += chunk[l];
        }
    }
    acc.iter().sum::<f64>() + rest
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_matches_std() {
        let mut x: f64 = 0.0;
        while x > -750.0 {
            let want = x.exp();
            let got = exp_neg(x);
            if want > 1e-300 {
                assert!(((got - want) / want).abs() < 4.0 * f64::EPSILON, "x = {x}: {got} vs {want}");
            } else {
                assert!(got <= 1e-300 + want);
            }
            x -= 0.0137;
        }
        assert_eq!(exp_neg(0.0), 1.0);
        assert_eq!(exp_neg(-800.0), 0.0);
        assert_eq!(exp_neg(f64::NEG_INFINITY), 0.0);
        let mut x: f64 = -0.003;
        while x > -700.0 {
            let (a, b) = (exp_neg_with::<true>(x), x.exp());
            assert!(((a - b) / b).abs() < 4.0 * f64::EPSILON);
            x *= 1.37;
        }
    }

    #[test]
    fn ln_sum_matches_direct() {
        let values: Vec<f64> = (0..BLOCK).map(|i| 1e-3 + (i as f64 * 0.37).sin().abs() * 50.0).collect();
        let direct: f64 = values.iter().map(|v| v.ln()).sum();
        let got = ln_sum(&values).unwrap();
        assert!((got - direct).abs() < 1e-12 * direct.abs().max(1.0));
        assert_eq!(ln_sum(&[1.0, 0.0]), None);
        assert_eq!(ln_sum(&[1.0, f64::NAN]), None);
        let tiny = [1e-310, 2.0];
        assert!((ln_sum(&tiny).unwrap() - (1e-310f64.ln() + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn block_matches_scalar() {
        let terms = BlockTerms {
            shifted: &[0.5, 3.0],
            c1: &[0.2, -0.1],
            c2: &[0.4, 0.3],
            base1: 1.1,
            base2: 0.7,
        };
        let tau: Vec<f64> = (0..300).map(|i| i as f64 * 0.05 + 0.01).collect();
        let exit1: Vec<f64> = (0..300).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let mut g = vec![0.0; 300];
        mixture_block(&terms, &tau, &exit1, &mut g);
        for j in 0..300 {
            let (b, c) = if exit1[j] == 1.0 {
                (1.1, [0.2, -0.1])
            } else {
                (0.7, [0.4, 0.3])
            };
            let want = b + c[0] * (-0.5 * tau[j]).exp() + c[1] * (-3.0 * tau[j]).exp();
            assert!((g[j] - want).abs() < 1e-14, "{j}");
        }
    }
}
