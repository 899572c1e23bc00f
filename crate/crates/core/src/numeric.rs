//! Small numerical kernels shared by the dependence measure and the GP.

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

/// `exp(x)` for `x ≤ 0`, branch-free so loops over it vectorise. Relative
/// error stays within a few ulp; arguments below -708 flush to zero.
#[inline(always)]
pub(crate) fn exp_neg(x: f64) -> f64 {
    let xc = x.max(-708.0);
    let shifted = xc * LOG2E + ROUND_MAGIC;
    let k = shifted - ROUND_MAGIC;
    let r = (xc - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // The low mantissa bits of `shifted` hold k; only the exponent field
    // survives the shift.
    let scale = f64::from_bits(shifted.to_bits().wrapping_add(1023) << 52);
    if x < -708.0 {
        0.0
    } else {
        p * scale
    }
}

/// Number of pairs `i < j` of the sorted slice with `s[j] - s[i] ≤ v`.
fn count_within(s: &[f64], v: f64) -> usize {
    let mut count = 0;
    let mut j = 0;
    for i in 0..s.len() {
        if j < i + 1 {
            j = i + 1;
        }
        while j < s.len() && s[j] - s[i] <= v {
            j += 1;
        }
        count += j - i - 1;
    }
    count
}

/// The `k`-th smallest (0-based) pairwise absolute difference of an
/// ascending slice, found by bisection on the value and a final exact
/// selection among the few remaining candidates.
pub(crate) fn kth_pair_difference(sorted: &[f64], k: usize) -> f64 {
    let n = sorted.len();
    debug_assert!(k < n * (n - 1) / 2);
    if count_within(sorted, 0.0) > k {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = sorted[n - 1] - sorted[0];
    let mut c_lo = count_within(sorted, lo);
    let mut c_hi = n * (n - 1) / 2;
    while c_hi - c_lo > n {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let c = count_within(sorted, mid);
        if c > k {
            hi = mid;
            c_hi = c;
        } else {
            lo = mid;
            c_lo = c;
        }
    }
    let mut candidates = Vec::with_capacity(c_hi - c_lo);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sorted[j] - sorted[i];
            if d > hi {
                break;
            }
            if d > lo {
                candidates.push(d);
            }
        }
    }
    let (_, v, _) = candidates.select_nth_unstable_by(k - c_lo, f64::total_cmp);
    *v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_matches_std() {
        let mut x: f64 = 0.0;
        while x > -740.0 {
            let want = x.exp();
            let got = exp_neg(x);
            if want > 1e-300 {
                assert!(((got - want) / want).abs() < 4e-16, "{x}: {got} vs {want}");
            } else {
                assert!(got <= 1e-300);
            }
            x -= 0.0137;
        }
        assert_eq!(exp_neg(0.0), 1.0);
    }

    #[test]
    fn pair_selection_matches_sort() {
        let s = [0.0, 0.1, 0.1, 0.4, 1.0, 1.05, 3.0];
        let mut all = Vec::new();
        for i in 0..s.len() {
            for j in (i + 1)..s.len() {
                all.push(s[j] - s[i]);
            }
        }
        all.sort_by(f64::total_cmp);
        for (k, want) in all.iter().enumerate() {
            assert_eq!(kth_pair_difference(&s, k), *want);
        }
    }
}
