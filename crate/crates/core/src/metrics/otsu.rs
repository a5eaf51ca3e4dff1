/// Histogram resolution over [0, 1].
pub const OTSU_BINS: usize = 256;

fn bin_of(score: f64) -> usize {
    ((score * OTSU_BINS as f64).floor() as i64).clamp(0, OTSU_BINS as i64 - 1) as usize
}

/// Otsu threshold of scores in [0, 1].
///
/// Scores fall into 256 equal bins; each boundary `k/256` (`k = 1..=255`)
/// splits them into classes `bin < k` and `bin >= k`, scored by the
/// between-class variance `ω₀ω₁(μ₀ − μ₁)²` over bin levels. The lowest
/// maximizing boundary is returned. When every score shares one bin the
/// bin's upper boundary is returned. Pixels with `score >= threshold` are
/// foreground.
pub fn otsu_threshold(scores: &[f64]) -> f64 {
    let mut hist = [0u64; OTSU_BINS];
    for &s in scores {
        hist[bin_of(s)] += 1;
    }
    let total_n: u64 = hist.iter().sum();
    let total_s: u64 = hist.iter().enumerate().map(|(b, &c)| b as u64 * c).sum();

    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best: Option<(f64, usize)> = None;
    for k in 1..OTSU_BINS {
        n0 += hist[k - 1];
        s0 += (k as u64 - 1) * hist[k - 1];
        let n1 = total_n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // ω₀ω₁(μ₀ − μ₁)² · N² = (N·S₀ − n₀·S)² / (n₀·n₁), numerator exact in i128
        let d = (total_n as i128 * s0 as i128 - n0 as i128 * total_s as i128) as f64;
        let var = d * d / (n0 as f64 * n1 as f64);
        if best.map_or(true, |(v, _)| var > v) {
            best = Some((var, k));
        }
    }
    match best {
        Some((_, k)) => k as f64 / OTSU_BINS as f64,
        None => {
            let b = hist.iter().position(|&c| c > 0).unwrap_or(0);
            (b + 1) as f64 / OTSU_BINS as f64
        }
    }
}
