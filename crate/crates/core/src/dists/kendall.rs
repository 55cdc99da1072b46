use crate::error::{Error, Result};

/// Kendall's tau-b in `O(n log n)` (Knight's algorithm).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    if n < 2 {
        return Err(Error::EmptyInput);
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let pairs_in = |len: u64| len * len.saturating_sub(1) / 2;
    let total = pairs_in(n as u64);

    // Pairs tied in x, and tied in both.
    let (mut tied_x, mut tied_xy) = (0u64, 0u64);
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for i in 1..n {
        if pairs[i].0 == pairs[i - 1].0 {
            run_x += 1;
            if pairs[i].1 == pairs[i - 1].1 {
                run_xy += 1;
            } else {
                tied_xy += pairs_in(run_xy);
                run_xy = 1;
            }
        } else {
            tied_x += pairs_in(run_x);
            tied_xy += pairs_in(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    tied_x += pairs_in(run_x);
    tied_xy += pairs_in(run_xy);

    // Discordant pairs are the swaps needed to sort by y.
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut tied_y = 0u64;
    let mut run = 1u64;
    for i in 1..n {
        if ys[i] == ys[i - 1] {
            run += 1;
        } else {
            tied_y += pairs_in(run);
            run = 1;
        }
    }
    tied_y += pairs_in(run);

    let num = total as f64 - tied_x as f64 - tied_y as f64 + tied_xy as f64 - 2.0 * swaps as f64;
    let den = ((total - tied_x) as f64 * (total - tied_y) as f64).sqrt();
    if den == 0.0 {
        return Err(Error::BadSpec("Kendall's tau undefined for constant input".into()));
    }
    Ok(num / den)
}

// Bottom-up merge sort returning the number of inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if v[j] < v[i] {
                    buf[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    buf[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + end - j].copy_from_slice(&v[j..end]);
            start = end;
        }
        v.copy_from_slice(buf);
        width *= 2;
    }
    swaps
}
