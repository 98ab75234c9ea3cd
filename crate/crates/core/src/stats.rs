//! Small order-statistic and moment helpers shared across modules.

/// Median of `values`, reordering the slice in place.
///
/// Even-length inputs return the midpoint `0.5 * (lo + hi)` of the two
/// central order statistics. Returns `None` for an empty slice.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    let len = values.len();
    if len == 0 {
        return None;
    }
    let mid = len / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if len % 2 == 1 {
        return Some(upper);
    }
    let lower = lower
        .iter()
        .copied()
        .max_by(f64::total_cmp)
        .expect("even length >= 2 leaves a nonempty lower half");
    Some(0.5 * (lower + upper))
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut buf = values.to_vec();
    median_in_place(&mut buf)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_and_even_medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[7.0]), Some(7.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn median_matches_full_sort() {
        let xs: Vec<f64> = (0..101)
            .map(|i| ((i * 37) % 101) as f64 * 0.5 - 3.0)
            .collect();
        for len in 1..xs.len() {
            let mut sorted = xs[..len].to_vec();
            sorted.sort_by(f64::total_cmp);
            let expected = if len % 2 == 1 {
                sorted[len / 2]
            } else {
                0.5 * (sorted[len / 2 - 1] + sorted[len / 2])
            };
            assert_eq!(median(&xs[..len]), Some(expected));
        }
    }
}
