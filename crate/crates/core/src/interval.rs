//! Half-open time interval helpers shared by rasterization, label statistics and matching.

/// Length of the intersection of `[a0, a1)` and `[b0, b1)`, zero when disjoint.
#[inline]
pub fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Merges intervals into a sorted list of disjoint intervals. Touching
/// intervals (`a.1 == b.0`) are merged as well.
pub fn union(intervals: impl IntoIterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    let mut items: Vec<(f64, f64)> = intervals.into_iter().filter(|(a, b)| b > a).collect();
    items.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(items.len());
    for (start, end) in items {
        match out.last_mut() {
            Some(last) if start <= last.1 => last.1 = last.1.max(end),
            _ => out.push((start, end)),
        }
    }
    out
}

/// Total length covered by the union of the given intervals.
pub fn union_length(intervals: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    union(intervals).iter().map(|(a, b)| b - a).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_cases() {
        assert_eq!(overlap(0.0, 1.0, 2.0, 3.0), 0.0);
        assert_eq!(overlap(0.0, 1.0, 1.0, 3.0), 0.0);
        assert_eq!(overlap(0.0, 2.0, 1.0, 3.0), 1.0);
        assert_eq!(overlap(0.0, 10.0, 2.0, 3.0), 1.0);
    }

    #[test]
    fn union_merges_overlapping_and_touching() {
        let u = union(vec![(0.5, 2.0), (0.0, 1.0), (3.0, 4.0), (2.0, 2.5)]);
        assert_eq!(u, vec![(0.0, 2.5), (3.0, 4.0)]);
        assert_eq!(union_length(vec![(0.0, 1.0), (0.5, 2.0)]), 2.0);
    }

    #[test]
    fn union_drops_empty() {
        assert!(union(vec![(1.0, 1.0)]).is_empty());
    }
}
