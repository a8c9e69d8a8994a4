/// Central-difference gradient of `f` at `x`.
pub fn finite_diff<F>(f: F, x: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let coords: Vec<usize> = (0..x.len()).collect();
    finite_diff_at(f, x, eps, &coords)
}

/// Central differences restricted to the listed coordinates, in that order.
pub fn finite_diff_at<F>(mut f: F, x: &[f64], eps: f64, coords: &[usize]) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(eps > 0.0, "finite_diff step must be positive");
    let mut probe = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let hi = f(&probe);
            probe[i] = orig - eps;
            let lo = f(&probe);
            probe[i] = orig;
            (hi - lo) / (2.0 * eps)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let g = finite_diff(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-5);
        assert!((g[0] - 2.0).abs() < 1e-6);
        assert!((g[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function() {
        let g = finite_diff(|_| 3.5, &[1.0, -1.0, 9.0], 1e-5);
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn bilinear() {
        let g = finite_diff(|x| x[0] * x[1], &[3.0, -2.0], 1e-5);
        assert!((g[0] + 2.0).abs() < 1e-6);
        assert!((g[1] - 3.0).abs() < 1e-6);
    }
}
