use crate::error::{Error, Result};

/// Coefficient of determination pooled over output dimensions.
/// Zero variance in `actual` makes R² undefined and is reported as an error.
pub fn r_square(predicted: &[Vec<f64>], actual: &[Vec<f64>]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != actual.len() {
        return Err(Error::invalid("R² needs equal-length nonempty series"));
    }
    let p = actual[0].len();
    if predicted.iter().chain(actual).any(|v| v.len() != p) {
        return Err(Error::invalid("R² inputs have inconsistent output dimensions"));
    }
    let n = actual.len() as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for d in 0..p {
        let mean = actual.iter().map(|a| a[d]).sum::<f64>() / n;
        for (y_hat, y) in predicted.iter().zip(actual) {
            ss_res += (y[d] - y_hat[d]).powi(2);
            ss_tot += (y[d] - mean).powi(2);
        }
    }
    if ss_tot == 0.0 {
        return Err(Error::invalid("R² is undefined: actual outputs have zero variance"));
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean of logged stage costs over `window` (the whole run when `None`).
pub fn avg_economic_cost(stage_costs: &[f64], window: Option<std::ops::Range<usize>>) -> Result<f64> {
    let slice = match window {
        Some(r) if r.end <= stage_costs.len() && r.start < r.end => &stage_costs[r],
        Some(_) => return Err(Error::invalid("cost window outside the trajectory")),
        None => stage_costs,
    };
    if slice.is_empty() {
        return Err(Error::invalid("no stage costs to average"));
    }
    Ok(slice.iter().sum::<f64>() / slice.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 5.0], vec![0.0, 1.0]];
        assert_eq!(r_square(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn mean_prediction_scores_zero() {
        let a = vec![vec![1.0], vec![2.0], vec![6.0]];
        let m = vec![vec![3.0]; 3];
        assert_eq!(r_square(&m, &a).unwrap(), 0.0);
    }

    #[test]
    fn constant_actual_is_undefined() {
        let a = vec![vec![1.0]; 3];
        assert!(r_square(&a, &a).is_err());
        assert!(r_square(&[], &[]).is_err());
    }

    #[test]
    fn average_over_window() {
        let c = [1.0, 2.0, 3.0, 6.0];
        assert_eq!(avg_economic_cost(&c, None).unwrap(), 3.0);
        assert_eq!(avg_economic_cost(&c, Some(2..4)).unwrap(), 4.5);
        assert!(avg_economic_cost(&c, Some(3..9)).is_err());
    }
}
