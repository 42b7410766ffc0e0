/// Discounted returns and generalized advantage estimates for one
/// trajectory. The value after the last step is taken to be zero.
pub fn returns_and_gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    let n = rewards.len();
    let mut returns = vec![0.0; n];
    let mut adv = vec![0.0; n];
    let (mut ret, mut gae, mut next_value) = (0.0, 0.0, 0.0);
    for i in (0..n).rev() {
        ret = rewards[i] + gamma * ret;
        let delta = rewards[i] + gamma * next_value - values[i];
        gae = delta + gamma * lambda * gae;
        returns[i] = ret;
        adv[i] = gae;
        next_value = values[i];
    }
    (returns, adv)
}

/// Shifts to zero mean and scales to unit (population) variance. A constant
/// input is only centered.
pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v -= mean;
        if std > 1e-12 {
            *v /= std;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let (r, a) = returns_and_gae(&[1.0], &[0.0], 0.99, 0.95);
        assert_eq!((r[0], a[0]), (1.0, 1.0));
    }

    #[test]
    fn unit_gamma_lambda_gives_return_minus_value() {
        let rewards = [0.5, -0.1, -0.6, 0.5, 0.5];
        let values = [0.3, -0.2, 0.7, 0.1, 0.0];
        let (r, a) = returns_and_gae(&rewards, &values, 1.0, 1.0);
        for i in 0..5 {
            assert!((a[i] - (r[i] - values[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn three_steps_match_unrolled_recursion() {
        let (g, l): (f64, f64) = (0.99, 0.95);
        let rw = [0.5, -0.6, 0.5];
        let v = [0.2, 0.1, -0.3];
        let d2 = rw[2] - v[2];
        let d1 = rw[1] + g * v[2] - v[1];
        let d0 = rw[0] + g * v[1] - v[0];
        let expect_a = [d0 + g * l * d1 + (g * l).powi(2) * d2, d1 + g * l * d2, d2];
        let expect_r = [rw[0] + g * rw[1] + g * g * rw[2], rw[1] + g * rw[2], rw[2]];
        let (r, a) = returns_and_gae(&rw, &v, g, l);
        for i in 0..3 {
            assert!((a[i] - expect_a[i]).abs() < 1e-12);
            assert!((r[i] - expect_r[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_values_have_zero_mean_unit_variance() {
        let mut v = vec![1.0, 2.0, 3.0, 10.0];
        normalize(&mut v);
        let mean: f64 = v.iter().sum::<f64>() / 4.0;
        let var: f64 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        let mut c = vec![3.0; 5];
        normalize(&mut c);
        assert!(c.iter().all(|x| *x == 0.0));
    }
}
