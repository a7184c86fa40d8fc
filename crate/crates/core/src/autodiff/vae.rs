use crate::error::{shape_err, Result};

/// `mu + exp(logvar / 2) ⊙ noise`.
pub fn reparameterize(mu: &[f64], logvar: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != logvar.len() || mu.len() != noise.len() {
        return Err(shape_err!(
            "reparameterize lengths {} / {} / {}",
            mu.len(),
            logvar.len(),
            noise.len()
        ));
    }
    Ok(mu
        .iter()
        .zip(logvar)
        .zip(noise)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// KL divergence of `N(mu, diag(exp(logvar)))` from the standard normal.
pub fn kl_diag_gaussian(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(shape_err!("kl lengths {} / {}", mu.len(), logvar.len()));
    }
    Ok(0.5
        * mu
            .iter()
            .zip(logvar)
            .map(|(m, lv)| lv.exp() + m * m - 1.0 - lv)
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reparameterize_cases() {
        assert_eq!(reparameterize(&[1.0, 2.0], &[0.3, -1.0], &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(reparameterize(&[1.0], &[0.0], &[0.25]).unwrap(), vec![1.25]);
        let z = reparameterize(&[1.0], &[4f64.ln()], &[0.5]).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-15);
        assert!(reparameterize(&[1.0], &[0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn kl_cases() {
        assert_eq!(kl_diag_gaussian(&[0.0; 4], &[0.0; 4]).unwrap(), 0.0);
        assert_eq!(kl_diag_gaussian(&[1.0], &[0.0]).unwrap(), 0.5);
        let v = kl_diag_gaussian(&[0.0, 0.0], &[2f64.ln(), 2f64.ln()]).unwrap();
        assert!((v - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert!((v - 0.3069).abs() < 1e-4);
    }
}
