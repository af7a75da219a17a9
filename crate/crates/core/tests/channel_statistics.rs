//! Moment checks of the channel generator over 10^5 draws.

use fdeh_core::{sample_channel, ChannelParams};

const DRAWS: usize = 100_000;

#[test]
fn direct_link_has_unit_mean_power() {
    let params = ChannelParams::new(4, 4).unwrap();
    let mut powers = Vec::with_capacity(DRAWS);
    let mut seed = 0;
    while powers.len() < DRAWS {
        powers.extend(sample_channel(&params, seed).h.iter().map(|z| z.norm_sqr()));
        seed += 1;
    }
    let n = powers.len() as f64;
    let mean = powers.iter().sum::<f64>() / n;
    let var = powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    assert!((mean - 1.0).abs() < 0.02);
    // Exponential power: variance equals the squared mean.
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn self_interference_matches_rician_moments() {
    for (k_db, atten_db) in [(10.0, 0.0), (3.0, 20.0)] {
        let mut params = ChannelParams::new(4, 4).unwrap();
        params.rician_k_db = k_db;
        params.si_attenuation_db = atten_db;
        let k = 10f64.powf(k_db / 10.0);
        let beta = 10f64.powf(-atten_db / 10.0);
        let los = (beta * k / (k + 1.0)).sqrt();
        let scatter_power = beta / (k + 1.0);

        let mut samples = Vec::with_capacity(DRAWS);
        let mut seed = 0;
        while samples.len() < DRAWS {
            let chan = sample_channel(&params, seed);
            samples.extend(chan.h1.iter().chain(chan.h2.iter()).copied());
            seed += 1;
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<num_complex::Complex64>() / n;
        let scatter = samples.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
        let mean_se = (scatter_power / 2.0 / n).sqrt();
        assert!((mean.re - los).abs() < 3.0 * mean_se, "K={k_db}: LoS {} vs {los}", mean.re);
        assert!(mean.im.abs() < 3.0 * mean_se);
        // |x|^2 of a circular Gaussian is exponential: std equals its mean.
        assert!((scatter - scatter_power).abs() < 3.0 * scatter_power / n.sqrt(), "K={k_db}: {scatter} vs {scatter_power}");
        let k_hat = mean.norm_sqr() / scatter;
        assert!((k_hat / k - 1.0).abs() < 0.05, "K estimate {k_hat} vs {k}");
        let total_power = samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        assert!((total_power / beta - 1.0).abs() < 0.02);
    }
}
