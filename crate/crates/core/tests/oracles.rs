//! Sampler and classifier checks against enumeration / binomial oracles.

use mndbn_core::exact::{binary_vector, exact_hidden_posterior};
use mndbn_core::math::log_sum_exp;
use mndbn_core::{Dataset, Dbn, Matrix, PenaltyConfig, Rbm, Rng, SoftmaxLayer, Split};

fn oracle_model(seed: u64) -> Rbm {
    let mut rng = Rng::new(seed);
    let mut m = Rbm::init_gaussian(3, 2, 1.0, &mut rng);
    m.visible_bias_mut()
        .iter_mut()
        .for_each(|b| *b = rng.gaussian());
    m.hidden_bias_mut()
        .iter_mut()
        .for_each(|a| *a = rng.gaussian());
    m
}

/// Exact `p(x | h)` over all visible codes, from energies alone.
fn visible_conditional(m: &Rbm, h: &[f64]) -> Vec<f64> {
    let nv = m.visible();
    let terms: Vec<f64> = (0..1usize << nv)
        .map(|xc| -m.energy(&binary_vector(xc, nv), h).unwrap())
        .collect();
    let z = log_sum_exp(&terms);
    terms.iter().map(|t| (t - z).exp()).collect()
}

fn product_bernoulli(p: &[f64], code: usize) -> f64 {
    p.iter()
        .enumerate()
        .map(|(i, &pi)| if (code >> i) & 1 == 1 { pi } else { 1.0 - pi })
        .product()
}

#[test]
fn one_step_reconstruction_matches_exact_mixture() {
    let m = oracle_model(11);
    let x0 = [1.0, 0.0, 1.0];
    let posterior = exact_hidden_posterior(&m, &x0).unwrap();
    let mut exact = vec![0.0; 8];
    for (hc, ph) in posterior.iter().enumerate() {
        let px = visible_conditional(&m, &binary_vector(hc, 2));
        for (xc, e) in exact.iter_mut().enumerate() {
            *e += ph * px[xc];
        }
    }

    let chains = 100_000;
    let mut rng = Rng::new(2024);
    let mut empirical = vec![0.0; 8];
    for _ in 0..chains {
        let s = m.gibbs_chain(&x0, 1, &mut rng).unwrap();
        for (xc, e) in empirical.iter_mut().enumerate() {
            *e += product_bernoulli(&s.x_tilde, xc) / chains as f64;
        }
    }
    let tv: f64 = 0.5
        * exact
            .iter()
            .zip(&empirical)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    assert!(tv < 0.01, "total variation {tv}");
}

#[test]
fn random_head_scores_chance_on_balanced_labels() {
    let n = 10_000;
    let mut rng = Rng::new(5);
    let images = Matrix::from_fn(n, 16, |_, _| rng.uniform());
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    let data = Dataset::new(images, labels, 4, 4, "noise", Split::Test).unwrap();

    let layer = Rbm::init_gaussian(16, 8, 1.0, &mut rng);
    let mut head = SoftmaxLayer::zeros(8, 10);
    head.w_out = Matrix::from_fn(8, 10, |_, _| rng.uniform() - 0.5);
    let d = Dbn::new(
        vec![layer],
        Some(head),
        vec![PenaltyConfig::vanilla(8, 1).unwrap()],
    )
    .unwrap();
    let eval = d.evaluate(&data).unwrap();
    assert!(
        (eval.accuracy - 0.1).abs() <= 0.02,
        "accuracy {}",
        eval.accuracy
    );
    let total: f64 = eval.confusion.as_slice().iter().sum();
    assert_eq!(total, n as f64);
    for c in 0..10 {
        let row: f64 = eval.confusion.row(c).iter().sum();
        assert_eq!(row, 1000.0);
    }
}
