//! The `oracle-check` command: the exact-enumeration property suite on
//! built-in tiny models, one pass/fail line per check.

use ndarray::{Array1, Array2};

use deepbelief::dbn::{predict_class, Dbn, DbnKind, PredictMode};
use deepbelief::numerics::RngStream;
use deepbelief::oracle::{
    all_binary_rows, exact_gradient, exact_hidden_conditional, exact_label_posterior,
    exact_log_likelihood, exact_log_z, exact_pv, free_energy_entropy_form, OracleLimits,
};
use deepbelief::rbm::{free_energy, hidden_probs, LabelBlock, RbmParameters, UnitType};

fn random_model(
    num_visible: usize,
    num_hidden: usize,
    classes: Option<usize>,
    seed: u64,
) -> RbmParameters {
    let mut rng = RngStream::derive(seed, 0);
    let mut gauss = |_: f64| rng.next_gaussian();
    let mut weights = Array2::zeros((num_visible, num_hidden));
    weights.mapv_inplace(&mut gauss);
    let mut visible_bias = Array1::zeros(num_visible);
    visible_bias.mapv_inplace(&mut gauss);
    let mut hidden_bias = Array1::zeros(num_hidden);
    hidden_bias.mapv_inplace(&mut gauss);
    let label_block = classes.map(|c| {
        let mut w = Array2::zeros((c, num_hidden));
        w.mapv_inplace(&mut gauss);
        let mut b = Array1::zeros(c);
        b.mapv_inplace(&mut gauss);
        LabelBlock {
            weights: w,
            biases: b,
        }
    });
    RbmParameters {
        weights,
        visible_bias,
        hidden_bias,
        visible_type: UnitType::Binary,
        hidden_type: UnitType::Binary,
        label_block,
    }
}

/// Runs every check, printing one line each; returns the failure count.
pub fn run_suite() -> usize {
    let limits = OracleLimits::default();
    let mut failures = 0;
    let mut check = |name: &str, pass: bool| {
        println!("{} {name}", if pass { "ok  " } else { "FAIL" });
        failures += usize::from(!pass);
    };

    let mut normalization = true;
    let mut identity_17_18 = true;
    let mut pv_vs_free_energy = true;
    let mut conditional = true;
    for seed in 0..20u64 {
        let nv = 2 + (seed as usize) % 5;
        let nh = 2 + (seed as usize) / 5 % 4;
        let model = random_model(nv, nh, None, 7000 + seed);
        let states = all_binary_rows(nv);
        let log_z = exact_log_z(&model, limits).unwrap();
        let total: f64 = states
            .rows()
            .into_iter()
            .map(|v| exact_pv(&model, &v.to_owned(), limits).unwrap())
            .sum();
        normalization &= (total - 1.0).abs() <= 1e-9;

        let direct = free_energy(&model, &states, None).unwrap();
        let entropy_form = free_energy_entropy_form(&model, &states).unwrap();
        identity_17_18 &= direct
            .iter()
            .zip(entropy_form.iter())
            .all(|(a, b)| (a - b).abs() <= 1e-10 * (1.0 + a.abs()));

        pv_vs_free_energy &= states.rows().into_iter().enumerate().all(|(r, v)| {
            let pv = exact_pv(&model, &v.to_owned(), limits).unwrap();
            (pv - (-direct[r] - log_z).exp()).abs() <= 1e-9
        });

        let fast = hidden_probs(&model, &states, None).unwrap();
        conditional &= states.rows().into_iter().enumerate().all(|(r, v)| {
            let slow = exact_hidden_conditional(&model, &v.to_owned(), limits).unwrap();
            (0..nh).all(|j| (fast[[r, j]] - slow[j]).abs() <= 1e-12)
        });
    }
    check(
        "marginals normalize: sum_v P(v) = 1 within 1e-9",
        normalization,
    );
    check(
        "free-energy identity: entropy form matches softplus form within 1e-10",
        identity_17_18,
    );
    check("P(v) = exp(-F(v)) / Z within 1e-9", pv_vs_free_energy);
    check(
        "hidden conditionals match enumeration within 1e-12",
        conditional,
    );

    let mut gradient_ok = true;
    for seed in 0..5u64 {
        let model = random_model(4, 3, None, 7100 + seed);
        let dataset = all_binary_rows(4);
        let grad = exact_gradient(&model, &dataset, limits).unwrap();
        let step = 1e-6;
        for i in 0..4 {
            for j in 0..3 {
                let mut plus = model.clone();
                plus.weights[[i, j]] += step;
                let mut minus = model.clone();
                minus.weights[[i, j]] -= step;
                let fd = (exact_log_likelihood(&plus, &dataset, limits).unwrap()
                    - exact_log_likelihood(&minus, &dataset, limits).unwrap())
                    / (2.0 * step);
                gradient_ok &= (fd - grad.weights[[i, j]]).abs() <= 1e-6;
            }
        }
    }
    check(
        "exact gradient matches finite differences within 1e-6",
        gradient_ok,
    );

    let mut posterior_ok = true;
    let mut prediction_ok = true;
    for seed in 0..5u64 {
        let model = random_model(5, 3, Some(3), 7200 + seed);
        let mut dbn = Dbn::new(DbnKind::Classifier);
        dbn.add_rbm(model.clone()).unwrap();
        let states = all_binary_rows(5);
        let predicted = predict_class(&dbn, &states, PredictMode::ByFreeEnergy).unwrap();
        for (r, v) in states.rows().into_iter().enumerate() {
            let posterior = exact_label_posterior(&model, &v.to_owned(), limits).unwrap();
            posterior_ok &= (posterior.sum() - 1.0).abs() <= 1e-12;
            let mut arg = 0;
            for y in 1..3 {
                if posterior[y] > posterior[arg] {
                    arg = y;
                }
            }
            prediction_ok &= predicted[r] == arg;
        }
    }
    check("label posteriors normalize within 1e-12", posterior_ok);
    check(
        "free-energy classification matches the exact posterior argmax",
        prediction_ok,
    );

    failures
}
