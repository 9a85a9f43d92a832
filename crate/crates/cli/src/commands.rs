//! Implementations of the CLI subcommands.

use std::path::Path;

use ndarray::{Array2, Axis};

use deepbelief::data::{
    export_features_csv, load_csv, load_mnist_idx, load_model, save_image_grid, save_model,
    DataSplit, DataStore, NormalizeMethod,
};
use deepbelief::dbn::{
    backprop_fine_tune, generate_class, generate_data, get_feature, get_output, plot_bases,
    reconstruct_data, to_feed_forward, train_layerwise, Dbn, DbnKind, DbnOutput,
};
use deepbelief::numerics::RngStream;
use deepbelief::rbm::{hidden_probs, visible_probs, RbmParameters, UnitType};
use deepbelief::synth;

use crate::config::{DataFormat, RunConfig, SplitName};
use crate::CliError;

/// Stream ids under the master seed, one block per purpose.
const STREAM_LAYER_INIT: u64 = 100;
const STREAM_LAYER_TRAIN: u64 = 200;
const STREAM_FINETUNE: u64 = 300;
const STREAM_GENERATE: u64 = 400;
const STREAM_GEN_CLASS: u64 = 500;
const STREAM_NOISE: u64 = 600;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::runtime(e.to_string())
}

/// Loads the configured dataset and applies shuffle / cut / normalize.
pub fn load_datastore(config: &RunConfig) -> Result<DataStore, CliError> {
    let data = &config.data;
    let mut store = match data.format {
        DataFormat::MnistIdx => {
            let train = load_mnist_idx(
                data.train_images.as_ref().unwrap(),
                data.train_labels.as_ref().unwrap(),
            )
            .map_err(runtime)?;
            let mut store = DataStore::from_train(train);
            if let (Some(images), Some(labels)) = (&data.test_images, &data.test_labels) {
                store = store
                    .with_test(load_mnist_idx(images, labels).map_err(runtime)?)
                    .map_err(runtime)?;
            }
            store
        }
        DataFormat::Csv => {
            let train = load_csv(
                data.train_csv.as_ref().unwrap(),
                data.label_column,
                data.has_header,
            )
            .map_err(runtime)?;
            let mut store = DataStore::from_train(train);
            if let Some(path) = &data.test_csv {
                store = store
                    .with_test(load_csv(path, data.label_column, data.has_header).map_err(runtime)?)
                    .map_err(runtime)?;
            }
            store
        }
        DataFormat::SyntheticDigits => {
            let split = |count: usize, seed: u64| -> Result<DataSplit, CliError> {
                let (pixels, labels) = synth::digit_images(count, seed);
                let features = Array2::from_shape_vec(
                    (count, 784),
                    pixels.iter().map(|&b| f64::from(b) / 255.0).collect(),
                )
                .map_err(runtime)?;
                DataSplit::new(features, Some(labels)).map_err(runtime)
            };
            let store = DataStore::from_train(split(data.synthetic_train, data.synthetic_seed)?);
            if data.synthetic_test > 0 {
                store
                    .with_test(split(
                        data.synthetic_test,
                        data.synthetic_seed.wrapping_add(1),
                    )?)
                    .map_err(runtime)?
            } else {
                store
            }
        }
    };
    if let Some(seed) = data.shuffle_seed {
        store = store.shuffle(seed);
    }
    if let Some(fraction) = data.train_fraction {
        store = store.cut(fraction).map_err(runtime)?;
    }
    if data.normalize != NormalizeMethod::None {
        store = store.normalize(data.normalize).map_err(runtime)?;
    }
    if store.train.features.ncols() != config.dbn.layer_sizes[0] {
        return Err(CliError::usage(format!(
            "data has {} features but dbn.layer_sizes starts at {}",
            store.train.features.ncols(),
            config.dbn.layer_sizes[0]
        )));
    }
    Ok(store)
}

fn class_count(config: &RunConfig, store: &DataStore) -> Result<usize, CliError> {
    if let Some(c) = config.dbn.classes {
        return Ok(c);
    }
    let labels = store.train.labels.as_ref().ok_or_else(|| {
        CliError::usage("classifier needs labeled data or an explicit dbn.classes")
    })?;
    Ok(labels.iter().max().map_or(0, |&m| m + 1).max(2))
}

/// Builds the untrained DBN described by the config. Layer 1's visible
/// bias initializes from the training data means.
pub fn build_dbn(config: &RunConfig, store: &DataStore) -> Result<Dbn, CliError> {
    let sizes = &config.dbn.layer_sizes;
    let mut dbn = Dbn::new(config.dbn.kind);
    let last = sizes.len() - 2;
    for (t, pair) in sizes.windows(2).enumerate() {
        let visible_type = if t == 0 {
            config.dbn.visible_type
        } else {
            UnitType::Probability
        };
        let classes = if t == last && config.dbn.kind == DbnKind::Classifier {
            Some(class_count(config, store)?)
        } else {
            None
        };
        let train_data = (t == 0).then_some(&store.train.features);
        let mut rng = RngStream::derive(config.master_seed, STREAM_LAYER_INIT + t as u64);
        let layer = RbmParameters::init(
            pair[0],
            pair[1],
            visible_type,
            UnitType::Binary,
            classes,
            train_data,
            &mut rng,
        )
        .map_err(runtime)?;
        dbn.add_rbm(layer).map_err(runtime)?;
    }
    Ok(dbn)
}

fn write_snapshot(config: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.output.dir).map_err(runtime)?;
    std::fs::write(
        config.output.dir.join("resolved-config.json"),
        config.snapshot(),
    )
    .map_err(runtime)
}

fn load_model_from(config: &RunConfig) -> Result<Dbn, CliError> {
    load_model(&config.model_path()).map_err(runtime)
}

fn require_test_split(store: &DataStore) -> Result<&DataSplit, CliError> {
    store
        .test
        .as_ref()
        .ok_or_else(|| CliError::usage("this command needs a test split in the data section"))
}

fn eval_rows(store: &DataStore) -> &DataSplit {
    store.test.as_ref().unwrap_or(&store.train)
}

pub fn train(config: &RunConfig) -> Result<(), CliError> {
    write_snapshot(config)?;
    let store = load_datastore(config)?;
    let mut dbn = build_dbn(config, &store)?;
    let configs: Vec<_> = (0..dbn.num_layers())
        .map(|t| {
            let seed =
                RngStream::derive(config.master_seed, STREAM_LAYER_TRAIN + t as u64).next_u64();
            config.train.to_train_config(seed)
        })
        .collect();
    let logs = train_layerwise(&mut dbn, &store, &configs).map_err(runtime)?;
    for (t, layer_logs) in logs.iter().enumerate() {
        let mut csv = String::from("epoch,recon_error,seconds\n");
        for log in layer_logs {
            csv.push_str(&format!(
                "{},{:.16e},{:.3}\n",
                log.epoch, log.recon_error, log.seconds
            ));
            let validation = log
                .validation_error
                .map_or(String::new(), |v| format!(", validation {v:.6}"));
            println!(
                "layer {} epoch {}/{}: reconstruction error {:.6}{validation} ({:.2}s)",
                t + 1,
                log.epoch,
                layer_logs.len(),
                log.recon_error,
                log.seconds
            );
        }
        std::fs::write(
            config.output.dir.join(format!("train_layer{}.csv", t + 1)),
            csv,
        )
        .map_err(runtime)?;
    }
    save_model(&dbn, &config.model_path()).map_err(runtime)?;
    println!("model written to {}", config.model_path().display());
    Ok(())
}

pub fn finetune(config: &RunConfig) -> Result<(), CliError> {
    write_snapshot(config)?;
    let store = load_datastore(config)?;
    let mut dbn = load_model_from(config)?;
    let mut net = to_feed_forward(&dbn).map_err(runtime)?;
    let backprop = deepbelief::dbn::BackpropConfig {
        epochs: config.finetune.epochs,
        batch_size: config.finetune.batch_size,
        epsilon: config.finetune.epsilon,
        momentum: config.finetune.momentum,
        seed: RngStream::derive(config.master_seed, STREAM_FINETUNE).next_u64(),
    };
    let logs = backprop_fine_tune(&mut net, &store, dbn.kind(), &backprop).map_err(runtime)?;
    let mut csv = String::from("epoch,loss,seconds\n");
    for log in &logs {
        csv.push_str(&format!(
            "{},{:.16e},{:.3}\n",
            log.epoch, log.loss, log.seconds
        ));
        println!(
            "finetune epoch {}/{}: loss {:.6} ({:.2}s)",
            log.epoch,
            logs.len(),
            log.loss,
            log.seconds
        );
    }
    std::fs::write(config.output.dir.join("finetune.csv"), csv).map_err(runtime)?;
    dbn.set_fine_tuned(net).map_err(runtime)?;
    save_model(&dbn, &config.model_path()).map_err(runtime)?;
    println!(
        "fine-tuned model written to {}",
        config.model_path().display()
    );
    Ok(())
}

pub fn eval(config: &RunConfig) -> Result<(), CliError> {
    write_snapshot(config)?;
    let store = load_datastore(config)?;
    let dbn = load_model_from(config)?;
    let split = require_test_split(&store)?;
    match dbn.kind() {
        DbnKind::Classifier => {
            let labels = split
                .labels
                .as_ref()
                .ok_or_else(|| CliError::usage("classification needs labeled test data"))?;
            let predicted = match get_output(&dbn, &split.features).map_err(runtime)? {
                DbnOutput::Labels(l) => l,
                DbnOutput::Features(_) => unreachable!("classifier output"),
            };
            let errors = predicted.iter().zip(labels).filter(|(p, t)| p != t).count();
            println!(
                "classification on {} test rows: {errors} errors",
                labels.len()
            );
            println!("{:.4}", errors as f64 / labels.len() as f64);
        }
        DbnKind::AutoEncoder => {
            let recon = match dbn.fine_tuned() {
                Some(net) => net.forward(&split.features).map_err(runtime)?,
                None => reconstruct_data(&dbn, &split.features).map_err(runtime)?,
            };
            let mse = (&split.features - &recon).mapv(|d| d * d).mean().unwrap();
            println!("reconstruction on {} test rows", split.num_rows());
            println!("{mse:.6}");
        }
    }
    Ok(())
}

pub fn features(config: &RunConfig) -> Result<(), CliError> {
    write_snapshot(config)?;
    let store = load_datastore(config)?;
    let dbn = load_model_from(config)?;
    let split = match config.features.split {
        SplitName::Test => require_test_split(&store)?,
        SplitName::Train => &store.train,
    };
    let features = match dbn.kind() {
        DbnKind::AutoEncoder => match get_output(&dbn, &split.features).map_err(runtime)? {
            DbnOutput::Features(f) => f,
            DbnOutput::Labels(_) => unreachable!("autoencoder output"),
        },
        DbnKind::Classifier => get_feature(&dbn, &split.features).map_err(runtime)?,
    };
    let path = config.output.dir.join("features.csv");
    export_features_csv(&path, &features, split.labels.as_deref()).map_err(runtime)?;
    println!(
        "{} rows x {} features written to {}",
        features.nrows(),
        features.ncols(),
        path.display()
    );
    Ok(())
}

/// Propagates top-layer visible values down through the layers below.
fn propagate_down(dbn: &Dbn, top_visible: Array2<f64>) -> Result<Array2<f64>, CliError> {
    let mut current = top_visible;
    for layer in dbn.layers().iter().rev().skip(1) {
        current = visible_probs(layer, &current).map_err(runtime)?.0;
    }
    Ok(current)
}

pub fn generate(config: &RunConfig) -> Result<(), CliError> {
    write_snapshot(config)?;
    let store = load_datastore(config)?;
    let dbn = load_model_from(config)?;
    let (width, height) = config.image_geometry()?;
    let rows = eval_rows(&store);
    let count = config.generate.count.min(rows.num_rows());
    let originals = rows
        .features
        .select(Axis(0), &(0..count).collect::<Vec<_>>());

    let mut features = originals.clone();
    for layer in &dbn.layers()[..dbn.num_layers() - 1] {
        features = hidden_probs(layer, &features, None).map_err(runtime)?;
    }
    let top = dbn.layers().last().unwrap();
    let top_hidden = hidden_probs(top, &features, None).map_err(runtime)?;
    let seed = RngStream::derive(config.master_seed, STREAM_GENERATE).next_u64();
    let generated_top =
        generate_data(top, &top_hidden, config.generate.k, seed).map_err(runtime)?;
    let generated = propagate_down(&dbn, generated_top)?;

    let originals_path = config.output.dir.join("originals.pgm");
    save_image_grid(&originals_path, &originals, width, height).map_err(runtime)?;
    let generated_path = config
        .output
        .dir
        .join(format!("generated_k{}.pgm", config.generate.k));
    save_image_grid(&generated_path, &generated, width, height).map_err(runtime)?;
    println!(
        "{count} samples generated with k={} into {}",
        config.generate.k,
        generated_path.display()
    );
    Ok(())
}

pub fn gen_class(config: &RunConfig) -> Result<(), CliError> {
    write_snapshot(config)?;
    let dbn = load_model_from(config)?;
    let (width, height) = config.image_geometry()?;
    let classes = dbn
        .num_classes()
        .ok_or_else(|| CliError::usage("gen-class needs a classifier model"))?;
    let per_class = config.gen_class.per_class.max(1);
    let mut grid = Array2::zeros((classes * per_class, config.dbn.layer_sizes[0]));
    let mut seeds = RngStream::derive(config.master_seed, STREAM_GEN_CLASS);
    for class in 0..classes {
        for i in 0..per_class {
            let sample = generate_class(&dbn, class, config.gen_class.k, seeds.next_u64())
                .map_err(runtime)?;
            grid.row_mut(class * per_class + i).assign(&sample.row(0));
        }
    }
    let path = config.output.dir.join("gen-class.pgm");
    save_image_grid(&path, &grid, width, height).map_err(runtime)?;
    println!(
        "{} class-conditional samples (k={}) written to {}",
        grid.nrows(),
        config.gen_class.k,
        path.display()
    );
    Ok(())
}

pub fn reconstruct(config: &RunConfig) -> Result<(), CliError> {
    write_snapshot(config)?;
    let store = load_datastore(config)?;
    let dbn = load_model_from(config)?;
    let (width, height) = config.image_geometry()?;
    let rows = eval_rows(&store);
    let count = config.generate.count.min(rows.num_rows());
    let originals = rows
        .features
        .select(Axis(0), &(0..count).collect::<Vec<_>>());
    let recon = reconstruct_data(&dbn, &originals).map_err(runtime)?;
    save_image_grid(
        &config.output.dir.join("originals.pgm"),
        &originals,
        width,
        height,
    )
    .map_err(runtime)?;
    let path = config.output.dir.join("reconstructed.pgm");
    save_image_grid(&path, &recon, width, height).map_err(runtime)?;
    let mse = (&originals - &recon).mapv(|d| d * d).mean().unwrap();
    println!(
        "{count} rows reconstructed into {} (mse {mse:.6})",
        path.display()
    );
    Ok(())
}

pub fn denoise(config: &RunConfig) -> Result<(), CliError> {
    write_snapshot(config)?;
    let store = load_datastore(config)?;
    let dbn = load_model_from(config)?;
    let (width, height) = config.image_geometry()?;
    let rows = eval_rows(&store);
    let count = config.denoise.count.min(rows.num_rows());
    let clean = rows
        .features
        .select(Axis(0), &(0..count).collect::<Vec<_>>());

    let std = config.denoise.noise_variance.sqrt();
    let mut rng = RngStream::derive(config.master_seed, STREAM_NOISE);
    let noisy = clean.mapv(|x| x + std * rng.next_gaussian());
    let denoised = reconstruct_data(&dbn, &noisy).map_err(runtime)?;

    let mut csv = String::from("index,mse_noisy,mse_denoised\n");
    let mut improved = 0usize;
    let mut total_noisy = 0.0;
    let mut total_denoised = 0.0;
    for r in 0..count {
        let mse_noisy = (&noisy.row(r) - &clean.row(r))
            .mapv(|d| d * d)
            .mean()
            .unwrap();
        let mse_denoised = (&denoised.row(r) - &clean.row(r))
            .mapv(|d| d * d)
            .mean()
            .unwrap();
        improved += usize::from(mse_denoised < mse_noisy);
        total_noisy += mse_noisy;
        total_denoised += mse_denoised;
        csv.push_str(&format!("{r},{mse_noisy:.16e},{mse_denoised:.16e}\n"));
    }
    std::fs::write(config.output.dir.join("denoise.csv"), csv).map_err(runtime)?;
    save_image_grid(&config.output.dir.join("clean.pgm"), &clean, width, height)
        .map_err(runtime)?;
    save_image_grid(&config.output.dir.join("noisy.pgm"), &noisy, width, height)
        .map_err(runtime)?;
    save_image_grid(
        &config.output.dir.join("denoised.pgm"),
        &denoised,
        width,
        height,
    )
    .map_err(runtime)?;
    println!(
        "noise variance {}: mean mse {:.6} noisy vs {:.6} denoised; improved {improved}/{count}",
        config.denoise.noise_variance,
        total_noisy / count as f64,
        total_denoised / count as f64
    );
    Ok(())
}

pub fn plot_bases_command(config: &RunConfig) -> Result<(), CliError> {
    write_snapshot(config)?;
    let dbn = load_model_from(config)?;
    let (width, height) = config.image_geometry()?;
    for t in 0..dbn.num_layers() {
        let bases = plot_bases(&dbn, t, width, height).map_err(runtime)?;
        let path = config.output.dir.join(format!("bases_layer{}.pgm", t + 1));
        save_image_grid(&path, &bases, width, height).map_err(runtime)?;
        println!(
            "layer {} bases ({} tiles) written to {}",
            t + 1,
            bases.nrows(),
            path.display()
        );
    }
    Ok(())
}

pub fn inspect(model: &Path) -> Result<(), CliError> {
    let dbn = load_model(model).map_err(runtime)?;
    println!("{}", deepbelief::data::manifest_json(&dbn));
    Ok(())
}
