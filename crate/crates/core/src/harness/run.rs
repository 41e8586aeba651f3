//! Training and evaluation loops.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{subsample, Dataset, Split};
use crate::encoding::{encode_image, EncodingConfig};
use crate::error::{Error, Result};
use crate::harness::checkpoint::Checkpoint;
use crate::harness::config::{Mode, RunConfig};
use crate::harness::metrics::{EpochRecord, EvalMetrics, RunMetrics};
use crate::harness::pack::Footprint;
use crate::layers::{network_forward, Network};
use crate::learning::{accumulate_step, binary_train_step, train_step, GradientBuffer, StepOutcome};

/// Result of [`train`]: the kept weights and everything measured on the way.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub metrics: RunMetrics,
}

impl TrainOutcome {
    /// Write `best.ckpt`, `config.txt` and the metric files into `dir`.
    pub fn write_dir(&self, cfg: &RunConfig, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.best.save(&dir.join("best.ckpt"))?;
        std::fs::write(dir.join("config.txt"), cfg.to_text())?;
        self.metrics.write_dir(dir)
    }
}

/// Load the training and test splits named by the config, subsampled as configured.
pub fn load_datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let dir = cfg.resolve_data_dir()?;
    let mut train = Dataset::load_split(&dir, Split::Train)?;
    let mut test = Dataset::load_split(&dir, Split::Test)?;
    if let Some(n) = cfg.train_subset {
        train = subsample(&train, n, cfg.seed)?;
    }
    if let Some(n) = cfg.test_subset {
        test = subsample(&test, n, cfg.seed)?;
    }
    Ok((train, test))
}

fn check_geometry(net: &Network, ds: &Dataset) -> Result<()> {
    let (_, h, w) = net.input.as_maps();
    if (ds.rows, ds.cols) != (h, w) {
        return Err(Error::Shape(format!("network input is {h}x{w} but the images are {}x{}", ds.rows, ds.cols)));
    }
    if ds.labels().iter().any(|&l| usize::from(l) >= net.output_shape().len()) {
        return Err(Error::Shape("labels exceed the number of output neurons".into()));
    }
    Ok(())
}

fn worker_count() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Test-set statistics of `net`, computed over `threads` workers (0 = all cores).
pub fn evaluate(net: &Network, data: &Dataset, enc: &EncodingConfig, threads: usize) -> Result<EvalMetrics> {
    check_geometry(net, data)?;
    let threads = if threads == 0 { worker_count() } else { threads }.clamp(1, data.len().max(1));
    let chunk = data.len().div_ceil(threads).max(1);
    let run = |lo: usize, hi: usize| -> Result<EvalMetrics> {
        let mut m = EvalMetrics::new(net);
        for i in lo..hi {
            let x = encode_image(data.image(i), data.rows, data.cols, enc)?;
            m.record(&network_forward(&x, net)?, data.label(i));
        }
        Ok(m)
    };
    let parts: Vec<Result<EvalMetrics>> = if threads == 1 {
        vec![run(0, data.len())]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..data.len())
                .step_by(chunk)
                .map(|lo| {
                    let hi = (lo + chunk).min(data.len());
                    s.spawn(move || run(lo, hi))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
        })
    };
    let mut total = EvalMetrics::new(net);
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// Train per `cfg`, evaluating on `test` after every epoch and keeping the
/// weights of the best epoch (earliest on ties). With zero epochs the initial
/// weights are kept.
pub fn train(cfg: &RunConfig, train: &Dataset, test: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    let enc = EncodingConfig::new(cfg.t_max, cfg.intensity_max)?;
    let tcfg = cfg.train_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = cfg.build_network(&mut rng)?;
    check_geometry(&net, train)?;
    check_geometry(&net, test)?;
    let arch = cfg.architecture.to_string();
    let n_layers = net.layers.len();

    let mut best_net = net.clone();
    let mut best_epoch = 0;
    let mut best_eval = None;
    let mut best_acc = f64::NEG_INFINITY;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut buf = (cfg.batch_size > 1).then(|| GradientBuffer::new(&net));

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut correct = 0usize;
        let mut loss = vec![0.0; n_layers];
        for &i in &order {
            let x = encode_image(train.image(i), train.rows, train.cols, &enc)?;
            let label = train.label(i);
            let out: StepOutcome = match buf.as_mut() {
                Some(b) => {
                    let o = accumulate_step(&x, label, &net, &tcfg, b)?;
                    if b.samples() == cfg.batch_size {
                        b.commit(&mut net, &tcfg);
                    }
                    o
                }
                None if cfg.mode == Mode::Binary => binary_train_step(&x, label, &mut net, &tcfg)?,
                None => train_step(&x, label, &mut net, &tcfg)?,
            };
            correct += usize::from(out.predicted == label);
            loss.iter_mut().zip(&out.losses).for_each(|(a, b)| *a += b);
        }
        if let Some(b) = buf.as_mut() {
            if b.samples() > 0 {
                b.commit(&mut net, &tcfg);
            }
        }
        let eval = evaluate(&net, test, &enc, 0)?;
        let n = train.len().max(1) as f64;
        let rec = EpochRecord {
            epoch,
            train_accuracy: correct as f64 / n,
            test_accuracy: eval.accuracy(),
            mean_loss: loss.iter().map(|l| l / n).collect(),
        };
        log::info!(
            "epoch {epoch}/{}: train {:.4} test {:.4} ({:.1}s)",
            cfg.epochs,
            rec.train_accuracy,
            rec.test_accuracy,
            started.elapsed().as_secs_f64()
        );
        if rec.test_accuracy > best_acc {
            best_acc = rec.test_accuracy;
            best_epoch = epoch;
            best_net = net.clone();
            best_eval = Some(eval);
        }
        epochs.push(rec);
    }
    let eval = match best_eval {
        Some(e) => e,
        None => evaluate(&best_net, test, &enc, 0)?,
    };
    let footprint = (cfg.mode == Mode::Binary).then(|| Footprint::of(&best_net));
    let metrics = RunMetrics {
        seed: cfg.seed,
        architecture: arch.clone(),
        mode: cfg.mode.as_str().to_string(),
        epochs,
        best_epoch,
        eval,
        footprint,
    };
    Ok(TrainOutcome { best: Checkpoint::new(arch, best_net)?, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    /// Two classes of 8x8 images: a bright left half or a bright right half.
    pub(crate) fn halves(n: usize) -> Dataset {
        let mut pixels = Vec::with_capacity(n * 64);
        let mut labels = Vec::with_capacity(n);
        for k in 0..n {
            let label = (k % 2) as u8;
            for y in 0..8 {
                for x in 0..8 {
                    let on = (x < 4) == (label == 0);
                    let v = if on { 150 + ((x * 7 + y * 13 + k * 5) % 100) as u8 } else { 0 };
                    pixels.push(v);
                }
            }
            labels.push(label);
        }
        Dataset::new(8, 8, pixels, labels, Split::Train).unwrap()
    }

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::parse(
            "architecture = 8x8-6-2
             epochs = 3
             lambda = 20
             seed = 4
             layer.1.v_th = 2
             layer.1.init = 0, 0.4
             layer.2.v_th = 2
             layer.2.init = 0, 1
             layer.2.eta = 1",
        )
        .unwrap();
        cfg.data_dir = None;
        cfg
    }

    #[test]
    fn zero_epochs_keep_initial_weights() {
        let mut cfg = small_cfg();
        cfg.epochs = 0;
        let ds = halves(20);
        let out = train(&cfg, &ds, &ds).unwrap();
        let init = cfg.build_network(&mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
        assert_eq!(out.best.network, init);
        assert_eq!(out.metrics.best_epoch, 0);
        assert!(out.metrics.epochs.is_empty());
        assert_eq!(out.metrics.eval.samples(), 20);
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let cfg = small_cfg();
        let ds = halves(30);
        let a = train(&cfg, &ds, &ds).unwrap();
        let b = train(&cfg, &ds, &ds).unwrap();
        assert_eq!(a.best.to_bytes(), b.best.to_bytes());
        assert_eq!(a.metrics, b.metrics);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        a.write_dir(&cfg, dir_a.path()).unwrap();
        b.write_dir(&cfg, dir_b.path()).unwrap();
        for f in ["best.ckpt", "epochs.csv", "confusion.csv", "spike_counts.csv", "summary.txt"] {
            assert_eq!(
                std::fs::read(dir_a.path().join(f)).unwrap(),
                std::fs::read(dir_b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn evaluation_is_thread_count_independent() {
        let cfg = small_cfg();
        let net = cfg.build_network(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let ds = halves(25);
        let enc = EncodingConfig::default();
        let one = evaluate(&net, &ds, &enc, 1).unwrap();
        assert_eq!(one, evaluate(&net, &ds, &enc, 4).unwrap());
        assert_eq!(one.accuracy(), one.correct() as f64 / 25.0);
        let rows: Vec<u64> = (0..2).map(|c| one.class_count(c)).collect();
        assert_eq!(rows, vec![13, 12]);
    }

    #[test]
    fn stage_counts_partition_the_total() {
        let cfg = RunConfig::parse("architecture = 8x8-2C3-P2-5-2\nlayer.1.init = 0, 2\nlayer.1.v_th = 2").unwrap();
        let net = cfg.build_network(&mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let m = evaluate(&net, &halves(10), &EncodingConfig::default(), 1).unwrap();
        assert_eq!(m.stages, vec!["input", "conv1", "hidden1", "output"]);
        let sum: f64 = m.mean_emitted().iter().sum();
        assert!((sum - m.mean_total_emitted()).abs() < 1e-9);
        assert!(m.mean_total_required() <= m.mean_total_emitted());
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let cfg = RunConfig::new("28x28-10").unwrap();
        let net = cfg.build_network(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(evaluate(&net, &halves(2), &EncodingConfig::default(), 1), Err(Error::Shape(_))));
    }

    #[test]
    fn batches_and_binary_mode_run() {
        let mut cfg = small_cfg();
        cfg.batch_size = 4;
        let ds = halves(10);
        assert_eq!(train(&cfg, &ds, &ds).unwrap().metrics.epochs.len(), 3);
        cfg.batch_size = 1;
        cfg.mode = Mode::Binary;
        cfg.layers[0].alpha_init = (0.1, 0.2);
        let out = train(&cfg, &ds, &ds).unwrap();
        assert!(out.best.network.is_binary());
        assert!(out.metrics.footprint.is_some());
    }
}
