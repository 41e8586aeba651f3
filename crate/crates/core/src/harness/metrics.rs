//! Evaluation statistics and their CSV/text renderings.
//!
//! All per-sample quantities are integers (spike times and counts), so sums
//! are exact and independent of how evaluation is split across threads.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::harness::pack::Footprint;
use crate::layers::{classify, Activations, LayerKind, Network};

/// Name of every stage counted in spike budgets: the input and each
/// non-pooling layer. Pooling only forwards conv spikes, so it is left out
/// and the stage counts partition the network's spikes.
pub fn stage_names(net: &Network) -> Vec<String> {
    let mut names = vec!["input".to_string()];
    let (mut conv, mut hidden) = (0, 0);
    let last = net.layers.len().saturating_sub(1);
    for (i, l) in net.layers.iter().enumerate() {
        match l.spec.kind {
            LayerKind::Conv { .. } => {
                conv += 1;
                names.push(format!("conv{conv}"));
            }
            LayerKind::Pool { .. } => {}
            LayerKind::Dense { .. } if i == last => names.push("output".into()),
            LayerKind::Dense { .. } => {
                hidden += 1;
                names.push(format!("hidden{hidden}"));
            }
        }
    }
    names
}

/// Raster indices (into [`Activations::rasters`]) of the counted stages.
fn stage_rasters(net: &Network) -> Vec<usize> {
    let mut idx = vec![0];
    for (i, l) in net.layers.iter().enumerate() {
        if !matches!(l.spec.kind, LayerKind::Pool { .. }) {
            idx.push(i + 1);
        }
    }
    idx
}

/// Accumulated test-set statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalMetrics {
    pub stages: Vec<String>,
    stage_idx: Vec<usize>,
    pub t_max: u32,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// Sum over samples of class `c` of each output neuron's firing time (silent = `t_max`).
    pub firing_time_sum: Vec<Vec<u64>>,
    /// Spikes emitted per stage, summed over samples of each class.
    pub emitted_sum: Vec<Vec<u64>>,
    /// Spikes emitted no later than the decision time.
    pub required_sum: Vec<Vec<u64>>,
    /// Sum of decision times (the earliest output spike; `t_max` if none).
    pub decision_sum: Vec<u64>,
}

impl EvalMetrics {
    pub fn new(net: &Network) -> Self {
        let n = net.output_shape().len();
        let stages = stage_names(net);
        let s = stages.len();
        Self {
            stages,
            stage_idx: stage_rasters(net),
            t_max: net.t_max,
            confusion: vec![vec![0; n]; n],
            firing_time_sum: vec![vec![0; n]; n],
            emitted_sum: vec![vec![0; s]; n],
            required_sum: vec![vec![0; s]; n],
            decision_sum: vec![0; n],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn record(&mut self, acts: &Activations, label: usize) {
        let out = acts.output();
        let predicted = classify(out);
        self.confusion[label][predicted] += 1;
        for (i, t) in self.firing_time_sum[label].iter_mut().enumerate() {
            *t += u64::from(out.time_or_max(i));
        }
        let decision = out.iter().flatten().min().unwrap_or(self.t_max);
        self.decision_sum[label] += u64::from(decision);
        for (s, &r) in self.stage_idx.iter().enumerate() {
            let raster = &acts.rasters[r];
            self.emitted_sum[label][s] += raster.spike_count() as u64;
            self.required_sum[label][s] += raster.spikes_until(decision) as u64;
        }
    }

    pub fn merge(&mut self, other: &EvalMetrics) {
        fn add(a: &mut [u64], b: &[u64]) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for c in 0..self.n_classes() {
            add(&mut self.confusion[c], &other.confusion[c]);
            add(&mut self.firing_time_sum[c], &other.firing_time_sum[c]);
            add(&mut self.emitted_sum[c], &other.emitted_sum[c]);
            add(&mut self.required_sum[c], &other.required_sum[c]);
        }
        add(&mut self.decision_sum, &other.decision_sum);
    }

    pub fn class_count(&self, c: usize) -> u64 {
        self.confusion[c].iter().sum()
    }

    pub fn samples(&self) -> u64 {
        (0..self.n_classes()).map(|c| self.class_count(c)).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n_classes()).map(|c| self.confusion[c][c]).sum()
    }

    /// `trace(confusion) / N`.
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct(), self.samples())
    }

    /// Mean firing time of output neuron `neuron` over samples of class `class`.
    pub fn mean_firing_time(&self, class: usize, neuron: usize) -> f64 {
        ratio(self.firing_time_sum[class][neuron], self.class_count(class))
    }

    /// Classes whose own output neuron has the smallest mean firing time
    /// among all output neurons (strictly).
    pub fn classes_with_earliest_own_neuron(&self) -> usize {
        (0..self.n_classes())
            .filter(|&c| self.class_count(c) > 0)
            .filter(|&c| {
                let own = self.firing_time_sum[c][c];
                self.firing_time_sum[c].iter().enumerate().all(|(n, &t)| n == c || own < t)
            })
            .count()
    }

    pub fn mean_decision_time(&self, class: usize) -> f64 {
        ratio(self.decision_sum[class], self.class_count(class))
    }

    /// Mean spikes per sample over the whole set, per stage.
    pub fn mean_emitted(&self) -> Vec<f64> {
        self.mean_over_classes(&self.emitted_sum)
    }

    pub fn mean_required(&self) -> Vec<f64> {
        self.mean_over_classes(&self.required_sum)
    }

    pub fn mean_total_emitted(&self) -> f64 {
        ratio(self.emitted_sum.iter().flatten().sum(), self.samples())
    }

    pub fn mean_total_required(&self) -> f64 {
        ratio(self.required_sum.iter().flatten().sum(), self.samples())
    }

    fn mean_over_classes(&self, sums: &[Vec<u64>]) -> Vec<f64> {
        (0..self.stages.len()).map(|s| ratio(sums.iter().map(|r| r[s]).sum(), self.samples())).collect()
    }

    pub fn confusion_csv(&self) -> String {
        let n = self.n_classes();
        let mut s = String::from("true\\predicted");
        (0..n).for_each(|c| {
            let _ = write!(s, ",{c}");
        });
        s.push('\n');
        for (c, row) in self.confusion.iter().enumerate() {
            let _ = write!(s, "{c}");
            row.iter().for_each(|v| {
                let _ = write!(s, ",{v}");
            });
            s.push('\n');
        }
        s
    }

    pub fn firing_times_csv(&self) -> String {
        let n = self.n_classes();
        let mut s = String::from("class,samples");
        (0..n).for_each(|j| {
            let _ = write!(s, ",neuron_{j}");
        });
        s.push('\n');
        for c in 0..n {
            let _ = write!(s, "{c},{}", self.class_count(c));
            for j in 0..n {
                let _ = write!(s, ",{:.4}", self.mean_firing_time(c, j));
            }
            s.push('\n');
        }
        s
    }

    pub fn spike_counts_csv(&self) -> String {
        let mut s = String::from("class,samples");
        for kind in ["emitted", "required"] {
            for name in &self.stages {
                let _ = write!(s, ",{name}_{kind}");
            }
            let _ = write!(s, ",total_{kind}");
        }
        s.push('\n');
        let row = |s: &mut String, label: &str, count: u64, em: Vec<u64>, rq: Vec<u64>| {
            let _ = write!(s, "{label},{count}");
            for v in [em, rq] {
                let total: u64 = v.iter().sum();
                for x in v.iter().chain(std::iter::once(&total)) {
                    let _ = write!(s, ",{:.4}", ratio(*x, count));
                }
            }
            s.push('\n');
        };
        for c in 0..self.n_classes() {
            row(&mut s, &c.to_string(), self.class_count(c), self.emitted_sum[c].clone(), self.required_sum[c].clone());
        }
        let col = |sums: &[Vec<u64>]| (0..self.stages.len()).map(|i| sums.iter().map(|r| r[i]).sum()).collect();
        row(&mut s, "all", self.samples(), col(&self.emitted_sum), col(&self.required_sum));
        s
    }

    pub fn early_decision_csv(&self) -> String {
        let mut s = String::from("class,samples,mean_decision_time,accuracy\n");
        for c in 0..self.n_classes() {
            let n = self.class_count(c);
            let _ = writeln!(s, "{c},{n},{:.4},{:.6}", self.mean_decision_time(c), ratio(self.confusion[c][c], n));
        }
        s
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// One epoch of training.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Accuracy of the online predictions made while training.
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Mean local loss per layer over the epoch.
    pub mean_loss: Vec<f64>,
}

/// Everything a training run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    pub architecture: String,
    pub mode: String,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept (0 = initial weights).
    pub best_epoch: usize,
    /// Test-set statistics of the kept weights.
    pub eval: EvalMetrics,
    pub footprint: Option<Footprint>,
}

impl RunMetrics {
    pub fn epochs_csv(&self) -> String {
        let layers = self.epochs.first().map_or(0, |e| e.mean_loss.len());
        let mut s = String::from("epoch,train_accuracy,test_accuracy");
        (1..=layers).for_each(|l| {
            let _ = write!(s, ",loss_layer{l}");
        });
        s.push('\n');
        for e in &self.epochs {
            let _ = write!(s, "{},{:.6},{:.6}", e.epoch, e.train_accuracy, e.test_accuracy);
            e.mean_loss.iter().for_each(|l| {
                let _ = write!(s, ",{l:.9e}");
            });
            s.push('\n');
        }
        s
    }

    pub fn summary(&self) -> String {
        let e = &self.eval;
        let mut s = String::new();
        let _ = writeln!(s, "architecture: {}", self.architecture);
        let _ = writeln!(s, "mode: {}", self.mode);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "epochs run: {}", self.epochs.len());
        let _ = writeln!(s, "best epoch: {}", self.best_epoch);
        let _ = writeln!(s, "test samples: {}", e.samples());
        let _ = writeln!(s, "test accuracy: {:.4}", e.accuracy());
        let _ = writeln!(
            s,
            "classes whose own output neuron fires earliest on average: {}/{}",
            e.classes_with_earliest_own_neuron(),
            e.n_classes()
        );
        let _ = writeln!(s, "mean spikes per sample (emitted / required before decision):");
        for ((name, em), rq) in e.stages.iter().zip(e.mean_emitted()).zip(e.mean_required()) {
            let _ = writeln!(s, "  {name}: {em:.2} / {rq:.2}");
        }
        let _ = writeln!(s, "  total: {:.2} / {:.2}", e.mean_total_emitted(), e.mean_total_required());
        if let Some(f) = &self.footprint {
            s.push_str(&f.report());
        }
        s
    }

    /// Write `epochs.csv`, `confusion.csv`, `firing_times.csv`,
    /// `spike_counts.csv`, `early_decision.csv`, `summary.txt` and, in binary
    /// mode, `footprint.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("epochs.csv"), self.epochs_csv())?;
        write_eval(&self.eval, dir)?;
        std::fs::write(dir.join("summary.txt"), self.summary())?;
        if let Some(f) = &self.footprint {
            std::fs::write(dir.join("footprint.txt"), f.report())?;
        }
        Ok(())
    }
}

/// Write the per-table CSV files of an evaluation into `dir`.
pub fn write_eval(e: &EvalMetrics, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("confusion.csv"), e.confusion_csv())?;
    std::fs::write(dir.join("firing_times.csv"), e.firing_times_csv())?;
    std::fs::write(dir.join("spike_counts.csv"), e.spike_counts_csv())?;
    std::fs::write(dir.join("early_decision.csv"), e.early_decision_csv())?;
    Ok(())
}
