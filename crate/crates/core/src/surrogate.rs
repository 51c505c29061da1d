//! Learned stand-in for a dispatcher. A small feed-forward network reads the
//! most recently planned jobs and predicts how long the last of them waits
//! between entering the shop and finishing, beyond its own processing time.
//! Summing predictions along a plan gives estimated completion times, so a
//! trained model can replace the real dispatcher inside the search.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Evaluator, Normalisation, ScheduleEvaluator};
use crate::model::{JobId, JobSet, ModelError, Oracle, Time, Timings};

pub const DEFAULT_WINDOW: usize = 8;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("training needs at least one sample")]
    EmptyDataset,
    #[error("input has {got} values, the model expects {expected}")]
    InputSize { got: usize, expected: usize },
    #[error("a model needs at least an input and an output layer")]
    NoLayers,
    #[error("layer {0} does not match the size of the layer before it")]
    LayerMismatch(usize),
    #[error("feature space and model disagree on the input width")]
    SpaceMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// How jobs are turned into network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub window: usize,
    pub job_types: Vec<u32>,
    pub rack_types: Vec<u32>,
    /// Divides total processing times.
    pub processing_scale: f64,
    /// Divides waiting times to give training targets.
    pub horizon: f64,
}

impl FeatureSpace {
    /// Feature space covering the types and racks of `jobs`. The horizon is
    /// the serial length of the instance.
    pub fn for_jobs(jobs: &JobSet, window: usize) -> Self {
        let types: BTreeSet<u32> = jobs.jobs().iter().map(|j| j.job_type).collect();
        let racks: BTreeSet<u32> = jobs.jobs().iter().filter_map(|j| j.rack_type).collect();
        let max_p = jobs.jobs().iter().map(|j| j.total_processing()).max().unwrap_or(1).max(1);
        let total: Time = jobs.jobs().iter().map(|j| j.total_processing()).sum();
        Self {
            window: window.max(1),
            job_types: types.into_iter().collect(),
            rack_types: racks.into_iter().collect(),
            processing_scale: max_p as f64,
            horizon: total.max(1) as f64,
        }
    }

    /// Values per window slot: a presence flag, the type one-hot, scaled
    /// processing time and the rack one-hot.
    pub fn slot_width(&self) -> usize {
        2 + self.job_types.len() + self.rack_types.len()
    }

    pub fn input_width(&self) -> usize {
        self.window * self.slot_width()
    }

    /// Input for the window ending at `plan[upto]`. Slot 0 holds that job,
    /// slot k the job planned k places before it; missing slots stay zero.
    pub fn encode(&self, jobs: &JobSet, plan: &[JobId], upto: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.input_width(), 0.0);
        let w = self.slot_width();
        for k in 0..self.window.min(upto + 1) {
            let job = jobs.job(plan[upto - k]);
            let slot = &mut out[k * w..(k + 1) * w];
            slot[0] = 1.0;
            if let Ok(t) = self.job_types.binary_search(&job.job_type) {
                slot[1 + t] = 1.0;
            }
            slot[1 + self.job_types.len()] = job.total_processing() as f64 / self.processing_scale;
            if let Some(r) = job.rack_type.and_then(|r| self.rack_types.binary_search(&r).ok()) {
                slot[2 + self.job_types.len() + r] = 1.0;
            }
        }
    }
}

/// One training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub input: Vec<f64>,
    /// Normalised waiting time of the newest job in the window.
    pub target: f64,
}

/// Waiting time of the job at plan position `pos`: completion minus the
/// earliest time it may enter the shop (its position, since jobs enter one
/// per step) minus its processing time.
fn waiting(jobs: &JobSet, timings: &Timings, job: JobId, pos: usize) -> Time {
    timings.completion[job] - pos as Time - jobs.job(job).total_processing()
}

/// One sample per job of each of `n_plans` random plans, labelled by
/// running `oracle`.
pub fn generate_dataset(
    jobs: &JobSet,
    oracle: &dyn Oracle,
    space: &FeatureSpace,
    n_plans: usize,
    seed: u64,
) -> Vec<WindowSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan: Vec<JobId> = (0..jobs.len()).collect();
    let mut out = Vec::with_capacity(n_plans * jobs.len());
    for _ in 0..n_plans {
        plan.shuffle(&mut rng);
        let t = oracle.timings(jobs, &plan);
        for (pos, &j) in plan.iter().enumerate() {
            let mut input = Vec::new();
            space.encode(jobs, &plan, pos, &mut input);
            out.push(WindowSample { input, target: waiting(jobs, &t, j, pos) as f64 / space.horizon });
        }
    }
    out
}

/// Fully connected layer, weights stored row-major (`outputs × inputs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Feed-forward network with ReLU hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForward {
    pub layers: Vec<Layer>,
}

/// Per-layer gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl FeedForward {
    /// He-initialised network with the given layer sizes (input first,
    /// output last).
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self, SurrogateError> {
        if sizes.len() < 2 {
            return Err(SurrogateError::NoLayers);
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(SurrogateError::LayerMismatch(i));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let scale = (2.0 / w[0] as f64).sqrt();
                Layer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: (0..w[0] * w[1]).map(|_| scale * standard_normal(&mut rng)).collect(),
                    biases: vec![0.0; w[1]],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Default shape for a feature space: two hidden layers of 64 and 32.
    pub fn for_space(space: &FeatureSpace, seed: u64) -> Result<Self, SurrogateError> {
        Self::new(&[space.input_width(), 64, 32, 1], seed)
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.layers.is_empty() {
            return Err(SurrogateError::NoLayers);
        }
        for (i, l) in self.layers.iter().enumerate() {
            let chained = i == 0 || self.layers[i - 1].outputs == l.inputs;
            if !chained || l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(SurrogateError::LayerMismatch(i));
            }
        }
        if self.layers[self.layers.len() - 1].outputs != 1 {
            return Err(SurrogateError::LayerMismatch(self.layers.len() - 1));
        }
        Ok(())
    }

    /// Activations of every layer, input included.
    fn forward(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let x = &acts[i];
            let y: Vec<f64> = (0..l.outputs)
                .map(|o| {
                    let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    let z = l.biases[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                    if i == last {
                        z
                    } else {
                        z.max(0.0)
                    }
                })
                .collect();
            acts.push(y);
        }
        acts
    }

    pub fn predict(&self, input: &[f64]) -> Result<f64, SurrogateError> {
        if input.len() != self.input_width() {
            return Err(SurrogateError::InputSize { got: input.len(), expected: self.input_width() });
        }
        Ok(self.predict_unchecked(input))
    }

    fn predict_unchecked(&self, input: &[f64]) -> f64 {
        self.forward(input).pop().expect("output layer")[0]
    }

    fn zero_gradients(&self) -> Gradients {
        Gradients {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    /// Mean squared error over the samples and its gradient.
    pub fn loss_and_gradients(&self, samples: &[&WindowSample]) -> (f64, Gradients) {
        let mut g = self.zero_gradients();
        let mut loss = 0.0;
        let n = samples.len().max(1) as f64;
        for s in samples {
            let acts = self.forward(&s.input);
            let err = acts[acts.len() - 1][0] - s.target;
            loss += err * err;
            let mut delta = vec![2.0 * err / n];
            for (i, l) in self.layers.iter().enumerate().rev() {
                let x = &acts[i];
                for o in 0..l.outputs {
                    g.biases[i][o] += delta[o];
                    let row = &mut g.weights[i][o * l.inputs..(o + 1) * l.inputs];
                    for (gw, v) in row.iter_mut().zip(x) {
                        *gw += delta[o] * v;
                    }
                }
                if i == 0 {
                    break;
                }
                delta = (0..l.inputs)
                    .map(|k| {
                        if x[k] <= 0.0 {
                            return 0.0;
                        }
                        (0..l.outputs).map(|o| l.weights[o * l.inputs + k] * delta[o]).sum()
                    })
                    .collect();
            }
        }
        (loss / n, g)
    }

    pub fn mse(&self, samples: &[WindowSample]) -> f64 {
        let n = samples.len().max(1) as f64;
        samples.iter().map(|s| (self.predict_unchecked(&s.input) - s.target).powi(2)).sum::<f64>() / n
    }

    pub fn save(&self, path: &Path) -> Result<(), SurrogateError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SurrogateError> {
        let m: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        m.validate()?;
        Ok(m)
    }
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Largest relative difference between the analytic gradient and central
/// differences with step `eps`, over every weight and bias.
pub fn gradient_check(model: &FeedForward, samples: &[WindowSample], eps: f64) -> f64 {
    let refs: Vec<&WindowSample> = samples.iter().collect();
    let (_, g) = model.loss_and_gradients(&refs);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, numeric: f64| {
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-7 {
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    };
    for i in 0..model.layers.len() {
        for k in 0..model.layers[i].weights.len() {
            let w = model.layers[i].weights[k];
            probe.layers[i].weights[k] = w + eps;
            let up = probe.mse(samples);
            probe.layers[i].weights[k] = w - eps;
            let down = probe.mse(samples);
            probe.layers[i].weights[k] = w;
            check(g.weights[i][k], (up - down) / (2.0 * eps));
        }
        for k in 0..model.layers[i].biases.len() {
            let b = model.layers[i].biases[k];
            probe.layers[i].biases[k] = b + eps;
            let up = probe.mse(samples);
            probe.layers[i].biases[k] = b - eps;
            let down = probe.mse(samples);
            probe.layers[i].biases[k] = b;
            check(g.biases[i][k], (up - down) / (2.0 * eps));
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 50, learning_rate: 0.01, batch_size: 32, momentum: 0.9, seed: 0 }
    }
}

/// Mini-batch gradient descent with momentum on the mean squared error.
/// Returns the training loss before the first epoch and after each one.
pub fn train(model: &mut FeedForward, data: &[WindowSample], cfg: &TrainConfig) -> Result<Vec<f64>, SurrogateError> {
    if data.is_empty() {
        return Err(SurrogateError::EmptyDataset);
    }
    model.validate()?;
    if let Some(bad) = data.iter().find(|s| s.input.len() != model.input_width()) {
        return Err(SurrogateError::InputSize { got: bad.input.len(), expected: model.input_width() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = model.zero_gradients();
    let mut curve = vec![model.mse(data)];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let samples: Vec<&WindowSample> = batch.iter().map(|&i| &data[i]).collect();
            let (_, g) = model.loss_and_gradients(&samples);
            for (i, l) in model.layers.iter_mut().enumerate() {
                for (k, w) in l.weights.iter_mut().enumerate() {
                    let v = &mut velocity.weights[i][k];
                    *v = cfg.momentum * *v - cfg.learning_rate * g.weights[i][k];
                    *w += *v;
                }
                for (k, b) in l.biases.iter_mut().enumerate() {
                    let v = &mut velocity.biases[i][k];
                    *v = cfg.momentum * *v - cfg.learning_rate * g.biases[i][k];
                    *b += *v;
                }
            }
        }
        curve.push(model.mse(data));
    }
    Ok(curve)
}

/// Prediction quality on a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub mse: f64,
    pub r2: f64,
    /// Share of predictions within the tolerance of the target.
    pub within: f64,
}

pub fn accuracy(model: &FeedForward, data: &[WindowSample], tolerance: f64) -> Accuracy {
    let n = data.len().max(1) as f64;
    let mean = data.iter().map(|s| s.target).sum::<f64>() / n;
    let (mut sse, mut sst, mut hit) = (0.0, 0.0, 0usize);
    for s in data {
        let e = model.predict_unchecked(&s.input) - s.target;
        sse += e * e;
        sst += (s.target - mean).powi(2);
        hit += usize::from(e.abs() <= tolerance);
    }
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else if sse == 0.0 { 1.0 } else { 0.0 };
    Accuracy { mse: sse / n, r2, within: hit as f64 / n }
}

/// Evaluator that scores plans by predicted completion times.
#[derive(Debug, Clone)]
pub struct SurrogateEvaluator {
    jobs: std::sync::Arc<JobSet>,
    model: FeedForward,
    space: FeatureSpace,
    deadlines: Vec<Time>,
    norm: Normalisation,
    classes: Vec<usize>,
}

impl SurrogateEvaluator {
    /// Uses the normalisation of `reference`, so scores and ratios are
    /// comparable with the real dispatcher's.
    pub fn new(reference: &ScheduleEvaluator, model: FeedForward, space: FeatureSpace) -> Result<Self, SurrogateError> {
        model.validate()?;
        if model.input_width() != space.input_width() {
            return Err(SurrogateError::SpaceMismatch);
        }
        let jobs = reference.jobs().clone();
        let norm = *reference.normalisation();
        let deadlines = if norm.objective.needs_deadlines() { jobs.all_deadlines()? } else { vec![0; jobs.len()] };
        let classes = jobs.job_classes();
        Ok(Self { jobs, model, space, deadlines, norm, classes })
    }

    /// Predicted entry and completion times of every job.
    pub fn predicted_timings(&self, plan: &[JobId]) -> Timings {
        let mut t = Timings::zeroed(self.jobs.len());
        let mut input = Vec::with_capacity(self.space.input_width());
        for (pos, &j) in plan.iter().enumerate() {
            self.space.encode(&self.jobs, plan, pos, &mut input);
            let wait = (self.model.predict_unchecked(&input) * self.space.horizon).max(0.0).round() as Time;
            t.start[j] = pos as Time;
            t.completion[j] = pos as Time + self.jobs.job(j).total_processing() + wait;
        }
        t
    }
}

impl Evaluator for SurrogateEvaluator {
    fn n_jobs(&self) -> usize {
        self.jobs.len()
    }

    fn score(&self, plan: &[JobId]) -> f64 {
        self.norm.score(self.objective(plan))
    }

    fn objective(&self, plan: &[JobId]) -> f64 {
        self.norm.objective.value(&self.predicted_timings(plan), &self.deadlines)
    }

    fn ratio(&self, plan: &[JobId]) -> f64 {
        self.norm.ratio(self.objective(plan))
    }

    fn job_classes(&self) -> Vec<usize> {
        self.classes.clone()
    }
}
