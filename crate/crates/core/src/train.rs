//! Training loop: noisy initial cloud, nearest-neighbor flow sample, guided
//! condition drop, loss, Adam step, EMA update.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{draw_condition, init_noisy, nn_flow, sample_time, FlowSample, NoiseConfig};
use crate::error::{Error, Result};
use crate::field::{
    ema_update, AdamConfig, FieldConfig, FieldInput, ModelState, OptimizerState, VectorField, DEFAULT_EMA_DECAY,
};
use crate::geometry::PointCloud;
use crate::objective::{total_loss_grad, LossReport, ObjectiveConfig};
use crate::rng::{derive_seed, seeded_rng, FlowRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Stops early once this many optimizer steps have run.
    pub max_steps: Option<u64>,
    /// Probability of replacing the scan by the null condition.
    pub p_null: f64,
    pub noise_scale: f64,
    pub k: usize,
    pub adam: AdamConfig,
    pub ema_decay: f64,
    /// Uses `min(decay, (1 + n) / (10 + n))` at step `n`, so that short runs
    /// still move the average away from the initialization.
    pub ema_warmup: bool,
    pub objective: ObjectiveConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 4,
            max_steps: None,
            p_null: 0.1,
            noise_scale: 1.0,
            k: 10,
            adam: AdamConfig::default(),
            ema_decay: DEFAULT_EMA_DECAY,
            ema_warmup: true,
            objective: ObjectiveConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.p_null) {
            return Err(Error::invalid(format!("p_null {} outside [0, 1]", self.p_null)));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::invalid(format!("ema decay {} outside [0, 1]", self.ema_decay)));
        }
        NoiseConfig {
            scale: self.noise_scale,
            seed: 0,
        }
        .validate()?;
        self.adam.validate()?;
        self.objective.weights.validate()
    }

    pub fn steps_per_epoch(&self, n_cases: usize) -> u64 {
        n_cases.div_ceil(self.batch_size) as u64
    }

    pub fn total_steps(&self, n_cases: usize) -> u64 {
        let planned = self.steps_per_epoch(n_cases).saturating_mul(self.epochs as u64);
        self.max_steps.map_or(planned, |m| planned.min(m))
    }

    pub fn ema_alpha(&self, step_count: u64) -> f64 {
        if self.ema_warmup {
            let n = step_count as f64;
            self.ema_decay.min((1.0 + n) / (10.0 + n))
        } else {
            self.ema_decay
        }
    }
}

/// A scan and its complete scene.
#[derive(Debug, Clone, Copy)]
pub struct TrainPair<'a> {
    pub scan: &'a PointCloud,
    pub scene: &'a PointCloud,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    /// One-based index of the optimizer step just taken.
    pub step: u64,
    pub epoch: usize,
    pub loss: LossReport,
    pub null_conditions: usize,
}

impl StepLog {
    /// `step=<n> epoch=<e> loss=<total> nfm=<..> cdm=<..> null=<count>`
    pub fn to_line(&self) -> String {
        format!(
            "step={} epoch={} loss={:.6e} nfm={:.6e} cdm={:.6e} null={}",
            self.step, self.epoch, self.loss.total, self.loss.nfm, self.loss.cdm, self.null_conditions
        )
    }
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub field: VectorField,
    pub state: ModelState,
    pub optimizer: OptimizerState,
    rng: FlowRng,
}

impl Trainer {
    pub fn new(field_config: FieldConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let field = VectorField::new(field_config)?;
        let state = field.init_state();
        let optimizer = OptimizerState::new(config.adam, field.n_params());
        let rng = seeded_rng(derive_seed(config.seed, 0x0074_7261_696e));
        Ok(Self {
            config,
            field,
            state,
            optimizer,
            rng,
        })
    }

    /// Builds one flow sample for `pair`: fresh noise, time and condition.
    fn flow_sample(&mut self, pair: TrainPair<'_>) -> Result<(FlowSample, bool)> {
        let noise = NoiseConfig {
            scale: self.config.noise_scale,
            seed: self.rng.random(),
        };
        let x0 = init_noisy(pair.scan, self.config.k, &noise)?;
        let t = sample_time(&mut self.rng);
        let drawn = draw_condition(pair.scan, self.config.p_null, &mut self.rng)?;
        let sample = nn_flow(&x0, pair.scene, t)?.with_condition(drawn.outcome.kind());
        Ok((sample, matches!(drawn.outcome, crate::coupling::Condition::Null)))
    }

    /// One optimizer step on `batch`. On error the model is left as it was.
    pub fn step(&mut self, batch: &[TrainPair<'_>], epoch: usize) -> Result<StepLog> {
        let mut samples = Vec::with_capacity(batch.len());
        let mut nulls = 0;
        for pair in batch {
            let (sample, null) = self.flow_sample(*pair)?;
            nulls += null as usize;
            samples.push(sample);
        }
        let inputs: Vec<FieldInput<'_>> = samples
            .iter()
            .zip(batch)
            .map(|(s, pair)| FieldInput {
                t: s.t,
                x_t: &s.x_t,
                condition: match s.condition {
                    crate::coupling::ConditionKind::Scan => crate::coupling::Condition::Scan(pair.scan),
                    crate::coupling::ConditionKind::Null => crate::coupling::Condition::Null,
                },
            })
            .collect();
        let objective = self.config.objective;
        let loss = self
            .field
            .backward_and_step(&mut self.state, &mut self.optimizer, &inputs, |i, u| {
                total_loss_grad(&samples[i], u, &objective)
            })
            .map_err(|e| match e {
                Error::NonFiniteGradient | Error::NumericOverflow => Error::NonFiniteLoss {
                    step: self.state.step_count as usize + 1,
                },
                other => other,
            })?;
        let alpha = self.config.ema_alpha(self.state.step_count);
        ema_update(&mut self.state, alpha);
        Ok(StepLog {
            step: self.state.step_count,
            epoch,
            loss,
            null_conditions: nulls,
        })
    }

    /// Runs the configured epochs over `pairs`, shuffling each epoch. `on_step`
    /// sees every completed step and may abort the run by returning an error.
    pub fn run<F>(&mut self, pairs: &[TrainPair<'_>], mut on_step: F) -> Result<()>
    where
        F: FnMut(&Trainer, &StepLog) -> Result<()>,
    {
        if pairs.is_empty() {
            return if self.config.epochs == 0 || self.config.max_steps == Some(0) {
                Ok(())
            } else {
                Err(Error::invalid("no training cases"))
            };
        }
        let total = self.config.total_steps(pairs.len());
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut done = 0;
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.config.batch_size) {
                if done >= total {
                    return Ok(());
                }
                let batch: Vec<TrainPair<'_>> = chunk.iter().map(|&i| pairs[i]).collect();
                let log = self.step(&batch, epoch)?;
                done += 1;
                on_step(self, &log)?;
            }
        }
        Ok(())
    }
}

/// Exponential smoothing of a loss curve with factor `beta`.
pub fn smooth(values: &[f64], beta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = None;
    for &v in values {
        let s = match acc {
            None => v,
            Some(a) => beta * a + (1.0 - beta) * v,
        };
        acc = Some(s);
        out.push(s);
    }
    out
}
