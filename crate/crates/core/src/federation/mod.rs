//! Client selection, aggregation and the global training loop.

mod aggregate;
mod select;

pub use aggregate::{aggregate_unweighted, aggregate_weighted, fedsgd_round, Aggregation};
pub use select::{select_labelwise, select_random, ClientState, ScoreMode, SelectionResult};

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClientDataset, Dataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::metrics::{self, LocalEval, ReportRun, RoundRecord};
use crate::model::{evaluate, init_params, local_train, Activation, ArchitectureSpec, ModelParams, TrainingHyper};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FedavgRandom,
    Fedsgd,
    Labelwise,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::FedavgRandom => "fedavg_random",
            Strategy::Fedsgd => "fedsgd",
            Strategy::Labelwise => "labelwise",
        }
    }

    pub fn default_aggregation(self) -> Aggregation {
        match self {
            Strategy::Labelwise => Aggregation::Unweighted,
            _ => Aggregation::Weighted,
        }
    }
}

/// What a label-wise round does when no client is eligible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Skip the round and keep the global parameters.
    #[default]
    None,
    /// Select clients at random instead.
    Random,
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_trials() -> usize {
    3
}
fn default_fedsgd_lr() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Client partition; `plan.num_rounds` is the number of global rounds.
    pub plan: PartitionPlan,
    pub strategy: Strategy,
    /// Defaults to unweighted for label-wise selection, weighted otherwise.
    #[serde(default)]
    pub aggregation: Option<Aggregation>,
    /// Clients selected per round.
    #[serde(alias = "n")]
    pub clients_per_round: usize,
    #[serde(default)]
    pub hyper: TrainingHyper,
    /// Hidden layer widths; input and output widths come from the data.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub score_mode: ScoreMode,
    #[serde(default)]
    pub fallback: Fallback,
    /// Server step size for FedSGD.
    #[serde(default = "default_fedsgd_lr")]
    pub fedsgd_lr: f64,
    /// Evaluate every selected client's local model on the test set.
    #[serde(default = "default_true")]
    pub eval_selected: bool,
}

impl ExperimentConfig {
    pub fn new(plan: PartitionPlan, strategy: Strategy, clients_per_round: usize) -> Self {
        Self {
            plan,
            strategy,
            aggregation: None,
            clients_per_round,
            hyper: TrainingHyper::default(),
            hidden: default_hidden(),
            activation: Activation::default(),
            trials: default_trials(),
            seed: 0,
            score_mode: ScoreMode::default(),
            fallback: Fallback::default(),
            fedsgd_lr: default_fedsgd_lr(),
            eval_selected: true,
        }
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation.unwrap_or(self.strategy.default_aggregation())
    }

    pub fn architecture(&self, input_dim: usize, num_classes: usize) -> ArchitectureSpec {
        let mut widths = vec![input_dim];
        widths.extend(&self.hidden);
        widths.push(num_classes);
        ArchitectureSpec {
            widths,
            activation: self.activation,
        }
    }

    /// The partition plan actually used by `trial`.
    pub fn trial_plan(&self, trial: usize) -> PartitionPlan {
        let mut plan = self.plan.clone();
        plan.seed = rng::derive_seed(self.seed, &[rng::STREAM_PARTITION, self.plan.seed, trial as u64]);
        plan
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.hyper.validate()?;
        if self.clients_per_round == 0 {
            return Err(Error::invalid("clients_per_round must be >= 1"));
        }
        if self.clients_per_round > self.plan.num_clients {
            return Err(Error::invalid(format!(
                "clients_per_round {} exceeds num_clients {}",
                self.clients_per_round, self.plan.num_clients
            )));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        if !(self.fedsgd_lr.is_finite() && self.fedsgd_lr > 0.0) {
            return Err(Error::invalid("fedsgd_lr must be positive"));
        }
        Ok(())
    }
}

/// Everything measured by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    /// Round-0 records: the initial parameters of each trial evaluated.
    pub initial: Vec<RoundRecord>,
    /// `num_rounds` records per trial, trial-major.
    pub rounds: Vec<RoundRecord>,
    pub final_params: Vec<ModelParams>,
    /// Number of `local_train` calls made.
    pub local_updates: usize,
}

impl RunResult {
    /// Round-0 and training records interleaved per trial.
    pub fn all_records(&self) -> Vec<RoundRecord> {
        let mut out = Vec::with_capacity(self.initial.len() + self.rounds.len());
        for init in &self.initial {
            out.push(init.clone());
            out.extend(self.rounds.iter().filter(|r| r.trial == init.trial).cloned());
        }
        out
    }

    /// `(accuracy, loss)` after the last round of each trial.
    pub fn final_metrics(&self) -> Vec<(f64, f64)> {
        self.initial
            .iter()
            .map(|init| {
                let last = self.rounds.iter().rev().find(|r| r.trial == init.trial).unwrap_or(init);
                (last.test_accuracy, last.test_loss)
            })
            .collect()
    }

    pub fn mean_final_accuracy(&self) -> f64 {
        let f = self.final_metrics();
        f.iter().map(|m| m.0).sum::<f64>() / f.len() as f64
    }

    pub fn mean_final_loss(&self) -> f64 {
        let f = self.final_metrics();
        f.iter().map(|m| m.1).sum::<f64>() / f.len() as f64
    }

    /// Test accuracies of every selected client's local model, pooled.
    pub fn selected_accuracies(&self) -> Vec<f64> {
        self.rounds.iter().flat_map(|r| r.local.iter().map(|e| e.accuracy)).collect()
    }

    pub fn success_rate(&self, threshold: f64) -> Result<f64> {
        metrics::success_rate(&self.selected_accuracies(), threshold)
    }

    pub fn report_run(&self, config_id: &str) -> ReportRun {
        ReportRun {
            config_id: config_id.to_string(),
            strategy: self.config.strategy.as_str().to_string(),
            case_id: self.config.plan.case.id.to_string(),
            p_biased: self.config.plan.case.p_biased,
            rounds: self.all_records(),
        }
    }

    /// Writes `config.json`, `rounds.csv` and `selected_evals.csv` into `dir`.
    pub fn write_run_dir(&self, dir: &Path) -> Result<()> {
        self.write_run_dir_with(dir, &self.config)
    }

    /// Like [`write_run_dir`](Self::write_run_dir) with a caller-supplied
    /// `config.json` echo, e.g. one that also names the dataset.
    pub fn write_run_dir_with<C: Serialize>(&self, dir: &Path, echo: &C) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(echo)? + "\n")?;
        let records = self.all_records();
        let mut rounds = Vec::new();
        metrics::write_rounds_csv(&mut rounds, &records)?;
        fs::write(dir.join("rounds.csv"), rounds)?;
        let mut evals = Vec::new();
        metrics::write_selected_evals_csv(&mut evals, &records)?;
        fs::write(dir.join("selected_evals.csv"), evals)?;
        Ok(())
    }
}

struct ClientUpdate {
    client_id: usize,
    size: usize,
    params: ModelParams,
}

/// Runs every trial of `config`, training on partitions of `train` and
/// evaluating on `test`. Deterministic in `(config, train, test)` regardless of
/// the rayon thread count.
pub fn run_experiment(config: &ExperimentConfig, train: &Arc<Dataset>, test: &Dataset) -> Result<RunResult> {
    config.validate()?;
    if train.feature_dim() != test.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: train.feature_dim(),
            found: test.feature_dim(),
        });
    }
    let num_classes = train.num_classes().max(test.num_classes());
    let arch = config.architecture(train.feature_dim(), num_classes);
    let strategy = config.strategy.as_str().to_string();
    let local_updates = AtomicUsize::new(0);

    let mut initial = Vec::with_capacity(config.trials);
    let mut rounds = Vec::with_capacity(config.trials * config.plan.num_rounds);
    let mut final_params = Vec::with_capacity(config.trials);

    for trial in 0..config.trials {
        let t = trial as u64;
        let plan = config.trial_plan(trial);
        let mut global = init_params(&arch, rng::derive_seed(config.seed, &[rng::STREAM_INIT, t]))?;
        let (acc, loss) = evaluate(&global, test)?;
        initial.push(RoundRecord {
            trial,
            round: 0,
            strategy: strategy.clone(),
            selected: Vec::new(),
            mean_score: f64::NAN,
            test_accuracy: acc,
            test_loss: loss,
            local: Vec::new(),
        });

        let mut static_shards: Option<Vec<ClientDataset>> = None;
        for round in 1..=plan.num_rounds {
            let shards = match &static_shards {
                Some(s) => s.clone(),
                None => {
                    let s = plan.realize_round(train, round)?;
                    if !plan.case.id.is_dynamic() {
                        static_shards = Some(s.clone());
                    }
                    s
                }
            };
            let labelwise = config.strategy == Strategy::Labelwise;
            let clients: Vec<ClientState> = shards.into_iter().map(|s| ClientState::new(s, labelwise)).collect();

            let mut select_rng = rng::rng_for(config.seed, &[rng::STREAM_SELECT, t, round as u64]);
            let mut selection = if labelwise {
                select_labelwise(&clients, config.clients_per_round, config.score_mode)?
            } else {
                select_random(&clients, config.clients_per_round, &mut select_rng)?
            };
            if selection.effective_n == 0 && config.fallback == Fallback::Random {
                selection = select_random(&clients, config.clients_per_round, &mut select_rng)?;
            }
            selection.round = round;
            let chosen: Vec<&ClientState> = selection.selected.iter().map(|&id| &clients[id]).collect();

            let mut local = Vec::new();
            if chosen.is_empty() {
                log::warn!("trial {trial} round {round}: no eligible clients, global parameters unchanged");
            } else if config.strategy == Strategy::Fedsgd {
                let mut ordered: Vec<&ClientDataset> = chosen.iter().map(|c| &c.shard).collect();
                ordered.sort_by_key(|s| s.client_id);
                global = fedsgd_round(&global, &ordered, config.fedsgd_lr)?;
            } else {
                let mut updates = chosen
                    .par_iter()
                    .map(|c| {
                        let hyper = TrainingHyper {
                            seed: rng::derive_seed(
                                config.seed,
                                &[rng::STREAM_LOCAL, t, round as u64, c.client_id as u64],
                            ),
                            ..config.hyper.clone()
                        };
                        local_updates.fetch_add(1, Ordering::Relaxed);
                        Ok(ClientUpdate {
                            client_id: c.client_id,
                            size: c.shard.len(),
                            params: local_train(&global, &c.shard, &hyper)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if config.eval_selected {
                    local = updates
                        .par_iter()
                        .map(|u| {
                            evaluate(&u.params, test).map(|(accuracy, loss)| LocalEval {
                                client_id: u.client_id,
                                accuracy,
                                loss,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                }
                updates.sort_by_key(|u| u.client_id);
                let sets: Vec<&ModelParams> = updates.iter().map(|u| &u.params).collect();
                global = match config.aggregation() {
                    Aggregation::Unweighted => aggregate_unweighted(&sets)?,
                    Aggregation::Weighted => {
                        let sizes: Vec<usize> = updates.iter().map(|u| u.size).collect();
                        aggregate_weighted(&sets, &sizes)?
                    }
                };
            }

            let (acc, loss) = evaluate(&global, test)?;
            log::debug!(
                "trial {trial} round {round}: {} selected, accuracy {acc:.4}, loss {loss:.4}",
                selection.effective_n
            );
            rounds.push(RoundRecord {
                trial,
                round,
                strategy: strategy.clone(),
                mean_score: selection.mean_score(),
                selected: selection.selected,
                test_accuracy: acc,
                test_loss: loss,
                local,
            });
        }
        log::info!(
            "{} trial {trial}: final accuracy {:.4}",
            strategy,
            rounds.last().map_or(initial[trial].test_accuracy, |r| r.test_accuracy)
        );
        final_params.push(global);
    }

    Ok(RunResult {
        config: config.clone(),
        initial,
        rounds,
        final_params,
        local_updates: local_updates.into_inner(),
    })
}
