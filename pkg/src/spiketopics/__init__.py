"""Topic-model training with spiking-network samplers, log-space online
learning rules, fold-in evaluation, mean-limit verification, and
fan-in-bounded pruning."""

from .corpus import (Corpus, FoldInSplit, blocked_topics, load_toy_corpus,
                     parse_uci, sample_token, split_fold_in, synthetic_corpus,
                     write_uci)
from .errors import (ConfigError, ConsistencyError, CorpusFormatError,
                     DomainError, InvariantError, SpikeTopicsError,
                     StoreError, TrainingDiverged)
from .evaluate import (DenseTopicModel, best_permutation_cosine,
                       counts_to_model, export_features, fold_in_corpus,
                       fold_in_theta, perplexity, read_features,
                       weights_to_model)
from .gibbs import (CountTables, MinibatchStats, cgs_conditional, cgs_sweep,
                    cgs_train, semi_cgs_minibatch, spikecgs_conditional,
                    spikecgs_decode, spikecgs_init, spikecgs_step,
                    spikecgs_train)
from .network import (Hyperparams, NetworkWeights, constraint_deviation,
                      joint_density, load_checkpoint, potentials,
                      race_sample, race_sample_clocks, random_init,
                      save_checkpoint, softmax, tau1, tau2)
from .online import (OBJECTIVE_WORK_LIMIT, OdeRecord, TrainResult,
                     TrajectoryRecord, UpdateField, du_train, du_update,
                     ed_train, exact_objective, expected_update,
                     gamma_prior_grad, gamma_prior_logdensity, mode_kappa,
                     ode_integrate, posterior_token_q, semi_train,
                     semi_update, spikelda_update, spikeplsi_update,
                     stationary_point)
from .pruning import (FAN_IN_LIMIT, ExternalBetaStore, PrunedNetwork,
                      continue_training_pruned, prune)
from .schedules import (AdaGrad, Constant, RmsProp, RobbinsMonro,
                        StepSchedule, VarianceTracking, make_schedule)
from .verify import CHECK_NAMES, CheckResult, run_checks

__version__ = "0.1.0"
