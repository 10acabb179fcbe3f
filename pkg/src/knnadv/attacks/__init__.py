from knnadv.attacks.config import AttackConfig, load_config, save_config
from knnadv.attacks.common import (AttackResult, TargetSelection, BoxReparam,
                                   box_for, Adam, bracket_step,
                                   penalty_binary_search, select_target_class,
                                   select_candidates, select_candidates_layer1,
                                   soft_vote_input, soft_vote_layers,
                                   soft_threshold_objective,
                                   make_result, class_means)
from knnadv.attacks.heuristic import mean_attack, naive_attack, greedy_target_set
from knnadv.attacks.gradient import (knn_gradient_attack,
                                     knn_gradient_attack_batch,
                                     dknn_baseline_attack,
                                     dknn_baseline_attack_batch,
                                     dknn_gradient_attack,
                                     dknn_gradient_attack_batch,
                                     find_guides, optimize_batch)

__all__ = [
    "AttackConfig", "load_config", "save_config",
    "AttackResult", "TargetSelection", "BoxReparam", "box_for", "Adam",
    "bracket_step", "penalty_binary_search", "select_target_class",
    "select_candidates", "select_candidates_layer1", "soft_vote_input",
    "soft_vote_layers", "soft_threshold_objective", "make_result",
    "class_means",
    "mean_attack", "naive_attack", "greedy_target_set",
    "knn_gradient_attack", "knn_gradient_attack_batch",
    "dknn_baseline_attack", "dknn_baseline_attack_batch",
    "dknn_gradient_attack", "dknn_gradient_attack_batch",
    "find_guides", "optimize_batch",
]
