"""Posterior dominant rhythm regression."""
from .features import (LEFT_ORDER, MAP_FREQS, RIGHT_ORDER, LabeledExample, PdrFeatureMap,
                       build_feature_map, make_synthetic_corpus, read_feature_map, read_manifest,
                       spectral_peak_baseline, write_feature_map, write_manifest)
from .model import (TINY, Architecture, PdrModel, denormalize_label, ensemble_predict,
                    normalize_label, predict)
from .training import (TrainConfig, TrainingError, TrainResult, cross_validate,
                       ensemble_predict_many, kfold_grouped, pdr_metrics, predict_many,
                       gradient_check, split_grouped, train, train_ensemble)
