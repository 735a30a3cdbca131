
"""Latent refinement for non-autoregressive sequence models."""

import json

from latref._latref import (  # noqa: F401
    Decoder,
    LatrefError,
    bleu,
    default_config,
    edit_distance,
    evaluate,
    gen_data,
    gradfield,
    init_run,
    make_config,
    objective_identity_suite,
    remove_repetitions,
    repetition_count,
    run_artifacts,
    selftest,
    token_accuracy,
    toy_importance_sample,
    toy_quadrature_log_marginal,
    train_ar,
    train_gradnet,
    train_lvm,
    translate,
)


def config(overrides=()):
    """Default configuration with overrides applied, as a dict."""
    return json.loads(make_config(None, list(overrides)))
