"""Analytic-vs-finite-difference checks for every trainable parameter group.

Task-loss gradients (embed, projection, selected values, head) are checked
with lambda_key=0; key gradients are checked through the alignment term
with lambda_key>0 (selection is a stop-gradient, so the task loss does not
reach the keys); preference-loss gradients cover head, bias, projection.
"""
import numpy as np
import pytest

from gradcheck import (
    REL_TOL,
    check_dpo_gradients,
    check_task_gradients,
    random_config,
)


def test_mse_gradients_randomized():
    rng = np.random.default_rng(100)
    for _ in range(8):
        model, windows, _, _ = random_config(rng, lambda_key=0.0)
        errors = check_task_gradients(model, windows, "mse")
        for group, err in errors.items():
            assert err < REL_TOL, f"{group}: rel err {err}"


def test_masked_mse_gradients_randomized():
    rng = np.random.default_rng(101)
    for _ in range(4):
        model, windows, masks, _ = random_config(rng, channels=2, lambda_key=0.0)
        target_masks = rng.integers(0, 2, size=windows.targets.shape).astype(float)
        target_masks.flat[0] = 1.0  # at least one observed entry
        errors = check_task_gradients(
            model, windows, "masked_mse",
            input_masks=masks, target_masks=target_masks,
        )
        for group, err in errors.items():
            assert err < REL_TOL, f"{group}: rel err {err}"


def test_cross_entropy_gradients_randomized():
    rng = np.random.default_rng(102)
    for _ in range(4):
        model, windows, _, labels = random_config(
            rng, head_kind="classification", lambda_key=0.0
        )
        errors = check_task_gradients(model, windows, "cross_entropy",
                                      train_labels=labels)
        for group, err in errors.items():
            assert err < REL_TOL, f"{group}: rel err {err}"


def test_key_gradients_through_alignment_loss():
    rng = np.random.default_rng(103)
    for _ in range(4):
        model, windows, _, _ = random_config(rng, lambda_key=0.7)
        errors = check_task_gradients(model, windows, "mse")
        assert "keys" in errors
        assert errors["keys"] < REL_TOL, f"keys: rel err {errors['keys']}"


def test_dpo_gradients_randomized():
    rng = np.random.default_rng(104)
    for _ in range(6):
        model, windows, _, _ = random_config(rng, lambda_key=0.0)
        errors = check_dpo_gradients(model, windows)
        for group, err in errors.items():
            assert err < REL_TOL, f"{group}: rel err {err}"


def test_no_pool_gradients():
    rng = np.random.default_rng(105)
    model, windows, _, _ = random_config(rng, lambda_key=0.0)
    model.use_pool = False
    from gradcheck import fd_gradient, rel_error
    from tsarag.predictor import evaluate

    _, grads = evaluate(model, windows, "mse")
    loss_fn = lambda: evaluate(model, windows, "mse")[0]
    assert rel_error(grads["embed"], fd_gradient(loss_fn, model.embed)) < REL_TOL
    assert rel_error(grads["head"], fd_gradient(loss_fn, model.head)) < REL_TOL
