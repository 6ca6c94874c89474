import dataclasses

import numpy as np
import pytest

from smoothadv import (
    AdamState,
    AttackConfig,
    GraphConfig,
    LinearClassifier,
    adam_step,
    attack_with_epsilon,
    build_smoothing_operator,
    clip_valid,
    cw_attack,
    fgsm,
    ifgsm,
    laplacian_for_image,
    make_attack,
    pgd2,
    predict,
    scw_attack,
    smooth_normalized,
    smoothness_energy,
    write_trajectory,
)


def two_class_linear():
    """Classifier whose one-step flip threshold is known in closed form."""
    w = np.array(
        [
            [0.5, -0.3, 0.2, 0.1, -0.4, 0.3],
            [0.1, 0.3, -0.2, 0.4, 0.2, -0.1],
        ]
    )
    return LinearClassifier(w).set_input_shape((2, 3, 1))


def test_clip_valid():
    np.testing.assert_array_equal(clip_valid(np.array([-0.5, 0.0, 0.4, 1.0, 2.0])), [0.0, 0.0, 0.4, 1.0, 1.0])


def test_attack_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(kind="nope")
    with pytest.raises(ValueError):
        AttackConfig(epsilon=-1.0)
    with pytest.raises(ValueError):
        AttackConfig(alpha=1.0)
    with pytest.raises(ValueError):
        AttackConfig(line_search_steps=0)


def test_fgsm_zero_budget_is_identity():
    clf = two_class_linear()
    x = np.full((2, 3, 1), 0.5)
    res = fgsm(clf, x, predict(clf, x), epsilon=0.0)
    assert not res.success
    np.testing.assert_array_equal(res.adversarial, x)
    assert res.distortion == 0.0


def test_fgsm_analytic_flip_threshold():
    clf = two_class_linear()
    x = np.full((2, 3, 1), 0.5)
    t = predict(clf, x)
    assert t == 1
    diff = (clf.weights[1] - clf.weights[0]).reshape(x.shape)
    gap = float(np.sum(diff * x))
    threshold = gap / np.abs(diff).sum()  # one signed step flips iff eps exceeds this
    assert 0.01 < threshold < 0.4  # interior: the box clip stays inactive

    below = fgsm(clf, x, t, epsilon=threshold - 0.01)
    above = fgsm(clf, x, t, epsilon=threshold + 0.01)
    assert not below.success
    assert above.success
    assert np.abs(above.adversarial - x).max() == pytest.approx(threshold + 0.01)


def test_fgsm_respects_box_and_range(model, correct_subset):
    _, images, labels = correct_subset
    eps = 0.25
    for x, y in zip(images[:10], labels[:10]):
        res = fgsm(model, x, int(y), epsilon=eps)
        assert np.abs(res.adversarial - x).max() <= eps + 1e-12
        assert res.adversarial.min() >= 0.0 and res.adversarial.max() <= 1.0
        assert res.success == (predict(model, res.adversarial) != int(y))


def test_ifgsm_single_full_step_equals_fgsm(model, correct_subset):
    _, images, labels = correct_subset
    x, y = images[0], int(labels[0])
    one = fgsm(model, x, y, epsilon=0.2)
    ite = ifgsm(model, x, y, epsilon=0.2, step=0.2, iters=1)
    np.testing.assert_array_equal(one.adversarial, ite.adversarial)


def test_ifgsm_contract_and_strength(model, correct_subset):
    _, images, labels = correct_subset
    eps = 0.3
    fgsm_wins = iter_wins = 0
    for x, y in zip(images[:30], labels[:30]):
        res = ifgsm(model, x, int(y), epsilon=eps, step=0.08, iters=10)
        assert np.abs(res.adversarial - x).max() <= eps + 1e-12
        assert res.adversarial.min() >= 0.0 and res.adversarial.max() <= 1.0
        iter_wins += res.success
        fgsm_wins += fgsm(model, x, int(y), epsilon=eps).success
    assert iter_wins >= fgsm_wins


def test_ifgsm_stops_once_flipped(model, correct_subset):
    _, images, labels = correct_subset
    res = ifgsm(model, images[0], int(labels[0]), epsilon=0.5, step=0.25, iters=50)
    assert res.success
    assert res.iterations_used < 50


def test_pgd2_zero_budget_never_moves(model, correct_subset):
    _, images, labels = correct_subset
    res = pgd2(model, images[0], int(labels[0]), epsilon=0.0, step=0.5, iters=5)
    assert not res.success
    np.testing.assert_array_equal(res.adversarial, images[0])


def test_pgd2_l2_contract(model, correct_subset):
    _, images, labels = correct_subset
    eps = 3.0
    for x, y in zip(images[:10], labels[:10]):
        res = pgd2(model, x, int(y), epsilon=eps, step=0.5, iters=40)
        assert np.linalg.norm(res.adversarial - x) <= eps + 1e-9
        assert res.adversarial.min() >= 0.0 and res.adversarial.max() <= 1.0


def test_pgd2_smoothed_variant_is_smoother(model, correct_subset):
    _, images, labels = correct_subset
    x, y = images[0], int(labels[0])
    rough = pgd2(model, x, y, epsilon=5.0, step=3.0, iters=40)
    op = build_smoothing_operator(x, 0.95, GraphConfig())
    smooth = pgd2(model, x, y, epsilon=5.0, step=3.0, iters=40, smoothing=op)
    assert rough.kind == "pgd2" and smooth.kind == "spgd2"
    assert rough.success and smooth.success

    adj, deg, _ = laplacian_for_image(x, 0.95, GraphConfig())
    energies = []
    for res in (rough, smooth):
        unit = res.perturbation / np.linalg.norm(res.perturbation)
        energies.append(smoothness_energy(adj, deg, unit))
    assert energies[1] < energies[0]


def test_pgd2_trajectory_logging(model, correct_subset):
    _, images, labels = correct_subset
    res = pgd2(model, images[0], int(labels[0]), epsilon=5.0, step=1.0, iters=15, log_trajectory=True)
    assert res.trajectory is not None and len(res.trajectory) >= 1
    iters = [row[0] for row in res.trajectory]
    assert iters == sorted(iters)


def scalar_adam(grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    m = v = 0.0
    x = 0.0
    for k, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        x += -lr * (m / (1 - beta1**k)) / (np.sqrt(v / (1 - beta2**k)) + eps)
    return x


def test_adam_first_step_is_nearly_signed():
    state = AdamState.like(np.zeros(3))
    update = adam_step(state, np.array([4.0, -0.25, 0.0]), lr=0.1)
    np.testing.assert_allclose(update, [-0.1, 0.1, 0.0], atol=1e-7)


def test_adam_hundred_steps_match_scalar_oracle():
    rng = np.random.default_rng(47)
    grads = rng.normal(size=100)
    state = AdamState.like(np.zeros(1))
    x = 0.0
    for g in grads:
        x += adam_step(state, np.array([g]), lr=0.05)[0]
    assert x == pytest.approx(scalar_adam(grads, 0.05), abs=1e-10)


def test_adam_shape_mismatch():
    state = AdamState.like(np.zeros(3))
    with pytest.raises(ValueError):
        adam_step(state, np.zeros(4), lr=0.1)


def quick_cfg(**kw):
    base = dict(max_adam_iters=60, stall_patience=15, line_search_steps=2)
    base.update(kw)
    return AttackConfig(**base)


def test_cw_reports_failure_on_constant_classifier():
    clf = LinearClassifier(np.zeros((3, 12))).set_input_shape((3, 4, 1))
    x = np.full((3, 4, 1), 0.5)
    res = cw_attack(clf, x, 0, quick_cfg(kind="cw"))
    assert not res.success
    assert res.distortion is None
    assert res.perturbation is None
    np.testing.assert_array_equal(res.adversarial, x)


def test_cw_succeeds_and_reports_preclip_perturbation(model, correct_subset):
    _, images, labels = correct_subset
    x, y = images[0], int(labels[0])
    res = cw_attack(model, x, y, AttackConfig(kind="cw", max_adam_iters=300))
    assert res.success
    assert res.latent is None
    assert res.distortion == pytest.approx(np.linalg.norm(res.adversarial - x))
    np.testing.assert_allclose(clip_valid(x + res.perturbation), res.adversarial, atol=1e-12)


def test_scw_alpha_zero_reduces_to_cw(model, correct_subset):
    _, images, labels = correct_subset
    x, y = images[1], int(labels[1])
    cfg = quick_cfg(kind="scw", alpha=0.0, max_adam_iters=150, log_trajectory=True)
    op = build_smoothing_operator(x, 0.0, cfg.graph)
    smoothed = scw_attack(model, op, x, y, cfg)
    plain = cw_attack(model, x, y, dataclasses.replace(cfg, kind="cw"))
    np.testing.assert_allclose(smoothed.adversarial, plain.adversarial, atol=1e-8)
    assert len(smoothed.trajectory) == len(plain.trajectory)
    losses_s = np.array([row[1] for row in smoothed.trajectory])
    losses_p = np.array([row[1] for row in plain.trajectory])
    np.testing.assert_allclose(losses_s, losses_p, atol=1e-8)


def test_scw_latent_reproduces_result(model, correct_subset):
    _, images, labels = correct_subset
    x, y = images[2], int(labels[2])
    cfg = AttackConfig(kind="scw", max_adam_iters=300)
    op = build_smoothing_operator(x, cfg.alpha, cfg.graph)
    res = scw_attack(model, op, x, y, cfg)
    assert res.success
    rebuilt = smooth_normalized(op, res.latent)
    np.testing.assert_allclose(rebuilt, res.perturbation, atol=1e-10)
    np.testing.assert_allclose(clip_valid(x + rebuilt), res.adversarial, atol=1e-10)


def test_make_attack_dispatch(model, correct_subset):
    _, images, labels = correct_subset
    x, y = images[3], int(labels[3])
    for kind in ("fgsm", "ifgsm", "pgd2", "spgd2"):
        cfg = AttackConfig(kind=kind, epsilon=2.0 if "2" in kind else 0.3, step=0.6, iterations=10)
        run = make_attack(model, cfg)
        res = run(x, y)
        assert res.kind == kind
        assert run.config is cfg
    for kind in ("cw", "scw"):
        run = make_attack(model, quick_cfg(kind=kind))
        assert run(x, y).kind == kind


def test_make_attack_rejects_unknown_kind(model):
    cfg = AttackConfig(kind="cw")
    object.__setattr__(cfg, "kind", "mystery")
    with pytest.raises(ValueError):
        make_attack(model, cfg)


def test_attack_with_epsilon_replaces_only_budget():
    cfg = AttackConfig(kind="pgd2", epsilon=2.0, step=1.0)
    swept = attack_with_epsilon(cfg, 8.0)
    assert swept.epsilon == 8.0
    assert swept.step == cfg.step and swept.kind == cfg.kind
    assert cfg.epsilon == 2.0


def test_write_trajectory_roundtrip(tmp_path, model, correct_subset):
    _, images, labels = correct_subset
    res = pgd2(model, images[0], int(labels[0]), epsilon=5.0, step=1.0, iters=10, log_trajectory=True)
    path = tmp_path / "traj.csv"
    write_trajectory(res.trajectory, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iteration,loss,distortion,success"
    assert len(lines) == len(res.trajectory) + 1
