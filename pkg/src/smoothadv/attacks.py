"""Adversarial attacks against a differentiable classifier.

Six attacks share one margin loss and one success rule (the prediction
flips away from the true label):

* fgsm / ifgsm — signed-gradient steps inside an L-infinity ball;
* pgd2 — normalized gradient steps projected onto an L2 ball; passing a
  smoothing operator smooths each gradient first (the "sPGD2" variant);
* cw_attack — minimizes lambda*||r||^2 + margin loss over an unconstrained
  perturbation r with Adam, line-searching the trade-off constant;
* scw_attack — the same objective over a latent z with r constrained to be
  the normalized smoothing of z, so every iterate is smooth like the
  attacked image by construction.

All attacks return an AttackResult whose `success` is recomputed from the
returned image, and keep, for the optimizer-based attacks, the successful
iterate of least distortion ever seen.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import GraphConfig
from .image import l2_distortion
from .nn import margin_loss, margin_loss_grad
from .smoothing import build_smoothing_operator, smooth_adjoint, smooth_normalized

ATTACK_KINDS = ("fgsm", "ifgsm", "pgd2", "spgd2", "cw", "scw")


def clip_valid(x):
    """Elementwise min(max(x, 0), 1): projection onto the valid pixel box."""
    return np.clip(x, 0.0, 1.0)


def _clip_grad_mask(u):
    """Derivative of clip_valid at pre-clip values u (1 inside [0,1])."""
    return ((u >= 0.0) & (u <= 1.0)).astype(np.float64)


@dataclass(frozen=True)
class AttackConfig:
    """Parameters shared by every attack; unused fields are ignored.

    epsilon is an L-infinity budget for fgsm/ifgsm and an L2 budget for
    pgd2/spgd2.  initial_c is the starting trade-off constant c = 1/lambda
    for the optimizer-based attacks; the line search multiplies or divides
    it by 10 and then refines geometrically between the last failing and
    first succeeding value.
    """

    kind: str = "cw"
    epsilon: float = 0.3
    step: float = 0.08
    iterations: int = 10
    margin: float = 1.0
    learning_rate: float = 0.1
    initial_c: float = 15.0
    line_search_steps: int = 5
    max_adam_iters: int = 1000
    stall_patience: int = 200
    alpha: float = 0.95
    graph: GraphConfig = field(default_factory=GraphConfig)
    seed: int = 0
    log_trajectory: bool = False

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.initial_c <= 0:
            raise ValueError("initial_c must be positive")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")
        if self.line_search_steps < 1:
            raise ValueError("line_search_steps must be at least 1")
        if self.max_adam_iters < 1 or self.stall_patience < 1:
            raise ValueError("max_adam_iters and stall_patience must be at least 1")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")


@dataclass
class AttackResult:
    success: bool
    adversarial: np.ndarray
    distortion: float | None
    iterations_used: int
    final_loss: float
    kind: str
    original: np.ndarray | None = None
    label: int | None = None
    perturbation: np.ndarray | None = None  # pre-clip r; adversarial = clip(x_o + r)
    latent: np.ndarray | None = None
    trajectory: list | None = None


def _finish(
    classifier, kind, x_o, t, margin, adversarial, iters,
    perturbation="auto", latent=None, trajectory=None, distortion="auto",
):
    logits = classifier.logits(adversarial)
    success = int(np.argmax(logits)) != t
    if distortion == "auto":
        distortion = l2_distortion(adversarial, x_o)
    if isinstance(perturbation, str) and perturbation == "auto":
        perturbation = adversarial - x_o
    return AttackResult(
        success=success,
        adversarial=adversarial,
        distortion=distortion,
        iterations_used=iters,
        final_loss=margin_loss(logits, t, margin),
        kind=kind,
        original=x_o,
        label=t,
        perturbation=perturbation,
        latent=latent,
        trajectory=trajectory,
    )


# ---------------------------------------------------------------------------
# signed-gradient family (L-infinity budget)
# ---------------------------------------------------------------------------


def fgsm(classifier, x_o, t, epsilon, margin=1.0):
    """One signed step of size epsilon down the margin loss."""
    x_o = np.asarray(x_o, dtype=np.float64)
    g = classifier.input_gradient(x_o, margin_loss_grad(classifier.logits(x_o), t, margin))
    if not g.any():
        return _finish(classifier, "fgsm", x_o, t, margin, x_o.copy(), 1)
    x_a = clip_valid(x_o - epsilon * np.sign(g))
    return _finish(classifier, "fgsm", x_o, t, margin, x_a, 1)


def ifgsm(classifier, x_o, t, epsilon, step, iters, margin=1.0):
    """Iterated signed steps, each projected back into the epsilon box."""
    x_o = np.asarray(x_o, dtype=np.float64)
    lo, hi = x_o - epsilon, x_o + epsilon
    x = x_o.copy()
    used = 0
    for _ in range(iters):
        logits, pullback = classifier.value_and_grad(x)
        if int(np.argmax(logits)) != t:
            break
        seed = margin_loss_grad(logits, t, margin)
        if not seed.any():
            break
        used += 1
        x = clip_valid(np.clip(x - step * np.sign(pullback(seed)), lo, hi))
    return _finish(classifier, "ifgsm", x_o, t, margin, x, used)


# ---------------------------------------------------------------------------
# normalized-gradient family (L2 budget)
# ---------------------------------------------------------------------------


def pgd2(classifier, x_o, t, epsilon, step, iters, smoothing=None, margin=1.0, log_trajectory=False):
    """Projected gradient descent on the L2 ball of radius epsilon.

    Each gradient is rescaled to length `step`; with a smoothing operator
    the gradient is first replaced by its normalized smoothing, which
    keeps every update smooth like the guide image.
    """
    x_o = np.asarray(x_o, dtype=np.float64)
    kind = "pgd2" if smoothing is None else "spgd2"
    x = x_o.copy()
    used = 0
    trajectory = [] if log_trajectory else None
    for _ in range(iters):
        logits, pullback = classifier.value_and_grad(x)
        if trajectory is not None:
            trajectory.append(
                (used, margin_loss(logits, t, margin), l2_distortion(x, x_o), int(np.argmax(logits)) != t)
            )
        if int(np.argmax(logits)) != t:
            break
        seed = margin_loss_grad(logits, t, margin)
        if not seed.any():
            break
        g = pullback(seed)
        if smoothing is not None:
            g = smooth_normalized(smoothing, g)
        norm = np.linalg.norm(g)
        if norm == 0.0:
            break
        used += 1
        x = x - (step / norm) * g
        delta = x - x_o
        dnorm = np.linalg.norm(delta)
        if dnorm > epsilon:
            delta *= epsilon / dnorm
        x = clip_valid(x_o + delta)
    return _finish(classifier, kind, x_o, t, margin, x, used, trajectory=trajectory)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators for one optimized variable."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, var, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(m=np.zeros_like(var), v=np.zeros_like(var), beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state, grad, lr):
    """Advance the state one step; returns the update to add to the variable."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.m.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match state {state.m.shape}")
    state.step_count += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.step_count)
    v_hat = state.v / (1.0 - state.beta2**state.step_count)
    return -lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# optimizer-based family (unconstrained r, or latent z with r = smooth(z))
# ---------------------------------------------------------------------------


def cw_attack(classifier, x_o, t, cfg=AttackConfig()):
    """Minimize lambda*||r||^2 + margin loss over an unconstrained r."""
    return _optimize_attack(classifier, x_o, t, cfg, smoothing=None)


def scw_attack(classifier, op, x_o, t, cfg=AttackConfig()):
    """The same objective over a latent z, with r = smooth_normalized(z).

    op must be built with x_o as the guide so the perturbation is smooth
    where the attacked image is flat.  The gradient with respect to z is
    the smoothing adjoint of the perturbation-space gradient.
    """
    return _optimize_attack(classifier, x_o, t, cfg, smoothing=op)


def _optimize_attack(classifier, x_o, t, cfg, smoothing):
    x_o = np.asarray(x_o, dtype=np.float64)
    kind = "cw" if smoothing is None else "scw"
    best = None  # (distortion, adversarial, latent)
    trajectory = [] if cfg.log_trajectory else None
    total_iters = 0

    c = cfg.initial_c
    c_fail = None  # largest c that failed so far
    c_ok = None  # smallest c that succeeded so far
    for _ in range(cfg.line_search_steps):
        best, run_iters, run_success = _adam_run(classifier, x_o, t, cfg, smoothing, 1.0 / c, best, trajectory, total_iters)
        total_iters += run_iters
        if run_success:
            c_ok = c if c_ok is None else min(c_ok, c)
            c = c / 10.0 if c_fail is None else math.sqrt(c_fail * c)
        else:
            c_fail = c if c_fail is None else max(c_fail, c)
            c = c * 10.0 if c_ok is None else math.sqrt(c * c_ok)

    if best is None:
        return _finish(
            classifier, kind, x_o, t, cfg.margin, x_o.copy(), total_iters,
            perturbation=None, trajectory=trajectory, distortion=None,
        )
    _, adversarial, perturbation, latent = best
    return _finish(
        classifier, kind, x_o, t, cfg.margin, adversarial, total_iters,
        perturbation=perturbation, latent=latent, trajectory=trajectory,
    )


def _eval_point(classifier, smoothing, x_o, t, z, lam, margin):
    """Objective, pieces, and latent gradient at one optimizer iterate.

    With smoothing, z is the latent and r = smooth_normalized(z); without,
    r is z itself.  The chain rule passes the image-space gradient through
    the clip mask and then (if present) through the smoothing adjoint.
    """
    r = smooth_normalized(smoothing, z) if smoothing is not None else z
    u = x_o + r
    x_adv = clip_valid(u)
    logits, pullback = classifier.value_and_grad(x_adv)
    loss = margin_loss(logits, t, margin)
    objective = lam * float(np.sum(r * r)) + loss

    seed = margin_loss_grad(logits, t, margin)
    grad_r = 2.0 * lam * r
    if seed.any():
        grad_r = grad_r + _clip_grad_mask(u) * pullback(seed)
    grad_z = smooth_adjoint(smoothing, grad_r) if smoothing is not None else grad_r
    return objective, loss, r, x_adv, logits, grad_z


def latent_objective(classifier, op, x_o, t, z, lam, margin=1.0):
    """Value of the latent-space objective lam*||r||^2 + margin loss."""
    objective, _, _, _, _, _ = _eval_point(classifier, op, x_o, t, np.asarray(z, dtype=np.float64), lam, margin)
    return objective


def latent_gradient(classifier, op, x_o, t, z, lam, margin=1.0):
    """Analytic gradient of latent_objective with respect to z."""
    _, _, _, _, _, grad_z = _eval_point(classifier, op, x_o, t, np.asarray(z, dtype=np.float64), lam, margin)
    return grad_z


def _adam_run(classifier, x_o, t, cfg, smoothing, lam, best, trajectory, iter_offset):
    """One Adam descent at a fixed trade-off; returns (best, iters, success)."""
    z = np.zeros_like(x_o)
    adam = AdamState.like(z)
    best_objective = math.inf
    stall = 0
    succeeded = False

    for k in range(cfg.max_adam_iters):
        objective, _, r, x_adv, logits, grad_z = _eval_point(classifier, smoothing, x_o, t, z, lam, cfg.margin)

        flipped = int(np.argmax(logits)) != t
        if flipped:
            succeeded = True
            distortion = l2_distortion(x_adv, x_o)
            if best is None or distortion < best[0]:
                best = (distortion, x_adv, r.copy(), z.copy() if smoothing is not None else None)
        if trajectory is not None:
            trajectory.append((iter_offset + k, objective, l2_distortion(x_adv, x_o), flipped))

        z = z + adam_step(adam, grad_z, cfg.learning_rate)

        if objective < best_objective:
            best_objective = objective
            stall = 0
        else:
            stall += 1
            if stall >= cfg.stall_patience:
                return best, k + 1, succeeded
    return best, cfg.max_adam_iters, succeeded


# ---------------------------------------------------------------------------
# dispatch and trajectory export
# ---------------------------------------------------------------------------


def make_attack(classifier, cfg):
    """Bind an AttackConfig to a callable (image, label) -> AttackResult.

    The smoothing-constrained kinds build a fresh operator guided by each
    attacked image, which is what makes the perturbation smooth like that
    image rather than like some fixed reference.
    """
    kind = cfg.kind
    if kind not in ATTACK_KINDS:
        raise ValueError(f"kind must be one of {ATTACK_KINDS}, got {kind!r}")

    def run(x_o, t):
        if kind == "fgsm":
            return fgsm(classifier, x_o, t, cfg.epsilon, margin=cfg.margin)
        if kind == "ifgsm":
            return ifgsm(classifier, x_o, t, cfg.epsilon, cfg.step, cfg.iterations, margin=cfg.margin)
        if kind == "pgd2":
            return pgd2(
                classifier, x_o, t, cfg.epsilon, cfg.step, cfg.iterations,
                margin=cfg.margin, log_trajectory=cfg.log_trajectory,
            )
        if kind == "spgd2":
            op = build_smoothing_operator(x_o, cfg.alpha, cfg.graph)
            return pgd2(
                classifier, x_o, t, cfg.epsilon, cfg.step, cfg.iterations,
                smoothing=op, margin=cfg.margin, log_trajectory=cfg.log_trajectory,
            )
        if kind == "cw":
            return cw_attack(classifier, x_o, t, cfg)
        op = build_smoothing_operator(x_o, cfg.alpha, cfg.graph)
        return scw_attack(classifier, op, x_o, t, cfg)

    run.config = cfg
    return run


def attack_with_epsilon(cfg, epsilon):
    """Copy of cfg with a different budget (for epsilon sweeps)."""
    return replace(cfg, epsilon=epsilon)


def write_trajectory(trajectory, path):
    """CSV audit log: one row per optimizer iteration."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "distortion", "success"])
        for iteration, loss, distortion, success in trajectory or ():
            writer.writerow([iteration, f"{loss:.12g}", f"{distortion:.12g}", int(success)])
