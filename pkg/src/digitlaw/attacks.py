"""White-box adversarial attacks: one-step FGSM and iterative PGD.

Both attacks maximise the classifier's cross-entropy at the true label and
keep the perturbed image inside a norm ball around the original as well as
inside the valid pixel range [0, 1]. Attacks are pure given a read-only
model; randomness is fully determined by the configured seed.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, replace

import numpy as np

from digitlaw.imaging import ImageTensor, Scale
from digitlaw.tinynet.network import Model, probs_and_input_grad


class AttackMethod(enum.Enum):
    FGSM = "fgsm"
    PGD = "pgd"


class NormKind(enum.Enum):
    LINF = "linf"
    L2 = "l2"


@dataclass(frozen=True)
class AttackConfig:
    """Attack parameters on the unit pixel scale.

    ``step_size`` of None lets PGD default to epsilon / 10. ``early_stop``
    halts PGD at the first misclassification; full-trace studies disable it
    to keep iterating to ``max_iters``.
    """

    method: AttackMethod
    norm: NormKind
    epsilon: float
    step_size: float | None = None
    max_iters: int = 40
    random_start: bool = True
    early_stop: bool = True
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be nonnegative")
        if self.step_size is not None and self.step_size <= 0.0:
            raise ValueError("step size must be positive when given")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.method is AttackMethod.FGSM and self.norm is not NormKind.LINF:
            raise ValueError("the sign-based one-step attack is defined for the sup norm only")
        if self.step_size is not None and self.step_size > self.epsilon:
            warnings.warn(
                f"step size {self.step_size} exceeds the ball radius {self.epsilon}; "
                "iterates will bounce off the projection",
                stacklevel=2,
            )

    def effective_step_size(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return self.epsilon / 10.0

    def label(self) -> str:
        """Stable human-readable identifier, e.g. ``pgd-linf-eps0.2``."""
        return f"{self.method.value}-{self.norm.value}-eps{self.epsilon:g}"

    def with_seed(self, rng_seed: int) -> "AttackConfig":
        return replace(self, rng_seed=rng_seed)


@dataclass(frozen=True)
class TraceStep:
    """One post-step iterate: the image, its predicted class and its loss."""

    image: ImageTensor
    predicted_class: int
    loss: float


@dataclass(frozen=True)
class AttackOutcome:
    final_image: ImageTensor
    success: bool
    iterations_used: int
    trace: tuple[TraceStep, ...]
    config: AttackConfig

    def __post_init__(self) -> None:
        if len(self.trace) != self.iterations_used:
            raise ValueError("trace must hold one entry per iteration used")


def _project_linf(point: np.ndarray, center: np.ndarray, epsilon: float) -> np.ndarray:
    return np.clip(point, center - epsilon, center + epsilon)


def _project_l2(point: np.ndarray, center: np.ndarray, epsilon: float) -> np.ndarray:
    delta = point - center
    norm = float(np.sqrt(np.sum(delta * delta)))
    if norm <= epsilon:
        return point
    return center + delta * (epsilon / norm)


def project_ball(point: ImageTensor, center: ImageTensor, epsilon: float, norm: NormKind) -> ImageTensor:
    """Project ``point`` onto the norm ball of radius ``epsilon`` around ``center``.

    Points already inside come back unchanged. The result is not clipped to
    any pixel range; callers clamp separately when needed.
    """
    if point.shape != center.shape:
        raise ValueError(f"point shape {point.shape} does not match center shape {center.shape}")
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    if norm is NormKind.LINF:
        return ImageTensor(_project_linf(point.data, center.data, epsilon), point.scale)
    projected = _project_l2(point.data, center.data, epsilon)
    if projected is point.data:
        return point
    return ImageTensor(projected, point.scale)


def _evaluate(model: Model, x: np.ndarray, label: int):
    probs, grad = probs_and_input_grad(model, x, label)
    pred = int(probs.argmax())
    p = probs[label]
    loss = float(-np.log(p)) if p > 0.0 else float("inf")
    return pred, loss, grad


def fgsm(model: Model, image: ImageTensor, label: int, epsilon: float) -> AttackOutcome:
    """One-step perturbation epsilon * sign(input gradient), clipped to [0, 1]."""
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    config = AttackConfig(
        method=AttackMethod.FGSM,
        norm=NormKind.LINF,
        epsilon=epsilon,
        max_iters=1,
        random_start=False,
    )
    x0 = image.data
    _, _, grad = _evaluate(model, x0, label)
    adv = np.clip(x0 + epsilon * np.sign(grad), 0.0, 1.0)
    pred, loss, _ = _evaluate(model, adv, label)
    final = ImageTensor(adv, Scale.UNIT)
    step = TraceStep(image=final, predicted_class=pred, loss=loss)
    return AttackOutcome(
        final_image=final,
        success=pred != int(label),
        iterations_used=1,
        trace=(step,),
        config=config,
    )


def _random_start(x0: np.ndarray, config: AttackConfig, rng: np.random.Generator) -> np.ndarray:
    if config.epsilon == 0.0:
        return x0.copy()
    if config.norm is NormKind.LINF:
        return np.clip(x0 + rng.uniform(-config.epsilon, config.epsilon, x0.shape), 0.0, 1.0)
    direction = rng.normal(size=x0.shape)
    norm = float(np.sqrt(np.sum(direction * direction)))
    if norm == 0.0:
        return x0.copy()
    radius = config.epsilon * rng.uniform() ** (1.0 / x0.size)
    return np.clip(x0 + direction * (radius / norm), 0.0, 1.0)


def pgd(model: Model, image: ImageTensor, label: int, config: AttackConfig) -> AttackOutcome:
    """Iterated projected gradient ascent on the loss.

    Sup-norm mode steps along the gradient sign; 2-norm mode along the
    normalised gradient (a zero gradient skips the step but the iteration
    still counts). Every iterate is projected back onto the epsilon ball
    and clamped to the pixel range. With ``early_stop`` the loop ends at
    the first misclassification, otherwise it runs to ``max_iters`` and the
    full per-iteration trace is retained.
    """
    if config.method is not AttackMethod.PGD:
        raise ValueError(f"pgd() requires a PGD configuration, got {config.method.value}")
    label = int(label)
    rng = np.random.default_rng(config.rng_seed)
    x0 = image.data
    alpha = config.effective_step_size()
    x = _random_start(x0, config, rng) if config.random_start else x0.copy()

    _, _, grad = _evaluate(model, x, label)
    trace: list[TraceStep] = []
    for _ in range(config.max_iters):
        if config.norm is NormKind.LINF:
            x = np.clip(_project_linf(x + alpha * np.sign(grad), x0, config.epsilon), 0.0, 1.0)
        else:
            grad_norm = float(np.sqrt(np.sum(grad * grad)))
            if grad_norm > 0.0:
                x = np.clip(_project_l2(x + alpha * grad / grad_norm, x0, config.epsilon), 0.0, 1.0)
        pred, loss, grad = _evaluate(model, x, label)
        trace.append(TraceStep(image=ImageTensor(x, Scale.UNIT), predicted_class=pred, loss=loss))
        if config.early_stop and pred != label:
            break
    return AttackOutcome(
        final_image=trace[-1].image,
        success=trace[-1].predicted_class != label,
        iterations_used=len(trace),
        trace=tuple(trace),
        config=config,
    )
