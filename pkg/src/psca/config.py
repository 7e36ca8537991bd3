"""Flat ``key=value`` experiment configuration.

A config file holds one ``key=value`` per line (``#`` starts a comment).
Command-line overrides are applied afterwards in order, so the last
assignment of a key wins. Unknown keys are rejected.
"""

import os
from dataclasses import dataclass, fields

from .errors import InvalidArgumentError

ALGORITHMS = ("psca", "serial-cyclic", "serial-randomized")
RULES = ("cyclic", "randomized")
FAMILIES = ("proximal-linear", "block-proximal")
STEP_KINDS = ("constant", "diminishing", "decrease-then-hold")
ALPHA_BASES = ("lipschitz", "curvature")
METHODS = ("shift", "rescale")
OUTPUT_ENV = "PSCA_OUTPUT_DIR"


@dataclass(frozen=True)
class GbarValue:
    """A number, optionally expressed as a multiple of ``gamma_bar`` (``"0.5gbar"``)."""

    value: float
    relative: bool = False

    def resolve(self, gbar):
        if not self.relative:
            return self.value
        if gbar is None:
            raise InvalidArgumentError("a gbar-relative step needs known problem constants")
        return self.value * gbar

    def __str__(self):
        return f"{self.value!r}gbar" if self.relative else repr(self.value)


def _gbar_value(text):
    text = text.strip()
    if text.endswith("gbar"):
        head = text[:-4].strip().rstrip("*")
        return GbarValue(float(head) if head else 1.0, True)
    return GbarValue(float(text))


def _optional_float(text):
    return None if text.strip().lower() in ("auto", "") else float(text)


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _str(text):
    return text.strip()


@dataclass
class ExperimentConfig:
    """Every knob of a ``generate``/``solve``/``audit`` invocation."""

    # instance
    instance: str = ""
    rows: int = 200
    cols: int = 1000
    sparsity: float = 0.01
    lam: float = 2.5
    instance_seed: int = 1
    method: str = "shift"
    density: float = 1.0
    block_size: int = 1
    # algorithm
    algorithm: str = "psca"
    rule: str = "randomized"
    surrogate: str = "proximal-linear"
    alpha: float | None = None
    alpha_factor: float = 1.1
    alpha_basis: str = "lipschitz"
    step: str = "constant"
    gamma0: GbarValue = GbarValue(0.5, True)
    eta: float = 0.0
    floor: GbarValue = GbarValue(0.5, True)
    workers: int = 1
    coords_per_worker: int = 40
    group_size: int = 0
    probability: float = 0.0
    shuffle_seed: int = -1
    max_iters: int = 100000
    stop_tol: float = 0.0
    record_every: int = 1
    inner_tol: float = 1e-8
    seed: int = 0
    check_gate: bool = True
    # audit
    probe_trials: int = 1000
    probe_seed: int = 0
    burn_in: int = 0
    # output
    output_dir: str = ""
    name: str = "run"

    def __post_init__(self):
        if not self.output_dir:
            self.output_dir = os.environ.get(OUTPUT_ENV, ".")
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise InvalidArgumentError(msg)

        need(self.rows >= 1 and self.cols >= 1, "rows and cols must be positive")
        need(self.lam > 0, "lam must be positive")
        need(0 < self.density <= 1, "density must lie in (0, 1]")
        need(self.block_size >= 1, "block_size must be positive")
        need(self.workers >= 1, "workers must be at least 1")
        need(self.coords_per_worker >= 1, "coords_per_worker must be at least 1")
        need(self.group_size >= 0, "group_size must be nonnegative (0 = workers * coords_per_worker)")
        need(0 <= self.probability <= 1, "probability must lie in [0, 1] (0 = auto)")
        need(self.max_iters >= 1, "max_iters must be at least 1")
        need(self.stop_tol >= 0, "stop_tol must be nonnegative")
        need(self.record_every >= 1, "record_every must be at least 1")
        need(self.inner_tol > 0, "inner_tol must be positive")
        need(self.alpha is None or self.alpha > 0, "alpha must be positive")
        need(self.alpha_factor > 0, "alpha_factor must be positive")
        need(self.eta >= 0, "eta must be nonnegative")
        need(self.gamma0.value > 0, "gamma0 must be positive")
        need(self.probe_trials >= 1, "probe_trials must be at least 1")
        need(self.burn_in >= 0, "burn_in must be nonnegative")
        need(self.name and os.sep not in self.name, "name must be a plain file stem")

    def resolved_group_size(self):
        return self.group_size or self.workers * self.coords_per_worker

    def to_items(self, exclude=()):
        """``(key, text)`` pairs in field order, suitable for provenance headers."""
        out = []
        for f in fields(self):
            if f.name in exclude:
                continue
            v = getattr(self, f.name)
            out.append((f.name, "auto" if v is None else (repr(v) if isinstance(v, float) else str(v))))
        return out


_PARSERS = {
    "instance": _str,
    "rows": int,
    "cols": int,
    "sparsity": float,
    "lam": float,
    "instance_seed": int,
    "method": _choice(METHODS),
    "density": float,
    "block_size": int,
    "algorithm": _choice(ALGORITHMS),
    "rule": _choice(RULES),
    "surrogate": _choice(FAMILIES),
    "alpha": _optional_float,
    "alpha_factor": float,
    "alpha_basis": _choice(ALPHA_BASES),
    "step": _choice(STEP_KINDS),
    "gamma0": _gbar_value,
    "eta": float,
    "floor": _gbar_value,
    "workers": int,
    "coords_per_worker": int,
    "group_size": int,
    "probability": float,
    "shuffle_seed": int,
    "max_iters": int,
    "stop_tol": float,
    "record_every": int,
    "inner_tol": float,
    "seed": int,
    "check_gate": _bool,
    "probe_trials": int,
    "probe_seed": int,
    "burn_in": int,
    "output_dir": _str,
    "name": _str,
}
ALIASES = {"lambda": "lam", "q": "workers"}
CONFIG_KEYS = tuple(_PARSERS)


def parse_assignment(text):
    """``"key=value"`` -> ``(canonical key, raw value)``."""
    if "=" not in text:
        raise InvalidArgumentError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    key = key.strip()
    key = ALIASES.get(key, key)
    if key not in _PARSERS:
        raise InvalidArgumentError(f"unknown config key {key!r}")
    return key, value.strip()


def read_config_file(path):
    """Assignments of a config file, in file order."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                out.append(parse_assignment(line))
            except InvalidArgumentError as exc:
                raise InvalidArgumentError(f"{path}:{lineno}: {exc}") from None
    return out


def build_config(assignments):
    """Fold ``(key, raw)`` assignments (last wins) into a validated config."""
    values = {}
    for key, raw in assignments:
        try:
            values[key] = _PARSERS[key](raw)
        except ValueError as exc:
            raise InvalidArgumentError(f"bad value for {key}: {raw!r} ({exc})") from None
    return ExperimentConfig(**values)
