"""Strict JSON experiment configuration.

Unknown keys are rejected so that a config file fully determines a run.
Errors are raised as :class:`~csgd.errors.ConfigError` naming the dotted path
of the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .estimators import WEIGHTINGS

_REQUIRED = object()


def _section(raw: Any, path: str, allowed: dict[str, Any]) -> dict:
    """Check that ``raw`` is an object with only ``allowed`` keys; fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError(path, f"expected an object, got {type(raw).__name__}")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, "unknown field")
    out = {}
    for key, default in allowed.items():
        if key in raw:
            out[key] = raw[key]
        elif default is _REQUIRED:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
        else:
            out[key] = default
    return out


def _num(value, path, *, integer=False, minimum=None, exclusive=False, allow_none=False):
    if value is None and allow_none:
        return None
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok:
        raise ConfigError(path, f"expected {'an integer' if integer else 'a number'}, got {value!r}")
    if minimum is not None and (value <= minimum if exclusive else value < minimum):
        raise ConfigError(path, f"must be {'>' if exclusive else '>='} {minimum}, got {value!r}")
    return value if integer else float(value)


def _choice(value, path, choices):
    if value not in choices:
        raise ConfigError(path, f"expected one of {list(choices)}, got {value!r}")
    return value


TOPOLOGY_FIELDS = {
    "ring": {"n": _REQUIRED},
    "path": {"n": _REQUIRED},
    "complete": {"n": _REQUIRED},
    "random_geometric": {"n": _REQUIRED, "radius": _REQUIRED, "seed": None},
    "edges": {"n": _REQUIRED, "edges": _REQUIRED},
}

STRAGGLER_FIELDS = {
    "two_point": {"lo": _REQUIRED, "hi": _REQUIRED, "p_hi": _REQUIRED},
    "constant": {"c": _REQUIRED},
    "uniform_range": {"lo": _REQUIRED, "hi": _REQUIRED},
    "shifted_geometric": {"p": _REQUIRED},
}

LOSS_FIELDS = {
    "quadratic": {"clip": None},
    "linear_softmax": {"hidden_dim": 64, "clip": None},
    "relu_softmax": {"hidden_dim": 64, "clip": None},
}

DATA_FIELDS = {
    "gaussian": {"dim": _REQUIRED, "noise_sd": _REQUIRED, "spread": 1.0, "means": None},
    "gaussian_classes": {
        "input_dim": _REQUIRED,
        "spacing": _REQUIRED,
        "noise_sd": _REQUIRED,
        "per_class": None,
    },
    "idx": {"images": _REQUIRED, "labels": _REQUIRED, "limit": None},
}


def _typed(raw, path, table):
    if not isinstance(raw, dict):
        raise ConfigError(path, f"expected an object, got {type(raw).__name__}")
    kind = raw.get("type")
    if kind not in table:
        raise ConfigError(f"{path}.type", f"expected one of {sorted(table)}, got {kind!r}")
    spec = _section(raw, path, {"type": _REQUIRED, **table[kind]})
    return spec


def parse_consensus(value, path="consensus") -> tuple[str, int]:
    """``"perfect"`` or ``"approx:<m>"`` -> ``(mode, rounds)``."""
    if value == "perfect":
        return "perfect", 0
    if isinstance(value, str) and value.startswith("approx:"):
        try:
            m = int(value.split(":", 1)[1])
        except ValueError:
            raise ConfigError(path, f"bad round count in {value!r}") from None
        if m < 1:
            raise ConfigError(path, "approximate consensus needs at least 1 round")
        return "approximate", m
    raise ConfigError(path, f"expected 'perfect' or 'approx:<m>', got {value!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    topology: dict
    straggler: dict
    loss: dict
    data: dict
    weighting: str = "equal"
    consensus: str = "perfect"
    mixing: dict = field(default_factory=lambda: {"type": "metropolis"})
    gammas: list | None = None
    step_size: float = 0.1
    schedule: str = "constant"
    iterations: int = 100
    seed: int = 0
    eval_samples: int = 200
    eval_every: int = 1
    threads: int = 1
    metrics_path: str | None = None

    @property
    def n(self) -> int:
        return int(self.topology["n"])

    @property
    def consensus_mode(self) -> tuple[str, int]:
        return parse_consensus(self.consensus)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return from_dict({**self.to_dict(), **kw})

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


TOP_FIELDS = {
    "topology": _REQUIRED,
    "straggler": _REQUIRED,
    "loss": _REQUIRED,
    "data": _REQUIRED,
    "weighting": "equal",
    "consensus": "perfect",
    "mixing": {"type": "metropolis"},
    "gammas": None,
    "step_size": 0.1,
    "schedule": "constant",
    "iterations": 100,
    "seed": 0,
    "eval_samples": 200,
    "eval_every": 1,
    "threads": 1,
    "metrics_path": None,
}


def from_dict(raw: Any) -> ExperimentConfig:
    top = _section(raw, "", TOP_FIELDS)

    topo = _typed(top["topology"], "topology", TOPOLOGY_FIELDS)
    n = _num(topo["n"], "topology.n", integer=True, minimum=2)
    if topo["type"] == "random_geometric":
        _num(topo["radius"], "topology.radius", minimum=0, exclusive=True)
        _num(topo["seed"], "topology.seed", integer=True, minimum=0, allow_none=True)
    if topo["type"] == "edges":
        edges = topo["edges"]
        if not isinstance(edges, list) or not all(
            isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) and not isinstance(v, bool) for v in e)
            for e in edges
        ):
            raise ConfigError("topology.edges", "expected a list of [i, j] integer pairs")

    mixing = top["mixing"]
    if not isinstance(mixing, dict) or mixing.get("type") not in ("metropolis", "laplacian"):
        raise ConfigError("mixing.type", "expected 'metropolis' or 'laplacian'")
    if mixing["type"] == "laplacian":
        mixing = _section(mixing, "mixing", {"type": _REQUIRED, "eps": _REQUIRED})
        _num(mixing["eps"], "mixing.eps", minimum=0, exclusive=True)
    else:
        mixing = _section(mixing, "mixing", {"type": _REQUIRED})

    strag = _typed(top["straggler"], "straggler", STRAGGLER_FIELDS)
    for k in ("lo", "hi", "c"):
        if k in strag:
            _num(strag[k], f"straggler.{k}", integer=True, minimum=1)
    if "p_hi" in strag:
        p = _num(strag["p_hi"], "straggler.p_hi", minimum=0)
        if p > 1:
            raise ConfigError("straggler.p_hi", "must be a probability")
    if "p" in strag:
        p = _num(strag["p"], "straggler.p", minimum=0, exclusive=True)
        if p > 1:
            raise ConfigError("straggler.p", "must be a probability")
    if "lo" in strag and strag["hi"] < strag["lo"]:
        raise ConfigError("straggler.hi", "must be >= lo")

    loss = _typed(top["loss"], "loss", LOSS_FIELDS)
    _num(loss["clip"], "loss.clip", minimum=0, exclusive=True, allow_none=True)
    if "hidden_dim" in loss:
        _num(loss["hidden_dim"], "loss.hidden_dim", integer=True, minimum=1)

    data = _typed(top["data"], "data", DATA_FIELDS)
    if data["type"] == "gaussian":
        if loss["type"] != "quadratic":
            raise ConfigError("data.type", "gaussian data pairs with the quadratic loss")
        _num(data["dim"], "data.dim", integer=True, minimum=1)
        _num(data["noise_sd"], "data.noise_sd", minimum=0)
        _num(data["spread"], "data.spread", minimum=0)
        if data["means"] is not None:
            m = data["means"]
            if not (isinstance(m, list) and len(m) == n and all(isinstance(r, list) and len(r) == data["dim"] for r in m)):
                raise ConfigError("data.means", f"expected {n} rows of length {data['dim']}")
    else:
        if loss["type"] == "quadratic":
            raise ConfigError("loss.type", f"{data['type']} data needs a softmax loss")
        if data["type"] == "gaussian_classes":
            _num(data["input_dim"], "data.input_dim", integer=True, minimum=n)
            _num(data["spacing"], "data.spacing", minimum=0)
            _num(data["noise_sd"], "data.noise_sd", minimum=0)
            _num(data["per_class"], "data.per_class", integer=True, minimum=1, allow_none=True)
        else:
            for k in ("images", "labels"):
                if not isinstance(data[k], str):
                    raise ConfigError(f"data.{k}", "expected a file path")
            _num(data["limit"], "data.limit", integer=True, minimum=1, allow_none=True)

    gammas = top["gammas"]
    if gammas is not None:
        if not (isinstance(gammas, list) and len(gammas) == n):
            raise ConfigError("gammas", f"expected a list of {n} priors")
        for i, g in enumerate(gammas):
            _num(g, f"gammas[{i}]", minimum=0)
        if abs(sum(gammas) - 1.0) > 1e-12:
            raise ConfigError("gammas", "priors must sum to 1")

    _choice(top["weighting"], "weighting", WEIGHTINGS)
    parse_consensus(top["consensus"])
    step = _num(top["step_size"], "step_size", minimum=0, exclusive=True)
    _choice(top["schedule"], "schedule", ("constant", "inv_sqrt"))
    iters = _num(top["iterations"], "iterations", integer=True, minimum=0)
    seed = _num(top["seed"], "seed", integer=True, minimum=0)
    if seed >= 2**64:
        raise ConfigError("seed", "must fit in 64 bits")
    _num(top["eval_samples"], "eval_samples", integer=True, minimum=1)
    _num(top["eval_every"], "eval_every", integer=True, minimum=1)
    _num(top["threads"], "threads", integer=True, minimum=1)
    if top["metrics_path"] is not None and not isinstance(top["metrics_path"], str):
        raise ConfigError("metrics_path", "expected a file path")

    return ExperimentConfig(
        topology=topo,
        straggler=strag,
        loss=loss,
        data=data,
        weighting=top["weighting"],
        consensus=top["consensus"],
        mixing=mixing,
        gammas=gammas,
        step_size=step,
        schedule=top["schedule"],
        iterations=iters,
        seed=seed,
        eval_samples=top["eval_samples"],
        eval_every=top["eval_every"],
        threads=top["threads"],
        metrics_path=top["metrics_path"],
    )


def load(path) -> ExperimentConfig:
    """Read and validate a config file; JSON syntax errors report line and column."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return from_dict(raw)

