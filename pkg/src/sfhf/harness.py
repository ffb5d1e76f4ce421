"""Run configurations, benchmark execution, and CSV traces.

A run configuration is a flat TOML document.  Nested tables are flattened
into dotted keys, so ``[sqrt]\\nrk_steps = 40`` and ``sqrt.rk_steps = 40``
are equivalent.  Unknown keys are rejected.

Example::

    problem = "saddle"
    method = "sfhf"
    alpha = 0.5
    max_outer_iters = 50
    sqrt.rk_steps = 20
"""

import csv
import dataclasses
import io
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .dense import MAX_DIM
from .errors import ConfigError
from .objectives import PROBLEMS, make_problem
from .optimizers import METHODS, SfhfConfig, TraceRecord, run
from .sqrt_ode import SqrtApplyConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

TRACE_HEADER = ["iter", "f", "grad_norm", "step_norm", "inner_cg_iters", "sqrt_op_applies", "wall_seconds"]
COMPARE_HEADER = ["method", "final_f", "final_grad_norm", "iterations", "operator_applies"]

DEFAULT_ALPHA = {"gd": 1e-3, "newton-dense": 1.0, "sfn-dense": 1.0, "sfhf": 1.0}

_INT, _FLOAT, _STR, _FLOATS, _INTS = "int", "float", "str", "list[float]", "list[int]"

# key -> (type, default)
PROBLEM_KEYS = {
    "dim": (_INT, None),
    "eigenvalues": (_FLOATS, None),
    "rotation_seed": (_INT, None),
    "linear_term": (_FLOATS, None),
    "layers": (_INTS, None),
    "theta0": (_FLOATS, None),
    "init_scale": (_FLOAT, None),
}
OPTIMIZER_KEYS = {
    "alpha": (_FLOAT, None),
    "damping": (_FLOAT, 1e-6),
    "outer_cg_tol": (_FLOAT, 1e-6),
    "outer_cg_max_iters": (_INT, 250),
    "max_outer_iters": (_INT, 100),
    "grad_tol": (_FLOAT, 1e-8),
}
SQRT_KEYS = {
    "sqrt." + f.name: (_INT if f.type in (int, "int") else _FLOAT, f.default)
    for f in dataclasses.fields(SqrtApplyConfig)
}
TOP_KEYS = {
    "problem": (_STR, "rosenbrock"),
    "method": (_STR, "sfhf"),
    "seed": (_INT, 0),
    "output_path": (_STR, "trace.csv"),
}
ALL_KEYS = {**TOP_KEYS, **PROBLEM_KEYS, **OPTIMIZER_KEYS, **SQRT_KEYS}

_positive = (lambda x: x > 0, "must be > 0")
_at_least_one = (lambda x: x >= 1, "must be >= 1")
RANGES = {
    "dim": _at_least_one,
    "layers": (lambda xs: min(xs) >= 1, "sizes must be >= 1"),
    "init_scale": (lambda x: x >= 0, "must be >= 0"),
    "alpha": _positive,
    "damping": (lambda x: x >= 0, "must be >= 0"),
    "outer_cg_tol": _positive,
    "outer_cg_max_iters": _at_least_one,
    "max_outer_iters": _at_least_one,
    "grad_tol": _positive,
    "sqrt.rk_steps": _at_least_one,
    "sqrt.inner_tol": _positive,
    "sqrt.inner_max_iters": _at_least_one,
    "sqrt.norm_target": (lambda x: 0 < x < 1, "must lie in (0, 1)"),
    "sqrt.norm_safety": (lambda x: x >= 1, "must be >= 1"),
    "sqrt.norm_power_iters": _at_least_one,
    "sqrt.time_grading": (lambda x: x >= 0, "must be >= 0"),
}


@dataclass
class RunConfig:
    problem: str = "rosenbrock"
    problem_params: dict = field(default_factory=dict)
    method: str = "sfhf"
    optimizer: SfhfConfig = field(default_factory=lambda: SfhfConfig(alpha=DEFAULT_ALPHA["sfhf"]))
    output_path: str = "trace.csv"
    seed: int = 0


def _flatten(table, prefix=""):
    flat = {}
    for key, value in table.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def _coerce(key, kind, value):
    def bad():
        return ConfigError(key, f"expected {kind}, got {type(value).__name__} {value!r}")

    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad()
        return value
    if kind == _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad()
        value = float(value)
        if not np.isfinite(value):
            raise ConfigError(key, "must be finite")
        return value
    if kind == _STR:
        if not isinstance(value, str):
            raise bad()
        return value
    if not isinstance(value, list) or not value:
        raise bad()
    item = _INT if kind == _INTS else _FLOAT
    return [_coerce(key, item, v) for v in value]


def parse_config(text):
    """Parse and validate a run configuration document.

    Raises :class:`ConfigError` naming the offending key for syntax errors,
    unknown keys, wrong types, and out-of-range values.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<document>", f"not a valid key-value document: {exc}") from None
    values = {}
    for key, value in _flatten(raw).items():
        if key not in ALL_KEYS:
            raise ConfigError(key, "unknown key")
        values[key] = _coerce(key, ALL_KEYS[key][0], value)

    problem = values.get("problem", TOP_KEYS["problem"][1])
    if problem not in PROBLEMS:
        raise ConfigError("problem", f"unknown problem {problem!r}; choose from {', '.join(PROBLEMS)}")
    method = values.get("method", TOP_KEYS["method"][1])
    if method not in METHODS:
        raise ConfigError("method", f"unknown method {method!r}; choose from {', '.join(METHODS)}")

    sqrt_kwargs = {}
    for key, (_, default) in SQRT_KEYS.items():
        sqrt_kwargs[key[len("sqrt."):]] = values.get(key, default)
    opt_kwargs = {key: values.get(key, default) for key, (_, default) in OPTIMIZER_KEYS.items()}
    if opt_kwargs["alpha"] is None:
        opt_kwargs["alpha"] = DEFAULT_ALPHA[method]

    for key, value in values.items():
        if key in RANGES:
            ok, requirement = RANGES[key]
            if not ok(value):
                raise ConfigError(key, f"{value!r} out of range: {requirement}")
    optimizer = SfhfConfig(sqrt_cfg=SqrtApplyConfig(**sqrt_kwargs), **opt_kwargs)

    params = {k: values[k] for k in PROBLEM_KEYS if k in values}
    seed = values.get("seed", 0)
    cfg = RunConfig(
        problem=problem,
        problem_params=params,
        method=method,
        optimizer=optimizer,
        output_path=values.get("output_path", TOP_KEYS["output_path"][1]),
        seed=seed,
    )
    _check_problem(cfg)
    return cfg


def _check_problem(cfg):
    p = cfg.problem_params
    if cfg.problem == "rosenbrock" and p.get("dim", 2) % 2:
        raise ConfigError("dim", "rosenbrock needs an even dimension")
    try:
        obj, _ = make_problem(cfg.problem, p, cfg.seed)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("problem", str(exc)) from None
    if cfg.method in ("newton-dense", "sfn-dense") and obj.dim > MAX_DIM:
        raise ConfigError("dim", f"dense methods are limited to dim <= {MAX_DIM}, got {obj.dim}")


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from None


# -- traces -------------------------------------------------------------------


def _fmt(x):
    return format(float(x), ".17g")


def trace_to_csv(trace):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for r in trace:
        w.writerow([
            r.iter, _fmt(r.f_value), _fmt(r.grad_norm), _fmt(r.step_norm),
            r.inner_cg_iters, r.sqrt_operator_applies, _fmt(r.wall_seconds),
        ])
    return buf.getvalue()


def parse_trace_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != TRACE_HEADER:
        raise ValueError("trace CSV header does not match " + ",".join(TRACE_HEADER))
    return [
        TraceRecord(int(it), float(f), float(gn), float(sn), int(cg), int(sq), float(ws))
        for it, f, gn, sn, cg, sq, ws in rows[1:]
    ]


def read_trace(path):
    with open(path, encoding="utf-8") as fh:
        return parse_trace_csv(fh.read())


def write_text_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".sfhf-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- execution -----------------------------------------------------------------


@dataclass
class RunOutcome:
    config: RunConfig
    result: object
    final_f: float
    final_grad_norm: float

    @property
    def iterations(self):
        return len(self.result.trace)


def perform(cfg, callback=None):
    """Run one configuration in memory and return a :class:`RunOutcome`."""
    obj, theta0 = make_problem(cfg.problem, cfg.problem_params, cfg.seed)
    result = run(obj, theta0, cfg.method, cfg.optimizer, callback=callback)
    return RunOutcome(cfg, result, obj.eval(result.theta), float(np.linalg.norm(obj.grad(result.theta))))


def summary_line(outcome):
    r = outcome.result
    line = (
        f"problem={outcome.config.problem} method={outcome.config.method} "
        f"final_f={outcome.final_f:.10e} final_grad_norm={outcome.final_grad_norm:.6e} "
        f"iterations={outcome.iterations} stop_reason={r.stop_reason} "
        f"operator_applies={r.hvp_calls}"
    )
    if r.error:
        line += f" error={r.error!r}"
    return line


def execute(cfg, stdout=None, stderr=None):
    """Run ``cfg``, write its trace CSV, print a summary; return the exit status.

    0 on ``converged`` or ``budget``, 1 on ``failed``, 2 when the output
    cannot be written.
    """
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    out_dir = os.path.dirname(os.path.abspath(cfg.output_path))
    if not os.path.isdir(out_dir) or not os.access(out_dir, os.W_OK):
        print(f"error: cannot write trace to {cfg.output_path}", file=stderr)
        return 2
    outcome = perform(cfg)
    try:
        write_text_atomic(cfg.output_path, trace_to_csv(outcome.result.trace))
    except OSError as exc:
        print(f"error: cannot write trace to {cfg.output_path}: {exc}", file=stderr)
        return 2
    print(summary_line(outcome), file=stdout)
    return 1 if outcome.result.stop_reason == "failed" else 0


def compare(cfgs):
    """Run several methods on one problem and return ``(rows, outcomes)``.

    All configurations must share the problem, its parameters, and the
    seed.  Rows are ordered like the input.
    """
    if not cfgs:
        raise ConfigError("problem", "compare needs at least one configuration")
    first = cfgs[0]
    for c in cfgs[1:]:
        if (c.problem, c.problem_params, c.seed) != (first.problem, first.problem_params, first.seed):
            raise ConfigError("problem", "all compared configurations must share problem, parameters and seed")
    outcomes = [perform(c) for c in cfgs]
    rows = [
        {
            "method": o.config.method,
            "final_f": o.final_f,
            "final_grad_norm": o.final_grad_norm,
            "iterations": o.iterations,
            "operator_applies": o.result.hvp_calls,
        }
        for o in outcomes
    ]
    return rows, outcomes


def comparison_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_HEADER)
    for r in rows:
        w.writerow([r["method"], _fmt(r["final_f"]), _fmt(r["final_grad_norm"]), r["iterations"], r["operator_applies"]])
    return buf.getvalue()
