"""qfi-lab command line: reproduce | verify | integrate | list.

Exit codes: 0 ok, 2 a check failed, 3 infeasible parameters, 4 bad
configuration, 5 step-size underflow (partial output is still written).
"""

from __future__ import annotations

import argparse
import csv
import inspect
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import catalog, jet as J, qfi as Q, symmetry as S
from .dynamics import State, Trajectory, initial_state_on_shell, integrate, monitor_report
from .errors import ConfigError, InfeasibleParams, QfiLabError, StepSizeUnderflow
from .expr import compile_expr
from .geometry import Domain, Field, Metric
from .scenarios import SCENARIOS, ScenarioReport

EXIT_OK, EXIT_FAIL, EXIT_INFEASIBLE, EXIT_CONFIG, EXIT_UNDERFLOW = 0, 2, 3, 4, 5
TOL_RANGE = (1e-14, 1e-2)
OUT_ENV = "QFI_LAB_OUT"
DEFAULT_OUT = "qfi_lab_out"


@dataclass
class RunConfig:
    command: str
    scenario: str | None = None
    params: dict = field(default_factory=dict)
    tol: float | None = None
    horizon: float | None = None
    output_dir: Path = Path(DEFAULT_OUT)
    seed: int = 0
    format: str = "csv"
    jobs: int = 1
    plot_data: bool = False

    def __post_init__(self):
        if self.tol is not None and not TOL_RANGE[0] < self.tol < TOL_RANGE[1]:
            raise ConfigError(f"tol must lie in ({TOL_RANGE[0]:g}, {TOL_RANGE[1]:g}), got {self.tol:g}")
        if self.horizon is not None and not self.horizon > 0.0:
            raise ConfigError("horizon must be positive")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")


# output

def fmt(x: float) -> str:
    return format(float(x), ".17g")


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_columns(traj: Trajectory) -> list[str]:
    n = traj.q.shape[1]
    return (["t"] + [f"q{i + 1}" for i in range(n)] + [f"qd{i + 1}" for i in range(n)]
            + ["H_minus_E0"] + list(traj.monitors))


def trajectory_rows(traj: Trajectory) -> np.ndarray:
    cols = [traj.t[:, None], traj.q, traj.qdot, traj.H_minus_E0[:, None]]
    cols += [np.asarray(v)[:, None] for v in traj.monitors.values()]
    return np.hstack(cols)


def trajectory_csv(traj: Trajectory) -> str:
    lines = [",".join(_csv_quote(c) for c in trajectory_columns(traj))]
    lines += [",".join(fmt(v) for v in row) for row in trajectory_rows(traj)]
    return "\n".join(lines) + "\n"


def _csv_quote(name: str) -> str:
    return f'"{name}"' if any(ch in name for ch in ',"\n') else name


def trajectory_json(traj: Trajectory) -> str:
    return json.dumps({"columns": trajectory_columns(traj), "complete": traj.complete,
                       "rows": trajectory_rows(traj).tolist()})


def plot_data_csv(traj: Trajectory) -> str:
    lines = ["x,y"] + [f"{fmt(p[0])},{fmt(p[1])}" for p in traj.q]
    return "\n".join(lines) + "\n"


def read_trajectory_csv(path) -> Trajectory:
    """Inverse of :func:`trajectory_csv`; monitor columns land in ``monitors``."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    if not header or header[0] != "t" or "H_minus_E0" not in header:
        raise ConfigError(f"{path} is not a trajectory CSV")
    h = header.index("H_minus_E0")
    n = (h - 1) // 2
    data = data.reshape(-1, len(header))
    mons = {name: data[:, h + 1 + i] for i, name in enumerate(header[h + 1:])}
    return Trajectory(data[:, 0], data[:, 1:1 + n], data[:, 1 + n:h], data[:, h], mons)


def write_trajectory(traj: Trajectory, out_dir: Path, stem: str, cfg: RunConfig) -> list[str]:
    paths = []
    if cfg.format == "csv":
        p = out_dir / f"{stem}.csv"
        atomic_write(p, trajectory_csv(traj))
    else:
        p = out_dir / f"{stem}.json"
        atomic_write(p, trajectory_json(traj))
    paths.append(str(p))
    if cfg.plot_data and traj.q.shape[1] >= 2:
        p = out_dir / f"{stem}_xy.csv"
        atomic_write(p, plot_data_csv(traj))
        paths.append(str(p))
    return paths


# parameter overrides

def split_overrides(extra: Sequence[str]) -> dict[str, str]:
    """``--key=value`` or ``--key value`` pairs left over by argparse."""
    out: dict[str, str] = {}
    i = 0
    while i < len(extra):
        item = extra[i]
        if not item.startswith("--") or len(item) == 2:
            raise ConfigError(f"unexpected argument {item!r}")
        key = item[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for --{key}")
            i += 1
            value = extra[i]
        out[key] = value
        i += 1
    return out


def extract_overrides(argv: Sequence[str], known: set[str]) -> tuple[list[str], list[str]]:
    """Separate ``--key[=value]`` overrides from the arguments argparse knows.

    Done before parsing because argparse reads a dash-prefixed value with
    spaces, such as ``--M="-0.5 + 0.1*s"``, as a positional argument.
    """
    rest: list[str] = []
    extra: list[str] = []
    i = 0
    while i < len(argv):
        item = argv[i]
        if item == "--" or not item.startswith("--") or item.split("=", 1)[0] in known:
            rest.append(item)
        else:
            extra.append(item)
            if "=" not in item and i + 1 < len(argv):
                i += 1
                extra.append(argv[i])
        i += 1
    return rest, extra


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def _parse_vector(text: str) -> tuple[float, ...]:
    return tuple(_parse_float(v) for v in text.replace("(", "").replace(")", "").split(","))


def coerce(name: str, param: inspect.Parameter, text: str):
    """Convert ``text`` to the type implied by a scenario parameter."""
    ann, default = str(param.annotation), param.default
    if "Callable" in ann:
        # one-variable functions such as M(s) or F(s) accept expressions in s
        try:
            value = float(text)
        except ValueError:
            return compile_expr(text, variables=("s",))
        return value if "float" in ann else compile_expr(text, variables=("s",))
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int) and "float" not in ann:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"--{name} needs an integer") from None
    if isinstance(default, tuple):
        return _parse_vector(text)
    if isinstance(default, float) or "float" in ann:
        return _parse_float(text)
    return text


def scenario_kwargs(name: str, overrides: dict[str, str], cfg: RunConfig) -> dict:
    fn = SCENARIOS[name]
    sig = inspect.signature(fn).parameters
    kwargs = {}
    for key, text in overrides.items():
        if key not in sig:
            raise ConfigError(f"scenario {name!r} has no parameter {key!r}; known: {', '.join(sig)}")
        kwargs[key] = coerce(key, sig[key], text)
    for key in ("tol", "horizon"):
        value = getattr(cfg, key)
        if value is not None and key in sig:
            kwargs[key] = value
    if "seed" in sig:
        kwargs["seed"] = cfg.seed
    return kwargs


# reproduce

def run_scenario(name: str, overrides: dict[str, str], cfg: RunConfig) -> tuple[int, dict]:
    """Run one scenario and write its outputs; returns (exit code, summary)."""
    out_dir = cfg.output_dir / name
    summary = {"name": name, "exit": EXIT_OK}
    try:
        kwargs = scenario_kwargs(name, overrides, cfg)
        report: ScenarioReport = SCENARIOS[name](**kwargs)
    except ConfigError as exc:
        return EXIT_CONFIG, {**summary, "exit": EXIT_CONFIG, "error": str(exc)}
    except InfeasibleParams as exc:
        return EXIT_INFEASIBLE, {**summary, "exit": EXIT_INFEASIBLE, "error": f"{type(exc).__name__}: {exc}"}
    except StepSizeUnderflow as exc:
        paths = []
        if exc.trajectory is not None:
            paths = write_trajectory(exc.trajectory, out_dir, "partial", cfg)
        return EXIT_UNDERFLOW, {**summary, "exit": EXIT_UNDERFLOW, "error": str(exc), "artifacts": paths,
                                "complete": False}
    except QfiLabError as exc:
        return EXIT_FAIL, {**summary, "exit": EXIT_FAIL, "error": f"{type(exc).__name__}: {exc}"}
    for stem, traj in report.trajectories.items():
        report.artifacts.extend(write_trajectory(traj, out_dir, stem, cfg))
    rpath = out_dir / "report.json"
    atomic_write(rpath, json.dumps(report.to_dict(), indent=2, default=_json_default) + "\n")
    code = EXIT_OK if report.passed else EXIT_FAIL
    failed = [c.description for c in report.checks if not c.passed]
    return code, {**summary, "exit": code, "report": str(rpath), "checks": len(report.checks), "failed": failed}


def _json_default(obj):
    if callable(obj):
        return getattr(obj, "__doc__", None) or repr(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _worst(codes: Sequence[int]) -> int:
    # a config error outranks everything, then underflow, infeasibility and failures
    for code in (EXIT_CONFIG, EXIT_UNDERFLOW, EXIT_INFEASIBLE, EXIT_FAIL):
        if code in codes:
            return code
    return EXIT_OK


def cmd_reproduce(names: Sequence[str], overrides: dict[str, str], cfg: RunConfig) -> int:
    if list(names) == ["all"]:
        names = list(SCENARIOS)
    unknown = [n for n in names if n not in SCENARIOS]
    if unknown:
        print(f"error: unknown scenario(s) {', '.join(unknown)}; try 'list'", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.jobs > 1 and len(names) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(run_scenario, names, [overrides] * len(names), [cfg] * len(names)))
    else:
        results = [run_scenario(n, overrides, cfg) for n in names]
    for code, summary in results:
        status = {0: "PASS", 2: "FAIL", 3: "INFEASIBLE", 4: "CONFIG", 5: "UNDERFLOW"}[code]
        line = f"{status:10s} {summary['name']}"
        if "checks" in summary:
            line += f"  ({summary['checks'] - len(summary['failed'])}/{summary['checks']} checks)  {summary['report']}"
        if "error" in summary:
            line += f"  {summary['error']}"
        print(line)
        for desc in summary.get("failed", []):
            print(f"           failed: {desc}")
    return _worst([code for code, _ in results])


# declarative spec files

RESERVED = {"kind", "metric", "f", "V", "E0", "q0", "qdot0", "direction", "t0", "horizon", "domain",
            "G", "A1", "A2"}


def read_spec_text(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_spec_file(path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return read_spec_text(text)


def _is_component_key(key: str) -> bool:
    return (key[:1] in "LUC" and key[1:].isdigit()) or key.startswith(("lfi.", "qfi."))


class SpecEnv:
    """Parsed spec: numeric parameters plus raw field expressions."""

    def __init__(self, raw: dict[str, str], extra_reserved: Sequence[str] = ()):
        self.raw = raw
        self.params: dict[str, float] = {}
        reserved = RESERVED | set(extra_reserved)
        for key, value in raw.items():
            if key in reserved or _is_component_key(key):
                continue
            try:
                self.params[key] = float(value)
            except ValueError:
                raise ConfigError(f"unknown key {key!r} (only numeric parameters may be free keys)") from None

    def expr(self, text: str, variables: tuple[str, ...] = ("x", "y")) -> Callable:
        return compile_expr(text, variables=variables, params=self.params)

    def scalar(self, key: str, n: int, default: str | None = None, domain: Domain | None = None) -> Field:
        text = self.raw.get(key, default)
        if text is None:
            raise ConfigError(f"missing key {key!r}")
        fn = self.expr(text, _coords(n))
        return Field("scalar", n, fn, domain=domain, name=text)

    def number(self, key: str, default: float | None = None) -> float:
        if key not in self.raw:
            if default is None:
                raise ConfigError(f"missing key {key!r}")
            return default
        return float(self.expr(self.raw[key], ())())

    def vector(self, key: str) -> np.ndarray:
        if key not in self.raw:
            raise ConfigError(f"missing key {key!r}")
        return np.array([float(self.expr(v.strip(), ())()) for v in self.raw[key].split(",")])


def _coords(n: int) -> tuple[str, ...]:
    if n == 1:
        return ("x",)
    if n == 2:
        return ("x", "y")
    return tuple(f"q{i + 1}" for i in range(n))


def build_metric(metric_id: str, env: SpecEnv) -> Metric:
    """Built-in metric by id, or ``offdiag`` with ``f = ...`` from the input file."""
    box = None
    if "domain" in env.raw:
        lo, hi = env.vector("domain")
        box = (lo, hi)
    if metric_id == "offdiag":
        f = env.expr(env.raw.get("f") or _missing("f"))
        lo, hi = box or (-2.0, 2.0)
        dom = Domain((lo, lo), (hi, hi), (("f=0", lambda p: f(p[0], p[1])),))
        return catalog.offdiag(f, dom, f"offdiag[{env.raw['f']}]")
    if metric_id.startswith("E") and metric_id[1:].isdigit():
        metric = catalog.euclidean(int(metric_id[1:]))
    elif metric_id in catalog.METRICS:
        factory = catalog.METRICS[metric_id]
        sig = inspect.signature(factory).parameters
        metric = factory(**{k: v for k, v in env.params.items() if k in sig})
    else:
        raise ConfigError(f"unknown metric {metric_id!r}; known: offdiag, En, {', '.join(catalog.METRICS)}")
    if box is not None:
        dom = metric.domain
        new = Domain((box[0],) * metric.n, (box[1],) * metric.n, dom.loci if dom else ())
        metric = replace(metric, g=replace(metric.g, domain=new))
    return metric


def _missing(key: str):
    raise ConfigError(f"missing key {key!r}")


def _components(env: SpecEnv, prefix: str, n: int, sym: bool = False) -> list:
    if not sym:
        keys = [f"{prefix}{i + 1}" for i in range(n)]
    else:
        keys = [f"{prefix}{i + 1}{j + 1}" for i in range(n) for j in range(i, n)]
    missing = [k for k in keys if k not in env.raw]
    if missing:
        raise ConfigError(f"missing components {', '.join(missing)}")
    return [env.expr(env.raw[k], _coords(n)) for k in keys]


def vector_field(fns: Sequence[Callable], n: int, name: str) -> Field:
    return Field("covector", n, lambda *q: _stack([fn(*q) for fn in fns]), name=name)


def sym2_field(fns: Sequence[Callable], n: int, name: str) -> Field:
    def U(*q):
        vals = iter(fn(*q) for fn in fns)
        rows = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                rows[i][j] = rows[j][i] = next(vals)
        return _stack([_stack(r) for r in rows])
    return Field("sym2tensor", n, U, name=name)


def _stack(items):
    if any(isinstance(v, J.Jet) for v in items):
        ref = next(v for v in items if isinstance(v, J.Jet))
        return J.stack([v if isinstance(v, J.Jet) else v + 0.0 * ref for v in items])
    return np.array(items, dtype=float)


def symmetry_from_spec(metric: Metric, env: SpecEnv, kind: str, seed: int, tol: float) -> S.SymmetryObject:
    n = metric.n
    if kind == "ckv":
        L = vector_field(_components(env, "L", n), n, "L")
        return S.ckv(metric, L, name="L", seed=seed, tol=tol)
    if kind == "ckt":
        if "A1" in env.raw or "A2" in env.raw:
            if metric.params.get("family") != "offdiag":
                raise ConfigError("A1/A2 data needs an off-diagonal metric")
            A1 = env.expr(env.raw.get("A1", "0"), ("y",))
            A2 = env.expr(env.raw.get("A2", "0"), ("x",))
            return S.offdiag_ckt(metric, A1, A2).certify(seed=seed, tol=tol)
        U = sym2_field(_components(env, "U", n, sym=True), n, "U")
        return S.ckt(metric, U, name="U", seed=seed, tol=tol)
    raise ConfigError(f"unknown kind {kind!r}")


def builtin_symmetry(metric: Metric, metric_id: str, name: str, seed: int, tol: float) -> S.SymmetryObject:
    family = "E2" if metric_id == "E2" else metric_id
    try:
        entries = S.ckv_catalog(family, metric)
    except QfiLabError as exc:
        raise ConfigError(str(exc)) from exc
    for e in entries:
        if e.name == name:
            return S.ckv(metric, e.vector, e.conformal_factor, name=e.name, seed=seed, tol=tol)
    raise ConfigError(f"no built-in {name!r} for {metric_id}; known: {', '.join(e.name for e in entries)}")


def classify_ckv(metric: Metric, obj: S.SymmetryObject, pts, tol: float = 1e-9) -> str:
    psi = np.array([float(obj.conformal_factor.eval(p)) for p in pts])
    if np.max(np.abs(psi)) <= tol:
        return "KV"
    if np.max(psi) - np.min(psi) <= tol:
        return "HV"
    if S.is_sckv(metric, obj.conformal_factor, pts, tol):
        return "SCKV"
    return "CKV"


def cmd_verify(metric_id: str, object_file: str, kind: str | None, overrides: dict[str, str], cfg: RunConfig) -> int:
    tol = cfg.tol or S.DEFAULT_TOL
    try:
        if object_file.startswith("builtin:"):
            env = SpecEnv(dict(overrides))
            metric = build_metric(metric_id, env)
            obj = builtin_symmetry(metric, metric_id, object_file.split(":", 1)[1], cfg.seed, tol)
            kind = "ckv"
        else:
            raw = read_spec_file(object_file)
            raw.update(overrides)
            env = SpecEnv(raw)
            kind = kind or raw.get("kind")
            if kind is None:
                raise ConfigError("object kind not given (--kind or 'kind = ...')")
            metric = build_metric(metric_id, env)
            if kind == "qfi":
                return _verify_qfi(metric, env, cfg, tol)
            obj = symmetry_from_spec(metric, env, kind, cfg.seed, tol)
        pts = S.sample_points(metric, obj.field.domain, 50, cfg.seed)
        if kind == "ckv":
            cls = classify_ckv(metric, obj, pts)
        else:
            c = S.classify_ckt(metric, obj, pts)
            cls = "KT" if c.is_KT else ("HKT" if c.is_HKT else "proper CKT")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QfiLabError as exc:
        print(f"FAIL {type(exc).__name__}: {exc}")
        return EXIT_FAIL
    cert = obj.certificate
    if not cert.certified:
        cls = "none"
    result = {"metric": metric.name, "kind": kind, "class": cls, "max_residual": cert.max_residual,
              "points": cert.points_sampled, "tol": cert.tol, "certified": cert.certified}
    _print_result(result, cfg)
    return EXIT_OK if cert.certified else EXIT_FAIL


def _verify_qfi(metric: Metric, env: SpecEnv, cfg: RunConfig, tol: float) -> int:
    system = _system(metric, env)
    qtol = cfg.tol or Q.DEFAULT_TOL
    if "L1" in env.raw:
        L = symmetry_from_spec(metric, env, "ckv", cfg.seed, tol)
        spec = Q.build_J2(system, L, tol=qtol, seed=cfg.seed, strict=False)
    else:
        C = symmetry_from_spec(metric, env, "ckt", cfg.seed, tol)
        G = env.scalar("G", metric.n, "0")
        spec = Q.build_J1(system, C, G, tol=qtol, seed=cfg.seed, strict=False)
    result = {"metric": metric.name, "kind": "qfi", "family": spec.family, "c": spec.c,
              "residuals": spec.condition_residuals, "max_residual": spec.max_residual, "tol": spec.tol,
              "certified": spec.certified}
    _print_result(result, cfg)
    return EXIT_OK if spec.certified else EXIT_FAIL


def _print_result(result: dict, cfg: RunConfig) -> None:
    if cfg.format == "json":
        print(json.dumps(result, default=_json_default))
        return
    for key, value in result.items():
        print(f"{key:14s} {fmt(value) if isinstance(value, float) else value}")


# integrate

def _system(metric: Metric, env: SpecEnv, state: tuple | None = None) -> Q.ConstrainedSystem:
    """System from ``V`` and ``E0``; E0 defaults to the energy of ``state`` when given."""
    V = env.scalar("V", metric.n, "0")
    if "E0" not in env.raw and state is not None:
        return Q.ConstrainedSystem(metric, V, Q.ConstrainedSystem(metric, V, 0.0).hamiltonian(*state))
    return Q.ConstrainedSystem(metric, V, env.number("E0", 0.0))


def _monitors(system: Q.ConstrainedSystem, env: SpecEnv, seed: int) -> list:
    n = system.n
    out = []
    for key, text in env.raw.items():
        if key.startswith("lfi."):
            fns = [env.expr(s.strip(), _coords(n)) for s in text.split(",")]
            if len(fns) != n:
                raise ConfigError(f"{key}: expected {n} components")
            L = S.ckv(system.metric, vector_field(fns, n, key[4:]), name=key[4:], seed=seed)
            spec = Q.build_J2(system, L, seed=seed, strict=False)
            out.append(replace(spec, name=key[4:]))
        elif key.startswith("qfi."):
            tensor, _, gtext = text.partition(";")
            fns = [env.expr(s.strip(), _coords(n)) for s in tensor.split(",")]
            if len(fns) != n * (n + 1) // 2:
                raise ConfigError(f"{key}: expected {n * (n + 1) // 2} tensor components")
            U = S.ckt(system.metric, sym2_field(fns, n, key[4:]), name=key[4:], seed=seed)
            G = Field("scalar", n, env.expr(gtext.strip() or "0", _coords(n)), name="G")
            spec = Q.build_J1(system, U, G, seed=seed, strict=False)
            out.append(replace(spec, name=key[4:]))
    return out


def cmd_integrate(spec_file: str, overrides: dict[str, str], cfg: RunConfig) -> int:
    try:
        raw = read_spec_file(spec_file)
        raw.update(overrides)
        env = SpecEnv(raw)
        metric = build_metric(raw.get("metric", "E2"), env)
        q0 = env.vector("q0")
        if len(q0) != metric.n:
            raise ConfigError(f"q0 needs {metric.n} components")
        t0 = env.number("t0", 0.0)
        if "qdot0" in raw:
            s0 = State(t0, q0, env.vector("qdot0"))
            system = _system(metric, env, (q0, s0.qdot))
        else:
            system = _system(metric, env)
            s0 = initial_state_on_shell(system, q0, env.vector("direction"), t0)
        horizon = cfg.horizon or env.number("horizon", 1.0)
        monitors = _monitors(system, env, cfg.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleParams as exc:
        print(f"INFEASIBLE {type(exc).__name__}: {exc}")
        return EXIT_INFEASIBLE
    except (QfiLabError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = cfg.output_dir
    stem = Path(spec_file).stem
    try:
        traj = integrate(system, s0, s0.t + horizon, cfg.tol or 1e-10, monitors=monitors)
        code = EXIT_OK
    except StepSizeUnderflow as exc:
        traj, code = exc.trajectory, EXIT_UNDERFLOW
        print(f"UNDERFLOW {exc}; partial trajectory written")
    paths = write_trajectory(traj, out_dir, stem, cfg)
    rep = monitor_report(traj, monitors)
    meta = {"spec": str(spec_file), "complete": traj.complete, "stats": traj.stats, "H_drift": rep.H_drift,
            "fi_drift": rep.fi_drift, "artifacts": paths}
    atomic_write(out_dir / f"{stem}.meta.json", json.dumps(meta, indent=2, default=_json_default) + "\n")
    for p in paths:
        print(p)
    return code


# list

def cmd_list(cfg: RunConfig) -> int:
    entries = {}
    for name, fn in SCENARIOS.items():
        params = {k: (p.default if p.default is not inspect.Parameter.empty else None)
                  for k, p in inspect.signature(fn).parameters.items()}
        entries[name] = {"doc": inspect.getdoc(fn).splitlines()[0], "params": params}
    if cfg.format == "json":
        print(json.dumps(entries, indent=2, default=_json_default))
        return EXIT_OK
    for name, e in entries.items():
        print(f"{name}: {e['doc']}")
        print("    " + " ".join(f"--{k}={v}" for k, v in e["params"].items()))
    return EXIT_OK


# entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--tol", type=float, default=None, help="integrator tolerance in (1e-14, 1e-2)")
    common.add_argument("--horizon", type=float, default=None, help="final time")
    common.add_argument("--seed", type=int, default=0, help="seed for certificate sample points")
    common.add_argument("--out", type=Path, default=None, help=f"output directory (env {OUT_ENV} wins)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--jobs", type=int, default=1, help="scenarios run in parallel")
    common.add_argument("--plot-data", action="store_true", help="also write x,y orbit files")

    parser = argparse.ArgumentParser(prog="qfi-lab", description=__doc__.splitlines()[0], allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)
    rep = sub.add_parser("reproduce", parents=[common], allow_abbrev=False,
                         help="run named scenarios ('all' for every one); --key=value overrides parameters")
    rep.add_argument("scenarios", nargs="+")
    ver = sub.add_parser("verify", parents=[common], allow_abbrev=False,
                         help="certify a symmetry or integral given in a key = value file")
    ver.add_argument("metric")
    ver.add_argument("object_file", help="spec file, or builtin:<name> for a catalog vector")
    ver.add_argument("--kind", choices=("ckv", "ckt", "qfi"), default=None)
    integ = sub.add_parser("integrate", parents=[common], allow_abbrev=False,
                           help="integrate a system described in a key = value file")
    integ.add_argument("spec")
    sub.add_parser("list", parents=[common], allow_abbrev=False, help="list scenarios and their parameters")
    return parser


def _option_strings(parser: argparse.ArgumentParser) -> set[str]:
    known = set(parser._option_string_actions)
    for action in parser._subparsers._group_actions:
        for sub in action.choices.values():
            known |= set(sub._option_string_actions)
    return known


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    argv, extra = extract_overrides(argv, _option_strings(parser))
    try:
        args, unknown = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    extra = unknown + extra
    try:
        overrides = split_overrides(extra)
        out = os.environ.get(OUT_ENV) or args.out or DEFAULT_OUT
        cfg = RunConfig(args.command, params=overrides, tol=args.tol, horizon=args.horizon,
                        output_dir=Path(out), seed=args.seed, format=args.format, jobs=args.jobs,
                        plot_data=args.plot_data)
        if args.command == "list" and overrides:
            raise ConfigError("list takes no parameters")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "reproduce":
        cfg.scenario = ",".join(args.scenarios)
        return cmd_reproduce(args.scenarios, overrides, cfg)
    if args.command == "verify":
        return cmd_verify(args.metric, args.object_file, args.kind, overrides, cfg)
    if args.command == "integrate":
        return cmd_integrate(args.spec, overrides, cfg)
    return cmd_list(cfg)


if __name__ == "__main__":
    sys.exit(main())
