"""YAML serialisation of MetricSpec.

Layout::

    n: 4
    a: 0.5
    r0: 1.0
    lambda: [6.283, 6.283]
    exp_u_hat: {terms: {3: 0.1}}
    exp_v_hat: {terms: {3: {0: [0.2, 0.0], 1: [0.05, 0.0]}}}
    w_hat:     {terms: {3: {"0,1": {"1,0,2": [0.01, 0.0]}}}}

Order-0 entries may be omitted (they default to 1 for the two exponentials).
Component keys are "i,j" (0-based torus indices), multimode keys are
"k_xi,k_3,...,k_n".
"""
from __future__ import annotations

import os
from pathlib import Path

import yaml

from .metric import BackgroundParams, MetricSpec


class SpecFormatError(ValueError):
    pass


def _int_tuple(key, length=None) -> tuple[int, ...]:
    if isinstance(key, (list, tuple)):
        out = tuple(int(k) for k in key)
    elif isinstance(key, int):
        out = (key,)
    else:
        out = tuple(int(k) for k in str(key).replace("(", "").replace(")", "").split(",") if k.strip())
    if length is not None and len(out) != length:
        raise SpecFormatError(f"key {key!r} must have {length} entries")
    return out


def _amp(value) -> tuple[float, float]:
    if isinstance(value, (int, float)):
        return float(value), 0.0
    if isinstance(value, (list, tuple)) and 1 <= len(value) <= 2:
        return float(value[0]), float(value[1]) if len(value) == 2 else 0.0
    raise SpecFormatError(f"amplitude {value!r} must be a number or [cos, sin]")


def _terms(doc: dict, name: str) -> dict:
    sec = doc.get(name) or {}
    if not isinstance(sec, dict):
        raise SpecFormatError(f"{name} must be a mapping")
    terms = sec.get("terms") or {}
    if not isinstance(terms, dict):
        raise SpecFormatError(f"{name}.terms must be a mapping")
    return {int(k): v for k, v in terms.items()}


def spec_from_dict(doc: dict) -> MetricSpec:
    try:
        n = int(doc["n"])
        a = float(doc.get("a", 0.0))
        r0 = float(doc["r0"])
        lam = doc.get("lambda", [2 * 3.141592653589793] * (n - 2))
        if not isinstance(lam, (list, tuple)):
            lam = [lam] * (n - 2)
        bg = BackgroundParams(n, a, r0, tuple(float(x) for x in lam))
    except KeyError as exc:
        raise SpecFormatError(f"missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise SpecFormatError(str(exc)) from exc

    u = {m: float(c) for m, c in _terms(doc, "exp_u_hat").items()}
    v = {}
    for m, c in _terms(doc, "exp_v_hat").items():
        if isinstance(c, (int, float)):
            v[m] = {0: (float(c), 0.0)}
        else:
            v[m] = {int(k): _amp(amp) for k, amp in c.items()}
    w = {}
    for m, comps in _terms(doc, "w_hat").items():
        w[m] = {_int_tuple(ij, 2): {_int_tuple(mode, n - 1): _amp(amp) for mode, amp in modes.items()}
                for ij, modes in comps.items()}
    try:
        return MetricSpec.from_coefficients(bg, u=u, v=v, w=w)
    except (TypeError, ValueError) as exc:
        raise SpecFormatError(str(exc)) from exc


def spec_to_dict(spec: MetricSpec) -> dict:
    bg = spec.background
    doc = {"n": bg.n, "a": bg.a, "r0": bg.r0, "lambda": list(bg.torus_periods)}
    doc["exp_u_hat"] = {"terms": {m: c for m, c in spec.exp_u_hat.terms.items()}}
    doc["exp_v_hat"] = {"terms": {m: {k: [c, s] for k, (c, s) in sorted(ser.coefficients.items())}
                                  for m, ser in spec.exp_v_hat.terms.items()}}
    doc["w_hat"] = {"terms": {
        m: {f"{i},{j}": {",".join(map(str, mode)): [c, s] for mode, (c, s) in sorted(modes.items())}
            for (i, j), modes in sorted(ser.components.items())}
        for m, ser in spec.w_hat.terms.items()}}
    return doc


def load_spec(path) -> MetricSpec:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise SpecFormatError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SpecFormatError(f"{path}: top level must be a mapping")
    return spec_from_dict(doc)


def dumps_spec(spec: MetricSpec) -> str:
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=True, default_flow_style=None)


def write_atomic(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def dump_spec(spec: MetricSpec, path) -> None:
    write_atomic(path, dumps_spec(spec))
