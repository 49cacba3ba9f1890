"""Reader/writer for a CPLEX-LP style interchange format and a plain solution format.

Model files use the sections ``Minimize``, ``Subject To``, ``Lazy Constraints``,
``Bounds``, ``Binaries``, ``Generals`` and ``End``, one row per line.  A
constant objective term is carried in a ``\\ offset <value>`` comment line.

Solution files are line based::

    status optimal
    objective -5.0
    bound -5.0          (optional)
    x0 1.0
    ...
"""
from __future__ import annotations

import re

import numpy as np

from ..errors import AdapterError, ParameterError
from .model import EQ, GE, LE, SENSES, LinearModel, SolveOutcome

_NAME_OK = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\[\]]*$")


def _num(v: float) -> str:
    if v == np.inf:
        return "+inf"
    if v == -np.inf:
        return "-inf"
    return repr(float(v))


def _expr(coefs, names) -> str:
    terms = [f"{'-' if v < 0 else '+'} {_num(abs(v))} {names[j]}" for j, v in coefs if v != 0.0]
    if not terms:
        return f"0 {names[0]}" if names else "0"
    first = terms[0]
    return (first[2:] if first.startswith("+") else "-" + first[1:]) + (" " + " ".join(terms[1:]) if len(terms) > 1 else "")


def write_lp(model: LinearModel) -> str:
    names = model.var_names()
    for nm in names:
        if not _NAME_OK.match(nm):
            raise ParameterError(f"variable name {nm!r} is not LP-safe")
    out = ["\\ ccapm model", f"\\ offset {_num(model.offset)}", "Minimize"]
    out.append(" obj: " + _expr(list(enumerate(model.c)), names))
    sections = {False: [], True: []}
    for r in range(model.num_rows):
        row = model.A[r]
        expr = _expr([(j, row[j]) for j in np.flatnonzero(row)], names)
        sense = {LE: "<=", GE: ">=", EQ: "="}[model.sense[r]]
        sections[bool(model.lazy[r])].append(f" r{r}: {expr} {sense} {_num(model.rhs[r])}")
    out.append("Subject To")
    out.extend(sections[False])
    if sections[True]:
        out.append("Lazy Constraints")
        out.extend(sections[True])
    out.append("Bounds")
    for j, nm in enumerate(names):
        lo, hi = model.lb[j], model.ub[j]
        if lo == -np.inf and hi == np.inf:
            out.append(f" {nm} free")
        else:
            out.append(f" {_num(lo)} <= {nm} <= {_num(hi)}")
    binaries = [names[j] for j in np.flatnonzero(model.integer) if model.lb[j] >= 0 and model.ub[j] <= 1]
    generals = [names[j] for j in np.flatnonzero(model.integer) if names[j] not in set(binaries)]
    if binaries:
        out.append("Binaries")
        out.append(" " + " ".join(binaries))
    if generals:
        out.append("Generals")
        out.append(" " + " ".join(generals))
    out.append("End")
    return "\n".join(out) + "\n"


def _parse_expr(text: str) -> list[tuple[float, str]]:
    text = text.strip()
    if text in ("", "0"):
        return []
    tokens = text.split()
    terms, sign, coef = [], 1.0, None
    for tok in tokens:
        if tok == "+":
            continue
        if tok == "-":
            sign = -sign
            continue
        try:
            val = _parse_float(tok)
        except ValueError:
            terms.append((sign * (1.0 if coef is None else coef), tok))
            sign, coef = 1.0, None
            continue
        coef = val
    return terms


def _parse_float(tok: str) -> float:
    t = tok.strip().lower()
    if t in ("+inf", "inf", "+infinity", "infinity"):
        return np.inf
    if t in ("-inf", "-infinity"):
        return -np.inf
    return float(t)


def read_lp(text: str) -> LinearModel:
    """Parse the dialect produced by :func:`write_lp`."""
    section = None
    offset = 0.0
    obj_terms: list[tuple[float, str]] = []
    rows: list[tuple[list, str, float, bool]] = []
    bounds: dict[str, tuple[float, float]] = {}
    ints: list[str] = []
    order: list[str] = []

    def see(nm):
        if nm not in order:
            order.append(nm)

    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            m = re.match(r"\\\s*offset\s+(\S+)", line)
            if m:
                offset = _parse_float(m.group(1))
            continue
        key = line.lower()
        if key in ("minimize", "min", "minimise"):
            section = "obj"
            continue
        if key in ("subject to", "st", "s.t.", "such that"):
            section = "rows"
            continue
        if key in ("lazy constraints",):
            section = "lazy"
            continue
        if key in ("bounds", "bound"):
            section = "bounds"
            continue
        if key in ("binaries", "binary", "bin"):
            section = "bin"
            continue
        if key in ("generals", "general", "gen"):
            section = "gen"
            continue
        if key == "end":
            break
        if section == "obj":
            body = line.split(":", 1)[1] if ":" in line else line
            obj_terms = _parse_expr(body)
            for _, nm in obj_terms:
                see(nm)
        elif section in ("rows", "lazy"):
            body = line.split(":", 1)[1] if ":" in line else line
            m = re.match(r"(.*?)(<=|>=|=<|=>|=)\s*(\S+)\s*$", body)
            if not m:
                raise AdapterError(f"cannot parse row: {line}")
            sense = {"<=": LE, "=<": LE, ">=": GE, "=>": GE, "=": EQ}[m.group(2)]
            terms = _parse_expr(m.group(1))
            for _, nm in terms:
                see(nm)
            rows.append((terms, sense, _parse_float(m.group(3)), section == "lazy"))
        elif section == "bounds":
            parts = line.split()
            if len(parts) == 2 and parts[1].lower() == "free":
                bounds[parts[0]] = (-np.inf, np.inf)
                see(parts[0])
            elif len(parts) == 5 and parts[1] == "<=" and parts[3] == "<=":
                bounds[parts[2]] = (_parse_float(parts[0]), _parse_float(parts[4]))
                see(parts[2])
            else:
                raise AdapterError(f"cannot parse bound: {line}")
        elif section in ("bin", "gen"):
            for nm in line.split():
                ints.append(nm)
                see(nm)
    idx = {nm: j for j, nm in enumerate(order)}
    nv = len(order)
    c = np.zeros(nv)
    for v, nm in obj_terms:
        c[idx[nm]] += v
    A = np.zeros((len(rows), nv))
    for r, (terms, _, _, _) in enumerate(rows):
        for v, nm in terms:
            A[r, idx[nm]] += v
    lb = np.array([bounds.get(nm, (0.0, np.inf))[0] for nm in order])
    ub = np.array([bounds.get(nm, (0.0, np.inf))[1] for nm in order])
    integer = np.array([nm in set(ints) for nm in order], dtype=bool)
    return LinearModel(c=c, lb=lb, ub=ub, integer=integer, A=A, sense=tuple(r[1] for r in rows),
                       rhs=np.array([r[2] for r in rows]), lazy=np.array([r[3] for r in rows], dtype=bool),
                       names=tuple(order), offset=offset)


def write_solution(outcome: SolveOutcome, names) -> str:
    lines = [f"status {outcome.status}"]
    if outcome.x is not None:
        lines.append(f"objective {_num(outcome.objective)}")
        if np.isfinite(outcome.bound):
            lines.append(f"bound {_num(outcome.bound)}")
        lines.extend(f"{nm} {_num(v)}" for nm, v in zip(names, outcome.x))
    return "\n".join(lines) + "\n"


def read_solution(text: str, names) -> SolveOutcome:
    status, objective, bound = None, np.nan, np.nan
    values: dict[str, float] = {}
    for raw in text.splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) != 2:
            raise AdapterError(f"cannot parse solution line: {raw!r}")
        key, val = parts
        if key == "status":
            status = val
        elif key == "objective":
            objective = _parse_float(val)
        elif key == "bound":
            bound = _parse_float(val)
        else:
            values[key] = _parse_float(val)
    if status is None:
        raise AdapterError("solution file has no status line")
    x = None
    if values:
        missing = [nm for nm in names if nm not in values]
        if missing:
            raise AdapterError(f"solution lacks values for {missing[:5]}")
        x = np.array([values[nm] for nm in names])
    if np.isnan(bound):
        bound = objective
    return SolveOutcome(status=status, x=x, objective=objective, bound=bound)


__all__ = ["write_lp", "read_lp", "write_solution", "read_solution", "SENSES"]
