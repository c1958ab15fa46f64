"""Reproduction of the bundled reference tables.

Tables 1-4 tabulate the calibrated L and asymptotic UCL of the three charts
over a ``(n, p0)`` grid; tables 5-8 tabulate ARL1 after a relative shift
``delta``. Output CSVs keep the tables' layout: one column per proportion,
one row per ``(n, quantity)``.
"""

from __future__ import annotations

import io
import json
from importlib import resources

from .chart import DEFAULT_SEED, ChartConfig, Variant, centers, make_limits
from .engine import calibrate_l, estimate_arl, make_shift
from .errors import CalibrationError, ValidationError
from .misclass import MisclassMatrix

P0_GRID = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5)
N_GRID = (5, 10, 15, 20)
DELTAS = (0.1, 0.2)
TABLE_PARAMS = {1: (0.05, 0.95), 2: (0.05, 0.99), 3: (0.2, 0.95), 4: (0.2, 0.99)}
TABLE_PARAMS.update({k + 4: v for k, v in list(TABLE_PARAMS.items())})

_SUFFIX = {Variant.TRUE: "", Variant.NAIVE: "_star", Variant.CORRECTED: "_star_star"}


def load_reference() -> dict:
    with resources.files("ecpchart").joinpath("data/reference_tables.json").open(encoding="utf-8") as fh:
        return json.load(fh)["tables"]


def parse_cells(text):
    """``"n=5,delta=0.2"`` -> ``{"n": {5}, "delta": {0.2}}``; repeated keys accumulate."""
    out = {}
    if not text:
        return out
    for item in text.split(","):
        key, sep, value = item.partition("=")
        key = key.strip().lower()
        if not sep or key not in ("n", "p0", "p1", "delta"):
            raise ValidationError(f"bad cell filter {item!r}; use n=, p0=, p1= or delta=")
        try:
            out.setdefault(key, set()).add(int(value) if key == "n" else round(float(value), 6))
        except ValueError:
            raise ValidationError(f"bad value in cell filter {item!r}") from None
    return out


def _keep(filters, key, value):
    allowed = filters.get(key)
    return allowed is None or round(value, 6) in allowed


def _fmt(x):
    return "" if x is None else f"{x:.6g}"


def _cfg(table_id, p0, n, replicates, seed):
    lam, _ = TABLE_PARAMS[table_id]
    return ChartConfig(p0=p0, lam=lam, n=n, replicates=replicates, seed=seed)


def reproduce_limits(table_id, cells=None, replicates=10001, seed=None, stream="surrogate", threads=1,
                     progress=None):
    """Calibrate every selected cell of tables 1-4. Returns ``(records, p0_columns)``."""
    if table_id not in (1, 2, 3, 4):
        raise ValidationError(f"table {table_id} is not a limits table (1-4)")
    lam, pi_val = TABLE_PARAMS[table_id]
    pi = MisclassMatrix.symmetric(pi_val)
    filters = cells or {}
    p0s = [p for p in P0_GRID if _keep(filters, "p0", p)]
    seed = _default_seed(seed)
    records = []
    for n in N_GRID:
        if not _keep(filters, "n", n):
            continue
        for p0 in p0s:
            cfg = _cfg(table_id, p0, n, replicates, seed)
            for variant in Variant:
                rec = {"table": table_id, "n": n, "p0": p0, "variant": variant.value}
                try:
                    cal = calibrate_l(variant, cfg, pi, stream=stream, threads=threads)
                    rec.update(L=cal.l_star, UCL=make_limits(variant, cal.l_star, cfg, pi).ucl_asymptotic,
                               arl0_hat=cal.arl0_hat, std_error=cal.estimate.std_error, status="ok")
                except CalibrationError as exc:
                    rec.update(L=None, UCL=None, arl0_hat=None, std_error=None, status=str(exc))
                records.append(rec)
                if progress:
                    progress(rec)
    return records, p0s


def reproduce_arl1(table_id, cells=None, replicates=10001, seed=None, stream="surrogate", threads=1,
                   progress=None):
    """Recalibrate L at each ``(n, p0)`` and estimate ARL1 of tables 5-8."""
    if table_id not in (5, 6, 7, 8):
        raise ValidationError(f"table {table_id} is not an ARL1 table (5-8)")
    lam, pi_val = TABLE_PARAMS[table_id]
    pi = MisclassMatrix.symmetric(pi_val)
    filters = cells or {}
    seed = _default_seed(seed)
    deltas = [d for d in DELTAS if _keep(filters, "delta", d)]
    p0s = [p for p in P0_GRID if _keep(filters, "p0", p)]
    if "p1" in filters:
        p0s = [p for p in p0s if any(_keep(filters, "p1", (1 + d) * p) for d in deltas)]
    records = []
    for n in N_GRID:
        if not _keep(filters, "n", n):
            continue
        for p0 in p0s:
            cfg = _cfg(table_id, p0, n, replicates, seed)
            for variant in Variant:
                try:
                    cal = calibrate_l(variant, cfg, pi, stream=stream, threads=threads)
                except CalibrationError as exc:
                    cal, failure = None, str(exc)
                for delta in deltas:
                    shift = make_shift(p0, delta, pi)
                    if not _keep(filters, "p1", shift.p1):
                        continue
                    rec = {"table": table_id, "n": n, "p0": p0, "delta": delta, "p1": shift.p1,
                           "variant": variant.value}
                    if cal is None:
                        rec.update(L=None, ARL1=None, std_error=None, censored=None, status=failure)
                    else:
                        est = estimate_arl(variant, cal.l_star, cfg, pi, p=shift.p1, stream=stream, threads=threads)
                        rec.update(L=cal.l_star, ARL1=est.mean_rl, std_error=est.std_error, censored=est.censored,
                                   status="ok")
                    records.append(rec)
                    if progress:
                        progress(rec)
    return records, p0s


def _default_seed(seed):
    return DEFAULT_SEED if seed is None else seed


def limits_csv(table_id, records, p0s) -> str:
    """Wide CSV in the layout of tables 1-4."""
    _, pi_val = TABLE_PARAMS[table_id]
    pi = MisclassMatrix.symmetric(pi_val)
    buf = io.StringIO()
    buf.write("n,quantity," + ",".join(_fmt(p) for p in p0s) + "\n")
    buf.write(",p0," + ",".join(_fmt(p) for p in p0s) + "\n")
    buf.write(",p0_star," + ",".join(_fmt(centers(p, pi)["p0_star"]) for p in p0s) + "\n")
    buf.write(",p0_star_star," + ",".join(_fmt(centers(p, pi)["p0_star_star"]) for p in p0s) + "\n")
    index = {(r["n"], r["p0"], r["variant"]): r for r in records}
    for n in sorted({r["n"] for r in records}):
        for variant in Variant:
            for qty in ("L", "UCL"):
                vals = [index.get((n, p, variant.value), {}).get(qty) for p in p0s]
                buf.write(f"{n},{qty}{_SUFFIX[variant]}," + ",".join(_fmt(v) for v in vals) + "\n")
    return buf.getvalue()


def arl1_csv(table_id, records, p0s) -> str:
    """Wide CSV in the layout of tables 5-8 (one block per delta)."""
    _, pi_val = TABLE_PARAMS[table_id]
    pi = MisclassMatrix.symmetric(pi_val)
    buf = io.StringIO()
    buf.write("delta,n,quantity," + ",".join(f"col{i + 1}" for i in range(len(p0s))) + "\n")
    index = {(r["delta"], r["n"], r["p0"], r["variant"]): r for r in records}
    for delta in sorted({r["delta"] for r in records}):
        shifts = [make_shift(p, delta, pi) for p in p0s]
        buf.write(f"{_fmt(delta)},,p1," + ",".join(_fmt(s.p1) for s in shifts) + "\n")
        buf.write(f"{_fmt(delta)},,p1_star," + ",".join(_fmt(s.p1_star) for s in shifts) + "\n")
        buf.write(f"{_fmt(delta)},,p1_star_star," + ",".join(_fmt(s.p1_star_star) for s in shifts) + "\n")
        for n in sorted({r["n"] for r in records if r["delta"] == delta}):
            for variant in Variant:
                for qty in ("ARL1", "SE"):
                    key = "ARL1" if qty == "ARL1" else "std_error"
                    vals = [index.get((delta, n, p, variant.value), {}).get(key) for p in p0s]
                    buf.write(f"{_fmt(delta)},{n},{qty}{_SUFFIX[variant]}," + ",".join(_fmt(v) for v in vals) + "\n")
    return buf.getvalue()


def diff_report(table_id, records) -> list:
    """Compare reproduced values with the bundled reference (absolute and SE-relative)."""
    ref = load_reference()[str(table_id)]
    rows = []
    for r in records:
        variant = Variant(r["variant"])
        sfx = _SUFFIX[variant]
        col = P0_GRID.index(r["p0"])
        if ref["kind"] == "limits":
            block = ref["n"][str(r["n"])]
            pairs = [("L" + sfx, r["L"], block["L" + sfx][col], None),
                     ("UCL" + sfx, r["UCL"], block["UCL" + sfx][col], None)]
        else:
            block = ref["delta"][f"{r['delta']:.1f}"]["n"][str(r["n"])]
            pairs = [("ARL1" + sfx, r["ARL1"], block["ARL1" + sfx][col], r["std_error"])]
        for qty, got, want, se in pairs:
            abs_diff = None if got is None else got - want
            se_diff = None if (abs_diff is None or not se) else abs_diff / se
            rows.append({"table": table_id, "n": r["n"], "p0": r["p0"], "delta": r.get("delta"), "quantity": qty,
                         "reproduced": got, "reference": want, "std_error": se, "abs_diff": abs_diff,
                         "se_diff": se_diff})
    return rows


def diff_csv(rows) -> str:
    cols = ["table", "n", "p0", "delta", "quantity", "reproduced", "reference", "std_error", "abs_diff", "se_diff"]
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(r[c]) if isinstance(r[c], float) else ("" if r[c] is None else str(r[c]))
                           for c in cols) + "\n")
    return buf.getvalue()
