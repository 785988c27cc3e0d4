"""Experiment manifests and their runners.

A manifest is a TOML document with a ``name``, a ``kind`` and a payload.
Runners are pure functions of the parsed manifest; they return the files
to write and a list of check outcomes. Writing and exit codes live in
:mod:`ehcrn.cli`.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import analytic as an
from .fsmc import FsmcConfig, parse_snr
from .hybrid import HybridConfig, Policy, RewardTable, DEFAULT_REWARDS, curve_to_csv, CurveRow, run_hybrid_episode
from .model import ArrivalPoint, SpecError, SystemSpec, load_toml_text, spec_from_dict, spec_to_dict
from .slotsim import SimConfig, classify_stability, estimate_boundary, interior_points, run_episode

KINDS = ("Region", "SimBoundary", "Crossover", "Hybrid", "Sweep")
MIN_VALIDATE_SLOTS = 100_000


class ManifestError(SpecError):
    """Structurally invalid manifest or override."""


@dataclass
class Check:
    name: str
    passed: bool
    detail: dict[str, Any] = field(default_factory=dict)


@dataclass
class RunResult:
    files: dict[str, str] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def merge(self, other: "RunResult", prefix: str = "") -> None:
        for k, v in other.files.items():
            self.files[prefix + k] = v
        for c in other.checks:
            self.checks.append(replace(c, name=prefix + c.name))


# ---------------------------------------------------------------- manifest io


def parse_value(text: str) -> Any:
    """TOML scalar/array if it parses, else the raw string."""
    try:
        return load_toml_text(f"v = {text}")["v"]
    except Exception:
        return text


def apply_override(doc: dict[str, Any], assignment: str) -> None:
    if "=" not in assignment:
        raise ManifestError([f"--set {assignment!r}: expected KEY=VALUE"])
    key, raw = assignment.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ManifestError([f"--set {assignment!r}: empty key"])
    node = doc
    for part in path[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        if not isinstance(nxt, dict):
            raise ManifestError([f"--set {key}: {part!r} is not a table"])
        node = nxt
    node[path[-1]] = parse_value(raw.strip())


def load_manifest(text: str, overrides: Sequence[str] = (), seed: int | None = None) -> dict[str, Any]:
    try:
        doc = load_toml_text(text)
    except Exception as exc:
        raise ManifestError([f"manifest: not valid TOML ({exc})"]) from exc
    for item in overrides:
        apply_override(doc, item)
    if seed is not None:
        doc["seed"] = int(seed)
    check_manifest(doc)
    return doc


def check_manifest(doc: Mapping[str, Any]) -> None:
    problems = []
    if not isinstance(doc.get("name"), str) or not doc.get("name"):
        problems.append("name: missing or not a string")
    elif any(c in doc["name"] for c in "/\\"):
        problems.append("name: must not contain path separators")
    if doc.get("kind") not in KINDS:
        problems.append(f"kind: expected one of {', '.join(KINDS)}, got {doc.get('kind')!r}")
    if problems:
        raise ManifestError(problems)


def _section(doc: Mapping[str, Any], key: str) -> dict[str, Any]:
    val = doc.get(key, {})
    if not isinstance(val, dict):
        raise ManifestError([f"{key}: expected a table"])
    return val


def _pmap(fn: Callable, items: Sequence[Any], jobs: int) -> list[Any]:
    """Order-preserving map, optionally over a process pool."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- specs and curves

CURVE_SPEC_KEYS = {
    "mode": ("mode",),
    "k": ("topology", "k"),
    "topology": ("topology", "kind"),
    "lambda_ep": ("energy", "lambda_ep"),
    "lambda_es": ("energy", "lambda_es"),
    "p_pspd": ("links", "p_pspd"),
    "p_psss": ("links", "p_psss"),
    "p_sspd": ("links", "p_sspd"),
    "p_sssd": ("links", "p_sssd"),
}


def curve_spec(base: Mapping[str, Any], curve: Mapping[str, Any]) -> SystemSpec:
    doc = copy.deepcopy(dict(base))
    for key, path in CURVE_SPEC_KEYS.items():
        if key not in curve:
            continue
        node = doc
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = curve[key]
        if key == "k":
            doc.setdefault("topology", {})["kind"] = "cluster" if int(curve["k"]) > 1 else "single"
    return spec_from_dict(doc)


def _curves(doc: Mapping[str, Any]) -> list[dict[str, Any]]:
    curves = doc.get("curve", [{"label": "base"}])
    if not isinstance(curves, list) or not curves:
        raise ManifestError(["curve: expected a non-empty array of tables"])
    labels = [str(c.get("label", "")) for c in curves]
    if any(not l for l in labels) or len(set(labels)) != len(labels):
        raise ManifestError(["curve: every curve needs a unique non-empty label"])
    return curves


# ---------------------------------------------------------------- region


def _region_task(args: tuple) -> an.RegionBoundary:
    spec, curve, grid, steps, a_steps, tol = args
    variant = str(curve.get("variant", "union"))
    if variant == "union":
        a_values = [float(curve["a"])] if "a" in curve else None
        return an.region_envelope(spec, steps, a_steps, tol, grid=grid, a_values=a_values)
    if "a" not in curve:
        raise ManifestError([f"curve {curve['label']}: variant {variant} needs a fixed 'a'"])
    return an.dominant_boundary(spec, an.Variant(variant), float(curve["a"]), steps, tol, grid=grid)


def run_region(doc: Mapping[str, Any], jobs: int = 1) -> RunResult:
    base = _section(doc, "spec")
    opts = _section(doc, "region")
    steps = int(opts.get("lambda_p_steps", 201))
    a_steps = int(opts.get("a_steps", an.DEFAULT_A_STEPS))
    tol = float(opts.get("tol", an.DEFAULT_TOL))
    if steps < 2:
        raise ManifestError([f"region.lambda_p_steps: must be >= 2, got {steps}"])
    curves = _curves(doc)
    specs = [curve_spec(base, c) for c in curves]
    grid = None
    if "lambda_p" in opts:
        grid = [float(x) for x in opts["lambda_p"]]
        if not grid:
            raise ManifestError(["region.lambda_p: empty grid"])
    elif opts.get("shared_grid", len(curves) > 1):
        top = max(an.pu_service_rate(s) for s in specs)
        grid = (np.arange(steps) * (top / steps)).tolist()
    tasks = [(s, c, grid, steps, a_steps, tol) for s, c in zip(specs, curves)]
    boundaries = _pmap(_region_task, tasks, jobs)
    res = RunResult()
    by_label = {}
    name = doc["name"]
    for c, b in zip(curves, boundaries):
        label = c["label"]
        b.meta.update({"manifest": name, "curve": label, "variant": str(c.get("variant", "union"))})
        by_label[label] = (b, specs[curves.index(c)])
        res.files[f"{name}_{label}.csv"] = b.to_csv()
        res.files[f"{name}_{label}.json"] = b.to_json() + "\n"
    for chk in doc.get("check", []):
        res.checks.append(_region_check(chk, by_label))
    return res


def _pair(chk: Mapping[str, Any], by_label: Mapping[str, Any], keys: tuple[str, str]):
    try:
        (b1, s1), (b2, s2) = by_label[chk[keys[0]]], by_label[chk[keys[1]]]
    except KeyError as exc:
        raise ManifestError([f"check {chk.get('type')}: unknown curve {exc}"]) from exc
    if b1.lambda_p.shape != b2.lambda_p.shape or np.any(b1.lambda_p != b2.lambda_p):
        raise ManifestError([f"check {chk.get('type')}: curves must share a lambda_p grid"])
    return b1, s1, b2, s2


def _region_check(chk: Mapping[str, Any], by_label: Mapping[str, Any]) -> Check:
    kind = chk.get("type")
    tol = float(chk.get("tol", 2 * an.DEFAULT_TOL))
    if kind == "dominates":
        hi, _, lo, _ = _pair(chk, by_label, ("upper", "lower"))
        worst = float(np.min(hi.lambda_s_max - lo.lambda_s_max))
        return Check(f"dominates:{chk['upper']}>={chk['lower']}", worst >= -tol, {"min_difference": worst, "tol": tol})
    if kind == "coincide_beyond":
        b1, _, b2, _ = _pair(chk, by_label, ("first", "second"))
        x = float(chk["lambda_p"])
        mask = b1.lambda_p >= x
        gap = float(np.max(np.abs(b1.lambda_s_max - b2.lambda_s_max)[mask])) if mask.any() else 0.0
        return Check(f"coincide_beyond:{x}", gap <= tol, {"max_gap": gap, "tol": tol, "points": int(mask.sum())})
    if kind == "single_crossing":
        c, cspec, n, _ = _pair(chk, by_label, ("coop", "noncoop"))
        diff = c.lambda_s_max - n.lambda_s_max
        grid = c.lambda_p
        sign = np.where(diff > tol, 1, np.where(diff < -tol, -1, 0))
        nz = sign[sign != 0]
        changes = int(np.count_nonzero(np.diff(nz)))
        expected = an.boundary_crossing(cspec)
        step = float(grid[1] - grid[0]) if grid.size > 1 else 0.0
        first_pos = float(grid[np.argmax(sign > 0)]) if np.any(sign > 0) else float("nan")
        ok = changes == 1 and nz[0] < 0 and abs(first_pos - expected) <= 2 * step + tol
        return Check(
            "single_crossing",
            bool(ok),
            {"sign_changes": changes, "boundary_crossing": expected, "first_coop_better": first_pos, "grid_step": step},
        )
    raise ManifestError([f"check: unknown region check type {kind!r}"])


# ---------------------------------------------------------------- crossover


QUANTITIES: dict[str, Callable[[SystemSpec], float]] = {
    "crossover": an.crossover_rate,
    "boundary_crossing": an.boundary_crossing,
    "max_pu_rate": lambda spec: an.max_pu_rate_vs_k(spec.links, spec.energy, [spec.k])[0],
}


def run_crossover(doc: Mapping[str, Any], jobs: int = 1) -> RunResult:
    base = _section(doc, "spec")
    quantity = doc.get("quantity", "crossover")
    if quantity not in QUANTITIES:
        raise ManifestError([f"quantity: expected one of {', '.join(QUANTITIES)}, got {quantity!r}"])
    sweep = _section(doc, "sweep")
    base_spec = spec_from_dict(base)
    axes = {
        "lambda_ep": [float(x) for x in sweep.get("lambda_ep", [base_spec.energy.lambda_ep])],
        "lambda_es": [float(x) for x in sweep.get("lambda_es", [base_spec.energy.lambda_es])],
        "k": [int(x) for x in sweep.get("k", [base_spec.k])],
    }
    for key, vals in axes.items():
        if not vals:
            raise ManifestError([f"sweep.{key}: empty list"])
    rows = []
    series: dict[str, list[float]] = {}
    for curve in _curves(doc):
        vals = []
        for lep in axes["lambda_ep"]:
            for les in axes["lambda_es"]:
                for k in axes["k"]:
                    spec = curve_spec(base, {**curve, "lambda_ep": lep, "lambda_es": les, "k": k})
                    v = QUANTITIES[quantity](spec)
                    rows.append((curve["label"], lep, les, k, v))
                    vals.append(v)
        series[curve["label"]] = vals
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["curve", "lambda_ep", "lambda_es", "k", "value"])
    for label, lep, les, k, v in rows:
        w.writerow([label, an.fmt(lep), an.fmt(les), k, an.fmt(v)])
    res = RunResult({f"{doc['name']}.csv": buf.getvalue()})
    for chk in doc.get("check", []):
        res.checks.append(_series_check(chk, series))
    return res


def _series_check(chk: Mapping[str, Any], series: Mapping[str, list[float]]) -> Check:
    kind = chk.get("type")
    label = chk.get("curve")
    if label not in series:
        raise ManifestError([f"check {kind}: unknown curve {label!r}"])
    vals = np.asarray(series[label])
    tol = float(chk.get("tol", 1e-12))
    if kind == "monotone":
        direction = chk.get("direction", "nonincreasing")
        d = np.diff(vals)
        if direction == "nonincreasing":
            ok = bool(np.all(d <= tol))
        elif direction == "nondecreasing":
            ok = bool(np.all(d >= -tol))
        elif direction == "decreasing_until_zero":
            pos = vals[:-1] > 0
            ok = bool(np.all(d[pos] < 0) and np.all(d[~pos] <= tol))
        else:
            raise ManifestError([f"check monotone: unknown direction {direction!r}"])
        return Check(f"monotone:{label}:{direction}", ok, {"values": vals.tolist()})
    if kind == "values":
        expected = np.asarray(chk["expected"], dtype=float)
        if expected.shape != vals.shape:
            raise ManifestError([f"check values: expected {vals.size} values, got {expected.size}"])
        gap = float(np.max(np.abs(vals - expected)))
        return Check(f"values:{label}", gap <= tol, {"max_gap": gap, "tol": tol, "values": vals.tolist()})
    if kind == "limit":
        gap = abs(float(vals[-1]) - float(chk["expected"]))
        return Check(f"limit:{label}", gap <= tol, {"last": float(vals[-1]), "gap": gap, "tol": tol})
    raise ManifestError([f"check: unknown series check type {kind!r}"])


# ---------------------------------------------------------------- validate (slot-sim oracle)


def _rates_task(args: tuple) -> dict[str, Any]:
    spec, point, variant, a, slots, seed = args
    st = run_episode(SimConfig(spec, point, a, slots, seed, dominant=variant))
    ref = an.dominant_rates(spec, variant, a, point)
    emp = st.service_rates()
    fields = ("mu_p", "mu_ps", "mu_s", "p_idle")
    gaps = {f: abs(getattr(emp, f) - getattr(ref, f)) for f in fields}
    return {
        "lambda_p": point.lambda_p,
        "lambda_s": point.lambda_s,
        "variant": variant.value,
        "a": a,
        "seed": seed,
        "analytic": {f: getattr(ref, f) for f in fields},
        "empirical": {f: getattr(emp, f) for f in fields},
        "gap": gaps,
        "max_gap": max(gaps.values()),
    }


def _control_task(args: tuple) -> dict[str, Any]:
    spec, point, a, slots, seed, slope_tol = args
    st = run_episode(SimConfig(spec, point, a, slots, seed))
    verdict = classify_stability(st, slope_tol)
    return {"seed": seed, "slope_Qs": st.growth_slope["Qs"], "Qs": verdict["Qs"]}


def _require_slots(section: str, slots: int) -> int:
    if slots < MIN_VALIDATE_SLOTS:
        raise ManifestError([f"{section}.slots: {slots} below the {MIN_VALIDATE_SLOTS} minimum for validation"])
    return slots


def run_validate(doc: Mapping[str, Any], jobs: int = 1) -> RunResult:
    spec = spec_from_dict(_section(doc, "spec"))
    seed = int(doc.get("seed", 0))
    report: dict[str, Any] = {"manifest": doc["name"], "spec": spec_to_dict(spec), "seed": seed}
    res = RunResult()
    sections = [k for k in ("service_rates", "negative_control", "boundary") if k in doc]
    if not sections:
        raise ManifestError(["validate: need at least one of [service_rates], [negative_control], [boundary]"])

    if "service_rates" in doc:
        opt = _section(doc, "service_rates")
        slots = _require_slots("service_rates", int(opt.get("slots", 1_000_000)))
        n = int(opt.get("points", 20))
        tol = float(opt.get("tol", 0.01))
        rng = np.random.Generator(np.random.PCG64(seed))
        pts = interior_points(spec, n, rng, float(opt.get("margin", 0.8)))
        tasks = [(spec, p, v, a, slots, seed + 1 + i) for i, (p, v, a) in enumerate(pts)]
        rows = _pmap(_rates_task, tasks, jobs)
        worst = max(r["max_gap"] for r in rows)
        breaches = [i for i, r in enumerate(rows) if r["max_gap"] >= tol]
        report["service_rates"] = {"slots": slots, "tol": tol, "points": rows, "worst_gap": worst, "breaches": breaches}
        res.checks.append(Check("service_rates", not breaches, {"worst_gap": worst, "tol": tol, "breaches": breaches}))

    if "negative_control" in doc:
        opt = _section(doc, "negative_control")
        slots = _require_slots("negative_control", int(opt.get("slots", 1_000_000)))
        seeds = int(opt.get("seeds", 20))
        a = float(opt.get("a", 0.5))
        outside = float(opt.get("outside", 1.05))
        inside = float(opt.get("inside", 0.95))
        required = float(opt.get("required", 0.95))
        slope_tol = float(opt.get("slope_tol", 2.0 / math.sqrt(slots)))
        rows = []
        for j, lp in enumerate(float(x) for x in opt.get("lambda_p", [0.0, 0.1, 0.2])):
            top = an.max_su_rate(spec, lp)
            entry: dict[str, Any] = {"lambda_p": lp, "boundary": top}
            for tag, factor, want in (("outside", outside, "Unstable"), ("inside", inside, "Stable")):
                point = ArrivalPoint(lp, min(1.0, factor * top))
                tasks = [(spec, point, a, slots, seed + 10_000 * (j + 1) + s, slope_tol) for s in range(seeds)]
                runs = _pmap(_control_task, tasks, jobs)
                frac = sum(r["Qs"] == want for r in runs) / seeds
                entry[tag] = {"lambda_s": point.lambda_s, "expected": want, "fraction": frac, "runs": runs}
            rows.append(entry)
        ok_out = all(r["outside"]["fraction"] >= required for r in rows)
        ok_in = all(r["inside"]["fraction"] >= required for r in rows)
        report["negative_control"] = {"slots": slots, "slope_tol": slope_tol, "required": required, "points": rows}
        res.checks.append(Check("negative_control_outside", ok_out, {"fractions": [r["outside"]["fraction"] for r in rows]}))
        res.checks.append(Check("negative_control_inside", ok_in, {"fractions": [r["inside"]["fraction"] for r in rows]}))

    if "boundary" in doc:
        opt = _section(doc, "boundary")
        slots = _require_slots("boundary", int(opt.get("slots", 200_000)))
        variant = an.Variant(str(opt.get("variant", "I")))
        a = float(opt.get("a", 0.5))
        grid = [float(x) for x in opt.get("lambda_p", [0.0, 0.1, 0.2])]
        max_gap = float(opt.get("max_gap", 0.02))
        mc = estimate_boundary(
            spec, a, grid, slots, int(opt.get("seeds", 3)), variant,
            float(opt.get("tol", 0.005)), opt.get("slope_tol"), base_seed=seed,
        )
        ref = an.dominant_boundary(spec, variant, a, grid=grid)
        gaps = np.abs(mc.lambda_s_max - ref.lambda_s_max)
        report["boundary"] = {
            "variant": variant.value,
            "a": a,
            "lambda_p": grid,
            "montecarlo": mc.lambda_s_max.tolist(),
            "analytic": ref.lambda_s_max.tolist(),
            "gap": gaps.tolist(),
        }
        res.files[f"{doc['name']}_boundary_mc.csv"] = mc.to_csv()
        res.files[f"{doc['name']}_boundary_analytic.csv"] = ref.to_csv()
        res.checks.append(Check("boundary", bool(np.all(gaps <= max_gap)), {"max_gap": float(gaps.max()), "tol": max_gap}))

    report["checks"] = [{"name": c.name, "passed": c.passed} for c in res.checks]
    res.files[f"{doc['name']}_report.json"] = _json(report)
    return res


# ---------------------------------------------------------------- hybrid

HYBRID_FLOAT_KEYS = ("r_p", "r_s", "interference")


def hybrid_template(doc: Mapping[str, Any]) -> HybridConfig:
    opt = _section(doc, "hybrid")
    fsmc = FsmcConfig.from_dict(_section(doc, "fsmc"))
    kw: dict[str, Any] = {"fsmc": fsmc, "seed": int(doc.get("seed", 0))}
    for key in HYBRID_FLOAT_KEYS:
        if key in opt:
            kw[key] = float(opt[key])
    for key in ("gamma_os", "gamma_ops", "gamma_relay"):
        if key in opt:
            kw[key] = parse_snr(opt[key])
    if "slots" in opt:
        kw["slots"] = int(opt["slots"])
    if "warmup" in opt:
        kw["warmup"] = int(opt["warmup"])
    if "rewards" in opt:
        rw = opt["rewards"]
        kw["rewards"] = RewardTable(rw.get("a_coop", DEFAULT_REWARDS.a_coop), rw.get("b_under", DEFAULT_REWARDS.b_under))
    try:
        return HybridConfig(**kw).validate()
    except TypeError as exc:
        raise ManifestError([f"hybrid: {exc}"]) from exc


def _hybrid_task(args: tuple) -> CurveRow:
    cfg = args[0]
    st = run_hybrid_episode(cfg)
    return CurveRow(Policy(cfg.policy).value, cfg.psi, cfg.lambda_p, st.delivered_su, st.delivered_pu)


def run_hybrid(doc: Mapping[str, Any], jobs: int = 1) -> RunResult:
    template = hybrid_template(doc)
    opt = _section(doc, "hybrid")
    if "lambda_p" in opt:
        grid = [float(x) for x in opt["lambda_p"]]
    else:
        grid = np.linspace(float(opt.get("lambda_p_min", 0.05)), float(opt.get("lambda_p_max", 0.95)),
                           int(opt.get("lambda_p_steps", 10))).tolist()
    if not grid:
        raise ManifestError(["hybrid.lambda_p: empty grid"])
    if any(not 0.0 <= x <= 1.0 for x in grid):
        raise ManifestError(["hybrid.lambda_p: values must lie in [0, 1]"])
    try:
        policies = [Policy(p) for p in opt.get("policies", [p.value for p in Policy])]
    except ValueError as exc:
        raise ManifestError([f"hybrid.policies: {exc}"]) from exc
    psis = [float(x) for x in opt.get("psi", [template.psi])]
    cfgs = [replace(template, policy=p, psi=s, lambda_p=lp) for p in policies for s in psis for lp in grid]
    for c in cfgs:
        c.validate()
    rows = _pmap(_hybrid_task, [(c,) for c in cfgs], jobs)
    rows.sort(key=lambda r: (r.policy, r.psi, r.lambda_p))
    res = RunResult({f"{doc['name']}.csv": curve_to_csv(rows)})
    table = {(r.policy, r.psi, r.lambda_p): r for r in rows}
    for chk in doc.get("check", []):
        res.checks.append(_hybrid_check(chk, table, grid))
    return res


def _lookup(table, policy: Policy, psi: float, lp: float) -> CurveRow:
    for (pol, s, x), row in table.items():
        if pol == policy.value and math.isclose(s, psi) and math.isclose(x, lp, abs_tol=1e-12):
            return row
    raise ManifestError([f"check: no run for policy={policy.value} psi={psi} lambda_p={lp}"])


def _hybrid_check(chk: Mapping[str, Any], table, grid: Sequence[float]) -> Check:
    kind = chk.get("type")
    if kind == "hybrid_dominates":
        psi = float(chk.get("psi", 0.2))
        worst = math.inf
        for lp in grid:
            h = _lookup(table, Policy.HYBRID, psi, lp).su_throughput
            base = max(_lookup(table, p, psi, lp).su_throughput for p in (Policy.CONVENTIONAL, Policy.NON_COOPERATIVE))
            worst = min(worst, h - base)
        return Check("hybrid_dominates", worst >= 0.0, {"min_margin": worst, "psi": psi})
    if kind == "psi_crossing":
        lo_psi, hi_psi = float(chk.get("low", 0.2)), float(chk.get("high", 0.6))
        lp_lo, lp_hi = float(chk.get("lambda_p_low", 0.05)), float(chk.get("lambda_p_high", 0.9))
        d_lo = (_lookup(table, Policy.HYBRID, lo_psi, lp_lo).su_throughput
                - _lookup(table, Policy.HYBRID, hi_psi, lp_lo).su_throughput)
        d_hi = (_lookup(table, Policy.HYBRID, hi_psi, lp_hi).su_throughput
                - _lookup(table, Policy.HYBRID, lo_psi, lp_hi).su_throughput)
        return Check("psi_crossing", d_lo > 0.0 and d_hi > 0.0, {"low_psi_margin": d_lo, "high_psi_margin": d_hi})
    if kind == "policies_agree":
        tol = float(chk.get("tol", 0.01))
        psi = float(chk.get("psi", 0.2))
        lp = float(chk.get("lambda_p", 0.0))
        policies = [Policy(p) for p in chk.get("policies", [p.value for p in Policy])]
        vals = [_lookup(table, p, psi, lp).su_throughput for p in policies]
        spread = max(vals) - min(vals)
        return Check(f"policies_agree:{lp}", spread <= tol, {"spread": spread, "tol": tol})
    raise ManifestError([f"check: unknown hybrid check type {kind!r}"])


# ---------------------------------------------------------------- sweep and dispatch

RUNNERS: dict[str, Callable[[Mapping[str, Any], int], RunResult]] = {
    "Region": run_region,
    "Crossover": run_crossover,
    "SimBoundary": run_validate,
    "Hybrid": run_hybrid,
}


def run_sweep(doc: Mapping[str, Any], jobs: int = 1) -> RunResult:
    base = _section(doc, "base")
    points = doc.get("point", [])
    if not isinstance(points, list) or not points:
        raise ManifestError(["point: a sweep needs at least one [[point]]"])
    res = RunResult()
    for i, pt in enumerate(points):
        label = str(pt.get("label", f"p{i}"))
        inner = copy.deepcopy(base)
        inner.setdefault("name", doc["name"])
        inner["name"] = f"{inner['name']}_{label}"
        inner.setdefault("seed", doc.get("seed", 0))
        for key, val in sorted(pt.get("set", {}).items()):
            apply_override(inner, f"{key}={json.dumps(val)}")
        check_manifest(inner)
        if inner["kind"] == "Sweep":
            raise ManifestError(["base.kind: sweeps cannot nest"])
        res.merge(RUNNERS[inner["kind"]](inner, jobs))
    return res


RUNNERS["Sweep"] = run_sweep

COMMAND_KINDS = {
    "region": ("Region",),
    "crossover": ("Crossover",),
    "validate": ("SimBoundary",),
    "hybrid": ("Hybrid",),
    "sweep": ("Sweep",),
}


def run_manifest(command: str, doc: Mapping[str, Any], jobs: int = 1) -> RunResult:
    allowed = COMMAND_KINDS[command]
    if doc["kind"] not in allowed:
        raise ManifestError([f"command {command} expects kind {' or '.join(allowed)}, got {doc['kind']}"])
    res = RUNNERS[doc["kind"]](doc, jobs)
    summary = {
        "name": doc["name"],
        "kind": doc["kind"],
        "files": sorted(res.files),
        "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in res.checks],
        "passed": res.passed,
    }
    res.files[f"{doc['name']}_summary.json"] = _json(summary)
    return res
