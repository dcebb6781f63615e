"""Instance files, experiment configs, Monte-Carlo regret runs and reports.

Instance files are JSON. Probabilities may be given as decimal strings, which
are kept verbatim so a loaded instance writes back byte-for-byte the same
values::

    {
      "atoms": ["a", "b", "c", "d"],
      "family": [["0.7", "0.1", "0.1", "0.1"], ["0.1", "0.7", "0.1", "0.1"]],
      "base": ["0.4", "0.4", "0.1", "0.1"],
      "profile": {"linear": 2},
      "hypotheses": {
        "thresholds": {"preorder": [0, 1, 2, 3]},
        "pair": {"members": [[1, 0, 0, 0], [0, 1, 0, 0]]},
        "masks": {"masks": [1, 2, 12]}
      },
      "sets": {"left": 3}
    }
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .adversaries import (
    Adversary,
    IIDAdversary,
    comparator_losses,
    make_fragmentation_adversary,
    make_threshold_hiding_adversary,
    run_protocol,
)
from .coupling import couple_step
from .errors import (
    GensmoothError,
    InputError,
    MalformedInstanceError,
    MaskRangeError,
    NormalizationError,
)
from .learners import ConstantLearner, ERMLearner, Learner, make_hedge_cover_learner, make_hedge_learner
from .measure import (
    PROB_SUM_TOL,
    Distribution,
    DistributionFamily,
    FiniteSpace,
    HypothesisFamily,
    check_mask,
    threshold_family,
)
from .smoothness import FRAGMENTATION_CUTOFF, ToleranceProfile, fragmentation_number, linear_profile

CSV_HEADER = ["T", "trial", "regret", "expected_regret", "dummy_rounds"]


# --------------------------------------------------------------------------- instances


@dataclass
class Instance:
    space: FiniteSpace
    family: DistributionFamily
    hypotheses: dict[str, HypothesisFamily]
    base: Distribution | None = None
    profile: ToleranceProfile | None = None
    sets: dict[str, int] = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def hypothesis(self, name: str | None) -> HypothesisFamily:
        if name is None:
            if len(self.hypotheses) != 1:
                raise InputError("name the hypothesis family: the instance has several")
            return next(iter(self.hypotheses.values()))
        try:
            return self.hypotheses[name]
        except KeyError:
            raise InputError(f"instance has no hypothesis family {name!r}") from None

    @property
    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode()).hexdigest()


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _prob_row(row: Any, n: int | None, what: str) -> tuple[np.ndarray, tuple[str, ...]]:
    if not isinstance(row, list) or not row:
        raise MalformedInstanceError(f"{what} must be a non-empty list")
    texts = []
    for v in row:
        if isinstance(v, bool) or not isinstance(v, (str, int, float)):
            raise MalformedInstanceError(f"{what} holds a non-numeric entry {v!r}")
        texts.append(v if isinstance(v, str) else repr(v))
    try:
        p = np.array([float(t) for t in texts])
    except ValueError:
        raise MalformedInstanceError(f"{what} holds a non-numeric entry") from None
    if n is not None and p.size != n:
        raise MalformedInstanceError(f"{what} has {p.size} entries, expected {n}")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise NormalizationError(f"{what} has entries outside [0, 1]")
    if abs(p.sum() - 1.0) > PROB_SUM_TOL:
        raise NormalizationError(f"{what} sums to {p.sum()!r}, not 1")
    return p, tuple(texts)


def _hypotheses(spec: Any, n: int, name: str) -> HypothesisFamily:
    if not isinstance(spec, dict):
        raise MalformedInstanceError(f"hypothesis family {name!r} must be an object")
    try:
        if "preorder" in spec and "members" not in spec:
            ranks = spec["preorder"]
            if not isinstance(ranks, list) or len(ranks) != n:
                raise MalformedInstanceError(f"{name!r}: preorder must rank all {n} atoms")
            return threshold_family(ranks)
        if "masks" in spec:
            masks = spec["masks"]
            if not isinstance(masks, list) or not masks or not all(isinstance(m, int) for m in masks):
                raise MalformedInstanceError(f"{name!r}: masks must be a non-empty integer list")
            for m in masks:
                check_mask(n, m)
            rows = np.array([[(m >> i) & 1 for i in range(n)] for m in masks], dtype=np.int8)
            return HypothesisFamily(rows, spec.get("preorder"))
        members = spec["members"]
    except KeyError:
        raise MalformedInstanceError(f"{name!r} needs 'members', 'masks' or 'preorder'") from None
    if not isinstance(members, list) or not members or any(not isinstance(r, list) or len(r) != n for r in members):
        raise MalformedInstanceError(f"{name!r}: members must be 0/1 rows of length {n}")
    try:
        return HypothesisFamily(np.array(members), spec.get("preorder"))
    except InputError as e:
        raise MalformedInstanceError(f"{name!r}: {e}") from None


def _profile(spec: Any) -> ToleranceProfile:
    if not isinstance(spec, dict):
        raise MalformedInstanceError("profile must be an object")
    if "linear" in spec:
        return linear_profile(float(spec["linear"]))
    if "breakpoints" in spec:
        try:
            return ToleranceProfile(tuple((float(z), float(v)) for z, v in spec["breakpoints"]))
        except (TypeError, ValueError, InputError) as e:
            raise MalformedInstanceError(f"bad profile breakpoints: {e}") from None
    raise MalformedInstanceError("profile needs 'linear' or 'breakpoints'")


def parse_instance(data: Any) -> Instance:
    if not isinstance(data, dict):
        raise MalformedInstanceError("instance must be a JSON object")
    if "family" not in data:
        raise MalformedInstanceError("instance needs a 'family'")
    if "atoms" in data:
        atoms = data["atoms"]
        if not isinstance(atoms, list) or not atoms or not all(isinstance(a, str) for a in atoms):
            raise MalformedInstanceError("atoms must be a non-empty list of labels")
        try:
            space = FiniteSpace(tuple(atoms))
        except InputError as e:
            raise MalformedInstanceError(str(e)) from None
    elif "n" in data:
        if not isinstance(data["n"], int) or data["n"] < 1:
            raise MalformedInstanceError("n must be a positive integer")
        space = FiniteSpace.of_size(data["n"])
    else:
        rows = data["family"]
        if not isinstance(rows, list) or not rows or not isinstance(rows[0], list):
            raise MalformedInstanceError("family must be a list of probability rows")
        space = FiniteSpace.of_size(len(rows[0]))
    n = space.n
    rows = data["family"]
    if not isinstance(rows, list) or not rows:
        raise MalformedInstanceError("family must be a non-empty list")
    members = []
    for i, row in enumerate(rows):
        p, texts = _prob_row(row, n, f"family row {i}")
        members.append(Distribution(p, texts))
    family = DistributionFamily(tuple(members))
    base = None
    if data.get("base") is not None:
        p, texts = _prob_row(data["base"], n, "base")
        base = Distribution(p, texts)
    profile = _profile(data["profile"]) if data.get("profile") is not None else None
    hyps = data.get("hypotheses", {})
    if not isinstance(hyps, dict):
        raise MalformedInstanceError("hypotheses must be an object of named families")
    hypotheses = {name: _hypotheses(spec, n, name) for name, spec in hyps.items()}
    sets = data.get("sets", {})
    if not isinstance(sets, dict) or not all(isinstance(v, int) for v in sets.values()):
        raise MalformedInstanceError("sets must map names to integer masks")
    for name, mask in sets.items():
        try:
            check_mask(n, mask)
        except MaskRangeError as e:
            raise MaskRangeError(f"set {name!r}: {e}") from None
    return Instance(space, family, hypotheses, base, profile, dict(sets), data)


def load_instance(path: str | Path) -> Instance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise MalformedInstanceError(f"{path}: not valid JSON ({e.msg})") from None
    except OSError as e:
        raise MalformedInstanceError(f"{path}: {e.strerror}") from None
    return parse_instance(data)


def dump_instance(instance: Instance, path: str | Path | None = None) -> str:
    """Serialise back to JSON; decimal strings from the source file are kept as written."""
    text = json.dumps(instance.raw, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def instance_to_raw(
    family: DistributionFamily,
    hypotheses: dict[str, HypothesisFamily] | None = None,
    base: Distribution | None = None,
    atoms: list[str] | None = None,
    profile: dict | None = None,
) -> dict:
    """Build the JSON object for an in-memory instance (probabilities as ``repr`` strings)."""

    def row(d: Distribution) -> list[str]:
        return list(d.decimals) if d.decimals else [repr(float(v)) for v in d.probs]

    raw: dict[str, Any] = {"atoms": atoms or [f"x{i}" for i in range(family.n)]}
    raw["family"] = [row(m) for m in family.members]
    if base is not None:
        raw["base"] = row(base)
    if profile is not None:
        raw["profile"] = profile
    raw["hypotheses"] = {}
    for name, h in (hypotheses or {}).items():
        spec: dict[str, Any] = {"members": h.members.tolist()}
        if h.preorder is not None:
            spec["preorder"] = list(h.preorder)
        raw["hypotheses"][name] = spec
    return raw


# --------------------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    instance: str
    adversary: dict
    learner: dict
    horizons: list[int]
    trials: int
    seed: int = 0
    comparator: str | None = None
    eps_grid: list[float] = field(default_factory=list)
    coupling_eps: float | None = None
    output: dict = field(default_factory=dict)
    base_dir: str = "."

    def __post_init__(self):
        if not self.horizons or any(not isinstance(t, int) or t < 1 for t in self.horizons):
            raise InputError("horizons must be positive integers")
        if any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            raise InputError("horizons must be strictly ascending")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise InputError("trials must be at least 1")
        for spec, what in ((self.adversary, "adversary"), (self.learner, "learner")):
            if not isinstance(spec, dict) or "kind" not in spec:
                raise InputError(f"{what} spec needs a 'kind'")

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path = ".") -> "ExperimentConfig":
        known = {"instance", "adversary", "learner", "horizons", "trials", "seed", "comparator",
                 "eps_grid", "coupling_eps", "output"}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        missing = {"instance", "adversary", "learner", "horizons", "trials"} - set(data)
        if missing:
            raise InputError(f"config is missing {sorted(missing)}")
        return cls(**data, base_dir=str(base_dir))

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"cannot read config {path}: {e}") from None
        return cls.from_dict(data, path.parent)

    def resolve(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        return {
            "instance": self.instance, "adversary": self.adversary, "learner": self.learner,
            "horizons": self.horizons, "trials": self.trials, "seed": self.seed,
            "comparator": self.comparator, "eps_grid": self.eps_grid,
            "coupling_eps": self.coupling_eps, "output": self.output,
        }


def trial_seed(base: int, horizon: int, trial: int) -> int:
    """Stable 64-bit seed per (base, T, trial); new horizons never shift old trials."""
    digest = hashlib.blake2b(f"{base}:{horizon}:{trial}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


# --------------------------------------------------------------------------- report


@dataclass
class RegretReport:
    rows: list[dict]
    metadata: dict = field(default_factory=dict)

    @property
    def horizons(self) -> list[int]:
        return sorted({r["T"] for r in self.rows})

    def column(self, horizon: int, key: str = "expected_regret") -> np.ndarray:
        return np.array([r[key] for r in self.rows if r["T"] == horizon], dtype=float)

    def summary(self, key: str = "expected_regret") -> list[tuple[int, float, float]]:
        out = []
        for t in self.horizons:
            v = self.column(t, key)
            se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
            out.append((t, float(v.mean()), se))
        return out

    def slope(self, key: str = "expected_regret") -> float | None:
        """Least-squares slope of log mean regret against log T."""
        pts = [(t, m) for t, m, _ in self.summary(key) if m > 0]
        if len(pts) < 2:
            return None
        x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
        return float(np.polyfit(x, y, 1)[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r["T"], r["trial"], repr(float(r["regret"])), repr(float(r["expected_regret"])),
                        r["dummy_rounds"]])
        return buf.getvalue()

    def plotdata(self, key: str = "expected_regret") -> str:
        lines = ["T,mean,stderr"]
        lines += [f"{t},{m!r},{s!r}" for t, m, s in self.summary(key)]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        body = {
            "rows": self.rows,
            "summary": [{"T": t, "mean": m, "stderr": s} for t, m, s in self.summary()],
            "slope": self.slope(),
            "metadata": self.metadata,
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "RegretReport":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != CSV_HEADER:
            raise InputError(f"report CSV must start with the header {','.join(CSV_HEADER)}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            try:
                rows.append({"T": int(rec[0]), "trial": int(rec[1]), "regret": float(rec[2]),
                             "expected_regret": float(rec[3]), "dummy_rounds": int(rec[4])})
            except (ValueError, IndexError):
                raise InputError(f"bad report row {rec!r}") from None
        return cls(rows)


# --------------------------------------------------------------------------- experiments


@dataclass
class Setup:
    """Everything one (T, trial) needs; the learner is rebuilt per horizon."""

    instance: Instance
    adversary: Adversary
    comparator: HypothesisFamily
    keep_masks: list[int] | None
    metadata: dict


def _build_adversary(cfg: ExperimentConfig, inst: Instance, meta: dict) -> tuple[Adversary, HypothesisFamily]:
    spec = dict(cfg.adversary)
    kind = spec.pop("kind")
    family = inst.family
    if kind == "iid":
        comparator = inst.hypothesis(cfg.comparator)
        target = int(spec.get("target", 0))
        if not 0 <= target < len(comparator):
            raise InputError("iid target must index the comparator family")
        adv = IIDAdversary(family, comparator[target], spec.get("schedule", 0), float(spec.get("noise", 0.0)),
                           target_index=target)
        return adv, comparator
    if kind == "threshold-hiding":
        eps = float(spec["eps"])
        mode = "exact" if family.n <= FRAGMENTATION_CUTOFF else "greedy"
        parts = fragmentation_number(family, eps, mode=mode)
        meta["fragmentation"] = {"eps": eps, "count": parts.count, "exact": parts.exact}
        adv = make_threshold_hiding_adversary(family, parts, int(spec["depth"]), int(spec.get("probe_budget", 1)))
        return adv, adv.comparator
    if kind == "fragmentation":
        eps, d = float(spec["eps"]), int(spec.get("d", 1))
        adv, comparator = make_fragmentation_adversary(family, eps, d)
        meta["fragmentation"] = {"eps": eps, "count": adv.witness.count, "exact": adv.witness.exact, "d": d}
        return adv, comparator
    raise InputError(f"unknown adversary kind {kind!r}")


def _build_learner(cfg: ExperimentConfig, setup: Setup, horizon: int) -> Learner:
    spec = cfg.learner
    kind = spec["kind"]
    inst, comparator = setup.instance, setup.comparator
    if kind == "erm":
        return ERMLearner(comparator)
    if kind == "hedge":
        return make_hedge_learner(comparator, horizon)
    if kind == "constant":
        return ConstantLearner(inst.space.n, int(spec.get("label", 0)))
    if kind == "hedge-cover":
        if inst.base is None:
            raise InputError("hedge-cover needs a base measure in the instance")
        learner = make_hedge_cover_learner(comparator, inst.family, inst.base, inst.profile,
                                           float(spec["eps"]), horizon)
        setup.metadata.setdefault("cover", {"eps": learner.eps, "delta": learner.delta,
                                            "size": len(learner.experts),
                                            "max_residual": learner.cover.max_residual})
        return learner
    raise InputError(f"unknown learner kind {kind!r}")


def prepare(cfg: ExperimentConfig) -> Setup:
    inst = load_instance(cfg.resolve(cfg.instance))
    meta: dict[str, Any] = {"instance_sha256": inst.digest, "config": cfg.to_dict()}
    adversary, comparator = _build_adversary(cfg, inst, meta)
    keep = None
    if cfg.coupling_eps is not None:
        if inst.base is None or inst.profile is None:
            raise InputError("dummy-round counting needs a base measure and a profile")
        steps = [couple_step(mu, inst.base, inst.profile, cfg.coupling_eps) for mu in inst.family.members]
        keep = [s.kept_mask for s in steps]
        meta["coupling"] = {"eps": cfg.coupling_eps, "rho": inst.profile(cfg.coupling_eps),
                            "dummy_probs": [s.dummy_prob for s in steps]}
    if inst.base is not None and inst.profile is not None:
        cert = {"base": inst.raw.get("base"), "profile": inst.raw.get("profile")}
        meta["certificate_sha256"] = hashlib.sha256(canonical_json(cert).encode()).hexdigest()
    if cfg.eps_grid:
        mode = "exact" if inst.family.n <= FRAGMENTATION_CUTOFF else "greedy"
        meta["fragmentation_grid"] = {
            repr(e): fragmentation_number(inst.family, e, mode=mode).count for e in cfg.eps_grid
        }
    return Setup(inst, adversary, comparator, keep, meta)


def run_trial(cfg: ExperimentConfig, setup: Setup, horizon: int, trial: int):
    seed = trial_seed(cfg.seed, horizon, trial)
    learner = _build_learner(cfg, setup, horizon)
    tr = run_protocol(setup.adversary, learner, setup.instance.family, horizon, seed,
                      setup.comparator, setup.keep_masks)
    # independent recomputation of the best comparator by full enumeration
    recomputed = comparator_losses(setup.comparator, tr.atom, tr.label)
    if not np.array_equal(recomputed, tr.comparator_losses):
        raise AssertionError("incremental comparator accounting disagrees with enumeration")
    if hasattr(learner, "bound_holds") and not learner.bound_holds():
        raise AssertionError("Hedge bookkeeping violates its regret bound")
    return tr, learner


def run_experiment(cfg: ExperimentConfig, timestamp: bool = True) -> RegretReport:
    setup = prepare(cfg)
    rows = []
    for horizon in cfg.horizons:
        for trial in range(cfg.trials):
            try:
                tr, _ = run_trial(cfg, setup, horizon, trial)
            except GensmoothError as e:
                raise type(e)(f"T={horizon} trial={trial}: {e}") from e
            rows.append({
                "T": horizon,
                "trial": trial,
                "regret": tr.regret,
                "expected_regret": tr.expected_regret,
                "dummy_rounds": tr.dummy_rounds,
            })
    meta = dict(setup.metadata)
    if timestamp:
        meta["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    report = RegretReport(rows, meta)
    write_outputs(cfg, report)
    return report


def write_outputs(cfg: ExperimentConfig, report: RegretReport) -> None:
    out = cfg.output or {}
    writers = {"csv": report.to_csv, "plotdata": report.plotdata, "json": report.to_json}
    for key, path in out.items():
        if key not in writers:
            raise InputError(f"unknown output kind {key!r}")
        target = cfg.resolve(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(writers[key]())
