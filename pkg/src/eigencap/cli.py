"""Command-line experiment runner.

Configs are JSON documents. Missing blocks fall back to a preset; command-line
flags override the file. Every run writes ``manifest.json`` holding the fully
resolved config, derived seeds and a hash of each output file, and a manifest
can itself be passed back as ``--config`` to reproduce the run.

Exit codes: 0 success, 2 config or input error, 3 a numerical-failure flag
was raised (outputs are still written).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, io, learning, metrics, sampling, simcore, spectral

log = logging.getLogger("eigencap")

COMMANDS = ("features", "spectrum", "sweep", "classify", "moment-nsr", "ingest")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

PRESETS = {
    "circuit": {
        "encoding": {"random": {"ansatz": "circuit", "L": 6, "J": math.pi / 2, "tau": 3}},
        "inputs": {"grid": 300},
        "shots": 1 << 14,
    },
    "hamiltonian": {
        "encoding": {"random": {"ansatz": "hamiltonian", "L": 6, "J": 2.0, "t": 5.0,
                                "rms": [20.0, 5.0, 5.0]}},
        "inputs": {"grid": 5000},
        "shots": 1000,
    },
}

DEFAULT_REPEATS = {"sweep": 8, "classify": 10, "moment-nsr": 200}

BLOCK_DEFAULTS = {
    "spectrum": {"source": "encoding", "path": None, "K": None,
                 "shots_list": [1, 10, 100, 1000, 10**4, 10**5, 10**6, 10**7, 10**8],
                 "pca": None},
    "sweep": {"J": {"start": 0.0, "stop": math.pi, "steps": 9}, "L": None},
    "classify": {"n_train": 150, "n_test": 150, "K_L": "all",
                 "p0": learning.DEMO_P0.to_dict(), "p1": learning.DEMO_P1.to_dict(), "J": None},
    "moment_nsr": {"u": 0.5},
    "ingest": {"path": None, "K": None},
}

TOP_KEYS = {"preset", "encoding", "inputs", "shots", "repeats", "seed", "spectrum", "sweep",
            "classify", "moment_nsr", "ingest"}
RANDOM_KEYS = {"ansatz", "L", "J", "seed", "tau", "t", "rms", "mean", "J_max", "connectivity"}
PCA_TARGETS = {
    "u": lambda u: u,
    "u2": lambda u: u ** 2,
    "sin": lambda u: np.sin(np.pi * u),
    "tanh": lambda u: np.tanh(5.0 * u),
}


class ConfigError(ValueError):
    pass


# -- config -----------------------------------------------------------------


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if "manifest_version" in doc:
        doc = doc.get("config", {})
    return doc


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("encoding", "inputs"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_shots(v, where="shots"):
    if v is None or (isinstance(v, str) and v.lower() in ("inf", "expected", "infinity")):
        return None
    if isinstance(v, float) and math.isinf(v):
        return None
    try:
        if isinstance(v, bool):
            raise ValueError
        S = int(v)
        if S != float(v):
            raise ValueError
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a positive integer or 'inf', got {v!r}") from None
    if S < 1:
        raise ConfigError(f"{where}: must be >= 1, got {S}")
    return S


def resolve_config(command: str, doc: dict | None = None, *, seed=None, shots=None,
                   repeats=None) -> dict:
    """Preset + file + flag overrides, validated, as a plain JSON-able dict."""
    doc = dict(doc or {})
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
    preset = doc.get("preset", "circuit")
    if preset not in PRESETS:
        raise ConfigError(f"preset: unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    cfg = _merge({"preset": preset, **PRESETS[preset], "seed": 0, "repeats": None}, doc)
    block = command.replace("-", "_")
    if block in BLOCK_DEFAULTS:
        cfg[block] = _merge(BLOCK_DEFAULTS[block], cfg.get(block) or {})
        unknown = set(cfg[block]) - set(BLOCK_DEFAULTS[block])
        if unknown:
            raise ConfigError(f"{block}: unknown field(s) {sorted(unknown)}")
    for other in BLOCK_DEFAULTS:
        if other != block:
            cfg.pop(other, None)
    if seed is not None:
        cfg["seed"] = seed
    if shots is not None:
        cfg["shots"] = shots
    if repeats is not None:
        cfg["repeats"] = repeats

    try:
        cfg["seed"] = int(cfg["seed"])
    except (TypeError, ValueError):
        raise ConfigError(f"seed: expected an unsigned 64-bit integer, got {cfg['seed']!r}") from None
    if not 0 <= cfg["seed"] < 1 << 64:
        raise ConfigError("seed: must lie in [0, 2^64)")
    S = _parse_shots(cfg["shots"])
    cfg["shots"] = "inf" if S is None else S
    if cfg["repeats"] is None:
        cfg["repeats"] = DEFAULT_REPEATS.get(command, 1)
    if isinstance(cfg["repeats"], bool) or not isinstance(cfg["repeats"], int) or cfg["repeats"] < 1:
        raise ConfigError(f"repeats: expected a positive integer, got {cfg['repeats']!r}")
    _check_encoding(cfg["encoding"])
    _check_inputs(cfg["inputs"])
    return cfg


def _check_encoding(enc):
    if not isinstance(enc, dict):
        raise ConfigError("encoding: expected an object")
    if "random" in enc:
        if set(enc) != {"random"}:
            raise ConfigError("encoding: 'random' cannot be combined with explicit fields")
        r = enc["random"]
        bad = set(r) - RANDOM_KEYS
        if bad:
            raise ConfigError(f"encoding.random: unknown field(s) {sorted(bad)}")
        if "ansatz" not in r or "L" not in r:
            raise ConfigError("encoding.random: 'ansatz' and 'L' are required")
        return
    try:
        simcore.EncodingSpec.from_dict(enc)
    except (simcore.EncodingError, TypeError) as exc:
        raise ConfigError(f"encoding: {exc}") from None


def _check_inputs(inp):
    if not isinstance(inp, dict) or len(inp) != 1 or next(iter(inp)) not in ("grid", "iid", "values"):
        raise ConfigError("inputs: expected exactly one of {'grid': N}, {'iid': N}, {'values': [...]}")
    kind, v = next(iter(inp.items()))
    if kind == "values":
        if not isinstance(v, list) or not v or not all(
                isinstance(a, (int, float)) and not isinstance(a, bool) and -1 <= a <= 1 for a in v):
            raise ConfigError("inputs.values: expected a nonempty list of numbers in [-1, 1]")
    elif isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"inputs.{kind}: expected a positive integer")


def config_hash(command: str, cfg: dict) -> str:
    blob = json.dumps({"command": command, "config": cfg}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def derive_seed(seed: int, *parts) -> int:
    """64-bit child seed; string parts are hashed so streams can be named."""
    ints = [int(seed) & ((1 << 64) - 1)]
    for p in parts:
        if isinstance(p, str):
            p = int.from_bytes(hashlib.sha256(p.encode()).digest()[:4], "little")
        ints.append(int(p))
    return int(np.random.SeedSequence(ints).generate_state(2, np.uint32).view(np.uint64)[0])


def build_encoding(enc: dict, seed: int, *, offset: int = 0, J=None, L=None) -> simcore.EncodingSpec:
    """Explicit spec or a random draw; ``offset`` shifts the draw seed for repeats."""
    try:
        if "random" not in enc:
            spec = simcore.EncodingSpec.from_dict(enc)
            if L is not None and L != spec.L:
                raise ConfigError("an L sweep requires a random encoding directive")
            return spec if J is None else spec.with_coupling(J)
        r = dict(enc["random"])
        kw = {k: r[k] for k in ("tau", "t", "rms", "mean", "J_max", "connectivity") if k in r}
        coupling = r.get("J", math.pi / 2 if r["ansatz"] == simcore.CIRCUIT else 2.0)
        if J is not None:
            coupling = J
            kw.pop("J_max", None)
        return simcore.random_encoding(r["ansatz"], int(r["L"] if L is None else L), coupling,
                                       seed=int(r.get("seed", seed)) + offset, **kw)
    except (simcore.EncodingError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"encoding: {exc}") from None


def build_inputs(inp: dict, seed: int) -> np.ndarray:
    kind, v = next(iter(inp.items()))
    if kind == "values":
        return np.asarray(v, dtype=float)
    return sampling.input_grid(int(v), kind, seed=derive_seed(seed, "inputs"))


def _shots(cfg):
    return None if cfg["shots"] == "inf" else int(cfg["shots"])


# -- run bookkeeping ----------------------------------------------------------


@dataclass
class Run:
    command: str
    cfg: dict
    out: Path
    files: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    derived: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash(self.command, self.cfg)

    def meta(self, spec_hash: str = "") -> dict:
        return {"config_hash": self.hash, "spec_hash": spec_hash or "none"}

    def csv(self, name, header, rows, spec_hash="", extra=()):
        m = self.meta(spec_hash)
        m.update(dict(extra))
        self._record(io.write_csv(self.out / name, header, rows, m))

    def features(self, name, F):
        self._record(io.write_features(self.out / name, F, {"config_hash": self.hash}))

    def counts(self, name, F):
        self._record(io.export_counts(self.out / name, F, {"config_hash": self.hash}))

    def _record(self, path: Path):
        self.files[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()

    def flag(self, what: str):
        log.warning("numerical failure: %s", what)
        self.flags.append(what)

    def finish(self) -> int:
        manifest = {
            "manifest_version": 1,
            "eigencap_version": __version__,
            "command": self.command,
            "config": self.cfg,
            "config_hash": self.hash,
            "derived": self.derived,
            "files": dict(sorted(self.files.items())),
            "flags": self.flags,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return EXIT_NUMERIC if self.flags else EXIT_OK


# -- commands -----------------------------------------------------------------


def _encoding_and_features(run: Run):
    cfg = run.cfg
    spec = build_encoding(cfg["encoding"], cfg["seed"])
    us = build_inputs(cfg["inputs"], cfg["seed"])
    S = _shots(cfg)
    fseed = derive_seed(cfg["seed"], "features")
    run.derived.update(encoding=spec.to_dict(), spec_hash=spec.spec_hash(), feature_seed=fseed)
    return spec, sampling.feature_matrix(spec, us, S, seed=fseed)


def cmd_features(run: Run):
    _, F = _encoding_and_features(run)
    run.features("features.csv", F)
    if not F.is_expected:
        run.counts("counts.jsonl", F)


def _check_zero_noise(run, res, Y=None):
    if not (res.beta2[0] < 1e-9):
        run.flag(f"smallest NSR eigenvalue {res.beta2[0]:.3e} is not ~0")
    elif Y is not None and np.ptp(Y[:, 0]) > 1e-9:
        run.flag("zero-noise eigentask is not constant")


def cmd_spectrum(run: Run):
    cfg, block = run.cfg, run.cfg["spectrum"]
    source = block["source"]
    F = spec = None
    if source == "two_design":
        K = block["K"] or (1 << 6)
        if not isinstance(K, int) or K < 2:
            raise ConfigError("spectrum.K: expected an integer >= 2")
        res = spectral.solve_nsr(metrics.two_design_moments(K))
        run.derived.update(source="two_design", K=K)
    else:
        if source == "encoding":
            spec, F = _encoding_and_features(run)
        elif source in ("features", "counts"):
            if not block["path"]:
                raise ConfigError(f"spectrum.path: required for source {source!r}")
            try:
                F = (io.read_features(block["path"]) if source == "features"
                     else io.ingest_counts(block["path"], K=block["K"])[0])
            except OSError as exc:
                raise ConfigError(f"spectrum.path: {exc}") from None
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            run.derived.update(source=source, spec_hash=F.spec_hash)
        else:
            raise ConfigError(f"spectrum.source: unknown source {source!r}")
        try:
            res = spectral.solve_nsr_gram_free(F)
        except spectral.SpectralError as exc:
            run.flag(str(exc))
            return
    sh = res.spec_hash
    S = res.S
    run.csv("spectrum_raw.csv", io.SPECTRUM_HEADER, io.spectrum_rows(res), sh,
            {"N": res.N, "S": io.fmt(S)})
    final = spectral.correct_finite_shots(res) if math.isfinite(S) else res
    run.csv("spectrum.csv", io.SPECTRUM_HEADER, io.spectrum_rows(final), sh,
            {"N": res.N, "S": io.fmt(S)})
    run.csv("r_vectors.csv", ["feature"] + [f"r{k}" for k in range(res.K)],
            ([k, *row] for k, row in enumerate(res.r)), sh)
    Y = None
    if F is not None:
        Y = spectral.eigentasks(res, F).Y
        run.csv("eigentasks.csv", ["u"] + [f"y{k}" for k in range(res.K)],
                ([u, *row] for u, row in zip(F.inputs, Y)), sh)
    _check_zero_noise(run, res, Y)
    shots_list = block["shots_list"] or []
    rows = []
    for s in shots_list:
        s = _parse_shots(s, "spectrum.shots_list")
        s = math.inf if s is None else s
        rows.append([s, spectral.expressive_capacity(final.beta2, s), metrics.kc_cutoff(final.beta2, s)])
    run.csv("capacity.csv", ["S", "C_T", "K_c"], rows, sh)

    if block["pca"]:
        if spec is None or not math.isfinite(S):
            raise ConfigError("spectrum.pca: needs a generated encoding and finite shots")
        p = block["pca"]
        target = p.get("target", "u")
        if target not in PCA_TARGETS:
            raise ConfigError(f"spectrum.pca.target: choose from {sorted(PCA_TARGETS)}")
        cmp = learning.pca_compare(spec, PCA_TARGETS[target], F.inputs, int(S),
                                   seed=derive_seed(cfg["seed"], "pca"), K_prime=p.get("K_prime"))
        run.csv("pca.csv", ["target", "K_prime", "K_c", "eigentask_mse", "raw_mse", "all_mse"],
                [[target, p.get("K_prime") or cmp.K_c, cmp.K_c, cmp.eigentask_mse, cmp.raw_mse,
                  cmp.full_mse]], spec.spec_hash())


def sweep_values(block: dict) -> tuple[str, list]:
    if block.get("L") is not None:
        Ls = block["L"]
        if not isinstance(Ls, list) or not Ls or not all(isinstance(v, int) and v >= 1 for v in Ls):
            raise ConfigError("sweep.L: expected a nonempty list of positive integers")
        return "L", Ls
    J = block["J"]
    if isinstance(J, dict):
        try:
            vals = np.linspace(float(J["start"]), float(J["stop"]), int(J["steps"])).tolist()
        except (KeyError, TypeError, ValueError):
            raise ConfigError("sweep.J: expected {start, stop, steps} or a list") from None
    elif isinstance(J, list) and J:
        vals = [float(v) for v in J]
    else:
        raise ConfigError("sweep.J: expected {start, stop, steps} or a nonempty list")
    return "J", vals


def capacity_point(spec: simcore.EncodingSpec, us, S, seed: int) -> tuple[float, float, int]:
    """(C_T, ETC, K_c) for one encoding.

    With finite S the spectrum comes from sampled features with the finite-shot
    correction applied; with S = inf from expected features.
    """
    F = sampling.feature_matrix(spec, us, S, seed=seed)
    res = spectral.solve_nsr_gram_free(F)
    if S is None:
        CT = spectral.expressive_capacity(res.beta2, math.inf)
        Kc = int(np.isfinite(res.beta2).sum())
    else:
        res = spectral.correct_finite_shots(res, S)
        CT = spectral.expressive_capacity(res.beta2, S)
        Kc = metrics.kc_cutoff(res.beta2, S)
    etc = metrics.expected_total_correlation(spec, us).etc
    return CT, etc, Kc


def cmd_sweep(run: Run):
    cfg = run.cfg
    name, values = sweep_values(cfg["sweep"])
    us = build_inputs(cfg["inputs"], cfg["seed"])
    S = _shots(cfg)
    R = cfg["repeats"]
    per, mean = [], []
    seeds = {}
    for i, v in enumerate(values):
        cts, etcs = [], []
        for r in range(R):
            kw = {"L": v} if name == "L" else {"J": v}
            spec = build_encoding(cfg["encoding"], cfg["seed"], offset=r, **kw)
            fseed = derive_seed(cfg["seed"], "sweep", i, r)
            seeds[f"{i}:{r}"] = fseed
            try:
                CT, etc, Kc = capacity_point(spec, us, S, fseed)
            except spectral.SpectralError as exc:
                run.flag(f"{name}={v} encoding {r}: {exc}")
                CT, etc, Kc = math.nan, math.nan, 0
            per.append([v, r, spec.seed, CT, etc, Kc, spec.spec_hash()])
            cts.append(CT)
            etcs.append(etc)
        mean.append([v, float(np.mean(cts)), float(np.mean(etcs))])
    run.derived.update(sweep=name, feature_seeds=seeds)
    run.csv("sweep.csv", [name, "C_T", "etc"], mean, extra={"encodings": R})
    run.csv("sweep_encodings.csv", [name, "encoding", "encoding_seed", "C_T", "etc", "K_c", "spec_hash"],
            per)


def _task(cfg) -> learning.ClassificationTask:
    b = cfg["classify"]
    try:
        p0 = learning.GaussianMixture(**b["p0"])
        p1 = learning.GaussianMixture(**b["p1"])
        return learning.make_task(int(b["n_train"]), int(b["n_test"]), p0, p1,
                                  seed=derive_seed(cfg["seed"], "task"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"classify: {exc}") from None


def cmd_classify(run: Run):
    cfg, b = run.cfg, run.cfg["classify"]
    task = _task(cfg)
    S = _shots(cfg)
    P = cfg["repeats"]
    bayes = learning.bayes_rate(task.p0, task.p1)
    spec = build_encoding(cfg["encoding"], cfg["seed"])
    K = spec.K
    K_L = list(range(1, K + 1)) if b["K_L"] == "all" else b["K_L"]
    if not isinstance(K_L, list) or not all(isinstance(k, int) and 1 <= k <= K for k in K_L):
        raise ConfigError(f"classify.K_L: expected 'all' or integers in [1, {K}]")
    fseed = derive_seed(cfg["seed"], "classify")
    run.derived.update(encoding=spec.to_dict(), spec_hash=spec.spec_hash(), feature_seed=fseed,
                       bayes_rate=bayes)
    reports = learning.classify_pipeline(spec, task, S, sorted(set(K_L) | set(range(1, K + 1))),
                                         permutations=P, seed=fseed)
    if not all(r.converged for r in reports):
        run.flag(f"{sum(not r.converged for r in reports)} logistic fits did not converge")
    sh = spec.spec_hash()
    header = ["K_L", "permutation", "train_acc", "test_acc"]
    run.csv("fits.csv", header, [[r.K_L, r.permutation, r.train_accuracy, r.test_accuracy]
                                 for r in reports if r.K_L in K_L], sh)
    kc = [r for r in reports if r.K_L == min(max(r.K_c, 1), K)]
    run.csv("fits_kc.csv", header, [[r.K_L, r.permutation, r.train_accuracy, r.test_accuracy]
                                    for r in kc], sh, {"bayes_rate": io.fmt(bayes)})
    n_test = len(task.test)
    summary = []
    for k in K_L:
        rs = [r for r in reports if r.K_L == k]
        te = np.array([r.test_accuracy for r in rs])
        summary.append([k, float(np.mean([r.train_accuracy for r in rs])), float(te.mean()),
                        float(np.sqrt(bayes * (1 - bayes) / n_test))])
    run.csv("summary.csv", ["K_L", "mean_train_acc", "mean_test_acc", "binomial_se"], summary, sh,
            {"bayes_rate": io.fmt(bayes), "K_c_median": io.fmt(float(np.median([r.K_c for r in kc])))})

    if b["J"]:
        rows = []
        for j, J in enumerate(b["J"]):
            sj = spec.with_coupling(float(J))
            reps = learning.classify_pipeline(sj, task, S, list(range(1, K + 1)), permutations=P,
                                              seed=derive_seed(cfg["seed"], "classify-J", j))
            at_kc = [r for r in reps if r.K_L == min(max(r.K_c, 1), K)]
            rows.append([float(J), float(np.median([r.K_c for r in at_kc])),
                         float(np.mean([r.test_accuracy for r in at_kc])),
                         float(np.mean([r.train_accuracy for r in at_kc]))])
        run.csv("j_sweep.csv", ["J", "K_c", "test_acc", "train_acc"], rows, sh)


def cmd_moment_nsr(run: Run):
    cfg = run.cfg
    S = _shots(cfg)
    if S is None:
        raise ConfigError("shots: moment-nsr needs finite shots")
    u = cfg["moment_nsr"]["u"]
    if isinstance(u, bool) or not isinstance(u, (int, float)) or not -1 <= u <= 1:
        raise ConfigError("moment_nsr.u: expected a number in [-1, 1]")
    spec = build_encoding(cfg["encoding"], cfg["seed"])
    ps = spec.with_coupling(0.0)
    R = cfg["repeats"]
    if R < 2:
        raise ConfigError("repeats: moment-nsr needs at least 2")
    seed = derive_seed(cfg["seed"], "moment-nsr")
    cs_t = metrics.moment_nsr(spec, float(u), S, R, seed)
    ps_t = metrics.moment_nsr(ps, float(u), S, R, seed)
    run.derived.update(encoding=spec.to_dict(), spec_hash=spec.spec_hash(),
                       product_spec_hash=ps.spec_hash(), sample_seed=seed)
    sh = spec.spec_hash()
    meta = {"u": io.fmt(float(u)), "S": S, "repeats": R}
    run.csv("moment_nsr.csv", ["m", "nsr_cs", "nsr_ps"],
            [[m, cs_t.median[m], ps_t.median[m]] for m in range(1, spec.L + 1)], sh, meta)
    orders = simcore.moment_orders(spec.K)
    run.csv("moment_nsr_masks.csv", ["mask", "m", "moment_cs", "nsr_cs", "moment_ps", "nsr_ps"],
            [[B, orders[B], cs_t.moments[B], cs_t.per_mask[B], ps_t.moments[B], ps_t.per_mask[B]]
             for B in range(spec.K)], sh, meta)


def cmd_ingest(run: Run):
    b = run.cfg["ingest"]
    if not b["path"]:
        raise ConfigError("ingest: a counts file path is required")
    try:
        F, records = io.ingest_counts(b["path"], K=b["K"])
    except OSError as exc:
        raise ConfigError(f"ingest: cannot read {b['path']}: {exc.strerror}") from None
    run.derived.update(records=len(records), S=F.shots, K=F.K, spec_hash=F.spec_hash)
    run.features("features.csv", F)
    run.counts("counts.jsonl", F)


HANDLERS = {"features": cmd_features, "spectrum": cmd_spectrum, "sweep": cmd_sweep,
            "classify": cmd_classify, "moment-nsr": cmd_moment_nsr, "ingest": cmd_ingest}


# -- entry point ----------------------------------------------------------------


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def _shots_arg(text: str):
    if text.lower() in ("inf", "expected"):
        return "inf"
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'inf', got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("shots must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config or a previous manifest.json")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (created)")
    common.add_argument("--seed", type=_u64, metavar="U64")
    common.add_argument("--shots", type=_shots_arg, metavar="{int|inf}")
    common.add_argument("--repeats", type=int, metavar="INT")
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="eigencap", description="Noise-limited capacity analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("features", parents=[common], help="write a feature matrix")
    sp = sub.add_parser("spectrum", parents=[common], help="NSR spectrum, eigentasks, EC table")
    src = sp.add_mutually_exclusive_group()
    src.add_argument("--features", metavar="CSV", help="analyze an existing features file")
    src.add_argument("--counts", metavar="JSONL", help="analyze an ingested counts file")
    src.add_argument("--two-design", type=int, metavar="K", help="use the analytic 2-design moments")
    sub.add_parser("sweep", parents=[common], help="C_T and ETC over J or L")
    sub.add_parser("classify", parents=[common], help="eigentask logistic readout over K_L")
    sub.add_parser("moment-nsr", parents=[common], help="per-order moment NSR, coupled vs product")
    ing = sub.add_parser("ingest", parents=[common], help="validate a counts file")
    ing.add_argument("path", nargs="?", help="JSON-lines counts file")
    ing.add_argument("--K", type=int, help="number of outcomes (default: inferred)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        doc = load_config_file(args.config) if args.config else {}
        if args.preset:
            doc["preset"] = args.preset
        cmd = args.command
        if cmd == "spectrum":
            blk = dict(doc.get("spectrum") or {})
            if args.features:
                blk.update(source="features", path=args.features)
            elif args.counts:
                blk.update(source="counts", path=args.counts)
            elif args.two_design is not None:
                blk.update(source="two_design", K=args.two_design)
            doc["spectrum"] = blk
        if cmd == "ingest":
            blk = dict(doc.get("ingest") or {})
            if args.path:
                blk["path"] = args.path
            if args.K is not None:
                blk["K"] = args.K
            doc["ingest"] = blk
        cfg = resolve_config(cmd, doc, seed=args.seed, shots=args.shots, repeats=args.repeats)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        run = Run(cmd, cfg, out)
        HANDLERS[cmd](run)
        return run.finish()
    except (ConfigError, io.IngestError) as exc:
        print(f"eigencap: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
