"""Experiment drivers behind the ``range-exp``, ``ldp-exp`` and ``leakage``
commands.

Every random draw comes from a generator seeded by ``(seed, purpose,
indices...)``, so a configuration reruns to byte-identical files no matter
how many other configurations run beside it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .. import estimators as est
from ..core import Dataset, DiscreteDomain, Partition, Prior
from ..leakage import (attack_bound, indistinguishability_radius, leakage_matrix_ope,
                       leakage_matrix_opeps, write_leakage_csv)
from ..opec import build_encoding_model, encode_many
from ..opeps import encrypt_dataset, opeps_keygen
from ..rangeproto import (InProcessTransport, RangeClient, ServerStore, answer_workload,
                          build_workload_partition, client_state_for)
from .config import ConfigError, ExperimentConfig, PartitionSpec, format_epsilon
from .data import equi_depth_partition, ingest_csv, synthetic_dataset, synthetic_prior

SCHEMA_VERSION = 1

# purpose tags mixed into seed sequences
_DATA, _QUERIES, _ENCRYPT, _LDP = 1, 2, 3, 4


def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def _num(v) -> str:
    """Stable text form for CSV cells."""
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        if math.isnan(v):
            return "nan"
        return f"{v:.10g}"
    return str(v)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(r[c]) for c in header])


def _jsonable(obj):
    if isinstance(obj, float) and (math.isinf(obj) or math.isnan(obj)):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def write_report(path, command: str, cfg: ExperimentConfig, results: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "command": command,
           "config": cfg.to_dict(), "results": results}
    Path(path).write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


# -- shared building blocks -----------------------------------------------------

def load_dataset(cfg: ExperimentConfig) -> Dataset:
    domain = DiscreteDomain(*cfg.domain)
    spec = cfg.dataset
    if spec["source"] == "csv":
        data, _ = ingest_csv(spec["path"], spec["column"], domain, float(spec.get("scale", 1.0)))
        return data
    return synthetic_dataset(domain, spec, trial_rng(cfg.seed, _DATA))


def random_queries(domain: DiscreteDomain, count: int, rng: np.random.Generator) -> list:
    """``count`` ranges with endpoints drawn uniformly and sorted."""
    ends = np.sort(rng.integers(domain.lo, domain.hi + 1, size=(count, 2)), axis=1)
    return [(int(a), int(b)) for a, b in ends]


def aligned_queries(p: Partition, count: int, rng: np.random.Generator) -> list:
    """Ranges whose endpoints fall on interval boundaries of ``p``."""
    ij = np.sort(rng.integers(0, p.k, size=(count, 2)), axis=1)
    return [(p.interval(int(i))[0], p.interval(int(j))[1]) for i, j in ij]


def query_list(cfg: ExperimentConfig, domain: DiscreteDomain, trial: int) -> list:
    q = cfg.queries
    if "explicit" in q:
        return [(int(a), int(b)) for a, b in q["explicit"]]
    return random_queries(domain, int(q.get("count", 200)), trial_rng(cfg.seed, _QUERIES, trial))


def build_partition(spec: PartitionSpec, domain: DiscreteDomain, data: Optional[Dataset] = None,
                    queries=None) -> Partition:
    if spec.kind == "identity":
        return Partition.identity(domain)
    if spec.kind == "equi-length":
        return Partition.equi_length(domain, spec.k)
    if spec.kind == "explicit":
        return Partition(domain, tuple(spec.boundaries))
    if spec.kind == "equi-depth":
        if data is None:
            raise ConfigError("equi-depth partitioning needs a dataset")
        return equi_depth_partition(data, spec.k, domain)
    if queries is None:
        raise ConfigError("workload partitioning needs queries")
    return build_workload_partition(queries, domain)


def tendency_prior(p: Partition, data: Dataset) -> Prior:
    """Empirical prior, with uniform weight inside intervals holding no data."""
    w = np.bincount(data.values - p.domain.lo, minlength=p.domain.size).astype(float)
    for i in range(p.k):
        first, last = p.interval(i)
        seg = slice(first - p.domain.lo, last - p.domain.lo + 1)
        if w[seg].sum() == 0:
            w[seg] = 1.0
    return Prior.from_weights(p.domain, w)


# -- range queries ----------------------------------------------------------------

@dataclass
class RangeResult:
    summary: List[dict] = field(default_factory=list)
    per_query: List[dict] = field(default_factory=list)


def _key_seed(seed: int, *keys) -> bytes:
    return ":".join(str(k) for k in (seed, *keys)).encode()


def run_range_experiment(cfg: ExperimentConfig, out_dir=None) -> RangeResult:
    """Sweep partitions x epsilons x neighbours on one dataset.

    Within a trial every epsilon sees the same queries, and every
    neighbour setting reuses the same encrypted dataset, so differences
    between rows reflect the parameter rather than fresh randomness.
    """
    domain = DiscreteDomain(*cfg.domain)
    data = load_dataset(cfg)
    res = RangeResult()
    for pi, pspec in enumerate(cfg.partitions):
        for ei, eps in enumerate(cfg.epsilons):
            per_trial = {l: [] for l in cfg.neighbors}
            for trial in range(cfg.trials):
                queries = query_list(cfg, domain, trial)
                part = build_partition(pspec, domain, data, queries)
                if cfg.queries.get("aligned"):
                    queries = aligned_queries(part, int(cfg.queries.get("count", 200)),
                                              trial_rng(cfg.seed, _QUERIES, trial))
                rng = trial_rng(cfg.seed, _ENCRYPT, pi, ei, trial)
                scheme = opeps_keygen(_key_seed(cfg.seed, pi, ei, trial), part,
                                      tendency_prior(part, data), eps)
                cts = encrypt_dataset(scheme, data.values, rng)
                client = RangeClient(scheme, client_state_for(scheme, cts),
                                     InProcessTransport(ServerStore.from_ciphertexts(cts)))
                for l in cfg.neighbors:
                    metrics = answer_workload(client, queries, data.values, l)
                    per_trial[l].append(metrics)
                    for qi, ((a, b), m) in enumerate(zip(queries, metrics)):
                        res.per_query.append({
                            "partition": pspec.kind, "partition_k": part.k, "epsilon": eps,
                            "l": l, "trial": trial, "query": qi, "a": a, "b": b,
                            "returned": m.returned, "correct": m.correct,
                            "missing": m.missing, "extra": m.extra,
                            "rho_M": m.rho_M, "rho_E": m.rho_E})
            for l in cfg.neighbors:
                rm = np.array([np.mean([m.rho_M for m in ms]) for ms in per_trial[l]])
                re = np.array([np.mean([m.rho_E for m in ms]) for ms in per_trial[l]])
                res.summary.append({
                    "partition": pspec.kind, "partition_k": part.k, "epsilon": eps, "l": l,
                    "rho_M": float(rm.mean()), "rho_E": float(re.mean()),
                    "rho_M_std": float(rm.std()), "rho_E_std": float(re.std()),
                    "trials": cfg.trials, "queries": len(per_trial[l][0])})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "metrics.csv", ["epsilon", "partition", "partition_k", "l", "rho_M",
                                         "rho_E", "rho_M_std", "rho_E_std", "trials", "queries"],
                   res.summary)
        _write_csv(out / "queries.csv", ["epsilon", "partition", "partition_k", "l", "trial",
                                         "query", "a", "b", "returned", "correct", "missing",
                                         "extra", "rho_M", "rho_E"], res.per_query)
        write_report(out / "report.json", "range-exp", cfg, {"metrics": res.summary})
    return res


# -- LDP statistics ---------------------------------------------------------------

def _krr_reports(values, eps, domain, rng):
    if math.isinf(eps):
        return np.asarray(values)
    return est.krr_perturb(values, eps, domain, rng)


def _krr_counts(reports, eps, domain):
    if math.isinf(eps):
        return est.report_histogram(reports, domain)
    return est.krr_estimate(reports, eps, domain)


def run_ldp_experiment(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Frequency, mean and range-count errors of the encoder's reports.

    Frequencies use the identity partition; the sigma profile uses each
    configured partition. Encoders run at eps/2 and the k-RR and Laplace
    baselines get the same eps/2 budget.
    """
    domain = DiscreteDomain(*cfg.domain)
    data = load_dataset(cfg)
    n = len(data)
    true_counts = np.bincount(data.values - domain.lo, minlength=domain.size).astype(float)
    true_mean = float(data.values.mean()) if n else float("nan")
    rows, sigmas = [], []
    for ei, eps in enumerate(cfg.epsilons):
        enc_eps = eps / 2
        acc = {k: [] for k in ("freq_l1", "krr_freq_l1", "mean_abs_err", "laplace_mean_abs_err",
                               "range_abs_err", "krr_range_abs_err")}
        model = build_encoding_model(Partition.identity(domain), None, enc_eps)
        channel = est.build_channel_matrix(model)
        for trial in range(cfg.trials):
            rng = trial_rng(cfg.seed, _LDP, ei, trial)
            reports = encode_many(model, data.values, rng)
            freq = est.estimate_frequencies(reports, channel, "nnls")
            krr = _krr_counts(_krr_reports(data.values, enc_eps, domain, rng), enc_eps, domain)
            acc["freq_l1"].append(float(np.abs(freq.counts - true_counts).sum() / max(n, 1)))
            acc["krr_freq_l1"].append(float(np.abs(krr - true_counts).sum() / max(n, 1)))
            acc["mean_abs_err"].append(abs(est.estimate_mean(freq) - true_mean))
            lap = true_mean if math.isinf(enc_eps) else est.laplace_mean(data.values, enc_eps, domain, rng)
            acc["laplace_mean_abs_err"].append(abs(lap - true_mean))
            qs = query_list(cfg, domain, trial)
            ours, base = [], []
            for a, b in qs:
                truth = true_counts[a - domain.lo:b - domain.lo + 1].sum()
                ours.append(abs(est.estimate_range(freq, a, b) - truth))
                base.append(abs(krr[a - domain.lo:b - domain.lo + 1].sum() - truth))
            acc["range_abs_err"].append(float(np.mean(ours)))
            acc["krr_range_abs_err"].append(float(np.mean(base)))
            for pi, pspec in enumerate(cfg.partitions):
                if pspec.kind == "identity":
                    continue
                part = build_partition(pspec, domain, data, qs)
                pm = build_encoding_model(part, tendency_prior(part, data), enc_eps)
                prof = est.ordinal_accuracy(data.values, encode_many(pm, data.values, rng), part)
                sigmas.append({"epsilon": eps, "partition": pspec.kind, "partition_k": part.k,
                               "trial": trial, "sigma": [float(v) for v in prof]})
        for metric, vals in acc.items():
            rows.append({"epsilon": eps, "metric": metric, "mean": float(np.mean(vals)),
                         "std": float(np.std(vals)), "trials": cfg.trials})
    result = {"metrics": rows, "sigma": sigmas}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "metrics.csv", ["epsilon", "metric", "mean", "std", "trials"], rows)
        srows = [{"epsilon": s["epsilon"], "partition": s["partition"],
                  "partition_k": s["partition_k"], "trial": s["trial"], "d": d, "sigma": v}
                 for s in sigmas for d, v in enumerate(s["sigma"])]
        _write_csv(out / "sigma.csv", ["epsilon", "partition", "partition_k", "trial", "d", "sigma"],
                   srows)
        write_report(out / "report.json", "ldp-exp", cfg, result)
    return result


# -- leakage ------------------------------------------------------------------------

def run_leakage_report(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Leakage matrices, attack bounds and indistinguishability radii.

    ``cfg.leakage`` keys: ``domain`` (defaults to ``cfg.domain``), ``n``,
    ``true_prior`` and ``aux_prior`` (synthetic specs), ``partition``
    (identity / equi-length:K / explicit:...), ``betas`` and ``threshold``.
    Everything here is analytic, so the seed plays no part.
    """
    spec = cfg.leakage
    domain = DiscreteDomain(*spec.get("domain", cfg.domain))
    n = int(spec.get("n", 10))
    true_prior = synthetic_prior(domain, spec.get("true_prior", {"kind": "uniform"}))
    aux_prior = synthetic_prior(domain, spec.get("aux_prior", spec.get("true_prior", {"kind": "uniform"})))
    pspec = PartitionSpec.parse(spec.get("partition", "identity"))
    if pspec.kind in ("equi-depth", "workload"):
        raise ConfigError("leakage reports take identity, equi-length or explicit partitions")
    part = build_partition(pspec, domain)
    betas = [float(b) for b in spec.get("betas", (0.01, 0.05, 0.1))]
    threshold = float(spec.get("threshold", 0.1))

    ope_lm = leakage_matrix_ope(true_prior, aux_prior, n)
    mats = {}
    for eps in cfg.epsilons:
        model = build_encoding_model(part, true_prior, eps / 2)
        mats[eps] = leakage_matrix_opeps(true_prior, aux_prior, model, n)
    bounds = []
    for eps in cfg.epsilons:
        for beta in betas:
            t = int(math.ceil(round(beta * domain.size, 9)))
            q = min(2 * t, domain.size - 1)
            if q < 1:
                continue
            gb = attack_bound(eps / 2, beta, domain.size, q)
            bounds.append({"epsilon": eps, "beta": beta, "q": q,
                           "epsilon_star": gb.epsilon_star, "bound": gb.bound})
    radii = [{"epsilon": eps, "threshold": threshold,
              "radius": indistinguishability_radius(eps, threshold)} for eps in cfg.epsilons]
    result = {
        "n": n, "bits": ope_lm.m, "partition_k": part.k,
        "ope_mean": ope_lm.mean(),
        "opeps_mean": [{"epsilon": e, "mean": lm.mean()} for e, lm in mats.items()],
        "bounds": bounds, "radii": radii,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_leakage_csv(out / "leakage_ope.csv", ope_lm)
        for eps, lm in mats.items():
            write_leakage_csv(out / f"leakage_opeps_eps{format_epsilon(eps)}.csv", lm)
        _write_csv(out / "metrics.csv", ["epsilon", "beta", "q", "epsilon_star", "bound"], bounds)
        write_report(out / "report.json", "leakage", cfg, result)
    result["matrices"] = {"ope": ope_lm, "opeps": mats}
    return result
