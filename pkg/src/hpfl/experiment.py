"""Experiment orchestration: build a federation from a scenario, run it,
audit the per-round descent bound, sweep parameters, and emit CSV/JSON.

Outputs are deterministic given (config, seed): floats are written with
repr so two identical runs produce byte-identical files, and the runtime
column carries the modeled scheduler+allocator work in microsecond-scale
units rather than wall-clock measurements.
"""

import dataclasses
import json
import os
import platform
from dataclasses import dataclass

import numpy as np

from .constants import bound_constants, estimate_constants
from .hierarchy import EngineParams, RoundEngine
from .network import dbm_per_hz_to_w, sample_topology
from .scenario import Scenario
from .tasks import (LogisticModel, MLPModel, QuadraticModel,
                    build_classification_federation,
                    build_quadratic_federation)

__all__ = [
    "ExperimentResult",
    "prepare",
    "run_experiment",
    "rounds_csv_text",
    "write_outputs",
    "audit_bound",
    "run_audit",
    "parse_sweep_values",
    "run_sweep",
]

CSV_HEADER = "round,loss,acc,latency,importance,A_eff,runtime_us,bound_rhs"
AUDIT_HEADER = "round,f_t,f_next,descent,bound,holds"

_TASK_STREAM = 101
_TOPOLOGY_STREAM = 131
_INIT_STREAM = 151


def _fmt(x):
    return repr(float(x))


@dataclass
class Prepared:
    """Everything deterministic that exists before the first round."""

    model: object
    federation: list
    topology: object
    w0: np.ndarray
    constants: object


@dataclass
class ExperimentResult:
    """A finished run plus the constants it was reported against."""

    scenario: Scenario
    records: list
    engine: RoundEngine
    constants: object
    phi: float
    nu: float
    phi_sched: float
    beta: float


def _stream(seed, tag):
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))


def prepare(scenario):
    """Build model, data, topology, initial point, and estimated constants.

    Only the seed and the task/topology fields matter here, so paired
    runs (different mode or selection policy, same seed) share identical
    federations.
    """
    scn = scenario
    task_rng = _stream(scn.seed, _TASK_STREAM)
    if scn.family == "classification":
        if scn.model == "logistic":
            model = LogisticModel(scn.dim, scn.n_classes, l2=scn.l2)
        else:
            model = MLPModel(scn.dim, scn.hidden, scn.n_classes, l2=scn.l2)
        federation = build_classification_federation(
            task_rng, scn.k, scn.n_k_list, scn.labels_per_ue, scn.n_classes,
            scn.dim, scn.n_train, scn.n_eval, scn.separation, scn.noise)
    else:
        model = QuadraticModel(scn.dim)
        federation = build_quadratic_federation(
            task_rng, scn.k, scn.n_k_list, scn.dim, scn.eig_lo, scn.eig_hi,
            es_spread=scn.center_spread, ue_spread=scn.ue_spread)
    topology = sample_topology(
        _stream(scn.seed, _TOPOLOGY_STREAM), scn.k, scn.n_k_list,
        d_ue_range=(scn.d_ue_lo, scn.d_ue_hi),
        d_es_range=(scn.d_es_lo, scn.d_es_hi),
        o_ue_db=scn.o_ue_db, o_es_db=scn.o_es_db)
    w0 = model.init_params(_stream(scn.seed, _INIT_STREAM), scale=scn.init_scale)
    shards = [ue.train for es_shards in federation for ue in es_shards]
    constants = estimate_constants(
        model, shards, scn.alpha, probe_count=scn.probe_count,
        rng_seed=scn.seed, center=w0)
    return Prepared(model=model, federation=federation, topology=topology,
                    w0=w0, constants=constants)


def _make_engine(prep, scn, beta):
    phi, nu = bound_constants(beta, scn.s_max, scn.a_max, scn.k,
                              prep.constants.meta_div_sq)
    phi_sched = phi if scn.phi_override < 0 else scn.phi_override
    params = EngineParams(
        alpha=scn.alpha, beta=beta, rho=scn.rho, s_max=scn.s_max,
        a_max=scn.a_max, phi_sched=phi_sched, phi_report=phi, nu_report=nu,
        selection=scn.selection, allocation=scn.allocation, mode=scn.mode,
        total_b=scn.total_b, b_min=scn.b_min,
        n0=dbm_per_hz_to_w(scn.n0_dbm_hz),
        p_ue=scn.p_ue, p_es=scn.p_es, z_bits=scn.z_bits,
        c_cycles=scn.c_cycles, cpu_hz=scn.cpu_hz, seed=scn.seed)
    engine = RoundEngine(prep.model, prep.federation, prep.topology, params,
                         prep.w0)
    return engine, phi, nu, phi_sched


def run_experiment(scenario, beta=None, forced_plan=None):
    """Run the configured number of rounds and return all records.

    ``beta`` overrides the scenario's step size (the audit pins it to the
    inverse meta-smoothness), ``forced_plan`` fixes each round's selection.
    """
    prep = prepare(scenario)
    if beta is None:
        beta = scenario.beta
    engine, phi, nu, phi_sched = _make_engine(prep, scenario, beta)
    records = engine.run(scenario.rounds, forced_plan=forced_plan)
    return ExperimentResult(scenario=scenario, records=records, engine=engine,
                            constants=prep.constants, phi=phi, nu=nu,
                            phi_sched=phi_sched, beta=beta)


def rounds_csv_text(records):
    """Canonical CSV text for a list of round records."""
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join([
            str(r.round), _fmt(r.loss), _fmt(r.acc), _fmt(r.latency),
            _fmt(r.importance), str(r.a_eff), str(r.runtime_us),
            _fmt(r.bound_rhs),
        ]))
    return "\n".join(lines) + "\n"


def _package_version():
    try:
        from importlib.metadata import version
        return version("hpfl")
    except Exception:
        return "unknown"


def manifest_dict(result, extra=None):
    scn = result.scenario
    out = {
        "config": scn.to_dict(),
        "config_hash": scn.config_hash(),
        "seed": scn.seed,
        "rounds": len(result.records),
        "beta_effective": result.beta,
        "constants": result.constants.to_dict(),
        "phi": result.phi,
        "nu": result.nu,
        "phi_sched": result.phi_sched,
        "versions": {
            "package": _package_version(),
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    if extra:
        out.update(extra)
    return out


def write_outputs(result, out_dir, extra_manifest=None):
    """Write rounds.csv and manifest.json into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "rounds.csv"), "w") as fh:
        fh.write(rounds_csv_text(result.records))
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest_dict(result, extra_manifest), fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    return out_dir


def audit_bound(result):
    """Check the per-round loss-change bound on a finished run.

    For each round t the audit recomputes, with full knowledge the edge
    servers do not have, the true global objective F at w_t and w_{t+1}
    and the true global gradient norm at every delivered stale model
    w_{t - tau_k}.  The inequality checked is

        F(w_{t+1}) - F(w_t) <= phi * sum_selected ||grad F(stale)||^2 + nu

    which is the run's recorded phi/nu pair; the run should have been
    made with beta = 1 / meta_lip for the pair to be a guarantee.
    Returns a list of per-round dicts with descent, bound, and holds.
    """
    engine = result.engine
    model = engine.model
    p = engine.params
    shards = [ue.train for es_shards in engine.federation
              for ue in es_shards]

    def global_loss(w):
        return float(np.mean([engine._loss(model, w, sh, p.alpha)
                              for sh in shards]))

    def global_grad_norm_sq(w):
        g = np.mean([engine._grad(model, w, sh, p.alpha) for sh in shards],
                    axis=0)
        return float(g @ g)

    f_cache = {}
    g_cache = {}

    def f_at(v):
        if v not in f_cache:
            f_cache[v] = global_loss(engine.history[v])
        return f_cache[v]

    def g_at(v):
        if v not in g_cache:
            g_cache[v] = global_grad_norm_sq(engine.history[v])
        return g_cache[v]

    rows = []
    for rec in result.records:
        t = rec.round
        stale_sum = sum(g_at(v) for v in rec.versions)
        descent = f_at(t + 1) - f_at(t)
        bound = result.phi * stale_sum + result.nu
        tol = 1e-9 * max(1.0, abs(bound))
        rows.append({
            "round": t,
            "f_t": f_at(t),
            "f_next": f_at(t + 1),
            "descent": descent,
            "bound": bound,
            "holds": descent <= bound + tol,
        })
    return rows


def run_audit(scenario, out_dir=None):
    """Audit-grade run: step size pinned to 1/meta_lip, bound checked.

    Returns (result, rows, fraction of rounds where the bound holds).
    """
    prep = prepare(scenario)
    beta = 1.0 / prep.constants.meta_lip
    engine, phi, nu, phi_sched = _make_engine(prep, scenario, beta)
    records = engine.run(scenario.rounds)
    result = ExperimentResult(scenario=scenario, records=records,
                              engine=engine, constants=prep.constants,
                              phi=phi, nu=nu, phi_sched=phi_sched, beta=beta)
    rows = audit_bound(result)
    frac = float(np.mean([r["holds"] for r in rows])) if rows else 1.0
    if out_dir is not None:
        write_outputs(result, out_dir,
                      extra_manifest={"audit_holds_fraction": frac})
        with open(os.path.join(out_dir, "audit.csv"), "w") as fh:
            fh.write(AUDIT_HEADER + "\n")
            for r in rows:
                fh.write(",".join([
                    str(r["round"]), _fmt(r["f_t"]), _fmt(r["f_next"]),
                    _fmt(r["descent"]), _fmt(r["bound"]),
                    str(int(r["holds"])),
                ]) + "\n")
    return result, rows, frac


def parse_sweep_values(spec):
    """Parse a sweep value list: 'a:b:step' (inclusive) or 'v1,v2,...'."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError("range form must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("step must be positive")
        n = int(np.floor((stop - start) / step + 0.5)) + 1
        vals = [start + i * step for i in range(max(n, 1))]
        vals = [v for v in vals if v <= stop + 1e-12]
    else:
        vals = [float(p) for p in spec.split(",") if p.strip()]
    if not vals:
        raise ValueError("no sweep values given")
    return tuple(round(v, 10) for v in vals)


def run_sweep(scenario, param, values, out_dir=None):
    """Re-run the scenario for each value of one numeric field.

    Each run lands in its own subdirectory; sweep.csv summarizes final
    loss plus mean latency, captured importance, and selected count.
    """
    if param not in {f.name for f in dataclasses.fields(Scenario)}:
        raise ValueError("unknown sweep parameter %r" % (param,))
    rows = []
    for value in values:
        scn = scenario.replace(**{param: value})
        result = run_experiment(scn)
        recs = result.records
        row = {
            "value": value,
            "final_loss": recs[-1].loss if recs else float("nan"),
            "mean_latency": float(np.mean([r.latency for r in recs]))
            if recs else float("nan"),
            "mean_importance": float(np.mean([r.importance for r in recs]))
            if recs else float("nan"),
            "mean_a_eff": float(np.mean([r.a_eff for r in recs]))
            if recs else float("nan"),
        }
        rows.append((row, result))
        if out_dir is not None:
            sub = os.path.join(out_dir, "%s=%g" % (param, value))
            write_outputs(result, sub)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "sweep.csv"), "w") as fh:
            fh.write("value,final_loss,mean_latency,mean_importance,mean_a_eff\n")
            for row, _ in rows:
                fh.write(",".join([
                    _fmt(row["value"]), _fmt(row["final_loss"]),
                    _fmt(row["mean_latency"]), _fmt(row["mean_importance"]),
                    _fmt(row["mean_a_eff"]),
                ]) + "\n")
    return rows
