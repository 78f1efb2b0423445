"""End-to-end training driver.

run() executes the whole pipeline: build the problem and the k networks,
train with Adam and then L-BFGS on the subspace trace loss, extract
eigenpairs with the generalized symmetric eigensolver, compute error
metrics against the known references, and hand a TrainReport to the report
writer.  Everything is deterministic under a fixed seed.
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import assembly, config, densela, loss, metrics, optim, reference, tnn
from .errors import CheckpointError, ConfigError, TrainingStepError


@dataclass
class TrainReport:
    config: dict
    ritz_values: list[float]
    rows: list[dict]                  # n, state, exact, approx, err_e, err_l2, err_h1
    loss_history: list[tuple[int, float]]
    jitter_events: list[dict]
    lbfgs_status: str | None
    wall_clock: float
    final_loss: float | None
    checkpoint_path: str | None = None
    op_counts: dict = field(default_factory=dict)


def _value_and_grad(template, problem, vec, jitter_log):
    model = tnn.unflatten_params(template, vec)
    ws = assembly.build_workspace(model, problem)
    value, g_a, g_b = loss.trace_loss_with_adjoints(ws.pair, jitter_log)
    grad = assembly.gradient_from_workspace(ws, g_a, g_b)
    return value, grad


def _spd_with_jitter(pair, jitter_log):
    """B with just enough diagonal shift for the Rayleigh-Ritz solve."""
    low, shifted = loss._factor_with_jitter(pair.b, jitter_log)
    return shifted


def _resume_vector(cfg, specs):
    model, header = tnn.load_checkpoint(cfg.resume)
    want = [s.to_dict() for s in specs]
    have = header["specs"]
    if want != have:
        raise CheckpointError(
            f"checkpoint {cfg.resume} was trained on different dimension specs")
    for key in ("k", "p", "depth", "width", "activation"):
        if header[key] != getattr(cfg, key):
            raise CheckpointError(
                f"checkpoint {cfg.resume} disagrees on {key}: "
                f"{header[key]!r} vs {getattr(cfg, key)!r}")
    return tnn.flatten_params(model)


def run(cfg: config.RunConfig, progress=None) -> TrainReport:
    """Execute the full pipeline for one configuration."""
    cfg.validate()
    start = time.perf_counter()
    specs, problem = config.build_problem(cfg)
    template = tnn.init_model(specs, cfg.k, cfg.p, cfg.depth, cfg.width,
                              cfg.activation, seed=cfg.seed,
                              beta_init=cfg.beta_init)
    vec = tnn.flatten_params(template)
    if cfg.resume:
        vec = _resume_vector(cfg, specs)
    jitter_raw: list[loss.JitterEvent] = []
    history: list[tuple[int, float]] = []
    out_dir = cfg.out
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "checkpoint.ckpt")

    def save_ckpt(v):
        model = tnn.unflatten_params(template, v)
        tnn.save_checkpoint(model, ckpt_path, seed=cfg.seed,
                            meta={"preset": cfg.preset})

    adam = optim.AdamState(lr=cfg.adam_lr)
    try:
        for step in range(cfg.adam_steps):
            value, grad = _value_and_grad(template, problem, vec, jitter_raw)
            if step % cfg.log_interval == 0:
                history.append((step, value))
            vec = optim.adam_step(adam, vec, grad)
            if cfg.checkpoint_interval and (step + 1) % cfg.checkpoint_interval == 0:
                save_ckpt(vec)
            if progress is not None and step % 500 == 0:
                progress(step, value)
    except TrainingStepError:
        save_ckpt(vec)
        raise

    lbfgs_status = None
    if cfg.lbfgs_steps > 0:
        def objective(x):
            try:
                return _value_and_grad(template, problem, x, jitter_raw)
            except TrainingStepError:
                return np.inf, np.zeros_like(x)

        result = optim.lbfgs_minimize(objective, vec, cfg.lbfgs_steps)
        vec = result.x
        lbfgs_status = result.status
        base = cfg.adam_steps
        history.extend((base + it, f) for it, f in result.history)

    model = tnn.unflatten_params(template, vec)
    ws = assembly.build_workspace(model, problem)
    final_loss = loss.trace_loss(ws.pair, jitter_raw)
    history.append((cfg.adam_steps + cfg.lbfgs_steps, final_loss))
    b_solve = _spd_with_jitter(ws.pair, jitter_raw)
    ritz, y_cols = densela.sym_generalized_eig(ws.pair.a, b_solve)
    rows = _error_rows(cfg, model, ritz, y_cols, problem)
    save_ckpt(vec)
    report = TrainReport(
        config=cfg.to_dict(),
        ritz_values=[float(v) for v in ritz],
        rows=rows,
        loss_history=[(int(s), float(v)) for s, v in history],
        jitter_events=[{"delta": e.delta, "added": e.added} for e in jitter_raw],
        lbfgs_status=lbfgs_status,
        wall_clock=time.perf_counter() - start,
        final_loss=float(final_loss),
        checkpoint_path=ckpt_path,
        op_counts=dict(ws.op_counts),
    )
    return report


def _error_rows(cfg, model, ritz, y_cols, problem):
    """Pair Ritz values with references and compute available error columns."""
    k = len(ritz)
    rows = [{"n": t, "state": "", "exact": None, "approx": float(ritz[t]),
             "err_e": None, "err_l2": None, "err_h1": None} for t in range(k)]
    matrix = config.oscillator_matrix(cfg.preset)
    if matrix is not None:
        ref = reference.oscillator_states(matrix, k)
        exact = ref.energies
        errs = metrics.eigenvalue_errors(ritz, exact)
        for t in range(k):
            rows[t]["state"] = str(ref.states[t].index)
            rows[t]["exact"] = float(exact[t])
            rows[t]["err_e"] = float(errs[t])
        if matrix.shape[0] == 2:
            proj = _oscillator_projection_errors(cfg, model, ref, y_cols)
            for t, (el2, eh1) in enumerate(proj):
                rows[t]["err_l2"] = float(el2)
                rows[t]["err_h1"] = float(eh1)
    elif cfg.preset == "hydrogen":
        states = reference.hydrogen_states(k)
        exact = np.array([e for e, _ in states])
        errs = metrics.eigenvalue_errors(ritz, exact)
        for t in range(k):
            rows[t]["state"] = states[t][1]
            rows[t]["exact"] = float(exact[t])
            rows[t]["err_e"] = float(errs[t])
    elif cfg.preset == "box-laplace":
        pairs = reference.box_laplace_energies([1.0, 1.0], k)
        exact = np.array([e for e, _ in pairs])
        errs = metrics.eigenvalue_errors(ritz, exact)
        for t in range(k):
            rows[t]["state"] = str(pairs[t][1])
            rows[t]["exact"] = float(exact[t])
            rows[t]["err_e"] = float(errs[t])
        proj = _box_projection_errors(model, pairs, y_cols)
        for t, (el2, eh1) in enumerate(proj):
            rows[t]["err_l2"] = float(el2)
            rows[t]["err_h1"] = float(eh1)
    return rows


def _degenerate_groups(energies, tol=1e-9):
    groups, cur = [], [0]
    for i in range(1, len(energies)):
        if energies[i] - energies[cur[-1]] <= tol * max(1.0, abs(energies[i])):
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    groups.append(cur)
    return groups


def _oscillator_projection_errors(cfg, model, ref, y_cols):
    rules = metrics.metric_rules(model.specs)
    groups = ref.degenerate_groups()
    factors = [st.factors for st in ref.states]
    rotation = None if np.allclose(ref.rotation, np.eye(model.d)) else ref.rotation
    return metrics.model_projection_errors(model, y_cols, groups, factors,
                                           rules, rotation=rotation)


def _box_projection_errors(model, pairs, y_cols):
    rules = metrics.metric_rules(model.specs)
    energies = [e for e, _ in pairs]
    groups = _degenerate_groups(energies)

    def sin_factor(n):
        def value(x):
            return np.sin(n * np.pi * x)

        def deriv(x):
            return n * np.pi * np.cos(n * np.pi * x)

        return value, deriv

    factors = [[sin_factor(n) for n in idx] for _, idx in pairs]
    return metrics.model_projection_errors(model, y_cols, groups, factors, rules)
