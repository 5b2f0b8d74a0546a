"""Experiment pipelines. Each runner trains its networks, writes CSV artifacts
under ``cfg.out_dir`` and returns an :class:`ExperimentReport` with gates.

Gates over several seeds use the median of the per-seed statistic unless
noted otherwise; per-seed values are kept in the report.
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .. import bayes
from ..geometry import (MetricField, gaussian_curvature, metric_trace,
                        network_curvature, participation_ratio, pullback_metric, top_fraction_mask)
from ..lindyn import analytic_correlations, balanced_linear_init, predict_metric_trajectory, u_closed_form
from ..manifolds import (AngleGrid, TWO_PI, embed_highdim, embed_torus, embedding_jacobian,
                         wrap_angle, write_grid_csv)
from ..network import (Mlp, TrainingDivergedError, accuracy, forward, gram_matrix, init, layer_sigmas,
                       push_tangents, train, training_inputs)
from ..numerics import make_rng, random_orthonormal_columns
from ..tasks import TaskSpec, label
from .config import ExperimentConfig
from .report import ExperimentReport, write_table

# rng stream keys beyond those used by the network module (0: init, 1: training noise)
STREAM_EMBED = 2
STREAM_TEST_NOISE = 3
STREAM_MC = 4


# ---------------------------------------------------------------- helpers

class _Out:
    """Writes artifacts below one directory and remembers their relative paths."""

    def __init__(self, root, report: ExperimentReport):
        self.root = Path(root)
        self.report = report
        self.root.mkdir(parents=True, exist_ok=True)

    def _track(self, rel: str) -> Path:
        self.report.artifacts.append(rel)
        return self.root / rel

    def grid(self, rel: str, grid: AngleGrid, columns: dict) -> None:
        write_grid_csv(self._track(rel), grid, columns)

    def table(self, rel: str, header, rows) -> None:
        write_table(self._track(rel), header, rows)

    def matrix(self, rel: str, m, prefix: str = "c") -> None:
        m = np.atleast_2d(m)
        self.table(rel, [f"{prefix}{j + 1}" for j in range(m.shape[1])], m.tolist())


def _seed_dir(seed: int) -> str:
    return f"seed_{seed:03d}"


def _make_net(cfg: ExperimentConfig, arch, scale: float, seed: int, sigma_arch=None) -> Mlp:
    sigma_arch = arch if sigma_arch is None else sigma_arch
    return init(arch, layer_sigmas(sigma_arch, scale), seed, cfg.hidden_activation)


def _train_cfg(cfg: ExperimentConfig, seed: int, **changes):
    return dataclasses.replace(cfg.train, seed=seed, **changes)


def _eval_grid(cfg: ExperimentConfig, domain: str = "torus") -> AngleGrid:
    if domain == "torus":
        return AngleGrid.torus(cfg.grid_resolution)
    return AngleGrid.plane(cfg.grid_resolution, cfg.train.box)


def _grid_accuracy(net: Mlp, spec: TaskSpec, grid: AngleGrid, q=None) -> float:
    x, y = training_inputs(spec, grid, q)
    return accuracy(net, x, y)


def circular_distance(a, b):
    d = wrap_angle(np.asarray(a) - b)
    return np.minimum(d, TWO_PI - d)


def boundary_band(points, alpha: float, halfwidth: float):
    """Points within ``halfwidth`` of a class boundary in either angle."""
    band = np.zeros(len(points), dtype=bool)
    for i in range(2):
        for b in (alpha, alpha + math.pi):
            band |= circular_distance(points[:, i], b) < halfwidth
    return band


def centre_region(points, alpha: float, radius: float):
    """Points within ``radius`` of a class centre in both angles."""
    near = np.ones(len(points), dtype=bool)
    for i in range(2):
        d = np.minimum(circular_distance(points[:, i], alpha + 0.5 * math.pi),
                       circular_distance(points[:, i], alpha + 1.5 * math.pi))
        near &= d < radius
    return near


def slice_points(theta2: float, resolution: int):
    th = (np.arange(resolution) + 0.5) * TWO_PI / resolution
    return np.stack([th, np.full_like(th, theta2)], axis=1)


def slice_trace(net: Mlp, layer: int, theta2: float, resolution: int):
    """Metric trace of ``layer`` along the theta1 circle at fixed theta2."""
    pts = slice_points(theta2, resolution)
    _, t = push_tangents(net, embed_torus(pts), embedding_jacobian(pts), layer)
    return pts[:, 0], np.einsum("nik,nik->n", t, t)


def circular_sign_changes(values) -> int:
    """Sign changes of the centred derivative of a periodic sequence (zeros skipped)."""
    v = np.asarray(values, dtype=float)
    s = np.sign(np.roll(v, -1) - np.roll(v, 1))
    s = s[s != 0]
    if s.size == 0:
        return 0
    return int(np.sum(s != np.roll(s, 1)))


def pair_alignment(w, alpha: float) -> list:
    """Norm-weighted |cos| between each hidden unit's (cos, sin) weight pair and
    the boundary-normal direction ``(-sin alpha, cos alpha)``, one value per angle."""
    d = np.array([-math.sin(alpha), math.cos(alpha)])
    out = []
    for i in range(w.shape[1] // 2):
        pair = w[:, 2 * i:2 * i + 2]
        norms = np.linalg.norm(pair, axis=1)
        if norms.sum() == 0:
            out.append(float("nan"))
            continue
        cos = np.abs(pair @ d) / np.where(norms > 0, norms, 1.0)
        out.append(float(np.sum(norms * cos) / norms.sum()))
    return out


def irrelevant_ratio(w, alpha: float) -> float:
    """Mean |weight| on the along-boundary input direction over the across-boundary one.

    For ``alpha = 0`` these are the cosine and sine columns.
    """
    rel = np.array([-math.sin(alpha), math.cos(alpha)])
    irr = np.array([math.cos(alpha), math.sin(alpha)])
    a_rel, a_irr = [], []
    for i in range(w.shape[1] // 2):
        pair = w[:, 2 * i:2 * i + 2]
        a_rel.append(np.abs(pair @ rel))
        a_irr.append(np.abs(pair @ irr))
    return float(np.mean(a_irr) / np.mean(a_rel))


def _median(report: ExperimentReport, key: str) -> float:
    v = report.values(key)
    return float(np.median(v)) if v.size else float("nan")


def _mean(report: ExperimentReport, key: str) -> float:
    v = report.values(key)
    return float(np.mean(v)) if v.size else float("nan")


# ---------------------------------------------------------------- fig1

def run_fig1(cfg: ExperimentConfig) -> ExperimentReport:
    """Torus XOR geometry, AND/OR references on torus and plane, rotated boundary."""
    rep = ExperimentReport.for_config(cfg)
    out = _Out(cfg.out_dir, rep)
    o = cfg.options
    alpha = cfg.task.alpha
    spec = TaskSpec("XOR", alpha, "torus")
    grid = _eval_grid(cfg)
    band = boundary_band(grid.points, alpha, o["band_halfwidth"])
    near = centre_region(grid.points, alpha, o["center_radius"])
    n_layers = len(cfg.arch) - 1
    for seed in cfg.seeds:
        sd = _seed_dir(seed)
        try:
            net, _ = train(_make_net(cfg, cfg.arch, cfg.init_scale, seed), spec, _train_cfg(cfg, seed))
            w1 = net.layers[0].weights
            out.matrix(f"{sd}/xor_input_weights.csv", w1, "x")
            fields = {}
            for layer in range(1, n_layers + 1):
                m = pullback_metric(net, layer, grid)
                fields[layer] = m
                out.grid(f"{sd}/xor_metric_l{layer}.csv", grid, {**m.columns(), "trace": metric_trace(m)})
            k = network_curvature(net, int(o["curvature_layer"]), grid, det_floor=cfg.det_floor)
            out.grid(f"{sd}/xor_curvature_l{int(o['curvature_layer'])}.csv", grid, k.columns())
            trace = metric_trace(fields[int(o["trace_layer"])])
            top = top_fraction_mask(k, o["top_fraction"])
            metrics = {
                "accuracy": _grid_accuracy(net, spec, grid),
                "cos_sin_ratio": irrelevant_ratio(w1, alpha),
                "trace_ratio": float(trace[band].mean() / trace[~band].mean()),
                "center_fraction": float(near[top].mean()),
            }
            for gate in ("AND", "OR"):
                for domain in ("torus", "plane"):
                    s2 = TaskSpec(gate, alpha, domain)
                    n2, _ = train(_make_net(cfg, _arch_for(cfg.arch, domain), cfg.init_scale, seed), s2,
                                  _train_cfg(cfg, seed))
                    g2 = _eval_grid(cfg, domain)
                    m = pullback_metric(n2, 1, g2)
                    tag = f"{gate.lower()}_{domain}"
                    out.grid(f"{sd}/{tag}_metric_l1.csv", g2, {**m.columns(), "trace": metric_trace(m)})
                    metrics[f"{tag}_accuracy"] = _grid_accuracy(n2, s2, g2)
            rot = float(o["rotated_alpha"])
            nr, _ = train(_make_net(cfg, cfg.arch, cfg.init_scale, seed), TaskSpec("XOR", rot, "torus"),
                          _train_cfg(cfg, seed))
            out.matrix(f"{sd}/xor_rotated_input_weights.csv", nr.layers[0].weights, "x")
            align = pair_alignment(nr.layers[0].weights, rot)
            metrics["rotated_accuracy"] = _grid_accuracy(nr, TaskSpec("XOR", rot, "torus"), grid)
            metrics["alignment"] = min(align)
        except TrainingDivergedError as e:
            rep.add_failure(seed, e)
            continue
        rep.add_seed(seed, metrics)
    t = cfg.thresholds
    rep.gate("accuracy", _median(rep, "accuracy"), ">=", t["accuracy_min"])
    rep.gate("cos_sin_ratio", _median(rep, "cos_sin_ratio"), "<=", t["cos_sin_ratio_max"])
    rep.gate("trace_ratio", _median(rep, "trace_ratio"), ">=", t["trace_ratio_min"])
    rep.gate("center_fraction", _median(rep, "center_fraction"), ">=", t["center_fraction_min"])
    rep.gate("alignment", _median(rep, "alignment"), ">=", t["alignment_min"])
    rep.write(cfg.out_dir)
    return rep


def _arch_for(arch, domain: str) -> tuple:
    """Same hidden widths with the input width of the given domain's embedding."""
    n_in = 4 if domain == "torus" else 2
    return (n_in,) + tuple(arch[1:])


# ---------------------------------------------------------------- depth

def run_depth_comparison(cfg: ExperimentConfig) -> ExperimentReport:
    """One- vs two-hidden-layer XOR: accuracy, trace pattern, boundary oscillation."""
    rep = ExperimentReport.for_config(cfg)
    out = _Out(cfg.out_dir, rep)
    o = cfg.options
    spec = TaskSpec("XOR", cfg.task.alpha, "torus")
    grid = _eval_grid(cfg)
    shallow_arch = (cfg.arch[0], int(o["shallow_width"]), 1)
    theta2, res = float(o["slice_theta2"]), int(o["slice_resolution"])
    for seed in cfg.seeds:
        sd = _seed_dir(seed)
        try:
            deep, _ = train(_make_net(cfg, cfg.arch, cfg.init_scale, seed), spec, _train_cfg(cfg, seed))
            shallow, _ = train(_make_net(cfg, shallow_arch, cfg.init_scale, seed), spec, _train_cfg(cfg, seed))
            refs = []
            for gate in ("AND", "OR"):
                n2, _ = train(_make_net(cfg, cfg.arch, cfg.init_scale, seed), TaskSpec(gate, cfg.task.alpha),
                              _train_cfg(cfg, seed))
                tr = metric_trace(pullback_metric(n2, 1, grid))
                refs.append(tr / tr.mean())
        except TrainingDivergedError as e:
            rep.add_failure(seed, e)
            continue
        cols = {}
        for tag, net in (("deep", deep), ("shallow", shallow)):
            for layer in range(1, len(net.layers) + 1):
                m = pullback_metric(net, layer, grid)
                cols[f"{tag}_l{layer}"] = metric_trace(m)
                out.grid(f"{sd}/{tag}_metric_l{layer}.csv", grid, m.columns())
        reference = refs[0] + refs[1]
        cols["and_or_reference"] = reference
        out.grid(f"{sd}/metric_traces.csv", grid, cols)
        th, tr_s = slice_trace(shallow, 1, theta2, res)
        _, tr_d = slice_trace(deep, 1, theta2, res)
        out.table(f"{sd}/slice_traces.csv", ["theta1", "shallow_l1", "deep_l1"], zip(th, tr_s, tr_d))
        rep.add_seed(seed, {
            "deep_accuracy": _grid_accuracy(deep, spec, grid),
            "shallow_accuracy": _grid_accuracy(shallow, spec, grid),
            "trace_corr": float(np.corrcoef(cols["deep_l1"], reference)[0, 1]),
            "shallow_sign_changes": circular_sign_changes(tr_s),
            "deep_sign_changes": circular_sign_changes(tr_d),
        })
    t = cfg.thresholds
    rep.gate("deep_accuracy", _median(rep, "deep_accuracy"), ">=", t["accuracy_min"])
    rep.gate("shallow_accuracy", _median(rep, "shallow_accuracy"), ">=", t["accuracy_min"])
    rep.gate("trace_corr", _median(rep, "trace_corr"), ">=", t["trace_corr_min"])
    excess = _median(rep, "shallow_sign_changes") - _median(rep, "deep_sign_changes")
    rep.gate("sign_change_excess", excess, ">", t["sign_change_excess_min"])
    rep.write(cfg.out_dir)
    return rep


# ---------------------------------------------------------------- rich / lazy

def run_richlazy(cfg: ExperimentConfig) -> ExperimentReport:
    """Small (rich) vs large (lazy) initial weights on XOR with a held-out square."""
    rep = ExperimentReport.for_config(cfg)
    out = _Out(cfg.out_dir, rep)
    if len(cfg.init_scales) != 2:
        raise ValueError("richlazy needs init_scales = rich, lazy")
    if min(cfg.arch[1:-1]) < 32:
        raise ValueError("rich/lazy comparison needs hidden width >= 32")
    spec = TaskSpec("XOR", cfg.task.alpha, "torus")
    grid = _eval_grid(cfg)
    x_grid = embed_torus(grid.points)
    tcfg = dataclasses.replace(cfg.train, keep_weights=True)
    curves = {"rich": [], "lazy": []}
    epochs = None
    for seed in cfg.seeds:
        sd = _seed_dir(seed)
        metrics = {}
        try:
            for regime, scale in zip(("rich", "lazy"), cfg.init_scales):
                net0 = _make_net(cfg, cfg.arch, scale, seed)
                net, rec = train(net0, spec, dataclasses.replace(tcfg, seed=seed))
                pr_curve = [participation_ratio(forward(net0.with_params(s.weights, s.biases), x_grid)[1][1])
                            for s in rec.snapshots]
                epochs = [s.epoch for s in rec.snapshots]
                k = network_curvature(net, 1, grid, det_floor=cfg.det_floor)
                top = top_fraction_mask(k, cfg.options["top_fraction"])
                out.matrix(f"{sd}/{regime}_gram.csv", gram_matrix(net), "x")
                out.grid(f"{sd}/{regime}_curvature_l1.csv", grid, k.columns())
                out.grid(f"{sd}/{regime}_output.csv", grid, {"output": forward(net, x_grid)[0]})
                metrics[f"{regime}_train_accuracy"] = rec.final.train_accuracy
                metrics[f"{regime}_holdout_accuracy"] = rec.final.holdout_accuracy
                metrics[f"{regime}_pr"] = pr_curve[-1]
                metrics[f"{regime}_top_curvature"] = float(np.mean(np.abs(k.K[top])))
                curves[regime].append(pr_curve)
        except TrainingDivergedError as e:
            rep.add_failure(seed, e)
            continue
        rep.add_seed(seed, metrics)
    if rep.per_seed:
        r, l = np.array(curves["rich"]), np.array(curves["lazy"])
        out.table("participation_ratio.csv", ["epoch", "rich_mean", "rich_std", "lazy_mean", "lazy_std"],
                  zip(epochs, r.mean(0), r.std(0), l.mean(0), l.std(0)))
        out.table("top_curvature.csv", ["regime", "mean", "std"],
                  [(g, rep.values(f"{g}_top_curvature").mean(), rep.values(f"{g}_top_curvature").std())
                   for g in ("rich", "lazy")])
    t = cfg.thresholds
    rich_ho, lazy_ho = _mean(rep, "rich_holdout_accuracy"), _mean(rep, "lazy_holdout_accuracy")
    violations = float(np.sum(rep.values("rich_pr") >= rep.values("lazy_pr"))) if rep.per_seed else float("nan")
    rep.summary.update({"rich_holdout_mean": rich_ho, "lazy_holdout_mean": lazy_ho})
    rep.gate("rich_holdout", rich_ho, ">=", t["rich_holdout_min"])
    rep.gate("holdout_gap", rich_ho - lazy_ho, ">=", t["holdout_gap_min"])
    rep.gate("pr_order_violations", violations, "<=", t["pr_order_violations_max"])
    rep.gate("top_curvature_ratio", _mean(rep, "rich_top_curvature") / _mean(rep, "lazy_top_curvature"),
             ">", t["top_curvature_ratio_min"])
    rep.write(cfg.out_dir)
    return rep


# ---------------------------------------------------------------- robustness

def run_robustness(cfg: ExperimentConfig) -> ExperimentReport:
    """Accuracy under state-space and task-variable noise for rich and lazy nets
    trained on an orthogonal embedding of the torus into D dimensions.

    Initial weight scales follow the intrinsic input width ``cfg.arch[0]``:
    the embedding is an isometry, so pre-activation statistics then match
    across D and only the response to off-manifold noise differs.
    """
    rep = ExperimentReport.for_config(cfg)
    out = _Out(cfg.out_dir, rep)
    if len(cfg.init_scales) != 2:
        raise ValueError("robustness needs init_scales = rich, lazy")
    if not cfg.embed_dims:
        raise ValueError("robustness needs a nonempty embed_dims list")
    spec = TaskSpec("XOR", cfg.task.alpha, "torus")
    grid = _eval_grid(cfg)
    y = label(spec, grid.points)
    x0 = embed_torus(grid.points)
    variances = tuple(cfg.noise_variances)
    repeats = int(cfg.options["noise_repeats"])
    regimes = ("rich", "lazy")
    # acc[kind][D][regime] -> list over seeds of per-variance accuracies
    acc = {k: {d: {r: [] for r in regimes} for d in cfg.embed_dims} for k in ("embedding", "task")}
    for seed in cfg.seeds:
        metrics = {}
        curves = []
        try:
            for d in cfg.embed_dims:
                q = random_orthonormal_columns(make_rng(seed, STREAM_EMBED, d), d, cfg.arch[0])
                arch = (d,) + cfg.arch[1:]
                emb_by_regime = {}
                for regime, scale in zip(regimes, cfg.init_scales):
                    net, _ = train(_make_net(cfg, arch, scale, seed, sigma_arch=cfg.arch), spec,
                                   _train_cfg(cfg, seed), q=q)
                    emb, task = _noise_curves(net, q, grid.points, y, variances, repeats,
                                              make_rng(seed, STREAM_TEST_NOISE, d))
                    curves += [("embedding", d, regime, emb), ("task", d, regime, task)]
                    emb_by_regime[regime] = emb
                    metrics[f"{regime}_clean_D{d}"] = accuracy(net, embed_highdim(x0, q), y)
                noisy = [i for i, v in enumerate(variances) if v > 0]
                gap = emb_by_regime["rich"] - emb_by_regime["lazy"]
                metrics[f"gap_D{d}"] = float(gap[noisy].mean()) if noisy else 0.0
        except TrainingDivergedError as e:
            rep.add_failure(seed, e)
            continue
        for kind, d, regime, values in curves:
            acc[kind][d][regime].append(values)
        rep.add_seed(seed, metrics)
    rows = []
    task_diff = 0.0
    for kind in ("embedding", "task"):
        for d in cfg.embed_dims:
            means = {}
            for regime in regimes:
                a = np.array(acc[kind][d][regime])
                if a.size == 0:
                    continue
                means[regime] = a.mean(0)
                rows += [(kind, d, regime, v, m, s) for v, m, s in zip(variances, a.mean(0), a.std(0))]
            if kind == "task" and len(means) == 2:
                task_diff = max(task_diff, float(np.max(np.abs(means["rich"] - means["lazy"]))))
    out.table("accuracy_vs_noise.csv", ["noise", "dim", "regime", "variance", "mean", "std"], rows)
    d_lo, d_hi = min(cfg.embed_dims), max(cfg.embed_dims)
    gaps = {d: _mean(rep, f"gap_D{d}") for d in cfg.embed_dims}
    rep.summary.update({"gap_by_dim": {str(d): g for d, g in gaps.items()}, "task_noise_max_diff": task_diff})
    t = cfg.thresholds
    rep.gate("gap_growth", gaps[d_hi] - gaps[d_lo], ">", t["gap_growth_min"])
    rep.gate("task_noise_diff", task_diff if rep.per_seed else float("nan"), "<=", t["task_noise_diff_max"])
    rep.write(cfg.out_dir)
    return rep


# ---------------------------------------------------------------- noise sweep

def _noise_curves(net: Mlp, q, points, y, variances, repeats: int, rng):
    """Accuracy vs noise variance for isotropic noise on ``Qx`` and for angle noise."""
    d = q.shape[0]
    x0 = embed_highdim(embed_torus(points), q)
    emb, task = [], []
    for v in variances:
        a_e, a_t = [], []
        for _ in range(repeats):
            a_e.append(accuracy(net, x0 + math.sqrt(v) * rng.standard_normal((len(points), d)), y))
            noisy = wrap_angle(points + math.sqrt(v) * rng.standard_normal(points.shape))
            a_t.append(accuracy(net, embed_highdim(embed_torus(noisy), q), y))
        emb.append(np.mean(a_e))
        task.append(np.mean(a_t))
    return np.array(emb), np.array(task)


def run_noise_sweep(cfg: ExperimentConfig) -> ExperimentReport:
    """XOR nets trained with wrapped-normal angle noise: curvature, metric slices, posterior."""
    rep = ExperimentReport.for_config(cfg)
    out = _Out(cfg.out_dir, rep)
    if not cfg.noise_sigmas:
        raise ValueError("noise sweep needs a nonempty noise_sigmas list")
    o = cfg.options
    spec = TaskSpec("XOR", cfg.task.alpha, "torus")
    grid = _eval_grid(cfg)
    x_grid = embed_torus(grid.points)
    post_sigma = float(o["posterior_sigma"])
    sigmas = list(cfg.noise_sigmas) + ([post_sigma] if post_sigma not in cfg.noise_sigmas else [])
    theta2, res, k_max = float(o["slice_theta2"]), int(o["slice_resolution"]), int(o["k_max"])
    layer = int(o["curvature_layer"])
    for seed in cfg.seeds:
        sd = _seed_dir(seed)
        metrics = {}
        slices = {}
        try:
            for s in sigmas:
                net, _ = train(_make_net(cfg, cfg.arch, cfg.init_scale, seed), spec,
                               _train_cfg(cfg, seed, noise_sigma=s))
                tag = f"sigma_{s:g}"
                k = network_curvature(net, layer, grid, det_floor=cfg.det_floor)
                out.grid(f"{sd}/{tag}_output.csv", grid, {"output": forward(net, x_grid)[0]})
                out.grid(f"{sd}/{tag}_curvature_l{layer}.csv", grid, k.columns())
                th, tr_out = slice_trace(net, -1, theta2, res)
                _, tr_hid = slice_trace(net, layer, theta2, res)
                slices[f"{tag}_output"] = tr_out
                slices[f"{tag}_hidden"] = tr_hid
                metrics[f"mean_K_{tag}"] = float(np.mean(k.K[k.valid]))
                metrics[f"peak_{tag}"] = float(tr_out.max())
                if s > 0:
                    c, net_out, flipped = bayes.network_posterior_slice(net, theta2, res, spec.alpha)
                    p = bayes.posterior(c, s, k_max)
                    target = 1.0 - p if flipped else p
                    _, mc, _ = bayes.monte_carlo_on_grid(res, s, 10 ** 6, make_rng(seed, STREAM_MC))
                    mc = 1.0 - mc if flipped else mc
                    out.table(f"{sd}/{tag}_posterior.csv",
                              ["c", "posterior_analytic", "posterior_mc", "network_output"],
                              zip(c, target, mc, net_out))
                    metrics[f"slice_mse_{tag}"] = float(np.mean((net_out - target) ** 2))
        except TrainingDivergedError as e:
            rep.add_failure(seed, e)
            continue
        out.table(f"{sd}/metric_slices.csv", ["theta1", *slices], zip(th, *slices.values()))
        rep.add_seed(seed, metrics)
    sweep = list(cfg.noise_sigmas)
    mean_k = [_mean(rep, f"mean_K_sigma_{s:g}") for s in sweep]
    peaks = [_mean(rep, f"peak_sigma_{s:g}") for s in sweep]
    out.table("mean_curvature_vs_sigma.csv", ["sigma", "mean_K", "std_K", "peak_trace"],
              [(s, m, float(np.std(rep.values(f"mean_K_sigma_{s:g}"))) if rep.per_seed else float("nan"), p)
               for s, m, p in zip(sweep, mean_k, peaks)])
    rho = float(spearmanr(sweep, mean_k)[0]) if rep.per_seed and len(sweep) > 1 else float("nan")
    increases = float(np.sum(np.diff(peaks) >= 0)) if rep.per_seed else float("nan")
    rep.summary.update({"sigmas": sweep, "mean_K": mean_k, "peak_trace": peaks, "spearman": rho})
    t = cfg.thresholds
    rep.gate("spearman_sigma_meanK", rho, "<=", t["spearman_max"])
    rep.gate("peak_increases", increases, "<=", t["peak_increases_max"])
    rep.gate("slice_mse", _mean(rep, f"slice_mse_sigma_{post_sigma:g}"), "<=", t["slice_mse_max"])
    rep.write(cfg.out_dir)
    return rep


# ---------------------------------------------------------------- linear dynamics

def run_lindyn(cfg: ExperimentConfig) -> ExperimentReport:
    """Linear AND net from a balanced start vs the closed-form mode trajectory; tanh repeat."""
    rep = ExperimentReport.for_config(cfg)
    out = _Out(cfg.out_dir, rep)
    o = cfg.options
    if len(cfg.arch) != 3:
        raise ValueError("lindyn needs a single hidden layer")
    md = analytic_correlations(cfg.task)
    v1 = md.v1
    lr = cfg.train.learning_rate
    skip = int(o["skip_epochs"])
    grid = _eval_grid(cfg)
    proj = np.eye(cfg.arch[0]) - np.outer(v1, v1)
    for seed in cfg.seeds:
        sd = _seed_dir(seed)
        metrics = {}
        traj = {}
        try:
            for act in ("identity", "tanh"):
                net0 = balanced_linear_init(cfg.arch[1], v1, float(o["u0"]), cfg.init_scale, seed, act)
                net, rec = train(net0, cfg.task, _train_cfg(cfg, seed), mode=v1)
                e, u = rec.column("epoch"), rec.column("u")
                theory = u_closed_form(e, md.S, 1.0 / lr, u[0])
                dev = np.abs(u - theory) / theory
                keep = e > skip
                tag = "linear" if act == "identity" else "tanh"
                if act == "tanh":
                    keep &= u <= float(o["tanh_phase_fraction"]) * md.S
                metrics[f"{tag}_deviation"] = float(dev[keep].max()) if keep.any() else float("nan")
                metrics[f"{tag}_final_u"] = float(u[-1])
                traj[tag] = (e, u, theory)
                if act == "identity":
                    w0, w1 = net0.layers[0].weights, net.layers[0].weights
                    metrics["perp_change"] = float(np.linalg.norm(w1 @ proj - w0 @ proj))
                    metrics["cos_column_change"] = float(np.max(np.abs(w1[:, [0, 2]] - w0[:, [0, 2]])))
                    perp = net0.with_params([w0 @ proj, net0.layers[1].weights],
                                            [l.biases for l in net0.layers])
                    a = float(np.linalg.norm(w1 @ v1))
                    pred = predict_metric_trajectory(a, pullback_metric(perp, 1, grid))
                    meas = pullback_metric(net, 1, grid)
                    out.grid(f"{sd}/metric_final.csv", grid,
                             {**meas.columns(), **{f"pred_{k}": v for k, v in pred.columns().items()}})
                    metrics["metric_prediction_error"] = float(
                        np.linalg.norm(pred.matrices() - meas.matrices()) / np.linalg.norm(meas.matrices()))
        except TrainingDivergedError as e:
            rep.add_failure(seed, e)
            continue
        for tag, (e, u, theory) in traj.items():
            out.table(f"{sd}/{tag}_trajectory.csv", ["epoch", "u_empirical", "u_theory"], zip(e, u, theory))
        rep.add_seed(seed, metrics)
    rep.summary.update({"S": md.S, "s1": md.s1, "v1": v1, "tau": 1.0 / lr})
    t = cfg.thresholds
    worst = lambda k: float(np.max(rep.values(k))) if rep.per_seed else float("nan")
    rep.gate("linear_deviation", worst("linear_deviation"), "<=", t["linear_deviation_max"])
    rep.gate("tanh_deviation", worst("tanh_deviation"), "<=", t["tanh_deviation_max"])
    rep.gate("perp_change", max(worst("perp_change"), worst("cos_column_change")), "<=", t["perp_change_max"])
    rep.write(cfg.out_dir)
    return rep


# ---------------------------------------------------------------- bayes

def run_bayes(cfg: ExperimentConfig) -> ExperimentReport:
    """Analytic posterior curves and the Monte-Carlo check of the erf-sum formula."""
    rep = ExperimentReport.for_config(cfg)
    out = _Out(cfg.out_dir, rep)
    o = cfg.options
    k_max, res = int(o["k_max"]), int(o["curve_resolution"])
    curves = [bayes.posterior_curve(s, k_max, res) for s in cfg.noise_sigmas]
    if curves:
        out.table("posterior_curves.csv", ["c", *(f"sigma_{s:g}" for s in cfg.noise_sigmas)],
                  zip(curves[0].c, *(cv.values for cv in curves)))
    h = 1e-5
    slopes = [float((bayes.posterior(h, s, k_max) - bayes.posterior(-h, s, k_max)) / (2 * h))
              for s in cfg.noise_sigmas]
    sigma = float(o["mc_sigma"])
    for seed in cfg.seeds:
        edges, freq, counts = bayes.monte_carlo_posterior(sigma, int(o["mc_samples"]), int(o["mc_bins"]),
                                                          make_rng(seed, STREAM_MC))
        p = bayes.bin_averaged_posterior(edges, sigma, k_max)
        se = np.sqrt(p * (1.0 - p) / counts)
        z = np.abs(freq - p) / np.where(se > 0, se, np.inf)
        out.table(f"{_seed_dir(seed)}/posterior_mc.csv",
                  ["c", "posterior_analytic", "posterior_mc", "count", "z"],
                  zip(0.5 * (edges[:-1] + edges[1:]), p, freq, counts, z))
        rep.add_seed(seed, {"mc_max_z": float(np.max(z)), "mc_max_abs_error": float(np.max(np.abs(freq - p)))})
    rep.summary.update({"boundary_slopes": dict(zip([f"{s:g}" for s in cfg.noise_sigmas], slopes))})
    t = cfg.thresholds
    rep.gate("mc_max_z", float(np.max(rep.values("mc_max_z"))), "<=", t["mc_max_se"])
    increases = float(np.sum(np.diff(slopes) >= 0)) if len(slopes) > 1 else 0.0
    rep.gate("slope_increases", increases, "<=", t["slope_increases_max"])
    rep.write(cfg.out_dir)
    return rep


# ---------------------------------------------------------------- curvature oracle

def torus_metric(grid: AngleGrid, R: float, r: float) -> MetricField:
    """Round torus of tube radius r: ``E = r^2``, ``G = (R + r cos u)^2``."""
    u = grid.points[:, 0]
    return MetricField(grid, np.full(grid.size, r * r), np.zeros(grid.size), (R + r * np.cos(u)) ** 2)


def sphere_metric(grid: AngleGrid, R: float) -> MetricField:
    """Sphere in polar/azimuth coordinates: ``E = R^2``, ``G = R^2 sin^2 u``."""
    u = grid.points[:, 0]
    return MetricField(grid, np.full(grid.size, R * R), np.zeros(grid.size), (R * np.sin(u)) ** 2)


def run_curvature_oracle(cfg: ExperimentConfig) -> ExperimentReport:
    """Brioschi curvature against closed forms for the round torus, sphere and a constant metric."""
    rep = ExperimentReport.for_config(cfg)
    out = _Out(cfg.out_dir, rep)
    o = cfg.options
    n = cfg.grid_resolution
    R, r, Rs, margin = float(o["torus_R"]), float(o["torus_r"]), float(o["sphere_R"]), float(o["sphere_margin"])

    def check(tag, field: MetricField, exact) -> float:
        k = gaussian_curvature(field, cfg.det_floor)
        err = np.where(k.valid, np.abs(np.nan_to_num(k.K) - exact), 0.0)
        out.grid(f"{tag}_curvature.csv", field.grid,
                 {"K": np.where(k.valid, k.K, 0.0), "K_exact": exact, "error": err, "valid": k.valid})
        return float(err.max())

    tg = AngleGrid.torus(n)
    u = tg.points[:, 0]
    torus_err = check("torus", torus_metric(tg, R, r), np.cos(u) / (r * (R + r * np.cos(u))))
    sg = AngleGrid.plane(n, (margin, math.pi - margin, 0.0, TWO_PI))
    sphere_err = check("sphere", sphere_metric(sg, Rs), np.full(sg.size, 1.0 / Rs ** 2))
    const = MetricField(tg, np.full(tg.size, 2.0), np.full(tg.size, 0.3), np.full(tg.size, 1.5))
    const_err = check("constant", const, np.zeros(tg.size))
    rep.add_seed(cfg.seeds[0], {"torus_error": torus_err, "sphere_error": sphere_err, "constant_error": const_err})
    t = cfg.thresholds
    rep.gate("torus_error", torus_err, "<=", t["oracle_error_max"])
    rep.gate("sphere_error", sphere_err, "<=", t["oracle_error_max"])
    rep.gate("constant_error", const_err, "<=", t["constant_error_max"])
    rep.write(cfg.out_dir)
    return rep


RUNNERS = {
    "fig1": run_fig1,
    "depth": run_depth_comparison,
    "richlazy": run_richlazy,
    "noise": run_noise_sweep,
    "robustness": run_robustness,
    "lindyn": run_lindyn,
    "bayes": run_bayes,
    "curvature-oracle": run_curvature_oracle,
}


def run(cfg: ExperimentConfig) -> ExperimentReport:
    return RUNNERS[cfg.name](cfg)
